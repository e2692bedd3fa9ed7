//! sRGB to CIE Lab conversion and the CIEDE2000 color difference.

use serde::{Deserialize, Serialize};

use super::{Grid, LabGrid, RgbGrid};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

// Linear sRGB -> XYZ, D65.
const M: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn white() -> [f64; 3] {
    [M[0][0] + M[0][1] + M[0][2], M[1][0] + M[1][1] + M[1][2], M[2][0] + M[2][1] + M[2][2]]
}

fn linearize(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn f_lab(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// sRGB (8 bit per channel) to Lab under D65, 2 degree observer.
pub fn rgb_to_lab(rgb: [u8; 3]) -> Lab {
    let lin = [linearize(rgb[0]), linearize(rgb[1]), linearize(rgb[2])];
    let w = white();
    let mut xyz = [0.0; 3];
    for (i, row) in M.iter().enumerate() {
        xyz[i] = (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / w[i];
    }
    let (fx, fy, fz) = (f_lab(xyz[0]), f_lab(xyz[1]), f_lab(xyz[2]));
    Lab { l: 116.0 * fy - 16.0, a: 500.0 * (fx - fy), b: 200.0 * (fy - fz) }
}

pub fn rgb_to_lab_grid(rgb: &RgbGrid) -> LabGrid {
    Grid::from_fn(rgb.width(), rgb.height(), |r, c| rgb_to_lab(*rgb.get(r, c)))
}

/// CIEDE2000 difference with kL = kC = kH = 1.
pub fn delta_e_2000(x: Lab, y: Lab) -> f64 {
    use std::f64::consts::PI;
    let deg = |r: f64| r * 180.0 / PI;
    let rad = |d: f64| d * PI / 180.0;

    let c1 = (x.a * x.a + x.b * x.b).sqrt();
    let c2 = (y.a * y.a + y.b * y.b).sqrt();
    let c_bar = (c1 + c2) / 2.0;
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + 25f64.powi(7))).sqrt());
    let a1p = (1.0 + g) * x.a;
    let a2p = (1.0 + g) * y.a;
    let c1p = (a1p * a1p + x.b * x.b).sqrt();
    let c2p = (a2p * a2p + y.b * y.b).sqrt();

    let hue = |b: f64, ap: f64| {
        if b == 0.0 && ap == 0.0 {
            0.0
        } else {
            let h = deg(b.atan2(ap));
            if h < 0.0 {
                h + 360.0
            } else {
                h
            }
        }
    };
    let h1p = hue(x.b, a1p);
    let h2p = hue(y.b, a2p);

    let dl = y.l - x.l;
    let dc = c2p - c1p;
    let dh = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d.abs() <= 180.0 {
            d
        } else if d > 180.0 {
            d - 360.0
        } else {
            d + 360.0
        }
    };
    let d_hp = 2.0 * (c1p * c2p).sqrt() * (rad(dh) / 2.0).sin();

    let l_bar = (x.l + y.l) / 2.0;
    let cp_bar = (c1p + c2p) / 2.0;
    let hp_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * rad(hp_bar - 30.0).cos() + 0.24 * rad(2.0 * hp_bar).cos()
        + 0.32 * rad(3.0 * hp_bar + 6.0).cos()
        - 0.20 * rad(4.0 * hp_bar - 63.0).cos();
    let d_theta = 30.0 * (-((hp_bar - 275.0) / 25.0).powi(2)).exp();
    let cp7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp7 / (cp7 + 25f64.powi(7))).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;
    let r_t = -(rad(2.0 * d_theta)).sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = d_hp / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lab_anchor_colors() {
        let w = rgb_to_lab([255, 255, 255]);
        assert!((w.l - 100.0).abs() < 1e-6 && w.a.abs() < 1e-6 && w.b.abs() < 1e-6);
        let k = rgb_to_lab([0, 0, 0]);
        assert_eq!((k.l, k.a, k.b), (0.0, 0.0, 0.0));
        let g = rgb_to_lab([119, 119, 119]);
        assert!(g.a.abs() < 1e-6 && g.b.abs() < 1e-6);
        assert!((g.l - 50.0344).abs() < 1e-3);
    }

    #[test]
    fn lab_matches_reference_library() {
        // Values from an independent implementation (scikit-image rgb2lab).
        let cases = [
            ([200u8, 90, 50], [51.63942, 41.35682, 43.29245]),
            ([120, 30, 30], [26.78199, 38.70918, 23.27439]),
            ([12, 200, 77], [70.81574, -66.54354, 48.87318]),
        ];
        for (rgb, want) in cases {
            let got = rgb_to_lab(rgb);
            assert!((got.l - want[0]).abs() < 1e-2, "{rgb:?} L {}", got.l);
            assert!((got.a - want[1]).abs() < 1e-2, "{rgb:?} a {}", got.a);
            assert!((got.b - want[2]).abs() < 1e-2, "{rgb:?} b {}", got.b);
        }
    }

    #[test]
    fn delta_e_identity_and_symmetry() {
        let a = Lab::new(50.0, 2.6772, -79.7751);
        let b = Lab::new(50.0, 0.0, -82.7485);
        assert_eq!(delta_e_2000(a, a), 0.0);
        assert!((delta_e_2000(a, b) - 2.0425).abs() < 1e-4);
        assert_eq!(delta_e_2000(a, b), delta_e_2000(b, a));
    }
}
