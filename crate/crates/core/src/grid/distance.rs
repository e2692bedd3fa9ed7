//! Exact Euclidean distance transform (separable lower-envelope method).

use super::{BinaryGrid, DistanceGrid, Grid};

/// Distance from every pixel to the nearest `false` pixel.
///
/// `false` pixels map to 0. A mask with no `false` pixel maps every pixel to
/// `max(width, height)`.
#[must_use]
pub fn distance_transform(mask: &BinaryGrid) -> DistanceGrid {
    let (w, h) = mask.dims();
    if w == 0 || h == 0 {
        return Grid::filled(w, h, 0.0);
    }
    if mask.data().iter().all(|&v| v) {
        return Grid::filled(w, h, w.max(h) as f64);
    }
    let inf = 1e20;
    let mut sq = Grid::from_fn(w, h, |r, c| if *mask.get(r, c) { inf } else { 0.0 });

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..w {
        for r in 0..h {
            f[r] = *sq.get(r, c);
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for r in 0..h {
            sq.set(r, c, d[r]);
        }
    }
    for r in 0..h {
        for c in 0..w {
            f[c] = *sq.get(r, c);
        }
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        for c in 0..w {
            sq.set(r, c, d[c]);
        }
    }
    sq.map(|&x| x.sqrt())
}

fn parabola_meet(f: &[f64], p: usize, q: usize) -> f64 {
    ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = parabola_meet(f, v[k], q);
        while s <= z[k] {
            k -= 1;
            s = parabola_meet(f, v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(mask: &BinaryGrid) -> DistanceGrid {
        let (w, h) = mask.dims();
        let zeros: Vec<(usize, usize)> =
            (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| !*mask.get(r, c)).collect();
        Grid::from_fn(w, h, |r, c| {
            if zeros.is_empty() {
                return w.max(h) as f64;
            }
            zeros
                .iter()
                .map(|&(zr, zc)| {
                    let dr = zr as f64 - r as f64;
                    let dc = zc as f64 - c as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
    }

    #[test]
    fn single_pixel_and_block() {
        let mut m = Grid::filled(5, 5, false);
        m.set(2, 2, true);
        let d = distance_transform(&m);
        assert_eq!(*d.get(2, 2), 1.0);
        assert_eq!(*d.get(0, 0), 0.0);

        let m = Grid::from_fn(9, 9, |r, c| (2..7).contains(&r) && (2..7).contains(&c));
        assert_eq!(*distance_transform(&m).get(4, 4), 3.0);
    }

    #[test]
    fn all_true_gives_sentinel() {
        let m = Grid::filled(7, 4, true);
        assert!(distance_transform(&m).data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let w = rng.gen_range(1..=32);
            let h = rng.gen_range(1..=32);
            let p: f64 = rng.gen_range(0.3..0.98);
            let m = Grid::from_fn(w, h, |_, _| rng.gen_bool(p));
            let a = distance_transform(&m);
            let b = brute(&m);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }
}
