//! Pipeline parameters as a flat `key = value` file.

use serde::{Deserialize, Serialize};

use crate::clean::CleanParams;
use crate::error::{Error, Result};
use crate::prop::PropParams;
use crate::skeleton::ThresholdSchedule;
use crate::topo::{CostParams, HloParams};
use crate::track::EdgeWeightParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // threshold schedule
    pub t_start: u8,
    pub t_stop: u8,
    pub t_step: u8,
    /// Binary vessel mask level used for distance-to-background.
    pub seg_threshold: u8,

    // edge weights
    pub w_v: f64,
    pub w_c: f64,
    pub w_w: f64,

    /// Minimum bounding-box diagonal of kept skeleton components.
    pub d: f64,
    /// Minimum segment length in nodes.
    pub l: usize,
    pub onh_pairs: usize,
    /// Second-pass iterations.
    pub d_i: usize,
    pub gamma: f64,
    pub k: usize,

    pub onh_radius: f64,
    pub corner_angle: f64,
    pub spacing: f64,
    pub refine: bool,

    pub b_th: f64,
    pub a_th: f64,
    pub a_ce: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub cr_div: f64,
    pub eps: f64,

    pub delta: f64,
    pub t_av: f64,
    pub z: f64,
    pub max_merge_len: f64,
    pub max_edits: usize,

    pub max_passes: usize,
    pub min_improvement: f64,

    pub workers: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sched = ThresholdSchedule::default();
        let ew = EdgeWeightParams::default();
        let cl = CleanParams::default();
        let cp = CostParams::default();
        let hp = HloParams::default();
        let pp = PropParams::default();
        Self {
            t_start: sched.start,
            t_stop: sched.stop,
            t_step: sched.step,
            seg_threshold: 128,
            w_v: ew.w_v,
            w_c: ew.w_c,
            w_w: ew.w_w,
            d: 10.0,
            l: cl.min_len,
            onh_pairs: 250,
            d_i: 3,
            gamma: 1.0,
            k: 3,
            onh_radius: cl.onh_radius,
            corner_angle: cl.corner_angle,
            spacing: cl.spacing,
            refine: cl.refine,
            b_th: 2.0,
            a_th: cp.a_th,
            a_ce: cp.a_ce,
            a1: cp.a1,
            a2: cp.a2,
            a3: cp.a3,
            a4: cp.a4,
            cr_div: cp.cr_div,
            eps: cp.eps,
            delta: hp.delta,
            t_av: hp.t_av,
            z: hp.z,
            max_merge_len: hp.max_merge_len,
            max_edits: hp.max_edits,
            max_passes: pp.max_passes,
            min_improvement: pp.min_improvement,
            workers: 8,
            seed: 0,
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        let finite = [
            self.w_v, self.w_c, self.w_w, self.d, self.gamma, self.onh_radius, self.corner_angle, self.spacing,
            self.b_th, self.a_th, self.a_ce, self.a1, self.a2, self.a3, self.a4, self.cr_div, self.eps, self.delta,
            self.t_av, self.z, self.max_merge_len, self.min_improvement,
        ];
        check(finite.iter().all(|v| v.is_finite()), "all real parameters must be finite")?;
        check(self.w_v >= 0.0 && self.w_c >= 0.0 && self.w_w >= 0.0, "edge weight coefficients must be >= 0")?;
        check(self.d >= 0.0, "d must be >= 0")?;
        check(self.l >= 1, "l must be >= 1")?;
        check(self.onh_pairs >= 1, "onh_pairs must be >= 1")?;
        check(self.k >= 1, "k must be >= 1")?;
        check(self.gamma >= 0.0, "gamma must be >= 0")?;
        check(self.onh_radius >= 0.0, "onh_radius must be >= 0")?;
        check((0.0..=180.0).contains(&self.corner_angle), "corner_angle must be in [0, 180]")?;
        check(self.spacing > 0.0, "spacing must be > 0")?;
        check(self.b_th >= 0.0 && self.a_th >= 0.0, "angle coefficients must be >= 0")?;
        check((0.0..=1.0).contains(&self.a_ce), "a_ce must be in [0, 1]")?;
        check([self.a1, self.a2, self.a3, self.a4].iter().all(|&a| a >= 0.0), "a1..a4 must be >= 0")?;
        check(self.cr_div > 0.0, "cr_div must be > 0")?;
        check(self.eps > 0.0 && self.eps < 0.5, "eps must be in (0, 0.5)")?;
        check(self.delta >= 0.0, "delta must be >= 0")?;
        check((0.5..=1.0).contains(&self.t_av), "t_av must be in [0.5, 1]")?;
        check(self.z > 0.0, "z must be > 0")?;
        check(self.max_merge_len >= 0.0, "max_merge_len must be >= 0")?;
        check(self.min_improvement >= 0.0, "min_improvement must be >= 0")?;
        check(self.workers >= 1, "workers must be >= 1")?;
        // TOML integers are signed
        check(self.seed <= i64::MAX as u64, "seed must be below 2^63")?;
        Ok(())
    }

    pub fn schedule(&self) -> ThresholdSchedule {
        ThresholdSchedule { start: self.t_start, stop: self.t_stop, step: self.t_step }
    }

    pub fn edge_weights(&self) -> EdgeWeightParams {
        EdgeWeightParams { w_v: self.w_v, w_c: self.w_c, w_w: self.w_w }
    }

    pub fn clean_params(&self) -> CleanParams {
        CleanParams {
            onh_radius: self.onh_radius,
            min_len: self.l,
            corner_angle: self.corner_angle,
            spacing: self.spacing,
            refine: self.refine,
        }
    }

    pub fn cost_params(&self) -> CostParams {
        CostParams {
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
            a4: self.a4,
            a_th: self.a_th,
            a_ce: self.a_ce,
            cr_div: self.cr_div,
            eps: self.eps,
        }
    }

    pub fn hlo_params(&self) -> HloParams {
        HloParams {
            z: self.z,
            t_av: self.t_av,
            delta: self.delta,
            max_merge_len: self.max_merge_len,
            max_edits: self.max_edits,
        }
    }

    pub fn prop_params(&self) -> PropParams {
        PropParams { max_passes: self.max_passes, min_improvement: self.min_improvement }
    }
}
