//! Korevaar-Schoen type functionals estimated by seeded Monte-Carlo over
//! `mu x mu`: the grid functional `A^(n)`, the annuli `A_n`, `E_{p,delta}`,
//! the cellwise Poincare deficit and empirical Holder ratios.

mod eval;
mod holder;
mod ks;
mod pairs;
mod poincare;

pub use eval::EvalFunction;
pub use holder::{holder_ratio, interface_pairs, sample_pairs, HolderReport, PointPair};
pub use ks::{ks_e, KsEstimate};
pub use pairs::{annulus_a, ball_profile, functional_a, BallProfile};
pub use poincare::{poincare_deficit, DeficitMode, PoincareDeficit};

use serde::{Deserialize, Serialize};

use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};

/// The ball constant `c` together with the exponents it is used with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
}

impl GeometryConstants {
    /// Default `c = 2 sqrt(D) + 1/8`.
    pub fn new(spec: &CarpetSpec, p: f64, beta: f64) -> GeometryConstants {
        GeometryConstants { c: default_c(spec.dim()), alpha: spec.alpha(), beta, p }
    }

    pub fn with_c(spec: &CarpetSpec, p: f64, beta: f64, c: f64) -> Result<GeometryConstants> {
        let floor = 2.0 * (spec.dim() as f64).sqrt();
        if !(c > floor) || !c.is_finite() {
            return Err(Error::Config(format!("ball constant c = {c} must exceed 2 sqrt(D) = {floor}")));
        }
        Ok(GeometryConstants { c, alpha: spec.alpha(), beta, p })
    }

    pub(crate) fn check(&self, spec: &CarpetSpec) -> Result<()> {
        GeometryConstants::with_c(spec, self.p, self.beta, self.c)?;
        if !(self.p >= 1.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("need p >= 1 and finite beta (p = {}, beta = {})", self.p, self.beta)));
        }
        Ok(())
    }

    /// `c a^{-n}`.
    pub fn radius(&self, a: u32, n: u32) -> f64 {
        self.c * (a as f64).powi(-(n as i32))
    }

    /// `a^{(alpha + beta) n}`.
    pub fn prefactor(&self, a: u32, n: u32) -> f64 {
        (a as f64).powf((self.alpha + self.beta) * n as f64)
    }
}

pub fn default_c(dim: usize) -> f64 {
    2.0 * (dim as f64).sqrt() + 0.125
}

/// Monte-Carlo effort and stream layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCQuadrature {
    pub seed: u64,
    /// Pairs (or outer points) drawn per estimate.
    pub samples: u64,
    /// Sampling depth is `max(n + depth_offset, level of f)`.
    pub depth_offset: u32,
    /// Samples per independent stream block.
    pub block: u64,
    /// Largest tolerated fraction of rejected proposals.
    pub rejection_ceiling: f64,
}

impl Default for MCQuadrature {
    fn default() -> Self {
        MCQuadrature { seed: 20240917, samples: 1 << 18, depth_offset: 6, block: 1024, rejection_ceiling: 0.99 }
    }
}

impl MCQuadrature {
    pub fn with_samples(seed: u64, samples: u64) -> Self {
        MCQuadrature { seed, samples, ..Default::default() }
    }

    /// Same seed and layout, twice the samples: the first half of the
    /// blocks is shared with `self`.
    pub fn doubled(&self) -> Self {
        MCQuadrature { samples: 2 * self.samples, ..self.clone() }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.samples == 0 || self.block == 0 {
            return Err(Error::Config("sample and block counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rejection_ceiling) {
            return Err(Error::Config("rejection ceiling must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn blocks(&self) -> Vec<(u64, u64)> {
        let full = self.samples / self.block;
        let mut out: Vec<(u64, u64)> = (0..full).map(|b| (b, self.block)).collect();
        if self.samples % self.block != 0 {
            out.push((full, self.samples % self.block));
        }
        out
    }
}

/// A Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn scaled(self, s: f64) -> Estimate {
        Estimate { value: self.value * s, std_err: self.std_err * s.abs() }
    }

    pub fn from_moments(sum: f64, sumsq: f64, count: u64) -> Estimate {
        if count == 0 {
            return Estimate::default();
        }
        let n = count as f64;
        let mean = sum / n;
        let var = if count > 1 { ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { value: mean, std_err: (var / n).sqrt() }
    }
}

/// Stream id for block `block` of estimator `tag` at level `n`.
pub(crate) fn stream_id(tag: u8, n: u32, block: u64) -> u64 {
    ((tag as u64) << 56) | ((n as u64 & 0xff) << 48) | (block & 0xffff_ffff_ffff)
}

pub(crate) const TAG_PAIRS: u8 = 1;
pub(crate) const TAG_KS: u8 = 2;
pub(crate) const TAG_POINCARE: u8 = 3;
pub(crate) const TAG_HOLDER: u8 = 4;

/// One row of the functional report CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRow {
    pub quantity: String,
    pub n_or_r: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub samples: u64,
    pub seed: u64,
    pub c: f64,
    pub p: f64,
    pub beta: f64,
}

pub const FUNCTIONAL_CSV_HEADER: &str = "quantity,n_or_r,estimate,std_err,samples,seed,c,p,beta";

impl FunctionalRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.quantity, self.n_or_r, self.estimate, self.std_err, self.samples, self.seed, self.c, self.p, self.beta
        )
    }
}
