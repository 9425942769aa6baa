//! Empirical verification harness: test-function suites, per-level
//! measurement tables and one report per inequality with an empirical
//! constant, its stability under doubled effort and membership flags.
//!
//! All constants are surrogates: `liminf` is replaced by the minimum over
//! the top half of the computed level range and suprema by maxima over it.

mod bundle;
mod measure;
mod reports;
mod suite;

pub use bundle::{SuiteBundle, SuiteSummary, INDEX_CSV_HEADER, PLOT_CSV_HEADER};
pub use measure::{measure_levels, LevelRow, LevelTable};
pub use reports::{
    verify_holder, verify_propositions, verify_theorem_main, verify_weak_monotonicity, InequalityReport, Row,
    TailInfo,
};
pub use suite::{run_suite, MemberStatus, Role, SuiteMember, TestSuite};

use serde::{Deserialize, Serialize};

use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::functionals::{default_c, GeometryConstants, MCQuadrature};
use crate::penergy::{annulus_weight, min_k, tail_ratio, MinK, RhoEstimate, SolverConfig};

/// Harness configuration; the exponent `p` is passed separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Levels used for the capacity-ratio estimate of `rho_p`.
    pub rho_levels: Vec<u32>,
    /// Levels of the harmonic suite members.
    pub member_levels: Vec<u32>,
    pub n_min: u32,
    pub n_max: u32,
    pub quad: MCQuadrature,
    /// Descendant depth of the quadrature for `M_n` of point functions.
    pub quad_depth: u32,
    /// Largest tolerated relative change of an empirical constant under doubled effort.
    pub stability_threshold: f64,
    /// Same for the Holder ratio under ten times more pairs.
    pub holder_threshold: f64,
    pub holder_pairs: usize,
    /// `A^{(n)}` growing by at least this factor at every level flags non-membership.
    pub growth_per_level: f64,
    pub epsilons: Vec<f64>,
    /// Ball constant; `None` uses the default.
    pub c: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            rho_levels: vec![3, 4, 5],
            member_levels: vec![3, 4, 5, 6, 7],
            n_min: 2,
            n_max: 5,
            quad: MCQuadrature { samples: 1 << 20, ..MCQuadrature::default() },
            quad_depth: 3,
            stability_threshold: 0.10,
            holder_threshold: 0.25,
            holder_pairs: 2000,
            growth_per_level: 1.5,
            epsilons: vec![0.1, 0.25, 0.5],
            c: None,
            solver: SolverConfig::default(),
        }
    }
}

impl VerifyConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!("empty level range [{}, {}]", self.n_min, self.n_max)));
        }
        if self.member_levels.is_empty() {
            return Err(Error::Config("the suite needs at least one member level".into()));
        }
        for levels in [&self.rho_levels, &self.member_levels] {
            if levels.windows(2).any(|w| w[1] != w[0] + 1) || levels.first().is_some_and(|&l| l < 1) {
                return Err(Error::Config(format!("levels {levels:?} must be consecutive and >= 1")));
            }
        }
        if self.rho_levels.len() < 2 {
            return Err(Error::Config("rho estimate needs at least two levels".into()));
        }
        self.quad.check()?;
        if self.quad_depth < 1 || self.holder_pairs == 0 {
            return Err(Error::Config("quadrature depth and holder pair count must be positive".into()));
        }
        if !(self.stability_threshold > 0.0) || !(self.holder_threshold > 0.0) || !(self.growth_per_level > 1.0) {
            return Err(Error::Config("thresholds must be positive and the growth factor above 1".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("epsilons must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Exponents and derived constants shared by every report of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub p: f64,
    pub rho: f64,
    pub beta: f64,
    pub consts: GeometryConstants,
    /// `None` when `beta <= alpha`.
    pub k: Option<MinK>,
    /// `2^{(p-1)/k} a^{2 alpha}`.
    pub weight: Option<f64>,
    /// `2^{(p-1)/k} a^{-(beta - alpha)}`.
    pub tail_ratio: Option<f64>,
}

impl Setting {
    pub fn new(spec: &CarpetSpec, p: f64, rho: f64, c: Option<f64>) -> Result<Setting> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!("rho = {rho} must be positive")));
        }
        let beta = crate::penergy::beta_from_rho(spec.n_star(), spec.a(), rho);
        let consts = GeometryConstants::with_c(spec, p, beta, c.unwrap_or_else(|| default_c(spec.dim())))?;
        let k = min_k(p, spec.a(), consts.alpha, beta).ok();
        let mut s = Setting { p, rho, beta, consts, k, weight: None, tail_ratio: None };
        if let Some(k) = k {
            s = s.with_k(spec, k.k)?;
            s.k = Some(k);
        }
        Ok(s)
    }

    pub fn from_estimate(spec: &CarpetSpec, est: &RhoEstimate, c: Option<f64>) -> Result<Setting> {
        Setting::new(spec, est.p, est.rho_hat, c)
    }

    /// Replaces `k`, which must satisfy `2^{p-1} < a^{(beta - alpha) k}`.
    pub fn with_k(mut self, spec: &CarpetSpec, k: u32) -> Result<Setting> {
        let gap = self.beta - self.consts.alpha;
        let margin = gap * k as f64 * (spec.a() as f64).ln() - (self.p - 1.0) * std::f64::consts::LN_2;
        if k == 0 || !(margin > crate::penergy::MIN_K_GUARD) {
            return Err(Error::Config(format!(
                "k = {k} violates 2^(p-1) < a^((beta-alpha) k) for p = {}, beta - alpha = {gap}",
                self.p
            )));
        }
        let in_guard_band = margin.abs() <= crate::penergy::MIN_K_GUARD;
        self.k = Some(MinK { k, margin, in_guard_band });
        self.weight = Some(annulus_weight(self.p, spec.a(), self.consts.alpha, k));
        self.tail_ratio = Some(tail_ratio(self.p, spec.a(), self.consts.alpha, self.beta, k));
        Ok(self)
    }
}
