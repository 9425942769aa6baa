use serde::{Deserialize, Serialize};

use super::bundle::{SuiteBundle, SuiteSummary};
use super::measure::measure_levels;
use super::reports::{assemble, is_membership, verify_holder, InequalityReport};
use super::{Setting, VerifyConfig};
use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::functionals::EvalFunction;
use crate::penergy::{capacity_chain, rho_from_capacities, Capacity, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Expected to have finite, stable constants.
    Member,
    /// Reported without an expectation.
    Probe,
    /// Expected to be flagged as a non-member.
    NegativeControl,
}

#[derive(Clone, Serialize)]
pub struct SuiteMember {
    pub name: String,
    pub role: Role,
    pub provenance: String,
    #[serde(skip)]
    pub function: EvalFunction,
}

impl std::fmt::Debug for SuiteMember {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SuiteMember")
            .field("name", &self.name)
            .field("role", &self.role)
            .field("provenance", &self.provenance)
            .field("function", &self.function.describe())
            .finish()
    }
}

impl SuiteMember {
    pub fn new(name: impl Into<String>, role: Role, provenance: impl Into<String>, function: EvalFunction) -> Self {
        SuiteMember { name: name.into(), role, provenance: provenance.into(), function }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestSuite {
    pub members: Vec<SuiteMember>,
}

impl TestSuite {
    /// Harmonic capacity solutions (one per chain entry), a rescaled and
    /// shifted copy and a sum of the two finest, the coordinate probe `x_1`
    /// and a step across the first column of level-1 cells.
    pub fn build(spec: &CarpetSpec, chain: &[Capacity]) -> Result<TestSuite> {
        if chain.is_empty() {
            return Err(Error::Config("the suite needs at least one harmonic solution".into()));
        }
        let mut members = Vec::new();
        let mut harmonic = Vec::new();
        for cap in chain {
            let f = EvalFunction::cells(spec, cap.solution.function.clone())?;
            members.push(SuiteMember::new(
                format!("harmonic_{}", cap.n),
                Role::Member,
                format!(
                    "{}-harmonic capacity solution on G_{} (faces x_1 = 0 and 1 pinned to 0 and 1), {} iterations, residual {:e}",
                    cap.p, cap.n, cap.solution.iterations, cap.solution.residual
                ),
                f.clone(),
            ));
            harmonic.push((cap.n, f));
        }
        let (top, h_top) = harmonic[harmonic.len() - 1].clone();
        members.push(SuiteMember::new(
            format!("affine_harmonic_{top}"),
            Role::Member,
            format!("-2.5 harmonic_{top} + 1"),
            h_top.clone().affine(-2.5, 1.0),
        ));
        if harmonic.len() >= 2 {
            let (below, h_below) = harmonic[harmonic.len() - 2].clone();
            members.push(SuiteMember::new(
                format!("sum_harmonic_{top}_{below}"),
                Role::Member,
                format!("harmonic_{top} + harmonic_{below}"),
                h_top.sum(h_below),
            ));
        }
        members.push(SuiteMember::new(
            "coordinate_x1",
            Role::Probe,
            "first coordinate; grows like a^{(beta - p) n} when beta > p",
            EvalFunction::coordinate(0),
        ));
        let cut = 1.0 / spec.a() as f64;
        members.push(SuiteMember::new(
            "step_x1",
            Role::NegativeControl,
            format!("indicator of x_1 >= {cut}, constant on level-1 cells"),
            EvalFunction::analytic(format!("step(x_1 >= {cut})"), move |x: &[f64]| if x[0] >= cut { 1.0 } else { 0.0 }),
        ));
        Ok(TestSuite { members })
    }
}

/// Outcome of one suite function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberStatus {
    pub name: String,
    pub role: Role,
    pub provenance: String,
    /// Level range actually measured.
    pub levels: Option<[u32; 2]>,
    pub skipped: Option<String>,
    pub reports: usize,
    pub failed: Vec<String>,
    pub growth_flagged: bool,
}

/// Estimates `rho_p`, builds the suite and runs every verifier on every
/// function with at least two levels in range.
pub fn run_suite(spec: &CarpetSpec, p: f64, cfg: &VerifyConfig) -> Result<SuiteBundle> {
    spec.require_valid()?;
    cfg.check()?;
    let rho_chain = capacity_chain(spec, &cfg.rho_levels, &SolverConfig { p, ..cfg.solver.clone() })?;
    let rho = rho_from_capacities(spec, &rho_chain)?;
    if !rho.supercritical {
        return Err(Error::Subcritical(format!(
            "estimated rho = {:.4} <= 1 at p = {p}; the suite requires rho > 1, i.e. p above the conformal dimension",
            rho.rho_hat
        )));
    }
    let setting = Setting::from_estimate(spec, &rho, cfg.c)?;

    let chain = member_chain(spec, p, cfg, rho_chain)?;
    let suite = TestSuite::build(spec, &chain)?;

    let mut reports: Vec<InequalityReport> = Vec::new();
    let mut members = Vec::new();
    for member in &suite.members {
        let top = member.function.max_level().map_or(cfg.n_max, |m| m.min(cfg.n_max));
        let mut status = MemberStatus {
            name: member.name.clone(),
            role: member.role,
            provenance: member.provenance.clone(),
            levels: None,
            skipped: None,
            reports: 0,
            failed: Vec::new(),
            growth_flagged: false,
        };
        if top < cfg.n_min + 1 {
            status.skipped = Some(format!("fewer than two levels of [{}, {}] are available", cfg.n_min, cfg.n_max));
            members.push(status);
            continue;
        }
        status.levels = Some([cfg.n_min, top]);
        let f = &member.function;
        let base = measure_levels(spec, f, &setting, cfg.n_min, top, &cfg.quad, cfg.quad_depth)?;
        let doubled = measure_levels(spec, f, &setting, cfg.n_min, top, &cfg.quad.doubled(), cfg.quad_depth + 1)?;
        let mut own = assemble(member, &setting, cfg, &base, &doubled)?;
        own.push(verify_holder(spec, member, &setting, cfg, &base, &doubled)?);
        status.reports = own.len();
        status.failed = own.iter().filter(|r| !r.pass).map(|r| r.id.clone()).collect();
        status.growth_flagged = own.iter().any(|r| is_membership(r) && r.growth_flag);
        members.push(status);
        reports.extend(own);
    }
    let summary = SuiteSummary::from_statuses(&members);
    Ok(SuiteBundle {
        version: crate::VERSION.to_string(),
        spec: spec.clone(),
        p,
        config: cfg.clone(),
        rho,
        setting,
        members,
        reports,
        summary,
    })
}

/// Harmonic solutions at the member levels, reusing the capacity chain of
/// the `rho` estimate where the levels coincide.
fn member_chain(spec: &CarpetSpec, p: f64, cfg: &VerifyConfig, rho_chain: Vec<Capacity>) -> Result<Vec<Capacity>> {
    let solver = SolverConfig { p, ..cfg.solver.clone() };
    let lo = cfg.member_levels[0];
    let hi = cfg.member_levels[cfg.member_levels.len() - 1];
    let known: Vec<u32> = rho_chain.iter().map(|c| c.n).collect();
    let covered = cfg.member_levels.iter().all(|l| known.contains(l));
    let all = if covered {
        rho_chain
    } else {
        let start = lo.min(known[0]);
        let end = hi.max(known[known.len() - 1]);
        capacity_chain(spec, &(start..=end).collect::<Vec<_>>(), &solver)?
    };
    Ok(all.into_iter().filter(|c| c.n >= lo && c.n <= hi).collect())
}
