use serde::{Deserialize, Serialize};

use super::average::prolong;
use super::solver::{p_harmonic_solve_from, HarmonicSolution, SolverConfig};
use crate::carpet::{CarpetSpec, MAX_DIM};
use crate::error::{Error, Result};
use crate::graph::{build_level_graph, LevelGraph, Side};

/// Face-to-face p-capacity of `G_n`: minimal energy with the axis-1 low
/// face pinned to 0 and the high face pinned to 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Capacity {
    pub n: u32,
    pub p: f64,
    pub capacity: f64,
    pub solution: HarmonicSolution,
}

/// Capacity of `G_n` at exponent `cfg.p`, starting from the linear profile `x_1`.
pub fn p_capacity(spec: &CarpetSpec, n: u32, cfg: &SolverConfig) -> Result<Capacity> {
    if n < 1 {
        return Err(Error::Config("capacity needs n >= 1".into()));
    }
    let graph = build_level_graph(spec, n)?;
    p_capacity_on(&graph, cfg, None)
}

/// Capacity on a prebuilt graph; `initial` overrides the linear start.
pub fn p_capacity_on(graph: &LevelGraph, cfg: &SolverConfig, initial: Option<&[f64]>) -> Result<Capacity> {
    let low = graph.face_cells(1, Side::Low)?;
    let high = graph.face_cells(1, Side::High)?;
    let mut boundary: Vec<(usize, f64)> = low.into_iter().map(|v| (v, 0.0)).collect();
    boundary.extend(high.into_iter().map(|v| (v, 1.0)));
    let linear;
    let start = match initial {
        Some(x) => x,
        None => {
            linear = linear_profile(graph);
            &linear
        }
    };
    let solution = p_harmonic_solve_from(graph, &boundary, cfg, start)?;
    Ok(Capacity { n: graph.level(), p: cfg.p, capacity: solution.energy, solution })
}

/// `(i_1 + 1/2) / a^n` per vertex, clamped onto the pinned faces.
fn linear_profile(graph: &LevelGraph) -> Vec<f64> {
    let cells = graph.cells();
    let side = cells.side() as f64;
    let mut lat = [0u64; MAX_DIM];
    (0..graph.vertex_count())
        .map(|v| {
            cells.lattice_into(v, &mut lat);
            (lat[0] as f64 + 0.5) / side
        })
        .collect()
}

/// Capacity-ratio estimate of `rho_p` and `beta_p`.
///
/// The ratio `cap_n / cap_{n+1}` is a surrogate for the scaling factor; it
/// can differ from the normalized constant by a bounded factor, which the
/// `surrogate` flag records in every serialized report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub p: f64,
    pub levels: Vec<u32>,
    pub capacities: Vec<f64>,
    /// `cap_n / cap_{n+1}` for consecutive levels.
    pub ratios: Vec<f64>,
    pub rho_hat: f64,
    /// Aitken delta-squared extrapolation of the ratios (needs three).
    pub rho_extrap: Option<f64>,
    pub beta_hat: f64,
    pub beta_extrap: Option<f64>,
    pub alpha: f64,
    pub supercritical: bool,
    pub surrogate: bool,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// `log(N_* rho) / log a`.
pub fn beta_from_rho(n_star: usize, a: u32, rho: f64) -> f64 {
    (n_star as f64 * rho).ln() / (a as f64).ln()
}

/// Solves the capacity problem on each level of `levels` (consecutive,
/// at least two) and reports consecutive ratios. Each level starts from
/// the previous solution prolonged to the finer cells.
pub fn estimate_rho_beta(spec: &CarpetSpec, p: f64, levels: &[u32], cfg: &SolverConfig) -> Result<RhoEstimate> {
    check_levels(levels)?;
    let chain = capacity_chain(spec, levels, &SolverConfig { p, ..cfg.clone() })?;
    rho_from_capacities(spec, &chain)
}

fn check_levels(levels: &[u32]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::Config("rho estimate needs at least two levels".into()));
    }
    if levels.windows(2).any(|w| w[1] != w[0] + 1) || levels[0] < 1 {
        return Err(Error::Config(format!("levels {levels:?} must be consecutive and >= 1")));
    }
    Ok(())
}

/// Capacities on consecutive levels, each warm-started from the previous
/// solution.
pub fn capacity_chain(spec: &CarpetSpec, levels: &[u32], cfg: &SolverConfig) -> Result<Vec<Capacity>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] != w[0] + 1) || levels[0] < 1 {
        return Err(Error::Config(format!("levels {levels:?} must be non-empty, consecutive and >= 1")));
    }
    let mut out: Vec<Capacity> = Vec::with_capacity(levels.len());
    for &n in levels {
        let graph = build_level_graph(spec, n)?;
        let start = out.last().map(|c| prolong(spec, &c.solution.function, n)).transpose()?;
        out.push(p_capacity_on(&graph, cfg, start.as_ref().map(|f| f.values.as_slice()))?);
    }
    Ok(out)
}

/// Ratio estimate from a consecutive chain of capacities.
pub fn rho_from_capacities(spec: &CarpetSpec, chain: &[Capacity]) -> Result<RhoEstimate> {
    let levels: Vec<u32> = chain.iter().map(|c| c.n).collect();
    check_levels(&levels)?;
    let p = chain[0].p;
    let capacities: Vec<f64> = chain.iter().map(|c| c.capacity).collect();
    let ratios: Vec<f64> = capacities.windows(2).map(|w| w[0] / w[1]).collect();
    let rho_hat = *ratios.last().unwrap();
    let rho_extrap = aitken(&ratios);
    let n_star = spec.n_star();
    Ok(RhoEstimate {
        p,
        levels,
        capacities,
        rho_hat,
        rho_extrap,
        beta_hat: beta_from_rho(n_star, spec.a(), rho_hat),
        beta_extrap: rho_extrap.filter(|r| *r > 0.0).map(|r| beta_from_rho(n_star, spec.a(), r)),
        alpha: spec.alpha(),
        supercritical: rho_hat > 1.0,
        surrogate: true,
        ratios,
        iterations: chain.iter().map(|c| c.solution.iterations).collect(),
        residuals: chain.iter().map(|c| c.solution.residual).collect(),
    })
}

fn aitken(r: &[f64]) -> Option<f64> {
    if r.len() < 3 {
        return None;
    }
    let (x0, x1, x2) = (r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]);
    let denom = (x2 - x1) - (x1 - x0);
    if denom.abs() <= 1e-14 * x2.abs() {
        return Some(x2);
    }
    Some(x2 - (x2 - x1) * (x2 - x1) / denom)
}

impl RhoEstimate {
    /// CSV rows `n,cap,ratio`; the ratio column is `cap_{n-1}/cap_n`.
    pub fn capacity_csv(&self) -> String {
        let mut out = String::from("n,cap,ratio\n");
        for (i, (n, c)) in self.levels.iter().zip(&self.capacities).enumerate() {
            let ratio = if i == 0 { String::new() } else { format!("{}", self.ratios[i - 1]) };
            out.push_str(&format!("{n},{c},{ratio}\n"));
        }
        out
    }
}
