//! Discrete p-energies on `G_n` and everything built from them: the
//! p-harmonic solver, face-to-face capacities, the scaling factor
//! `rho_p` with its exponent `beta_p`, cell averages `M_n` and the
//! integer `k` used by the weighted annulus series.

mod amg;
mod average;
mod capacity;
mod solver;

pub use average::{cell_average, cell_average_points, prolong};
pub(crate) use average::ancestor_map;
pub use capacity::{
    beta_from_rho, capacity_chain, estimate_rho_beta, rho_from_capacities, p_capacity, p_capacity_on, Capacity,
    RhoEstimate,
};
pub use solver::{p_harmonic_solve, p_harmonic_solve_from, HarmonicSolution, SolveReport, SolverConfig, SolverMethod};

use serde::{Deserialize, Serialize};

use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, LevelGraph};
use crate::reduce::pairwise_sum_by;

/// A real function on `W_m`, one value per cell in canonical vertex order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFunction {
    pub level: u32,
    pub values: Vec<f64>,
}

impl CellFunction {
    pub fn new(spec: &CarpetSpec, level: u32, values: Vec<f64>) -> Result<CellFunction> {
        let expected = (spec.n_star() as u128).pow(level);
        if values.len() as u128 != expected {
            return Err(Error::Config(format!(
                "level-{level} cell function needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("cell function value {bad} is not finite")));
        }
        Ok(CellFunction { level, values })
    }

    pub fn constant(spec: &CarpetSpec, level: u32, c: f64) -> CellFunction {
        CellFunction { level, values: vec![c; spec.n_star().pow(level)] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `lambda f + shift`.
    pub fn affine(&self, lambda: f64, shift: f64) -> CellFunction {
        CellFunction { level: self.level, values: self.values.iter().map(|v| lambda * v + shift).collect() }
    }
}

/// How unordered edges enter an energy sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeConvention {
    /// Each unordered edge once.
    #[default]
    Unordered,
    /// Both orientations, i.e. twice the unordered sum.
    Ordered,
}

impl EdgeConvention {
    pub fn factor(self) -> f64 {
        match self {
            EdgeConvention::Unordered => 1.0,
            EdgeConvention::Ordered => 2.0,
        }
    }
}

/// Raw and (optionally) `rho^n`-rescaled graph energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub raw: f64,
    pub rescaled: Option<f64>,
}

/// `sum_{edges} |f(w) - f(v)|^p`, and `rho^n` times it when `rescale` is given.
pub fn graph_p_energy(graph: &LevelGraph, f: &CellFunction, p: f64, rescale: Option<f64>) -> Result<Energy> {
    graph_p_energy_with(graph, f, p, rescale, EdgeConvention::Unordered)
}

pub fn graph_p_energy_with(
    graph: &LevelGraph,
    f: &CellFunction,
    p: f64,
    rescale: Option<f64>,
    convention: EdgeConvention,
) -> Result<Energy> {
    if f.level != graph.level() {
        return Err(Error::LevelMismatch { expected: graph.level(), got: f.level });
    }
    if f.len() != graph.vertex_count() {
        return Err(Error::Config("cell function length does not match graph".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("energy exponent p = {p} must be >= 1")));
    }
    let raw = convention.factor() * edge_energy(graph, &f.values, p);
    let rescaled = rescale.map(|rho| rho.powi(graph.level() as i32) * raw);
    Ok(Energy { raw, rescaled })
}

/// Unordered-edge energy of a raw value vector.
pub(crate) fn edge_energy<G: Adjacency>(graph: &G, u: &[f64], p: f64) -> f64 {
    let edges = graph.edges();
    pairwise_sum_by(edges.len(), &|e| {
        let [v, w] = edges[e];
        pow_abs(u[v as usize] - u[w as usize], p)
    })
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

/// Smallest `k >= 1` with `2^{p-1} < a^{(beta - alpha) k}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinK {
    pub k: u32,
    /// `(beta - alpha) k ln a - (p - 1) ln 2` at the returned `k`.
    pub margin: f64,
    /// Some candidate `k` fell within the guard band of equality.
    pub in_guard_band: bool,
}

/// Guard band on the strict inequality in log space.
pub const MIN_K_GUARD: f64 = 1e-12;

pub fn min_k(p: f64, a: u32, alpha: f64, beta: f64) -> Result<MinK> {
    let gap = beta - alpha;
    if !(gap > 0.0) {
        return Err(Error::Config(format!("min_k needs beta > alpha (beta = {beta}, alpha = {alpha})")));
    }
    let lhs = (p - 1.0) * std::f64::consts::LN_2;
    let step = gap * (a as f64).ln();
    let mut in_guard_band = false;
    let mut k = 1u32;
    loop {
        let margin = step * k as f64 - lhs;
        if margin.abs() <= MIN_K_GUARD {
            in_guard_band = true;
        }
        if margin > MIN_K_GUARD {
            return Ok(MinK { k, margin, in_guard_band });
        }
        k = k.checked_add(1).ok_or_else(|| Error::Config("min_k search overflowed".into()))?;
    }
}

/// `2^{(p-1)/k} a^{-(beta - alpha)}`, the ratio of the weighted annulus
/// tail; lies in `(0, 1)` whenever `k` satisfies the min_k inequality.
pub fn tail_ratio(p: f64, a: u32, alpha: f64, beta: f64, k: u32) -> f64 {
    2f64.powf((p - 1.0) / k as f64) * (a as f64).powf(-(beta - alpha))
}

/// `2^{(p-1)/k} a^{2 alpha}`, the per-step weight of the annulus series.
pub fn annulus_weight(p: f64, a: u32, alpha: f64, k: u32) -> f64 {
    2f64.powf((p - 1.0) / k as f64) * (a as f64).powf(2.0 * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_level_graph;

    #[test]
    fn energy_examples() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 1).unwrap();
        let c = CellFunction::constant(&sc, 1, 3.5);
        assert_eq!(graph_p_energy(&g, &c, 2.0, None).unwrap().raw, 0.0);
        let left: Vec<f64> = (0..8).map(|v| if g.cells().lattice(v)[0] == 0 { 1.0 } else { 0.0 }).collect();
        let f = CellFunction::new(&sc, 1, left).unwrap();
        for p in [1.0, 1.5, 2.0, 3.7] {
            assert_eq!(graph_p_energy(&g, &f, p, None).unwrap().raw, 4.0);
        }
        let e = graph_p_energy_with(&g, &f, 2.0, Some(1.5), EdgeConvention::Ordered).unwrap();
        assert_eq!(e.raw, 8.0);
        assert_eq!(e.rescaled, Some(12.0));
        let wrong = CellFunction::constant(&sc, 2, 0.0);
        assert!(matches!(graph_p_energy(&g, &wrong, 2.0, None), Err(Error::LevelMismatch { .. })));
    }

    #[test]
    fn min_k_examples() {
        assert_eq!(min_k(1.0, 3, 1.0, 1.5).unwrap().k, 1);
        assert_eq!(min_k(2.0, 3, 1.0, 2.0).unwrap().k, 1);
        let alpha = 8f64.ln() / 3f64.ln();
        assert_eq!(min_k(2.0, 3, alpha, alpha + 0.2042).unwrap().k, 4);
        assert!(min_k(2.0, 3, alpha, alpha).is_err());
        assert!(min_k(2.0, 3, alpha, alpha - 0.1).is_err());
        // ln 2 / ln 3 makes 3^{gap * 1} == 2 exactly: decision sits in the band.
        let gap = 2f64.ln() / 3f64.ln();
        let mk = min_k(2.0, 3, 1.0, 1.0 + gap).unwrap();
        assert!(mk.in_guard_band);
        assert_eq!(mk.k, 2);
    }

    #[test]
    fn tail_ratio_below_one_for_min_k() {
        let alpha = 8f64.ln() / 3f64.ln();
        for gap in [0.05, 0.13, 0.2, 0.26, 1.0] {
            for p in [1.5, 2.0, 3.0] {
                let k = min_k(p, 3, alpha, alpha + gap).unwrap().k;
                let q = tail_ratio(p, 3, alpha, alpha + gap, k);
                assert!(q > 0.0 && q < 1.0, "p={p} gap={gap} k={k} q={q}");
            }
        }
    }
}
