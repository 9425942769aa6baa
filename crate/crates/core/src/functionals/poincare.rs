use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairs::BoxSampler;
use super::{stream_id, Estimate, EvalFunction, MCQuadrature, TAG_POINCARE};
use crate::carpet::{CarpetSpec, LevelCells, MAX_DIM};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_VERTEX_BUDGET;
use crate::penergy::{ancestor_map, cell_average, pow_abs};
use crate::reduce::{pairwise_sum, pairwise_sum_by};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DeficitMode {
    /// Finite sum over the cells of the function's level.
    Exact,
    /// `x` drawn from `mu`; `M_n f` from exact or quadrature averages.
    MonteCarlo(MCQuadrature),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareDeficit {
    pub n: u32,
    pub p: f64,
    pub beta: f64,
    /// `a^{beta n} sum_w int_{K_w} |f - M_n f(w)|^p dmu`; zero error when exact.
    pub value: Estimate,
    pub exact: bool,
    pub samples: u64,
}

/// `a^{beta n} sum_{w in W_n} int_{K_w} |f - M_n f(w)|^p dmu`.
pub fn poincare_deficit(
    spec: &CarpetSpec,
    f: &EvalFunction,
    n: u32,
    p: f64,
    beta: f64,
    mode: &DeficitMode,
) -> Result<PoincareDeficit> {
    spec.require_valid()?;
    if !(p >= 1.0) || !beta.is_finite() {
        return Err(Error::Config(format!("need p >= 1 and finite beta (p = {p}, beta = {beta})")));
    }
    let prefactor = (spec.a() as f64).powf(beta * n as f64);
    match mode {
        DeficitMode::Exact => {
            let level = f.depth().max(n);
            let fine = f.to_cell_function(spec, level)?;
            let avg = cell_average(spec, &fine, n)?;
            let fine_cells = LevelCells::enumerate(spec, level, DEFAULT_VERTEX_BUDGET)?;
            let coarse_cells = LevelCells::enumerate(spec, n, DEFAULT_VERTEX_BUDGET)?;
            let anc = ancestor_map(spec, &fine_cells, &coarse_cells);
            let sum = pairwise_sum_by(fine.len(), &|v| pow_abs(fine.values[v] - avg.values[anc[v]], p));
            let value = prefactor * sum / fine.len() as f64;
            Ok(PoincareDeficit { n, p, beta, value: Estimate { value, std_err: 0.0 }, exact: true, samples: 0 })
        }
        DeficitMode::MonteCarlo(quad) => {
            quad.check()?;
            let avg = f.cell_average(spec, n, quad.depth_offset)?;
            let coarse = LevelCells::enumerate(spec, n, DEFAULT_VERTEX_BUDGET)?;
            let sampler = BoxSampler::with_radius(spec, (n + quad.depth_offset).max(f.depth()), 0.0)?;
            let dim = spec.dim();
            let shift = (spec.a() as u64).pow(sampler.depth - n);
            let per_block: Vec<[f64; 2]> = quad
                .blocks()
                .par_iter()
                .map(|&(b, count)| {
                    let mut rng = stream_rng(quad.seed, stream_id(TAG_POINCARE, n, b));
                    let mut x = [0u64; MAX_DIM];
                    let mut anc = [0u64; MAX_DIM];
                    let mut acc = [0.0; 2];
                    for _ in 0..count {
                        sampler.draw_x(&mut rng, &mut x);
                        for k in 0..dim {
                            anc[k] = x[k] / shift;
                        }
                        let w = coarse.index_of(&anc[..dim]).expect("ancestor of a cell is a cell");
                        let z = pow_abs(f.eval(spec, &x[..dim], sampler.depth) - avg.values[w], p);
                        acc[0] += z;
                        acc[1] += z * z;
                    }
                    acc
                })
                .collect();
            let sum = pairwise_sum(&per_block.iter().map(|a| a[0]).collect::<Vec<_>>());
            let sumsq = pairwise_sum(&per_block.iter().map(|a| a[1]).collect::<Vec<_>>());
            let value = Estimate::from_moments(sum, sumsq, quad.samples).scaled(prefactor);
            if !value.value.is_finite() {
                return Err(Error::Geometry(format!("{} is not evaluable at sampled anchors", f.describe())));
            }
            Ok(PoincareDeficit { n, p, beta, value, exact: false, samples: quad.samples })
        }
    }
}
