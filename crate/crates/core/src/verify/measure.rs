use serde::{Deserialize, Serialize};

use super::Setting;
use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::functionals::{ball_profile, poincare_deficit, DeficitMode, Estimate, EvalFunction, MCQuadrature};
use crate::graph::build_level_graph;
use crate::penergy::graph_p_energy;

/// Annulus terms for point functions (which have no cell level).
const POINT_ANNULI: u32 = 4;

/// Every quantity the inequalities need at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: u32,
    /// `rho^n E_{G_n}(M_n f)`.
    pub energy: f64,
    /// `A^{(n)}`.
    pub grid: Estimate,
    /// `a^{beta n} sum_w int_{K_w} |f - M_n f(w)|^p`.
    pub deficit: Estimate,
    /// `a^{(alpha+beta) n} sum_{j < terms} weight^j A_{n+j}`; absent without `k`.
    pub weighted: Option<Estimate>,
    /// Last weighted term, for the tail bound.
    pub weighted_last: Option<f64>,
    pub terms: usize,
    /// `A_{n+j}` on the shared samples.
    pub annuli: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub function: String,
    pub samples: u64,
    pub quad_depth: u32,
    pub rows: Vec<LevelRow>,
}

impl LevelTable {
    pub fn levels(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.n).collect()
    }
}

/// Measures every level of `n_min..=n_max` with the given effort.
pub fn measure_levels(
    spec: &CarpetSpec,
    f: &EvalFunction,
    setting: &Setting,
    n_min: u32,
    n_max: u32,
    quad: &MCQuadrature,
    quad_depth: u32,
) -> Result<LevelTable> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::Config(format!("empty level range [{n_min}, {n_max}]")));
    }
    f.check_level(n_max)?;
    let p = setting.p;
    let mut rows = Vec::with_capacity((n_max - n_min + 1) as usize);
    for n in n_min..=n_max {
        let graph = build_level_graph(spec, n)?;
        let avg = f.cell_average(spec, n, quad_depth)?;
        let energy = graph_p_energy(&graph, &avg, p, Some(setting.rho))?.rescaled.unwrap_or_default();

        let depth = if f.depth() > 0 { f.depth().saturating_sub(n) } else { POINT_ANNULI };
        let profile = ball_profile(spec, f, n, depth, &setting.consts, quad)?;
        let terms = profile.annuli.len();
        let (weighted, weighted_last) = match setting.weight {
            Some(w) => {
                let sum = profile.weighted_sum(w, terms).scaled(profile.prefactor);
                let last = w.powi(terms as i32 - 1) * profile.annuli[terms - 1].value * profile.prefactor;
                (Some(sum), Some(last))
            }
            None => (None, None),
        };

        // Point functions: averages and samples share the quadrature depth.
        let mode = if f.is_cellwise() {
            DeficitMode::Exact
        } else {
            DeficitMode::MonteCarlo(MCQuadrature { depth_offset: quad_depth, ..quad.clone() })
        };
        let deficit = poincare_deficit(spec, f, n, p, setting.beta, &mode)?.value;

        rows.push(LevelRow {
            n,
            energy,
            grid: profile.functional(),
            deficit,
            weighted,
            weighted_last,
            terms,
            annuli: profile.annuli,
        });
    }
    Ok(LevelTable { function: f.describe(), samples: quad.samples, quad_depth, rows })
}
