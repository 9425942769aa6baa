use rayon::prelude::*;

use super::CellFunction;
use crate::carpet::{CarpetSpec, LevelCells, MAX_DIM};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_VERTEX_BUDGET;

/// Exact nested average `M_n f(w) = N_*^{-(m-n)} sum_v f(wv)` of a level-`m`
/// cell function.
pub fn cell_average(spec: &CarpetSpec, f: &CellFunction, n: u32) -> Result<CellFunction> {
    let m = f.level;
    if n > m {
        return Err(Error::Config(format!("cannot average a level-{m} function to level {n}")));
    }
    let fine = LevelCells::enumerate(spec, m, DEFAULT_VERTEX_BUDGET)?;
    if fine.len() != f.len() {
        return Err(Error::Config("cell function length does not match its level".into()));
    }
    let coarse = LevelCells::enumerate(spec, n, DEFAULT_VERTEX_BUDGET)?;
    let parent = ancestor_map(spec, &fine, &coarse);
    let mut sums = vec![0.0f64; coarse.len()];
    for (v, &w) in parent.iter().enumerate() {
        sums[w] += f.values[v];
    }
    let scale = (spec.n_star() as f64).powi((m - n) as i32);
    Ok(CellFunction { level: n, values: sums.into_iter().map(|s| s / scale).collect() })
}

/// Level-`m` function taking the value of each cell's level-`f.level` ancestor.
pub fn prolong(spec: &CarpetSpec, f: &CellFunction, m: u32) -> Result<CellFunction> {
    if m < f.level {
        return Err(Error::Config(format!("cannot prolong a level-{} function to level {m}", f.level)));
    }
    let fine = LevelCells::enumerate(spec, m, DEFAULT_VERTEX_BUDGET)?;
    let coarse = LevelCells::enumerate(spec, f.level, DEFAULT_VERTEX_BUDGET)?;
    if coarse.len() != f.len() {
        return Err(Error::Config("cell function length does not match its level".into()));
    }
    let parent = ancestor_map(spec, &fine, &coarse);
    Ok(CellFunction { level: m, values: parent.into_iter().map(|w| f.values[w]).collect() })
}

/// Index in `coarse` of the ancestor of every cell of `fine`.
pub(crate) fn ancestor_map(spec: &CarpetSpec, fine: &LevelCells, coarse: &LevelCells) -> Vec<usize> {
    let shift = (spec.a() as u64).pow(fine.level() - coarse.level());
    let dim = spec.dim();
    (0..fine.len())
        .into_par_iter()
        .map(|v| {
            let mut lat = [0u64; MAX_DIM];
            fine.lattice_into(v, &mut lat);
            for x in &mut lat[..dim] {
                *x /= shift;
            }
            coarse.index_of(&lat[..dim]).expect("ancestor of a cell is a cell")
        })
        .collect()
}

/// Quadrature `M_n f` for a point function: equal-weight average of `f` over
/// the anchors of all depth-`quad_depth` descendants of each level-`n` cell.
/// Returns the averages and the number of nodes per cell.
pub fn cell_average_points<F>(spec: &CarpetSpec, f: &F, n: u32, quad_depth: u32) -> Result<(CellFunction, usize)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if quad_depth < 1 {
        return Err(Error::Config("quadrature depth must be >= 1".into()));
    }
    let coarse = LevelCells::enumerate(spec, n, DEFAULT_VERTEX_BUDGET)?;
    let local = LevelCells::enumerate(spec, quad_depth, DEFAULT_VERTEX_BUDGET)?;
    let total = coarse.len() as u128 * local.len() as u128;
    if total > 1u128 << 28 {
        return Err(Error::Budget { what: "quadrature nodes", needed: total, budget: 1 << 28 });
    }
    let dim = spec.dim();
    let outer = (spec.a() as f64).powi(n as i32);
    let inner = (spec.a() as f64).powi((n + quad_depth) as i32);
    let values = (0..coarse.len())
        .into_par_iter()
        .map(|w| {
            let mut base = [0u64; MAX_DIM];
            let mut off = [0u64; MAX_DIM];
            let mut x = [0f64; MAX_DIM];
            coarse.lattice_into(w, &mut base);
            let mut acc = 0.0;
            for v in 0..local.len() {
                local.lattice_into(v, &mut off);
                for k in 0..dim {
                    x[k] = base[k] as f64 / outer + off[k] as f64 / inner;
                }
                acc += f(&x[..dim]);
            }
            acc / local.len() as f64
        })
        .collect();
    Ok((CellFunction { level: n, values }, local.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_function(spec: &CarpetSpec, m: u32) -> CellFunction {
        let cells = LevelCells::enumerate(spec, m, u64::MAX).unwrap();
        let values = (0..cells.len())
            .map(|v| {
                let l = cells.lattice(v);
                (l[0] as f64 * 0.37 + (l[1] * l[1]) as f64 * 0.011).sin()
            })
            .collect();
        CellFunction::new(spec, m, values).unwrap()
    }

    #[test]
    fn constant_is_preserved() {
        let sc = CarpetSpec::standard_carpet();
        let c = CellFunction::constant(&sc, 3, 2.5);
        for n in 0..=3 {
            assert!(cell_average(&sc, &c, n).unwrap().values.iter().all(|&v| v == 2.5));
        }
        let (q, nodes) = cell_average_points(&sc, &|_| -1.0, 2, 2).unwrap();
        assert_eq!(nodes, 64);
        assert!(q.values.iter().all(|&v| v == -1.0));
        assert!(cell_average(&sc, &c, 4).is_err());
    }

    #[test]
    fn nesting_identity() {
        let sc = CarpetSpec::standard_carpet();
        let f = sample_function(&sc, 3);
        let direct = cell_average(&sc, &f, 1).unwrap();
        let nested = cell_average(&sc, &cell_average(&sc, &f, 2).unwrap(), 1).unwrap();
        for (a, b) in direct.values.iter().zip(&nested.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn prolong_then_average_is_identity() {
        let sc = CarpetSpec::standard_carpet();
        let f = sample_function(&sc, 2);
        let up = prolong(&sc, &f, 4).unwrap();
        assert_eq!(up.level, 4);
        let back = cell_average(&sc, &up, 2).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn coordinate_average_approaches_cell_midpoint() {
        let sc = CarpetSpec::standard_carpet();
        let cells = LevelCells::enumerate(&sc, 1, 100).unwrap();
        let (q, _) = cell_average_points(&sc, &|x: &[f64]| x[0], 1, 6).unwrap();
        for v in 0..8 {
            let exact = (cells.lattice(v)[0] as f64 + 0.5) / 3.0;
            // anchors sit at the low corner: error is half a depth-7 cell
            assert!((q.values[v] - exact).abs() <= 0.5 * 3f64.powi(-7) + 1e-12);
        }
    }

    #[test]
    fn quadrature_depth_refinement_bound() {
        let sc = CarpetSpec::standard_carpet();
        let lip = 2f64.sqrt();
        let f = |x: &[f64]| (x[0] + x[1]).sin() + x[0] * 0.3;
        for q in 1..=3u32 {
            let (a, _) = cell_average_points(&sc, &f, 1, q).unwrap();
            let (b, _) = cell_average_points(&sc, &f, 1, q + 2).unwrap();
            let bound = 1.3 * lip * 2f64.sqrt() * 3f64.powi(-(q as i32 + 1));
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= bound);
            }
        }
    }
}
