use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::carpet::{CarpetSpec, LevelCells, MAX_DIM};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_VERTEX_BUDGET;
use crate::penergy::{cell_average, prolong, CellFunction};

type PointRule = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A function on `K` that can be evaluated at exact anchors.
#[derive(Clone)]
pub enum EvalFunction {
    /// A rule evaluated at the anchor coordinates.
    Analytic { name: String, rule: PointRule },
    /// A level-`m` cell function, read off at the depth-`m` ancestor of the
    /// anchor. Functionals at level `n` require `n <= m - margin`.
    Cells { f: Arc<CellFunction>, cells: Arc<LevelCells>, margin: u32 },
    /// A constant; cellwise at every level.
    Constant(f64),
    Sum(Box<EvalFunction>, Box<EvalFunction>),
    Scale(f64, Box<EvalFunction>),
}

impl fmt::Debug for EvalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl EvalFunction {
    pub fn analytic<F>(name: impl Into<String>, rule: F) -> EvalFunction
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        EvalFunction::Analytic { name: name.into(), rule: Arc::new(rule) }
    }

    pub fn constant(c: f64) -> EvalFunction {
        EvalFunction::Constant(c)
    }

    /// `x_axis` (0-based axis).
    pub fn coordinate(axis: usize) -> EvalFunction {
        EvalFunction::analytic(format!("x_{}", axis + 1), move |x| x[axis])
    }

    /// Wraps a cell function with the default margin of 2 levels.
    pub fn cells(spec: &CarpetSpec, f: CellFunction) -> Result<EvalFunction> {
        let cells = LevelCells::enumerate(spec, f.level, DEFAULT_VERTEX_BUDGET)?;
        if cells.len() != f.len() {
            return Err(Error::Config("cell function length does not match its level".into()));
        }
        Ok(EvalFunction::Cells { f: Arc::new(f), cells: Arc::new(cells), margin: 2 })
    }

    /// Replaces the margin of every cell leaf.
    pub fn with_margin(self, margin: u32) -> EvalFunction {
        match self {
            EvalFunction::Cells { f, cells, .. } => EvalFunction::Cells { f, cells, margin },
            EvalFunction::Sum(a, b) => EvalFunction::Sum(Box::new(a.with_margin(margin)), Box::new(b.with_margin(margin))),
            EvalFunction::Scale(s, a) => EvalFunction::Scale(s, Box::new(a.with_margin(margin))),
            other => other,
        }
    }

    pub fn sum(self, other: EvalFunction) -> EvalFunction {
        EvalFunction::Sum(Box::new(self), Box::new(other))
    }

    pub fn scale(self, lambda: f64) -> EvalFunction {
        EvalFunction::Scale(lambda, Box::new(self))
    }

    /// `lambda f + shift`.
    pub fn affine(self, lambda: f64, shift: f64) -> EvalFunction {
        self.scale(lambda).sum(EvalFunction::constant(shift))
    }

    pub fn describe(&self) -> String {
        match self {
            EvalFunction::Analytic { name, .. } => name.clone(),
            EvalFunction::Cells { f, margin, .. } => format!("cells(level={}, margin={margin})", f.level),
            EvalFunction::Constant(c) => format!("const({c})"),
            EvalFunction::Sum(a, b) => format!("({} + {})", a.describe(), b.describe()),
            EvalFunction::Scale(s, a) => format!("{s}*{}", a.describe()),
        }
    }

    /// Deepest cell level among the leaves (0 when there are none).
    pub fn depth(&self) -> u32 {
        match self {
            EvalFunction::Analytic { .. } | EvalFunction::Constant(_) => 0,
            EvalFunction::Cells { f, .. } => f.level,
            EvalFunction::Sum(a, b) => a.depth().max(b.depth()),
            EvalFunction::Scale(_, a) => a.depth(),
        }
    }

    /// Largest functional level allowed by the leaves' margins.
    pub fn max_level(&self) -> Option<u32> {
        match self {
            EvalFunction::Analytic { .. } | EvalFunction::Constant(_) => None,
            EvalFunction::Cells { f, margin, .. } => Some(f.level.saturating_sub(*margin)),
            EvalFunction::Sum(a, b) => match (a.max_level(), b.max_level()) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            },
            EvalFunction::Scale(_, a) => a.max_level(),
        }
    }

    pub(crate) fn check_level(&self, n: u32) -> Result<()> {
        match self.max_level() {
            Some(max) if n > max => Err(Error::Config(format!(
                "level {n} exceeds the evaluation margin of {} (at most {max})",
                self.describe()
            ))),
            _ => Ok(()),
        }
    }

    /// True when every leaf is a cell function.
    pub fn is_cellwise(&self) -> bool {
        match self {
            EvalFunction::Analytic { .. } => false,
            EvalFunction::Cells { .. } | EvalFunction::Constant(_) => true,
            EvalFunction::Sum(a, b) => a.is_cellwise() && b.is_cellwise(),
            EvalFunction::Scale(_, a) => a.is_cellwise(),
        }
    }

    /// Value at the anchor `lattice / a^depth`; needs `depth >= self.depth()`.
    pub fn eval(&self, spec: &CarpetSpec, lattice: &[u64], depth: u32) -> f64 {
        match self {
            EvalFunction::Analytic { rule, .. } => {
                let side = (spec.a() as f64).powi(depth as i32);
                let mut x = [0f64; MAX_DIM];
                for (xk, &i) in x.iter_mut().zip(lattice) {
                    *xk = i as f64 / side;
                }
                rule(&x[..lattice.len()])
            }
            EvalFunction::Cells { f, cells, .. } => {
                if depth < f.level {
                    return f64::NAN;
                }
                let shift = (spec.a() as u64).pow(depth - f.level);
                let key = lattice.iter().fold(0u64, |k, &i| k * cells.side() + i / shift);
                cells.index_of_key(key).map_or(f64::NAN, |v| f.values[v])
            }
            EvalFunction::Constant(c) => *c,
            EvalFunction::Sum(a, b) => a.eval(spec, lattice, depth) + b.eval(spec, lattice, depth),
            EvalFunction::Scale(s, a) => s * a.eval(spec, lattice, depth),
        }
    }

    /// Cell-function form at `level >= self.depth()`; only for cellwise functions.
    pub fn to_cell_function(&self, spec: &CarpetSpec, level: u32) -> Result<CellFunction> {
        match self {
            EvalFunction::Analytic { name, .. } => {
                Err(Error::Config(format!("{name} has no exact cell representation")))
            }
            EvalFunction::Cells { f, .. } => prolong(spec, f, level),
            EvalFunction::Constant(c) => Ok(CellFunction::constant(spec, level, *c)),
            EvalFunction::Sum(a, b) => {
                let x = a.to_cell_function(spec, level)?;
                let y = b.to_cell_function(spec, level)?;
                let values = x.values.iter().zip(&y.values).map(|(u, v)| u + v).collect();
                Ok(CellFunction { level, values })
            }
            EvalFunction::Scale(s, a) => Ok(a.to_cell_function(spec, level)?.affine(*s, 0.0)),
        }
    }

    /// `M_n f`: exact for cellwise functions with `n <= depth`, otherwise an
    /// equal-weight quadrature over the anchors of all descendants at depth
    /// `max(n + quad_depth, self.depth())`.
    pub fn cell_average(&self, spec: &CarpetSpec, n: u32, quad_depth: u32) -> Result<CellFunction> {
        if self.is_cellwise() && n <= self.depth() {
            let f = self.to_cell_function(spec, self.depth())?;
            return cell_average(spec, &f, n);
        }
        if quad_depth < 1 {
            return Err(Error::Config("quadrature depth must be >= 1".into()));
        }
        let q = quad_depth.max(self.depth().saturating_sub(n));
        let coarse = LevelCells::enumerate(spec, n, DEFAULT_VERTEX_BUDGET)?;
        let local = LevelCells::enumerate(spec, q, DEFAULT_VERTEX_BUDGET)?;
        let total = coarse.len() as u128 * local.len() as u128;
        if total > 1u128 << 28 {
            return Err(Error::Budget { what: "quadrature nodes", needed: total, budget: 1 << 28 });
        }
        let dim = spec.dim();
        let lift = (spec.a() as u64).pow(q);
        let values = (0..coarse.len())
            .into_par_iter()
            .map(|w| {
                let mut base = [0u64; MAX_DIM];
                let mut off = [0u64; MAX_DIM];
                let mut lat = [0u64; MAX_DIM];
                coarse.lattice_into(w, &mut base);
                let mut acc = 0.0;
                for v in 0..local.len() {
                    local.lattice_into(v, &mut off);
                    for k in 0..dim {
                        lat[k] = base[k] * lift + off[k];
                    }
                    acc += self.eval(spec, &lat[..dim], n + q);
                }
                acc / local.len() as f64
            })
            .collect();
        Ok(CellFunction { level: n, values })
    }
}
