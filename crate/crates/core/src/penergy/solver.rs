use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::amg::{Coarsening, Csr, Hierarchy};
use super::{edge_energy, pow_abs, CellFunction};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::reduce::dot;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Reweighted least-squares directions; each step takes the better of
    /// the reweighted and the Newton-scaled point, then backtracks.
    #[default]
    Irls,
    /// Gauss-Seidel sweeps of exact one-dimensional minimizations.
    CoordinateDescent,
    /// Newton steps with Armijo backtracking.
    DampedNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: f64,
    /// Relative energy decrease below which a step counts as stalled.
    pub tol: f64,
    /// Bound on the first-order residual at free vertices.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
    /// Floor on the reweighting factors `|Delta|^{p-2}` and on `|Delta|`.
    pub weight_floor: f64,
    /// Relative residual target of the inner conjugate-gradient solves.
    pub cg_tol: f64,
    /// Inner iteration cap; `None` means `10 * free + 100`.
    pub cg_max_iter: Option<usize>,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Sweeps per coordinate-descent fallback.
    pub cd_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: 2.0,
            tol: 1e-12,
            grad_tol: 1e-8,
            max_iter: 200,
            method: SolverMethod::Irls,
            weight_floor: 1e-12,
            cg_tol: 1e-14,
            cg_max_iter: None,
            armijo: 1e-4,
            max_backtracks: 40,
            cd_sweeps: 50,
        }
    }
}

impl SolverConfig {
    pub fn with_p(p: f64) -> Self {
        SolverConfig { p, ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::Config(format!("solver needs p > 1, got {}", self.p)));
        }
        if !(self.tol > 0.0 && self.grad_tol > 0.0 && self.weight_floor > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Minimizer of the p-energy under fixed boundary values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicSolution {
    pub function: CellFunction,
    pub energy: f64,
    /// Max over free vertices of `|sum_v p |u_w - u_v|^{p-1} sign(u_w - u_v)|`.
    pub residual: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub fallbacks: usize,
    pub method: SolverMethod,
}

/// JSON summary of one solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub n: u32,
    pub iterations: usize,
    pub energy: f64,
    pub residual: f64,
    /// Seconds; `None` unless timing was requested, so reports stay
    /// byte-reproducible by default.
    pub wall_time: Option<f64>,
}

impl HarmonicSolution {
    pub fn report(&self, p: f64, wall_time: Option<f64>) -> SolveReport {
        SolveReport {
            p,
            n: self.function.level,
            iterations: self.iterations,
            energy: self.energy,
            residual: self.residual,
            wall_time,
        }
    }
}

/// Minimizes `sum_edges |u_w - u_v|^p` with `u = value` on `boundary`.
/// Free vertices start at the mean boundary value.
pub fn p_harmonic_solve<G: Adjacency>(graph: &G, boundary: &[(usize, f64)], cfg: &SolverConfig) -> Result<HarmonicSolution> {
    check_boundary(graph, boundary)?;
    let mean = boundary.iter().map(|b| b.1).sum::<f64>() / boundary.len() as f64;
    let init = vec![mean; graph.vertex_count()];
    p_harmonic_solve_from(graph, boundary, cfg, &init)
}

/// As [`p_harmonic_solve`], starting from `initial` (boundary entries are
/// overwritten).
pub fn p_harmonic_solve_from<G: Adjacency>(
    graph: &G,
    boundary: &[(usize, f64)],
    cfg: &SolverConfig,
    initial: &[f64],
) -> Result<HarmonicSolution> {
    cfg.check()?;
    check_boundary(graph, boundary)?;
    if initial.len() != graph.vertex_count() {
        return Err(Error::Config("initial guess length does not match graph".into()));
    }
    let mut state = Solve::new(graph, boundary, cfg, initial);
    state.run()?;
    let residual = state.residual();
    Ok(HarmonicSolution {
        energy: state.energy,
        residual,
        iterations: state.iterations,
        inner_iterations: state.inner_iterations,
        fallbacks: state.fallbacks,
        method: cfg.method,
        function: CellFunction { level: graph.level(), values: state.u },
    })
}

fn check_boundary<G: Adjacency>(graph: &G, boundary: &[(usize, f64)]) -> Result<()> {
    if boundary.is_empty() {
        return Err(Error::Config("boundary must be non-empty".into()));
    }
    let mut seen = vec![false; graph.vertex_count()];
    for &(v, x) in boundary {
        if v >= graph.vertex_count() {
            return Err(Error::Config(format!("boundary vertex {v} out of range")));
        }
        if !x.is_finite() {
            return Err(Error::Config(format!("boundary value at {v} is not finite")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::Config(format!("boundary vertex {v} pinned twice")));
        }
    }
    Ok(())
}

const CG_STALL: usize = 50;

struct Solve<'a, G: Adjacency> {
    graph: &'a G,
    cfg: &'a SolverConfig,
    p: f64,
    free: Vec<bool>,
    free_list: Vec<usize>,
    /// Position of each vertex among the free ones, or `u32::MAX`.
    reduced: Vec<u32>,
    coarsening: Coarsening,
    u: Vec<f64>,
    energy: f64,
    iterations: usize,
    inner_iterations: usize,
    fallbacks: usize,
}

impl<'a, G: Adjacency> Solve<'a, G> {
    fn new(graph: &'a G, boundary: &[(usize, f64)], cfg: &'a SolverConfig, initial: &[f64]) -> Self {
        let mut free = vec![true; graph.vertex_count()];
        let mut u = initial.to_vec();
        for &(v, x) in boundary {
            free[v] = false;
            u[v] = x;
        }
        let energy = edge_energy(graph, &u, cfg.p);
        let free_list: Vec<usize> = (0..free.len()).filter(|&v| free[v]).collect();
        let mut reduced = vec![u32::MAX; free.len()];
        for (i, &v) in free_list.iter().enumerate() {
            reduced[v] = i as u32;
        }
        let mut solve = Solve {
            graph,
            cfg,
            p: cfg.p,
            free,
            free_list,
            reduced,
            coarsening: Coarsening { maps: Vec::new() },
            u,
            energy,
            iterations: 0,
            inner_iterations: 0,
            fallbacks: 0,
        };
        if cfg.method != SolverMethod::CoordinateDescent {
            let pattern = solve.reduced_matrix(&vec![1.0; graph.neighbors_total()]);
            solve.coarsening = Coarsening::new(&pattern);
        }
        solve
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..u.len())
            .into_par_iter()
            .map(|v| {
                if !self.free[v] {
                    return 0.0;
                }
                self.graph.neighbors(v).iter().fold(0.0, |acc, &w| {
                    let d = u[v] - u[w as usize];
                    acc + p * d.signum() * pow_abs(d, p - 1.0)
                })
            })
            .collect()
    }

    fn residual(&self) -> f64 {
        self.gradient(&self.u).iter().fold(0.0f64, |m, g| m.max(g.abs()))
    }

    fn run(&mut self) -> Result<()> {
        if self.free.iter().all(|f| !f) {
            return Ok(());
        }
        if self.cfg.method == SolverMethod::CoordinateDescent {
            return self.run_coordinate_descent();
        }
        loop {
            let grad = self.gradient(&self.u);
            let residual = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if self.iterations >= self.cfg.max_iter {
                if residual <= self.cfg.grad_tol {
                    return Ok(());
                }
                return Err(Error::NonConvergence { iterations: self.iterations, residual, energy: self.energy });
            }
            self.iterations += 1;
            let before = self.energy;
            let moved = self.newton_step(&grad)?;
            let decrease = (before - self.energy) / before.max(f64::MIN_POSITIVE);
            if residual <= self.cfg.grad_tol && (!moved || decrease <= self.cfg.tol) {
                // Converged; keep the better of the two iterates.
                return Ok(());
            }
            if !moved {
                if residual <= self.cfg.grad_tol {
                    return Ok(());
                }
                self.fallbacks += 1;
                self.coordinate_sweeps(self.cfg.cd_sweeps);
            }
        }
    }

    /// One reweighted step; returns false when no trial point lowered the energy.
    fn newton_step(&mut self, grad: &[f64]) -> Result<bool> {
        let p = self.p;
        let floor = self.cfg.weight_floor;
        let u = &self.u;
        // Reweighting factors |Delta|^{p-2} per CSR entry.
        let weights: Vec<f64> = (0..u.len())
            .into_par_iter()
            .flat_map_iter(|v| {
                self.graph.neighbors(v).iter().map(move |&w| {
                    let d = (u[v] - u[w as usize]).abs().max(floor);
                    if p == 2.0 {
                        1.0
                    } else {
                        d.powf(p - 2.0).max(floor)
                    }
                })
            })
            .collect();
        // IRLS direction: L_w s = -grad / p on free vertices.
        let rhs: Vec<f64> = grad.iter().map(|g| -g / p).collect();
        let (s, iters) = self.weighted_cg(&weights, &rhs);
        self.inner_iterations += iters;
        let slope = dot(grad, &s);
        if !(slope < 0.0) {
            return Ok(false);
        }
        // `s` is the reweighted step; the Newton step is `s / (p - 1)`.
        let newton_t = 1.0 / (p - 1.0);
        let trial = |t: f64| -> (Vec<f64>, f64) {
            let cand: Vec<f64> = self.u.iter().zip(&s).map(|(x, d)| x + t * d).collect();
            let e = edge_energy(self.graph, &cand, p);
            (cand, e)
        };
        let steps: Vec<f64> = match self.cfg.method {
            SolverMethod::Irls if (newton_t - 1.0).abs() > 1e-15 => vec![1.0, newton_t],
            _ => vec![newton_t],
        };
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        for &t in &steps {
            let (cand, e) = trial(t);
            if best.as_ref().map_or(true, |b| e < b.2) {
                best = Some((t, cand, e));
            }
        }
        let (t_best, cand, e) = best.expect("at least one trial step");
        if self.accept(e, t_best, slope) {
            self.u = cand;
            self.energy = e;
            return Ok(true);
        }
        let mut t = steps.iter().cloned().fold(f64::INFINITY, f64::min);
        for _ in 0..self.cfg.max_backtracks {
            t *= 0.5;
            let (cand, e) = trial(t);
            if self.accept(e, t, slope) {
                self.u = cand;
                self.energy = e;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn accept(&self, e: f64, t: f64, slope: f64) -> bool {
        e < self.energy && e <= self.energy + self.cfg.armijo * t * slope
    }

    /// Weighted Dirichlet Laplacian on the free vertices, rows in free order
    /// with the diagonal first.
    fn reduced_matrix(&self, weights: &[f64]) -> Csr {
        let graph = self.graph;
        let mut rowptr = Vec::with_capacity(self.free_list.len() + 1);
        rowptr.push(0);
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut start = 0usize;
        let mut v_prev = 0usize;
        for (i, &v) in self.free_list.iter().enumerate() {
            for w in v_prev..v {
                start += graph.neighbors(w).len();
            }
            v_prev = v;
            let nb = graph.neighbors(v);
            let ws = &weights[start..start + nb.len()];
            col.push(i as u32);
            val.push(ws.iter().sum());
            for (&u, &wt) in nb.iter().zip(ws) {
                let j = self.reduced[u as usize];
                if j != u32::MAX {
                    col.push(j);
                    val.push(-wt);
                }
            }
            rowptr.push(col.len());
        }
        Csr { n: self.free_list.len(), rowptr, col, val }
    }

    /// Multigrid-preconditioned CG for `L_w s = rhs` on free vertices.
    fn weighted_cg(&self, weights: &[f64], rhs: &[f64]) -> (Vec<f64>, usize) {
        let mut out = vec![0.0; rhs.len()];
        let b: Vec<f64> = self.free_list.iter().map(|&v| rhs[v]).collect();
        let b_norm = dot(&b, &b).sqrt();
        if b_norm == 0.0 {
            return (out, 0);
        }
        let h = Hierarchy::new(self.reduced_matrix(weights), &self.coarsening);
        let a = h.matrix();
        let m = a.n;
        let mut x = vec![0.0; m];
        let mut r = b;
        let mut z = vec![0.0; m];
        h.apply(&r, &mut z);
        let mut dir = z.clone();
        let mut rz = dot(&r, &z);
        let mut ad = vec![0.0; m];
        let max_iter = self.cfg.cg_max_iter.unwrap_or(10 * m + 100);
        // The next gradient equals `p` times the linear residual (exactly
        // at p = 2), so resolving far below `grad_tol` buys nothing.
        let floor = 1e-3 * self.cfg.grad_tol / self.p;
        let target = (self.cfg.cg_tol * b_norm).max(floor);
        if b_norm <= floor {
            return (out, 0);
        }
        let mut iters = 0;
        // Round-off can stall the residual above a tight target; stop
        // after a long stretch without a 1% improvement.
        let mut best = b_norm;
        let mut since_best = 0usize;
        while iters < max_iter {
            iters += 1;
            a.mul(&dir, &mut ad);
            let dad = dot(&dir, &ad);
            if !(dad > 0.0) {
                break;
            }
            let alpha = rz / dad;
            x.iter_mut().zip(&dir).for_each(|(x, d)| *x += alpha * d);
            r.iter_mut().zip(&ad).for_each(|(r, a)| *r -= alpha * a);
            let r_norm = dot(&r, &r).sqrt();
            if r_norm <= target {
                break;
            }
            if r_norm < 0.99 * best {
                best = r_norm;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= CG_STALL {
                    break;
                }
            }
            h.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            dir.iter_mut().zip(&z).for_each(|(d, z)| *d = z + beta * *d);
        }
        for (&v, xi) in self.free_list.iter().zip(x) {
            out[v] = xi;
        }
        (out, iters)
    }

    fn run_coordinate_descent(&mut self) -> Result<()> {
        loop {
            let residual = self.residual();
            if residual <= self.cfg.grad_tol {
                return Ok(());
            }
            if self.iterations >= self.cfg.max_iter {
                return Err(Error::NonConvergence { iterations: self.iterations, residual, energy: self.energy });
            }
            self.iterations += 1;
            self.coordinate_sweeps(self.cfg.cd_sweeps);
        }
    }

    fn coordinate_sweeps(&mut self, sweeps: usize) {
        let p = self.p;
        for _ in 0..sweeps {
            for v in 0..self.u.len() {
                if !self.free[v] {
                    continue;
                }
                let nb = self.graph.neighbors(v);
                let vals: Vec<f64> = nb.iter().map(|&w| self.u[w as usize]).collect();
                self.u[v] = minimize_1d(&vals, p, self.u[v]);
            }
        }
        self.energy = edge_energy(self.graph, &self.u, p);
    }
}

/// Minimizer of `t -> sum_j |t - vals_j|^p` (convex) by safeguarded Newton.
fn minimize_1d(vals: &[f64], p: f64, start: f64) -> f64 {
    let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if lo == hi {
        return lo;
    }
    let deriv = |t: f64| -> (f64, f64) {
        vals.iter().fold((0.0, 0.0), |(g, h), &x| {
            let d = t - x;
            (g + p * d.signum() * pow_abs(d, p - 1.0), h + p * (p - 1.0) * pow_abs(d, p - 2.0).min(1e300))
        })
    };
    let mut t = start.clamp(lo, hi);
    for _ in 0..200 {
        let (g, h) = deriv(t);
        if g == 0.0 {
            return t;
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - g / h;
        t = if h.is_finite() && h > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * (1.0 + hi.abs()) {
            break;
        }
    }
    t
}

/// First-order residual of `u` at free vertices.
#[cfg(test)]
fn first_order_residual(graph: &crate::graph::LevelGraph, u: &[f64], free: &[bool], p: f64) -> f64 {
    (0..u.len())
        .filter(|&v| free[v])
        .map(|v| {
            graph.neighbors(v).iter().fold(0.0, |acc, &w| {
                let d = u[v] - u[w as usize];
                acc + p * d.signum() * pow_abs(d, p - 1.0)
            })
        })
        .fold(0.0f64, |m, g| m.max(g.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::CarpetSpec;
    use crate::graph::{build_level_graph, EdgeListGraph, LevelGraph, Side};

    fn faces(g: &LevelGraph) -> Vec<(usize, f64)> {
        let mut b: Vec<(usize, f64)> = g.face_cells(1, Side::Low).unwrap().into_iter().map(|v| (v, 0.0)).collect();
        b.extend(g.face_cells(1, Side::High).unwrap().into_iter().map(|v| (v, 1.0)));
        b
    }

    #[test]
    fn level_one_capacity_problem() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 1).unwrap();
        let sol = p_harmonic_solve(&g, &faces(&g), &SolverConfig::with_p(2.0)).unwrap();
        let v10 = g.cells().index_of(&[1, 0]).unwrap();
        let v12 = g.cells().index_of(&[1, 2]).unwrap();
        assert!((sol.function.values[v10] - 0.5).abs() < 1e-14);
        assert!((sol.function.values[v12] - 0.5).abs() < 1e-14);
        assert!((sol.energy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_edge_path() {
        let path = EdgeListGraph::path(2);
        let b = [(0, 0.0), (2, 1.0)];
        let sol = p_harmonic_solve(&path, &b, &SolverConfig::with_p(2.0)).unwrap();
        assert!((sol.function.values[1] - 0.5).abs() < 1e-15);
        assert!((sol.energy - 0.5).abs() < 1e-15);
        let sol = p_harmonic_solve(&path, &b, &SolverConfig::with_p(3.0)).unwrap();
        assert!((sol.function.values[1] - 0.5).abs() < 1e-10);
        assert_eq!(sol.function.level, 0);
    }

    #[test]
    fn constant_boundary_gives_constant() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 2).unwrap();
        let b: Vec<(usize, f64)> = faces(&g).into_iter().map(|(v, _)| (v, 0.25)).collect();
        for p in [1.5, 2.0, 3.0] {
            let sol = p_harmonic_solve(&g, &b, &SolverConfig::with_p(p)).unwrap();
            assert!(sol.function.values.iter().all(|&x| (x - 0.25).abs() < 1e-12));
            assert!(sol.energy < 1e-20);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 1).unwrap();
        assert!(p_harmonic_solve(&g, &[], &SolverConfig::default()).is_err());
        assert!(p_harmonic_solve(&g, &faces(&g), &SolverConfig::with_p(1.0)).is_err());
        assert!(p_harmonic_solve(&g, &[(0, 0.0), (0, 1.0)], &SolverConfig::default()).is_err());
        assert!(p_harmonic_solve(&g, &[(99, 0.0)], &SolverConfig::default()).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 3).unwrap();
        let cfg = SolverConfig { p: 4.0, max_iter: 1, ..Default::default() };
        match p_harmonic_solve(&g, &faces(&g), &cfg) {
            Err(Error::NonConvergence { residual, .. }) => assert!(residual > 1e-8),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn methods_agree() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 2).unwrap();
        for p in [1.5, 3.0] {
            let mut energies = Vec::new();
            for method in [SolverMethod::Irls, SolverMethod::DampedNewton, SolverMethod::CoordinateDescent] {
                let cfg = SolverConfig { p, method, max_iter: 5000, ..Default::default() };
                let sol = p_harmonic_solve(&g, &faces(&g), &cfg).unwrap();
                assert!(sol.residual <= 1e-8);
                energies.push(sol.energy);
            }
            assert!((energies[0] - energies[1]).abs() < 1e-10 * energies[0]);
            assert!((energies[0] - energies[2]).abs() < 1e-8 * energies[0]);
        }
    }

    #[test]
    fn one_dimensional_minimizer() {
        assert!((minimize_1d(&[0.0, 1.0], 2.0, 0.3) - 0.5).abs() < 1e-15);
        assert!((minimize_1d(&[0.0, 1.0], 3.0, 0.9) - 0.5).abs() < 1e-12);
        // p = 2: mean
        assert!((minimize_1d(&[0.0, 0.0, 3.0], 2.0, 0.0) - 1.0).abs() < 1e-14);
        assert_eq!(minimize_1d(&[0.7, 0.7], 1.5, 0.0), 0.7);
    }

    #[test]
    fn residual_helper_matches_solution() {
        let sc = CarpetSpec::standard_carpet();
        let g = build_level_graph(&sc, 2).unwrap();
        let b = faces(&g);
        let sol = p_harmonic_solve(&g, &b, &SolverConfig::with_p(3.0)).unwrap();
        let mut free = vec![true; g.vertex_count()];
        for &(v, _) in &b {
            free[v] = false;
        }
        let r = first_order_residual(&g, &sol.function.values, &free, 3.0);
        assert!((r - sol.residual).abs() < 1e-15);
    }
}
