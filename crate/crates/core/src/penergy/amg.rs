//! Aggregation multigrid V-cycle used as the preconditioner of the inner
//! conjugate-gradient solves.
//!
//! Aggregates depend only on the sparsity pattern, so they are built once
//! per solve; the Galerkin coarse matrices are rebuilt whenever the edge
//! weights change.

/// Symmetric sparse matrix in CSR form; every row stores its diagonal.
#[derive(Clone, Debug)]
pub(crate) struct Csr {
    pub n: usize,
    pub rowptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.rowptr[i]..self.rowptr[i + 1] {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = acc;
        }
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.rowptr[i]..self.rowptr[i + 1])
                    .find(|&k| self.col[k] as usize == i)
                    .map_or(0.0, |k| self.val[k])
            })
            .collect()
    }

    /// `P^T A P` for the piecewise-constant prolongation of `agg`.
    fn galerkin(&self, agg: &[u32], n_coarse: usize) -> Csr {
        let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(self.val.len());
        for i in 0..self.n {
            let ai = agg[i];
            for k in self.rowptr[i]..self.rowptr[i + 1] {
                trip.push((ai, agg[self.col[k] as usize], self.val[k]));
            }
        }
        trip.sort_unstable_by_key(|t| (t.0, t.1));
        let mut rowptr = vec![0usize; n_coarse + 1];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut it = trip.into_iter().peekable();
        while let Some((r, c, v)) = it.next() {
            let mut sum = v;
            while let Some(&(r2, c2, v2)) = it.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                sum += v2;
                it.next();
            }
            col.push(c);
            val.push(sum);
            rowptr[r as usize + 1] = col.len();
        }
        for i in 1..=n_coarse {
            rowptr[i] = rowptr[i].max(rowptr[i - 1]);
        }
        Csr { n: n_coarse, rowptr, col, val }
    }
}

/// Greedy neighbourhood aggregation: an unassigned vertex whose neighbours
/// are all unassigned seeds an aggregate with them; leftovers join an
/// adjacent aggregate (or become singletons).
fn aggregate(a: &Csr) -> (Vec<u32>, usize) {
    const NONE: u32 = u32::MAX;
    let mut agg = vec![NONE; a.n];
    let mut count = 0u32;
    for i in 0..a.n {
        if agg[i] != NONE {
            continue;
        }
        let row = &a.col[a.rowptr[i]..a.rowptr[i + 1]];
        if row.iter().all(|&j| agg[j as usize] == NONE) {
            for &j in row {
                agg[j as usize] = count;
            }
            agg[i] = count;
            count += 1;
        }
    }
    for i in 0..a.n {
        if agg[i] == NONE {
            let row = &a.col[a.rowptr[i]..a.rowptr[i + 1]];
            agg[i] = match row.iter().map(|&j| agg[j as usize]).find(|&g| g != NONE) {
                Some(g) => g,
                None => {
                    count += 1;
                    count - 1
                }
            };
        }
    }
    (agg, count as usize)
}

/// Aggregation maps for each level, built from the pattern alone.
#[derive(Clone, Debug)]
pub(crate) struct Coarsening {
    pub maps: Vec<(Vec<u32>, usize)>,
}

const COARSEST: usize = 400;
/// Piecewise-constant prolongation underestimates smooth errors; the
/// coarse correction is over-relaxed (below 2 keeps the cycle positive
/// definite).
const COARSE_SCALE: f64 = 1.8;
/// Gauss-Seidel sweeps before and after the coarse correction.
const SWEEPS: usize = 2;

impl Coarsening {
    pub fn new(pattern: &Csr) -> Coarsening {
        let mut maps = Vec::new();
        let mut a = pattern.clone();
        while a.n > COARSEST {
            let (agg, nc) = aggregate(&a);
            if nc * 10 > a.n * 9 {
                break;
            }
            a = a.galerkin(&agg, nc);
            maps.push((agg, nc));
        }
        Coarsening { maps }
    }
}

/// One multigrid hierarchy for a fixed matrix.
pub(crate) struct Hierarchy<'c> {
    mats: Vec<Csr>,
    diags: Vec<Vec<f64>>,
    coarsening: &'c Coarsening,
    chol: Vec<f64>,
}

impl<'c> Hierarchy<'c> {
    pub fn new(a: Csr, coarsening: &'c Coarsening) -> Hierarchy<'c> {
        let mut mats = vec![a];
        for (agg, nc) in &coarsening.maps {
            let next = mats.last().unwrap().galerkin(agg, *nc);
            mats.push(next);
        }
        let diags = mats.iter().map(Csr::diag).collect();
        let chol = dense_cholesky(mats.last().unwrap());
        Hierarchy { mats, diags, coarsening, chol }
    }

    pub fn matrix(&self) -> &Csr {
        &self.mats[0]
    }

    /// `z ~= A^{-1} r` by one symmetric V-cycle.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.vcycle(0, r, z);
    }

    fn vcycle(&self, lvl: usize, b: &[f64], x: &mut [f64]) {
        let a = &self.mats[lvl];
        if lvl + 1 == self.mats.len() {
            x.copy_from_slice(b);
            cholesky_solve(&self.chol, a.n, x);
            return;
        }
        let d = &self.diags[lvl];
        x.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..SWEEPS {
            gauss_seidel(a, d, b, x, false);
        }
        let mut r = vec![0.0; a.n];
        a.mul(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let (agg, nc) = &self.coarsening.maps[lvl];
        let mut rc = vec![0.0; *nc];
        for (i, &g) in agg.iter().enumerate() {
            rc[g as usize] += r[i];
        }
        let mut ec = vec![0.0; *nc];
        self.vcycle(lvl + 1, &rc, &mut ec);
                for (i, &g) in agg.iter().enumerate() {
            x[i] += COARSE_SCALE * ec[g as usize];
        }
        for _ in 0..SWEEPS {
            gauss_seidel(a, d, b, x, true);
        }
    }
}


fn gauss_seidel(a: &Csr, d: &[f64], b: &[f64], x: &mut [f64], backward: bool) {
    let mut step = |i: usize| {
        let mut s = b[i];
        for k in a.rowptr[i]..a.rowptr[i + 1] {
            let j = a.col[k] as usize;
            if j != i {
                s -= a.val[k] * x[j];
            }
        }
        x[i] = s / d[i];
    };
    if backward {
        (0..a.n).rev().for_each(&mut step);
    } else {
        (0..a.n).for_each(&mut step);
    }
}

/// Dense lower Cholesky factor, row-major `n x n`. Non-positive pivots
/// (possible only through round-off) are replaced by the diagonal entry.
fn dense_cholesky(a: &Csr) -> Vec<f64> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for k in a.rowptr[i]..a.rowptr[i + 1] {
            l[i * n + a.col[k] as usize] = a.val[k];
        }
    }
    for j in 0..n {
        let mut s = l[j * n + j];
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        let pivot = if s > 0.0 { s.sqrt() } else { l[j * n + j].abs().max(f64::MIN_POSITIVE).sqrt() };
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / pivot;
        }
    }
    l
}

fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian tridiag(-1, 2, -1).
    fn laplace_1d(n: usize) -> Csr {
        let mut rowptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for i in 0..n {
            if i > 0 {
                col.push(i as u32 - 1);
                val.push(-1.0);
            }
            col.push(i as u32);
            val.push(2.0);
            if i + 1 < n {
                col.push(i as u32 + 1);
                val.push(-1.0);
            }
            rowptr.push(col.len());
        }
        Csr { n, rowptr, col, val }
    }

    #[test]
    fn coarsest_solve_is_exact() {
        let a = laplace_1d(50);
        let c = Coarsening::new(&a);
        assert!(c.maps.is_empty());
        let h = Hierarchy::new(a.clone(), &c);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 50];
        h.apply(&b, &mut x);
        let mut ax = vec![0.0; 50];
        a.mul(&x, &mut ax);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn preconditioned_cg_converges_quickly() {
        let n = 5000;
        let a = laplace_1d(n);
        let c = Coarsening::new(&a);
        assert!(!c.maps.is_empty());
        let h = Hierarchy::new(a.clone(), &c);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z = vec![0.0; n];
        h.apply(&r, &mut z);
        assert!(dot(&r, &z) > 0.0);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut ad = vec![0.0; n];
        let b_norm = dot(&b, &b).sqrt();
        let mut iters = 0;
        while dot(&r, &r).sqrt() > 1e-10 * b_norm {
            iters += 1;
            assert!(iters < 200, "no convergence");
            a.mul(&d, &mut ad);
            let alpha = rz / dot(&d, &ad);
            x.iter_mut().zip(&d).for_each(|(x, d)| *x += alpha * d);
            r.iter_mut().zip(&ad).for_each(|(r, a)| *r -= alpha * a);
            h.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            d.iter_mut().zip(&z).for_each(|(d, z)| *d = z + rz_new / rz * *d);
            rz = rz_new;
        }
        // unpreconditioned CG would need on the order of n iterations
        assert!(iters < 100, "{iters}");
    }
}
