//! Brute-force oracles shared by the integration tests and the acceptance
//! target.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use gsc_core::graph::{LevelGraph, Side};
use gsc_core::CarpetSpec;

/// Closed boxes `[i/a, (i+1)/a]` indexed by their digit vectors. Geometry is
/// done on the half grid `(1/(2a)) Z^D`, in units of `1/(2a)`.
pub struct Naive {
    pub dim: usize,
    pub a: i64,
    pub boxes: HashSet<Vec<i64>>,
}

impl Naive {
    pub fn new(dim: usize, a: i64, digits: &[Vec<i64>]) -> Self {
        Naive { dim, a, boxes: digits.iter().cloned().collect() }
    }

    /// Digit boxes whose closure contains the half-grid point `x`.
    pub fn touching(&self, x: &[i64]) -> Vec<Vec<i64>> {
        let mut out = vec![vec![]];
        for &c in x {
            // Box index i covers half-grid coordinates 2i..=2i+2.
            let choices: Vec<i64> = if c % 2 == 0 { vec![c / 2 - 1, c / 2] } else { vec![c / 2] };
            out = out
                .into_iter()
                .flat_map(|p: Vec<i64>| {
                    choices.iter().filter(|&&i| i >= 0 && i < self.a).map(move |&i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn in_set(&self, x: &[i64]) -> bool {
        self.touching(x).iter().any(|b| self.boxes.contains(b))
    }

    /// `x` is interior to the union: every grid box around it (including
    /// those outside the cube) must be present.
    pub fn interior(&self, x: &[i64]) -> bool {
        let mut around = vec![vec![]];
        for &c in x {
            let choices: Vec<i64> = if c % 2 == 0 { vec![c / 2 - 1, c / 2] } else { vec![c / 2] };
            around = around
                .into_iter()
                .flat_map(|p: Vec<i64>| {
                    choices.iter().map(move |&i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        around.iter().all(|b| self.boxes.contains(b))
    }

    /// Connectedness of the interior points among the half-grid points of
    /// the open box `(lo, hi)` (half-grid units), with unit axis steps.
    pub fn interior_connected(&self, lo: i64, hi: i64) -> Option<bool> {
        let mut points = Vec::new();
        let mut x = vec![lo + 1; self.dim];
        loop {
            if self.interior(&x) {
                points.push(x.clone());
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    let set: HashSet<Vec<i64>> = points.iter().cloned().collect();
                    if set.is_empty() {
                        return None;
                    }
                    let mut seen = HashSet::new();
                    let mut queue = VecDeque::from([points[0].clone()]);
                    seen.insert(points[0].clone());
                    while let Some(p) = queue.pop_front() {
                        for axis in 0..self.dim {
                            for step in [-1, 1] {
                                let mut q = p.clone();
                                q[axis] += step;
                                if set.contains(&q) && seen.insert(q.clone()) {
                                    queue.push_back(q);
                                }
                            }
                        }
                    }
                    return Some(seen.len() == set.len());
                }
                x[k] += 1;
                if x[k] < hi {
                    break;
                }
                x[k] = lo + 1;
                k += 1;
            }
        }
    }

    pub fn symmetric(&self) -> bool {
        let mut perms: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..self.dim {
            perms = perms
                .into_iter()
                .flat_map(|p| {
                    let free: Vec<usize> = (0..self.dim).filter(|i| !p.contains(i)).collect();
                    free.into_iter().map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        for perm in &perms {
            for flips in 0..(1u32 << self.dim) {
                for b in &self.boxes {
                    // Box centre in half-grid units is 2i + 1; reflect about a.
                    let image: Vec<i64> = (0..self.dim)
                        .map(|k| {
                            let c = 2 * b[perm[k]] + 1;
                            let c = if flips >> k & 1 == 1 { 2 * self.a - c } else { c };
                            (c - 1) / 2
                        })
                        .collect();
                    if !self.boxes.contains(&image) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn connected(&self) -> bool {
        self.interior_connected(0, 2 * self.a).unwrap_or(false)
    }

    pub fn non_diagonal(&self) -> bool {
        let windows = (self.a - 1).pow(self.dim as u32);
        (0..windows).all(|w| {
            let corner: Vec<i64> = (0..self.dim).map(|k| w / (self.a - 1).pow(k as u32) % (self.a - 1)).collect();
            let inside = |b: &[i64]| b.iter().zip(&corner).all(|(&i, &c)| i == c || i == c + 1);
            // Window boxes in window coordinates; the scan covers the open window.
            let shifted = Naive {
                dim: self.dim,
                a: self.a,
                boxes: self
                    .boxes
                    .iter()
                    .filter(|b| inside(b))
                    .map(|b| b.iter().zip(&corner).map(|(&i, &c)| i - c).collect())
                    .collect(),
            };
            shifted.interior_connected(0, 4).unwrap_or(true)
        })
    }

    pub fn borders(&self) -> bool {
        (0..=2 * self.a).all(|t| {
            let mut x = vec![0; self.dim];
            x[0] = t;
            self.in_set(&x)
        })
    }

    pub fn valid(&self) -> bool {
        self.symmetric() && self.connected() && self.non_diagonal() && self.borders()
    }
}

/// Lattice positions of all level-n cells, straight from digit words.
pub fn oracle_cells(spec: &CarpetSpec, n: u32) -> Vec<Vec<u64>> {
    let a = spec.a() as u64;
    let words = spec.digits().len().pow(n);
    let mut out: Vec<Vec<u64>> = (0..words)
        .map(|mut w| {
            let mut pos = vec![0u64; spec.dim()];
            let mut scale = 1u64;
            for _ in 0..n {
                let d = &spec.digits()[w % spec.digits().len()];
                w /= spec.digits().len();
                for k in 0..spec.dim() {
                    pos[k] += d[k] as u64 * scale;
                }
                scale *= a;
            }
            pos
        })
        .collect();
    out.sort();
    out
}

/// All pairs whose closed boxes meet.
pub fn oracle_edges(cells: &[Vec<u64>]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            if cells[i].iter().zip(&cells[j]).all(|(&x, &y)| x.abs_diff(y) <= 1) {
                edges.insert((i, j));
            }
        }
    }
    edges
}

pub fn face_boundary(g: &LevelGraph, hi: f64) -> Vec<(usize, f64)> {
    let mut b: Vec<(usize, f64)> = g.face_cells(1, Side::Low).unwrap().into_iter().map(|v| (v, 0.0)).collect();
    b.extend(g.face_cells(1, Side::High).unwrap().into_iter().map(|v| (v, hi)));
    b
}

/// Dense-band Cholesky solve of the Dirichlet graph Laplacian, used as an
/// independent p = 2 oracle.
pub fn laplace_oracle(g: &LevelGraph, boundary: &[(usize, f64)]) -> Vec<f64> {
    let n = g.vertex_count();
    let mut fixed = vec![None; n];
    for &(v, x) in boundary {
        fixed[v] = Some(x);
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        pos[v] = i;
    }
    let m = free.len();
    let mut bw = 0;
    for &v in &free {
        for &u in g.neighbors(v) {
            if pos[u as usize] != usize::MAX {
                bw = bw.max(pos[v].abs_diff(pos[u as usize]));
            }
        }
    }
    // band[i][j] holds A[i][i - bw + j] for j in 0..=bw (lower band).
    let mut band = vec![vec![0.0f64; bw + 1]; m];
    let mut rhs = vec![0.0f64; m];
    for (i, &v) in free.iter().enumerate() {
        band[i][bw] = g.degree(v) as f64;
        for &u in g.neighbors(v) {
            let u = u as usize;
            match fixed[u] {
                Some(x) => rhs[i] += x,
                None => {
                    let j = pos[u];
                    if j < i {
                        band[i][bw - (i - j)] -= 1.0;
                    }
                }
            }
        }
    }
    for i in 0..m {
        let lo = i.saturating_sub(bw);
        for j in lo..=i {
            let mut s = band[i][bw - (i - j)];
            let klo = lo.max(j.saturating_sub(bw));
            for k in klo..j {
                s -= band[i][bw - (i - k)] * band[j][bw - (j - k)];
            }
            if i == j {
                band[i][bw] = s.sqrt();
            } else {
                band[i][bw - (i - j)] = s / band[j][bw];
            }
        }
    }
    let mut y = rhs;
    for i in 0..m {
        let lo = i.saturating_sub(bw);
        for k in lo..i {
            y[i] -= band[i][bw - (i - k)] * y[k];
        }
        y[i] /= band[i][bw];
    }
    for i in (0..m).rev() {
        for k in i + 1..m.min(i + bw + 1) {
            y[i] -= band[k][bw - (k - i)] * y[k];
        }
        y[i] /= band[i][bw];
    }
    (0..n).map(|v| fixed[v].unwrap_or_else(|| y[pos[v]])).collect()
}

