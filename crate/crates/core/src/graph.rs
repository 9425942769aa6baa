//! Approximation graphs `G_n = (W_n, E_n)`.
//!
//! Two level-`n` cells are adjacent when their closed boxes meet, i.e. when
//! their lattice indices differ by at most one in every coordinate. Borders
//! and symmetry put every box corner in `K`, so touching boxes always share
//! a point of the carpet.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carpet::{CarpetSpec, LevelCells, MAX_DIM};
use crate::error::{Error, Result};

/// Default cap on `|W_n|` for graph construction.
pub const DEFAULT_VERTEX_BUDGET: u64 = 1 << 24;

/// Which face of the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Low,
    High,
}

/// `G_n` with CSR adjacency. Vertices are in lexicographic lattice order.
#[derive(Clone, Debug)]
pub struct LevelGraph {
    cells: LevelCells,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    edges: Vec<[u32; 2]>,
}

/// JSON header written next to the CSV edge list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub n: u32,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub max_degree: usize,
}

/// Read-only adjacency used by the energy solvers, so they run on `G_n`
/// and on small hand-built graphs alike.
pub trait Adjacency: Sync {
    fn vertex_count(&self) -> usize;
    fn neighbors(&self, v: usize) -> &[u32];
    /// Unordered edges `[v, u]` with `v < u`.
    fn edges(&self) -> &[[u32; 2]];
    /// Sum of all degrees.
    fn neighbors_total(&self) -> usize {
        2 * self.edges().len()
    }
    /// Level recorded on solutions; 0 for graphs not tied to a carpet.
    fn level(&self) -> u32 {
        0
    }
}

impl Adjacency for LevelGraph {
    fn vertex_count(&self) -> usize {
        LevelGraph::vertex_count(self)
    }
    fn neighbors(&self, v: usize) -> &[u32] {
        LevelGraph::neighbors(self, v)
    }
    fn edges(&self) -> &[[u32; 2]] {
        LevelGraph::edges(self)
    }
    fn level(&self) -> u32 {
        LevelGraph::level(self)
    }
}

/// A plain undirected graph given by an edge list.
#[derive(Clone, Debug)]
pub struct EdgeListGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    edges: Vec<[u32; 2]>,
}

impl EdgeListGraph {
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<EdgeListGraph> {
        let mut lists = vec![Vec::new(); vertex_count];
        let mut canon = Vec::with_capacity(edges.len());
        for &(v, u) in edges {
            if v >= vertex_count || u >= vertex_count || v == u {
                return Err(Error::Config(format!("bad edge ({v}, {u})")));
            }
            canon.push([v.min(u) as u32, v.max(u) as u32]);
        }
        canon.sort_unstable();
        canon.dedup();
        for &[v, u] in &canon {
            lists[v as usize].push(u);
            lists[u as usize].push(v);
        }
        let mut offsets = vec![0];
        for l in lists.iter_mut() {
            l.sort_unstable();
            offsets.push(offsets.last().unwrap() + l.len());
        }
        Ok(EdgeListGraph { offsets, neighbors: lists.concat(), edges: canon })
    }

    /// The path `0 - 1 - ... - len`.
    pub fn path(len: usize) -> EdgeListGraph {
        let edges: Vec<(usize, usize)> = (0..len).map(|i| (i, i + 1)).collect();
        EdgeListGraph::new(len + 1, &edges).expect("path edges are valid")
    }
}

impl Adjacency for EdgeListGraph {
    fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }
    fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }
    fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }
}

pub fn build_level_graph(spec: &CarpetSpec, n: u32) -> Result<LevelGraph> {
    build_level_graph_with_budget(spec, n, DEFAULT_VERTEX_BUDGET)
}

pub fn build_level_graph_with_budget(spec: &CarpetSpec, n: u32, budget: u64) -> Result<LevelGraph> {
    spec.require_valid()?;
    let cells = LevelCells::enumerate(spec, n, budget)?;
    let dim = spec.dim();
    let side = cells.side() as i64;
    let probes = neighbor_offsets(dim);

    let lists: Vec<Vec<u32>> = (0..cells.len())
        .into_par_iter()
        .map(|v| {
            let mut lat = [0u64; MAX_DIM];
            cells.lattice_into(v, &mut lat);
            let mut out = Vec::with_capacity(probes.len());
            'probe: for off in &probes {
                let mut key = 0u64;
                for k in 0..dim {
                    let c = lat[k] as i64 + off[k] as i64;
                    if c < 0 || c >= side {
                        continue 'probe;
                    }
                    key = key * side as u64 + c as u64;
                }
                if let Some(u) = cells.index_of_key(key) {
                    out.push(u as u32);
                }
            }
            out
        })
        .collect();

    let mut offsets = Vec::with_capacity(cells.len() + 1);
    offsets.push(0);
    for l in &lists {
        offsets.push(offsets.last().unwrap() + l.len());
    }
    let neighbors: Vec<u32> = lists.into_iter().flatten().collect();
    let mut edges = Vec::with_capacity(neighbors.len() / 2);
    for v in 0..cells.len() {
        for &u in &neighbors[offsets[v]..offsets[v + 1]] {
            if (u as usize) > v {
                edges.push([v as u32, u]);
            }
        }
    }
    let graph = LevelGraph { cells, offsets, neighbors, edges };
    if !graph.is_connected() {
        return Err(Error::Geometry(format!("G_{n} is not connected")));
    }
    Ok(graph)
}

/// `{-1, 0, 1}^D` minus the origin, in lexicographic order (so probed keys
/// come out sorted).
fn neighbor_offsets(dim: usize) -> Vec<Vec<i8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i8>| {
                [-1i8, 0, 1].into_iter().map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out.retain(|o| o.iter().any(|&x| x != 0));
    out
}

impl LevelGraph {
    pub fn level(&self) -> u32 {
        self.cells.level()
    }

    pub fn cells(&self) -> &LevelCells {
        &self.cells
    }

    pub fn vertex_count(&self) -> usize {
        self.cells.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Unordered edges `[v, u]` with `v < u`, sorted.
    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn header(&self) -> GraphHeader {
        GraphHeader {
            n: self.level(),
            vertex_count: self.vertex_count(),
            edge_count: self.edge_count(),
            max_degree: self.max_degree(),
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in self.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    count += 1;
                    queue.push_back(u as usize);
                }
            }
        }
        count == n
    }

    /// Vertices whose box touches the hyperplane `x_axis = 0` (low) or
    /// `x_axis = 1` (high). `axis` is 1-based.
    pub fn face_cells(&self, axis: usize, side: Side) -> Result<Vec<usize>> {
        let dim = self.cells.dim();
        if axis == 0 || axis > dim {
            return Err(Error::Config(format!("axis {axis} outside [1, {dim}]")));
        }
        let target = match side {
            Side::Low => 0,
            Side::High => self.cells.side() - 1,
        };
        let mut lat = [0u64; MAX_DIM];
        Ok((0..self.vertex_count())
            .filter(|&v| {
                self.cells.lattice_into(v, &mut lat);
                lat[axis - 1] == target
            })
            .collect())
    }

    /// Writes `v,u` per unordered edge.
    pub fn write_edge_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "v,u")?;
        for [v, u] in &self.edges {
            writeln!(w, "{v},{u}")?;
        }
        Ok(())
    }
}

pub fn face_cells(spec: &CarpetSpec, n: u32, axis: usize, side: Side) -> Result<Vec<usize>> {
    build_level_graph(spec, n)?.face_cells(axis, side)
}

/// Per-level maximum degree and the running estimate of `L_*`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LStar {
    /// `max_degree[i]` is the maximum degree of `G_{i+1}`.
    pub max_degree: Vec<usize>,
    pub l_star: usize,
    /// Equal maxima at the last two levels.
    pub stabilized: bool,
    /// `3^D - 1`.
    pub bound: usize,
}

pub fn compute_l_star(spec: &CarpetSpec, n_max: u32) -> Result<LStar> {
    if n_max < 1 {
        return Err(Error::Config("n_max must be >= 1".into()));
    }
    let max_degree = (1..=n_max)
        .map(|n| build_level_graph(spec, n).map(|g| g.max_degree()))
        .collect::<Result<Vec<_>>>()?;
    let l_star = *max_degree.iter().max().unwrap();
    let stabilized = max_degree.len() >= 2 && max_degree[max_degree.len() - 1] == max_degree[max_degree.len() - 2];
    Ok(LStar { max_degree, l_star, stabilized, bound: 3usize.pow(spec.dim() as u32) - 1 })
}
