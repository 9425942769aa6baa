use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{stream_id, EvalFunction, GeometryConstants, TAG_HOLDER};
use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::penergy::pow_abs;
use crate::rng::stream_rng;

/// Two anchors at a common lattice depth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointPair {
    pub depth: u32,
    pub x: Vec<u64>,
    pub y: Vec<u64>,
}

impl PointPair {
    pub fn distance(&self, a: u32) -> f64 {
        let d2: f64 = self.x.iter().zip(&self.y).map(|(&u, &v)| (u.abs_diff(v) as f64).powi(2)).sum();
        d2.sqrt() * (a as f64).powi(-(self.depth as i32))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// `sup |f(x) - f(y)|^p / d(x, y)^{beta - alpha}` over the pairs.
    pub ratio: f64,
    pub exponent: f64,
    pub argmax: Option<PointPair>,
    pub argmax_distance: f64,
    pub pairs: usize,
}

/// Random pairs of depth-`depth` anchors: a uniform shared prefix of
/// `0..=depth-2` digits, independent digits afterwards, and distance at
/// least `a^{-(depth-2)}`.
pub fn sample_pairs(spec: &CarpetSpec, depth: u32, count: usize, seed: u64) -> Result<Vec<PointPair>> {
    spec.require_valid()?;
    if depth < 2 {
        return Err(Error::Config("pair depth must be at least 2".into()));
    }
    spec.lattice_key(depth, &vec![0; spec.dim()])?;
    let a = spec.a() as u64;
    let floor2 = (a * a) as u128;
    let mut rng = stream_rng(seed, stream_id(TAG_HOLDER, depth, 0));
    let mut out = Vec::with_capacity(count);
    let draw = |rng: &mut crate::rng::StreamRng, v: &mut [u64]| {
        let d = &spec.digits()[rng.random_range(0..spec.n_star())];
        for (vk, &dk) in v.iter_mut().zip(d) {
            *vk = *vk * a + dk as u64;
        }
    };
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 64 * count.max(1) {
            return Err(Error::Geometry("could not draw pairs above the distance floor".into()));
        }
        let shared = rng.random_range(0..=depth - 2);
        let mut x = vec![0u64; spec.dim()];
        for _ in 0..shared {
            draw(&mut rng, &mut x);
        }
        let mut y = x.clone();
        for _ in shared..depth {
            draw(&mut rng, &mut x);
            draw(&mut rng, &mut y);
        }
        let d2: u128 = x.iter().zip(&y).map(|(&u, &v)| (u.abs_diff(v) as u128).pow(2)).sum();
        if d2 >= floor2 {
            out.push(PointPair { depth, x, y });
        }
    }
    Ok(out)
}

/// Pairs straddling the level-1 interface `x_1 = 1/a` along the bottom
/// edge, one per depth: `x = (a^{k-1} - 1, 0, ...)` and `y = (a^{k-1}, 0, ...)`
/// at depth `k`, distance `a^{-k}`.
pub fn interface_pairs(spec: &CarpetSpec, depths: impl IntoIterator<Item = u32>) -> Result<Vec<PointPair>> {
    spec.require_valid()?;
    let a = spec.a() as u64;
    let mut out = Vec::new();
    for k in depths {
        if k < 1 {
            return Err(Error::Config("interface pair depth must be >= 1".into()));
        }
        spec.lattice_key(k, &vec![0; spec.dim()])?;
        let mut x = vec![0u64; spec.dim()];
        let mut y = vec![0u64; spec.dim()];
        x[0] = a.pow(k - 1) - 1;
        y[0] = a.pow(k - 1);
        if !spec.lattice_is_cell(k, &x) || !spec.lattice_is_cell(k, &y) {
            return Err(Error::Geometry(format!("bottom-edge interface pair at depth {k} is not in K")));
        }
        out.push(PointPair { depth: k, x, y });
    }
    Ok(out)
}

/// Empirical Holder ratio with the maximizing pair.
pub fn holder_ratio(
    spec: &CarpetSpec,
    f: &EvalFunction,
    consts: &GeometryConstants,
    pairs: &[PointPair],
) -> Result<HolderReport> {
    let exponent = consts.beta - consts.alpha;
    let mut best = 0.0f64;
    let mut arg: Option<&PointPair> = None;
    for pair in pairs {
        if pair.x.len() != spec.dim() || pair.y.len() != spec.dim() {
            return Err(Error::Config("pair dimension does not match spec".into()));
        }
        if pair.depth < f.depth() {
            return Err(Error::LevelMismatch { expected: f.depth(), got: pair.depth });
        }
        let d = pair.distance(spec.a());
        if d == 0.0 {
            continue;
        }
        let diff = f.eval(spec, &pair.x, pair.depth) - f.eval(spec, &pair.y, pair.depth);
        if !diff.is_finite() {
            return Err(Error::Geometry(format!("{} is not evaluable at a sampled pair", f.describe())));
        }
        let ratio = pow_abs(diff, consts.p) / d.powf(exponent);
        if ratio > best || arg.is_none() {
            best = best.max(ratio);
            arg = Some(pair);
        }
    }
    Ok(HolderReport {
        ratio: best,
        exponent,
        argmax_distance: arg.map_or(0.0, |p| p.distance(spec.a())),
        argmax: arg.cloned(),
        pairs: pairs.len(),
    })
}
