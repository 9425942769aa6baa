use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairs::BoxSampler;
use super::{stream_id, Estimate, EvalFunction, MCQuadrature, TAG_KS};
use crate::carpet::{measure_ball, sample_address, CarpetSpec, Radius, MAX_DIM};
use crate::error::{Error, Result};
use crate::penergy::pow_abs;
use crate::reduce::pairwise_sum;
use crate::rng::stream_rng;

/// Inner `y` proposals per outer point.
pub const KS_INNER: u64 = 32;
/// Ball masses are bracketed this many levels below the radius scale.
pub const KS_BRACKET_EXTRA: u32 = 4;
const BRACKET_BUDGET: u64 = 1 << 26;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsEstimate {
    pub r: f64,
    pub p: f64,
    pub delta: f64,
    /// Estimate with the bracket half-width folded into the error bar.
    pub estimate: Estimate,
    /// Monte-Carlo part of the error alone.
    pub mc_std_err: f64,
    /// Half the spread between the estimates built from upper and lower ball masses.
    pub bracket_half_width: f64,
    pub bracket_level: u32,
    /// Outer points; each carries `inner` proposals.
    pub samples: u64,
    pub inner: u64,
    pub sampling_depth: u32,
}

/// `E_{p,delta}(f, r) = r^{-p delta} int avg_{B(x,r)} |f(x) - f(y)|^p dmu(y) dmu(x)`.
///
/// `quad.samples` counts outer points. Each ball mass is the midpoint of
/// its bracket; a bracket wider than half the midpoint is an error.
pub fn ks_e(
    spec: &CarpetSpec,
    f: &EvalFunction,
    r: f64,
    p: f64,
    delta: f64,
    quad: &MCQuadrature,
) -> Result<KsEstimate> {
    spec.require_valid()?;
    quad.check()?;
    let dim = spec.dim();
    if !(r > 0.0) || r > (dim as f64).sqrt() {
        return Err(Error::Config(format!("radius {r} must lie in (0, sqrt(D)]")));
    }
    if !(p >= 1.0) || !delta.is_finite() {
        return Err(Error::Config(format!("need p >= 1 and finite delta (p = {p}, delta = {delta})")));
    }
    let a = spec.a() as f64;
    let scale_level = (1.0 / r).log(a).floor().max(0.0) as u32;
    f.check_level(scale_level)?;
    let depth = (scale_level + quad.depth_offset).max(f.depth());
    let sampler = BoxSampler::with_radius(spec, depth, r)?;
    let bracket_level = scale_level + KS_BRACKET_EXTRA;
    let r_lattice = r * a.powi(depth as i32);
    let r2 = r_lattice * r_lattice;
    let radius = Radius::real(r);

    // Per block: sums of mid, mid^2, low and high values.
    let per_block: Vec<Result<[f64; 4]>> = quad
        .blocks()
        .par_iter()
        .map(|&(b, count)| {
            let mut rng = stream_rng(quad.seed, stream_id(TAG_KS, scale_level, b));
            let mut acc = [0.0; 4];
            let mut x = [0u64; MAX_DIM];
            let mut y = [0u64; MAX_DIM];
            for _ in 0..count {
                let center = sample_address(spec, depth, &mut rng);
                x[..dim].copy_from_slice(&center.anchor);
                let fx = f.eval(spec, &x[..dim], depth);
                let mut inner = 0.0;
                for _ in 0..KS_INNER {
                    if let Some((w, d2)) = sampler.propose(&mut rng, &x, &mut y) {
                        if d2 as f64 <= r2 {
                            inner += w * pow_abs(fx - f.eval(spec, &y[..dim], depth), p);
                        }
                    }
                }
                inner /= KS_INNER as f64;
                let mass = measure_ball(spec, &center, radius, bracket_level, BRACKET_BUDGET)?;
                let mid = mass.midpoint();
                if !(mass.lower > 0.0) || mass.width() > 0.5 * mid {
                    return Err(Error::Geometry(format!(
                        "ball mass bracket [{}, {}] at level {bracket_level} is too wide for r = {r}",
                        mass.lower, mass.upper
                    )));
                }
                let v = inner / mid;
                acc[0] += v;
                acc[1] += v * v;
                acc[2] += inner / mass.upper;
                acc[3] += inner / mass.lower;
            }
            Ok(acc)
        })
        .collect();
    let per_block: Vec<[f64; 4]> = per_block.into_iter().collect::<Result<_>>()?;
    let moment = |k: usize| pairwise_sum(&per_block.iter().map(|acc| acc[k]).collect::<Vec<_>>());
    let norm = r.powf(-p * delta);
    let count = quad.samples as f64;
    let mc = Estimate::from_moments(moment(0), moment(1), quad.samples).scaled(norm);
    let bracket_half_width = 0.5 * (moment(3) - moment(2)) / count * norm;
    if !mc.value.is_finite() {
        return Err(Error::Geometry(format!("{} is not evaluable at sampled anchors", f.describe())));
    }
    Ok(KsEstimate {
        r,
        p,
        delta,
        estimate: Estimate {
            value: mc.value,
            std_err: (mc.std_err * mc.std_err + bracket_half_width * bracket_half_width).sqrt(),
        },
        mc_std_err: mc.std_err,
        bracket_half_width,
        bracket_level,
        samples: quad.samples,
        inner: KS_INNER,
        sampling_depth: depth,
    })
}
