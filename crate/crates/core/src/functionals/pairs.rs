//! Ball and annulus pair integrals.
//!
//! `x` is the anchor of a uniform depth-`m_s` cell. `y` is proposed
//! uniformly from the lattice box of half-width `ceil(c a^{m_s - n})`
//! around `x` (clipped to the cube) and kept when it is a cell and lies in
//! the ball; the box size is the importance weight, so each sample is an
//! unbiased estimate of the double integral for the depth-`m_s` anchor
//! discretization of `mu`. The proposal never looks at `f`, so two
//! functions evaluated with the same seed see identical pairs.

use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_id, Estimate, EvalFunction, GeometryConstants, MCQuadrature, TAG_PAIRS};
use crate::carpet::{CarpetSpec, MAX_DIM};
use crate::error::{Error, Result};
use crate::penergy::pow_abs;
use crate::reduce::pairwise_sum;
use crate::rng::stream_rng;

/// Shared-sample integrals over the ball `d <= c a^{-n}` and its annuli.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallProfile {
    pub n: u32,
    /// Lattice depth of the sampled anchors.
    pub sampling_depth: u32,
    /// `m - n` for cell functions of level `m`.
    pub margin: Option<u32>,
    pub samples: u64,
    /// Fraction of proposals that landed on a cell inside the ball.
    pub acceptance: f64,
    /// `a^{(alpha + beta) n}`.
    pub prefactor: f64,
    /// Un-prefactored ball integral.
    pub ball: Estimate,
    /// `A_{n+j}` for `j = 0..=J`, from these same samples.
    pub annuli: Vec<Estimate>,
    /// `sum_{i <= j} A_{n+i}` with its own standard error.
    pub partial_sums: Vec<Estimate>,
    /// Per-sample second moments of the annulus terms.
    pub annulus_second_moments: Vec<f64>,
    /// Pairs inside `d <= c a^{-(n+J+1)}`.
    pub remainder: Estimate,
}

impl BallProfile {
    /// `A^{(n)}`.
    pub fn functional(&self) -> Estimate {
        self.ball.scaled(self.prefactor)
    }

    /// `sum_{j <= terms-1} weight^j A_{n+j}`. Every sample lands in at most
    /// one annulus, so the variance follows from the per-annulus moments.
    pub fn weighted_sum(&self, weight: f64, terms: usize) -> Estimate {
        let terms = terms.min(self.annuli.len());
        let mut mean = 0.0;
        let mut second = 0.0;
        let mut w = 1.0;
        for j in 0..terms {
            mean += w * self.annuli[j].value;
            second += w * w * self.annulus_second_moments[j];
            w *= weight;
        }
        let n = self.samples as f64;
        let var = if self.samples > 1 { ((second - mean * mean) * n / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { value: mean, std_err: (var / n).sqrt() }
    }
}

/// `A^{(n)}(f) = a^{(alpha+beta) n} int int_{d < c a^{-n}} |f(x) - f(y)|^p`.
pub fn functional_a(
    spec: &CarpetSpec,
    f: &EvalFunction,
    n: u32,
    consts: &GeometryConstants,
    quad: &MCQuadrature,
) -> Result<Estimate> {
    Ok(ball_profile(spec, f, n, 0, consts, quad)?.functional())
}

/// `A_n(f)`, the annulus between radii `c a^{-n}` and `c a^{-(n+1)}`, on
/// the same samples as [`functional_a`] at level `n`.
pub fn annulus_a(
    spec: &CarpetSpec,
    f: &EvalFunction,
    n: u32,
    consts: &GeometryConstants,
    quad: &MCQuadrature,
) -> Result<Estimate> {
    Ok(ball_profile(spec, f, n, 0, consts, quad)?.annuli[0])
}

/// One sampling run at level `n` that tallies the ball, the annuli
/// `j = 0..=depth` and the remainder inside the last annulus.
pub fn ball_profile(
    spec: &CarpetSpec,
    f: &EvalFunction,
    n: u32,
    depth: u32,
    consts: &GeometryConstants,
    quad: &MCQuadrature,
) -> Result<BallProfile> {
    spec.require_valid()?;
    consts.check(spec)?;
    quad.check()?;
    f.check_level(n)?;
    let sampler = BoxSampler::new(spec, n, f.depth(), consts.c, quad)?;
    let a = spec.a() as f64;
    let scale = a.powi(sampler.depth as i32);
    // Squared radii in lattice units: index j is c a^{-(n+j)}.
    let radii2: Vec<f64> = (0..=depth + 1)
        .map(|j| {
            let r = consts.c * scale * a.powi(-((n + j) as i32));
            r * r
        })
        .collect();
    let slots = depth as usize + 1;
    // Per block: ball, annuli, partial sums, remainder (sum and sum of squares).
    let width = 2 * (2 * slots + 2);
    let blocks = quad.blocks();
    let per_block: Vec<(Vec<f64>, u64)> = blocks
        .par_iter()
        .map(|&(b, count)| {
            let mut rng = stream_rng(quad.seed, stream_id(TAG_PAIRS, n, b));
            let mut acc = vec![0.0; width];
            let mut accepted = 0u64;
            let tally = |k: usize, z: f64, acc: &mut [f64]| {
                acc[2 * k] += z;
                acc[2 * k + 1] += z * z;
            };
            let mut x = [0u64; MAX_DIM];
            let mut y = [0u64; MAX_DIM];
            for _ in 0..count {
                let prop = sampler.draw(&mut rng, &mut x, &mut y);
                // Bucket of the pair: 0..slots for annuli, `slots` for the remainder.
                let (z, bucket) = match prop {
                    Some((w, d2)) if d2 as f64 <= radii2[0] => {
                        accepted += 1;
                        let fx = f.eval(spec, &x[..sampler.dim], sampler.depth);
                        let fy = f.eval(spec, &y[..sampler.dim], sampler.depth);
                        let z = w * pow_abs(fx - fy, consts.p);
                        let bucket = radii2[1..].iter().take_while(|&&r2| d2 as f64 <= r2).count();
                        (z, Some(bucket))
                    }
                    _ => (0.0, None),
                };
                tally(0, z, &mut acc);
                for j in 0..slots {
                    let inside = bucket == Some(j);
                    tally(1 + j, if inside { z } else { 0.0 }, &mut acc);
                    let partial = bucket.is_some_and(|bk| bk <= j);
                    tally(1 + slots + j, if partial { z } else { 0.0 }, &mut acc);
                }
                tally(1 + 2 * slots, if bucket == Some(slots) { z } else { 0.0 }, &mut acc);
            }
            (acc, accepted)
        })
        .collect();
    let moment = |k: usize| {
        let s: Vec<f64> = per_block.iter().map(|(acc, _)| acc[k]).collect();
        pairwise_sum(&s)
    };
    let est = |slot: usize| Estimate::from_moments(moment(2 * slot), moment(2 * slot + 1), quad.samples);
    let accepted: u64 = per_block.iter().map(|(_, c)| c).sum();
    let acceptance = accepted as f64 / quad.samples as f64;
    if 1.0 - acceptance > quad.rejection_ceiling {
        return Err(Error::Geometry(format!(
            "pair rejection rate {:.4} exceeds the ceiling {} at level {n}",
            1.0 - acceptance,
            quad.rejection_ceiling
        )));
    }
    let ball = est(0);
    if !ball.value.is_finite() {
        return Err(Error::Geometry(format!("{} is not evaluable at sampled anchors", f.describe())));
    }
    Ok(BallProfile {
        n,
        sampling_depth: sampler.depth,
        margin: (f.depth() > 0).then(|| f.depth().saturating_sub(n)),
        samples: quad.samples,
        acceptance,
        prefactor: consts.prefactor(spec.a(), n),
        ball,
        annuli: (0..slots).map(|j| est(1 + j)).collect(),
        partial_sums: (0..slots).map(|j| est(1 + slots + j)).collect(),
        annulus_second_moments: (0..slots).map(|j| moment(2 * (1 + j) + 1) / quad.samples as f64).collect(),
        remainder: est(1 + 2 * slots),
    })
}

/// Uniform cell anchors paired with box proposals.
pub(crate) struct BoxSampler<'s> {
    spec: &'s CarpetSpec,
    pub dim: usize,
    pub depth: u32,
    side: u64,
    half_width: u64,
    /// `N^{-depth}`.
    cell_mass: f64,
}

impl<'s> BoxSampler<'s> {
    /// Proposal box sized for radius `c a^{-n}`.
    pub fn new(spec: &'s CarpetSpec, n: u32, f_depth: u32, c: f64, quad: &MCQuadrature) -> Result<Self> {
        let depth = (n + quad.depth_offset).max(f_depth);
        BoxSampler::with_radius(spec, depth, c * (spec.a() as f64).powi(-(n as i32)))
    }

    pub fn with_radius(spec: &'s CarpetSpec, depth: u32, radius: f64) -> Result<Self> {
        let side = spec.side(depth)?;
        spec.lattice_key(depth, &vec![0; spec.dim()])?;
        let reach = (radius * side as f64).ceil();
        if !(reach >= 0.0) || !reach.is_finite() {
            return Err(Error::Config(format!("radius {radius} is not usable for sampling")));
        }
        Ok(BoxSampler {
            spec,
            dim: spec.dim(),
            depth,
            side,
            half_width: (reach as u64).min(side),
            cell_mass: (spec.n_star() as f64).powi(-(depth as i32)),
        })
    }

    /// Draws `x` (uniform cell anchor) into `x`.
    pub fn draw_x<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [u64; MAX_DIM]) {
        let a = self.spec.a() as u64;
        x[..self.dim].iter_mut().for_each(|v| *v = 0);
        for _ in 0..self.depth {
            let d = &self.spec.digits()[rng.random_range(0..self.spec.n_star())];
            for k in 0..self.dim {
                x[k] = x[k] * a + d[k] as u64;
            }
        }
    }

    /// Proposes `y` near the current `x`. On a cell, returns the importance
    /// weight `|box| N^{-depth}` and the squared lattice distance.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R, x: &[u64; MAX_DIM], y: &mut [u64; MAX_DIM]) -> Option<(f64, u128)> {
        let mut boxsize = 1.0;
        let mut d2 = 0u128;
        for k in 0..self.dim {
            let lo = x[k].saturating_sub(self.half_width);
            let hi = (x[k] + self.half_width).min(self.side - 1);
            boxsize *= (hi - lo + 1) as f64;
            y[k] = rng.random_range(lo..=hi);
            let diff = x[k].abs_diff(y[k]) as u128;
            d2 += diff * diff;
        }
        self.spec
            .lattice_is_cell(self.depth, &y[..self.dim])
            .then_some((boxsize * self.cell_mass, d2))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [u64; MAX_DIM], y: &mut [u64; MAX_DIM]) -> Option<(f64, u128)> {
        self.draw_x(rng, x);
        self.propose(rng, x, y)
    }
}
