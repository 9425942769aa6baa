use std::cmp::Ordering;

use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CarpetSpec, Word};
use crate::error::{Error, Result};

/// Mass `N_*^{-n}` of one level-`n` cell under the self-similar measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMass {
    pub level: u32,
    pub n_star: u64,
}

impl CellMass {
    pub fn value(&self) -> f64 {
        match self.denominator() {
            Some(den) => 1.0 / den as f64,
            None => (self.n_star as f64).powi(-(self.level as i32)),
        }
    }

    /// `N_*^n` when it fits in `u128`; the mass is exactly `1 / N_*^n`.
    pub fn denominator(&self) -> Option<u128> {
        (self.n_star as u128).checked_pow(self.level)
    }
}

pub fn cell_measure(spec: &CarpetSpec, n: u32) -> CellMass {
    CellMass { level: n, n_star: spec.n_star() as u64 }
}

/// A point of `K` at finite depth: the word `w` and its anchor
/// `F_w(0) = anchor / a^depth`, exact in integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Address {
    pub depth: u32,
    pub word: Word,
    /// Anchor numerators; the anchor is `anchor[k] / a^depth`.
    pub anchor: Vec<u64>,
}

impl Address {
    pub fn from_word(spec: &CarpetSpec, word: Word) -> Result<Address> {
        let cell = super::cell_of_word(spec, &word)?;
        Ok(Address { depth: cell.level, word, anchor: cell.lattice })
    }

    pub fn coords(&self, spec: &CarpetSpec) -> Vec<f64> {
        let side = (spec.a() as f64).powi(self.depth as i32);
        self.anchor.iter().map(|&i| i as f64 / side).collect()
    }

    /// Truncation to the first `depth` digits.
    pub fn truncate(&self, spec: &CarpetSpec, depth: u32) -> Address {
        let depth = depth.min(self.depth);
        let scale = (spec.a() as u64).pow(self.depth - depth);
        Address {
            depth,
            word: Word(self.word.0[..depth as usize].to_vec()),
            anchor: self.anchor.iter().map(|&i| i / scale).collect(),
        }
    }

    /// Appends `extra` i.i.d. uniform digits.
    pub fn extend<R: Rng + ?Sized>(&self, spec: &CarpetSpec, extra: u32, rng: &mut R) -> Address {
        let a = spec.a() as u64;
        let mut out = self.clone();
        for _ in 0..extra {
            let w = rng.random_range(0..spec.n_star());
            out.word.0.push(w);
            for (i, &x) in out.anchor.iter_mut().zip(&spec.digits()[w]) {
                *i = *i * a + x as u64;
            }
        }
        out.depth += extra;
        out
    }
}

/// Draws `depth` i.i.d. digits uniform on `S`; the anchor law approximates
/// the self-similar measure to within `sqrt(D) a^{-depth}`.
pub fn sample_address<R: Rng + ?Sized>(spec: &CarpetSpec, depth: u32, rng: &mut R) -> Address {
    let root = Address { depth: 0, word: Word::default(), anchor: vec![0; spec.dim()] };
    root.extend(spec, depth, rng)
}

/// A ball radius: exact rationals are compared exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Radius {
    Rational { num: u64, den: u64 },
    Real { value: f64 },
}

impl Radius {
    pub fn rational(num: u64, den: u64) -> Radius {
        Radius::Rational { num, den }
    }

    pub fn real(value: f64) -> Radius {
        Radius::Real { value }
    }

    /// `a^{-k}` as an exact rational.
    pub fn inverse_power(a: u32, k: u32) -> Radius {
        Radius::Rational { num: 1, den: (a as u64).pow(k) }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Radius::Rational { num, den } => num as f64 / den as f64,
            Radius::Real { value } => value,
        }
    }
}

/// Compares squared integer distances at lattice scale `a^M` with `r^2`.
enum Threshold {
    Exact { den2: u128, rhs: u128 },
    Real(f64),
}

impl Threshold {
    fn new(radius: Radius, scale: u64, dim: usize) -> Result<Threshold> {
        let overflow = || Error::Config(format!("ball radius {radius:?} at lattice scale {scale} overflows exact arithmetic"));
        match radius {
            Radius::Rational { num, den } => {
                if den == 0 {
                    return Err(Error::Config("radius denominator is zero".into()));
                }
                let s2 = (scale as u128).checked_mul(scale as u128).ok_or_else(overflow)?;
                let den2 = (den as u128).checked_mul(den as u128).ok_or_else(overflow)?;
                let rhs = (num as u128)
                    .checked_mul(num as u128)
                    .and_then(|n2| n2.checked_mul(s2))
                    .ok_or_else(overflow)?;
                // Largest squared distance is dim * scale^2.
                s2.checked_mul(dim as u128).and_then(|m| m.checked_mul(den2)).ok_or_else(overflow)?;
                Ok(Threshold::Exact { den2, rhs })
            }
            Radius::Real { value } => {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(Error::Config(format!("radius {value} must be finite and >= 0")));
                }
                let r = value * scale as f64;
                Ok(Threshold::Real(r * r))
            }
        }
    }

    /// Ordering of `d2` (squared distance at scale) against `r^2`.
    fn cmp(&self, d2: u128) -> Ordering {
        match *self {
            Threshold::Exact { den2, rhs } => (d2 * den2).cmp(&rhs),
            Threshold::Real(r2) => (d2 as f64).partial_cmp(&r2).unwrap_or(Ordering::Greater),
        }
    }
}

/// Lower/upper bracket on `mu(B(center, radius))` from level-`level` boxes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallMassBracket {
    pub center: Address,
    pub radius: f64,
    pub level: u32,
    pub lower: f64,
    pub upper: f64,
    /// Boxes examined.
    pub visited: u64,
}

impl BallMassBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Brackets the mass of the open ball by descending the cell tree.
///
/// A box counts toward `lower` when its farthest point is strictly inside
/// the ball and toward `upper` when its nearest point is within distance
/// `radius` (closed contact counts). Boxes straddling the sphere are
/// refined down to `level`.
pub fn measure_ball(
    spec: &CarpetSpec,
    center: &Address,
    radius: Radius,
    level: u32,
    budget: u64,
) -> Result<BallMassBracket> {
    let dim = spec.dim();
    if center.anchor.len() != dim {
        return Err(Error::Config("center dimension does not match spec".into()));
    }
    let scale_level = level.max(center.depth);
    let scale = spec.side(scale_level)?;
    let lift = (spec.a() as u64).pow(scale_level - center.depth);
    let c: Vec<u64> = center.anchor.iter().map(|&i| i * lift).collect();
    let threshold = Threshold::new(radius, scale, dim)?;
    let make = |lower: f64, upper: f64, visited: u64| BallMassBracket {
        center: center.clone(),
        radius: radius.value(),
        level,
        lower,
        upper,
        visited,
    };

    // A ball reaching every corner of the cube covers K up to a null set.
    let (_, far0) = box_distances(&c, &vec![0; dim], scale);
    if threshold.cmp(far0) != Ordering::Greater || radius.value() * radius.value() >= dim as f64 {
        return Ok(make(1.0, 1.0, 1));
    }

    let a = spec.a() as u64;
    let mut lower_counts = vec![0u128; level as usize + 1];
    let mut upper_counts = vec![0u128; level as usize + 1];
    let mut visited: u64 = 0;
    let mut stack: Vec<(u32, Vec<u64>)> = vec![(0, vec![0; dim])];
    let mut child = vec![0u64; dim];
    while let Some((l, lat)) = stack.pop() {
        if l == level {
            // Level-0 box straddles the sphere here (level == 0 case).
            upper_counts[0] += 1;
            continue;
        }
        let box_side = a.pow(scale_level - l - 1);
        for d in spec.digits() {
            visited += 1;
            if visited > budget {
                return Err(Error::Budget { what: "ball bracket boxes", needed: visited as u128, budget: budget as u128 });
            }
            for k in 0..dim {
                child[k] = lat[k] * a + d[k] as u64;
            }
            let (near, far) = box_distances(&c, &child, box_side);
            if threshold.cmp(far) == Ordering::Less {
                lower_counts[l as usize + 1] += 1;
                upper_counts[l as usize + 1] += 1;
            } else if threshold.cmp(near) == Ordering::Greater {
                // disjoint
            } else if l + 1 == level {
                upper_counts[level as usize] += 1;
            } else {
                stack.push((l + 1, child.clone()));
            }
        }
    }
    let n = spec.n_star() as u128;
    let lower = counts_to_mass(&lower_counts, n);
    let upper = counts_to_mass(&upper_counts, n);
    Ok(make(lower, upper, visited))
}

/// Squared nearest and farthest distances (at scale) from `c` to the box
/// with lattice corner `lat` and side `side` (in scale units).
fn box_distances(c: &[u64], lat: &[u64], side: u64) -> (u128, u128) {
    let mut near = 0u128;
    let mut far = 0u128;
    for (&ck, &lk) in c.iter().zip(lat) {
        let lo = lk * side;
        let hi = lo + side;
        let dn = if ck < lo {
            lo - ck
        } else if ck > hi {
            ck - hi
        } else {
            0
        };
        let df = (ck.abs_diff(lo)).max(ck.abs_diff(hi));
        near += (dn as u128) * (dn as u128);
        far += (df as u128) * (df as u128);
    }
    (near, far)
}

/// `sum_l counts[l] N^{-l}`, exact over a common denominator when possible.
fn counts_to_mass(counts: &[u128], n: u128) -> f64 {
    let top = counts.len() as u32 - 1;
    if let Some(den) = n.checked_pow(top) {
        let mut num: u128 = 0;
        for (l, &cnt) in counts.iter().enumerate() {
            let w = n.pow(top - l as u32);
            num = match cnt.checked_mul(w).and_then(|t| num.checked_add(t)) {
                Some(v) => v,
                None => return counts_to_mass_f64(counts, n),
            };
        }
        return num as f64 / den as f64;
    }
    counts_to_mass_f64(counts, n)
}

fn counts_to_mass_f64(counts: &[u128], n: u128) -> f64 {
    let terms: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(l, &c)| c as f64 * (n as f64).powi(-(l as i32)))
        .collect();
    crate::reduce::pairwise_sum(&terms)
}

/// Empirical Ahlfors-regularity constants for one radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadiusRow {
    pub radius: f64,
    /// min / max over centers of `midpoint mass / r^alpha`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_width: f64,
    pub max_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AhlforsScan {
    pub alpha: f64,
    pub level: u32,
    pub centers: usize,
    pub rows: Vec<RadiusRow>,
    /// Empirical lower constant `C-` (minimum ratio over all rows).
    pub c_minus: f64,
    /// Empirical upper constant `C+`.
    pub c_plus: f64,
}

impl AhlforsScan {
    pub fn spread(&self) -> f64 {
        self.c_plus / self.c_minus
    }
}

/// Scans `mu(B(x, r)) / r^alpha` over centers and radii.
pub fn ahlfors_scan(
    spec: &CarpetSpec,
    centers: &[Address],
    radii: &[Radius],
    level: u32,
    budget: u64,
) -> Result<AhlforsScan> {
    if centers.is_empty() || radii.is_empty() {
        return Err(Error::Config("ahlfors scan needs at least one center and one radius".into()));
    }
    let alpha = spec.alpha();
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let brackets: Vec<BallMassBracket> = centers
            .par_iter()
            .map(|x| measure_ball(spec, x, r, level, budget))
            .collect::<Result<_>>()?;
        let scale = r.value().powf(alpha);
        let ratios: Vec<f64> = brackets.iter().map(|b| b.midpoint() / scale).collect();
        let widths: Vec<f64> = brackets.iter().map(|b| b.width()).collect();
        rows.push(RadiusRow {
            radius: r.value(),
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            mean_width: crate::reduce::pairwise_sum(&widths) / widths.len() as f64,
            max_width: widths.iter().copied().fold(0.0, f64::max),
        });
    }
    let c_minus = rows.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    let c_plus = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    Ok(AhlforsScan { alpha, level, centers: centers.len(), rows, c_minus, c_plus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn origin(spec: &CarpetSpec, depth: u32) -> Address {
        Address::from_word(spec, Word(vec![0; depth as usize])).unwrap()
    }

    #[test]
    fn cell_masses() {
        let sc = CarpetSpec::standard_carpet();
        assert_eq!(cell_measure(&sc, 0).value(), 1.0);
        assert_eq!(cell_measure(&sc, 1).value(), 0.125);
        assert_eq!(cell_measure(&sc, 3).value(), 1.0 / 512.0);
        for n in 0..=8 {
            let m = cell_measure(&sc, n);
            // N^n cells of mass exactly 1/N^n.
            assert_eq!(m.denominator(), Some(8u128.pow(n)));
            let total = crate::reduce::pairwise_sum(&vec![m.value(); 8usize.pow(n)]);
            assert_eq!(total, 1.0);
        }
        let menger = CarpetSpec::menger_sponge();
        for n in 0..=5 {
            let m = cell_measure(&menger, n);
            assert_eq!(m.denominator(), Some(20u128.pow(n)));
            let total = crate::reduce::compensated_sum(&vec![m.value(); 20usize.pow(n)]);
            assert!((total - 1.0).abs() <= f64::EPSILON, "{total}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let sc = CarpetSpec::standard_carpet();
        let a = sample_address(&sc, 8, &mut stream_rng(7, 0));
        let b = sample_address(&sc, 8, &mut stream_rng(7, 0));
        assert_eq!(a, b);
        let c = sample_address(&sc, 8, &mut stream_rng(7, 1));
        assert_ne!(a, c);
    }

    #[test]
    fn extension_moves_anchor_by_at_most_cell_diameter() {
        let sc = CarpetSpec::standard_carpet();
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let x = sample_address(&sc, 4, &mut rng);
            let y = x.extend(&sc, 5, &mut rng);
            assert_eq!(y.truncate(&sc, 4), x);
            let d: f64 = x.coords(&sc).iter().zip(y.coords(&sc)).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            assert!(d <= 2f64.sqrt() * 3f64.powi(-4));
        }
    }

    #[test]
    fn big_ball_has_full_mass() {
        let sc = CarpetSpec::standard_carpet();
        let x = origin(&sc, 5);
        for r in [Radius::real(2f64.sqrt()), Radius::real(1.5), Radius::rational(3, 2)] {
            let b = measure_ball(&sc, &x, r, 4, 1 << 20).unwrap();
            assert_eq!((b.lower, b.upper), (1.0, 1.0));
        }
    }

    #[test]
    fn origin_ball_level_one() {
        let sc = CarpetSpec::standard_carpet();
        let b = measure_ball(&sc, &origin(&sc, 3), Radius::rational(1, 3), 1, 1 << 20).unwrap();
        assert_eq!(b.lower, 0.0);
        assert_eq!(b.upper, 3.0 / 8.0);
    }

    #[test]
    fn brackets_nest_and_tighten() {
        let sc = CarpetSpec::standard_carpet();
        let mut rng = stream_rng(11, 0);
        for _ in 0..20 {
            let x = sample_address(&sc, 6, &mut rng);
            for r in [Radius::rational(1, 3), Radius::rational(2, 9), Radius::real(0.123)] {
                let mut prev = (0.0, 1.0);
                for level in 0..=6 {
                    let b = measure_ball(&sc, &x, r, level, 1 << 24).unwrap();
                    assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0);
                    assert!(b.lower >= prev.0 && b.upper <= prev.1, "level {level}: {b:?} vs {prev:?}");
                    prev = (b.lower, b.upper);
                }
            }
        }
        let b = measure_ball(&sc, &origin(&sc, 3), Radius::rational(1, 3), 4, 1 << 20).unwrap();
        assert!(b.width() < 0.1, "{b:?}");
    }

    #[test]
    fn brackets_monotone_in_radius() {
        let sc = CarpetSpec::standard_carpet();
        let x = sample_address(&sc, 6, &mut stream_rng(5, 2));
        let mut prev = (0.0, 0.0);
        for k in 1..=30 {
            let b = measure_ball(&sc, &x, Radius::rational(k, 30), 4, 1 << 20).unwrap();
            assert!(b.lower >= prev.0 && b.upper >= prev.1);
            prev = (b.lower, b.upper);
        }
    }

    #[test]
    fn budget_error() {
        let sc = CarpetSpec::standard_carpet();
        let r = measure_ball(&sc, &origin(&sc, 3), Radius::rational(1, 3), 9, 50);
        assert!(matches!(r, Err(Error::Budget { .. })));
    }

    #[test]
    fn unit_radius_covering_ball_has_ratio_one() {
        let sc = CarpetSpec::standard_carpet();
        // Word (1,0)(0,2)(0,2)...: anchor near (1/3, 1/3), within distance 1 of every corner.
        let mut w = vec![sc.digit_index(&[1, 0]).unwrap()];
        w.extend(std::iter::repeat_n(sc.digit_index(&[0, 2]).unwrap(), 5));
        let x = Address::from_word(&sc, Word(w)).unwrap();
        let scan = ahlfors_scan(&sc, &[x], &[Radius::rational(1, 1)], 4, 1 << 20).unwrap();
        assert_eq!(scan.rows[0].min_ratio, 1.0);
        assert_eq!(scan.rows[0].max_ratio, 1.0);
    }
}
