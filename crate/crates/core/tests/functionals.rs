use gsc_core::carpet::{ahlfors_scan, sample_address, Radius};
use gsc_core::functionals::*;
use gsc_core::penergy::{p_capacity, CellFunction, SolverConfig};
use gsc_core::rng::stream_rng;
use gsc_core::CarpetSpec;

const BETA: f64 = 2.09;

fn harmonic(spec: &CarpetSpec, m: u32) -> CellFunction {
    p_capacity(spec, m, &SolverConfig::with_p(2.0)).unwrap().solution.function
}

fn member(spec: &CarpetSpec, m: u32) -> EvalFunction {
    EvalFunction::cells(spec, harmonic(spec, m)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Standard-carpet cells of a level in lexicographic lattice order,
/// enumerated from the digit rule (no digit position has both digits 1).
fn carpet_cells(level: u32) -> Vec<(i64, i64)> {
    let side = 3i64.pow(level);
    let member = |mut i: i64, mut j: i64| {
        for _ in 0..level {
            if i % 3 == 1 && j % 3 == 1 {
                return false;
            }
            i /= 3;
            j /= 3;
        }
        true
    };
    let mut out = Vec::new();
    for i in 0..side {
        for j in 0..side {
            if member(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

#[test]
fn constants_give_zero() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let quad = MCQuadrature::with_samples(5, 20_000);
    let one = EvalFunction::constant(3.25);
    let cell_const = EvalFunction::cells(&sc, CellFunction::constant(&sc, 3, -1.0)).unwrap();
    for f in [&one, &cell_const] {
        let a = functional_a(&sc, f, 1, &consts, &quad).unwrap();
        assert_eq!(a, Estimate { value: 0.0, std_err: 0.0 });
        assert_eq!(annulus_a(&sc, f, 1, &consts, &quad).unwrap().value, 0.0);
        let d = poincare_deficit(&sc, f, 1, 2.0, BETA, &DeficitMode::MonteCarlo(quad.clone())).unwrap();
        assert_eq!(d.value.value, 0.0);
        let pairs = sample_pairs(&sc, 5, 100, 1).unwrap();
        assert_eq!(holder_ratio(&sc, f, &consts, &pairs).unwrap().ratio, 0.0);
    }
    let d = poincare_deficit(&sc, &cell_const, 2, 2.0, BETA, &DeficitMode::Exact).unwrap();
    assert_eq!(d.value.value, 0.0);
    let k = ks_e(&sc, &one, 0.2, 2.0, BETA / 2.0, &MCQuadrature::with_samples(5, 64)).unwrap();
    assert_eq!(k.estimate.value, 0.0);
}

#[test]
fn homogeneity_and_constant_invariance_on_shared_samples() {
    let sc = CarpetSpec::standard_carpet();
    let quad = MCQuadrature::with_samples(11, 100_000);
    let f = member(&sc, 4);
    for p in [1.5, 2.0, 3.0] {
        let consts = GeometryConstants::new(&sc, p, BETA);
        for n in [1, 2] {
            let base = ball_profile(&sc, &f, n, 2, &consts, &quad).unwrap();
            assert!(base.ball.value > 0.0);
            for (lambda, shift) in [(-2.5, 0.0), (1.0, 7.0), (0.3, -4.0)] {
                let g = f.clone().affine(lambda, shift);
                let other = ball_profile(&sc, &g, n, 2, &consts, &quad).unwrap();
                let s = lambda.abs().powf(p);
                assert!(rel(other.ball.value, s * base.ball.value) < 1e-12);
                assert!(rel(other.ball.std_err, s * base.ball.std_err) < 1e-9);
                for (x, y) in other.annuli.iter().zip(&base.annuli) {
                    assert!(rel(x.value, s * y.value) < 1e-12);
                }
            }
        }
    }
    // Scaling by 2 at p = 2 multiplies every term by exactly 4.
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let a = functional_a(&sc, &f, 2, &consts, &quad).unwrap();
    let b = functional_a(&sc, &f.clone().scale(2.0), 2, &consts, &quad).unwrap();
    assert_eq!(b.value, 4.0 * a.value);
}

#[test]
fn minkowski_holds_per_seed() {
    let sc = CarpetSpec::standard_carpet();
    let f = member(&sc, 4);
    let g = EvalFunction::coordinate(1).scale(-0.7);
    for seed in [1, 2, 3] {
        let quad = MCQuadrature::with_samples(seed, 50_000);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let consts = GeometryConstants::new(&sc, p, BETA);
            for n in [1, 2] {
                let af = functional_a(&sc, &f, n, &consts, &quad).unwrap().value;
                let ag = functional_a(&sc, &g, n, &consts, &quad).unwrap().value;
                let afg = functional_a(&sc, &f.clone().sum(g.clone()), n, &consts, &quad).unwrap().value;
                let lhs = afg.powf(1.0 / p);
                let rhs = af.powf(1.0 / p) + ag.powf(1.0 / p);
                assert!(lhs <= rhs * (1.0 + 1e-12), "seed {seed} p {p} n {n}: {lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn annuli_partition_the_ball() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let f = member(&sc, 5);
    let prof = ball_profile(&sc, &f, 2, 3, &consts, &MCQuadrature::with_samples(4, 200_000)).unwrap();
    let annuli: f64 = prof.annuli.iter().map(|e| e.value).sum();
    assert!(rel(annuli + prof.remainder.value, prof.ball.value) < 1e-12);
    let mut last = 0.0;
    for (j, s) in prof.partial_sums.iter().enumerate() {
        assert!(s.value >= last && s.value <= prof.ball.value * (1.0 + 1e-12), "partial sum {j}");
        last = s.value;
    }
    assert!(prof.remainder.value / prof.ball.value < 0.02);
    // annulus_a at level n is the first annulus of the shared run
    let a0 = annulus_a(&sc, &f, 2, &consts, &MCQuadrature::with_samples(4, 200_000)).unwrap();
    assert_eq!(a0, prof.annuli[0]);
    // weighted sums: weight 1 reproduces the last partial sum
    let w1 = prof.weighted_sum(1.0, prof.annuli.len());
    assert!(rel(w1.value, prof.partial_sums.last().unwrap().value) < 1e-12);
    assert!(rel(w1.std_err, prof.partial_sums.last().unwrap().std_err) < 1e-6);
}

#[test]
fn seeds_reproduce_and_differ() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let f = member(&sc, 3);
    let q = MCQuadrature::with_samples(9, 30_000);
    let a = functional_a(&sc, &f, 1, &consts, &q).unwrap();
    let b = functional_a(&sc, &f, 1, &consts, &q).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    let c = functional_a(&sc, &f, 1, &consts, &MCQuadrature::with_samples(10, 30_000)).unwrap();
    assert_ne!(a.value, c.value);
    assert!((a.value - c.value).abs() < 5.0 * (a.std_err + c.std_err));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let d = pool.install(|| functional_a(&sc, &f, 1, &consts, &q).unwrap());
    assert_eq!(a.value.to_bits(), d.value.to_bits());
}

#[test]
fn margin_and_geometry_errors() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let f = member(&sc, 3);
    let q = MCQuadrature::with_samples(1, 1000);
    assert!(functional_a(&sc, &f, 2, &consts, &q).is_err());
    assert!(functional_a(&sc, &f.clone().with_margin(1), 2, &consts, &q).is_ok());
    let strict = MCQuadrature { rejection_ceiling: 0.01, ..q.clone() };
    assert!(matches!(functional_a(&sc, &f, 1, &consts, &strict), Err(gsc_core::Error::Geometry(_))));
    assert!(ks_e(&sc, &f, 2.0, 2.0, 1.0, &q).is_err());
}

/// Oracle for the level-4 harmonic function at n = 2: the pair mass
/// between two level-4 cells depends only on their lattice offset, and is
/// bracketed by classifying pairs of level-6 boxes against the ball.
#[test]
fn functional_a_matches_box_bracket_oracle() {
    let sc = CarpetSpec::standard_carpet();
    let h = harmonic(&sc, 4);
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let n = 2;
    let r = consts.c / 9.0;

    let cells4 = carpet_cells(4);
    let sub = carpet_cells(2);
    let r6 = r * 729.0;
    let r6sq = r6 * r6;
    let reach = (r * 81.0).ceil() as i64 + 1;
    let width = (2 * reach + 1) as usize;
    let mut lo_table = vec![0u64; width * width];
    let mut hi_table = vec![0u64; width * width];
    for dx in -reach..=reach {
        for dy in -reach..=reach {
            let (mut lo, mut hi) = (0u64, 0u64);
            for &(ax, ay) in &sub {
                for &(bx, by) in &sub {
                    let gx = (9 * dx + bx - ax).abs();
                    let gy = (9 * dy + by - ay).abs();
                    let near = ((gx - 1).max(0).pow(2) + (gy - 1).max(0).pow(2)) as f64;
                    let far = ((gx + 1).pow(2) + (gy + 1).pow(2)) as f64;
                    if far <= r6sq {
                        lo += 1;
                    }
                    if near <= r6sq {
                        hi += 1;
                    }
                }
            }
            let idx = ((dx + reach) as usize) * width + (dy + reach) as usize;
            lo_table[idx] = lo;
            hi_table[idx] = hi;
        }
    }
    let (mut lower, mut upper) = (0.0, 0.0);
    for (u, &(xi, xj)) in cells4.iter().enumerate() {
        for (v, &(yi, yj)) in cells4.iter().enumerate() {
            let (dx, dy) = (yi - xi, yj - xj);
            if dx.abs() > reach || dy.abs() > reach {
                continue;
            }
            let g = (h.values[u] - h.values[v]).powi(2);
            let idx = ((dx + reach) as usize) * width + (dy + reach) as usize;
            lower += g * lo_table[idx] as f64;
            upper += g * hi_table[idx] as f64;
        }
    }
    let pair_mass = 8f64.powi(-12);
    let pre = 3f64.powf((consts.alpha + consts.beta) * n as f64);
    let (lower, upper) = (lower * pair_mass * pre, upper * pair_mass * pre);
    assert!(lower > 0.0 && upper / lower < 1.2, "{lower} {upper}");

    let f = EvalFunction::cells(&sc, h).unwrap();
    let est = functional_a(&sc, &f, n, &consts, &MCQuadrature::with_samples(20240917, 1 << 20)).unwrap();
    assert!(
        est.value >= lower - 3.0 * est.std_err && est.value <= upper + 3.0 * est.std_err,
        "estimate {} +- {} outside [{lower}, {upper}]",
        est.value,
        est.std_err
    );
}

#[test]
fn poincare_exact_matches_monte_carlo() {
    let sc = CarpetSpec::standard_carpet();
    let f = member(&sc, 3);
    let exact = poincare_deficit(&sc, &f, 1, 2.0, BETA, &DeficitMode::Exact).unwrap();
    assert!(exact.value.value > 0.0 && exact.exact);
    let mc = poincare_deficit(&sc, &f, 1, 2.0, BETA, &DeficitMode::MonteCarlo(MCQuadrature::with_samples(3, 100_000)))
        .unwrap();
    assert!((mc.value.value - exact.value.value).abs() <= 3.0 * mc.value.std_err, "{mc:?} vs {exact:?}");
    // a level-n function is constant on level-n cells
    let coarse = EvalFunction::cells(&sc, harmonic(&sc, 2)).unwrap();
    assert_eq!(poincare_deficit(&sc, &coarse, 2, 2.0, BETA, &DeficitMode::Exact).unwrap().value.value, 0.0);
    // direct finite sum
    let h = harmonic(&sc, 3);
    let cells3 = carpet_cells(3);
    let mut avg = std::collections::HashMap::<(i64, i64), (f64, f64)>::new();
    for (v, &(i, j)) in cells3.iter().enumerate() {
        let e = avg.entry((i / 9, j / 9)).or_default();
        e.0 += h.values[v];
        e.1 += 1.0;
    }
    let sum: f64 = cells3
        .iter()
        .enumerate()
        .map(|(v, &(i, j))| {
            let (s, c) = avg[&(i / 9, j / 9)];
            (h.values[v] - s / c).powi(2)
        })
        .sum();
    let direct = 3f64.powf(BETA) * sum / 512.0;
    assert!(rel(direct, exact.value.value) < 1e-12);
}

#[test]
fn holder_member_is_stable_and_negative_control_blows_up() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let f = member(&sc, 6);
    let small = holder_ratio(&sc, &f, &consts, &sample_pairs(&sc, 6, 2_000, 17).unwrap()).unwrap();
    let large = holder_ratio(&sc, &f, &consts, &sample_pairs(&sc, 6, 20_000, 17).unwrap()).unwrap();
    assert!(small.ratio > 0.0);
    assert!(large.ratio >= small.ratio && large.ratio < 1.25 * small.ratio, "{small:?} {large:?}");

    let cells1 = carpet_cells(1);
    let step: Vec<f64> = cells1.iter().map(|&(i, _)| if i == 0 { 1.0 } else { 0.0 }).collect();
    let control = EvalFunction::cells(&sc, CellFunction::new(&sc, 1, step).unwrap()).unwrap();
    let pairs = interface_pairs(&sc, 2..=9).unwrap();
    let ratios: Vec<f64> = pairs
        .iter()
        .map(|p| holder_ratio(&sc, &control, &consts, std::slice::from_ref(p)).unwrap().ratio)
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] > w[0] * 1.2, "{ratios:?}");
    }
}

#[test]
fn ks_sandwich_against_grid_functional() {
    let sc = CarpetSpec::standard_carpet();
    let consts = GeometryConstants::new(&sc, 2.0, BETA);
    let f = member(&sc, 5);
    let mut rng = stream_rng(99, 0);
    let centers: Vec<_> = (0..200).map(|_| sample_address(&sc, 8, &mut rng)).collect();
    let mut radii: Vec<Radius> = (1..=4).map(|k| Radius::inverse_power(3, k)).collect();
    radii.push(Radius::real(consts.c / 9.0));
    radii.push(Radius::real(consts.c / 27.0));
    let scan = ahlfors_scan(&sc, &centers, &radii, 7, 1 << 24).unwrap();
    let cab = consts.c.powf(consts.alpha + consts.beta);
    let n = 2;
    let a = functional_a(&sc, &f, n, &consts, &MCQuadrature::with_samples(7, 1 << 18)).unwrap();
    let e = ks_e(&sc, &f, consts.c / 9.0, 2.0, BETA / 2.0, &MCQuadrature::with_samples(7, 1 << 11)).unwrap();
    let ratio = e.estimate.value / a.value;
    let (lo, hi) = (1.0 / (scan.c_plus * cab), 1.0 / (scan.c_minus * cab));
    assert!(ratio >= lo / 1.5 && ratio <= hi * 1.5, "ratio {ratio} band [{lo}, {hi}]");
}
