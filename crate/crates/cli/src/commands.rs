use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use gsc_core::functionals::{
    ball_profile, default_c, ks_e, poincare_deficit, DeficitMode, EvalFunction, FunctionalRow, GeometryConstants,
    MCQuadrature, FUNCTIONAL_CSV_HEADER,
};
use gsc_core::graph::build_level_graph;
use gsc_core::penergy::{estimate_rho_beta, p_capacity, SolverConfig};
use gsc_core::verify::{run_suite, VerifyConfig};
use gsc_core::{CarpetSpec, Error, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Command;

/// JSON envelope shared by all artifacts.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    /// Seconds; only with `--timing`.
    wall_time: Option<f64>,
    result: T,
}

struct Writer<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    start: Instant,
}

impl Writer<'_> {
    fn wall_time(&self) -> Option<f64> {
        self.config.timing.then(|| self.start.elapsed().as_secs_f64())
    }

    fn json<T: Serialize>(&self, name: &str, result: T) -> Result<()> {
        let artifact = Artifact {
            version: &self.config.version,
            seed: self.config.seed,
            config: self.config,
            wall_time: self.wall_time(),
            result,
        };
        std::fs::write(self.out.join(name), serde_json::to_string_pretty(&artifact)? + "\n")?;
        Ok(())
    }

    /// CSV with a leading `#` line carrying version, seed and config.
    fn csv(&self, name: &str, body: &str) -> Result<()> {
        let line = format!(
            "# gsc {} seed={} config={}\n",
            self.config.version,
            self.config.seed,
            serde_json::to_string(self.config)?
        );
        std::fs::write(self.out.join(name), line + body)?;
        Ok(())
    }
}

pub fn dispatch(config: &RunConfig, out: &Path) -> Result<u8> {
    let w = Writer { config, out, start: Instant::now() };
    let spec = &config.spec;
    match &config.command {
        Command::Validate => validate(&w, spec),
        Command::Graph { n } => graph(&w, spec, *n),
        Command::Solve { p, n, max_iter, grad_tol } => {
            let mut solver = SolverConfig::with_p(*p);
            if let Some(m) = max_iter {
                solver.max_iter = *m;
            }
            if let Some(t) = grad_tol {
                solver.grad_tol = *t;
            }
            solve(&w, spec, *n, solver)
        }
        Command::Rho { p, levels } => rho(&w, spec, *p, &levels.levels()),
        Command::Functional { p, function, n, beta, rho_levels, samples, c, ks } => {
            let beta = match beta {
                Some(b) => *b,
                None => estimate_rho_beta(spec, *p, &rho_levels.levels(), &SolverConfig::with_p(*p))?.beta_hat,
            };
            let quad = MCQuadrature::with_samples(config.seed, *samples);
            let c = c.unwrap_or_else(|| default_c(spec.dim()));
            let consts = GeometryConstants::with_c(spec, *p, beta, c)?;
            functional(&w, spec, function, &n.levels(), &consts, &quad, *ks)
        }
        Command::Verify { p, n, member_levels, rho_levels, samples, c, stability_threshold } => {
            let cfg = VerifyConfig {
                rho_levels: rho_levels.levels(),
                member_levels: member_levels.levels(),
                n_min: n.lo,
                n_max: n.hi,
                quad: MCQuadrature::with_samples(config.seed, *samples),
                c: *c,
                stability_threshold: *stability_threshold,
                ..VerifyConfig::default()
            };
            verify(&w, spec, *p, &cfg)
        }
    }
}

fn validate(w: &Writer, spec: &CarpetSpec) -> Result<u8> {
    #[derive(Serialize)]
    struct Out<'a> {
        report: &'a gsc_core::carpet::ValidationReport,
        failed: Vec<&'static str>,
    }
    let report = spec.validation();
    w.json("validation.json", Out { report, failed: report.failed_conditions() })?;
    if report.valid {
        println!("valid");
        Ok(0)
    } else {
        println!("invalid: {}", report.failed_conditions().join(", "));
        Ok(1)
    }
}

fn graph(w: &Writer, spec: &CarpetSpec, n: u32) -> Result<u8> {
    let g = build_level_graph(spec, n)?;
    let header = g.header();
    let mut body = Vec::new();
    g.write_edge_csv(&mut body)?;
    w.csv("edges.csv", &String::from_utf8(body).expect("edge list is ASCII"))?;
    w.json("graph.json", &header)?;
    println!("n={} vertices={} edges={} max_degree={}", header.n, header.vertex_count, header.edge_count, header.max_degree);
    Ok(0)
}

fn solve(w: &Writer, spec: &CarpetSpec, n: u32, solver: SolverConfig) -> Result<u8> {
    #[derive(Serialize)]
    struct Out {
        report: gsc_core::penergy::SolveReport,
        capacity: f64,
        solver: SolverConfig,
    }
    let cap = p_capacity(spec, n, &solver)?;
    let report = cap.solution.report(solver.p, w.wall_time());
    let cells = gsc_core::carpet::LevelCells::enumerate(spec, n, gsc_core::graph::DEFAULT_VERTEX_BUDGET)?;
    let mut body = String::from("vertex");
    for k in 1..=spec.dim() {
        let _ = write!(body, ",i_{k}");
    }
    body.push_str(",value\n");
    for (v, value) in cap.solution.function.values.iter().enumerate() {
        let _ = write!(body, "{v}");
        for i in cells.lattice(v) {
            let _ = write!(body, ",{i}");
        }
        let _ = writeln!(body, ",{value}");
    }
    w.csv("solution.csv", &body)?;
    println!("p={} n={n} capacity={} iterations={} residual={:e}", solver.p, cap.capacity, report.iterations, report.residual);
    w.json("solve.json", Out { report, capacity: cap.capacity, solver })?;
    Ok(0)
}

fn rho(w: &Writer, spec: &CarpetSpec, p: f64, levels: &[u32]) -> Result<u8> {
    let est = estimate_rho_beta(spec, p, levels, &SolverConfig::with_p(p))?;
    w.csv("capacities.csv", &est.capacity_csv())?;
    w.json("rho.json", &est)?;
    println!(
        "rho_hat={} beta_hat={} alpha={} supercritical={}",
        est.rho_hat, est.beta_hat, est.alpha, est.supercritical
    );
    Ok(0)
}

/// Parses `harmonic:M`, `coord:K`, `const:C` and `step`.
fn test_function(spec: &CarpetSpec, p: f64, text: &str) -> Result<EvalFunction> {
    let bad = || Error::Config(format!("unknown function `{text}` (harmonic:M, coord:K, const:C, step)"));
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    match kind {
        "harmonic" => {
            let m: u32 = arg.parse().map_err(|_| bad())?;
            let cap = p_capacity(spec, m, &SolverConfig::with_p(p))?;
            EvalFunction::cells(spec, cap.solution.function)
        }
        "coord" => {
            let k: usize = arg.parse().map_err(|_| bad())?;
            if k == 0 || k > spec.dim() {
                return Err(Error::Config(format!("coordinate index {k} outside 1..={}", spec.dim())));
            }
            Ok(EvalFunction::coordinate(k - 1))
        }
        "const" => Ok(EvalFunction::constant(arg.parse().map_err(|_| bad())?)),
        "step" if arg.is_empty() => {
            let cut = 1.0 / spec.a() as f64;
            Ok(EvalFunction::analytic(format!("step(x_1 >= {cut})"), move |x: &[f64]| {
                if x[0] >= cut {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        _ => Err(bad()),
    }
}

fn functional(
    w: &Writer,
    spec: &CarpetSpec,
    function: &str,
    levels: &[u32],
    consts: &GeometryConstants,
    quad: &MCQuadrature,
    ks: bool,
) -> Result<u8> {
    let f = test_function(spec, consts.p, function)?;
    let row = |quantity: &str, x: f64, value: f64, err: f64, samples: u64| FunctionalRow {
        quantity: quantity.to_string(),
        n_or_r: x,
        estimate: value,
        std_err: err,
        samples,
        seed: quad.seed,
        c: consts.c,
        p: consts.p,
        beta: consts.beta,
    };
    let mut rows = Vec::new();
    for &n in levels {
        let profile = ball_profile(spec, &f, n, 0, consts, quad)?;
        let a = profile.functional();
        let ann = profile.annuli[0].scaled(profile.prefactor);
        rows.push(row("A", n as f64, a.value, a.std_err, quad.samples));
        rows.push(row("annulus_A", n as f64, ann.value, ann.std_err, quad.samples));
        let mode = if f.is_cellwise() { DeficitMode::Exact } else { DeficitMode::MonteCarlo(quad.clone()) };
        let d = poincare_deficit(spec, &f, n, consts.p, consts.beta, &mode)?;
        rows.push(row("poincare_deficit", n as f64, d.value.value, d.value.std_err, d.samples));
        if ks {
            let r = consts.radius(spec.a(), n);
            let e = ks_e(spec, &f, r, consts.p, consts.beta / consts.p, quad)?;
            rows.push(row("ks_E", r, e.estimate.value, e.estimate.std_err, e.samples));
        }
    }
    let mut body = format!("{FUNCTIONAL_CSV_HEADER}\n");
    for r in &rows {
        body.push_str(&r.csv_line());
        body.push('\n');
    }
    w.csv("functional.csv", &body)?;
    w.json("functional.json", &rows)?;
    for r in &rows {
        println!("{} n_or_r={} estimate={} std_err={}", r.quantity, r.n_or_r, r.estimate, r.std_err);
    }
    Ok(0)
}

fn verify(w: &Writer, spec: &CarpetSpec, p: f64, cfg: &VerifyConfig) -> Result<u8> {
    let bundle = run_suite(spec, p, cfg)?;
    bundle.write(w.out)?;
    #[derive(Serialize)]
    struct Out<'a> {
        rho_hat: f64,
        beta_hat: f64,
        summary: &'a gsc_core::verify::SuiteSummary,
    }
    w.json(
        "run.json",
        Out { rho_hat: bundle.rho.rho_hat, beta_hat: bundle.rho.beta_hat, summary: &bundle.summary },
    )?;
    let s = &bundle.summary;
    println!(
        "members passed {}/{}; unflagged controls: {:?}; pass={}",
        s.members_passed, s.members_total, s.controls_unflagged, s.pass
    );
    Ok(if s.pass { 0 } else { 4 })
}
