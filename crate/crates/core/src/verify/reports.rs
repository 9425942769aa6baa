use serde::{Deserialize, Serialize};

use super::measure::{measure_levels, LevelRow, LevelTable};
use super::suite::{Role, SuiteMember};
use super::{Setting, VerifyConfig};
use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::functionals::{holder_ratio, interface_pairs, sample_pairs};

/// One level of an inequality: `left <= C right`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub n: u32,
    pub left: f64,
    pub left_err: f64,
    pub right: f64,
    pub right_err: f64,
}

/// Truncation of the weighted annulus series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailInfo {
    pub ratio: f64,
    /// Fewest terms kept at any level.
    pub terms_min: usize,
    /// Largest `tail / (partial + tail)` from the geometric bound.
    pub bound_fraction: f64,
    /// Bound fraction below 1%.
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub id: String,
    pub function: String,
    pub role: Role,
    pub rows: Vec<Row>,
    /// Empirical constant; `None` when both sides vanish.
    pub c_hat: Option<f64>,
    /// The same constant at doubled effort.
    pub c_hat_doubled: Option<f64>,
    /// Relative change of the constant between the two efforts.
    pub stability: Option<f64>,
    pub threshold: f64,
    pub finite: bool,
    pub trivially_satisfied: bool,
    /// Systematic growth across levels (non-membership).
    pub growth_flag: bool,
    pub stable: bool,
    pub pass: bool,
    /// Constants are finite-range surrogates of existential constants.
    pub surrogate: bool,
    pub tail: Option<TailInfo>,
    /// `(epsilon, C(epsilon))` pairs where applicable.
    pub curve: Vec<[f64; 2]>,
    pub notes: Vec<String>,
}

pub(crate) const WEAK_MONOTONICITY: &str = "weak_monotonicity";
pub(crate) const SUP_LIMINF_GRID: &str = "sup_liminf_grid";
pub(crate) const POINCARE_DEFICIT: &str = "poincare_deficit";
pub(crate) const GRID_ENERGY_DEFICIT: &str = "grid_by_energy_and_deficit";
pub(crate) const GRID_BY_ENERGY_SUP: &str = "grid_by_energy_sup";
pub(crate) const DEFICIT_BY_ANNULI: &str = "deficit_by_annuli";
pub(crate) const ENERGY_BY_ANNULI: &str = "energy_by_annuli";
pub(crate) const ENERGY_LIMINF_BY_GRID: &str = "energy_liminf_by_grid";
pub(crate) const ENERGY_BY_GRID_EPS: &str = "energy_by_grid_eps";
pub(crate) const HOLDER_OSCILLATION: &str = "holder_oscillation";

/// Rows and constant from one effort level.
struct Calc {
    rows: Vec<Row>,
    c_hat: Option<f64>,
    curve: Vec<[f64; 2]>,
}

fn top_half(rows: &[LevelRow]) -> &[LevelRow] {
    &rows[rows.len() / 2..]
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// `max left / right` over rows with positive left side.
fn ratio_max(rows: &[Row]) -> Option<f64> {
    let mut out: Option<f64> = None;
    for r in rows.iter().filter(|r| r.left > 0.0) {
        let v = if r.right > 0.0 { r.left / r.right } else { f64::INFINITY };
        out = Some(out.map_or(v, |m: f64| m.max(v)));
    }
    out
}

/// `max a / min b`, `None` when `max a` vanishes.
fn quotient(max: f64, min: f64) -> Option<f64> {
    (max > 0.0).then(|| if min > 0.0 { max / min } else { f64::INFINITY })
}

fn row(n: u32, left: f64, left_err: f64, right: f64, right_err: f64) -> Row {
    Row { n, left, left_err, right, right_err }
}

fn weak_monotonicity(t: &LevelTable) -> Calc {
    let e: Vec<f64> = t.rows.iter().map(|r| r.energy).collect();
    let rows = (0..e.len().saturating_sub(1))
        .map(|i| row(t.rows[i].n, e[i], 0.0, min_of(e[i + 1..].iter().copied()), 0.0))
        .collect();
    let c_hat = quotient(max_of(e.iter().copied()), min_of(e[1..].iter().copied()));
    Calc { rows, c_hat, curve: Vec::new() }
}

fn sup_liminf_grid(t: &LevelTable) -> Calc {
    let liminf = min_of(top_half(&t.rows).iter().map(|r| r.grid.value));
    let rows = t.rows.iter().map(|r| row(r.n, r.grid.value, r.grid.std_err, liminf, 0.0)).collect();
    let c_hat = quotient(max_of(t.rows.iter().map(|r| r.grid.value)), liminf);
    Calc { rows, c_hat, curve: Vec::new() }
}

fn from_rows(rows: Vec<Row>) -> Calc {
    let c_hat = ratio_max(&rows);
    Calc { rows, c_hat, curve: Vec::new() }
}

fn poincare(t: &LevelTable) -> Calc {
    let liminf = min_of(top_half(&t.rows).iter().map(|r| r.energy));
    from_rows(t.rows.iter().map(|r| row(r.n, r.deficit.value, r.deficit.std_err, liminf, 0.0)).collect())
}

fn grid_energy_deficit(t: &LevelTable) -> Calc {
    from_rows(
        t.rows
            .iter()
            .map(|r| row(r.n, r.grid.value, r.grid.std_err, r.energy + r.deficit.value, r.deficit.std_err))
            .collect(),
    )
}

fn grid_by_energy_sup(t: &LevelTable) -> Calc {
    let rows = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| row(r.n, r.grid.value, r.grid.std_err, max_of(t.rows[i..].iter().map(|l| l.energy)), 0.0))
        .collect();
    from_rows(rows)
}

fn by_annuli(t: &LevelTable, left: impl Fn(&LevelRow) -> (f64, f64)) -> Calc {
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let w = r.weighted.unwrap_or_default();
            let (l, le) = left(r);
            row(r.n, l, le, w.value, w.std_err)
        })
        .collect();
    from_rows(rows)
}

fn energy_liminf_by_grid(t: &LevelTable) -> Calc {
    let top = top_half(&t.rows);
    let le = min_of(top.iter().map(|r| r.energy));
    let la = min_of(top.iter().map(|r| r.grid.value));
    let rows = vec![row(top[0].n, le, 0.0, la, 0.0)];
    Calc { c_hat: quotient(le, la), rows, curve: Vec::new() }
}

fn energy_by_grid_eps(t: &LevelTable, epsilons: &[f64]) -> Calc {
    let liminf = min_of(top_half(&t.rows).iter().map(|r| r.energy));
    let curve: Vec<[f64; 2]> = epsilons
        .iter()
        .map(|&eps| {
            let c = t
                .rows
                .iter()
                .map(|r| {
                    let excess = (r.energy - eps * liminf).max(0.0);
                    if excess == 0.0 {
                        0.0
                    } else if r.grid.value > 0.0 {
                        excess / r.grid.value
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max);
            [eps, c]
        })
        .collect();
    let rows = t.rows.iter().map(|r| row(r.n, r.energy, 0.0, r.grid.value, r.grid.std_err)).collect();
    let any = t.rows.iter().any(|r| r.energy > 0.0);
    let c_hat = any.then(|| curve.iter().map(|c| c[1]).fold(0.0, f64::max));
    Calc { rows, c_hat, curve }
}

/// Growth by at least `factor` at every consecutive pair.
fn grows(values: &[f64], factor: f64) -> bool {
    values.len() >= 2 && values.windows(2).all(|w| w[0] > 0.0 && w[1] >= factor * w[0])
}

struct Draft {
    id: &'static str,
    threshold: f64,
    growth_flag: bool,
    tail: Option<TailInfo>,
    notes: Vec<String>,
}

fn finish(member: &SuiteMember, draft: Draft, base: Calc, doubled: Calc) -> InequalityReport {
    let trivially_satisfied = base.c_hat.is_none() && doubled.c_hat.is_none();
    let finite = trivially_satisfied
        || (base.c_hat.is_some_and(f64::is_finite) && doubled.c_hat.is_some_and(f64::is_finite));
    let stability = match (base.c_hat, doubled.c_hat) {
        (None, None) => Some(0.0),
        (Some(a), Some(b)) if finite && a > 0.0 => Some((b - a).abs() / a),
        (Some(a), Some(b)) if finite && a == b => Some(0.0),
        _ => None,
    };
    let stable = stability.is_some_and(|s| s <= draft.threshold);
    let mut notes = draft.notes;
    if trivially_satisfied {
        notes.push("both sides vanish at every level; the inequality holds trivially".into());
    }
    if draft.growth_flag {
        notes.push("left side grows systematically with the level: not a member of the energy domain".into());
    }
    InequalityReport {
        id: draft.id.to_string(),
        function: member.name.clone(),
        role: member.role,
        rows: base.rows,
        c_hat: base.c_hat,
        c_hat_doubled: doubled.c_hat,
        stability,
        threshold: draft.threshold,
        finite,
        trivially_satisfied,
        growth_flag: draft.growth_flag,
        stable,
        pass: finite && stable && !draft.growth_flag,
        surrogate: true,
        tail: draft.tail,
        curve: base.curve,
        notes,
    }
}

fn draft(id: &'static str, cfg: &VerifyConfig) -> Draft {
    Draft { id, threshold: cfg.stability_threshold, growth_flag: false, tail: None, notes: Vec::new() }
}

fn tail_info(t: &LevelTable, q: f64) -> TailInfo {
    let sup_a = max_of(t.rows.iter().map(|r| r.grid.value));
    let mut fraction: f64 = 0.0;
    for r in &t.rows {
        let partial = r.weighted.map_or(0.0, |w| w.value);
        let bound = q.powi(r.terms as i32) / (1.0 - q) * sup_a;
        if partial + bound > 0.0 {
            fraction = fraction.max(bound / (partial + bound));
        }
    }
    TailInfo {
        ratio: q,
        terms_min: t.rows.iter().map(|r| r.terms).min().unwrap_or(0),
        bound_fraction: fraction,
        certified: fraction < 0.01,
    }
}

fn check_tables(base: &LevelTable, doubled: &LevelTable) -> Result<()> {
    if base.rows.is_empty() || base.levels() != doubled.levels() {
        return Err(Error::Config("measurement tables must cover the same non-empty level range".into()));
    }
    Ok(())
}

/// All table-based reports for one function.
pub(crate) fn assemble(
    member: &SuiteMember,
    setting: &Setting,
    cfg: &VerifyConfig,
    base: &LevelTable,
    doubled: &LevelTable,
) -> Result<Vec<InequalityReport>> {
    check_tables(base, doubled)?;
    let mut out = Vec::new();
    if base.rows.len() >= 2 {
        out.push(finish(member, draft(WEAK_MONOTONICITY, cfg), weak_monotonicity(base), weak_monotonicity(doubled)));
    }
    let grid: Vec<f64> = base.rows.iter().map(|r| r.grid.value).collect();
    let mut d = draft(SUP_LIMINF_GRID, cfg);
    d.growth_flag = grows(&grid, cfg.growth_per_level);
    out.push(finish(member, d, sup_liminf_grid(base), sup_liminf_grid(doubled)));
    out.push(finish(member, draft(POINCARE_DEFICIT, cfg), poincare(base), poincare(doubled)));
    out.push(finish(member, draft(GRID_ENERGY_DEFICIT, cfg), grid_energy_deficit(base), grid_energy_deficit(doubled)));
    out.push(finish(member, draft(GRID_BY_ENERGY_SUP, cfg), grid_by_energy_sup(base), grid_by_energy_sup(doubled)));
    if let Some(q) = setting.tail_ratio {
        let tail = tail_info(base, q);
        let note = format!(
            "weighted annulus sums keep at least {} terms; geometric tail bound fraction {:.3} ({})",
            tail.terms_min,
            tail.bound_fraction,
            if tail.certified { "certified below 1%" } else { "not certified below 1%" }
        );
        for (id, left) in [
            (DEFICIT_BY_ANNULI, (|r: &LevelRow| (r.deficit.value, r.deficit.std_err)) as fn(&LevelRow) -> (f64, f64)),
            (ENERGY_BY_ANNULI, |r: &LevelRow| (r.energy, 0.0)),
        ] {
            let mut d = draft(id, cfg);
            d.tail = Some(tail);
            d.notes.push(note.clone());
            out.push(finish(member, d, by_annuli(base, left), by_annuli(doubled, left)));
        }
    }
    out.push(finish(member, draft(ENERGY_LIMINF_BY_GRID, cfg), energy_liminf_by_grid(base), energy_liminf_by_grid(doubled)));
    out.push(finish(
        member,
        draft(ENERGY_BY_GRID_EPS, cfg),
        energy_by_grid_eps(base, &cfg.epsilons),
        energy_by_grid_eps(doubled, &cfg.epsilons),
    ));
    Ok(out)
}

fn tables(
    spec: &CarpetSpec,
    member: &SuiteMember,
    setting: &Setting,
    cfg: &VerifyConfig,
    n_min: u32,
    n_max: u32,
) -> Result<(LevelTable, LevelTable)> {
    let f = &member.function;
    let base = measure_levels(spec, f, setting, n_min, n_max, &cfg.quad, cfg.quad_depth)?;
    let doubled = measure_levels(spec, f, setting, n_min, n_max, &cfg.quad.doubled(), cfg.quad_depth + 1)?;
    Ok((base, doubled))
}

fn pick(reports: Vec<InequalityReport>, id: &str) -> Result<InequalityReport> {
    reports
        .into_iter()
        .find(|r| r.id == id)
        .ok_or_else(|| Error::Config(format!("report {id} needs at least two levels")))
}

/// `rho^n E(M_n f)` over `n_min..=n_max`;
/// `C = max_n / min_{n > n_min}`.
pub fn verify_weak_monotonicity(
    spec: &CarpetSpec,
    member: &SuiteMember,
    setting: &Setting,
    n_min: u32,
    n_max: u32,
    cfg: &VerifyConfig,
) -> Result<InequalityReport> {
    let (base, doubled) = tables(spec, member, setting, cfg, n_min, n_max)?;
    pick(assemble(member, setting, cfg, &base, &doubled)?, WEAK_MONOTONICITY)
}

/// `sup A^{(n)} <= C liminf A^{(n)}` with the top-half minimum as liminf.
pub fn verify_theorem_main(
    spec: &CarpetSpec,
    member: &SuiteMember,
    setting: &Setting,
    n_min: u32,
    n_max: u32,
    cfg: &VerifyConfig,
) -> Result<InequalityReport> {
    let (base, doubled) = tables(spec, member, setting, cfg, n_min, n_max)?;
    pick(assemble(member, setting, cfg, &base, &doubled)?, SUP_LIMINF_GRID)
}

/// The four propositions with the auxiliary Poincare, grid/energy,
/// epsilon-curve and Holder reports, using the given `k`.
pub fn verify_propositions(
    spec: &CarpetSpec,
    member: &SuiteMember,
    setting: &Setting,
    k: u32,
    n_min: u32,
    n_max: u32,
    cfg: &VerifyConfig,
) -> Result<Vec<InequalityReport>> {
    let setting = setting.clone().with_k(spec, k)?;
    let (base, doubled) = tables(spec, member, &setting, cfg, n_min, n_max)?;
    let mut out: Vec<InequalityReport> = assemble(member, &setting, cfg, &base, &doubled)?
        .into_iter()
        .filter(|r| r.id != WEAK_MONOTONICITY && r.id != SUP_LIMINF_GRID)
        .collect();
    out.push(verify_holder(spec, member, &setting, cfg, &base, &doubled)?);
    Ok(out)
}

/// `|f(x) - f(y)|^p <= C d^{beta - alpha} sup_n A^{(n)}` over sampled pairs
/// and bottom-edge pairs straddling the first interface; stability compares
/// the sampled supremum against ten times more pairs.
pub fn verify_holder(
    spec: &CarpetSpec,
    member: &SuiteMember,
    setting: &Setting,
    cfg: &VerifyConfig,
    base: &LevelTable,
    doubled: &LevelTable,
) -> Result<InequalityReport> {
    check_tables(base, doubled)?;
    let f = &member.function;
    let n_max = base.rows.last().map_or(cfg.n_max, |r| r.n);
    let depth = f.depth().max(n_max + 2);
    let few = sample_pairs(spec, depth, cfg.holder_pairs, cfg.quad.seed)?;
    let many = sample_pairs(spec, depth, 10 * cfg.holder_pairs, cfg.quad.seed)?;
    let r_few = holder_ratio(spec, f, &setting.consts, &few)?;
    let r_many = holder_ratio(spec, f, &setting.consts, &many)?;

    let top = if f.depth() > 0 { f.depth() } else { n_max + 4 };
    // Anchors are lifted to the function's own depth; the points do not move.
    let a = spec.a() as u64;
    let edge: Vec<_> = interface_pairs(spec, 2..=top.max(2))?
        .into_iter()
        .map(|mut pair| {
            if pair.depth < f.depth() {
                let shift = a.pow(f.depth() - pair.depth);
                pair.x.iter_mut().chain(pair.y.iter_mut()).for_each(|v| *v *= shift);
                pair.depth = f.depth();
            }
            pair
        })
        .collect();
    let edge_ratios: Vec<(u32, f64)> = edge
        .iter()
        .zip(2..)
        .map(|(pair, k)| Ok((k, holder_ratio(spec, f, &setting.consts, std::slice::from_ref(pair))?.ratio)))
        .collect::<Result<_>>()?;
    let edge_max = max_of(edge_ratios.iter().map(|e| e.1));

    let sup_a = max_of(base.rows.iter().map(|r| r.grid.value));
    let sup_a2 = max_of(doubled.rows.iter().map(|r| r.grid.value));
    let calc = |sampled: f64, sup: f64| {
        let left = sampled.max(edge_max);
        let rows = edge_ratios.iter().map(|&(k, v)| row(k, v, 0.0, sup, 0.0)).collect();
        Calc { rows, c_hat: quotient(left, sup), curve: Vec::new() }
    };
    let values: Vec<f64> = edge_ratios.iter().map(|e| e.1).collect();
    let mut d = draft(HOLDER_OSCILLATION, cfg);
    d.threshold = cfg.holder_threshold;
    d.growth_flag = values.len() >= 4
        && values.windows(2).all(|w| w[1] > w[0])
        && values[values.len() - 1] >= 2.0 * values[0];
    d.notes.push(format!(
        "sampled pairs at depth {depth}: {} and {} pairs give ratios {} and {}; rows list bottom-edge interface pairs by depth",
        few.len(),
        many.len(),
        r_few.ratio,
        r_many.ratio
    ));
    Ok(finish(member, d, calc(r_few.ratio, sup_a), calc(r_many.ratio, sup_a2)))
}

pub(crate) fn is_membership(report: &InequalityReport) -> bool {
    report.id == SUP_LIMINF_GRID
}
