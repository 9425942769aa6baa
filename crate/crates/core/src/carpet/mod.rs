//! Generalized Sierpinski carpets `GSC(D, a, S)`.
//!
//! A carpet is the attractor of the maps `x -> (x + i) / a` for digit
//! vectors `i` in `S`. This module holds the spec, its four-condition
//! validation, digit/word arithmetic and the self-similar measure.

mod cell;
mod measure;

pub use cell::{cell_of_word, word_of_lattice, Cell, LevelCells, Word};
pub use measure::{
    ahlfors_scan, cell_measure, measure_ball, sample_address, Address, AhlforsScan, BallMassBracket,
    CellMass, Radius, RadiusRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported ambient dimension. Hot loops keep lattice
/// coordinates in fixed-size stack buffers of this length.
pub const MAX_DIM: usize = 8;

/// The triple `(D, a, S)` together with its validation record.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SpecJson", into = "SpecJson")]
pub struct CarpetSpec {
    dim: usize,
    a: u32,
    /// Digit vectors, sorted lexicographically.
    digits: Vec<Vec<u32>>,
    /// Digit code (first coordinate most significant) -> position in `digits`.
    code_to_index: Vec<Option<u32>>,
    validation: ValidationReport,
}

/// On-disk form: `{"D":2,"a":3,"S":[[0,0],[1,0],...]}`.
#[derive(Serialize, Deserialize)]
struct SpecJson {
    #[serde(rename = "D")]
    dim: usize,
    a: u32,
    #[serde(rename = "S")]
    digits: Vec<Vec<u32>>,
}

impl TryFrom<SpecJson> for CarpetSpec {
    type Error = Error;
    fn try_from(j: SpecJson) -> Result<Self> {
        CarpetSpec::new(j.dim, j.a, j.digits)
    }
}

impl From<CarpetSpec> for SpecJson {
    fn from(s: CarpetSpec) -> Self {
        SpecJson { dim: s.dim, a: s.a, digits: s.digits }
    }
}

impl CarpetSpec {
    /// Builds a spec and records its validation. Fails only on shape
    /// errors (empty or full digit set, out-of-range digits, bad `D` or `a`);
    /// a well-formed spec that violates a carpet condition is returned with
    /// `is_valid() == false`.
    pub fn new(dim: usize, a: u32, digits: Vec<Vec<u32>>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidSpec(format!("D must lie in [2, {MAX_DIM}], got {dim}")));
        }
        if a < 3 {
            return Err(Error::InvalidSpec(format!("a must be >= 3, got {a}")));
        }
        let total = (a as u64)
            .checked_pow(dim as u32)
            .filter(|&t| t <= 1 << 24)
            .ok_or_else(|| Error::InvalidSpec(format!("digit alphabet a^D = {a}^{dim} is too large")))?;
        if digits.is_empty() {
            return Err(Error::InvalidSpec("S is empty".into()));
        }
        let mut code_to_index = vec![None; total as usize];
        let mut sorted = digits;
        for d in &sorted {
            if d.len() != dim {
                return Err(Error::InvalidSpec(format!("digit {d:?} does not have {dim} entries")));
            }
            if let Some(&bad) = d.iter().find(|&&x| x >= a) {
                return Err(Error::InvalidSpec(format!("digit {d:?} has entry {bad} outside 0..{a}")));
            }
        }
        sorted.sort();
        sorted.dedup();
        if sorted.len() as u64 == total {
            return Err(Error::InvalidSpec("S is the full digit set; a carpet needs a proper subset".into()));
        }
        for (i, d) in sorted.iter().enumerate() {
            code_to_index[digit_code(a, d) as usize] = Some(i as u32);
        }
        let mut spec = CarpetSpec {
            dim,
            a,
            digits: sorted,
            code_to_index,
            validation: ValidationReport::default(),
        };
        spec.validation = validate_carpet(&spec);
        Ok(spec)
    }

    /// The standard Sierpinski carpet `GSC(2, 3, {0,1,2}^2 \ {(1,1)})`.
    pub fn standard_carpet() -> Self {
        let digits = full_digit_set(2, 3).into_iter().filter(|d| d != &[1, 1]).collect();
        CarpetSpec::new(2, 3, digits).expect("standard carpet is well formed")
    }

    /// The Menger sponge `GSC(3, 3, S)` with the 20 digits having at most
    /// one coordinate equal to 1.
    pub fn menger_sponge() -> Self {
        let digits = full_digit_set(3, 3)
            .into_iter()
            .filter(|d| d.iter().filter(|&&x| x == 1).count() <= 1)
            .collect();
        CarpetSpec::new(3, 3, digits).expect("Menger sponge is well formed")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn digits(&self) -> &[Vec<u32>] {
        &self.digits
    }

    /// `N_* = |S|`.
    pub fn n_star(&self) -> usize {
        self.digits.len()
    }

    /// Similarity dimension `alpha = log N_* / log a`.
    pub fn alpha(&self) -> f64 {
        (self.n_star() as f64).ln() / (self.a as f64).ln()
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.validation
    }

    pub fn is_valid(&self) -> bool {
        self.validation.valid
    }

    pub(crate) fn require_valid(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "GSC conditions fail: {}",
                self.validation.failed_conditions().join(", ")
            )))
        }
    }

    /// Position of a digit vector in `S`.
    pub fn digit_index(&self, digit: &[u32]) -> Option<usize> {
        if digit.len() != self.dim || digit.iter().any(|&x| x >= self.a) {
            return None;
        }
        self.code_to_index[digit_code(self.a, digit) as usize].map(|i| i as usize)
    }

    /// Membership test on a digit code (first coordinate most significant).
    #[inline]
    pub(crate) fn code_member(&self, code: usize) -> bool {
        self.code_to_index[code].is_some()
    }

    /// `a^level`, failing when it leaves `u64`.
    pub fn side(&self, level: u32) -> Result<u64> {
        (self.a as u64)
            .checked_pow(level)
            .ok_or_else(|| Error::Config(format!("a^{level} overflows u64")))
    }

    /// Linear key of a lattice index at `level`: lexicographic order of
    /// lattice tuples equals numeric key order.
    pub fn lattice_key(&self, level: u32, lattice: &[u64]) -> Result<u64> {
        let side = self.side(level)?;
        side.checked_pow(self.dim as u32)
            .ok_or_else(|| Error::Config(format!("level {level} lattice keys overflow u64")))?;
        Ok(lattice.iter().fold(0u64, |k, &i| k * side + i))
    }

    /// True when every digit of the lattice index decodes into `S`.
    pub(crate) fn lattice_is_cell(&self, level: u32, lattice: &[u64]) -> bool {
        let a = self.a as u64;
        let mut pow = 1u64;
        for _ in 0..level {
            let mut code = 0usize;
            for &i in lattice {
                code = code * self.a as usize + ((i / pow) % a) as usize;
            }
            if !self.code_member(code) {
                return false;
            }
            pow *= a;
        }
        true
    }
}

fn digit_code(a: u32, d: &[u32]) -> u64 {
    d.iter().fold(0u64, |c, &x| c * a as u64 + x as u64)
}

/// All of `{0, ..., a-1}^D` in lexicographic order.
pub fn full_digit_set(dim: usize, a: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..a).map(move |x| {
                    let mut d = prefix.clone();
                    d.push(x);
                    d
                })
            })
            .collect();
    }
    out
}

/// A symmetry of the cube acting on digit vectors: coordinate `k` of the
/// image is digit coordinate `perm[k]`, reflected to `a - 1 - x` when
/// `flips[k]` is set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Isometry {
    pub perm: Vec<usize>,
    pub flips: Vec<bool>,
}

impl Isometry {
    pub fn apply(&self, a: u32, d: &[u32]) -> Vec<u32> {
        self.perm
            .iter()
            .zip(&self.flips)
            .map(|(&src, &flip)| if flip { a - 1 - d[src] } else { d[src] })
            .collect()
    }

    /// All `2^D * D!` signed permutations.
    pub fn hyperoctahedral(dim: usize) -> Vec<Isometry> {
        let mut out = Vec::new();
        for perm in permutations(dim) {
            for mask in 0..(1u32 << dim) {
                let flips = (0..dim).map(|k| mask & (1 << k) != 0).collect();
                out.push(Isometry { perm: perm.clone(), flips });
            }
        }
        out
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Why a condition failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum Witness {
    /// `isometry` maps `digit` to `image`, which is not in `S`.
    Symmetry { isometry: Isometry, digit: Vec<u32>, image: Vec<u32> },
    /// A face-connected component of `S` that misses `S[0]`.
    Connectedness { component: Vec<Vec<u32>> },
    /// The `2 x ... x 2` window at `window` splits into several components.
    NonDiagonality { window: Vec<u32>, components: Vec<Vec<Vec<u32>>> },
    /// A bottom-edge digit `(t, 0, ..., 0)` missing from `S`.
    Borders { missing: Vec<u32> },
}

/// Per-condition outcome of [`validate_carpet`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symmetry: bool,
    pub connectedness: bool,
    pub non_diagonality: bool,
    pub borders: bool,
    pub valid: bool,
    pub witnesses: Vec<Witness>,
}

impl ValidationReport {
    pub fn failed_conditions(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.symmetry {
            out.push("symmetry");
        }
        if !self.connectedness {
            out.push("connectedness");
        }
        if !self.non_diagonality {
            out.push("non-diagonality");
        }
        if !self.borders {
            out.push("borders");
        }
        out
    }
}

/// Checks the four carpet conditions on digit vectors.
///
/// Symmetry runs over the whole hyperoctahedral group; connectedness and
/// non-diagonality use shared-face adjacency of digit boxes, which is how
/// interiors of unions of closed boxes connect.
pub fn validate_carpet(spec: &CarpetSpec) -> ValidationReport {
    let a = spec.a;
    let in_s = |d: &[u32]| spec.digit_index(d).is_some();
    let mut witnesses = Vec::new();

    let mut symmetry = true;
    'iso: for iso in Isometry::hyperoctahedral(spec.dim) {
        for d in &spec.digits {
            let image = iso.apply(a, d);
            if !in_s(&image) {
                witnesses.push(Witness::Symmetry { isometry: iso, digit: d.clone(), image });
                symmetry = false;
                break 'iso;
            }
        }
    }

    let comps = face_components(&spec.digits);
    let connectedness = comps.len() == 1;
    if !connectedness {
        witnesses.push(Witness::Connectedness { component: comps[1].clone() });
    }

    let mut non_diagonality = true;
    let corner_range: Vec<Vec<u32>> = full_digit_set(spec.dim, a - 1);
    let offsets = full_digit_set(spec.dim, 2);
    for window in corner_range {
        let present: Vec<Vec<u32>> = offsets
            .iter()
            .map(|e| window.iter().zip(e).map(|(w, e)| w + e).collect::<Vec<u32>>())
            .filter(|d| in_s(d))
            .collect();
        if present.is_empty() {
            continue;
        }
        let comps = face_components(&present);
        if comps.len() > 1 {
            non_diagonality = false;
            witnesses.push(Witness::NonDiagonality { window, components: comps });
            break;
        }
    }

    let mut borders = true;
    for t in 0..a {
        let mut d = vec![0; spec.dim];
        d[0] = t;
        if !in_s(&d) {
            borders = false;
            witnesses.push(Witness::Borders { missing: d });
            break;
        }
    }

    ValidationReport {
        symmetry,
        connectedness,
        non_diagonality,
        borders,
        valid: symmetry && connectedness && non_diagonality && borders,
        witnesses,
    }
}

/// Components under shared-face adjacency (one coordinate differs by 1).
/// The component holding `boxes[0]` comes first.
fn face_components(boxes: &[Vec<u32>]) -> Vec<Vec<Vec<u32>>> {
    let n = boxes.len();
    let adjacent = |u: &[u32], v: &[u32]| {
        let mut diff = 0;
        for (x, y) in u.iter().zip(v) {
            match x.abs_diff(*y) {
                0 => {}
                1 => diff += 1,
                _ => return false,
            }
        }
        diff == 1
    };
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        comp[start] = id;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if comp[v] == usize::MAX && adjacent(&boxes[u], &boxes[v]) {
                    comp[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members.into_iter().map(|i| boxes[i].clone()).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carpet_minus(extra: &[[u32; 2]]) -> CarpetSpec {
        let digits = full_digit_set(2, 3)
            .into_iter()
            .filter(|d| d != &[1, 1] && !extra.iter().any(|e| d == e))
            .collect();
        CarpetSpec::new(2, 3, digits).unwrap()
    }

    #[test]
    fn standard_carpet_is_valid() {
        let sc = CarpetSpec::standard_carpet();
        assert!(sc.is_valid(), "{:?}", sc.validation());
        assert_eq!(sc.n_star(), 8);
        assert!((sc.alpha() - 8f64.ln() / 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn missing_bottom_middle_fails_borders() {
        let s = carpet_minus(&[[1, 0]]);
        let v = s.validation();
        assert!(!v.borders && !v.valid);
        assert!(v.witnesses.contains(&Witness::Borders { missing: vec![1, 0] }));
    }

    #[test]
    fn cross_fails_borders_at_origin() {
        let s = CarpetSpec::new(2, 3, vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![2, 1], vec![1, 2]]).unwrap();
        let v = s.validation();
        assert!(!v.borders);
        assert!(v.witnesses.contains(&Witness::Borders { missing: vec![0, 0] }));
        assert!(v.symmetry && v.connectedness);
    }

    #[test]
    fn menger_sponge_is_valid() {
        let m = CarpetSpec::menger_sponge();
        assert_eq!(m.n_star(), 20);
        assert!(m.is_valid(), "{:?}", m.validation());
    }

    #[test]
    fn corner_contact_is_not_connected() {
        // Two diagonal boxes in a 2x2 alphabet-sized pattern.
        let s = CarpetSpec::new(2, 3, vec![vec![0, 0], vec![1, 1]]).unwrap();
        let v = s.validation();
        assert!(!v.connectedness);
        assert!(!v.non_diagonality);
    }

    #[test]
    fn shape_errors() {
        assert!(CarpetSpec::new(2, 3, vec![]).is_err());
        assert!(CarpetSpec::new(2, 3, full_digit_set(2, 3)).is_err());
        assert!(CarpetSpec::new(2, 2, vec![vec![0, 0]]).is_err());
        assert!(CarpetSpec::new(1, 3, vec![vec![0]]).is_err());
        assert!(CarpetSpec::new(2, 3, vec![vec![0, 3]]).is_err());
        assert!(CarpetSpec::new(2, 3, vec![vec![0]]).is_err());
    }

    #[test]
    fn group_order() {
        assert_eq!(Isometry::hyperoctahedral(2).len(), 8);
        assert_eq!(Isometry::hyperoctahedral(3).len(), 48);
    }

    #[test]
    fn json_round_trip() {
        let sc = CarpetSpec::standard_carpet();
        let text = sc.to_json();
        assert!(text.starts_with("{\"D\":2,\"a\":3,\"S\":[[0,0],[0,1]"));
        let back = CarpetSpec::from_json(&text).unwrap();
        assert_eq!(back.digits(), sc.digits());
        assert!(CarpetSpec::from_json(r#"{"D":2,"a":3,"S":[]}"#).is_err());
    }

    #[test]
    fn lattice_membership() {
        let sc = CarpetSpec::standard_carpet();
        assert!(sc.lattice_is_cell(2, &[2, 2]));
        assert!(!sc.lattice_is_cell(2, &[4, 4]));
        assert!(!sc.lattice_is_cell(2, &[1, 4]));
        assert!(sc.lattice_is_cell(0, &[0, 0]));
    }
}
