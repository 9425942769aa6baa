use serde::{Deserialize, Serialize};

use super::CarpetSpec;
use crate::error::{Error, Result};

/// A finite word `w_1 ... w_n`, stored as positions in the sorted digit set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<usize>);

impl Word {
    /// Builds a word from digit vectors, failing on digits outside `S`.
    pub fn from_digits(spec: &CarpetSpec, digits: &[Vec<u32>]) -> Result<Word> {
        digits
            .iter()
            .map(|d| {
                spec.digit_index(d)
                    .ok_or_else(|| Error::NotACell(format!("digit {d:?} is not in S")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn digits<'a>(&'a self, spec: &'a CarpetSpec) -> impl Iterator<Item = &'a [u32]> + 'a {
        self.0.iter().map(move |&i| spec.digits()[i].as_slice())
    }
}

/// A level-`n` cell: the box `prod_k [i_k / a^n, (i_k + 1) / a^n]` with
/// lattice index `i` and word `w`, where `i_k = sum_m (w_m)_k a^(n-m)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub level: u32,
    pub lattice: Vec<u64>,
    pub word: Word,
}

impl Cell {
    /// Lower and upper corners of the cell box.
    pub fn bounds(&self, spec: &CarpetSpec) -> (Vec<f64>, Vec<f64>) {
        let side = (spec.a() as f64).powi(self.level as i32);
        let lo = self.lattice.iter().map(|&i| i as f64 / side).collect();
        let hi = self.lattice.iter().map(|&i| (i + 1) as f64 / side).collect();
        (lo, hi)
    }

    /// Parent cell (drops the last digit). `None` at level 0.
    pub fn parent(&self, spec: &CarpetSpec) -> Option<Cell> {
        if self.level == 0 {
            return None;
        }
        let a = spec.a() as u64;
        let mut word = self.word.clone();
        word.0.pop();
        Some(Cell {
            level: self.level - 1,
            lattice: self.lattice.iter().map(|&i| i / a).collect(),
            word,
        })
    }
}

pub fn cell_of_word(spec: &CarpetSpec, word: &Word) -> Result<Cell> {
    let a = spec.a() as u64;
    let mut lattice = vec![0u64; spec.dim()];
    for &w in &word.0 {
        let d = spec
            .digits()
            .get(w)
            .ok_or_else(|| Error::NotACell(format!("digit position {w} out of range")))?;
        for (i, &x) in lattice.iter_mut().zip(d) {
            *i = *i * a + x as u64;
        }
    }
    Ok(Cell { level: word.len() as u32, lattice, word: word.clone() })
}

pub fn word_of_lattice(spec: &CarpetSpec, level: u32, lattice: &[u64]) -> Result<Cell> {
    if lattice.len() != spec.dim() {
        return Err(Error::NotACell(format!("lattice {lattice:?} does not have {} entries", spec.dim())));
    }
    let side = spec.side(level)?;
    if lattice.iter().any(|&i| i >= side) {
        return Err(Error::NotACell(format!("lattice {lattice:?} is outside [0, {side})")));
    }
    let a = spec.a() as u64;
    let mut word = vec![0usize; level as usize];
    let mut pow = 1u64;
    for m in (0..level as usize).rev() {
        let digit: Vec<u32> = lattice.iter().map(|&i| ((i / pow) % a) as u32).collect();
        word[m] = spec.digit_index(&digit).ok_or_else(|| {
            Error::NotACell(format!("lattice {lattice:?} at level {level}: digit {digit:?} at position {} is not in S", m + 1))
        })?;
        pow *= a;
    }
    Ok(Cell { level, lattice: lattice.to_vec(), word: Word(word) })
}

/// All cells of `W_n`, in lexicographic lattice order, addressed by key.
#[derive(Clone, Debug)]
pub struct LevelCells {
    level: u32,
    dim: usize,
    side: u64,
    keys: Vec<u64>,
}

impl LevelCells {
    /// Enumerates `W_n`; fails when `N_*^n` exceeds `budget`.
    pub fn enumerate(spec: &CarpetSpec, level: u32, budget: u64) -> Result<LevelCells> {
        let count = (spec.n_star() as u128).pow(level);
        if count > budget as u128 {
            return Err(Error::Budget { what: "level cell count", needed: count, budget: budget as u128 });
        }
        let side = spec.side(level)?;
        spec.lattice_key(level, &vec![0; spec.dim()])?;
        let dim = spec.dim();
        let a = spec.a() as u64;
        // Flattened lattice coordinates, refined one level at a time.
        let mut coords: Vec<u64> = vec![0; dim];
        for _ in 0..level {
            let mut next = Vec::with_capacity(coords.len() * spec.n_star());
            for cell in coords.chunks_exact(dim) {
                for d in spec.digits() {
                    next.extend(cell.iter().zip(d).map(|(&i, &x)| i * a + x as u64));
                }
            }
            coords = next;
        }
        let mut keys: Vec<u64> = coords
            .chunks_exact(dim)
            .map(|c| c.iter().fold(0u64, |k, &i| k * side + i))
            .collect();
        keys.sort_unstable();
        Ok(LevelCells { level, dim, side, keys })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `a^n`.
    pub fn side(&self) -> u64 {
        self.side
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    /// Vertex index of a key, if the key is a cell.
    #[inline]
    pub fn index_of_key(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    /// Vertex index of a lattice tuple.
    pub fn index_of(&self, lattice: &[u64]) -> Option<usize> {
        if lattice.len() != self.dim || lattice.iter().any(|&i| i >= self.side) {
            return None;
        }
        self.index_of_key(self.key(lattice))
    }

    #[inline]
    pub fn key(&self, lattice: &[u64]) -> u64 {
        lattice.iter().fold(0u64, |k, &i| k * self.side + i)
    }

    /// Writes the lattice tuple of vertex `idx` into `out`.
    #[inline]
    pub fn lattice_into(&self, idx: usize, out: &mut [u64]) {
        let mut k = self.keys[idx];
        for slot in out[..self.dim].iter_mut().rev() {
            *slot = k % self.side;
            k /= self.side;
        }
    }

    pub fn lattice(&self, idx: usize) -> Vec<u64> {
        let mut out = vec![0; self.dim];
        self.lattice_into(idx, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_to_lattice_example() {
        let sc = CarpetSpec::standard_carpet();
        let w = Word::from_digits(&sc, &[vec![0, 0], vec![2, 2]]).unwrap();
        let c = cell_of_word(&sc, &w).unwrap();
        assert_eq!(c.level, 2);
        assert_eq!(c.lattice, vec![2, 2]);
        assert_eq!(word_of_lattice(&sc, 2, &[2, 2]).unwrap(), c);
    }

    #[test]
    fn removed_center_is_not_a_cell() {
        let sc = CarpetSpec::standard_carpet();
        assert!(matches!(word_of_lattice(&sc, 2, &[4, 4]), Err(Error::NotACell(_))));
        assert!(matches!(word_of_lattice(&sc, 1, &[3, 0]), Err(Error::NotACell(_))));
        assert!(Word::from_digits(&sc, &[vec![1, 1]]).is_err());
    }

    #[test]
    fn empty_word_is_unit_cube() {
        let sc = CarpetSpec::standard_carpet();
        let c = cell_of_word(&sc, &Word::default()).unwrap();
        assert_eq!(c.level, 0);
        assert_eq!(c.lattice, vec![0, 0]);
        assert_eq!(c.bounds(&sc), (vec![0.0, 0.0], vec![1.0, 1.0]));
        assert!(c.parent(&sc).is_none());
    }

    #[test]
    fn round_trip_exhaustive_to_level_four() {
        for spec in [CarpetSpec::standard_carpet(), CarpetSpec::menger_sponge()] {
            let max = if spec.dim() == 2 { 4 } else { 3 };
            for n in 0..=max {
                let cells = LevelCells::enumerate(&spec, n, u64::MAX).unwrap();
                assert_eq!(cells.len(), spec.n_star().pow(n));
                for idx in 0..cells.len() {
                    let lat = cells.lattice(idx);
                    let c = word_of_lattice(&spec, n, &lat).unwrap();
                    let back = cell_of_word(&spec, &c.word).unwrap();
                    assert_eq!(back.lattice, lat);
                    assert_eq!(cells.index_of(&lat), Some(idx));
                    if let Some(parent) = c.parent(&spec) {
                        assert_eq!(parent, word_of_lattice(&spec, n - 1, &parent.lattice).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_budget() {
        let sc = CarpetSpec::standard_carpet();
        assert!(matches!(LevelCells::enumerate(&sc, 4, 100), Err(Error::Budget { .. })));
    }
}
