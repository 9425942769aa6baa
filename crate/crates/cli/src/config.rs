use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gsc_core::{CarpetSpec, Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Command;

/// Inclusive level range written `lo:hi` (or a single level `n`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelRange {
    pub lo: u32,
    pub hi: u32,
}

impl LevelRange {
    pub fn levels(&self) -> Vec<u32> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad level `{t}` in `{s}`"));
        let (lo, hi) = match s.split_once(':') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if lo > hi {
            return Err(format!("empty level range `{s}`"));
        }
        Ok(LevelRange { lo, hi })
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl Serialize for LevelRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LevelRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to reproduce a run; embedded in every artifact.
/// The output directory is deliberately not part of it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub spec_path: PathBuf,
    pub spec: CarpetSpec,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
    /// Edge convention of the level graphs.
    pub edges: String,
    pub command: Command,
}

pub const EDGE_CONVENTION: &str = "box adjacency (Chebyshev distance 1), unordered, counted once";

impl RunConfig {
    pub fn new(spec_path: PathBuf, seed: u64, threads: usize, timing: bool, command: Command) -> Result<RunConfig> {
        let text = std::fs::read_to_string(&spec_path)
            .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", spec_path.display())))?;
        let spec = CarpetSpec::from_json(&text)?;
        Ok(RunConfig {
            version: gsc_core::VERSION.to_string(),
            spec_path,
            spec,
            seed,
            threads,
            timing,
            edges: EDGE_CONVENTION.to_string(),
            command,
        })
    }

    /// Reads the `config` field of a JSON artifact.
    pub fn from_artifact(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let config = value
            .get("config")
            .ok_or_else(|| Error::Config(format!("{} has no embedded config", path.display())))?;
        Ok(serde_json::from_value(config.clone())?)
    }
}
