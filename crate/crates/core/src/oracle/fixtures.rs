//! Versioned JSON table of exact diagnostics keyed by `(lx, ly, J, beta, p)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decohered_gibbs_state, diagnostics, Diagnostics, ModelParams};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub lx: usize,
    pub ly: usize,
    pub j: f64,
    pub beta: f64,
    pub p: f64,
    /// Site pairs the correlators are averaged over.
    pub pairs: Vec<(usize, usize)>,
    pub purity: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl FixtureEntry {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            purity: self.purity,
            c0: self.c0,
            c1: self.c1,
            c2: self.c2,
            r0: self.r0,
            r1: self.r1,
            r2: self.r2,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { j: self.j, beta: self.beta, p: self.p }
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        LatticeSpec::square(self.lx, self.ly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub fixture_version: u32,
    pub entries: Vec<FixtureEntry>,
}

impl FixtureFile {
    /// Parses and validates a fixture document.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: FixtureFile = serde_json::from_str(text)?;
        if f.fixture_version != FIXTURE_VERSION {
            return Err(Error::Config(format!(
                "fixture_version {} unsupported (expected {FIXTURE_VERSION})",
                f.fixture_version
            )));
        }
        for (k, e) in f.entries.iter().enumerate() {
            let bad = |msg: String| Error::Config(format!("fixture entry {k}: {msg}"));
            e.params().validate().map_err(|err| bad(err.to_string()))?;
            let l = e.lattice().map_err(|err| bad(err.to_string()))?;
            if e.pairs.is_empty() || e.pairs.iter().any(|&(i, j)| i >= l.n_sites() || j >= l.n_sites() || i == j) {
                return Err(bad("pair list empty or out of range".into()));
            }
            let vals = [e.purity, e.c0, e.c1, e.c2, e.r0, e.r1, e.r2];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite value".into()));
            }
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn find(&self, lx: usize, ly: usize, j: f64, beta: f64, p: f64) -> Option<&FixtureEntry> {
        self.entries.iter().find(|e| e.lx == lx && e.ly == ly && e.j == j && e.beta == beta && e.p == p)
    }
}

/// One exact entry for a torus, correlators at the farthest separation.
pub fn compute_entry(lx: usize, ly: usize, params: ModelParams) -> Result<FixtureEntry> {
    let l = LatticeSpec::square(lx, ly)?;
    let rho = decohered_gibbs_state(&l, params)?;
    let pairs = l.correlation_distance_pairs();
    let d = diagnostics(&rho, &pairs);
    Ok(FixtureEntry {
        lx,
        ly,
        j: params.j,
        beta: params.beta,
        p: params.p,
        pairs,
        purity: d.purity,
        c0: d.c0,
        c1: d.c1,
        c2: d.c2,
        r0: d.r0,
        r1: d.r1,
        r2: d.r2,
    })
}

/// Cartesian product of sizes and parameters, evaluated in parallel. Entry
/// order is the nested loop order sizes, J, p, beta.
pub fn compute_grid(sizes: &[(usize, usize)], js: &[f64], ps: &[f64], betas: &[f64]) -> Result<FixtureFile> {
    let mut cells = Vec::new();
    for &(lx, ly) in sizes {
        for &j in js {
            for &p in ps {
                for &beta in betas {
                    cells.push((lx, ly, ModelParams::new(j, beta, p)?));
                }
            }
        }
    }
    let entries = cells
        .into_par_iter()
        .map(|(lx, ly, m)| compute_entry(lx, ly, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(FixtureFile { fixture_version: FIXTURE_VERSION, entries })
}

/// The standard small-system grid used for estimator validation.
pub fn standard_grid() -> Result<FixtureFile> {
    compute_grid(&[(2, 2), (2, 3), (3, 3)], &[0.1, 0.3, 0.5], &[0.2, 0.5, 0.8], &[1.0, 4.0])
}
