//! Parameter grids: one run directory per `(L, J, p)` cell.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BetaSpec, ResolvedConfig, RunConfig, SweepCounts};
use super::{run_point, RunOutcome};
use crate::contour::{SectorRule, WUpdate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Linear sizes of square lattices.
    pub l: Vec<usize>,
    pub j: Vec<f64>,
    pub p: Vec<f64>,
}

fn default_replicas() -> usize {
    2
}

fn default_chains() -> usize {
    1
}

fn default_rule() -> SectorRule {
    SectorRule::WeightRatio
}

fn default_w_update() -> WUpdate {
    WUpdate::HeatBath
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta: BetaSpec,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub purity: bool,
    #[serde(default = "default_rule")]
    pub sector_rule: SectorRule,
    #[serde(default = "default_w_update")]
    pub w_update: WUpdate,
    pub sweeps: SweepCounts,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_every: u64,
    pub grid: Grid,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolved configuration of every cell, in `L`, `J`, `p` order.
    pub fn cells(&self) -> Result<Vec<ResolvedConfig>> {
        let g = &self.grid;
        if g.l.is_empty() || g.j.is_empty() || g.p.is_empty() {
            return Err(Error::Config("grid needs at least one value of each of l, j, p".into()));
        }
        let mut out = Vec::new();
        for &l in &g.l {
            for &j in &g.j {
                for &p in &g.p {
                    let rc = RunConfig {
                        lx: l,
                        ly: None,
                        j,
                        p,
                        beta: self.beta.clone(),
                        replicas: self.replicas,
                        purity: self.purity,
                        sector_rule: self.sector_rule,
                        w_update: self.w_update,
                        sweeps: self.sweeps,
                        chains: self.chains,
                        seed: cell_seed(self.seed, l, j, p),
                        output_dir: self.output_dir.join(cell_name(l, j, p)),
                        checkpoint_every: self.checkpoint_every,
                    };
                    out.push(rc.resolve()?);
                }
            }
        }
        Ok(out)
    }
}

pub fn cell_name(l: usize, j: f64, p: f64) -> String {
    format!("L{l}_J{j}_p{p}")
}

/// First eight bytes (little endian) of SHA-256 over the root seed and the
/// cell coordinates.
pub fn cell_seed(seed: u64, l: usize, j: f64, p: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((l as u64).to_le_bytes());
    h.update(j.to_bits().to_le_bytes());
    h.update(p.to_bits().to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dir: PathBuf,
    pub status: CellStatus,
}

pub const INDEX: &str = "sweep_index.json";

/// Runs every cell, grid cells in parallel. Failures are recorded and do not
/// stop other cells. With `resume`, complete cells are skipped and partial
/// ones continue from their checkpoints.
pub fn run_sweep(cfg: &SweepConfig, resume: bool) -> Result<Vec<CellRecord>> {
    let cells = cfg.cells()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let index: Mutex<Vec<CellRecord>> = Mutex::new(Vec::new());
    cells.par_iter().for_each(|c| {
        let status = match run_point(c, resume) {
            Ok(RunOutcome::Completed { .. }) => CellStatus::Completed,
            Ok(RunOutcome::Skipped { .. }) => CellStatus::Skipped,
            Err(e) => {
                log::error!("{}: {e}", c.output_dir.display());
                CellStatus::Failed(e.to_string())
            }
        };
        index.lock().expect("index lock").push(CellRecord { dir: c.output_dir.clone(), status });
    });
    let mut records = index.into_inner().expect("index lock");
    records.sort_by(|a, b| a.dir.cmp(&b.dir));
    std::fs::write(cfg.output_dir.join(INDEX), serde_json::to_string_pretty(&records)?)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> String {
        format!(
            r#"
beta = 1.0
chains = 1
seed = 3
output_dir = "{}"
[sweeps]
therm = 10
measure = 150
[grid]
l = [2, 3]
j = [0.3]
p = [0.2, 0.6]
"#,
            dir.display()
        )
    }

    #[test]
    fn grid_runs_and_resumes() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = SweepConfig::from_toml(&config(tmp.path())).unwrap();
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert_ne!(cells[0].seed, cells[1].seed);
        let first = run_sweep(&cfg, false).unwrap();
        assert!(first.iter().all(|r| r.status == CellStatus::Completed), "{first:?}");
        let second = run_sweep(&cfg, true).unwrap();
        assert!(second.iter().all(|r| r.status == CellStatus::Skipped));
        let third = run_sweep(&cfg, false).unwrap();
        assert!(third.iter().all(|r| matches!(r.status, CellStatus::Failed(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let text = config(tmp.path()).replace("[grid]", "[grid]\nbeta = [1.0]");
        assert!(SweepConfig::from_toml(&text).is_err());
    }
}
