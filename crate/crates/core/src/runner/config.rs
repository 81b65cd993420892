//! TOML run configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::{SectorRule, WUpdate};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::oracle::ModelParams;

/// Either a number or the token `"2L"`, meaning `2 max(Lx, Ly)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Token(String),
}

impl BetaSpec {
    pub fn resolve(&self, lx: usize, ly: usize) -> Result<f64> {
        match self {
            BetaSpec::Value(b) => Ok(*b),
            BetaSpec::Token(t) if t.trim() == "2L" => Ok(2.0 * lx.max(ly) as f64),
            BetaSpec::Token(t) => Err(Error::Config(format!("beta must be a number or \"2L\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCounts {
    pub therm: u64,
    pub measure: u64,
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

/// One parameter point as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lx: usize,
    /// Defaults to `lx`.
    pub ly: Option<usize>,
    pub j: f64,
    pub p: f64,
    pub beta: BetaSpec,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// With two replicas, also sample the disconnected contour for the purity.
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
    /// Sweeps between checkpoints, 0 for none.
    #[serde(default)]
    pub checkpoint_every: u64,
}

/// Fully resolved configuration, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub lx: usize,
    pub ly: usize,
    pub j: f64,
    pub p: f64,
    pub beta: f64,
    pub replicas: usize,
    pub purity: bool,
    pub sector_rule: SectorRule,
    pub w_update: WUpdate,
    pub sweeps: SweepCounts,
    pub chains: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub checkpoint_every: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let ly = self.ly.unwrap_or(self.lx);
        let c = ResolvedConfig {
            lx: self.lx,
            ly,
            j: self.j,
            p: self.p,
            beta: self.beta.resolve(self.lx, ly)?,
            replicas: self.replicas,
            purity: self.purity,
            sector_rule: self.sector_rule,
            w_update: self.w_update,
            sweeps: self.sweeps,
            chains: self.chains,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            checkpoint_every: self.checkpoint_every,
        };
        c.validate()?;
        Ok(c)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.lattice()?;
        self.params()?;
        if !matches!(self.replicas, 1 | 2) {
            return Err(Error::Config(format!("replicas must be 1 or 2, got {}", self.replicas)));
        }
        if self.purity && self.replicas != 2 {
            return Err(Error::Config("purity needs replicas = 2".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.sweeps.measure == 0 {
            return Err(Error::Config("sweeps.measure must be positive".into()));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        LatticeSpec::square(self.lx, self.ly).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.j, self.beta, self.p).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
lx = 8
j = 0.1
p = 0.35
beta = "2L"
chains = 2
seed = 7
output_dir = "out"
[sweeps]
therm = 10
measure = 100
"#;

    #[test]
    fn two_l_token_resolves() {
        let c = RunConfig::from_toml(BASE).unwrap().resolve().unwrap();
        assert_eq!(c.beta, 16.0);
        assert_eq!((c.lx, c.ly, c.replicas), (8, 8, 2));
        let c = RunConfig::from_toml(&BASE.replace("\"2L\"", "3.5")).unwrap().resolve().unwrap();
        assert_eq!(c.beta, 3.5);
        let bad = RunConfig::from_toml(&BASE.replace("\"2L\"", "\"3L\"")).unwrap();
        assert!(matches!(bad.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_and_invalid_keys_are_errors() {
        assert!(RunConfig::from_toml(&format!("{BASE}\nbogus = 1")).is_err());
        assert!(RunConfig::from_toml(&BASE.replace("therm = 10", "therm = 10\nwarm = 3")).is_err());
        assert!(RunConfig::from_toml(&BASE.replace("seed = 7", "")).is_err());
        let c = RunConfig::from_toml(&BASE.replace("p = 0.35", "p = 1.5")).unwrap();
        assert!(c.resolve().is_err());
        let c = RunConfig::from_toml(&BASE.replace("chains = 2", "chains = 2\nreplicas = 1\npurity = true")).unwrap();
        assert!(c.resolve().is_err());
    }
}
