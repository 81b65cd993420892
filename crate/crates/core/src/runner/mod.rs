//! Configuration, seeding, chain orchestration and run directories.
//!
//! Seeding: every chain draws from `ChaCha8Rng::seed_from_u64(seed)` with the
//! stream set to `(ensemble << 32) | chain` (see [`chain_rng`]), so chains
//! never share a stream and a run is reproducible from its root seed.
//!
//! A run directory holds `manifest.json`, one `measurements_<ensemble>.csv`
//! per ensemble and `summary.json`. It is built under `<dir>.partial` and
//! renamed into place on success; on failure it is moved to `<dir>.failed`.

pub mod analyze;
pub mod checkpoint;
pub mod config;
pub mod grid;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{BetaSpec, ResolvedConfig, RunConfig, SweepCounts};

use crate::contour::{ContourOptions, ContourState, Measurement, SweepStats, Topology};
use crate::error::{Error, Result};
use crate::estimators::{self, BinderKind, MeasurementRow, Observable, RatioEstimate};
use crate::oracle::{self, OracleLimits};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_VERSION: u32 = 1;

/// One sampled contour family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// One replica, `Tr(rho)`.
    Single,
    /// Two connected replicas, `Tr(rho^2)`.
    Replica,
    /// Two disconnected replicas, `Tr(rho)^2`.
    Disconnected,
}

impl Ensemble {
    pub fn index(self) -> u64 {
        match self {
            Ensemble::Single => 0,
            Ensemble::Replica => 1,
            Ensemble::Disconnected => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ensemble::Single => "single",
            Ensemble::Replica => "replica",
            Ensemble::Disconnected => "disconnected",
        }
    }

    pub fn contour_options(self, cfg: &ResolvedConfig) -> ContourOptions {
        let (replicas, topology) = match self {
            Ensemble::Single => (1, Topology::Connected),
            Ensemble::Replica => (2, Topology::Connected),
            Ensemble::Disconnected => (2, Topology::Disconnected),
        };
        ContourOptions { replicas, topology, sector_rule: cfg.sector_rule, w_update: cfg.w_update, ..Default::default() }
    }

    /// Ensembles sampled for a configuration.
    pub fn for_config(cfg: &ResolvedConfig) -> Vec<Ensemble> {
        match (cfg.replicas, cfg.purity) {
            (1, _) => vec![Ensemble::Single],
            (_, false) => vec![Ensemble::Replica],
            (_, true) => vec![Ensemble::Replica, Ensemble::Disconnected],
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stream id of one chain.
pub fn stream_id(ensemble: Ensemble, chain: usize) -> u64 {
    (ensemble.index() << 32) | chain as u64
}

/// Generator of one chain: the root seed expanded by ChaCha's seeding, on its
/// own stream.
pub fn chain_rng(seed: u64, ensemble: Ensemble, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(ensemble, chain));
    rng
}

/// Everything needed to continue a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub ensemble: Ensemble,
    pub chain: usize,
    pub contour: ContourState,
    pub sweeps_done: u64,
    pub rows: Vec<MeasurementRow>,
    pub stats: SweepStats,
}

impl ChainState {
    pub fn new(cfg: &ResolvedConfig, ensemble: Ensemble, chain: usize) -> Result<Self> {
        let contour = ContourState::new(
            cfg.lattice()?,
            cfg.params()?,
            ensemble.contour_options(cfg),
            chain_rng(cfg.seed, ensemble, chain),
        )?;
        Ok(ChainState { ensemble, chain, contour, sweeps_done: 0, rows: Vec::new(), stats: SweepStats::default() })
    }

    pub fn validate(&self) -> Result<()> {
        self.contour.validate()?;
        let measured = self.rows.len() as u64;
        if self.rows.iter().enumerate().any(|(k, r)| r.chain != self.chain || r.sweep_index != k as u64) {
            return Err(Error::Checkpoint("measurement rows out of sequence".into()));
        }
        if measured > self.sweeps_done {
            return Err(Error::Checkpoint(format!("{measured} rows after {} sweeps", self.sweeps_done)));
        }
        Ok(())
    }

    /// Advances to `target` total sweeps, recording one row per sweep after
    /// `therm`. `hook` runs after every sweep with the updated state.
    pub fn advance<F: FnMut(&ChainState) -> Result<()>>(&mut self, therm: u64, target: u64, mut hook: F) -> Result<()> {
        let pairs = self.contour.lattice().correlation_distance_pairs();
        while self.sweeps_done < target {
            let s = self.contour.sweep();
            self.stats.merge(&s);
            if self.sweeps_done >= therm {
                let m = self.contour.measure(&pairs);
                self.rows.push(MeasurementRow::new(self.chain, self.sweeps_done - therm, &m));
            }
            self.sweeps_done += 1;
            hook(self)?;
        }
        Ok(())
    }
}

/// Chains of one ensemble after sampling.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub ensemble: Ensemble,
    pub chains: Vec<ChainState>,
    pub seconds: f64,
}

impl EnsembleRun {
    pub fn rows(&self) -> Vec<MeasurementRow> {
        self.chains.iter().flat_map(|c| c.rows.iter().copied()).collect()
    }

    pub fn measurements(&self) -> Vec<Vec<Measurement>> {
        self.chains.iter().map(|c| c.rows.iter().map(|r| r.measurement()).collect()).collect()
    }

    pub fn stats(&self) -> SweepStats {
        let mut s = SweepStats::default();
        for c in &self.chains {
            s.merge(&c.stats);
        }
        s
    }
}

fn checkpoint_path(dir: &Path, e: Ensemble, chain: usize) -> PathBuf {
    dir.join(format!("{}_{chain}.ckpt", e.name()))
}

/// Samples every chain of every ensemble in parallel. With `checkpoints`,
/// chains resume from existing snapshots there and save every
/// `checkpoint_every` sweeps.
pub fn simulate(cfg: &ResolvedConfig, ensembles: &[Ensemble], checkpoints: Option<&Path>) -> Result<Vec<EnsembleRun>> {
    cfg.validate()?;
    let total = cfg.sweeps.therm + cfg.sweeps.measure;
    let jobs: Vec<(Ensemble, usize)> = ensembles.iter().flat_map(|&e| (0..cfg.chains).map(move |k| (e, k))).collect();
    let results: Vec<Result<(ChainState, f64)>> = jobs
        .par_iter()
        .map(|&(e, k)| {
            let path = checkpoints.map(|d| checkpoint_path(d, e, k));
            let mut st = match &path {
                Some(p) if p.exists() => {
                    let st = checkpoint::load(p)?;
                    if st.ensemble != e || st.chain != k || st.contour.params() != cfg.params()? {
                        return Err(Error::Checkpoint(format!("{} does not belong to this run", p.display())));
                    }
                    log::info!("resuming {e} chain {k} at sweep {}", st.sweeps_done);
                    st
                }
                _ => ChainState::new(cfg, e, k)?,
            };
            let t = Instant::now();
            let every = cfg.checkpoint_every;
            st.advance(cfg.sweeps.therm, total, |s| match &path {
                Some(p) if every > 0 && s.sweeps_done % every == 0 && s.sweeps_done < total => checkpoint::save(p, s),
                _ => Ok(()),
            })?;
            Ok((st, t.elapsed().as_secs_f64()))
        })
        .collect();
    let mut out: Vec<EnsembleRun> = ensembles.iter().map(|&e| EnsembleRun { ensemble: e, chains: Vec::new(), seconds: 0.0 }).collect();
    for r in results {
        let (st, secs) = r?;
        let slot = out.iter_mut().find(|x| x.ensemble == st.ensemble).expect("known ensemble");
        slot.seconds += secs;
        slot.chains.push(st);
    }
    for run in &mut out {
        run.chains.sort_by_key(|c| c.chain);
    }
    Ok(out)
}

/// Estimate or the reason it could not be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    #[serde(flatten)]
    pub estimate: Option<RatioEstimate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl EstimateEntry {
    fn from_result(r: Result<RatioEstimate>) -> Self {
        match r {
            Ok(e) => EstimateEntry { estimate: Some(e), error: None },
            Err(e) => EstimateEntry { estimate: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub to_s2_acceptance: Option<f64>,
    pub to_s1_acceptance: Option<f64>,
    pub null_fraction: Option<f64>,
}

impl SectorSummary {
    fn from_stats(s: &SweepStats) -> Self {
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        SectorSummary {
            to_s2_acceptance: ratio(s.to_s2_accepted, s.to_s2_proposed),
            to_s1_acceptance: ratio(s.to_s1_accepted, s.to_s1_proposed),
            null_fraction: ratio(s.null_moves, s.to_s2_proposed),
        }
    }
}

/// Per-run JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub summary_version: u32,
    pub code_version: String,
    pub lx: usize,
    pub ly: usize,
    pub j: f64,
    pub beta: f64,
    pub p: f64,
    pub seed: u64,
    pub chains: usize,
    pub therm: u64,
    pub measure: u64,
    /// Extra leading rows dropped per chain, by ensemble.
    pub warmup_cut: BTreeMap<Ensemble, usize>,
    pub estimates: BTreeMap<String, EstimateEntry>,
    pub sectors: BTreeMap<Ensemble, SectorSummary>,
}

impl Summary {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Summary = serde_json::from_str(text)?;
        if s.summary_version != SUMMARY_VERSION {
            return Err(Error::Config(format!("summary version {} unsupported", s.summary_version)));
        }
        Ok(s)
    }

    pub fn estimate(&self, key: &str) -> Option<&RatioEstimate> {
        self.estimates.get(key).and_then(|e| e.estimate.as_ref())
    }
}

fn estimates_for(e: Ensemble, chains: &[Vec<Measurement>]) -> Vec<(String, Result<RatioEstimate>)> {
    use estimators::{binder_ratio, mean_of, MIN_BINDER_BINS as B, MIN_MEAN_BINS as M};
    let mut v: Vec<(&str, Result<RatioEstimate>)> = Vec::new();
    match e {
        Ensemble::Single => {
            v.push(("C0", mean_of(chains, Observable::C0, M)));
            v.push(("M1", mean_of(chains, Observable::M1, M)));
            v.push(("R0", binder_ratio(chains, BinderKind::R0, B)));
        }
        Ensemble::Replica => {
            v.push(("C1", mean_of(chains, Observable::C1, M)));
            v.push(("C2", mean_of(chains, Observable::C2, M)));
            v.push(("M1", mean_of(chains, Observable::M1, M)));
            v.push(("R1", binder_ratio(chains, BinderKind::R1, B)));
            v.push(("R2", binder_ratio(chains, BinderKind::R2, B)));
            v.push(("sector_fraction", mean_of(chains, Observable::SectorFraction, M)));
            v.push(("collision_connected", mean_of(chains, Observable::Collision, M)));
        }
        Ensemble::Disconnected => {
            v.push(("collision_disconnected", mean_of(chains, Observable::Collision, M)));
        }
    }
    v.into_iter().map(|(k, r)| (k.to_string(), r)).collect()
}

/// Summary key of a quantity measured on more than one ensemble.
fn keyed(e: Ensemble, k: &str, ensembles: &[Ensemble]) -> String {
    if k == "M1" && ensembles.len() > 1 {
        format!("M1_{}", e.name())
    } else {
        k.to_string()
    }
}

/// Drops the warmup rows and forms every estimate.
pub fn summarize(cfg: &ResolvedConfig, runs: &[EnsembleRun]) -> Summary {
    let mut estimates = BTreeMap::new();
    let mut warmup = BTreeMap::new();
    let mut sectors = BTreeMap::new();
    let ensembles: Vec<Ensemble> = runs.iter().map(|r| r.ensemble).collect();
    for run in runs {
        let all = run.measurements();
        let tau = estimates_for(run.ensemble, &all)
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok().map(|e| e.autocorrelation_time))
            .filter(|t| t.is_finite())
            .fold(0.0, f64::max);
        let measured = all.iter().map(|c| c.len()).min().unwrap_or(0);
        let cut = estimators::warmup_cut(cfg.sweeps.therm as usize, measured, tau);
        warmup.insert(run.ensemble, cut);
        let kept: Vec<Vec<Measurement>> = all.iter().map(|c| c[cut.min(c.len())..].to_vec()).collect();
        for (k, r) in estimates_for(run.ensemble, &kept) {
            estimates.insert(keyed(run.ensemble, &k, &ensembles), EstimateEntry::from_result(r));
        }
        sectors.insert(run.ensemble, SectorSummary::from_stats(&run.stats()));
    }
    if let (Some(d), Some(c)) = (
        estimates.get("collision_disconnected").and_then(|e: &EstimateEntry| e.estimate),
        estimates.get("collision_connected").and_then(|e: &EstimateEntry| e.estimate),
    ) {
        estimates.insert("purity".into(), EstimateEntry::from_result(estimators::purity_ratio(&d, &c)));
    }
    Summary {
        summary_version: SUMMARY_VERSION,
        code_version: CODE_VERSION.into(),
        lx: cfg.lx,
        ly: cfg.ly,
        j: cfg.j,
        beta: cfg.beta,
        p: cfg.p,
        seed: cfg.seed,
        chains: cfg.chains,
        therm: cfg.sweeps.therm,
        measure: cfg.sweeps.measure,
        warmup_cut: warmup,
        estimates,
        sectors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSeed {
    pub ensemble: Ensemble,
    pub chain: usize,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub code_version: String,
    pub config: ResolvedConfig,
    pub ensembles: Vec<Ensemble>,
    pub chain_seeds: Vec<ChainSeed>,
    #[serde(default)]
    pub fixture_version: Option<u32>,
    pub started_unix: u64,
    #[serde(default)]
    pub finished_unix: Option<u64>,
    /// Sweeps per second per chain, by ensemble.
    #[serde(default)]
    pub sweep_rate: BTreeMap<Ensemble, f64>,
}

impl RunManifest {
    pub fn new(cfg: &ResolvedConfig) -> Self {
        let ensembles = Ensemble::for_config(cfg);
        let chain_seeds = ensembles
            .iter()
            .flat_map(|&e| (0..cfg.chains).map(move |k| ChainSeed { ensemble: e, chain: k, seed: cfg.seed, stream: stream_id(e, k) }))
            .collect();
        RunManifest {
            code_version: CODE_VERSION.into(),
            config: cfg.clone(),
            ensembles,
            chain_seeds,
            fixture_version: None,
            started_unix: unix_now(),
            finished_unix: None,
            sweep_rate: BTreeMap::new(),
        }
    }

    /// True when two manifests describe the same sampling.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.config == other.config && self.ensembles == other.ensembles && self.chain_seeds == other.chain_seeds
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
const CHECKPOINTS: &str = "checkpoints";

pub fn csv_name(e: Ensemble) -> String {
    format!("measurements_{}.csv", e.name())
}

fn with_suffix(dir: &Path, suffix: &str) -> PathBuf {
    let mut s = dir.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn partial_dir(dir: &Path) -> PathBuf {
    with_suffix(dir, ".partial")
}

pub fn failed_dir(dir: &Path) -> PathBuf {
    with_suffix(dir, ".failed")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let tmp = with_suffix(path, ".tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(v)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// A finished run directory: manifest and summary both parse.
pub fn completed_run(dir: &Path) -> Option<(RunManifest, Summary)> {
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST)).ok()?).ok()?;
    let s = Summary::from_json(&std::fs::read_to_string(dir.join(SUMMARY)).ok()?).ok()?;
    m.finished_unix.is_some().then_some((m, s))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed { dir: PathBuf, summary: Summary },
    /// Already complete; nothing sampled.
    Skipped { dir: PathBuf, summary: Summary },
}

impl RunOutcome {
    pub fn summary(&self) -> &Summary {
        match self {
            RunOutcome::Completed { summary, .. } | RunOutcome::Skipped { summary, .. } => summary,
        }
    }
}

/// Runs one parameter point into `cfg.output_dir`.
///
/// An existing complete directory is an error unless `resume` is set, in
/// which case it is returned untouched. A leftover `.partial` directory is
/// continued from its checkpoints with `resume` and refused otherwise.
pub fn run_point(cfg: &ResolvedConfig, resume: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let partial = partial_dir(&dir);
    if dir.exists() {
        return match completed_run(&dir) {
            Some((m, summary)) if resume && m.config == *cfg => Ok(RunOutcome::Skipped { dir, summary }),
            Some(_) if resume => Err(Error::Config(format!("{} holds a run with a different configuration", dir.display()))),
            _ => Err(Error::Config(format!("{} already exists", dir.display()))),
        };
    }
    let mut manifest = RunManifest::new(cfg);
    if partial.exists() {
        if !resume {
            return Err(Error::Config(format!("{} exists; pass --resume to continue it", partial.display())));
        }
        let old: RunManifest = serde_json::from_str(&std::fs::read_to_string(partial.join(MANIFEST))?)?;
        if !old.same_run(&manifest) {
            return Err(Error::Config(format!("{} was started with a different configuration", partial.display())));
        }
        manifest.started_unix = old.started_unix;
    }
    std::fs::create_dir_all(partial.join(CHECKPOINTS))?;
    match fill_run_dir(cfg, &partial, &mut manifest) {
        Ok(summary) => {
            std::fs::rename(&partial, &dir)?;
            Ok(RunOutcome::Completed { dir, summary })
        }
        Err(e) => {
            let failed = failed_dir(&dir);
            if failed.exists() {
                std::fs::remove_dir_all(&failed)?;
            }
            if let Err(mv) = std::fs::rename(&partial, &failed) {
                log::error!("could not quarantine {}: {mv}", partial.display());
            }
            Err(e)
        }
    }
}

fn fill_run_dir(cfg: &ResolvedConfig, partial: &Path, manifest: &mut RunManifest) -> Result<Summary> {
    write_json(&partial.join(MANIFEST), manifest)?;
    let ckpt = partial.join(CHECKPOINTS);
    let runs = simulate(cfg, &manifest.ensembles, Some(&ckpt))?;
    for run in &runs {
        let f = std::fs::File::create(partial.join(csv_name(run.ensemble)))?;
        estimators::write_csv(std::io::BufWriter::new(f), &run.rows())?;
        let sweeps = (cfg.sweeps.therm + cfg.sweeps.measure) as f64 * run.chains.len() as f64;
        if run.seconds > 0.0 {
            manifest.sweep_rate.insert(run.ensemble, sweeps / run.seconds);
        }
    }
    let summary = summarize(cfg, &runs);
    write_json(&partial.join(SUMMARY), &summary)?;
    std::fs::remove_dir_all(&ckpt)?;
    manifest.finished_unix = Some(unix_now());
    write_json(&partial.join(MANIFEST), manifest)?;
    Ok(summary)
}

/// One exact-versus-sampled comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub quantity: String,
    pub exact: f64,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdCheckReport {
    pub config: ResolvedConfig,
    pub scores: Vec<ZScore>,
    pub threshold: f64,
    pub passed: bool,
}

/// Samples all three ensembles and compares every diagnostic with the dense
/// oracle. `cfg.replicas`, `cfg.purity` and `cfg.output_dir` are ignored.
pub fn ed_check(cfg: &ResolvedConfig, limits: OracleLimits, threshold: f64) -> Result<EdCheckReport> {
    cfg.validate()?;
    let lattice = cfg.lattice()?;
    if lattice.n_sites() > limits.max_sites {
        return Err(Error::OracleTooLarge { n: lattice.n_sites(), cap: limits.max_sites });
    }
    let rho = oracle::decohered_gibbs_state(&lattice, cfg.params()?)?;
    let exact = oracle::diagnostics(&rho, &lattice.correlation_distance_pairs());
    let runs = simulate(cfg, &[Ensemble::Single, Ensemble::Replica, Ensemble::Disconnected], None)?;
    let summary = summarize(cfg, &runs);
    let mut scores = Vec::new();
    let mut passed = true;
    for (q, x) in [
        ("purity", exact.purity),
        ("C0", exact.c0),
        ("C1", exact.c1),
        ("C2", exact.c2),
        ("R0", exact.r0),
        ("R1", exact.r1),
        ("R2", exact.r2),
    ] {
        let entry = summary.estimates.get(q);
        let s = match entry.and_then(|e| e.estimate) {
            Some(e) => {
                let z = if e.stderr > 0.0 {
                    (e.value - x) / e.stderr
                } else if (e.value - x).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                passed &= z.abs() <= threshold;
                ZScore { quantity: q.into(), exact: x, value: Some(e.value), stderr: Some(e.stderr), z: Some(z), note: None }
            }
            None => {
                passed = false;
                let note = entry.and_then(|e| e.error.clone()).unwrap_or_else(|| "not estimated".into());
                ZScore { quantity: q.into(), exact: x, value: None, stderr: None, z: None, note: Some(note) }
            }
        };
        scores.push(s);
    }
    Ok(EdCheckReport { config: cfg.clone(), scores, threshold, passed })
}
