use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use renyi_qmc::oracle::{fixtures, OracleLimits};
use renyi_qmc::runner::analyze::{analyze_tree, write_curves_csv, AnalyzeOptions, Tuning};
use renyi_qmc::runner::grid::{run_sweep, CellStatus, SweepConfig};
use renyi_qmc::runner::{ed_check, run_point, RunConfig, RunOutcome};
use renyi_qmc::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "renyi-qmc", version, about = "Renyi-2 diagnostics of the decohered transverse-field Ising model")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample one parameter point into a run directory.
    Run(RunArgs),
    /// Sample every cell of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resume: bool,
    },
    /// Compare sampled diagnostics with the dense oracle.
    EdCheck(EdCheckArgs),
    /// Crossings and collapse over a sweep tree.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "R2")]
        observable: String,
        #[arg(long, value_enum, default_value = "p")]
        tuning: TuningArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
    },
    /// Write oracle fixtures for the standard grid.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TuningArg {
    P,
    J,
}

/// Every flag overrides the matching key of `--config`.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lx: Option<i64>,
    #[arg(long)]
    ly: Option<i64>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Number or "2L".
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    replicas: Option<i64>,
    #[arg(long)]
    purity: bool,
    /// `weight_ratio` or `swapped`.
    #[arg(long)]
    sector_rule: Option<String>,
    /// `heat_bath` or `branching`.
    #[arg(long)]
    w_update: Option<String>,
    #[arg(long)]
    therm: Option<i64>,
    #[arg(long)]
    measure: Option<i64>,
    #[arg(long)]
    chains: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<i64>,
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EdCheckArgs {
    #[arg(long)]
    lx: usize,
    #[arg(long)]
    ly: Option<usize>,
    #[arg(long)]
    j: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    beta: String,
    #[arg(long, default_value_t = 2000)]
    therm: u64,
    #[arg(long, default_value_t = 100_000)]
    measure: u64,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    #[arg(long, default_value_t = OracleLimits::default().max_sites)]
    max_sites: usize,
}

fn beta_value(s: &str) -> toml::Value {
    match s.parse::<f64>() {
        Ok(b) => toml::Value::Float(b),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

fn run_config(a: &RunArgs) -> renyi_qmc::Result<RunConfig> {
    let mut t: toml::Table = match &a.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    let mut set = |k: &str, v: Option<toml::Value>| {
        if let Some(v) = v {
            t.insert(k.into(), v);
        }
    };
    set("lx", a.lx.map(toml::Value::Integer));
    set("ly", a.ly.map(toml::Value::Integer));
    set("j", a.j.map(toml::Value::Float));
    set("p", a.p.map(toml::Value::Float));
    set("beta", a.beta.as_deref().map(beta_value));
    set("replicas", a.replicas.map(toml::Value::Integer));
    set("purity", a.purity.then_some(toml::Value::Boolean(true)));
    set("sector_rule", a.sector_rule.clone().map(toml::Value::String));
    set("w_update", a.w_update.clone().map(toml::Value::String));
    set("chains", a.chains.map(toml::Value::Integer));
    set("seed", a.seed.map(|s| toml::Value::Integer(s as i64)));
    set("output_dir", a.output_dir.as_ref().map(|p| toml::Value::String(p.display().to_string())));
    set("checkpoint_every", a.checkpoint_every.map(toml::Value::Integer));
    if a.therm.is_some() || a.measure.is_some() {
        let sweeps = t.entry("sweeps").or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if let toml::Value::Table(s) = sweeps {
            if let Some(v) = a.therm {
                s.insert("therm".into(), toml::Value::Integer(v));
            }
            if let Some(v) = a.measure {
                s.insert("measure".into(), toml::Value::Integer(v));
            }
        }
    }
    RunConfig::from_table(t)
}

fn dispatch(cmd: Cmd) -> renyi_qmc::Result<u8> {
    match cmd {
        Cmd::Run(a) => {
            let cfg = run_config(&a)?.resolve()?;
            match run_point(&cfg, a.resume)? {
                RunOutcome::Completed { dir, .. } => println!("completed {}", dir.display()),
                RunOutcome::Skipped { dir, .. } => println!("already complete {}", dir.display()),
            }
            Ok(0)
        }
        Cmd::Sweep { config, seed, resume } => {
            let mut cfg = SweepConfig::read(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let records = run_sweep(&cfg, resume)?;
            let failed = records.iter().filter(|r| matches!(r.status, CellStatus::Failed(_))).count();
            println!("{} cells, {failed} failed", records.len());
            Ok(if failed == 0 { 0 } else { EXIT_RUNTIME })
        }
        Cmd::EdCheck(a) => {
            let rc = RunConfig {
                lx: a.lx,
                ly: a.ly,
                j: a.j,
                p: a.p,
                beta: match beta_value(&a.beta) {
                    toml::Value::Float(b) => renyi_qmc::runner::BetaSpec::Value(b),
                    _ => renyi_qmc::runner::BetaSpec::Token(a.beta.clone()),
                },
                replicas: 2,
                purity: true,
                sector_rule: renyi_qmc::SectorRule::WeightRatio,
                w_update: renyi_qmc::contour::WUpdate::HeatBath,
                sweeps: renyi_qmc::runner::SweepCounts { therm: a.therm, measure: a.measure },
                chains: a.chains,
                seed: a.seed,
                output_dir: PathBuf::new(),
                checkpoint_every: 0,
            };
            let report = ed_check(&rc.resolve()?, OracleLimits { max_sites: a.max_sites }, a.threshold)?;
            for s in &report.scores {
                match (s.value, s.stderr, s.z) {
                    (Some(v), Some(e), Some(z)) => {
                        println!("{:<7} exact {:>10.6}  qmc {:>10.6} +- {:<9.6} z {:+.2}", s.quantity, s.exact, v, e, z)
                    }
                    _ => println!("{:<7} exact {:>10.6}  {}", s.quantity, s.exact, s.note.as_deref().unwrap_or("")),
                }
            }
            println!("{}", if report.passed { "PASS" } else { "FAIL" });
            Ok(if report.passed { 0 } else { EXIT_CHECK })
        }
        Cmd::Analyze { input, observable, tuning, out, seed, n_boot } => {
            let mut opts = AnalyzeOptions {
                observable,
                tuning: match tuning {
                    TuningArg::P => Tuning::P,
                    TuningArg::J => Tuning::J,
                },
                ..Default::default()
            };
            opts.crossing.seed = seed;
            opts.crossing.n_boot = n_boot;
            opts.collapse.seed = seed;
            opts.slopes.seed = seed;
            let a = analyze_tree(&input, &opts)?;
            let out = out.unwrap_or_else(|| input.join("analysis.json"));
            std::fs::write(&out, serde_json::to_string_pretty(&a)?)?;
            let curves = out.with_file_name("curves.csv");
            write_curves_csv(std::fs::File::create(&curves)?, &a.curves)?;
            println!("wrote {} and {}", out.display(), curves.display());
            Ok(0)
        }
        Cmd::Fixtures { out } => {
            fixtures::standard_grid()?.write(&out)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::OracleTooLarge { .. } => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            })
        }
    }
}
