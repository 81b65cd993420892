//! Finite-size-scaling analysis of a tree of finished run directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{completed_run, sha256_file, Summary, MANIFEST};
use crate::error::{Error, Result};
use crate::scaling::{
    collapse_fit, crossing_pairs, find_crossing, nu_from_slopes, CollapseFit, CollapseOptions, Crossing, CrossingOptions,
    CurvePoint, RatioCurve, SlopeExponent, SlopeOptions,
};

pub const ANALYSIS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    P,
    J,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    /// Summary key, e.g. `R2`.
    pub observable: String,
    pub tuning: Tuning,
    pub crossing: CrossingOptions,
    pub collapse: CollapseOptions,
    pub slopes: SlopeOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            observable: "R2".into(),
            tuning: Tuning::P,
            crossing: CrossingOptions::default(),
            collapse: CollapseOptions::default(),
            slopes: SlopeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRun {
    pub run: PathBuf,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub analysis_version: u32,
    pub observable: String,
    pub tuning: Tuning,
    /// Value of the parameter held fixed (`J` when tuning `p`).
    pub fixed: f64,
    pub curves: Vec<RatioCurve>,
    pub crossings: Vec<Crossing>,
    pub collapse: Option<CollapseFit>,
    pub collapse_error: Option<String>,
    pub slope_nu: Option<SlopeExponent>,
    pub slope_error: Option<String>,
    pub inputs: Vec<InputRun>,
}

fn summaries(root: &Path, out: &mut Vec<(PathBuf, Summary)>) -> Result<()> {
    if let Some((_, s)) = completed_run(root) {
        out.push((root.to_path_buf(), s));
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if p.is_dir() && !name.ends_with(".partial") && !name.ends_with(".failed") {
            summaries(&p, out)?;
        }
    }
    Ok(())
}

/// Builds one curve per linear size from the summaries, with the tuned
/// parameter as `x`.
pub fn curves_from_summaries(runs: &[Summary], observable: &str, tuning: Tuning) -> Result<(f64, Vec<RatioCurve>)> {
    let fixed_of = |s: &Summary| match tuning {
        Tuning::P => s.j,
        Tuning::J => s.p,
    };
    let Some(first) = runs.first() else {
        return Err(Error::InsufficientData("no finished runs".into()));
    };
    let fixed = fixed_of(first);
    if let Some(s) = runs.iter().find(|s| fixed_of(s) != fixed) {
        return Err(Error::Config(format!("runs mix fixed-parameter values {fixed} and {}", fixed_of(s))));
    }
    let mut by_l: BTreeMap<usize, Vec<CurvePoint>> = BTreeMap::new();
    for s in runs {
        if s.lx != s.ly {
            return Err(Error::Config(format!("non-square run {}x{}", s.lx, s.ly)));
        }
        let Some(e) = s.estimate(observable) else {
            log::warn!("L={} p={} J={}: no {observable} estimate, skipped", s.lx, s.p, s.j);
            continue;
        };
        if !(e.stderr > 0.0) {
            log::warn!("L={} p={} J={}: zero error on {observable}, skipped", s.lx, s.p, s.j);
            continue;
        }
        let x = match tuning {
            Tuning::P => s.p,
            Tuning::J => s.j,
        };
        by_l.entry(s.lx).or_default().push(CurvePoint { x, r: e.value, sigma: e.stderr });
    }
    let mut curves = Vec::new();
    for (l, mut pts) in by_l {
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
        curves.push(RatioCurve::new(l, pts)?);
    }
    Ok((fixed, curves))
}

/// Crossings of `(L, 2L)` pairs (or neighbours), a collapse fit when three or
/// more sizes are present, and the slope exponent at the mean crossing.
pub fn analyze_curves(curves: &[RatioCurve], opts: &AnalyzeOptions) -> (Vec<Crossing>, Result<CollapseFit>, Result<SlopeExponent>) {
    let sizes: Vec<usize> = curves.iter().map(|c| c.l).collect();
    let by_l = |l: usize| curves.iter().find(|c| c.l == l).expect("size present");
    let mut crossings = Vec::new();
    for (a, b) in crossing_pairs(&sizes) {
        match find_crossing(by_l(a), by_l(b), opts.crossing) {
            Ok(c) => crossings.push(c),
            Err(e) => log::warn!("crossing L={a}/L={b}: {e}"),
        }
    }
    let xs: Vec<f64> = crossings.iter().filter_map(|c| c.x).collect();
    let x0 = if xs.is_empty() {
        let (lo, hi) = curves.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let (a, b) = c.x_range();
            (lo.min(a), hi.max(b))
        });
        0.5 * (lo + hi)
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let collapse = collapse_fit(curves, x0, 1.0, opts.collapse);
    let slope_x = collapse.as_ref().map(|c| c.x_c).unwrap_or(x0);
    let slopes = nu_from_slopes(curves, slope_x, opts.slopes);
    (crossings, collapse, slopes)
}

pub fn analyze_tree(root: &Path, opts: &AnalyzeOptions) -> Result<Analysis> {
    let mut found = Vec::new();
    summaries(root, &mut found)?;
    let runs: Vec<Summary> = found.iter().map(|(_, s)| s.clone()).collect();
    let (fixed, curves) = curves_from_summaries(&runs, &opts.observable, opts.tuning)?;
    let (crossings, collapse, slopes) = analyze_curves(&curves, opts);
    let mut inputs = Vec::new();
    for (dir, _) in &found {
        inputs.push(InputRun {
            run: dir.strip_prefix(root).unwrap_or(dir).to_path_buf(),
            manifest_sha256: sha256_file(&dir.join(MANIFEST))?,
        });
    }
    let (collapse, collapse_error) = split(collapse);
    let (slope_nu, slope_error) = split(slopes);
    Ok(Analysis {
        analysis_version: ANALYSIS_VERSION,
        observable: opts.observable.clone(),
        tuning: opts.tuning,
        fixed,
        curves,
        crossings,
        collapse,
        collapse_error,
        slope_nu,
        slope_error,
        inputs,
    })
}

/// Columns of the flat curves table.
pub const CURVES_HEADER: [&str; 4] = ["L", "x", "R", "sigma"];

/// Writes every curve point as one `L,x,R,sigma` row, curves in size order.
pub fn write_curves_csv<W: std::io::Write>(out: W, curves: &[RatioCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVES_HEADER)?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.l.to_string(), p.x.to_string(), p.r.to_string(), p.sigma.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}
