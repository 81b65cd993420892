//! Correlators, Binder ratios and the purity ratio from per-sweep records.
//!
//! Slice estimators: inserting `Z_i Z_j` at a junction multiplies the
//! configuration weight by the product of the junction spins, so on the
//! two-replica contour `C1` is the slice product `z_i z_j` and `C2` the
//! product over both slices. `C0` comes from the one-replica contour.

pub mod jackknife;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use jackknife::{auto_jackknife, bin_and_jackknife, RatioEstimate, Samples};

use crate::contour::Measurement;
use crate::error::{Error, Result};

/// Minimum number of bins behind a Binder ratio.
pub const MIN_BINDER_BINS: usize = 100;
/// Minimum number of bins behind a plain mean.
pub const MIN_MEAN_BINS: usize = 20;

/// One CSV row: a measurement tagged with its chain and sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub chain: usize,
    pub sweep_index: u64,
    #[serde(rename = "M1")]
    pub m1: i32,
    #[serde(rename = "M2")]
    pub m2: i32,
    #[serde(rename = "Q")]
    pub q: i32,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1_maxdist")]
    pub c1: f64,
    #[serde(rename = "C2_maxdist")]
    pub c2: f64,
    pub sector_fraction: f64,
    pub collision: Option<f64>,
}

impl MeasurementRow {
    pub fn new(chain: usize, sweep_index: u64, m: &Measurement) -> Self {
        MeasurementRow {
            chain,
            sweep_index,
            m1: m.m1,
            m2: m.m2,
            q: m.q,
            c0: m.c0,
            c1: m.c1,
            c2: m.c2,
            sector_fraction: m.sector_fraction,
            collision: m.collision,
        }
    }

    pub fn measurement(&self) -> Measurement {
        Measurement {
            m1: self.m1,
            m2: self.m2,
            q: self.q,
            c0: self.c0,
            c1: self.c1,
            c2: self.c2,
            sector_fraction: self.sector_fraction,
            collision: self.collision,
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[MeasurementRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows and checks the per-row invariants.
pub fn read_csv<R: Read>(input: R, n_sites: usize) -> Result<Vec<MeasurementRow>> {
    let mut rows = Vec::new();
    for (k, r) in csv::Reader::from_reader(input).deserialize().enumerate() {
        let r: MeasurementRow = r?;
        validate_row(&r, n_sites).map_err(|m| Error::parse(k + 2, m))?;
        rows.push(r);
    }
    Ok(rows)
}

fn validate_row(r: &MeasurementRow, n: usize) -> std::result::Result<(), String> {
    let n = n as i64;
    for (name, v) in [("M1", r.m1), ("M2", r.m2), ("Q", r.q)] {
        let v = v as i64;
        if v.abs() > n || (v - n).rem_euclid(2) != 0 {
            return Err(format!("{name} = {v} impossible for {n} sites"));
        }
    }
    for (name, v) in [("C0", r.c0), ("C1", r.c1), ("C2", r.c2)] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(format!("{name} = {v} outside [-1, 1]"));
        }
    }
    if !(0.0..=1.0).contains(&r.sector_fraction) || r.collision.is_some_and(|c| !(0.0..=1.0).contains(&c)) {
        return Err("fraction outside [0, 1]".into());
    }
    Ok(())
}

/// Groups rows by chain, preserving order.
pub fn split_chains(rows: &[MeasurementRow]) -> Vec<Vec<Measurement>> {
    let n = rows.iter().map(|r| r.chain + 1).max().unwrap_or(0);
    let mut out = vec![Vec::new(); n];
    for r in rows {
        out[r.chain].push(r.measurement());
    }
    out.retain(|c| !c.is_empty());
    out
}

fn samples<F: Fn(&Measurement) -> Vec<f64>>(chains: &[Vec<Measurement>], k: usize, f: F) -> Samples {
    let mut s = Samples::new(k);
    for c in chains {
        s.push_chain(c.iter().map(&f));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinderKind {
    R0,
    R1,
    R2,
}

/// `<X^4> / <X^2>^2` with `X = M1` (R0), the junction-averaged
/// magnetization moments (R1) or `Q` (R2).
pub fn binder_ratio(chains: &[Vec<Measurement>], kind: BinderKind, min_bins: usize) -> Result<RatioEstimate> {
    let moments = |m: &Measurement| {
        let (a, b, q) = (m.m1 as f64, m.m2 as f64, m.q as f64);
        match kind {
            BinderKind::R0 => vec![a * a, a.powi(4)],
            BinderKind::R1 => vec![0.5 * (a * a + b * b), 0.5 * (a.powi(4) + b.powi(4))],
            BinderKind::R2 => vec![q * q, q.powi(4)],
        }
    };
    let s = samples(chains, 2, moments);
    let second = auto_jackknife(&s, min_bins, |m| m[0])?;
    if second.value <= 3.0 * second.stderr {
        return Err(Error::Numerical(format!(
            "second moment {} not resolved (stderr {})",
            second.value, second.stderr
        )));
    }
    auto_jackknife(&s, min_bins, |m| m[1] / (m[0] * m[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    C0,
    C1,
    C2,
    M1,
    SectorFraction,
    Collision,
}

pub fn mean_of(chains: &[Vec<Measurement>], obs: Observable, min_bins: usize) -> Result<RatioEstimate> {
    if obs == Observable::Collision && chains.iter().flatten().any(|m| m.collision.is_none()) {
        return Err(Error::InsufficientData("collision not recorded for one-replica runs".into()));
    }
    let s = samples(chains, 1, |m| {
        vec![match obs {
            Observable::C0 => m.c0,
            Observable::C1 => m.c1,
            Observable::C2 => m.c2,
            Observable::M1 => m.m1 as f64,
            Observable::SectorFraction => m.sector_fraction,
            Observable::Collision => m.collision.unwrap_or(f64::NAN),
        }]
    });
    auto_jackknife(&s, min_bins, |m| m[0])
}

/// `Tr(rho^2) / Tr(rho)^2` from independent collision estimates on the
/// disconnected and connected contours.
pub fn purity_ratio(disconnected: &RatioEstimate, connected: &RatioEstimate) -> Result<RatioEstimate> {
    if connected.value <= 0.0 {
        return Err(Error::Numerical("connected collision probability is zero".into()));
    }
    let value = disconnected.value / connected.value;
    let stderr = ((disconnected.stderr / connected.value).powi(2)
        + (value * connected.stderr / connected.value).powi(2))
    .sqrt();
    Ok(RatioEstimate {
        value,
        stderr,
        n_bins: disconnected.n_bins.min(connected.n_bins),
        bin_size: disconnected.bin_size.max(connected.bin_size),
        autocorrelation_time: disconnected.autocorrelation_time.max(connected.autocorrelation_time),
        plateau: disconnected.plateau && connected.plateau,
    })
}

/// Extra leading measurements to drop so that at least 20% of all sweeps, and
/// at least ten autocorrelation times, are discarded.
pub fn warmup_cut(therm_sweeps: usize, measured: usize, tau: f64) -> usize {
    let total = therm_sweeps + measured;
    let want = (0.2 * total as f64).max(10.0 * tau.max(0.0)).ceil() as usize;
    want.saturating_sub(therm_sweeps).min(measured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn m(q: i32, a: i32, b: i32) -> Measurement {
        Measurement { m1: a, m2: b, q, c0: 0.0, c1: 0.0, c2: 0.0, sector_fraction: 0.0, collision: Some(0.5) }
    }

    #[test]
    fn gaussian_q_gives_three() {
        // Binder ratio of a Gaussian is 3 by Wick's theorem; use a wide
        // integer-valued approximation
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Normal::new(0.0f64, 200.0).unwrap();
        let chain: Vec<Measurement> = (0..200_000).map(|_| m(g.sample(&mut rng).round() as i32, 0, 0)).collect();
        let e = binder_ratio(&[chain], BinderKind::R2, MIN_BINDER_BINS).unwrap();
        assert!((e.value - 3.0).abs() < 4.0 * e.stderr, "{e:?}");
        assert!(e.stderr < 0.05);
    }

    #[test]
    fn ordered_stream_gives_one() {
        let chain: Vec<Measurement> = (0..1000).map(|k| m(if k % 3 == 0 { 16 } else { -16 }, 16, -16)).collect();
        for kind in [BinderKind::R0, BinderKind::R1, BinderKind::R2] {
            let e = binder_ratio(std::slice::from_ref(&chain), kind, MIN_BINDER_BINS).unwrap();
            assert!((e.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unresolved_second_moment_is_an_error() {
        let chain: Vec<Measurement> = (0..1000).map(|_| m(0, 0, 0)).collect();
        assert!(matches!(binder_ratio(&[chain], BinderKind::R2, 100), Err(Error::Numerical(_))));
        let short: Vec<Measurement> = (0..50).map(|_| m(2, 0, 0)).collect();
        assert!(matches!(binder_ratio(&[short], BinderKind::R2, 100), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let rows: Vec<MeasurementRow> = (0..5).map(|k| MeasurementRow::new(k % 2, k as u64, &m(2, 4, -2))).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("chain,sweep_index,M1,M2,Q,C0,C1_maxdist,C2_maxdist,sector_fraction,collision\n"));
        assert_eq!(read_csv(&buf[..], 4).unwrap(), rows);
        // Q = 2 has the wrong parity for 3 sites
        assert!(read_csv(&buf[..], 3).is_err());
        let chains = split_chains(&rows);
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[0].len(), 3);
    }

    #[test]
    fn purity_ratio_propagates_errors() {
        let e = |v: f64, s: f64| RatioEstimate { value: v, stderr: s, n_bins: 100, bin_size: 1, autocorrelation_time: 0.5, plateau: true };
        let r = purity_ratio(&e(0.1, 0.001), &e(0.5, 0.0)).unwrap();
        assert!((r.value - 0.2).abs() < 1e-15 && (r.stderr - 0.002).abs() < 1e-15);
        assert!(purity_ratio(&e(0.1, 0.001), &e(0.0, 0.0)).is_err());
    }

    #[test]
    fn warmup_rule() {
        assert_eq!(warmup_cut(100, 900, 1.0), 100);
        assert_eq!(warmup_cut(500, 500, 1.0), 0);
        assert_eq!(warmup_cut(0, 1000, 50.0), 500);
        assert_eq!(warmup_cut(0, 10, 50.0), 10);
    }
}
