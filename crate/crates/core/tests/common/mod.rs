//! Helpers shared by integration test targets.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renyi_qmc::contour::{Sector, SweepStats, WValue};
use renyi_qmc::{ContourOptions, ContourState, LatticeSpec, ModelParams, SectorRule};

/// Outcome of sampling the J=0 two-site toy contour against its exact joint
/// distribution over (both junction slices, sector and W of both insertions).
pub struct ToyBalance {
    pub max_abs_z: f64,
    pub worst_state: usize,
    pub s2_fraction: f64,
    pub s2_fraction_exact: f64,
    pub stats: SweepStats,
}

fn toy_index(s: &ContourState) -> usize {
    let mut k = 0usize;
    let mut bit = 0;
    for slice in 0..2 {
        for &z in s.junction(slice) {
            k |= ((z < 0) as usize) << bit;
            bit += 1;
        }
    }
    for ins in s.insertions() {
        k |= ((ins.sector == Sector::S2) as usize) << bit;
        k |= ((ins.w == WValue::XX) as usize) << (bit + 1);
        bit += 2;
    }
    k
}

/// Exact weight of a toy state. At J=0 each site propagates independently
/// with `<a|exp(beta X)|b>`, i.e. cosh(beta) or sinh(beta); each insertion
/// contributes `(1-p)/2` in S1 and `p [out*in = w on both sites]` in S2.
pub fn toy_weight(k: usize, beta: f64, p: f64) -> f64 {
    let spin = |slice: usize, site: usize| if (k >> (2 * slice + site)) & 1 == 1 { -1i8 } else { 1 };
    let mut w = 1.0;
    for c in 0..2 {
        let (inp, out) = (1 - c, c);
        for site in 0..2 {
            w *= if spin(inp, site) == spin(out, site) { beta.cosh() } else { beta.sinh() };
        }
        let s2 = (k >> (4 + 2 * c)) & 1 == 1;
        let wsign = if (k >> (5 + 2 * c)) & 1 == 1 { -1 } else { 1 };
        if s2 {
            let ok = (0..2).all(|site| spin(out, site) * spin(inp, site) == wsign);
            w *= if ok { p } else { 0.0 };
        } else {
            w *= (1.0 - p) / 2.0;
        }
    }
    w
}

pub fn toy_balance(rule: SectorRule, beta: f64, p: f64, sweeps: usize, seed: u64) -> ToyBalance {
    let l = LatticeSpec::square(2, 1).unwrap();
    let opts = ContourOptions { sector_rule: rule, ..Default::default() };
    let mut s = ContourState::new(l, ModelParams::new(0.0, beta, p).unwrap(), opts, ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    let mut stats = SweepStats::default();
    for _ in 0..1000 {
        s.sweep();
    }
    let n_bins = 1000;
    let per = sweeps / n_bins;
    let mut bins = vec![[0.0f64; 256]; n_bins];
    let mut s2 = 0usize;
    for bin in bins.iter_mut() {
        for _ in 0..per {
            stats.merge(&s.sweep());
            bin[toy_index(&s)] += 1.0 / per as f64;
            s2 += s.insertions().iter().filter(|i| i.sector == Sector::S2).count();
        }
    }
    let z: f64 = (0..256).map(|k| toy_weight(k, beta, p)).sum();
    let mut worst = (0.0, 0);
    for k in 0..256 {
        let exact = toy_weight(k, beta, p) / z;
        let m = bins.iter().map(|b| b[k]).sum::<f64>() / n_bins as f64;
        let v = bins.iter().map(|b| (b[k] - m).powi(2)).sum::<f64>() / (n_bins * (n_bins - 1)) as f64;
        // floor the error at one count so never-visited zero-weight states are exact
        let e = v.sqrt().max(1.0 / (n_bins * per) as f64);
        let zk = (m - exact).abs() / e;
        if zk > worst.0 {
            worst = (zk, k);
        }
    }
    let s2_exact: f64 = (0..256)
        .map(|k| toy_weight(k, beta, p) / z * (((k >> 4) & 1) + ((k >> 6) & 1)) as f64 / 2.0)
        .sum();
    ToyBalance {
        max_abs_z: worst.0,
        worst_state: worst.1,
        s2_fraction: s2 as f64 / (2 * n_bins * per) as f64,
        s2_fraction_exact: s2_exact,
        stats,
    }
}

/// Empirical `(P(S1 -> S2), P(S2 -> S1))` on compatible proposals.
pub fn empirical_acceptance(stats: &SweepStats) -> (f64, f64) {
    let up = stats.to_s2_accepted as f64 / (stats.to_s2_proposed - stats.null_moves) as f64;
    let down = stats.to_s1_accepted as f64 / stats.to_s1_proposed as f64;
    (up, down)
}
