//! Stationary distributions of small SSE chains against exact weights.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renyi_qmc::oracle::{build_hamiltonian, gibbs_state};
use renyi_qmc::{ContourOptions, ContourState, LatticeSpec, ModelParams};

fn chain(l: LatticeSpec, params: ModelParams, opts: ContourOptions, seed: u64) -> ContourState {
    ContourState::new(l, params, opts, ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Per-state frequency and binned standard error.
fn binned_frequencies(samples: &[usize], n_states: usize, n_bins: usize) -> Vec<(f64, f64)> {
    let per = samples.len() / n_bins;
    let mut bins = vec![vec![0.0; n_states]; n_bins];
    for (b, chunk) in samples.chunks_exact(per).take(n_bins).enumerate() {
        for &s in chunk {
            bins[b][s] += 1.0 / per as f64;
        }
    }
    (0..n_states)
        .map(|s| {
            let m = bins.iter().map(|b| b[s]).sum::<f64>() / n_bins as f64;
            let v = bins.iter().map(|b| (b[s] - m).powi(2)).sum::<f64>() / (n_bins * (n_bins - 1)) as f64;
            (m, v.sqrt())
        })
        .collect()
}

// One site, no bonds, two slots. With site operators of unit weight the exact
// weight of a string with n operators is beta^n (2-n)!/2!, summed over the
// slot placements: n=0 -> 1, n=1 -> beta (two placements of one diagonal op),
// n=2 -> beta^2 (two diag ops or two flips).
#[test]
fn one_site_two_slot_distribution() {
    let beta = 0.8;
    let l = LatticeSpec::custom(1, vec![]).unwrap();
    let opts = ContourOptions { replicas: 1, initial_cutoff: 2, grow_cutoff: false, ..Default::default() };
    let mut s = chain(l, ModelParams::new(0.0, beta, 0.0).unwrap(), opts, 11);
    let sweeps = 1_000_000;
    let mut samples = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        s.sweep();
        assert_eq!(s.segments()[0].cutoff(), 2);
        let spin = (s.junction(0)[0] < 0) as usize;
        samples.push(s.total_ops() * 2 + spin);
    }
    let w = [1.0, beta, beta * beta];
    let z: f64 = 2.0 * w.iter().sum::<f64>();
    for (k, (f, e)) in binned_frequencies(&samples, 6, 1000).into_iter().enumerate() {
        let exact = w[k / 2] / z;
        assert!((f - exact).abs() < 4.0 * e, "state {k}: {f} +- {e} vs {exact}");
    }
}

// <n>/beta = -<H> + N + J N_b on two coupled spins.
#[test]
fn energy_identity_two_sites() {
    let (j, beta) = (0.7, 1.5);
    let l = LatticeSpec::square(2, 1).unwrap();
    let h = build_hamiltonian(&l, j).unwrap();
    let rho = gibbs_state(&h, beta).unwrap();
    let hc = h.map(|x| nalgebra::Complex::new(x, 0.0));
    let energy = (rho.matrix() * hc).trace().re;
    let shift = 2.0 + j * l.n_bonds() as f64;

    let opts = ContourOptions { replicas: 1, ..Default::default() };
    let mut s = chain(l, ModelParams::new(j, beta, 0.0).unwrap(), opts, 5);
    for _ in 0..2000 {
        s.sweep();
    }
    let n = 200_000;
    let ops: Vec<f64> = (0..n)
        .map(|_| {
            s.sweep();
            s.total_ops() as f64 / beta
        })
        .collect();
    let bins: Vec<f64> = ops.chunks_exact(1000).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let m = bins.iter().sum::<f64>() / bins.len() as f64;
    let e = (bins.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (bins.len() * (bins.len() - 1)) as f64).sqrt();
    let exact = -energy + shift;
    assert!((m - exact).abs() < 4.0 * e, "{m} +- {e} vs {exact}");
}

#[test]
fn two_by_two_visits_every_junction_pattern() {
    let l = LatticeSpec::square(2, 2).unwrap();
    let mut s = chain(l, ModelParams::new(0.3, 1.0, 0.5).unwrap(), ContourOptions::default(), 2);
    let mut seen = HashSet::new();
    for _ in 0..100_000 {
        s.sweep();
        let pattern = s.junction(0).iter().enumerate().fold(0u32, |acc, (k, &z)| acc | (((z < 0) as u32) << k));
        seen.insert(pattern);
    }
    assert_eq!(seen.len(), 16);
}
