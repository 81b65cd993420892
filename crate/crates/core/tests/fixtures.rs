//! The checked-in fixture file against a second, operator-level evaluation.
//!
//! Everything here is rebuilt from Kronecker products of Pauli matrices, a
//! Taylor exponential and the Kraus sum, so nothing is shared with the library
//! oracle beyond the lattice bond list.

use std::path::Path;

use nalgebra::DMatrix;
use renyi_qmc::oracle::fixtures::{FixtureEntry, FixtureFile};
use renyi_qmc::LatticeSpec;

const TOL: f64 = 1e-10;

fn kron_chain(n: usize, site_op: impl Fn(usize) -> DMatrix<f64>) -> DMatrix<f64> {
    // site 0 is the least significant bit, so it goes rightmost
    (0..n).rev().fold(DMatrix::identity(1, 1), |acc, k| acc.kronecker(&site_op(k)))
}

fn pauli_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

fn pauli_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

fn z_string(n: usize, mask: usize) -> DMatrix<f64> {
    kron_chain(n, |k| if mask >> k & 1 == 1 { pauli_z() } else { DMatrix::identity(2, 2) })
}

fn hamiltonian(l: &LatticeSpec, j: f64) -> DMatrix<f64> {
    let n = l.n_sites();
    let mut h = DMatrix::zeros(1 << n, 1 << n);
    for &(a, b) in l.bonds() {
        h -= z_string(n, (1 << a) | (1 << b)) * j;
    }
    for k in 0..n {
        h -= kron_chain(n, |s| if s == k { pauli_x() } else { DMatrix::identity(2, 2) });
    }
    h
}

/// Scaling and squaring with a 30-term Taylor series.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.abs().row_sum().max();
    let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
    let b = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(a.nrows(), a.ncols());
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn decohered_state(l: &LatticeSpec, j: f64, beta: f64, p: f64) -> DMatrix<f64> {
    let n = l.n_sites();
    let e = expm(&(hamiltonian(l, j) * -beta));
    let mut rho = &e / e.trace();
    let id = DMatrix::<f64>::identity(1 << n, 1 << n);
    for &(a, b) in l.bonds() {
        let zz = z_string(n, (1 << a) | (1 << b));
        let even = (&id + &zz) * 0.5;
        let odd = (&id - &zz) * 0.5;
        rho = &rho * (1.0 - p) + (&even * &rho * &even + &odd * &rho * &odd) * p;
    }
    rho
}

/// `Tr(rho D rho D)` for a diagonal `D`.
fn sandwich(rho: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    (rho * d * rho * d).trace()
}

/// Ordered `k`-tuples of sites grouped by the set of sites that occur an odd
/// number of times, i.e. the expansion of `(sum_l Z_l (x) Z_l)^k`.
fn tuple_masks(n: usize, k: u32) -> Vec<(usize, f64)> {
    let mut count = vec![0.0; 1 << n];
    for t in 0..n.pow(k) {
        let mut mask = 0;
        let mut r = t;
        for _ in 0..k {
            mask ^= 1 << (r % n);
            r /= n;
        }
        count[mask] += 1.0;
    }
    count.into_iter().enumerate().filter(|(_, c)| *c > 0.0).collect()
}

fn check(l: &LatticeSpec, e: &FixtureEntry) {
    let n = l.n_sites();
    let rho = decohered_state(l, e.j, e.beta, e.p);
    let rho2 = &rho * &rho;
    let t2 = rho2.trace();
    let pairs = l.correlation_distance_pairs();
    assert_eq!(pairs, e.pairs);
    let avg = |f: &dyn Fn(&DMatrix<f64>) -> f64| {
        pairs.iter().map(|&(a, b)| f(&z_string(n, (1 << a) | (1 << b)))).sum::<f64>() / pairs.len() as f64
    };
    let c0 = avg(&|zz| (&rho * zz).trace());
    let c1 = avg(&|zz| (&rho2 * zz).trace() / t2);
    let c2 = avg(&|zz| sandwich(&rho, zz) / t2);

    let m = (0..n).fold(DMatrix::zeros(1 << n, 1 << n), |acc, k| acc + z_string(n, 1 << k));
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let r0 = (&rho * &m4).trace() / (&rho * &m2).trace().powi(2);
    let r1 = (&rho2 * &m4).trace() * t2 / (&rho2 * &m2).trace().powi(2);
    let q = |k| tuple_masks(n, k).into_iter().map(|(mask, c)| c * sandwich(&rho, &z_string(n, mask))).sum::<f64>();
    let r2 = q(4) * t2 / q(2).powi(2);

    let label = format!("{}x{} J={} beta={} p={}", e.lx, e.ly, e.j, e.beta, e.p);
    for (name, got, want) in [
        ("purity", t2, e.purity),
        ("c0", c0, e.c0),
        ("c1", c1, e.c1),
        ("c2", c2, e.c2),
        ("r0", r0, e.r0),
        ("r1", r1, e.r1),
        ("r2", r2, e.r2),
    ] {
        assert!((got - want).abs() < TOL * want.abs().max(1.0), "{label} {name}: {got} vs {want}");
    }
}

fn checked_in() -> FixtureFile {
    FixtureFile::read(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixtures.json")).unwrap()
}

#[test]
fn file_covers_the_standard_grid() {
    let f = checked_in();
    assert_eq!(f.entries.len(), 3 * 3 * 3 * 2);
    for (lx, ly) in [(2, 2), (2, 3), (3, 3)] {
        for j in [0.1, 0.3, 0.5] {
            for p in [0.2, 0.5, 0.8] {
                for beta in [1.0, 4.0] {
                    assert!(f.find(lx, ly, j, beta, p).is_some(), "{lx}x{ly} J={j} beta={beta} p={p}");
                }
            }
        }
    }
}

#[test]
fn small_entries_match_operator_evaluation() {
    let f = checked_in();
    for e in f.entries.iter().filter(|e| e.lx * e.ly <= 6) {
        check(&LatticeSpec::square(e.lx, e.ly).unwrap(), e);
    }
}

#[test]
fn three_by_three_entries_match_operator_evaluation() {
    let f = checked_in();
    let l = LatticeSpec::square(3, 3).unwrap();
    for (j, beta, p) in [(0.3, 4.0, 0.5), (0.5, 1.0, 0.8)] {
        check(&l, f.find(3, 3, j, beta, p).unwrap());
    }
}
