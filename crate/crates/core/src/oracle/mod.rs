//! Dense exact reference for small systems.
//!
//! Basis convention: computational basis index `s`, bit `k` of `s` is the
//! state of site `k` (0 = up, `z = +1`; 1 = down, `z = -1`), site 0 least
//! significant.
//!
//! Every diagnostic below is evaluated from the matrix elements directly. For
//! a Z-diagonal observable `A` with eigenvalue `a_s` on basis state `s`,
//! `Tr(rho A rho A) = sum_{s,t} |rho_st|^2 a_s a_t` and
//! `Tr(rho^2 A) = sum_{s,t} |rho_st|^2 a_s`, so no matrix products are needed.

pub mod fixtures;

use nalgebra::{Complex, DMatrix, Matrix4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

pub type C64 = Complex<f64>;

/// Default cap on the number of spins the dense oracle accepts.
pub const DEFAULT_MAX_SITES: usize = 12;

/// `H = -J sum ZZ - sum X` with inverse temperature and per-bond dephasing
/// strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub j: f64,
    pub beta: f64,
    pub p: f64,
}

impl ModelParams {
    pub fn new(j: f64, beta: f64, p: f64) -> Result<Self> {
        let m = ModelParams { j, beta, p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.is_finite() && self.j >= 0.0) {
            return Err(Error::InvalidParam(format!("J must be finite and >= 0, got {}", self.j)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParam(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParam(format!("p must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_sites: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_sites: DEFAULT_MAX_SITES }
    }
}

impl OracleLimits {
    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_sites || n >= usize::BITS as usize / 2 {
            return Err(Error::OracleTooLarge { n, cap: self.max_sites });
        }
        Ok(())
    }
}

#[inline]
fn z(s: usize, k: usize) -> f64 {
    if (s >> k) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn zz(s: usize, i: usize, j: usize) -> f64 {
    if ((s >> i) ^ (s >> j)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense density matrix on `n_sites` spins.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(n_sites: usize, data: DMatrix<C64>) -> Result<Self> {
        let dim = 1usize << n_sites;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::InvalidParam(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(DensityMatrix { n_sites, data })
    }

    /// Projector onto a single computational basis state.
    pub fn basis_state(n_sites: usize, s: usize) -> Self {
        let dim = 1usize << n_sites;
        let mut data = DMatrix::zeros(dim, dim);
        data[(s, s)] = C64::new(1.0, 0.0);
        DensityMatrix { n_sites, data }
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        let data = DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        DensityMatrix { n_sites, data }
    }

    /// `|psi><psi|` for a (not necessarily normalized) state vector.
    pub fn pure(n_sites: usize, psi: &[C64]) -> Result<Self> {
        let dim = 1usize << n_sites;
        if psi.len() != dim {
            return Err(Error::InvalidParam(format!("state has {} amplitudes, expected {dim}", psi.len())));
        }
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if norm <= 0.0 {
            return Err(Error::InvalidParam("zero state vector".into()));
        }
        let data = DMatrix::from_fn(dim, dim, |r, c| psi[r] * psi[c].conj() / norm);
        Ok(DensityMatrix { n_sites, data })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// `Tr(rho^2) / Tr(rho)^2`.
    pub fn purity(&self) -> f64 {
        let tr = self.trace().re;
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>() / (tr * tr)
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.data[(r, c)] - self.data[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn normalized(mut self) -> Self {
        let tr = self.trace();
        self.data /= tr;
        self
    }

    /// `X rho X` with `X` the product of all spin flips.
    pub fn global_flip(&self) -> Self {
        let dim = self.dim();
        let mask = dim - 1;
        let data = DMatrix::from_fn(dim, dim, |r, c| self.data[(r ^ mask, c ^ mask)]);
        DensityMatrix { n_sites: self.n_sites, data }
    }

    /// Elementwise `|rho_st|^2`, the weights of the doubled-state ensemble.
    fn doubled_weights(&self) -> DMatrix<f64> {
        self.data.map(|a| a.norm_sqr())
    }
}

pub fn build_hamiltonian(spec: &LatticeSpec, j: f64) -> Result<DMatrix<f64>> {
    build_hamiltonian_with(spec, j, OracleLimits::default())
}

/// `H = -J sum_<ij> Z_i Z_j - sum_i X_i` as a dense real symmetric matrix.
pub fn build_hamiltonian_with(spec: &LatticeSpec, j: f64, limits: OracleLimits) -> Result<DMatrix<f64>> {
    let n = spec.n_sites();
    limits.check(n)?;
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        let diag: f64 = spec.bonds().iter().map(|&(a, b)| zz(s, a, b)).sum();
        h[(s, s)] = -j * diag;
        for k in 0..n {
            h[(s ^ (1 << k), s)] = -1.0;
        }
    }
    Ok(h)
}

/// Normalized `exp(-beta H) / Tr exp(-beta H)` via eigendecomposition.
pub fn gibbs_state(h: &DMatrix<f64>, beta: f64) -> Result<DensityMatrix> {
    let dim = h.nrows();
    if dim != h.ncols() || !dim.is_power_of_two() || dim < 2 {
        return Err(Error::InvalidParam(format!("Hamiltonian must be square with dimension 2^N, got {}x{}", h.nrows(), h.ncols())));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParam(format!("beta must be finite and > 0, got {beta}")));
    }
    let scale = h.amax().max(1.0);
    let defect = (h - h.transpose()).amax();
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let eig = h.clone().symmetric_eigen();
    let e0 = eig.eigenvalues.min();
    let w = eig.eigenvalues.map(|e| (-beta * (e - e0)).exp());
    let z: f64 = w.sum();
    let mut scaled = eig.eigenvectors.clone();
    for (c, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[c] / z;
    }
    let rho = scaled * eig.eigenvectors.transpose();
    let data = rho.map(|x| C64::new(x, 0.0));
    Ok(DensityMatrix { n_sites: dim.trailing_zeros() as usize, data })
}

fn check_bond(rho: &DensityMatrix, (i, j): (usize, usize), p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("p must lie in [0, 1], got {p}")));
    }
    let n = rho.n_sites();
    if i >= n || j >= n || i == j {
        return Err(Error::InvalidParam(format!("bond ({i}, {j}) invalid for {n} sites")));
    }
    Ok(())
}

/// `(1 - p/2) rho + (p/2) Z_i Z_j rho Z_i Z_j`.
pub fn apply_bond_channel(rho: &DensityMatrix, bond: (usize, usize), p: f64) -> Result<DensityMatrix> {
    check_bond(rho, bond, p)?;
    let (i, j) = bond;
    let mut out = rho.clone();
    let dim = rho.dim();
    for c in 0..dim {
        let zc = zz(c, i, j);
        for r in 0..dim {
            let f = 1.0 - 0.5 * p + 0.5 * p * zz(r, i, j) * zc;
            out.data[(r, c)] *= f;
        }
    }
    Ok(out)
}

/// Applies the bond channel to every bond of `spec` in bond order.
pub fn apply_full_channel(rho: &DensityMatrix, spec: &LatticeSpec, p: f64) -> Result<DensityMatrix> {
    apply_channel_in_order(rho, spec.bonds(), p)
}

pub fn apply_channel_in_order(rho: &DensityMatrix, bonds: &[(usize, usize)], p: f64) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    for &b in bonds {
        out = apply_bond_channel(&out, b, p)?;
    }
    Ok(out)
}

/// Kraus operators `M_0, M_1, M_2` of one bond channel on the two-qubit space
/// `|z_i z_j>` (index bit 0 = site i).
pub fn kraus_operators(p: f64) -> [Matrix4<C64>; 3] {
    let one = Matrix4::<C64>::identity();
    let zz_diag = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|s, _| C64::new(zz(s, 0, 1), 0.0)));
    let half = C64::new(0.5, 0.0);
    [
        one * C64::new((1.0 - p).sqrt(), 0.0),
        (one + zz_diag) * half * C64::new(p.sqrt(), 0.0),
        (one - zz_diag) * half * C64::new(p.sqrt(), 0.0),
    ]
}

/// `Tr(rho Z_i Z_j) / Tr(rho)`.
pub fn linear_correlator(rho: &DensityMatrix, i: usize, j: usize) -> f64 {
    let tr = rho.trace().re;
    (0..rho.dim()).map(|s| rho.data[(s, s)].re * zz(s, i, j)).sum::<f64>() / tr
}

/// `Tr(rho^2 Z_i Z_j) / Tr(rho^2)`.
pub fn renyi2_linear_correlator(rho: &DensityMatrix, i: usize, j: usize) -> f64 {
    let w = rho.doubled_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..rho.dim() {
        for r in 0..rho.dim() {
            num += w[(r, c)] * zz(r, i, j);
            den += w[(r, c)];
        }
    }
    num / den
}

/// `Tr(rho Z_i Z_j rho Z_i Z_j) / Tr(rho^2)`.
pub fn renyi2_correlator(rho: &DensityMatrix, i: usize, j: usize) -> f64 {
    let w = rho.doubled_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..rho.dim() {
        let zc = zz(c, i, j);
        for r in 0..rho.dim() {
            num += w[(r, c)] * zz(r, i, j) * zc;
            den += w[(r, c)];
        }
    }
    num / den
}

/// Binder ratios built from all-site sums (coincident indices included), each
/// correlator normalized by its own ensemble: `Tr(rho)` for `r0`, `Tr(rho^2)`
/// for `r1` and `r2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinderTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

pub fn exact_binder_ratios(rho: &DensityMatrix) -> BinderTriple {
    let n = rho.n_sites();
    let dim = rho.dim();
    let mag = |s: usize| (0..n).map(|k| z(s, k)).sum::<f64>();
    let ratio = |m2: f64, m4: f64, norm: f64| m4 * norm / (m2 * m2);

    let (mut d0, mut d2, mut d4) = (0.0, 0.0, 0.0);
    for s in 0..dim {
        let (w, m) = (rho.data[(s, s)].re, mag(s));
        d0 += w;
        d2 += w * m * m;
        d4 += w * m.powi(4);
    }
    let r0 = ratio(d2, d4, d0);

    let w = rho.doubled_weights();
    let (mut q0, mut q2, mut q4) = (0.0, 0.0, 0.0);
    let (mut l2, mut l4) = (0.0, 0.0);
    for c in 0..dim {
        for r in 0..dim {
            let x = w[(r, c)];
            let q = n as f64 - 2.0 * (r ^ c).count_ones() as f64;
            let m = mag(r);
            q0 += x;
            q2 += x * q * q;
            q4 += x * q.powi(4);
            l2 += x * m * m;
            l4 += x * m.powi(4);
        }
    }
    BinderTriple { r0, r1: ratio(l2, l4, q0), r2: ratio(q2, q4, q0) }
}

/// Every scalar the oracle provides for one state, correlators averaged over
/// `pairs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub purity: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

pub fn diagnostics(rho: &DensityMatrix, pairs: &[(usize, usize)]) -> Diagnostics {
    let avg = |f: &dyn Fn(usize, usize) -> f64| pairs.iter().map(|&(i, j)| f(i, j)).sum::<f64>() / pairs.len() as f64;
    let b = exact_binder_ratios(rho);
    Diagnostics {
        purity: rho.purity(),
        c0: avg(&|i, j| linear_correlator(rho, i, j)),
        c1: avg(&|i, j| renyi2_linear_correlator(rho, i, j)),
        c2: avg(&|i, j| renyi2_correlator(rho, i, j)),
        r0: b.r0,
        r1: b.r1,
        r2: b.r2,
    }
}

/// Gibbs state of the lattice model followed by the full channel.
pub fn decohered_gibbs_state(spec: &LatticeSpec, params: ModelParams) -> Result<DensityMatrix> {
    params.validate()?;
    let h = build_hamiltonian(spec, params.j)?;
    let rho0 = gibbs_state(&h, params.beta)?;
    apply_full_channel(&rho0, spec, params.p)
}

/// Weakly symmetric diagonal state
/// `1/4 (|0..0><0..0| + |1..1><1..1|) + 1/(4M) sum_a (|psi_a><psi_a| + X|psi_a><psi_a|X)`
/// with each `|psi_a>` a computational basis state antialigned on `pair`.
///
/// The `M` states are distinct X-orbits drawn at random (seeded) from the
/// `2^(N-2)` orbits that satisfy the constraint.
pub fn counterexample_state(m: usize, spec: &LatticeSpec, pair: (usize, usize), seed: u64) -> Result<DensityMatrix> {
    let n = spec.n_sites();
    OracleLimits::default().check(n)?;
    let (i, j) = pair;
    if i >= n || j >= n || i == j {
        return Err(Error::InvalidParam(format!("pair ({i}, {j}) invalid for {n} sites")));
    }
    if m == 0 {
        return Err(Error::InvalidParam("M must be positive".into()));
    }
    let dim = 1usize << n;
    let mask = dim - 1;
    // orbit representatives: antialigned on the pair with site i up
    let mut reps: Vec<usize> = (0..dim).filter(|&s| zz(s, i, j) < 0.0 && (s >> i) & 1 == 0).collect();
    if reps.len() < m {
        return Err(Error::InsufficientStates { available: reps.len(), requested: m });
    }
    reps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut data = DMatrix::zeros(dim, dim);
    data[(0, 0)] += C64::new(0.25, 0.0);
    data[(mask, mask)] += C64::new(0.25, 0.0);
    let w = C64::new(0.25 / m as f64, 0.0);
    for &s in &reps[..m] {
        data[(s, s)] += w;
        data[(s ^ mask, s ^ mask)] += w;
    }
    Ok(DensityMatrix { n_sites: n, data })
}
