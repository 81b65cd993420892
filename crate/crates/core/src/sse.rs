//! Stochastic series expansion of one `exp(-beta H)` segment.
//!
//! Operator weights use the shifted form
//! `H' = -sum_i (1 + X_i) - J sum_b (1 + Z_i Z_j)`, so site operators (diagonal
//! or flip) carry weight 1 and a bond operator carries `2J` on aligned spins
//! and 0 otherwise. `H' = H - N - J N_b`, which gives the energy identity
//! `<n_ops> / beta = -<H> + N + J N_b`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Identity,
    SiteDiag(u32),
    SiteFlip(u32),
    BondDiag(u32),
}

impl Op {
    pub fn is_identity(self) -> bool {
        self == Op::Identity
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, Op::SiteDiag(_) | Op::BondDiag(_))
    }
}

/// Inverse temperature and coupling of one segment, with the lattice sizes
/// needed for the total insertion weight.
#[derive(Debug, Clone, Copy)]
pub struct SseWeights {
    pub beta: f64,
    pub j: f64,
    pub n_sites: usize,
    pub n_bonds: usize,
}

impl SseWeights {
    pub fn new(lattice: &LatticeSpec, j: f64, beta: f64) -> Self {
        SseWeights { beta, j, n_sites: lattice.n_sites(), n_bonds: lattice.n_bonds() }
    }

    pub fn bond_weight(&self) -> f64 {
        2.0 * self.j
    }

    /// Sum of all diagonal operator weights for an all-aligned configuration.
    pub fn total(&self) -> f64 {
        self.n_sites as f64 + self.bond_weight() * self.n_bonds as f64
    }

    /// `N + J N_b`, the offset between `<n_ops>/beta` and `-<H>`.
    pub fn energy_shift(&self) -> f64 {
        self.n_sites as f64 + self.j * self.n_bonds as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagStats {
    pub inserted: u64,
    pub removed: u64,
}

/// Fixed-length operator string; `Identity` entries are padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorString {
    slots: Vec<Op>,
    n_ops: usize,
}

pub const MIN_CUTOFF: usize = 2;

impl OperatorString {
    pub fn new(cutoff: usize) -> Self {
        OperatorString { slots: vec![Op::Identity; cutoff.max(MIN_CUTOFF)], n_ops: 0 }
    }

    pub fn from_slots(slots: Vec<Op>) -> Result<Self> {
        if slots.len() < MIN_CUTOFF {
            return Err(Error::Wiring(format!("cutoff {} below minimum {MIN_CUTOFF}", slots.len())));
        }
        let n_ops = slots.iter().filter(|o| !o.is_identity()).count();
        Ok(OperatorString { slots, n_ops })
    }

    pub fn cutoff(&self) -> usize {
        self.slots.len()
    }

    pub fn n_ops(&self) -> usize {
        self.n_ops
    }

    pub fn slots(&self) -> &[Op] {
        &self.slots
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Op] {
        &mut self.slots
    }

    /// Applies every flip in order.
    pub fn propagate(&self, spins: &mut [i8]) {
        for op in &self.slots {
            if let Op::SiteFlip(s) = *op {
                spins[s as usize] = -spins[s as usize];
            }
        }
    }

    /// Propagates `spins` and checks that every operator is in range and has
    /// nonzero weight.
    pub fn check(&self, lattice: &LatticeSpec, j: f64, spins: &mut [i8]) -> Result<()> {
        let n_ops = self.slots.iter().filter(|o| !o.is_identity()).count();
        if n_ops != self.n_ops {
            return Err(Error::Wiring(format!("n_ops {} but {} operators present", self.n_ops, n_ops)));
        }
        for (k, op) in self.slots.iter().enumerate() {
            match *op {
                Op::Identity => {}
                Op::SiteDiag(s) | Op::SiteFlip(s) if s as usize >= lattice.n_sites() => {
                    return Err(Error::Wiring(format!("slot {k}: site {s} out of range")));
                }
                Op::SiteDiag(_) => {}
                Op::SiteFlip(s) => spins[s as usize] = -spins[s as usize],
                Op::BondDiag(b) => {
                    if b as usize >= lattice.n_bonds() {
                        return Err(Error::Wiring(format!("slot {k}: bond {b} out of range")));
                    }
                    let (i, jj) = lattice.bond(b as usize);
                    if j <= 0.0 || spins[i] != spins[jj] {
                        return Err(Error::Wiring(format!("slot {k}: bond {b} operator has zero weight")));
                    }
                }
            }
        }
        Ok(())
    }

    /// One Metropolis pass over every slot. `spins` enters as the segment's
    /// input configuration and leaves as its output configuration.
    pub fn diagonal_update<R: Rng + ?Sized>(
        &mut self,
        spins: &mut [i8],
        lattice: &LatticeSpec,
        w: &SseWeights,
        rng: &mut R,
    ) -> DiagStats {
        let cutoff = self.slots.len();
        let w_tot = w.total();
        let bw = w.bond_weight();
        let nf = w.n_sites as f64;
        let mut stats = DiagStats::default();
        for slot in self.slots.iter_mut() {
            match *slot {
                Op::Identity => {
                    let x = w.beta * w_tot / (cutoff - self.n_ops) as f64;
                    if x >= 1.0 || rng.random::<f64>() < x {
                        let r = rng.random::<f64>() * w_tot;
                        if r < nf {
                            *slot = Op::SiteDiag((r as usize).min(w.n_sites - 1) as u32);
                            self.n_ops += 1;
                            stats.inserted += 1;
                        } else {
                            let b = (((r - nf) / bw) as usize).min(w.n_bonds - 1);
                            let (i, j) = lattice.bond(b);
                            if spins[i] == spins[j] {
                                *slot = Op::BondDiag(b as u32);
                                self.n_ops += 1;
                                stats.inserted += 1;
                            }
                        }
                    }
                }
                Op::SiteDiag(_) | Op::BondDiag(_) => {
                    let x = (cutoff - self.n_ops + 1) as f64 / (w.beta * w_tot);
                    if x >= 1.0 || rng.random::<f64>() < x {
                        *slot = Op::Identity;
                        self.n_ops -= 1;
                        stats.removed += 1;
                    }
                }
                Op::SiteFlip(s) => spins[s as usize] = -spins[s as usize],
            }
        }
        stats
    }

    /// Grows the cutoff to at least `1.25 n_ops`, placing the new padding at
    /// uniformly random positions. Returns whether the string changed.
    pub fn grow<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let cutoff = self.slots.len();
        if 4 * cutoff >= 5 * self.n_ops {
            return false;
        }
        let target = (5 * self.n_ops).div_ceil(4) + 1;
        let extra = target - cutoff;
        let mut pad = vec![false; target];
        for k in index::sample(rng, target, extra) {
            pad[k] = true;
        }
        let mut old = self.slots.iter();
        self.slots = pad.into_iter().map(|p| if p { Op::Identity } else { *old.next().unwrap() }).collect();
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grow_preserves_operator_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ops = vec![Op::SiteDiag(0), Op::SiteFlip(1), Op::BondDiag(0), Op::SiteFlip(1)];
        let mut s = OperatorString::from_slots(ops.clone()).unwrap();
        assert!(s.grow(&mut rng));
        assert!(s.cutoff() >= 6);
        let kept: Vec<Op> = s.slots().iter().copied().filter(|o| !o.is_identity()).collect();
        let want: Vec<Op> = ops.into_iter().filter(|o| !o.is_identity()).collect();
        assert_eq!(kept, want);
        assert!(!s.grow(&mut rng));
    }

    #[test]
    fn zero_beta_limit_empties_string() {
        let l = LatticeSpec::square(2, 2).unwrap();
        let w = SseWeights::new(&l, 0.5, 1e-9);
        let mut s = OperatorString::from_slots(vec![Op::SiteDiag(0), Op::BondDiag(1), Op::Identity, Op::SiteDiag(3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spins = vec![1i8; 4];
        s.diagonal_update(&mut spins, &l, &w, &mut rng);
        assert_eq!(s.n_ops(), 0);
    }

    #[test]
    fn never_inserts_bond_on_antialigned_pair() {
        let l = LatticeSpec::square(1, 2).unwrap();
        let w = SseWeights::new(&l, 5.0, 10.0);
        let mut s = OperatorString::new(64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut spins = vec![1i8, -1];
            s.diagonal_update(&mut spins, &l, &w, &mut rng);
            assert!(s.slots().iter().all(|o| !matches!(o, Op::BondDiag(_))));
        }
    }

    #[test]
    fn check_rejects_bad_strings() {
        let l = LatticeSpec::square(1, 2).unwrap();
        let bad_site = OperatorString::from_slots(vec![Op::SiteDiag(7), Op::Identity]).unwrap();
        assert!(bad_site.check(&l, 1.0, &mut [1, 1]).is_err());
        let anti = OperatorString::from_slots(vec![Op::SiteFlip(0), Op::BondDiag(0)]).unwrap();
        assert!(anti.check(&l, 1.0, &mut [1, 1]).is_err());
        let zero_j = OperatorString::from_slots(vec![Op::BondDiag(0), Op::Identity]).unwrap();
        assert!(zero_j.check(&l, 0.0, &mut [1, 1]).is_err());
        let ok = OperatorString::from_slots(vec![Op::SiteFlip(0), Op::SiteFlip(0), Op::BondDiag(0)]).unwrap();
        let mut spins = [1, 1];
        ok.check(&l, 1.0, &mut spins).unwrap();
        assert_eq!(spins, [1, 1]);
    }
}
