//! Periodic square lattices and their bond tables.
//!
//! Sites are numbered row-major, `site = y * lx + x`. Bonds are emitted in a
//! fixed order: for each site in row-major order, its `+x` bond, then its `+y`
//! bond. Wrap-around bonds that duplicate an existing pair (`lx == 2` or
//! `ly == 2`) or that would connect a site to itself (`lx == 1` or `ly == 1`)
//! are dropped.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice geometry plus nearest-neighbour bond list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLattice", into = "RawLattice")]
pub struct LatticeSpec {
    lx: usize,
    ly: usize,
    bonds: Vec<(usize, usize)>,
    site_bonds: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawLattice {
    lx: usize,
    ly: usize,
    bonds: Vec<(usize, usize)>,
}

impl TryFrom<RawLattice> for LatticeSpec {
    type Error = Error;

    fn try_from(raw: RawLattice) -> Result<Self> {
        LatticeSpec::with_layout(raw.lx, raw.ly, raw.bonds)
    }
}

impl From<LatticeSpec> for RawLattice {
    fn from(l: LatticeSpec) -> Self {
        RawLattice { lx: l.lx, ly: l.ly, bonds: l.bonds }
    }
}

/// Upper bound on sites accepted by any constructor; keeps decoders of
/// untrusted input from allocating without limit.
pub const MAX_SITES: usize = 1 << 20;

impl LatticeSpec {
    /// Builds the `lx` x `ly` torus.
    pub fn square(lx: usize, ly: usize) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::Lattice(format!("dimensions must be positive, got {lx}x{ly}")));
        }
        let n = lx.checked_mul(ly).filter(|&n| n <= MAX_SITES).ok_or_else(|| {
            Error::Lattice(format!("{lx}x{ly} exceeds the {MAX_SITES}-site limit"))
        })?;
        if n < 2 {
            return Err(Error::Lattice("need at least two sites to carry a bond".into()));
        }

        let mut seen = HashSet::new();
        let mut bonds = Vec::with_capacity(2 * n);
        for y in 0..ly {
            for x in 0..lx {
                let s = y * lx + x;
                let right = y * lx + (x + 1) % lx;
                let up = ((y + 1) % ly) * lx + x;
                for t in [right, up] {
                    if t != s && seen.insert((s.min(t), s.max(t))) {
                        bonds.push((s, t));
                    }
                }
            }
        }
        Self::with_layout(lx, ly, bonds)
    }

    /// Arbitrary graph on `n_sites` sites. Geometry queries treat it as a
    /// single row of length `n_sites`.
    pub fn custom(n_sites: usize, bonds: Vec<(usize, usize)>) -> Result<Self> {
        Self::with_layout(n_sites, 1, bonds)
    }

    /// Layout `lx` x `ly` with an explicit bond list, validated.
    pub fn from_parts(lx: usize, ly: usize, bonds: Vec<(usize, usize)>) -> Result<Self> {
        Self::with_layout(lx, ly, bonds)
    }

    fn with_layout(lx: usize, ly: usize, bonds: Vec<(usize, usize)>) -> Result<Self> {
        let n = lx
            .checked_mul(ly)
            .filter(|&n| (1..=MAX_SITES).contains(&n))
            .ok_or_else(|| Error::Lattice(format!("bad layout {lx}x{ly}")))?;
        if bonds.len() > 4 * n {
            return Err(Error::Lattice(format!("{} bonds on {n} sites", bonds.len())));
        }
        let mut seen = HashSet::with_capacity(bonds.len());
        let mut site_bonds = vec![Vec::new(); n];
        for (b, &(i, j)) in bonds.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::Lattice(format!("bond {b} = ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::Lattice(format!("bond {b} is a self-loop on site {i}")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::Lattice(format!("bond {b} = ({i}, {j}) is duplicated")));
            }
            site_bonds[i].push(b);
            site_bonds[j].push(b);
        }
        Ok(LatticeSpec { lx, ly, bonds, site_bonds })
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn bond(&self, b: usize) -> (usize, usize) {
        self.bonds[b]
    }

    /// Bonds incident on `site`, in bond order.
    pub fn bonds_of_site(&self, site: usize) -> &[usize] {
        &self.site_bonds[site]
    }

    pub fn site_index(&self, x: usize, y: usize) -> Result<usize> {
        if x >= self.lx || y >= self.ly {
            return Err(Error::OutOfRange { x, y, lx: self.lx, ly: self.ly });
        }
        Ok(y * self.lx + x)
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.lx, site / self.lx)
    }

    /// Largest linear extent, used to resolve `beta = 2L`.
    pub fn linear_size(&self) -> usize {
        self.lx.max(self.ly)
    }

    /// Unordered site pairs separated by the displacement
    /// `(lx / 2, ly / 2)`, the farthest point on the torus.
    ///
    /// Each pair is listed once with the lower site first; the order follows
    /// the first site row-major. A 4x4 torus yields 8 pairs, a 3x3 torus 9.
    pub fn correlation_distance_pairs(&self) -> Vec<(usize, usize)> {
        let (dx, dy) = (self.lx / 2, self.ly / 2);
        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        for s in 0..self.n_sites() {
            let (x, y) = self.coords(s);
            let t = ((y + dy) % self.ly) * self.lx + (x + dx) % self.lx;
            if s != t && seen.insert((s.min(t), s.max(t))) {
                pairs.push((s.min(t), s.max(t)));
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_torus_drops_duplicate_wraps() {
        let l = LatticeSpec::square(2, 2).unwrap();
        assert_eq!(l.n_sites(), 4);
        // by hand: rows give (0,1),(2,3); columns give (0,2),(1,3)
        assert_eq!(l.bonds(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn bond_counts() {
        assert_eq!(LatticeSpec::square(4, 4).unwrap().n_bonds(), 32);
        assert_eq!(LatticeSpec::square(1, 2).unwrap().bonds(), &[(0, 1)]);
        assert_eq!(LatticeSpec::square(2, 3).unwrap().n_bonds(), 9);
        assert_eq!(LatticeSpec::square(3, 3).unwrap().n_bonds(), 18);
        assert_eq!(LatticeSpec::square(1, 3).unwrap().n_bonds(), 3);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(LatticeSpec::square(1, 1).is_err());
        assert!(LatticeSpec::square(0, 4).is_err());
        assert!(LatticeSpec::custom(3, vec![(0, 0)]).is_err());
        assert!(LatticeSpec::custom(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(LatticeSpec::custom(3, vec![(0, 3)]).is_err());
    }

    #[test]
    fn coordination_four_on_large_tori() {
        let l = LatticeSpec::square(5, 3).unwrap();
        for s in 0..l.n_sites() {
            assert_eq!(l.bonds_of_site(s).len(), 4);
        }
        let memberships: usize = (0..l.n_sites()).map(|s| l.bonds_of_site(s).len()).sum();
        assert_eq!(memberships, 2 * l.n_bonds());
    }

    #[test]
    fn row_major_indexing() {
        let l = LatticeSpec::square(4, 4).unwrap();
        assert_eq!(l.site_index(0, 0).unwrap(), 0);
        assert_eq!(l.site_index(3, 0).unwrap(), 3);
        assert_eq!(l.site_index(0, 1).unwrap(), 4);
        assert!(l.site_index(4, 0).is_err());
        for s in 0..16 {
            let (x, y) = l.coords(s);
            assert_eq!(l.site_index(x, y).unwrap(), s);
        }
    }

    #[test]
    fn translation_by_a_row_is_an_automorphism() {
        let l = LatticeSpec::square(4, 3).unwrap();
        let set: HashSet<_> = l.bonds().iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        let shift = |s: usize| (s + l.lx()) % l.n_sites();
        for &(i, j) in l.bonds() {
            let (a, b) = (shift(i), shift(j));
            assert!(set.contains(&(a.min(b), a.max(b))));
        }
    }

    #[test]
    fn farthest_pairs() {
        assert_eq!(LatticeSpec::square(2, 2).unwrap().correlation_distance_pairs(), vec![(0, 3), (1, 2)]);
        assert_eq!(LatticeSpec::square(1, 2).unwrap().correlation_distance_pairs(), vec![(0, 1)]);

        // enumerate torus distances on 4x4: every site has exactly one partner at (2,2)
        let l = LatticeSpec::square(4, 4).unwrap();
        let pairs = l.correlation_distance_pairs();
        assert_eq!(pairs.len(), 8);
        for &(i, j) in &pairs {
            let ((xi, yi), (xj, yj)) = (l.coords(i), l.coords(j));
            assert_eq!(((xj + 4 - xi) % 4, (yj + 4 - yi) % 4), (2, 2));
        }
        assert_eq!(LatticeSpec::square(3, 3).unwrap().correlation_distance_pairs().len(), 9);
    }

    #[test]
    fn serde_validates() {
        let l = LatticeSpec::square(3, 2).unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(serde_json::from_str::<LatticeSpec>(&s).unwrap(), l);
        let bad = r#"{"lx":2,"ly":1,"bonds":[[0,5]]}"#;
        assert!(serde_json::from_str::<LatticeSpec>(bad).is_err());
    }
}
