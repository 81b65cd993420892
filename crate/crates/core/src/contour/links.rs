//! Leg table for the whole contour.
//!
//! Vertices are numbered junction legs first (`slice * N + site`), then the W
//! pairs (`r N + 2 (c N_b + b) + {0 outer, 1 inner}`), then the SSE operators
//! replica by replica in slot order. Leg `4 v + k`: slots 0, 1 enter the
//! vertex on its first and second site, slots 2, 3 leave it. Single-site
//! vertices (junctions, site operators) use slots 0 and 2.

use super::ContourState;
use crate::sse::Op;

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Junction { slice: usize, site: usize },
    W { replica: usize, bond: usize, inner: bool },
    Op { replica: usize, slot: usize, op: Op },
}

impl VertexKind {
    pub fn n_sites(self) -> usize {
        match self {
            VertexKind::W { .. } | VertexKind::Op { op: Op::BondDiag(_), .. } => 2,
            _ => 1,
        }
    }
}

/// Doubly linked matching between outgoing and incoming legs along each
/// site's world line.
#[derive(Debug, Clone)]
pub struct LegLinks {
    pub next: Vec<u32>,
    pub prev: Vec<u32>,
    pub vertices: Vec<VertexKind>,
    n_sites: usize,
    replicas: usize,
    n_bonds: usize,
}

#[inline]
pub fn leg(v: usize, slot: usize) -> usize {
    4 * v + slot
}

impl LegLinks {
    pub fn build(state: &ContourState) -> Self {
        let l = state.lattice();
        let (n, nb, r) = (l.n_sites(), l.n_bonds(), state.replicas());
        let mut vertices = Vec::with_capacity(r * n + 2 * r * nb + state.total_ops());
        for slice in 0..r {
            vertices.extend((0..n).map(|site| VertexKind::Junction { slice, site }));
        }
        for replica in 0..r {
            for bond in 0..nb {
                vertices.push(VertexKind::W { replica, bond, inner: false });
                vertices.push(VertexKind::W { replica, bond, inner: true });
            }
        }
        for (replica, seg) in state.segments().iter().enumerate() {
            for (slot, &op) in seg.slots().iter().enumerate() {
                if !op.is_identity() {
                    vertices.push(VertexKind::Op { replica, slot, op });
                }
            }
        }

        let mut links = LegLinks {
            next: vec![NONE; 4 * vertices.len()],
            prev: vec![NONE; 4 * vertices.len()],
            vertices,
            n_sites: n,
            replicas: r,
            n_bonds: nb,
        };

        let mut v_op = r * n + 2 * r * nb;
        let mut last = vec![0usize; n];
        for c in 0..r {
            let (inp, out) = (state.input_slice(c), state.output_slice(c));
            for (k, x) in last.iter_mut().enumerate() {
                *x = leg(inp * n + k, 2);
            }
            for b in 0..nb {
                let (i, j) = l.bond(b);
                for inner in [0, 1] {
                    let v = links.w_vertex(c, b, inner == 1);
                    links.link(&mut last, i, v, 0);
                    links.link(&mut last, j, v, 1);
                }
            }
            for &op in state.segments()[c].slots() {
                match op {
                    Op::Identity => continue,
                    Op::SiteDiag(s) | Op::SiteFlip(s) => links.link(&mut last, s as usize, v_op, 0),
                    Op::BondDiag(b) => {
                        let (i, j) = l.bond(b as usize);
                        links.link(&mut last, i, v_op, 0);
                        links.link(&mut last, j, v_op, 1);
                    }
                }
                v_op += 1;
            }
            for (k, &from) in last.iter().enumerate() {
                let to = leg(out * n + k, 0);
                links.next[from] = to as u32;
                links.prev[to] = from as u32;
            }
        }
        links
    }

    fn link(&mut self, last: &mut [usize], site: usize, v: usize, in_slot: usize) {
        let to = leg(v, in_slot);
        self.next[last[site]] = to as u32;
        self.prev[to] = last[site] as u32;
        last[site] = leg(v, in_slot + 2);
    }

    pub fn n_legs(&self) -> usize {
        self.next.len()
    }

    pub fn junction_vertex(&self, slice: usize, site: usize) -> usize {
        slice * self.n_sites + site
    }

    pub fn w_vertex(&self, replica: usize, bond: usize, inner: bool) -> usize {
        self.replicas * self.n_sites + 2 * (replica * self.n_bonds + bond) + inner as usize
    }

    /// Whether the leg takes part in a world line.
    pub fn is_used(&self, l: usize) -> bool {
        self.next[l] != NONE || self.prev[l] != NONE
    }

    /// Follows one site's world line from an incoming leg through each
    /// vertex and returns the legs visited until the start recurs.
    pub fn walk(&self, start_in_leg: usize) -> Vec<usize> {
        let mut seen = Vec::new();
        let mut l = start_in_leg;
        loop {
            seen.push(l);
            let out = l + 2;
            seen.push(out);
            l = self.next[out] as usize;
            if l == start_in_leg {
                return seen;
            }
            assert!(l != NONE as usize && seen.len() <= self.n_legs(), "dangling or runaway world line");
        }
    }
}
