//! Swendsen-Wang style cluster update.
//!
//! Joining rules: consecutive legs of a world line belong together; a
//! junction joins its two legs; a bond operator joins all four; site
//! operators join nothing (flipping one side toggles diagonal and flip
//! operators). A W operator on branch `A` joins its two incoming legs and its
//! two outgoing legs, on branch `B` it joins each site's in and out legs. For
//! the pair, `(A, A)` additionally joins the legs outside the pair so each of
//! the two clusters toggles both W; mixed branches join all eight legs so the
//! W value never changes; `(B, B)` adds nothing. In sector `S2` the legs
//! between the two W operators are joined with the output slice on both bond
//! sites.
//!
//! Two implementations share these rules. [`build_clusters`] works on the
//! explicit leg table and is the reference; [`cluster_update`] unions whole
//! world-line segments (the stretch of one site between two vertices) with
//! reusable buffers and is what a sweep runs.

use rand::Rng;

use super::links::{leg, LegLinks, VertexKind};
use super::{ContourState, Sector, WUpdate};
use crate::sse::Op;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    A,
    B,
}

/// One fair coin per W operator, `[outer, inner]` per insertion.
pub fn sample_branchings<R: Rng + ?Sized>(n_insertions: usize, rng: &mut R) -> Vec<[Branch; 2]> {
    let mut out = Vec::with_capacity(n_insertions);
    fill_branchings(n_insertions, rng, &mut out);
    out
}

fn fill_branchings<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut Vec<[Branch; 2]>) {
    let mut coin = || if rng.random::<bool>() { Branch::A } else { Branch::B };
    out.clear();
    out.extend((0..n).map(|_| [coin(), coin()]));
}

#[derive(Debug, Clone, Default)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        let mut uf = UnionFind::default();
        uf.reset(n);
        uf
    }

    pub(crate) fn reset(&mut self, n: usize) {
        self.parent.clear();
        self.parent.extend(0..n as u32);
        self.rank.clear();
        self.rank.resize(n, 0);
    }

    pub(crate) fn len(&self) -> usize {
        self.parent.len()
    }

    pub(crate) fn push(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let g = self.parent[self.parent[x] as usize];
            self.parent[x] = g;
            x = g as usize;
        }
        x
    }

    /// Returns false when already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb as u32,
            std::cmp::Ordering::Greater => self.parent[rb] = ra as u32,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOutcome {
    pub n_clusters: usize,
    pub collision: Option<f64>,
}

/// Reference decomposition on the leg table: the root of every leg.
pub fn build_clusters(state: &ContourState, links: &LegLinks, branches: &[[Branch; 2]]) -> Vec<u32> {
    let mut uf = UnionFind::new(links.n_legs());
    for (l, &nx) in links.next.iter().enumerate() {
        if nx != super::links::NONE {
            uf.union(l, nx as usize);
        }
    }
    let l = state.lattice();
    let nb = l.n_bonds();
    for (v, kind) in links.vertices.iter().enumerate() {
        match *kind {
            VertexKind::Junction { .. } => {
                uf.union(leg(v, 0), leg(v, 2));
            }
            VertexKind::Op { op: Op::BondDiag(_), .. } => {
                for s in 1..4 {
                    uf.union(leg(v, 0), leg(v, s));
                }
            }
            VertexKind::Op { .. } => {}
            VertexKind::W { replica, bond, inner } => match branches[replica * nb + bond][inner as usize] {
                Branch::A => {
                    uf.union(leg(v, 0), leg(v, 1));
                    uf.union(leg(v, 2), leg(v, 3));
                }
                Branch::B => {
                    uf.union(leg(v, 0), leg(v, 2));
                    uf.union(leg(v, 1), leg(v, 3));
                }
            },
        }
    }
    for c in 0..state.replicas() {
        let out = state.output_slice(c);
        for b in 0..nb {
            let (o, i) = (links.w_vertex(c, b, false), links.w_vertex(c, b, true));
            match branches[c * nb + b] {
                [Branch::A, Branch::A] => {
                    uf.union(leg(o, 0), leg(i, 2));
                }
                [Branch::A, Branch::B] => {
                    uf.union(leg(o, 0), leg(o, 2));
                }
                [Branch::B, Branch::A] => {
                    uf.union(leg(i, 0), leg(i, 2));
                }
                [Branch::B, Branch::B] => {}
            }
            if state.insertion(c, b).sector == Sector::S2 {
                let (si, sj) = l.bond(b);
                uf.union(leg(o, 2), leg(links.junction_vertex(out, si), 0));
                uf.union(leg(o, 3), leg(links.junction_vertex(out, sj), 0));
            }
        }
    }
    (0..links.n_legs()).map(|x| uf.find(x) as u32).collect()
}

/// Reference partition signature: roots of, in order, every junction spin,
/// the legs of every operator vertex (in, out per site) and the six spins of
/// every W pair (before, between, after, each on both sites).
pub fn reference_signature(state: &ContourState, links: &LegLinks, roots: &[u32]) -> Vec<u32> {
    let mut sig = Vec::new();
    let n = state.lattice().n_sites();
    for s in 0..state.replicas() {
        for k in 0..n {
            sig.push(roots[leg(links.junction_vertex(s, k), 0)]);
        }
    }
    for (v, kind) in links.vertices.iter().enumerate() {
        if let VertexKind::Op { op, .. } = *kind {
            match op {
                Op::BondDiag(_) => sig.extend([0, 1, 2, 3].map(|s| roots[leg(v, s)])),
                _ => sig.extend([0, 2].map(|s| roots[leg(v, s)])),
            }
        }
    }
    for c in 0..state.replicas() {
        for b in 0..state.lattice().n_bonds() {
            let (o, i) = (links.w_vertex(c, b, false), links.w_vertex(c, b, true));
            sig.extend([leg(o, 0), leg(o, 1), leg(o, 2), leg(o, 3), leg(i, 2), leg(i, 3)].map(|l| roots[l]));
        }
    }
    sig
}

/// Relabels cluster ids by first appearance so partitions can be compared.
pub fn canonical(sig: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    sig.iter()
        .map(|r| {
            let next = map.len() as u32;
            *map.entry(*r).or_insert(next)
        })
        .collect()
}

/// Probability, over independent fair flips of every cluster, that slices 0
/// and 1 end up identical. `root_of(slice, site)` names the cluster of a
/// junction spin.
fn collision_from_roots<F: FnMut(usize, usize) -> u32>(
    a: &[i8],
    b: &[i8],
    mut root_of: F,
    label: &mut Vec<u32>,
    parity: &mut UnionFind,
    odd: &mut Vec<bool>,
) -> f64 {
    // parity union-find over cluster roots: x_ra xor x_rb = [a_k != b_k]
    const NONE: u32 = u32::MAX;
    let mut nodes = 0usize;
    parity.reset(0);
    odd.clear();
    let mut touched = Vec::new();
    let mut id = |r: u32, label: &mut Vec<u32>, parity: &mut UnionFind, odd: &mut Vec<bool>| {
        let r = r as usize;
        if r >= label.len() {
            label.resize(r + 1, NONE);
        }
        if label[r] == NONE {
            label[r] = parity.push();
            odd.push(false);
            touched.push(r);
            nodes += 1;
        }
        label[r] as usize
    };
    fn find(p: &mut UnionFind, odd: &mut [bool], x: usize) -> (usize, bool) {
        // parity of x relative to its root, with path compression by hand
        let mut path = Vec::new();
        let mut cur = x;
        while p.parent[cur] as usize != cur {
            path.push(cur);
            cur = p.parent[cur] as usize;
        }
        let root = cur;
        let mut acc = false;
        for &node in path.iter().rev() {
            acc ^= odd[node];
            odd[node] = acc;
            p.parent[node] = root as u32;
        }
        (root, if path.is_empty() { false } else { odd[x] })
    }
    let mut merges = 0i32;
    let mut consistent = true;
    for k in 0..a.len() {
        let x = id(root_of(0, k), label, parity, odd);
        let y = id(root_of(1, k), label, parity, odd);
        let want = a[k] != b[k];
        let (rx, px) = find(parity, odd, x);
        let (ry, py) = find(parity, odd, y);
        if rx == ry {
            if px ^ py != want {
                consistent = false;
                break;
            }
        } else {
            parity.parent[rx] = ry as u32;
            odd[rx] = px ^ py ^ want;
            merges += 1;
        }
    }
    for r in touched {
        label[r] = NONE;
    }
    if consistent {
        0.5f64.powi(merges)
    } else {
        0.0
    }
}

/// Collision probability from the reference leg decomposition.
pub fn collision_probability(state: &ContourState, links: &LegLinks, roots: &[u32]) -> f64 {
    collision_from_roots(
        state.junction(0),
        state.junction(1),
        |s, k| roots[leg(links.junction_vertex(s, k), 0)],
        &mut Vec::new(),
        &mut UnionFind::default(),
        &mut Vec::new(),
    )
}

/// Reusable buffers for the segment-based update.
#[derive(Debug, Clone, Default)]
pub struct ClusterScratch {
    uf: UnionFind,
    last: Vec<u32>,
    /// `(replica, slot, segment in, segment out)` per site operator.
    site_ops: Vec<(u32, u32, u32, u32)>,
    /// Segments around every operator vertex in contour order, for the
    /// partition signature.
    op_legs: Vec<u32>,
    /// Before, between and after segments `[x_i, x_j, u_i, u_j, y_i, y_j]`
    /// of each W pair.
    ws: Vec<[u32; 6]>,
    coin: Vec<u8>,
    branches: Vec<[Branch; 2]>,
    label: Vec<u32>,
    parity: UnionFind,
    odd: Vec<bool>,
}

impl ClusterScratch {
    /// Partition signature in the order of [`reference_signature`].
    pub fn signature(&mut self, n_junction_spins: usize) -> Vec<u32> {
        let mut sig: Vec<u32> = (0..n_junction_spins).map(|s| self.uf.find(s) as u32).collect();
        for k in 0..self.op_legs.len() {
            sig.push(self.uf.find(self.op_legs[k] as usize) as u32);
        }
        for k in 0..self.ws.len() {
            let [xi, xj, ui, uj, yi, yj] = self.ws[k];
            sig.extend([xi, xj, ui, uj, yi, yj].map(|s| self.uf.find(s as usize) as u32));
        }
        sig
    }
}

/// Builds the segment decomposition for `branches` into `scr`.
pub fn build_segments(state: &ContourState, branches: &[[Branch; 2]], scr: &mut ClusterScratch) {
    let l = state.lattice();
    let (n, nb, r) = (l.n_sites(), l.n_bonds(), state.replicas());
    let uf = &mut scr.uf;
    // junction spins are segments 0 .. r N
    uf.reset(r * n);
    scr.site_ops.clear();
    scr.op_legs.clear();
    scr.ws.clear();
    scr.last.resize(n, 0);
    for c in 0..r {
        let (inp, out) = (state.input_slice(c), state.output_slice(c));
        for (k, x) in scr.last.iter_mut().enumerate() {
            *x = (inp * n + k) as u32;
        }
        for b in 0..nb {
            let (i, j) = l.bond(b);
            let (xi, xj) = (scr.last[i] as usize, scr.last[j] as usize);
            let (ui, uj) = (uf.push() as usize, uf.push() as usize);
            let (yi, yj) = (uf.push() as usize, uf.push() as usize);
            let br = branches[c * nb + b];
            match br[0] {
                Branch::A => {
                    uf.union(xi, xj);
                    uf.union(ui, uj);
                }
                Branch::B => {
                    uf.union(xi, ui);
                    uf.union(xj, uj);
                }
            }
            match br[1] {
                Branch::A => {
                    uf.union(ui, uj);
                    uf.union(yi, yj);
                }
                Branch::B => {
                    uf.union(ui, yi);
                    uf.union(uj, yj);
                }
            }
            match br {
                [Branch::A, Branch::A] => uf.union(xi, yi),
                [Branch::A, Branch::B] => uf.union(xi, ui),
                [Branch::B, Branch::A] => uf.union(ui, yi),
                [Branch::B, Branch::B] => false,
            };
            if state.insertion(c, b).sector == Sector::S2 {
                uf.union(ui, out * n + i);
                uf.union(uj, out * n + j);
            }
            scr.ws.push([xi, xj, ui, uj, yi, yj].map(|s| s as u32));
            scr.last[i] = yi as u32;
            scr.last[j] = yj as u32;
        }
        for (slot, &op) in state.segments()[c].slots().iter().enumerate() {
            match op {
                Op::Identity => {}
                Op::SiteDiag(s) | Op::SiteFlip(s) => {
                    let a = scr.last[s as usize];
                    let b = uf.push();
                    scr.site_ops.push((c as u32, slot as u32, a, b));
                    scr.op_legs.extend([a, b]);
                    scr.last[s as usize] = b;
                }
                Op::BondDiag(bd) => {
                    // all four legs share one cluster, so the lines simply continue
                    let (i, j) = l.bond(bd as usize);
                    let (a, b) = (scr.last[i], scr.last[j]);
                    uf.union(a as usize, b as usize);
                    scr.op_legs.extend([a, b, a, b]);
                }
            }
        }
        for k in 0..n {
            uf.union(scr.last[k] as usize, out * n + k);
        }
    }
}

/// Branches for one update. Under [`WUpdate::Branching`] every W operator
/// draws a fair coin. Under [`WUpdate::HeatBath`] `S1` insertions are fixed to
/// `(B, B)`, and one coin per update sends every `S2` insertion to `(A, A)`
/// or every one to `(B, B)`. All-`(A, A)` leaves the two junction slices
/// unglued, so one slice can flip relative to the other; all-`(B, B)` leaves
/// the sites of a slice unglued, so magnetization can change. The branch
/// distribution never depends on the configuration, so either choice is an
/// exact cluster move.
fn choose_branches(state: &mut ContourState, out: &mut Vec<[Branch; 2]>) {
    let n = state.insertions().len();
    match state.w_update() {
        WUpdate::Branching => fill_branchings(n, &mut state.data_mut().rng, out),
        WUpdate::HeatBath => {
            out.clear();
            let d = state.data_mut();
            let s2 = if d.rng.random::<bool>() { [Branch::A, Branch::A] } else { [Branch::B, Branch::B] };
            for k in 0..n {
                out.push(match d.insertions[k].sector {
                    Sector::S1 => [Branch::B, Branch::B],
                    Sector::S2 => s2,
                });
            }
        }
    }
}

/// Samples branches, builds clusters, flips each with probability 1/2 and
/// writes the result back into junction spins, operator types and W values.
pub fn cluster_update(state: &mut ContourState, scr: &mut ClusterScratch) -> ClusterOutcome {
    let nb = state.lattice().n_bonds();
    let n = state.lattice().n_sites();
    let r = state.replicas();
    let mut branches = std::mem::take(&mut scr.branches);
    choose_branches(state, &mut branches);
    debug_assert_eq!(branches.len(), r * nb);
    build_segments(state, &branches, scr);
    scr.branches = branches;

    let collision = (r == 2).then(|| {
        let ClusterScratch { uf, label, parity, odd, .. } = scr;
        collision_from_roots(state.junction(0), state.junction(1), |s, k| uf.find(s * n + k) as u32, label, parity, odd)
    });

    const UNSET: u8 = 2;
    let n_seg = scr.uf.len();
    scr.coin.clear();
    scr.coin.resize(n_seg, UNSET);
    let mut n_clusters = 0;
    let d = state.data_mut();
    for s in 0..n_seg {
        let root = scr.uf.find(s);
        if scr.coin[root] == UNSET {
            scr.coin[root] = d.rng.random::<bool>() as u8;
            n_clusters += 1;
        }
    }
    let ClusterScratch { uf, coin, site_ops, ws, .. } = scr;
    let mut flipped = |s: u32| coin[uf.find(s as usize)] == 1;

    for slice in 0..r {
        for k in 0..n {
            if flipped((slice * n + k) as u32) {
                d.junctions[slice][k] = -d.junctions[slice][k];
            }
        }
    }
    for &(c, slot, a, b) in site_ops.iter() {
        if flipped(a) != flipped(b) {
            let op = &mut d.segments[c as usize].slots_mut()[slot as usize];
            *op = match *op {
                Op::SiteDiag(s) => Op::SiteFlip(s),
                Op::SiteFlip(s) => Op::SiteDiag(s),
                other => unreachable!("{other:?} recorded as a site operator"),
            };
        }
    }
    for (k, &[xi, xj, ui, uj, yi, yj]) in ws.iter().enumerate() {
        let t = flipped(xi) != flipped(ui);
        debug_assert_eq!(t, flipped(xj) != flipped(uj), "W operator split");
        debug_assert_eq!(t, flipped(ui) != flipped(yi), "W pair split");
        let _ = (yj,);
        if t {
            let ins = &mut d.insertions[k];
            ins.w = ins.w.toggled();
        }
    }
    ClusterOutcome { n_clusters, collision }
}

/// Leg-table version of [`cluster_update`] with given branches, for
/// cross-checking.
pub fn cluster_update_reference(state: &mut ContourState, links: &LegLinks, branches: &[[Branch; 2]]) -> ClusterOutcome {
    let roots = build_clusters(state, links, branches);
    let collision = (state.replicas() == 2).then(|| collision_probability(state, links, &roots));

    const UNSET: u8 = 2;
    let mut coin = vec![UNSET; links.n_legs()];
    let mut n_clusters = 0;
    {
        let rng = &mut state.data_mut().rng;
        for (l, &r) in roots.iter().enumerate() {
            if links.is_used(l) && coin[r as usize] == UNSET {
                coin[r as usize] = rng.random::<bool>() as u8;
                n_clusters += 1;
            }
        }
    }
    let flipped = |l: usize| coin[roots[l] as usize] == 1;

    let nb = state.lattice().n_bonds();
    let d = state.data_mut();
    for (v, kind) in links.vertices.iter().enumerate() {
        match *kind {
            VertexKind::Junction { slice, site } => {
                if flipped(leg(v, 0)) {
                    d.junctions[slice][site] = -d.junctions[slice][site];
                }
            }
            VertexKind::Op { replica, slot, op } => {
                if flipped(leg(v, 0)) != flipped(leg(v, 2)) {
                    let slot_op = &mut d.segments[replica].slots_mut()[slot];
                    *slot_op = match op {
                        Op::SiteDiag(s) => Op::SiteFlip(s),
                        Op::SiteFlip(s) => Op::SiteDiag(s),
                        other => unreachable!("bond operator {other:?} split by a cluster"),
                    };
                }
            }
            VertexKind::W { replica, bond, inner } => {
                let t = flipped(leg(v, 0)) != flipped(leg(v, 2));
                debug_assert_eq!(t, flipped(leg(v, 1)) != flipped(leg(v, 3)));
                if !inner && t {
                    let ins = &mut d.insertions[replica * nb + bond];
                    ins.w = ins.w.toggled();
                }
            }
        }
    }
    ClusterOutcome { n_clusters, collision }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{ContourOptions, Topology, WValue};
    use crate::lattice::LatticeSpec;
    use crate::oracle::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bare(lx: usize, ly: usize, r: usize, p: f64) -> ContourState {
        let l = LatticeSpec::square(lx, ly).unwrap();
        let opts = ContourOptions { replicas: r, ..Default::default() };
        ContourState::new(l, ModelParams { j: 0.5, beta: 1.0, p }, opts, ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn fair_branch_coins_are_reproducible() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = sample_branchings(50_000, &mut r1);
        assert_eq!(a, sample_branchings(50_000, &mut r2));
        let n_a = a.iter().flatten().filter(|&&b| b == Branch::A).count() as f64;
        let n = 100_000.0;
        assert!((n_a / n - 0.5).abs() < 4.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn segment_and_leg_partitions_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (p, r, topo) in [(0.5, 2, Topology::Connected), (0.7, 2, Topology::Disconnected), (0.4, 1, Topology::Connected), (1.0, 2, Topology::Connected)] {
            let l = LatticeSpec::square(2, 3).unwrap();
            let opts = ContourOptions { replicas: r, topology: topo, ..Default::default() };
            let mut s = ContourState::new(l, ModelParams { j: 0.6, beta: 1.5, p }, opts, ChaCha8Rng::seed_from_u64(3)).unwrap();
            let mut scr = ClusterScratch::default();
            for _ in 0..100 {
                s.sweep();
                let br = sample_branchings(r * s.lattice().n_bonds(), &mut rng);
                let links = LegLinks::build(&s);
                let roots = build_clusters(&s, &links, &br);
                let want = canonical(&reference_signature(&s, &links, &roots));
                build_segments(&s, &br, &mut scr);
                let got = canonical(&scr.signature(r * s.lattice().n_sites()));
                assert_eq!(got, want);
                if r == 2 {
                    let c_ref = collision_probability(&s, &links, &roots);
                    let ClusterScratch { uf, label, parity, odd, .. } = &mut scr;
                    let n = s.lattice().n_sites();
                    let c = collision_from_roots(s.junction(0), s.junction(1), |a, k| uf.find(a * n + k) as u32, label, parity, odd);
                    assert_eq!(c, c_ref);
                }
            }
        }
    }

    #[test]
    fn mixed_branches_keep_w() {
        let mut s = bare(1, 2, 1, 0.3);
        for br in [[Branch::A, Branch::B], [Branch::B, Branch::A]] {
            for _ in 0..50 {
                let before = s.insertion(0, 0).w;
                let links = LegLinks::build(&s);
                cluster_update_reference(&mut s, &links, &[br]);
                assert_eq!(s.insertion(0, 0).w, before);
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn double_a_toggles_w_and_stays_valid() {
        let mut s = bare(1, 2, 1, 0.3);
        let mut seen = [false; 2];
        for _ in 0..50 {
            let links = LegLinks::build(&s);
            cluster_update_reference(&mut s, &links, &[[Branch::A, Branch::A]]);
            s.validate().unwrap();
            seen[(s.insertion(0, 0).w == WValue::XX) as usize] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn s2_joins_whole_kronecker_site() {
        let s = bare(1, 2, 2, 1.0);
        let links = LegLinks::build(&s);
        let roots = build_clusters(&s, &links, &[[Branch::B, Branch::B], [Branch::B, Branch::B]]);
        // replica 0 reads slice 1 and writes slice 0; S2 ties the u legs to slice 0
        let o = links.w_vertex(0, 0, false);
        assert_eq!(roots[leg(o, 2)], roots[leg(links.junction_vertex(0, 0), 0)]);
        assert_eq!(roots[leg(o, 2)], roots[leg(links.junction_vertex(0, 0), 2)]);
    }

    #[test]
    fn free_circles_collide_with_probability_one_half_per_site() {
        // no bonds, so no W pairs: each site is one ring through both slices
        let l = LatticeSpec::custom(3, vec![]).unwrap();
        let s = ContourState::new(l, ModelParams { j: 0.0, beta: 1.0, p: 0.0 }, ContourOptions::default(), ChaCha8Rng::seed_from_u64(0)).unwrap();
        let links = LegLinks::build(&s);
        let roots = build_clusters(&s, &links, &[]);
        assert_eq!(collision_probability(&s, &links, &roots), 1.0);

        let disc = ContourOptions { topology: Topology::Disconnected, ..Default::default() };
        let s = ContourState::new(LatticeSpec::custom(3, vec![]).unwrap(), ModelParams { j: 0.0, beta: 1.0, p: 0.0 }, disc, ChaCha8Rng::seed_from_u64(0)).unwrap();
        let links = LegLinks::build(&s);
        let roots = build_clusters(&s, &links, &[]);
        assert_eq!(collision_probability(&s, &links, &roots), 0.125);
    }

    #[test]
    fn all_up_single_site_circles_randomize() {
        let l = LatticeSpec::custom(2, vec![]).unwrap();
        let opts = ContourOptions { replicas: 1, ..Default::default() };
        let mut s = ContourState::new(l, ModelParams { j: 0.0, beta: 1e-9, p: 0.0 }, opts, ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut counts = [[0u32; 2]; 2];
        let n = 20_000;
        for _ in 0..n {
            s.sweep();
            for k in 0..2 {
                counts[k][(s.junction(0)[k] < 0) as usize] += 1;
            }
        }
        for c in counts {
            let f = c[0] as f64 / n as f64;
            assert!((f - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{c:?}");
        }
    }
}
