//! Extended-ensemble contour for `Tr(rho)` (one replica) and `Tr(rho^2)`
//! (two replicas) with `rho = E[exp(-beta H)]`.
//!
//! Each replica `c` is one SSE segment running from its input junction slice
//! to its output junction slice `c`. With two connected replicas the input of
//! replica `c` is slice `1 - c`, so the two segments close into one ring;
//! otherwise each replica closes on itself.
//!
//! Along a replica the time order is: input slice, a stack of W pairs (for
//! each bond in bond order, an outer then an inner W), the SSE operators,
//! the output slice. Each (replica, bond) insertion is in one of two sectors:
//!
//! * `S1`, weight `(1-p)/2`, W free: the pair is `W W = 1`, so the spins
//!   between the two W operators are either unchanged or flipped on both
//!   bond sites.
//! * `S2`, weight `p`, Kronecker constraint: on both bond sites the spin
//!   between the W operators equals the output slice spin, i.e.
//!   `out[k] * in[k] = w` for `k` in the bond.
//!
//! Summing over sectors and W reproduces the per-bond factor
//! `(1-p) + p * [z_i z_j equal on the two slices]`.

pub mod cluster;
pub mod dump;
pub mod links;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::oracle::ModelParams;
use crate::sse::{OperatorString, SseWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Connected,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WValue {
    Identity,
    XX,
}

impl WValue {
    pub fn sign(self) -> i8 {
        match self {
            WValue::Identity => 1,
            WValue::XX => -1,
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            WValue::Identity => WValue::XX,
            WValue::XX => WValue::Identity,
        }
    }
}

/// Sector and shared W value of one paired insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub sector: Sector,
    pub w: WValue,
}

/// Acceptance probabilities for sector switches.
///
/// `WeightRatio` uses the Metropolis ratio of the two sector weights,
/// `min(1, 2p/(1-p))` for `S1 -> S2` and its inverse for `S2 -> S1`.
/// `Swapped` swaps the two; it is kept only to demonstrate that it does not
/// sample the target distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorRule {
    WeightRatio,
    Swapped,
}

/// `(P(S1 -> S2), P(S2 -> S1))`, with `p = 0` and `p = 1` frozen.
pub fn sector_probabilities(rule: SectorRule, p: f64) -> (f64, f64) {
    if p <= 0.0 {
        return (0.0, 1.0);
    }
    if p >= 1.0 {
        return (1.0, 0.0);
    }
    let ratio = 2.0 * p / (1.0 - p);
    let (up, down) = (ratio.min(1.0), (1.0 / ratio).min(1.0));
    match rule {
        SectorRule::WeightRatio => (up, down),
        SectorRule::Swapped => (down, up),
    }
}

/// How W values are updated.
///
/// `HeatBath` redraws the W value of every `S1` insertion each sweep (its
/// weight does not depend on W) and lets clusters run straight through those
/// W operators; `S2` insertions share one branch choice per sweep (see
/// [`cluster`]). `Branching` draws a fair coin for every W
/// operator, so W values change only through cluster flips. Branch `A` glues
/// the two sites of a bond, and with many bonds whole junction slices end up
/// in one cluster: the chain freezes already on a 3x3 torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WUpdate {
    HeatBath,
    Branching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourOptions {
    pub replicas: usize,
    pub topology: Topology,
    pub sector_rule: SectorRule,
    pub w_update: WUpdate,
    pub initial_cutoff: usize,
    pub grow_cutoff: bool,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            replicas: 2,
            topology: Topology::Connected,
            sector_rule: SectorRule::WeightRatio,
            w_update: WUpdate::HeatBath,
            initial_cutoff: 16,
            grow_cutoff: true,
        }
    }
}

/// Unvalidated contour contents, the interchange form for checkpoints and
/// text dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourData {
    pub lattice: LatticeSpec,
    pub params: ModelParams,
    pub replicas: usize,
    pub topology: Topology,
    pub sector_rule: SectorRule,
    pub w_update: WUpdate,
    pub grow_cutoff: bool,
    pub segments: Vec<OperatorString>,
    pub junctions: Vec<Vec<i8>>,
    pub insertions: Vec<Insertion>,
    pub rng: ChaCha8Rng,
    pub last_collision: Option<f64>,
}

/// A validated contour; every reachable state has positive weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ContourData", into = "ContourData")]
pub struct ContourState {
    d: ContourData,
    scratch: cluster::ClusterScratch,
}

impl PartialEq for ContourState {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
    }
}

impl TryFrom<ContourData> for ContourState {
    type Error = Error;

    fn try_from(d: ContourData) -> Result<Self> {
        let s = ContourState { d, scratch: Default::default() };
        s.validate()?;
        Ok(s)
    }
}

impl From<ContourState> for ContourData {
    fn from(s: ContourState) -> Self {
        s.d
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub inserted: u64,
    pub removed: u64,
    pub clusters: u64,
    pub to_s2_proposed: u64,
    pub to_s2_accepted: u64,
    pub to_s1_proposed: u64,
    pub to_s1_accepted: u64,
    /// `S1 -> S2` proposals skipped because the constraint failed; they also
    /// count in `to_s2_proposed`.
    pub null_moves: u64,
}

impl SweepStats {
    pub fn merge(&mut self, o: &SweepStats) {
        self.inserted += o.inserted;
        self.removed += o.removed;
        self.clusters += o.clusters;
        self.to_s2_proposed += o.to_s2_proposed;
        self.to_s2_accepted += o.to_s2_accepted;
        self.to_s1_proposed += o.to_s1_proposed;
        self.to_s1_accepted += o.to_s1_accepted;
        self.null_moves += o.null_moves;
    }
}

/// Diagonal observables at the junction slices. Slice A is slice 0, slice B
/// is slice `r - 1` (the same slice for one replica).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub m1: i32,
    pub m2: i32,
    pub q: i32,
    /// Pair-averaged `z_i z_j`. With one replica this is averaged over every
    /// slot of the segment; otherwise it is read on slice A.
    pub c0: f64,
    /// Pair-averaged `z_i z_j`, averaged over slices A and B.
    pub c1: f64,
    /// Pair-averaged `z_i^A z_j^A z_i^B z_j^B`.
    pub c2: f64,
    pub sector_fraction: f64,
    /// Cluster-averaged indicator that the two slices agree (two replicas
    /// only).
    pub collision: Option<f64>,
}

impl ContourState {
    pub fn new(lattice: LatticeSpec, params: ModelParams, opts: ContourOptions, rng: ChaCha8Rng) -> Result<Self> {
        params.validate()?;
        if !(1..=2).contains(&opts.replicas) {
            return Err(Error::InvalidParam(format!("replicas must be 1 or 2, got {}", opts.replicas)));
        }
        let r = opts.replicas;
        let n = lattice.n_sites();
        let start = if params.p >= 1.0 { Sector::S2 } else { Sector::S1 };
        let d = ContourData {
            params,
            replicas: r,
            topology: opts.topology,
            sector_rule: opts.sector_rule,
            w_update: opts.w_update,
            grow_cutoff: opts.grow_cutoff,
            segments: vec![OperatorString::new(opts.initial_cutoff); r],
            junctions: vec![vec![1i8; n]; r],
            insertions: vec![Insertion { sector: start, w: WValue::Identity }; r * lattice.n_bonds()],
            lattice,
            rng,
            last_collision: None,
        };
        ContourState::try_from(d)
    }

    pub fn data(&self) -> &ContourData {
        &self.d
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.d.lattice
    }

    pub fn params(&self) -> ModelParams {
        self.d.params
    }

    pub fn replicas(&self) -> usize {
        self.d.replicas
    }

    pub fn topology(&self) -> Topology {
        self.d.topology
    }

    pub fn segments(&self) -> &[OperatorString] {
        &self.d.segments
    }

    pub fn junction(&self, slice: usize) -> &[i8] {
        &self.d.junctions[slice]
    }

    pub fn insertion(&self, replica: usize, bond: usize) -> Insertion {
        self.d.insertions[replica * self.d.lattice.n_bonds() + bond]
    }

    pub fn insertions(&self) -> &[Insertion] {
        &self.d.insertions
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.d.rng
    }

    pub fn last_collision(&self) -> Option<f64> {
        self.d.last_collision
    }

    pub fn w_update(&self) -> WUpdate {
        self.d.w_update
    }

    pub fn set_grow_cutoff(&mut self, grow: bool) {
        self.d.grow_cutoff = grow;
    }

    pub fn total_ops(&self) -> usize {
        self.d.segments.iter().map(|s| s.n_ops()).sum()
    }

    /// Slice feeding replica `c`.
    pub fn input_slice(&self, c: usize) -> usize {
        match (self.d.replicas, self.d.topology) {
            (2, Topology::Connected) => 1 - c,
            _ => c,
        }
    }

    /// Slice closing replica `c`.
    pub fn output_slice(&self, c: usize) -> usize {
        c
    }

    fn weights(&self) -> SseWeights {
        SseWeights::new(&self.d.lattice, self.d.params.j, self.d.params.beta)
    }

    /// Whether insertion `(c, b)` satisfies the Kronecker constraint.
    pub fn compatible(&self, c: usize, b: usize) -> bool {
        let (i, j) = self.d.lattice.bond(b);
        let w = self.insertion(c, b).w.sign();
        let (inp, out) = (&self.d.junctions[self.input_slice(c)], &self.d.junctions[self.output_slice(c)]);
        out[i] * inp[i] == w && out[j] * inp[j] == w
    }

    /// Full consistency check: shapes, operator weights, wiring closure and
    /// sector constraints.
    pub fn validate(&self) -> Result<()> {
        let d = &self.d;
        d.params.validate()?;
        let bad = |m: String| Err(Error::Wiring(m));
        if !(1..=2).contains(&d.replicas) {
            return bad(format!("replicas = {}", d.replicas));
        }
        let (n, nb, r) = (d.lattice.n_sites(), d.lattice.n_bonds(), d.replicas);
        if d.segments.len() != r || d.junctions.len() != r || d.insertions.len() != r * nb {
            return bad("component counts do not match replica and bond counts".into());
        }
        if d.junctions.iter().any(|s| s.len() != n || s.iter().any(|&z| z != 1 && z != -1)) {
            return bad("junction slice malformed".into());
        }
        if let Some(x) = d.last_collision {
            if !(0.0..=1.0).contains(&x) {
                return bad(format!("collision value {x}"));
            }
        }
        for c in 0..r {
            let mut spins = d.junctions[self.input_slice(c)].clone();
            d.segments[c].check(&d.lattice, d.params.j, &mut spins)?;
            if spins != d.junctions[self.output_slice(c)] {
                return bad(format!("replica {c} does not propagate to its output slice"));
            }
        }
        for c in 0..r {
            for b in 0..nb {
                match self.insertion(c, b).sector {
                    Sector::S2 if d.params.p <= 0.0 => return bad("S2 insertion at p = 0".into()),
                    Sector::S1 if d.params.p >= 1.0 => return bad("S1 insertion at p = 1".into()),
                    Sector::S2 if !self.compatible(c, b) => {
                        return bad(format!("S2 insertion ({c}, {b}) violates the Kronecker constraint"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Diagonal updates on every segment, one cluster update, the `S1` W
    /// heat bath (when enabled), then one sector-update pass.
    pub fn sweep(&mut self) -> SweepStats {
        let mut stats = SweepStats::default();
        let w = self.weights();
        for c in 0..self.d.replicas {
            let mut spins = self.d.junctions[self.input_slice(c)].clone();
            let d = &mut self.d;
            let ds = d.segments[c].diagonal_update(&mut spins, &d.lattice, &w, &mut d.rng);
            if d.grow_cutoff {
                d.segments[c].grow(&mut d.rng);
            }
            stats.inserted += ds.inserted;
            stats.removed += ds.removed;
        }

        let mut scratch = std::mem::take(&mut self.scratch);
        let out = cluster::cluster_update(self, &mut scratch);
        self.scratch = scratch;
        stats.clusters = out.n_clusters as u64;
        self.d.last_collision = out.collision;

        if self.d.w_update == WUpdate::HeatBath {
            let d = &mut self.d;
            for ins in d.insertions.iter_mut().filter(|x| x.sector == Sector::S1) {
                ins.w = if d.rng.random::<bool>() { WValue::XX } else { WValue::Identity };
            }
        }
        self.sector_pass(&mut stats);
        debug_assert!(self.validate().is_ok(), "{:?}", self.validate());
        stats
    }

    fn sector_pass(&mut self, stats: &mut SweepStats) {
        let (p12, p21) = sector_probabilities(self.d.sector_rule, self.d.params.p);
        let nb = self.d.lattice.n_bonds();
        for c in 0..self.d.replicas {
            for b in 0..nb {
                let k = c * nb + b;
                match self.d.insertions[k].sector {
                    Sector::S1 => {
                        if p12 <= 0.0 {
                            continue;
                        }
                        stats.to_s2_proposed += 1;
                        if !self.compatible(c, b) {
                            stats.null_moves += 1;
                            continue;
                        }
                        if self.d.rng.random::<f64>() < p12 {
                            self.d.insertions[k].sector = Sector::S2;
                            stats.to_s2_accepted += 1;
                        }
                    }
                    Sector::S2 => {
                        if p21 <= 0.0 {
                            continue;
                        }
                        stats.to_s1_proposed += 1;
                        if self.d.rng.random::<f64>() < p21 {
                            self.d.insertions[k].sector = Sector::S1;
                            stats.to_s1_accepted += 1;
                        }
                    }
                }
            }
        }
    }

    pub fn measure(&self, pairs: &[(usize, usize)]) -> Measurement {
        let r = self.d.replicas;
        let (a, b) = (&self.d.junctions[0], &self.d.junctions[r - 1]);
        let sum = |s: &[i8]| s.iter().map(|&z| z as i32).sum::<i32>();
        let np = pairs.len().max(1) as f64;
        let pair_avg = |f: &dyn Fn(usize, usize) -> i32| pairs.iter().map(|&(i, j)| f(i, j)).sum::<i32>() as f64 / np;
        let ca = pair_avg(&|i, j| (a[i] * a[j]) as i32);
        let cb = pair_avg(&|i, j| (b[i] * b[j]) as i32);
        let n_s2 = self.d.insertions.iter().filter(|x| x.sector == Sector::S2).count();
        Measurement {
            m1: sum(a),
            m2: sum(b),
            q: a.iter().zip(b).map(|(&x, &y)| (x * y) as i32).sum(),
            c0: if r == 1 { self.slice_averaged_correlator(pairs) } else { ca },
            c1: 0.5 * (ca + cb),
            c2: pair_avg(&|i, j| (a[i] * a[j] * b[i] * b[j]) as i32),
            sector_fraction: if self.d.insertions.is_empty() { 0.0 } else { n_s2 as f64 / self.d.insertions.len() as f64 },
            collision: self.d.last_collision,
        }
    }

    /// Equal-time `z_i z_j` averaged over all slots of replica 0. Valid for
    /// one replica because the channel leaves `Tr(rho Z_i Z_j)` unchanged, so
    /// any time slice is an unbiased insertion point.
    fn slice_averaged_correlator(&self, pairs: &[(usize, usize)]) -> f64 {
        let mut z = self.d.junctions[self.input_slice(0)].clone();
        let mut partners = vec![Vec::new(); z.len()];
        for &(i, j) in pairs {
            partners[i].push(j);
            partners[j].push(i);
        }
        let mut cur: i64 = pairs.iter().map(|&(i, j)| (z[i] * z[j]) as i64).sum();
        let mut acc: i64 = 0;
        let slots = self.d.segments[0].slots();
        for op in slots {
            if let crate::sse::Op::SiteFlip(s) = *op {
                let s = s as usize;
                for &t in &partners[s] {
                    cur -= 2 * (z[s] * z[t]) as i64;
                }
                z[s] = -z[s];
            }
            acc += cur;
        }
        acc as f64 / (slots.len() * pairs.len().max(1)) as f64
    }

    pub(crate) fn data_mut(&mut self) -> &mut ContourData {
        &mut self.d
    }
}
