//! Plain-text contour dump, used to reproduce failures.
//!
//! ```text
//! renyi-contour 1
//! lattice 2 2
//! bonds 4 0:1 0:2 1:3 2:3
//! params 0.3 4 0.5
//! replicas 2
//! topology connected
//! sector_rule weight_ratio
//! w_update heat_bath
//! grow_cutoff true
//! junction 0 ++-+
//! junction 1 ++-+
//! insertions 0 1I 2X 1I 1I
//! insertions 1 1I 1I 1X 2I
//! segment 0 8 . D0 F2 . B1 F2 . .
//! segment 1 8 . . . . . . . .
//! rng {"seed":[...],"stream":0,"word_pos":0}
//! collision 0.25
//! end
//! ```
//!
//! Segment tokens: `.` padding, `D<site>`, `F<site>`, `B<bond>`. Insertion
//! tokens: sector digit then `I` or `X` for the W value. Floats are written in
//! shortest round-trip form, so dump then parse is lossless.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use super::{ContourData, ContourState, Insertion, Sector, SectorRule, Topology, WUpdate, WValue};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::oracle::ModelParams;
use crate::sse::{Op, OperatorString};

pub const DUMP_VERSION: u32 = 1;
const HEADER: &str = "renyi-contour";
/// Upper bound on a segment cutoff accepted by the parser.
pub const MAX_DUMP_CUTOFF: usize = 1 << 24;

pub fn to_text(state: &ContourState) -> String {
    let d = state.data();
    let mut s = String::new();
    let l = &d.lattice;
    writeln!(s, "{HEADER} {DUMP_VERSION}").unwrap();
    writeln!(s, "lattice {} {}", l.lx(), l.ly()).unwrap();
    write!(s, "bonds {}", l.n_bonds()).unwrap();
    for &(i, j) in l.bonds() {
        write!(s, " {i}:{j}").unwrap();
    }
    s.push('\n');
    writeln!(s, "params {} {} {}", d.params.j, d.params.beta, d.params.p).unwrap();
    writeln!(s, "replicas {}", d.replicas).unwrap();
    let topo = match d.topology {
        Topology::Connected => "connected",
        Topology::Disconnected => "disconnected",
    };
    writeln!(s, "topology {topo}").unwrap();
    let rule = match d.sector_rule {
        SectorRule::WeightRatio => "weight_ratio",
        SectorRule::Swapped => "swapped",
    };
    writeln!(s, "sector_rule {rule}").unwrap();
    let wu = match d.w_update {
        WUpdate::HeatBath => "heat_bath",
        WUpdate::Branching => "branching",
    };
    writeln!(s, "w_update {wu}").unwrap();
    writeln!(s, "grow_cutoff {}", d.grow_cutoff).unwrap();
    for (c, j) in d.junctions.iter().enumerate() {
        let spins: String = j.iter().map(|&z| if z > 0 { '+' } else { '-' }).collect();
        writeln!(s, "junction {c} {spins}").unwrap();
    }
    let nb = l.n_bonds();
    for c in 0..d.replicas {
        write!(s, "insertions {c}").unwrap();
        for ins in &d.insertions[c * nb..(c + 1) * nb] {
            let sec = if ins.sector == Sector::S1 { '1' } else { '2' };
            let w = if ins.w == WValue::Identity { 'I' } else { 'X' };
            write!(s, " {sec}{w}").unwrap();
        }
        s.push('\n');
    }
    for (c, seg) in d.segments.iter().enumerate() {
        write!(s, "segment {c} {}", seg.cutoff()).unwrap();
        for op in seg.slots() {
            match *op {
                Op::Identity => s.push_str(" ."),
                Op::SiteDiag(x) => write!(s, " D{x}").unwrap(),
                Op::SiteFlip(x) => write!(s, " F{x}").unwrap(),
                Op::BondDiag(x) => write!(s, " B{x}").unwrap(),
            }
        }
        s.push('\n');
    }
    writeln!(s, "rng {}", serde_json::to_string(&d.rng).expect("rng state serializes")).unwrap();
    match d.last_collision {
        Some(x) => writeln!(s, "collision {x}").unwrap(),
        None => writeln!(s, "collision none").unwrap(),
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next line, split into its keyword and the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (n, text) = self.it.next().ok_or_else(|| Error::parse(self.line + 1, format!("missing `{key}` line")))?;
        self.line = n + 1;
        let mut toks = text.split_ascii_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            other => Err(Error::parse(self.line, format!("expected `{key}`, found {other:?}"))),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }

    fn one<'t>(&self, toks: &[&'t str]) -> Result<&'t str> {
        match toks {
            [x] => Ok(x),
            _ => Err(self.err(format!("expected one value, found {}", toks.len()))),
        }
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("bad number `{tok}`")))
    }

    /// Checks that the leading index token equals `want`.
    fn index(&self, toks: &[&str], want: usize) -> Result<()> {
        match toks.first() {
            Some(t) if self.num::<usize>(t)? == want => Ok(()),
            _ => Err(self.err(format!("expected index {want}"))),
        }
    }
}

fn parse_op(tok: &str) -> Option<Op> {
    if tok == "." {
        return Some(Op::Identity);
    }
    let (head, rest) = tok.split_at_checked(1)?;
    let x: u32 = rest.parse().ok()?;
    match head {
        "D" => Some(Op::SiteDiag(x)),
        "F" => Some(Op::SiteFlip(x)),
        "B" => Some(Op::BondDiag(x)),
        _ => None,
    }
}

/// Parses a dump and validates the resulting contour.
pub fn from_text(text: &str) -> Result<ContourState> {
    let mut ln = Lines { it: text.lines().enumerate(), line: 0 };

    let v = ln.expect(HEADER)?;
    if ln.num::<u32>(ln.one(&v)?)? != DUMP_VERSION {
        return Err(ln.err("unsupported dump version"));
    }
    let v = ln.expect("lattice")?;
    let (lx, ly) = match v[..] {
        [a, b] => (ln.num::<usize>(a)?, ln.num::<usize>(b)?),
        _ => return Err(ln.err("expected `lattice lx ly`")),
    };
    let v = ln.expect("bonds")?;
    let nb: usize = ln.num(v.first().ok_or_else(|| ln.err("missing bond count"))?)?;
    if v.len() != nb + 1 {
        return Err(ln.err(format!("bond count {nb} but {} bonds listed", v.len().saturating_sub(1))));
    }
    let mut bonds = Vec::with_capacity(nb);
    for t in &v[1..] {
        let (a, b) = t.split_once(':').ok_or_else(|| ln.err(format!("bad bond `{t}`")))?;
        bonds.push((ln.num(a)?, ln.num(b)?));
    }
    let lattice = LatticeSpec::from_parts(lx, ly, bonds).map_err(|e| ln.err(e.to_string()))?;
    let (n, nb) = (lattice.n_sites(), lattice.n_bonds());

    let v = ln.expect("params")?;
    let params = match v[..] {
        [j, beta, p] => ModelParams { j: ln.num(j)?, beta: ln.num(beta)?, p: ln.num(p)? },
        _ => return Err(ln.err("expected `params J beta p`")),
    };
    let v = ln.expect("replicas")?;
    let replicas: usize = ln.num(ln.one(&v)?)?;
    if !(1..=2).contains(&replicas) {
        return Err(ln.err(format!("replicas = {replicas}")));
    }
    let v = ln.expect("topology")?;
    let topology = match ln.one(&v)? {
        "connected" => Topology::Connected,
        "disconnected" => Topology::Disconnected,
        t => return Err(ln.err(format!("unknown topology `{t}`"))),
    };
    let v = ln.expect("sector_rule")?;
    let sector_rule = match ln.one(&v)? {
        "weight_ratio" => SectorRule::WeightRatio,
        "swapped" => SectorRule::Swapped,
        t => return Err(ln.err(format!("unknown sector rule `{t}`"))),
    };
    let v = ln.expect("w_update")?;
    let w_update = match ln.one(&v)? {
        "heat_bath" => WUpdate::HeatBath,
        "branching" => WUpdate::Branching,
        t => return Err(ln.err(format!("unknown W update `{t}`"))),
    };
    let v = ln.expect("grow_cutoff")?;
    let grow_cutoff: bool = ln.num(ln.one(&v)?)?;

    let mut junctions = Vec::with_capacity(replicas);
    for c in 0..replicas {
        let v = ln.expect("junction")?;
        ln.index(&v, c)?;
        let spins = v.get(1).filter(|_| v.len() == 2).ok_or_else(|| ln.err("expected `junction c spins`"))?;
        let z: Vec<i8> = spins
            .chars()
            .map(|ch| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(ln.err(format!("bad spin `{ch}`"))),
            })
            .collect::<Result<_>>()?;
        if z.len() != n {
            return Err(ln.err(format!("{} spins for {n} sites", z.len())));
        }
        junctions.push(z);
    }

    let mut insertions = Vec::with_capacity(replicas * nb);
    for c in 0..replicas {
        let v = ln.expect("insertions")?;
        ln.index(&v, c)?;
        if v.len() != nb + 1 {
            return Err(ln.err(format!("{} insertions for {nb} bonds", v.len() - 1)));
        }
        for t in &v[1..] {
            let ins = match *t {
                "1I" => Insertion { sector: Sector::S1, w: WValue::Identity },
                "1X" => Insertion { sector: Sector::S1, w: WValue::XX },
                "2I" => Insertion { sector: Sector::S2, w: WValue::Identity },
                "2X" => Insertion { sector: Sector::S2, w: WValue::XX },
                _ => return Err(ln.err(format!("bad insertion `{t}`"))),
            };
            insertions.push(ins);
        }
    }

    let mut segments = Vec::with_capacity(replicas);
    for c in 0..replicas {
        let v = ln.expect("segment")?;
        ln.index(&v, c)?;
        let cutoff: usize = ln.num(v.get(1).ok_or_else(|| ln.err("missing cutoff"))?)?;
        if cutoff > MAX_DUMP_CUTOFF || v.len() != cutoff + 2 {
            return Err(ln.err(format!("cutoff {cutoff} with {} operators", v.len().saturating_sub(2))));
        }
        let ops = v[2..]
            .iter()
            .map(|t| parse_op(t).ok_or_else(|| ln.err(format!("bad operator `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        segments.push(OperatorString::from_slots(ops).map_err(|e| ln.err(e.to_string()))?);
    }

    let (n_rng, rng_line) = ln.it.next().ok_or_else(|| ln.err("missing `rng` line"))?;
    ln.line = n_rng + 1;
    let json = rng_line.strip_prefix("rng ").ok_or_else(|| ln.err("expected `rng`"))?;
    let rng: ChaCha8Rng = serde_json::from_str(json).map_err(|e| ln.err(format!("rng state: {e}")))?;

    let v = ln.expect("collision")?;
    let last_collision = match ln.one(&v)? {
        "none" => None,
        t => Some(ln.num::<f64>(t)?),
    };
    ln.expect("end")?;
    if let Some((k, rest)) = ln.it.find(|(_, t)| !t.trim().is_empty()) {
        return Err(Error::parse(k + 1, format!("trailing content `{rest}`")));
    }

    let data = ContourData {
        lattice,
        params,
        replicas,
        topology,
        sector_rule,
        w_update,
        grow_cutoff,
        segments,
        junctions,
        insertions,
        rng,
        last_collision,
    };
    ContourState::try_from(data)
}
