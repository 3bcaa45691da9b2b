//! YHK and PDA tree-growth processes.
//!
//! YHK attaches each new leaf to a uniformly chosen pendant edge, PDA to a
//! uniformly chosen edge of any kind. Labels are handed out in insertion
//! order; every statistic computed here is label-invariant.
//!
//! [`TrackedTree`] keeps the edge-type vector up to date in O(1) work per
//! step, so long simulations never pay for a full recount.

use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tree::{EdgeRef, EdgeTypeVector, NodeId, PhyloTree, Taxon};
use crate::urn::ReplacementMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Yhk,
    Pda,
}

impl Model {
    /// Dimension of the edge-type vector the model is analysed with.
    pub fn dim(self) -> usize {
        match self {
            Model::Yhk => 4,
            Model::Pda => 6,
        }
    }

    pub fn replacement(self) -> ReplacementMatrix {
        match self {
            Model::Yhk => ReplacementMatrix::yhk(),
            Model::Pda => ReplacementMatrix::pda(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Yhk => "yhk",
            Model::Pda => "pda",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "yhk" => Ok(Model::Yhk),
            "pda" => Ok(Model::Pda),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProcessKind {
    pub model: Model,
    pub rooted: bool,
}

impl ProcessKind {
    pub const YHK_ROOTED: ProcessKind = ProcessKind {
        model: Model::Yhk,
        rooted: true,
    };
    pub const PDA_ROOTED: ProcessKind = ProcessKind {
        model: Model::Pda,
        rooted: true,
    };
    pub const YHK_UNROOTED: ProcessKind = ProcessKind {
        model: Model::Yhk,
        rooted: false,
    };
    pub const PDA_UNROOTED: ProcessKind = ProcessKind {
        model: Model::Pda,
        rooted: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaScope {
    PendantOnly,
    Full,
}

/// Change in the type vector caused by attaching to an edge of type
/// `edge_type` (1-based): the matching row of the replacement matrix.
pub fn edge_type_delta(edge_type: usize, scope: DeltaScope) -> Result<Vec<i64>> {
    let r = match scope {
        DeltaScope::PendantOnly => ReplacementMatrix::yhk(),
        DeltaScope::Full => ReplacementMatrix::pda(),
    };
    if edge_type == 0 || edge_type > r.dim() {
        return Err(Error::EdgeTypeOutOfRange {
            ty: edge_type,
            dim: r.dim(),
        });
    }
    Ok(r.row(edge_type - 1).to_vec())
}

/// A tree together with an incrementally maintained edge classification.
#[derive(Clone, Debug)]
pub struct TrackedTree {
    tree: PhyloTree,
    /// Rooted trees: leaves below each node, capped at 4.
    size4: Vec<u8>,
    /// Type (1..=6) of the edge above each node; 0 for the root/anchor and
    /// while classification is undefined.
    types: Vec<u8>,
    counts: Option<[u64; 6]>,
    next_label: Taxon,
}

const UNROOTED_RADIUS: usize = 6;

impl TrackedTree {
    pub fn new(tree: PhyloTree) -> Self {
        let next_label = tree.max_label() + 1;
        let mut t = TrackedTree {
            tree,
            size4: Vec::new(),
            types: Vec::new(),
            counts: None,
            next_label,
        };
        t.recount();
        t
    }

    /// Rebuilds all cached data from the tree.
    fn recount(&mut self) {
        self.size4 = self
            .tree
            .subtree_sizes()
            .into_iter()
            .map(|s| s.min(4) as u8)
            .collect();
        match self.tree.edge_types() {
            Ok(types) => {
                let mut counts = [0u64; 6];
                for &t in types.iter().filter(|&&t| t > 0) {
                    counts[t as usize - 1] += 1;
                }
                self.types = types;
                self.counts = Some(counts);
            }
            Err(_) => {
                self.types = vec![0; self.tree.node_count()];
                self.counts = None;
            }
        }
    }

    pub fn tree(&self) -> &PhyloTree {
        &self.tree
    }

    pub fn into_tree(self) -> PhyloTree {
        self.tree
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }

    pub fn next_label(&self) -> Taxon {
        self.next_label
    }

    /// Cached type of the edge above `child`, if classification is defined.
    pub fn edge_type(&self, child: NodeId) -> Option<u8> {
        self.counts.map(|_| self.types[child]).filter(|&t| t > 0)
    }

    /// `(|E1|, ..., |E6|)`, or `None` for unrooted trees with fewer than 6
    /// leaves.
    pub fn counts(&self) -> Option<[u64; 6]> {
        self.counts
    }

    pub fn edge_type_vector(&self, model: Model) -> Option<EdgeTypeVector> {
        self.counts
            .map(|c| EdgeTypeVector(c[..model.dim()].to_vec()))
    }

    /// `(A, B)`: pitchforks and cherries, read off the type counts.
    pub fn pitchforks_cherries(&self) -> Option<(u64, u64)> {
        self.counts.map(|c| (c[0] / 2, (c[0] + c[1]) / 2))
    }

    /// Attaches the next label to `edge` and updates the classification.
    pub fn attach(&mut self, edge: EdgeRef) -> Result<(NodeId, NodeId)> {
        let label = self.next_label;
        let (w, x) = self.tree.attach_leaf(edge, label)?;
        self.next_label += 1;
        self.size4.push(0);
        self.size4.push(1);
        self.types.push(0);
        self.types.push(0);
        if self.counts.is_none() {
            // Classification may have just become defined (unrooted n = 6).
            self.recount();
            return Ok((w, x));
        }
        if self.tree.is_rooted() {
            self.update_rooted(w);
        } else {
            self.update_unrooted(w);
        }
        Ok((w, x))
    }

    fn update_rooted(&mut self, w: NodeId) {
        let root = self.tree.root_or_anchor();
        let v = self.tree.children(w)[0];
        self.size4[w] = (self.size4[v] + 1).min(4);
        let mut changed = vec![w];
        let mut a = self.tree.parent(w).expect("w has a parent");
        while a != root && self.size4[a] < 4 {
            self.size4[a] += 1;
            changed.push(a);
            a = self.tree.parent(a).expect("non-root node has a parent");
        }
        let mut affected: Vec<NodeId> = Vec::with_capacity(16);
        for &c in &changed {
            affected.push(c);
            for &g in self.tree.children(c) {
                affected.push(g);
                affected.extend_from_slice(self.tree.children(g));
            }
        }
        affected.sort_unstable();
        affected.dedup();
        let counts = self.counts.as_mut().expect("rooted trees are always classified");
        for &c in &affected {
            let old = self.types[c];
            if old > 0 {
                counts[old as usize - 1] -= 1;
            }
        }
        for &c in &affected {
            let t = rooted_type(&self.tree, &self.size4, root, c);
            self.types[c] = t;
            counts[t as usize - 1] += 1;
        }
    }

    fn update_unrooted(&mut self, w: NodeId) {
        let anchor = self.tree.root_or_anchor();
        let ball = ball(&self.tree, w, UNROOTED_RADIUS);
        let counts = self.counts.as_mut().expect("checked by caller");
        for &c in ball.iter().filter(|&&c| c != anchor) {
            let old = self.types[c];
            if old > 0 {
                counts[old as usize - 1] -= 1;
            }
        }
        for &c in ball.iter().filter(|&&c| c != anchor) {
            let t = unrooted_type(&self.tree, c);
            self.types[c] = t;
            counts[t as usize - 1] += 1;
        }
    }

    /// One YHK step: attach to a uniformly chosen pendant edge.
    pub fn yhk_step(&mut self, rng: &mut Rng) -> Result<TraceStep> {
        let leaves = self.tree.leaves();
        let child = leaves[rng.random_range(0..leaves.len())];
        self.step_at(child)
    }

    /// One PDA step: attach to a uniformly chosen edge.
    pub fn pda_step(&mut self, rng: &mut Rng) -> Result<TraceStep> {
        let top = self.tree.root_or_anchor();
        let mut child = rng.random_range(0..self.tree.edge_count());
        if child >= top {
            child += 1;
        }
        self.step_at(child)
    }

    pub fn step(&mut self, model: Model, rng: &mut Rng) -> Result<TraceStep> {
        match model {
            Model::Yhk => self.yhk_step(rng),
            Model::Pda => self.pda_step(rng),
        }
    }

    fn step_at(&mut self, child: NodeId) -> Result<TraceStep> {
        let edge = self.tree.edge(child)?;
        let edge_type = self.edge_type(child);
        let taxon = self.next_label;
        self.attach(edge)?;
        Ok(TraceStep {
            edge,
            edge_type,
            taxon,
        })
    }
}

fn rooted_type(tree: &PhyloTree, size4: &[u8], root: NodeId, c: NodeId) -> u8 {
    let p = tree.parent(c).expect("edge has a parent end");
    if tree.is_leaf(c) {
        let cherry = size4[p] == 2;
        let pitchfork = size4[p] == 3
            || (cherry && {
                let gp = tree.parent(p).expect("interior vertex below root");
                gp != root && size4[gp] == 3
            });
        leaf_type(cherry, pitchfork)
    } else if size4[c] == 2 && !(p != root && size4[p] == 3) {
        5
    } else {
        6
    }
}

fn leaf_type(cherry: bool, pitchfork: bool) -> u8 {
    match (cherry, pitchfork) {
        (true, true) => 1,
        (true, false) => 2,
        (false, true) => 3,
        (false, false) => 4,
    }
}

/// Leaves on the `to` side of edge `{from, to}`, capped at 4.
fn capped_side(tree: &PhyloTree, from: NodeId, to: NodeId) -> u8 {
    // A side with k leaves has 2k - 1 nodes; more than 5 means k >= 4.
    let mut stack = [(0usize, 0usize); 12];
    let mut len = 0;
    stack[len] = (to, from);
    len += 1;
    let mut visited = 0;
    let mut leaves = 0u8;
    while len > 0 {
        len -= 1;
        let (v, came) = stack[len];
        visited += 1;
        if visited > 5 {
            return 4;
        }
        if tree.is_leaf(v) {
            leaves += 1;
            continue;
        }
        for u in tree.neighbors(v) {
            if u != came {
                stack[len] = (u, v);
                len += 1;
            }
        }
    }
    leaves.min(4)
}

/// Cherry and pitchfork membership of leaf `x` in an unrooted tree with at
/// least six leaves, where every 2- or 3-leaf side counts.
fn unrooted_leaf_flags(tree: &PhyloTree, x: NodeId) -> (bool, bool) {
    let p = tree.neighbors(x)[0];
    let mut cherry = false;
    let mut pitchfork = false;
    let mut note = |s: u8| match s {
        2 => cherry = true,
        3 => pitchfork = true,
        _ => {}
    };
    for q in tree.neighbors(p) {
        if q == x {
            continue;
        }
        note(capped_side(tree, q, p));
        for z in tree.neighbors(q) {
            if z != p {
                note(capped_side(tree, z, q));
            }
        }
    }
    (cherry, pitchfork)
}

fn unrooted_type(tree: &PhyloTree, c: NodeId) -> u8 {
    if tree.is_leaf(c) {
        let (cherry, pf) = unrooted_leaf_flags(tree, c);
        return leaf_type(cherry, pf);
    }
    let p = tree.parent(c).expect("edge has a parent end");
    for (from, to) in [(p, c), (c, p)] {
        if capped_side(tree, from, to) == 2 {
            let independent = tree
                .neighbors(to)
                .into_iter()
                .filter(|&y| y != from)
                .all(|y| !unrooted_leaf_flags(tree, y).1);
            if independent {
                return 5;
            }
        }
    }
    6
}

fn ball(tree: &PhyloTree, centre: NodeId, radius: usize) -> Vec<NodeId> {
    let mut out = vec![centre];
    let mut frontier = vec![(centre, usize::MAX)];
    for _ in 0..radius {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &(v, came) in &frontier {
            for u in tree.neighbors(v) {
                if u != came {
                    next.push((u, v));
                    out.push(u);
                }
            }
        }
        frontier = next;
    }
    out
}

/// One recorded growth step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub edge: EdgeRef,
    /// Type of the chosen edge just before the attachment.
    pub edge_type: Option<u8>,
    pub taxon: Taxon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub kind: ProcessKind,
    pub seed_tree: PhyloTree,
    pub steps: Vec<TraceStep>,
    pub n: usize,
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    kind: ProcessKind,
    n: usize,
    seed_tree: PhyloTree,
}

impl GrowthTrace {
    /// Re-applies every step to the seed tree.
    pub fn replay(&self) -> Result<PhyloTree> {
        let mut t = self.seed_tree.clone();
        for s in &self.steps {
            t.attach_leaf(s.edge, s.taxon)?;
        }
        Ok(t)
    }

    /// Header line followed by one JSON object per step.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TraceHeader {
            kind: self.kind,
            n: self.n,
            seed_tree: self.seed_tree.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Config("empty trace".into()))??;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut steps = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line)?);
        }
        Ok(GrowthTrace {
            kind: header.kind,
            seed_tree: header.seed_tree,
            steps,
            n: header.n,
        })
    }
}

fn check_seed(kind: ProcessKind, seed: &PhyloTree, n: usize) -> Result<()> {
    if kind.rooted != seed.is_rooted() {
        return Err(Error::InvalidTree(format!(
            "{} process needs a {} seed tree",
            if kind.rooted { "rooted" } else { "unrooted" },
            if kind.rooted { "rooted" } else { "unrooted" },
        )));
    }
    let m = seed.leaf_count();
    if m > n {
        return Err(Error::InvalidRange(format!(
            "seed tree has {m} leaves, target is {n}"
        )));
    }
    Ok(())
}

/// Grows `seed` to `n` leaves on the stream `(rng_seed, replicate)`.
pub fn generate(
    kind: ProcessKind,
    seed: &PhyloTree,
    n: usize,
    rng_seed: u64,
    replicate: u64,
) -> Result<(PhyloTree, GrowthTrace)> {
    check_seed(kind, seed, n)?;
    let mut rng = rng::stream(rng_seed, replicate);
    let mut t = TrackedTree::new(seed.clone());
    let mut steps = Vec::with_capacity(n - seed.leaf_count());
    while t.leaf_count() < n {
        steps.push(t.step(kind.model, &mut rng)?);
    }
    let trace = GrowthTrace {
        kind,
        seed_tree: seed.clone(),
        steps,
        n,
    };
    Ok((t.into_tree(), trace))
}

/// Like [`generate`] but keeps the tracked classification and no trace.
pub fn grow_tracked(
    kind: ProcessKind,
    seed: &PhyloTree,
    n: usize,
    rng: &mut Rng,
) -> Result<TrackedTree> {
    check_seed(kind, seed, n)?;
    let mut t = TrackedTree::new(seed.clone());
    while t.leaf_count() < n {
        t.step(kind.model, rng)?;
    }
    Ok(t)
}

/// Single YHK step on a plain tree, using the next free label.
pub fn yhk_step(tree: &PhyloTree, rng: &mut Rng) -> Result<(PhyloTree, EdgeRef)> {
    let leaves = tree.leaves();
    let child = leaves[rng.random_range(0..leaves.len())];
    let edge = tree.edge(child)?;
    Ok((tree.with_leaf(edge, tree.max_label() + 1)?, edge))
}

/// Single PDA step on a plain tree, using the next free label.
pub fn pda_step(tree: &PhyloTree, rng: &mut Rng) -> Result<(PhyloTree, EdgeRef)> {
    let top = tree.root_or_anchor();
    let mut child = rng.random_range(0..tree.edge_count());
    if child >= top {
        child += 1;
    }
    let edge = tree.edge(child)?;
    Ok((tree.with_leaf(edge, tree.max_label() + 1)?, edge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn full(t: &PhyloTree) -> [u64; 6] {
        let v = t.classify_all_edges().unwrap().0;
        [v[0], v[1], v[2], v[3], v[4], v[5]]
    }

    #[test]
    fn delta_rows() {
        assert_eq!(edge_type_delta(2, DeltaScope::PendantOnly).unwrap(), vec![2, -2, 1, 0]);
        assert_eq!(edge_type_delta(5, DeltaScope::Full).unwrap(), vec![2, -2, 1, 0, -1, 2]);
        assert_eq!(
            edge_type_delta(5, DeltaScope::Full).unwrap(),
            edge_type_delta(2, DeltaScope::Full).unwrap()
        );
        assert_eq!(edge_type_delta(1, DeltaScope::Full).unwrap(), vec![0, 0, 0, 1, 0, 1]);
        assert!(edge_type_delta(5, DeltaScope::PendantOnly).is_err());
        assert!(edge_type_delta(0, DeltaScope::Full).is_err());
    }

    #[test]
    fn incremental_matches_recount_rooted() {
        for model in [Model::Yhk, Model::Pda] {
            for rep in 0..20 {
                let mut rng = rng::stream(11, rep);
                let mut t = TrackedTree::new(PhyloTree::two_leaf());
                while t.leaf_count() < 60 {
                    t.step(model, &mut rng).unwrap();
                    assert_eq!(t.counts().unwrap(), full(t.tree()));
                }
            }
        }
    }

    #[test]
    fn incremental_matches_recount_unrooted() {
        for model in [Model::Yhk, Model::Pda] {
            for rep in 0..20 {
                let mut rng = rng::stream(12, rep);
                let mut t = TrackedTree::new(PhyloTree::star3());
                while t.leaf_count() < 60 {
                    t.step(model, &mut rng).unwrap();
                    match t.counts() {
                        Some(c) => assert_eq!(c, full(t.tree())),
                        None => assert!(t.leaf_count() < 6),
                    }
                }
            }
        }
    }

    #[test]
    fn dynamics_follow_replacement_rows() {
        for (model, scope) in [(Model::Yhk, DeltaScope::PendantOnly), (Model::Pda, DeltaScope::Full)] {
            let d = model.dim();
            let mut rng = rng::stream(5, 0);
            let mut t = TrackedTree::new(PhyloTree::two_leaf());
            for _ in 0..200 {
                let before = full(t.tree());
                let step = t.step(model, &mut rng).unwrap();
                let after = full(t.tree());
                let delta = edge_type_delta(step.edge_type.unwrap() as usize, scope).unwrap();
                for i in 0..d {
                    assert_eq!(after[i] as i64 - before[i] as i64, delta[i]);
                }
            }
        }
    }

    #[test]
    fn generate_is_deterministic_and_replayable() {
        let seed = PhyloTree::two_leaf();
        let (a, ta) = generate(ProcessKind::PDA_ROOTED, &seed, 40, 9, 3).unwrap();
        let (b, tb) = generate(ProcessKind::PDA_ROOTED, &seed, 40, 9, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.replay().unwrap(), a);
        let (c, _) = generate(ProcessKind::PDA_ROOTED, &seed, 40, 9, 4).unwrap();
        assert_ne!(a.to_newick(), c.to_newick());

        let mut buf = Vec::new();
        ta.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1 + 38);
        let back = GrowthTrace::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, ta);
    }

    #[test]
    fn generate_edge_cases() {
        let seed = PhyloTree::two_leaf();
        let (t, trace) = generate(ProcessKind::YHK_ROOTED, &seed, 2, 0, 0).unwrap();
        assert_eq!(t, seed);
        assert!(trace.steps.is_empty());
        let big = PhyloTree::caterpillar(5);
        assert!(matches!(
            generate(ProcessKind::YHK_ROOTED, &big, 4, 0, 0),
            Err(Error::InvalidRange(_))
        ));
        assert!(generate(ProcessKind::YHK_UNROOTED, &seed, 4, 0, 0).is_err());
    }

    #[test]
    fn edge_totals() {
        let mut rng = rng::stream(1, 1);
        let y = grow_tracked(ProcessKind::YHK_ROOTED, &PhyloTree::two_leaf(), 300, &mut rng).unwrap();
        let a = y.edge_type_vector(Model::Yhk).unwrap();
        assert_eq!(a.total(), 300);
        let p = grow_tracked(ProcessKind::PDA_ROOTED, &PhyloTree::two_leaf(), 300, &mut rng).unwrap();
        assert_eq!(p.edge_type_vector(Model::Pda).unwrap().total(), 599);
    }

    #[test]
    fn step_choice_frequencies() {
        // From the 3-leaf tree YHK yields the 4-leaf caterpillar w.p. 2/3;
        // PDA from the 2-leaf tree picks each of the 3 edges w.p. 1/3.
        let t3 = PhyloTree::from_newick("((1,2),3);").unwrap();
        let cat = PhyloTree::caterpillar(4).shape_key();
        let reps = 30_000;
        let mut rng = rng::stream(2, 0);
        let mut hits = 0;
        for _ in 0..reps {
            let (t4, _) = yhk_step(&t3, &mut rng).unwrap();
            if t4.shape_key() == cat {
                hits += 1;
            }
        }
        let p = hits as f64 / reps as f64;
        assert!((p - 2.0 / 3.0).abs() < 4.0 * (2.0f64 / 9.0 / reps as f64).sqrt());

        let t2 = PhyloTree::two_leaf();
        let mut freq: HashMap<NodeId, u32> = HashMap::new();
        for _ in 0..reps {
            let (_, e) = pda_step(&t2, &mut rng).unwrap();
            *freq.entry(e.child).or_default() += 1;
        }
        assert_eq!(freq.len(), 3);
        for &c in freq.values() {
            let p = c as f64 / reps as f64;
            assert!((p - 1.0 / 3.0).abs() < 4.0 * (2.0f64 / 9.0 / reps as f64).sqrt());
        }
    }
}
