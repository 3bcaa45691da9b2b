//! Rooted and unrooted binary phylogenetic trees.
//!
//! Nodes live in a flat arena and are addressed by [`NodeId`]. Every edge is
//! identified by its child-end node, which stays valid when leaves are
//! attached elsewhere in the tree.
//!
//! A rooted tree has a distinguished root node of degree one (it is not a
//! leaf and carries no label); its single child is the top interior vertex.
//! An unrooted tree is stored hanging from an interior *anchor* vertex with
//! three children and no parent, so every other node owns exactly one edge.

use std::collections::HashMap;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Taxon = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: ArrayVec<NodeId, 3>,
    pub label: Option<Taxon>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootKind {
    Rooted { root: NodeId },
    Unrooted { anchor: NodeId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Pendant,
    Internal,
}

/// An edge, named by its child-end node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub child: NodeId,
    pub kind: EdgeKind,
}

/// Counts of edges by type; index `i` holds `|E_{i+1}(T)|`.
///
/// Length 4 for the pendant-only vector, length 6 when internal edges are
/// included.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeTypeVector(pub Vec<u64>);

impl EdgeTypeVector {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Pitchfork count, half the type-1 edges.
    pub fn pitchforks(&self) -> u64 {
        self.0[0] / 2
    }

    /// Cherry count, half the type-1 plus type-2 edges.
    pub fn cherries(&self) -> u64 {
        (self.0[0] + self.0[1]) / 2
    }

    pub fn pendant(&self) -> EdgeTypeVector {
        EdgeTypeVector(self.0[..4].to_vec())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct PhyloTree {
    nodes: Vec<Node>,
    kind: RootKind,
    leaves: Vec<NodeId>,
    taxa: HashMap<Taxon, NodeId>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    kind: RootKind,
    nodes: Vec<Node>,
}

impl From<PhyloTree> for RawTree {
    fn from(t: PhyloTree) -> Self {
        RawTree {
            kind: t.kind,
            nodes: t.nodes,
        }
    }
}

impl TryFrom<RawTree> for PhyloTree {
    type Error = Error;
    fn try_from(raw: RawTree) -> Result<Self> {
        PhyloTree::from_parts(raw.nodes, raw.kind)
    }
}

impl PartialEq for PhyloTree {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.nodes == other.nodes
    }
}

impl Eq for PhyloTree {}

impl PhyloTree {
    /// The unique rooted tree on taxa {1, 2}.
    pub fn two_leaf() -> Self {
        let nodes = vec![
            Node {
                parent: None,
                children: [1].into_iter().collect(),
                label: None,
            },
            Node {
                parent: Some(0),
                children: [2, 3].into_iter().collect(),
                label: None,
            },
            leaf_node(2, 1),
            leaf_node(2, 2),
        ];
        let mut nodes = nodes;
        nodes[2].parent = Some(1);
        nodes[3].parent = Some(1);
        Self::from_parts(nodes, RootKind::Rooted { root: 0 }).expect("two-leaf tree is valid")
    }

    /// The unrooted star on taxa {1, 2, 3}.
    pub fn star3() -> Self {
        let nodes = vec![
            Node {
                parent: None,
                children: [1, 2, 3].into_iter().collect(),
                label: None,
            },
            leaf_node(0, 1),
            leaf_node(0, 2),
            leaf_node(0, 3),
        ];
        Self::from_parts(nodes, RootKind::Unrooted { anchor: 0 }).expect("star is valid")
    }

    /// Named seed trees used by the CLI and the campaigns.
    ///
    /// `t2` is the two-leaf tree, `t1` a 7-leaf tree in which attaching a
    /// leaf to taxon 1 gives one pitchfork and three cherries,
    /// `caterpillar<k>` and `balanced6` are rooted, and `star3` is unrooted.
    pub fn builtin(name: &str) -> Option<Self> {
        let nwk = match name {
            "t2" => return Some(Self::two_leaf()),
            "star3" => return Some(Self::star3()),
            "t1" => "(((((2,3),4),1),(5,6)),7);",
            "balanced4" => "((1,2),(3,4));",
            "balanced6" => "(((1,2),3),((4,5),6));",
            other => {
                let k: usize = other.strip_prefix("caterpillar")?.parse().ok()?;
                return Some(Self::caterpillar(k));
            }
        };
        Some(Self::from_newick(nwk).expect("builtin newick is valid"))
    }

    /// Rooted caterpillar `((((1,2),3),4)...,k)`.
    pub fn caterpillar(k: usize) -> Self {
        assert!(k >= 2, "caterpillar needs at least two leaves");
        let mut t = Self::two_leaf();
        for label in 3..=k as Taxon {
            let top = t.nodes[t.root_or_anchor()].children[0];
            let e = t.edge(top).expect("top edge exists");
            t.attach_leaf(e, label).expect("fresh label");
        }
        t
    }

    /// Builds a tree from an explicit arena, validating structure.
    pub fn from_parts(nodes: Vec<Node>, kind: RootKind) -> Result<Self> {
        let (top, rooted) = match kind {
            RootKind::Rooted { root } => (root, true),
            RootKind::Unrooted { anchor } => (anchor, false),
        };
        if top >= nodes.len() {
            return Err(Error::InvalidTree(format!("top node {top} out of range")));
        }
        let mut taxa = HashMap::new();
        let mut leaves = Vec::new();
        for (id, node) in nodes.iter().enumerate() {
            if id == top {
                if node.parent.is_some() || node.label.is_some() {
                    return Err(Error::InvalidTree("root/anchor must be parentless and unlabelled".into()));
                }
                let want = if rooted { 1 } else { 3 };
                if node.children.len() != want {
                    return Err(Error::InvalidTree(format!(
                        "{} must have {want} children, has {}",
                        if rooted { "root" } else { "anchor" },
                        node.children.len()
                    )));
                }
            } else {
                let p = node
                    .parent
                    .ok_or_else(|| Error::InvalidTree(format!("node {id} has no parent")))?;
                if p >= nodes.len() || !nodes[p].children.contains(&id) {
                    return Err(Error::InvalidTree(format!("broken parent link at node {id}")));
                }
                match node.label {
                    Some(l) => {
                        if !node.children.is_empty() {
                            return Err(Error::InvalidTree(format!("leaf {l} has children")));
                        }
                        if l == 0 {
                            return Err(Error::InvalidTree("taxon ids must be positive".into()));
                        }
                        if taxa.insert(l, id).is_some() {
                            return Err(Error::DuplicateTaxon(l));
                        }
                        leaves.push(id);
                    }
                    None => {
                        if node.children.len() != 2 {
                            return Err(Error::InvalidTree(format!(
                                "interior node {id} has {} children",
                                node.children.len()
                            )));
                        }
                    }
                }
            }
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(Error::InvalidTree(format!("broken child link {id} -> {c}")));
                }
            }
        }
        let tree = Self {
            nodes,
            kind,
            leaves,
            taxa,
        };
        // Connectivity: everything must be reachable from the top node.
        if tree.preorder().len() != tree.nodes.len() {
            return Err(Error::InvalidTree("tree is disconnected or cyclic".into()));
        }
        let n = tree.leaf_count();
        let min = if rooted { 2 } else { 3 };
        if n < min {
            return Err(Error::TooSmall(format!("{n} leaves (need at least {min})")));
        }
        Ok(tree)
    }

    pub fn kind(&self) -> RootKind {
        self.kind
    }

    pub fn is_rooted(&self) -> bool {
        matches!(self.kind, RootKind::Rooted { .. })
    }

    /// Root node for rooted trees, anchor for unrooted ones.
    pub fn root_or_anchor(&self) -> NodeId {
        match self.kind {
            RootKind::Rooted { root } => root,
            RootKind::Unrooted { anchor } => anchor,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Leaf node ids in arena order of insertion.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].is_leaf()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn label(&self, id: NodeId) -> Option<Taxon> {
        self.nodes[id].label
    }

    pub fn max_label(&self) -> Taxon {
        self.taxa.keys().copied().max().unwrap_or(0)
    }

    pub fn node_of_taxon(&self, taxon: Taxon) -> Option<NodeId> {
        self.taxa.get(&taxon).copied()
    }

    /// Undirected neighbours (parent first, then children).
    pub fn neighbors(&self, id: NodeId) -> ArrayVec<NodeId, 4> {
        let node = &self.nodes[id];
        let mut out = ArrayVec::new();
        if let Some(p) = node.parent {
            out.push(p);
        }
        out.extend(node.children.iter().copied());
        out
    }

    pub fn edge(&self, child: NodeId) -> Result<EdgeRef> {
        if child >= self.nodes.len() || child == self.root_or_anchor() {
            return Err(Error::InvalidEdge(child));
        }
        let kind = if self.nodes[child].is_leaf() {
            EdgeKind::Pendant
        } else {
            EdgeKind::Internal
        };
        Ok(EdgeRef { child, kind })
    }

    pub fn pendant_edge_of(&self, taxon: Taxon) -> Result<EdgeRef> {
        let id = self.node_of_taxon(taxon).ok_or(Error::UnknownTaxon(taxon))?;
        self.edge(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        let top = self.root_or_anchor();
        (0..self.nodes.len())
            .filter(move |&c| c != top)
            .map(move |c| self.edge(c).expect("non-top node owns an edge"))
    }

    pub fn pendant_edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        self.leaves.iter().map(|&c| EdgeRef {
            child: c,
            kind: EdgeKind::Pendant,
        })
    }

    /// Attaches a new leaf to `edge`, producing `T[e; taxon]` in place.
    ///
    /// Returns `(w, x)`: the new interior vertex subdividing the edge and the
    /// new leaf. Both are appended to the arena, so existing ids are stable.
    pub fn attach_leaf(&mut self, edge: EdgeRef, taxon: Taxon) -> Result<(NodeId, NodeId)> {
        let checked = self.edge(edge.child)?;
        if checked.kind != edge.kind {
            return Err(Error::InvalidEdge(edge.child));
        }
        if taxon == 0 {
            return Err(Error::InvalidTree("taxon ids must be positive".into()));
        }
        if self.taxa.contains_key(&taxon) {
            return Err(Error::DuplicateTaxon(taxon));
        }
        let v = edge.child;
        let u = self.nodes[v].parent.expect("non-top node has a parent");
        let w = self.nodes.len();
        let x = w + 1;
        let slot = self.nodes[u]
            .children
            .iter()
            .position(|&c| c == v)
            .expect("child link present");
        self.nodes[u].children[slot] = w;
        self.nodes[v].parent = Some(w);
        self.nodes.push(Node {
            parent: Some(u),
            children: [v, x].into_iter().collect(),
            label: None,
        });
        self.nodes.push(leaf_node(w, taxon));
        self.leaves.push(x);
        self.taxa.insert(taxon, x);
        Ok((w, x))
    }

    /// Non-mutating form of [`attach_leaf`](Self::attach_leaf).
    pub fn with_leaf(&self, edge: EdgeRef, taxon: Taxon) -> Result<Self> {
        let mut t = self.clone();
        t.attach_leaf(edge, taxon)?;
        Ok(t)
    }

    /// Removes leaf `taxon` and suppresses its parent. Inverse of
    /// `attach_leaf` up to arena layout.
    pub fn detach_leaf(&mut self, taxon: Taxon) -> Result<()> {
        let x = self.node_of_taxon(taxon).ok_or(Error::UnknownTaxon(taxon))?;
        let min = if self.is_rooted() { 3 } else { 4 };
        if self.leaf_count() < min {
            return Err(Error::TooSmall(format!(
                "cannot detach from a tree with {} leaves",
                self.leaf_count()
            )));
        }
        let w = self.nodes[x].parent.expect("leaf has a parent");
        let top = self.root_or_anchor();
        if w == top {
            // Unrooted: x hangs off the anchor. Promote an interior child to
            // anchor after removing x.
            self.nodes[w].children.retain(|c| *c != x);
            let (a, b) = (self.nodes[w].children[0], self.nodes[w].children[1]);
            let (new_anchor, other) = if self.nodes[a].is_leaf() { (b, a) } else { (a, b) };
            self.nodes[new_anchor].parent = None;
            self.nodes[new_anchor].children.push(other);
            self.nodes[other].parent = Some(new_anchor);
            self.kind = RootKind::Unrooted { anchor: new_anchor };
        } else {
            let sibling = *self.nodes[w]
                .children
                .iter()
                .find(|&&c| c != x)
                .expect("binary interior vertex");
            let u = self.nodes[w].parent.expect("interior vertex has a parent");
            let slot = self.nodes[u]
                .children
                .iter()
                .position(|&c| c == w)
                .expect("child link");
            self.nodes[u].children[slot] = sibling;
            self.nodes[sibling].parent = Some(u);
        }
        let mut dead = [x, w];
        dead.sort_unstable();
        self.remove_nodes(&dead);
        Ok(())
    }

    /// Removes detached nodes (ascending ids) and renumbers the arena.
    fn remove_nodes(&mut self, dead: &[NodeId]) {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (id, slot) in remap.iter_mut().enumerate() {
            if !dead.contains(&id) {
                *slot = next;
                next += 1;
            }
        }
        let old = std::mem::take(&mut self.nodes);
        for (id, mut node) in old.into_iter().enumerate() {
            if dead.contains(&id) {
                continue;
            }
            node.parent = node.parent.map(|p| remap[p]);
            for c in node.children.iter_mut() {
                *c = remap[*c];
            }
            self.nodes.push(node);
        }
        self.kind = match self.kind {
            RootKind::Rooted { root } => RootKind::Rooted { root: remap[root] },
            RootKind::Unrooted { anchor } => RootKind::Unrooted {
                anchor: remap[anchor],
            },
        };
        self.reindex();
    }

    fn reindex(&mut self) {
        self.leaves.clear();
        self.taxa.clear();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(l) = node.label {
                self.leaves.push(id);
                self.taxa.insert(l, id);
            }
        }
    }

    /// Deletes the root and suppresses its child, giving an unrooted tree.
    pub fn unroot(&self) -> Result<PhyloTree> {
        let RootKind::Rooted { root } = self.kind else {
            return Err(Error::InvalidTree("tree is already unrooted".into()));
        };
        if self.leaf_count() < 3 {
            return Err(Error::TooSmall(format!(
                "unrooting needs at least 3 leaves, tree has {}",
                self.leaf_count()
            )));
        }
        let mut nodes = self.nodes.clone();
        let r = nodes[root].children[0];
        let (a, b) = (nodes[r].children[0], nodes[r].children[1]);
        let (anchor, other) = if nodes[a].is_leaf() { (b, a) } else { (a, b) };
        nodes[anchor].parent = None;
        nodes[anchor].children.push(other);
        nodes[other].parent = Some(anchor);
        let mut t = PhyloTree {
            nodes,
            kind: RootKind::Unrooted { anchor },
            leaves: Vec::new(),
            taxa: HashMap::new(),
        };
        let mut dead = [root, r];
        dead.sort_unstable();
        t.remove_nodes(&dead);
        Ok(t)
    }

    /// Preorder from the root (or anchor), iteratively.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root_or_anchor()];
        while let Some(id) = stack.pop() {
            if order.len() > self.nodes.len() {
                break;
            }
            order.push(id);
            stack.extend(self.nodes[id].children.iter().rev().copied());
        }
        order
    }

    /// Leaves below each node with respect to the arena orientation.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![0usize; self.nodes.len()];
        for &id in self.preorder().iter().rev() {
            let node = &self.nodes[id];
            size[id] = if node.is_leaf() {
                1
            } else {
                node.children.iter().map(|&c| size[c]).sum()
            };
        }
        size
    }

    /// Leaf-count sizes of the subtrees induced by single-edge removals.
    ///
    /// Rooted trees: the side away from the root. Unrooted trees: the
    /// smaller side, or both sides on a tie.
    fn subtree_side_sizes(&self) -> Vec<usize> {
        let sizes = self.subtree_sizes();
        let n = self.leaf_count();
        let top = self.root_or_anchor();
        let mut out = Vec::with_capacity(self.nodes.len());
        for c in (0..self.nodes.len()).filter(|&c| c != top) {
            let down = sizes[c];
            if self.is_rooted() {
                out.push(down);
            } else {
                let up = n - down;
                match down.cmp(&up) {
                    std::cmp::Ordering::Less => out.push(down),
                    std::cmp::Ordering::Greater => out.push(up),
                    std::cmp::Ordering::Equal => {
                        out.push(down);
                        out.push(up);
                    }
                }
            }
        }
        out
    }

    /// Number of two-leaf subtrees.
    pub fn count_cherries(&self) -> usize {
        self.subtree_side_sizes().iter().filter(|&&s| s == 2).count()
    }

    /// Number of three-leaf subtrees.
    pub fn count_pitchforks(&self) -> usize {
        self.subtree_side_sizes().iter().filter(|&&s| s == 3).count()
    }

    fn check_classifiable(&self) -> Result<()> {
        let n = self.leaf_count();
        if !self.is_rooted() && n < 6 {
            return Err(Error::ClassificationUndefined(n));
        }
        Ok(())
    }

    /// Edge type (1..=6) of every edge by full recount, indexed by child
    /// node id; the root/anchor slot holds 0.
    pub fn edge_types(&self) -> Result<Vec<u8>> {
        self.check_classifiable()?;
        let n = self.leaf_count();
        let top = self.root_or_anchor();
        let order = self.preorder();
        let sizes = self.subtree_sizes();
        // Preorder intervals to test "leaf is below c".
        let mut tin = vec![0usize; self.nodes.len()];
        for (i, &id) in order.iter().enumerate() {
            tin[id] = i;
        }
        let below = |c: NodeId, x: NodeId| tin[x] >= tin[c] && tin[x] < tin[c] + 2 * sizes[c] - 1;

        // Every subtree side with two or three leaves, as leaf sets.
        let mut in_cherry = vec![false; self.nodes.len()];
        let mut in_pitchfork = vec![false; self.nodes.len()];
        let mut cherry_sides: Vec<(NodeId, [NodeId; 2])> = Vec::new();
        for c in (0..self.nodes.len()).filter(|&c| c != top) {
            let down = sizes[c];
            let mut sides: ArrayVec<Vec<NodeId>, 2> = ArrayVec::new();
            if (2..=3).contains(&down) {
                sides.push(self.leaves_below(c));
            }
            if !self.is_rooted() && (2..=3).contains(&(n - down)) {
                sides.push(self.leaves.iter().copied().filter(|&x| !below(c, x)).collect());
            }
            for side in sides {
                if side.len() == 2 {
                    for &x in &side {
                        in_cherry[x] = true;
                    }
                    cherry_sides.push((c, [side[0], side[1]]));
                } else {
                    for &x in &side {
                        in_pitchfork[x] = true;
                    }
                }
            }
        }
        let mut types = vec![6u8; self.nodes.len()];
        types[top] = 0;
        for &x in &self.leaves {
            types[x] = match (in_cherry[x], in_pitchfork[x]) {
                (true, true) => 1,
                (true, false) => 2,
                (false, true) => 3,
                (false, false) => 4,
            };
        }
        for (c, [a, b]) in cherry_sides {
            if !in_pitchfork[a] && !in_pitchfork[b] {
                types[c] = 5;
            }
        }
        Ok(types)
    }

    /// Pendant type vector `(|E1|, |E2|, |E3|, |E4|)`.
    pub fn classify_pendant_edges(&self) -> Result<EdgeTypeVector> {
        Ok(self.classify_all_edges()?.pendant())
    }

    /// Full type vector `(|E1|, ..., |E6|)`.
    pub fn classify_all_edges(&self) -> Result<EdgeTypeVector> {
        let types = self.edge_types()?;
        let mut counts = vec![0u64; 6];
        for t in types.into_iter().filter(|&t| t > 0) {
            counts[t as usize - 1] += 1;
        }
        Ok(EdgeTypeVector(counts))
    }

    /// Label-free canonical form: equal for trees of the same shape.
    pub fn shape_key(&self) -> String {
        if self.is_rooted() {
            return self.shape_from(self.root_or_anchor(), None);
        }
        (0..self.nodes.len())
            .filter(|&id| !self.nodes[id].is_leaf())
            .map(|id| self.shape_from(id, None))
            .min()
            .expect("unrooted tree has interior vertices")
    }

    /// Shape of the component at `id` when the edge to `from` is cut,
    /// treating the tree as undirected.
    fn shape_from(&self, id: NodeId, from: Option<NodeId>) -> String {
        // Iterative post-order over the undirected tree.
        enum Frame {
            Enter(NodeId, Option<NodeId>),
            Exit(usize),
        }
        let mut stack = vec![Frame::Enter(id, from)];
        let mut results: Vec<String> = Vec::new();
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Enter(v, came) => {
                    if self.nodes[v].is_leaf() && came.is_some() {
                        results.push("*".to_string());
                        continue;
                    }
                    let nbrs: Vec<NodeId> = self
                        .neighbors(v)
                        .into_iter()
                        .filter(|&w| Some(w) != came && !self.is_root_node(w))
                        .collect();
                    stack.push(Frame::Exit(nbrs.len()));
                    for w in nbrs {
                        stack.push(Frame::Enter(w, Some(v)));
                    }
                }
                Frame::Exit(k) => {
                    let mut parts = results.split_off(results.len() - k);
                    parts.sort();
                    results.push(format!("({})", parts.concat()));
                }
            }
        }
        results.pop().unwrap_or_default()
    }

    fn leaves_below(&self, c: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![c];
        while let Some(v) = stack.pop() {
            if self.nodes[v].is_leaf() {
                out.push(v);
            } else {
                stack.extend(self.nodes[v].children.iter().copied());
            }
        }
        out
    }

    fn is_root_node(&self, id: NodeId) -> bool {
        matches!(self.kind, RootKind::Rooted { root } if root == id)
    }
}

fn leaf_node(parent: NodeId, label: Taxon) -> Node {
    Node {
        parent: Some(parent),
        children: ArrayVec::new(),
        label: Some(label),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nwk(s: &str) -> PhyloTree {
        PhyloTree::from_newick(s).unwrap()
    }

    fn ab(t: &PhyloTree) -> (usize, usize) {
        (t.count_pitchforks(), t.count_cherries())
    }

    #[test]
    fn edge_counts() {
        let t = PhyloTree::caterpillar(7);
        assert_eq!(t.leaf_count(), 7);
        assert_eq!(t.edge_count(), 13);
        let u = t.unroot().unwrap();
        assert_eq!(u.edge_count(), 11);
    }

    #[test]
    fn two_leaf_stats() {
        let t = PhyloTree::two_leaf();
        assert_eq!(ab(&t), (0, 1));
        assert_eq!(t.classify_pendant_edges().unwrap().0, vec![0, 2, 0, 0]);
        assert_eq!(t.classify_all_edges().unwrap().0, vec![0, 2, 0, 0, 1, 0]);
    }

    #[test]
    fn attach_to_two_leaf_gives_the_three_leaf_shape() {
        let t = PhyloTree::two_leaf();
        let shapes: Vec<_> = t
            .pendant_edges()
            .map(|e| t.with_leaf(e, 3).unwrap())
            .collect();
        assert_eq!(shapes[0].shape_key(), shapes[1].shape_key());
        // The whole 3-leaf tree hangs below the root edge: it is a pitchfork.
        assert_eq!(ab(&shapes[0]), (1, 1));
        assert_eq!(shapes[0].classify_pendant_edges().unwrap().0, vec![2, 0, 1, 0]);
    }

    #[test]
    fn attach_at_lone_leaf_of_three_gives_balanced() {
        let t = nwk("((1,2),3);");
        let t4 = t.with_leaf(t.pendant_edge_of(3).unwrap(), 4).unwrap();
        assert_eq!(ab(&t4), (0, 2));
        assert_eq!(t4.shape_key(), nwk("((1,2),(3,4));").shape_key());
    }

    #[test]
    fn four_leaf_shapes() {
        assert_eq!(ab(&nwk("(((1,2),3),4);")), (1, 1));
        assert_eq!(ab(&nwk("((1,2),(3,4));")), (0, 2));
    }

    #[test]
    fn figure_one_attachment() {
        let t1 = PhyloTree::builtin("t1").unwrap();
        let t2 = t1.with_leaf(t1.pendant_edge_of(1).unwrap(), 8).unwrap();
        assert_eq!(t2.leaf_count(), 8);
        assert_eq!(t2.edge_count(), t1.edge_count() + 2);
        assert_eq!(ab(&t2), (1, 3));
    }

    #[test]
    fn attach_errors() {
        let mut t = PhyloTree::two_leaf();
        let e = t.pendant_edge_of(1).unwrap();
        assert!(matches!(t.attach_leaf(e, 2), Err(Error::DuplicateTaxon(2))));
        let bogus = EdgeRef {
            child: 99,
            kind: EdgeKind::Pendant,
        };
        assert!(matches!(t.attach_leaf(bogus, 5), Err(Error::InvalidEdge(99))));
        let root = EdgeRef {
            child: t.root_or_anchor(),
            kind: EdgeKind::Internal,
        };
        assert!(matches!(t.attach_leaf(root, 5), Err(Error::InvalidEdge(_))));
    }

    #[test]
    fn attach_then_detach_is_identity() {
        let t = PhyloTree::builtin("t1").unwrap();
        for e in t.edges().collect::<Vec<_>>() {
            let mut g = t.with_leaf(e, 100).unwrap();
            g.detach_leaf(100).unwrap();
            assert_eq!(g, t);
        }
    }

    #[test]
    fn detach_inside_tree_keeps_canonical_form() {
        let mut t = nwk("(((1,2),3),((4,5),6));");
        t.detach_leaf(3).unwrap();
        assert_eq!(t.to_newick(), "((1,2),((4,5),6));");
    }

    #[test]
    fn unroot_small_trees() {
        let t3 = nwk("((1,2),3);").unroot().unwrap();
        assert!(!t3.is_rooted());
        assert_eq!(t3.edge_count(), 3);
        assert_eq!(t3.shape_key(), PhyloTree::star3().shape_key());

        let cat = nwk("(((1,2),3),4);").unroot().unwrap();
        let bal = nwk("((1,2),(3,4));").unroot().unwrap();
        assert_eq!(cat.shape_key(), bal.shape_key());
        assert_eq!(cat.edge_count(), 5);

        assert!(matches!(
            PhyloTree::two_leaf().unroot(),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn unrooted_six_leaf_shapes() {
        let two_forks = nwk("(((1,2),3),((4,5),6));").unroot().unwrap();
        assert_eq!(two_forks.classify_pendant_edges().unwrap().0, vec![4, 0, 2, 0]);
        assert_eq!(two_forks.classify_all_edges().unwrap().0, vec![4, 0, 2, 0, 0, 3]);
        assert_eq!(ab(&two_forks), (2, 2));

        let three_cherries = nwk("(((1,2),(3,4)),(5,6));").unroot().unwrap();
        assert_eq!(three_cherries.classify_all_edges().unwrap().0, vec![0, 6, 0, 0, 3, 0]);
        assert_eq!(ab(&three_cherries), (0, 3));
    }

    #[test]
    fn unrooted_small_trees_refuse_classification() {
        let t5 = PhyloTree::caterpillar(5).unroot().unwrap();
        assert!(matches!(
            t5.classify_pendant_edges(),
            Err(Error::ClassificationUndefined(5))
        ));
        // Smaller-side convention still counts subtrees.
        assert_eq!(ab(&t5), (0, 2));
        let t4 = PhyloTree::caterpillar(4).unroot().unwrap();
        assert_eq!(ab(&t4), (0, 2));
    }

    #[test]
    fn figure_two_terminal_shape() {
        // Three independent cherries on six leaves.
        let t = nwk("(((1,2),(3,4)),(5,6));");
        assert_eq!(t.classify_pendant_edges().unwrap().0, vec![0, 6, 0, 0]);
        assert_eq!(t.classify_all_edges().unwrap().0, vec![0, 6, 0, 0, 3, 2]);
    }

    #[test]
    fn serde_round_trip_validates() {
        let t = PhyloTree::builtin("t1").unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: PhyloTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let broken = json.replacen("\"parent\":null", "\"parent\":3", 1);
        assert!(serde_json::from_str::<PhyloTree>(&broken).is_err());
    }

    #[test]
    fn shape_key_ignores_labels() {
        assert_eq!(
            nwk("((3,1),(2,4));").shape_key(),
            nwk("((1,2),(3,4));").shape_key()
        );
        assert_ne!(
            nwk("(((1,2),3),4);").shape_key(),
            nwk("((1,2),(3,4));").shape_key()
        );
    }
}
