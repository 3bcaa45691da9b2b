//! Benchmarks live in `benches/`; run them with `cargo bench -p urnphylo-bench`.

use urnphylo::{Model, PhyloTree, ProcessKind};

/// Rooted process and its two-leaf seed.
pub fn rooted(model: Model) -> (ProcessKind, PhyloTree) {
    (ProcessKind { model, rooted: true }, PhyloTree::two_leaf())
}
