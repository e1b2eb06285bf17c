use std::collections::BTreeSet;

use super::{GraphSlice, RelationType};

/// The slice restricted to edges of a single relation; nodes and data kept.
pub fn metapath_subgraph(slice: &GraphSlice, relation: RelationType) -> GraphSlice {
    slice
        .with_edges(slice.edges().iter().copied().filter(|e| e.relation == relation))
        .expect("subset of a valid edge set is valid")
}

/// Nodes reachable from `node` over one `relation` edge, plus `node` itself.
pub fn metapath_neighbors(slice: &GraphSlice, node: usize, relation: RelationType) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([node]);
    for e in slice.edges().iter().filter(|e| e.relation == relation) {
        if e.src == node {
            out.insert(e.dst);
        } else if e.dst == node {
            out.insert(e.src);
        }
    }
    out
}

/// Row-major `N × N` neighbour mask (diagonal always set). `None` uses every
/// relation, i.e. the union graph.
pub fn neighbor_mask(slice: &GraphSlice, relation: Option<RelationType>) -> Vec<bool> {
    let n = slice.n_nodes();
    let mut mask = vec![false; n * n];
    for i in 0..n {
        mask[i * n + i] = true;
    }
    for e in slice.edges() {
        if relation.is_none_or(|r| r == e.relation) {
            mask[e.src * n + e.dst] = true;
            mask[e.dst * n + e.src] = true;
        }
    }
    mask
}
