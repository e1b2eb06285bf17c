use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LinkPredError;
use crate::graph::{Edge, GraphSlice, WirelessKG};

/// Per-slice split of edges into training structure and held-out test pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedView {
    pub mask_ratio: f64,
    pub neg_ratio: usize,
    pub seed: u64,
    /// Edges visible to training, per slice.
    pub train_edges: Vec<Vec<(usize, usize, crate::graph::RelationType)>>,
    /// Held-out positive pairs `(i < j)`, per slice.
    pub held_out: Vec<Vec<(usize, usize)>>,
    /// Sampled negative pairs `(i < j)`, per slice.
    pub negatives: Vec<Vec<(usize, usize)>>,
}

impl MaskedView {
    /// Slice `m` rebuilt with only its training edges.
    pub fn training_slice(&self, kg: &WirelessKG, m: usize) -> GraphSlice {
        let slice = &kg.slices()[m];
        slice
            .with_edges(
                self.train_edges[m]
                    .iter()
                    .map(|&(a, b, r)| Edge::new(a, b, r).expect("canonical")),
            )
            .expect("subset of a valid slice")
    }

    /// Pairs excluded from the training loss in slice `m`.
    pub fn test_pairs(&self, m: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.held_out[m].iter().chain(&self.negatives[m]).copied()
    }

    pub fn n_slices(&self) -> usize {
        self.held_out.len()
    }
}

fn slice_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Holds out `⌊ratio·|E_m|⌋` uniformly chosen edges of every slice.
pub fn mask_edges(kg: &WirelessKG, ratio: f64, seed: u64) -> Result<MaskedView, LinkPredError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(LinkPredError::InvalidArgument(format!(
            "mask ratio must be in [0,1), got {ratio}"
        )));
    }
    let mut train_edges = Vec::new();
    let mut held_out = Vec::new();
    for (m, slice) in kg.slices().iter().enumerate() {
        let mut rng = slice_rng(seed, m as u64);
        let edges = slice.edges();
        let k = (ratio * edges.len() as f64).floor() as usize;
        let mut idx: Vec<usize> = (0..edges.len()).collect();
        idx.shuffle(&mut rng);
        let hidden: BTreeSet<(usize, usize)> = idx[..k].iter().map(|&i| edges[i].pair()).collect();
        train_edges.push(
            edges
                .iter()
                .filter(|e| !hidden.contains(&e.pair()))
                .map(|e| (e.src, e.dst, e.relation))
                .collect(),
        );
        held_out.push(hidden.into_iter().collect());
    }
    Ok(MaskedView {
        mask_ratio: ratio,
        neg_ratio: 0,
        seed,
        negatives: vec![Vec::new(); held_out.len()],
        train_edges,
        held_out,
    })
}

/// Adds `neg_ratio × |held-out|` uniform non-edge pairs per slice. A pair is a
/// non-edge only if no slice of the KG contains it.
pub fn sample_negatives(
    kg: &WirelessKG,
    view: &MaskedView,
    neg_ratio: usize,
    seed: u64,
) -> Result<MaskedView, LinkPredError> {
    let n = kg.n_nodes();
    let edges = kg.union_pairs();
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|p| !edges.contains(p))
        .collect();
    let mut out = view.clone();
    out.neg_ratio = neg_ratio;
    for (m, held) in view.held_out.iter().enumerate() {
        let needed = neg_ratio * held.len();
        if needed > candidates.len() {
            return Err(LinkPredError::InsufficientNonEdges {
                slice: m,
                needed,
                available: candidates.len(),
            });
        }
        // distinct stream family from mask_edges
        let mut rng = slice_rng(seed ^ 0x6e65_6761_7469_7665, m as u64);
        let mut pick: Vec<(usize, usize)> = candidates.choose_multiple(&mut rng, needed).copied().collect();
        pick.sort_unstable();
        out.negatives[m] = pick;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeMeta, RelationType};
    use crate::synth::{generate, SynthConfig};
    use crate::tensor::Tensor;

    fn kg() -> WirelessKG {
        generate(&SynthConfig::default()).unwrap().kg
    }

    #[test]
    fn zero_ratio_holds_nothing_out() {
        let v = mask_edges(&kg(), 0.0, 1).unwrap();
        assert!(v.held_out.iter().all(Vec::is_empty));
    }

    #[test]
    fn ten_percent_of_133_is_13() {
        let cfg = SynthConfig {
            edge_flip_prob: 0.0,
            ..SynthConfig::default()
        };
        let kg = generate(&cfg).unwrap().kg;
        let v = mask_edges(&kg, 0.10, 1).unwrap();
        for (m, held) in v.held_out.iter().enumerate() {
            assert_eq!(held.len(), 13);
            assert_eq!(v.train_edges[m].len(), 120);
        }
    }

    #[test]
    fn held_out_disjoint_from_training() {
        let kg = kg();
        let v = mask_edges(&kg, 0.10, 5).unwrap();
        for m in 0..kg.slices().len() {
            let train: BTreeSet<_> = v.train_edges[m].iter().map(|&(a, b, _)| (a, b)).collect();
            assert!(v.held_out[m].iter().all(|p| !train.contains(p)));
            assert!(v.held_out[m].iter().all(|&(a, b)| kg.slices()[m].has_edge(a, b)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let kg = kg();
        let a = sample_negatives(&kg, &mask_edges(&kg, 0.1, 9).unwrap(), 5, 9).unwrap();
        let b = sample_negatives(&kg, &mask_edges(&kg, 0.1, 9).unwrap(), 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negatives_are_true_non_edges_in_ratio() {
        let kg = kg();
        let v = sample_negatives(&kg, &mask_edges(&kg, 0.1, 2).unwrap(), 5, 2).unwrap();
        let edges = kg.union_pairs();
        for m in 0..v.n_slices() {
            assert_eq!(v.negatives[m].len(), 5 * v.held_out[m].len());
            let uniq: BTreeSet<_> = v.negatives[m].iter().collect();
            assert_eq!(uniq.len(), v.negatives[m].len());
            assert!(v.negatives[m].iter().all(|p| !edges.contains(p) && p.0 < p.1));
        }
    }

    #[test]
    fn thirteen_positives_give_sixty_five_negatives() {
        let cfg = SynthConfig {
            edge_flip_prob: 0.0,
            ..SynthConfig::default()
        };
        let kg = generate(&cfg).unwrap().kg;
        let v = sample_negatives(&kg, &mask_edges(&kg, 0.1, 3).unwrap(), 5, 3).unwrap();
        assert!(v.negatives.iter().all(|n| n.len() == 65));
    }

    #[test]
    fn zero_neg_ratio_is_empty() {
        let kg = kg();
        let v = sample_negatives(&kg, &mask_edges(&kg, 0.1, 3).unwrap(), 0, 3).unwrap();
        assert!(v.negatives.iter().all(Vec::is_empty));
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let n = 4;
        let nodes: Vec<NodeMeta> = crate::graph::test_support::nodes(n);
        let edges: Vec<_> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j, RelationType::Causal)))
            .collect();
        let slice = GraphSlice::new(0, edges, Tensor::zeros(&[n, 3]), 0).unwrap();
        let kg = WirelessKG::new(nodes, vec![slice], 3).unwrap();
        let v = mask_edges(&kg, 0.5, 0).unwrap();
        assert!(matches!(
            sample_negatives(&kg, &v, 1, 0),
            Err(LinkPredError::InsufficientNonEdges { .. })
        ));
    }
}
