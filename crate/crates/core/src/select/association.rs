use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::SelectError;
use crate::graph::WirelessKG;
use crate::tensor::Tensor;

/// `ω_ij = max(c_ij, 0)` where `a_ij ≠ 0`, else 0.
pub fn association_matrix(c: &Tensor, a: &Tensor) -> Result<Tensor, SelectError> {
    if c.ndim() != 2 || c.shape()[0] != c.shape()[1] || c.shape() != a.shape() {
        return Err(SelectError::InvalidArgument(format!(
            "similarity {:?} and adjacency {:?} must be equal square shapes",
            c.shape(),
            a.shape()
        )));
    }
    let data = c
        .data()
        .iter()
        .zip(a.data())
        .map(|(&cv, &av)| if av == 0.0 { 0.0 } else { cv.max(0.0) })
        .collect();
    Ok(Tensor::new(c.shape().to_vec(), data)?)
}

/// Which per-slice similarity matrices feed Ω.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    /// Mean over every slice.
    Mean,
    /// The last slice only.
    Final,
    /// The last slice averaged with the all-slice mean.
    #[default]
    FinalWithMean,
}

/// Combines per-slice similarity matrices according to `source`.
pub fn combine_similarity(cs: &[Tensor], source: SimilaritySource) -> Result<Tensor, SelectError> {
    let last = cs
        .last()
        .ok_or_else(|| SelectError::InvalidArgument("no similarity matrices".into()))?;
    match source {
        SimilaritySource::Mean => mean_similarity(cs),
        SimilaritySource::Final => Ok(last.clone()),
        SimilaritySource::FinalWithMean => mean_similarity(&[last.clone(), mean_similarity(cs)?]),
    }
}

/// Symmetric 0/1 matrix of the pairs linked in any slice.
pub fn union_adjacency(kg: &WirelessKG) -> Tensor {
    let n = kg.n_nodes();
    let mut a = Tensor::zeros(&[n, n]);
    for (i, j) in kg.union_pairs() {
        a.set(&[i, j], 1.0);
        a.set(&[j, i], 1.0);
    }
    a
}

/// Element-wise mean of equally shaped similarity matrices.
pub fn mean_similarity(cs: &[Tensor]) -> Result<Tensor, SelectError> {
    let first = cs
        .first()
        .ok_or_else(|| SelectError::InvalidArgument("no similarity matrices".into()))?;
    let mut acc = Tensor::zeros(first.shape());
    for c in cs {
        if c.shape() != first.shape() {
            return Err(SelectError::InvalidArgument(
                "similarity matrices differ in shape".into(),
            ));
        }
        acc.add_assign(c);
    }
    Ok(acc.map(|v| v / cs.len() as f64))
}

#[derive(PartialEq)]
struct Reach(f64, usize);

impl Eq for Reach {}

impl PartialOrd for Reach {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Reach {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Maximum path product from `source` to every node. With weights in [0, 1]
/// this is Dijkstra under `−ln ω`, run directly on the products.
pub fn impacts_from(omega: &Tensor, source: usize) -> Vec<f64> {
    let n = omega.shape()[0];
    let mut best = vec![0.0; n];
    let mut done = vec![false; n];
    best[source] = 1.0;
    let mut heap = BinaryHeap::from([Reach(1.0, source)]);
    while let Some(Reach(p, v)) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for (w, &weight) in omega.row(v).iter().enumerate() {
            if done[w] || weight <= 0.0 {
                continue;
            }
            let cand = p * weight.min(1.0);
            if cand > best[w] {
                best[w] = cand;
                heap.push(Reach(cand, w));
            }
        }
    }
    best
}

/// Influence of `source` on `kpi`: the largest product of association
/// weights over any path between them, 0 when disconnected.
pub fn impact(omega: &Tensor, source: usize, kpi: usize) -> f64 {
    impacts_from(omega, kpi)[source]
}

/// Candidates ordered by descending impact on the KPI, ties by ascending id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub kpi: usize,
    pub rows: Vec<(usize, f64)>,
}

impl ImportanceTable {
    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.0)
    }
}

/// Ranks every node except the KPI. Ω is symmetric, so one search from the
/// KPI yields every impact.
pub fn rank_features(omega: &Tensor, kpi: usize) -> Result<ImportanceTable, SelectError> {
    let n = omega.shape()[0];
    if kpi >= n {
        return Err(SelectError::InvalidArgument(format!(
            "kpi {kpi} is not a node of a {n}-node matrix"
        )));
    }
    let scores = impacts_from(omega, kpi);
    let mut rows: Vec<(usize, f64)> = (0..n).filter(|&v| v != kpi).map(|v| (v, scores[v])).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ImportanceTable { kpi, rows })
}
