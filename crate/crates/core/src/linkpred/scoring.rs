use std::collections::BTreeSet;

use crate::tensor::Tensor;

/// Pairwise cosine similarities plus the rows that had zero norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Cosine {
    pub matrix: Tensor,
    /// Rows whose norm was zero; their similarities are reported as 0.
    pub zero_rows: Vec<usize>,
}

/// `c_ij = z_i·z_j / (‖z_i‖‖z_j‖)` over the rows of `z` (`N × c`).
pub fn cosine_matrix(z: &Tensor) -> Cosine {
    let n = z.shape()[0];
    let norms: Vec<f64> = (0..n)
        .map(|i| z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut c = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i..n {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum();
            let v = if i == j { 1.0 } else { dot / (norms[i] * norms[j]) };
            c.set(&[i, j], v);
            c.set(&[j, i], v);
        }
    }
    Cosine {
        matrix: c,
        zero_rows: (0..n).filter(|&i| norms[i] == 0.0).collect(),
    }
}

/// Pearson correlation between node telemetry rows (`N × T`). Constant rows
/// correlate 0 with everything.
pub fn correlation_matrix(data: &Tensor) -> Tensor {
    let (n, t) = (data.shape()[0], data.shape()[1]);
    let mut centred = data.clone();
    for i in 0..n {
        let mean = data.row(i).iter().sum::<f64>() / t as f64;
        for k in 0..t {
            centred.set(&[i, k], data.at(&[i, k]) - mean);
        }
    }
    cosine_matrix(&centred).matrix
}

/// The `k` highest-scoring pairs; ties at the threshold go to the
/// lexicographically smallest pair.
pub fn top_k_pairs(scored: &[((usize, usize), f64)], k: usize) -> BTreeSet<(usize, usize)> {
    let mut order: Vec<&((usize, usize), f64)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().take(k).map(|p| p.0).collect()
}

/// Binary prediction over all off-diagonal pairs `i < j`: exactly `k` pairs
/// with similarity at or above the `k`-th largest value.
pub fn predict_links(c: &Tensor, k: usize) -> BTreeSet<(usize, usize)> {
    let n = c.shape()[0];
    let scored: Vec<((usize, usize), f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| ((i, j), c.at(&[i, j])))
        .collect();
    top_k_pairs(&scored, k)
}
