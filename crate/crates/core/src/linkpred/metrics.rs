use serde::{Deserialize, Serialize};

use super::scoring::top_k_pairs;
use super::{LinkPredError, MaskedView};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the test set lacks either class.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion-matrix metrics of `predicted` against `labels`, plus the rank
/// AUC of `scores` (ties count one half).
pub fn evaluate(labels: &[bool], predicted: &[bool], scores: &[f64]) -> Result<MetricsReport, LinkPredError> {
    let n = labels.len();
    if n == 0 {
        return Err(LinkPredError::EmptyTestSet);
    }
    if predicted.len() != n || scores.len() != n {
        return Err(LinkPredError::InvalidArgument(format!(
            "length mismatch: {} labels, {} predictions, {} scores",
            n,
            predicted.len(),
            scores.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(predicted) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    // harmonic mean of precision and recall, as one correctly rounded ratio
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, n),
        precision,
        recall,
        f1,
        auc: rank_auc(labels, scores),
        tp,
        fp,
        tn,
        fn_,
    })
}

fn rank_auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        wins += p as f64 * neg_below as f64 + 0.5 * (p * q) as f64;
        neg_below += q;
        i = j;
    }
    Some(wins / (pos * neg) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceEvaluation {
    pub slice: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEvaluation {
    pub slices: Vec<SliceEvaluation>,
    /// All slices' test pairs pooled into one confusion matrix and ranking.
    pub micro: MetricsReport,
    /// Unweighted mean of the per-slice metrics.
    pub macro_avg: MetricsReport,
}

/// Scores every slice's held-out positives and sampled negatives with its
/// similarity matrix, predicting the top `|positives|` test pairs as links.
pub fn evaluate_view(view: &MaskedView, similarity: &[Tensor]) -> Result<ViewEvaluation, LinkPredError> {
    if similarity.len() != view.n_slices() {
        return Err(LinkPredError::InvalidArgument(format!(
            "{} similarity matrices for {} slices",
            similarity.len(),
            view.n_slices()
        )));
    }
    let mut slices = Vec::new();
    let (mut all_l, mut all_p, mut all_s) = (Vec::new(), Vec::new(), Vec::new());
    for (m, c) in similarity.iter().enumerate() {
        let scored: Vec<((usize, usize), f64)> = view.test_pairs(m).map(|(i, j)| ((i, j), c.at(&[i, j]))).collect();
        if scored.is_empty() {
            continue;
        }
        let n_pos = view.held_out[m].len();
        let chosen = top_k_pairs(&scored, n_pos);
        let labels: Vec<bool> = (0..scored.len()).map(|k| k < n_pos).collect();
        let predicted: Vec<bool> = scored.iter().map(|(p, _)| chosen.contains(p)).collect();
        let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
        slices.push(SliceEvaluation {
            slice: m,
            n_positive: n_pos,
            n_negative: scored.len() - n_pos,
            metrics: evaluate(&labels, &predicted, &scores)?,
        });
        all_l.extend(labels);
        all_p.extend(predicted);
        all_s.extend(scores);
    }
    let micro = evaluate(&all_l, &all_p, &all_s)?;
    let k = slices.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| slices.iter().map(|s| f(&s.metrics)).sum::<f64>() / k;
    let aucs: Vec<f64> = slices.iter().filter_map(|s| s.metrics.auc).collect();
    let macro_avg = MetricsReport {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        tp: micro.tp,
        fp: micro.fp,
        tn: micro.tn,
        fn_: micro.fn_,
    };
    Ok(ViewEvaluation {
        slices,
        micro,
        macro_avg,
    })
}
