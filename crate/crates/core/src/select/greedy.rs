use serde::{Deserialize, Serialize};

use super::{fit_regressor, ImportanceTable, RegressorSpec, SelectError};

/// Outcome of greedy selection along an importance ranking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    pub kpi: usize,
    /// Chosen features in the order they were added.
    pub selected: Vec<usize>,
    /// Validation R² after each addition.
    pub fits: Vec<f64>,
    pub achieved: f64,
    pub threshold: f64,
    /// False when every candidate was added without meeting the threshold.
    pub reached: bool,
    /// Features available before selection (every node but the KPI).
    pub n_candidates: usize,
    pub compression_ratio: f64,
}

/// `(1 − selected/total)·100`.
pub fn compression_ratio(selected: usize, total: usize) -> Result<f64, SelectError> {
    if selected == 0 || selected > total {
        return Err(SelectError::InvalidArgument(format!(
            "need 1 ≤ selected ≤ total, got {selected} of {total}"
        )));
    }
    Ok((1.0 - selected as f64 / total as f64) * 100.0)
}

/// Adds features in ranking order until the regressor's validation R²
/// reaches `threshold`. `series[v]` is node `v`'s telemetry; the KPI's own
/// series is the target.
pub fn greedy_select(
    table: &ImportanceTable,
    series: &[Vec<f64>],
    threshold: f64,
    spec: &RegressorSpec,
) -> Result<FeatureDataset, SelectError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SelectError::InvalidArgument(format!(
            "threshold must be in [0,1], got {threshold}"
        )));
    }
    let target = series
        .get(table.kpi)
        .ok_or_else(|| SelectError::InvalidArgument(format!("no series for kpi {}", table.kpi)))?;
    if let Some(v) = table.ids().find(|&v| v >= series.len()) {
        return Err(SelectError::InvalidArgument(format!("no series for feature {v}")));
    }
    let mut selected = Vec::new();
    let mut fits = Vec::new();
    for v in table.ids() {
        selected.push(v);
        let cols: Vec<&[f64]> = selected.iter().map(|&s| series[s].as_slice()).collect();
        let r2 = fit_regressor(&cols, target, spec)?;
        fits.push(r2);
        if r2 >= threshold {
            break;
        }
    }
    let achieved = fits.last().copied().unwrap_or(f64::NEG_INFINITY);
    Ok(FeatureDataset {
        kpi: table.kpi,
        compression_ratio: compression_ratio(selected.len().max(1), table.rows.len().max(1))?,
        selected,
        fits,
        achieved,
        threshold,
        reached: achieved >= threshold,
        n_candidates: table.rows.len(),
    })
}
