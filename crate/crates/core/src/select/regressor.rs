use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SelectError;
use crate::tensor::{Adam, Tape, Tensor, Var};

/// Shape and training schedule of the KPI regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorSpec {
    /// Hidden layer widths, each followed by a ReLU.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Leading share of the time axis used for fitting; the rest validates.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32, 32],
            epochs: 200,
            lr: 1e-3,
            batch_size: 64,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl RegressorSpec {
    fn widths(&self, n_inputs: usize) -> Vec<usize> {
        let mut w = vec![n_inputs];
        w.extend(&self.hidden);
        w.push(1);
        w
    }

    fn validate(&self) -> Result<(), SelectError> {
        let bad = |m: &str| Err(SelectError::InvalidArgument(m.into()));
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must be in (0,1)");
        }
        Ok(())
    }
}

/// Size and per-sample inference cost of the regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_inputs: usize,
    pub params: usize,
    /// One multiply and one add per weight, one add per bias.
    pub flops: usize,
    pub gflops: f64,
}

pub fn cost_report(spec: &RegressorSpec, n_inputs: usize) -> CostReport {
    let w = spec.widths(n_inputs);
    let (mut params, mut flops) = (0, 0);
    for pair in w.windows(2) {
        params += pair[0] * pair[1] + pair[1];
        flops += 2 * pair[0] * pair[1] + pair[1];
    }
    CostReport {
        n_inputs,
        params,
        flops,
        gflops: flops as f64 * 1e-9,
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn forward<'t>(tape: &'t Tape, x: Var<'t>, layers: &[(Var<'t>, Var<'t>)]) -> Result<Var<'t>, SelectError> {
    let rows = x.shape()[0];
    let ones = tape.constant(Tensor::ones(&[rows, 1]));
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        h = h.matmul(w)?.add(ones.matmul(b)?)?;
        if i + 1 < layers.len() {
            h = h.relu();
        }
    }
    Ok(h)
}

fn gather(x: &[Vec<f64>], rows: &[usize]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|&r| x[r].clone()).collect::<Vec<_>>())
}

/// Trains the regressor on the leading `train_fraction` of the series and
/// returns the coefficient of determination on the remainder.
///
/// `features` holds one series per selected feature, all as long as `target`.
pub fn fit_regressor(features: &[&[f64]], target: &[f64], spec: &RegressorSpec) -> Result<f64, SelectError> {
    spec.validate()?;
    if features.is_empty() {
        return Err(SelectError::InvalidArgument("at least one feature is needed".into()));
    }
    let t = target.len();
    if features.iter().any(|f| f.len() != t) {
        return Err(SelectError::InvalidArgument("feature and target lengths differ".into()));
    }
    let n_train = (spec.train_fraction * t as f64).floor() as usize;
    if n_train < 2 || t - n_train < 2 {
        return Err(SelectError::InvalidArgument(format!(
            "{t} samples cannot be split for validation"
        )));
    }

    let (y_mean, y_std) = mean_std(&target[..n_train]);
    if y_std <= 1e-12 {
        return Err(SelectError::DegenerateTarget);
    }
    let scales: Vec<(f64, f64)> = features
        .iter()
        .map(|f| {
            let (m, s) = mean_std(&f[..n_train]);
            (m, if s > 1e-12 { s } else { 1.0 })
        })
        .collect();
    let x: Vec<Vec<f64>> = (0..t)
        .map(|i| features.iter().zip(&scales).map(|(f, (m, s))| (f[i] - m) / s).collect())
        .collect();
    let y: Vec<f64> = target.iter().map(|v| (v - y_mean) / y_std).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let widths = spec.widths(features.len());
    let mut params = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        let rectified = i + 2 < widths.len();
        let fan_out = if rectified { 0 } else { pair[1] };
        params.push(Tensor::glorot(&[pair[0], pair[1]], pair[0], fan_out, &mut rng));
        params.push(Tensor::zeros(&[1, pair[1]]));
    }
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..n_train).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size) {
            let tape = Tape::new();
            let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
            let layers: Vec<(Var, Var)> = vars.chunks(2).map(|c| (c[0], c[1])).collect();
            let xb = tape.constant(gather(&x, batch));
            let yb = tape.constant(Tensor::new(
                vec![batch.len(), 1],
                batch.iter().map(|&r| y[r]).collect(),
            )?);
            let loss = forward(&tape, xb, &layers)?.sub(yb)?.square().mean();
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars
                .iter()
                .zip(&params)
                .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam.step(&mut params, &g, spec.lr);
        }
    }

    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let layers: Vec<(Var, Var)> = vars.chunks(2).map(|c| (c[0], c[1])).collect();
    let val: Vec<usize> = (n_train..t).collect();
    let pred = forward(&tape, tape.constant(gather(&x, &val)), &layers)?.value();
    let truth = &y[n_train..];
    let (v_mean, _) = mean_std(truth);
    let ss_tot: f64 = truth.iter().map(|v| (v - v_mean).powi(2)).sum();
    if ss_tot <= 1e-12 {
        return Err(SelectError::DegenerateTarget);
    }
    let ss_res: f64 = truth.iter().zip(pred.data()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
