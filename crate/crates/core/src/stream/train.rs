use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward_frame, prepare_frames, register, similarity_loss, SliceContext};
use super::{embed_slice, pool_frames, Optimizer, StreamConfig, StreamError, StreamParams};
use crate::graph::{adjacency_matrix, GraphSlice, WirelessKG};
use crate::linkpred::{cosine_matrix, predict_links, MaskedView};
use crate::tensor::{Adam, Tape, Tensor};

/// Per-epoch training curves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-frame loss over the epoch.
    pub loss: Vec<f64>,
    /// Mean over slices of the F1 between the top-|E| predicted pairs and the
    /// training edges, using embeddings averaged over the epoch's frames.
    pub train_f1: Vec<f64>,
}

struct SliceData {
    train: GraphSlice,
    ctx: SliceContext,
    frames: Vec<Tensor>,
    target: Tensor,
    weight: Tensor,
    train_pairs: BTreeSet<(usize, usize)>,
}

fn slice_data(kg: &WirelessKG, view: &MaskedView, config: &StreamConfig) -> Result<Vec<SliceData>, StreamError> {
    let n = kg.n_nodes();
    (0..kg.slices().len())
        .map(|m| {
            let train = view.training_slice(kg, m);
            let mut weight = Tensor::ones(&[n, n]);
            for i in 0..n {
                weight.set(&[i, i], 0.0);
            }
            for (i, j) in view.test_pairs(m) {
                weight.set(&[i, j], 0.0);
                weight.set(&[j, i], 0.0);
            }
            Ok(SliceData {
                ctx: SliceContext::new(&train, config.heterogeneous)?,
                frames: prepare_frames(&kg.slices()[m], config.frame_len, config.stride)?,
                target: adjacency_matrix(&train, None),
                weight,
                train_pairs: train.pairs(),
                train,
            })
        })
        .collect()
}

fn check_view(kg: &WirelessKG, view: &MaskedView) -> Result<(), StreamError> {
    if view.n_slices() != kg.slices().len() {
        return Err(StreamError::ConfigInvalid(format!(
            "masked view covers {} slices but the KG has {}",
            view.n_slices(),
            kg.slices().len()
        )));
    }
    Ok(())
}

/// Trains from the seeded initialisation.
pub fn train(
    kg: &WirelessKG,
    view: &MaskedView,
    config: &StreamConfig,
) -> Result<(StreamParams, TrainReport), StreamError> {
    train_from(kg, view, config, StreamParams::init(config), |_, _, _| {})
}

/// Mini-batch gradient descent on the masked similarity loss, starting from
/// `params`. `on_epoch(epoch, loss, f1)` is called after every epoch.
pub fn train_from(
    kg: &WirelessKG,
    view: &MaskedView,
    config: &StreamConfig,
    mut params: StreamParams,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<(StreamParams, TrainReport), StreamError> {
    config.validate(kg.n_nodes())?;
    check_view(kg, view)?;
    StreamParams::from_tensors(config, params.tensors().to_vec())?;
    let data = slice_data(kg, view, config)?;
    let mut order: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(m, d)| (0..d.frames.len()).map(move |f| (m, f)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut report = TrainReport::default();
    let mut optimizer = Update::new(config.optimizer, params.tensors());

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut frame_z: Vec<Vec<Tensor>> = vec![Vec::new(); data.len()];
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for &(m, f) in batch {
                let d = &data[m];
                let hidden_ctx;
                let ctx = if config.supervision_ratio > 0.0 {
                    hidden_ctx = message_context(&d.train, config, &mut rng)?;
                    &hidden_ctx
                } else {
                    &d.ctx
                };
                let tape = Tape::new();
                let vars = register(&tape, &params, true);
                let z = forward_frame(config, &vars, ctx, &d.frames[f])?;
                let loss = similarity_loss(z, &d.target, &d.weight)?;
                let value = loss.value().item();
                if !value.is_finite() {
                    return Err(StreamError::Diverged { epoch });
                }
                loss_sum += value;
                let g = tape.backward(loss)?;
                for (acc, v) in grads.iter_mut().zip(&vars) {
                    if let Some(gv) = g.get(*v) {
                        acc.add_assign(gv);
                    }
                }
                frame_z[m].push((*z.value()).clone());
            }
            for g in grads.iter_mut() {
                *g = g.map(|v| v / batch.len() as f64);
            }
            if config.grad_clip > 0.0 {
                let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
                if norm > config.grad_clip {
                    let f = config.grad_clip / norm;
                    grads.iter_mut().for_each(|g| *g = g.map(|v| v * f));
                }
            }
            optimizer.step(params.tensors_mut(), &grads, lr);
            if !params.is_finite() {
                return Err(StreamError::Diverged { epoch });
            }
        }
        let loss = loss_sum / order.len().max(1) as f64;
        let f1 = epoch_f1(config, &data, &frame_z)?;
        report.loss.push(loss);
        report.train_f1.push(f1);
        on_epoch(epoch, loss, f1);
    }
    Ok((params, report))
}

enum Update {
    Sgd,
    Adam(Adam),
}

impl Update {
    fn new(kind: Optimizer, params: &[Tensor]) -> Self {
        match kind {
            Optimizer::Sgd => Update::Sgd,
            Optimizer::Adam => Update::Adam(Adam::new(params)),
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        match self {
            Update::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.axpy(-lr, g);
                }
            }
            Update::Adam(adam) => adam.step(params, grads, lr),
        }
    }
}

/// Graph context with a random `supervision_ratio` share of the edges removed.
fn message_context(
    train: &GraphSlice,
    config: &StreamConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SliceContext, StreamError> {
    let edges = train.edges();
    let k = (config.supervision_ratio * edges.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..edges.len()).collect();
    idx.shuffle(rng);
    let mut keep = idx.split_off(k);
    keep.sort_unstable();
    let slice = train.with_edges(keep.into_iter().map(|i| edges[i]))?;
    SliceContext::new(&slice, config.heterogeneous)
}

fn epoch_f1(config: &StreamConfig, data: &[SliceData], frame_z: &[Vec<Tensor>]) -> Result<f64, StreamError> {
    let mut total = 0.0;
    let mut count = 0;
    for (d, zs) in data.iter().zip(frame_z) {
        let k = d.train_pairs.len();
        if zs.is_empty() || k == 0 {
            continue;
        }
        let z = pool_frames(config.pooling, zs)?;
        let predicted = predict_links(&cosine_matrix(&z).matrix, k);
        let hits = predicted.intersection(&d.train_pairs).count();
        // |predicted| = |true| = k, so precision = recall = F1
        total += hits as f64 / k as f64;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Slice embeddings computed on each slice's training structure.
pub fn embed_view(
    kg: &WirelessKG,
    view: &MaskedView,
    config: &StreamConfig,
    params: &StreamParams,
) -> Result<Vec<Tensor>, StreamError> {
    config.validate(kg.n_nodes())?;
    check_view(kg, view)?;
    (0..kg.slices().len())
        .map(|m| {
            let ctx = SliceContext::new(&view.training_slice(kg, m), config.heterogeneous)?;
            let frames = prepare_frames(&kg.slices()[m], config.frame_len, config.stride)?;
            embed_slice(config, params, &ctx, &frames)
        })
        .collect()
}

/// Slice embeddings computed on the complete slices, for downstream use once
/// training is done.
pub fn embed_kg(kg: &WirelessKG, config: &StreamConfig, params: &StreamParams) -> Result<Vec<Tensor>, StreamError> {
    config.validate(kg.n_nodes())?;
    kg.slices()
        .iter()
        .map(|slice| {
            let ctx = SliceContext::new(slice, config.heterogeneous)?;
            let frames = prepare_frames(slice, config.frame_len, config.stride)?;
            embed_slice(config, params, &ctx, &frames)
        })
        .collect()
}
