use super::layers::{gcn_layer, metapath_attention, metapath_fuse, node_aggregate, node_attention, temporal_conv};
use super::params::Layout;
use super::{Pooling, StreamConfig, StreamError, StreamParams};
use crate::graph::{adjacency_matrix, frame_data, neighbor_mask, normalize_adjacency, GraphSlice, RelationType};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// One meta-path subgraph of a slice, ready for the graph layers.
#[derive(Clone, Debug, PartialEq)]
pub struct PathContext {
    /// `None` for the union graph of the homogeneous ablation.
    pub relation: Option<RelationType>,
    /// Parameter slot this path reads.
    pub slot: usize,
    pub propagation: Tensor,
    pub mask: Vec<bool>,
}

/// Graph structure of one slice as seen by the network.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceContext {
    pub n_nodes: usize,
    pub paths: Vec<PathContext>,
}

impl SliceContext {
    /// Heterogeneous mode uses every relation with at least one edge (all
    /// three if the slice has none); homogeneous mode uses the union graph.
    pub fn new(slice: &GraphSlice, heterogeneous: bool) -> Result<Self, StreamError> {
        let build = |relation: Option<RelationType>, slot| -> Result<PathContext, StreamError> {
            let a = adjacency_matrix(slice, relation);
            Ok(PathContext {
                relation,
                slot,
                propagation: normalize_adjacency(&a)?.propagation,
                mask: neighbor_mask(slice, relation),
            })
        };
        let paths = if heterogeneous {
            let present: Vec<RelationType> = RelationType::ALL
                .into_iter()
                .filter(|r| slice.edges().iter().any(|e| e.relation == *r))
                .collect();
            let used = if present.is_empty() {
                RelationType::ALL.to_vec()
            } else {
                present
            };
            used.into_iter()
                .map(|r| build(Some(r), r.index()))
                .collect::<Result<_, _>>()?
        } else {
            vec![build(None, 0)?]
        };
        Ok(Self {
            n_nodes: slice.n_nodes(),
            paths,
        })
    }
}

/// Per-node z-scored telemetry windows of a slice. Constant series become zeros.
pub fn prepare_frames(slice: &GraphSlice, frame_len: usize, stride: usize) -> Result<Vec<Tensor>, StreamError> {
    let n = slice.n_nodes();
    let t = slice.len();
    let mut data = slice.data().clone();
    for i in 0..n {
        let row = slice.series(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        for (k, v) in row.iter().enumerate() {
            data.set(&[i, k], (v - mean) * scale);
        }
    }
    let normalised = GraphSlice::new(
        slice.index(),
        slice.edges().iter().map(|e| (e.src, e.dst, e.relation)),
        data,
        slice.t_start(),
    )?;
    Ok(frame_data(&normalised, frame_len, stride)?)
}

/// Parameters registered on a tape, either trainable or frozen.
pub fn register<'t>(tape: &'t Tape, params: &StreamParams, trainable: bool) -> Vec<Var<'t>> {
    params
        .tensors()
        .iter()
        .map(|t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect()
}

/// Embedding `Z` (`N × c`) of one `N × frame_len` window.
pub fn forward_frame<'t>(
    config: &StreamConfig,
    vars: &[Var<'t>],
    ctx: &SliceContext,
    frame: &Tensor,
) -> Result<Var<'t>, TensorError> {
    let layout = Layout::new(config);
    let tape = vars[0].tape();
    let n = ctx.n_nodes;
    let mut h = tape.constant(frame.clone().reshaped(&[n, frame.len() / n, 1])?);
    let propagation: Vec<Var<'t>> = ctx.paths.iter().map(|p| tape.constant(p.propagation.clone())).collect();
    for module in &layout.modules {
        h = temporal_conv(h, vars[module.temporal_in])?;
        let mut per_path = Vec::with_capacity(ctx.paths.len());
        for (path, &p) in ctx.paths.iter().zip(&propagation) {
            let g = gcn_layer(h, p, vars[module.graph_kernel[path.slot]])?;
            let s = node_attention(
                g,
                &path.mask,
                vars[module.node_attention[path.slot]],
                config.attention_slope,
            )?;
            per_path.push(node_aggregate(s, g)?);
        }
        h = match module.fusion {
            Some((q, b, r)) => {
                let w = metapath_attention(&per_path, vars[q], vars[b], vars[r])?;
                metapath_fuse(w, &per_path)?
            }
            None => per_path[0],
        };
        h = temporal_conv(h, vars[module.temporal_out])?;
    }
    let shape = h.shape();
    let flat = h.reshape(&[n, shape[1] * shape[2]])?;
    let ones = tape.constant(Tensor::ones(&[n, 1]));
    flat.matmul(vars[layout.output_weight])?
        .add(ones.matmul(vars[layout.output_bias])?)
}

/// `Σ w_ij (cos(z_i, z_j) − a_ij)²` with `w` masking out excluded pairs.
pub fn similarity_loss<'t>(z: Var<'t>, target: &Tensor, weight: &Tensor) -> Result<Var<'t>, TensorError> {
    let tape = z.tape();
    let (n, c) = (z.shape()[0], z.shape()[1]);
    let eps = tape.constant(Tensor::full(&[n], 1e-12));
    let norms = z.square().sum_axis(1)?.add(eps)?.sqrt().reshape(&[n, 1])?;
    let unit = z.div(norms.matmul(tape.constant(Tensor::ones(&[1, c])))?)?;
    let cos = unit.matmul(unit.transpose()?)?;
    Ok(cos
        .sub(tape.constant(target.clone()))?
        .square()
        .mul(tape.constant(weight.clone()))?
        .sum())
}

/// Embedding of every frame of a slice under frozen parameters.
pub fn embed_frames(
    config: &StreamConfig,
    params: &StreamParams,
    ctx: &SliceContext,
    frames: &[Tensor],
) -> Result<Vec<Tensor>, StreamError> {
    frames
        .iter()
        .map(|frame| {
            let tape = Tape::new();
            let vars = register(&tape, params, false);
            Ok((*forward_frame(config, &vars, ctx, frame)?.value()).clone())
        })
        .collect()
}

/// Combines frame embeddings into the slice embedding.
pub fn pool_frames(pooling: Pooling, frames: &[Tensor]) -> Result<Tensor, StreamError> {
    let first = frames
        .first()
        .ok_or_else(|| StreamError::ConfigInvalid("slice yields no frames".into()))?;
    let (n, c) = (first.shape()[0], first.shape()[1]);
    let f = frames.len();
    match pooling {
        Pooling::Mean => {
            let mut acc = Tensor::zeros(&[n, c]);
            for z in frames {
                acc.add_assign(z);
            }
            Ok(acc.map(|v| v / f as f64))
        }
        Pooling::Concat => {
            let scale = 1.0 / (f as f64).sqrt();
            let mut out = Vec::with_capacity(n * f * c);
            for i in 0..n {
                for z in frames {
                    let row = z.row(i);
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let k = if norm > 0.0 { scale / norm } else { 0.0 };
                    out.extend(row.iter().map(|v| v * k));
                }
            }
            Ok(Tensor::new(vec![n, f * c], out)?)
        }
    }
}

/// Slice embedding from every frame of the slice.
pub fn embed_slice(
    config: &StreamConfig,
    params: &StreamParams,
    ctx: &SliceContext,
    frames: &[Tensor],
) -> Result<Tensor, StreamError> {
    pool_frames(config.pooling, &embed_frames(config, params, ctx, frames)?)
}
