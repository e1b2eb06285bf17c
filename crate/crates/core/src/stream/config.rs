use serde::{Deserialize, Serialize};

use super::StreamError;

/// Parameter update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam with the usual moment decays (0.9, 0.999).
    Adam,
}

/// Starting point for the trainable tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Uniform random weights (He scaling on rectified layers).
    Random,
    /// Random weights scaled down, plus a structure that passes the positive
    /// and negative parts of the input window through every layer.
    Identity,
}

/// How frame embeddings combine into one slice embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Element-wise mean of the frame embeddings (`N × c`).
    Mean,
    /// Row-normalised frame embeddings side by side, scaled by `1/√F`
    /// (`N × F·c`); slice cosines are then the mean per-frame cosines.
    Concat,
}

/// Hyper-parameters of the STREAM network and its training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    /// Output embedding width `c`.
    pub embed_dim: usize,
    /// Total layer count `L`; three per ST-Conv module.
    pub n_layers: usize,
    pub temporal_kernel: usize,
    pub spatial_kernel: usize,
    /// Channel widths, `L + 1` entries starting with the input width.
    pub channels: Vec<usize>,
    /// Hidden width of the meta-path attention projection.
    pub attention_dim: usize,
    pub frame_len: usize,
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub init: Init,
    pub optimizer: Optimizer,
    /// Rescales each batch gradient to at most this global norm; 0 disables.
    pub grad_clip: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub pooling: Pooling,
    /// `false` trains the homogeneous ablation.
    pub heterogeneous: bool,
    /// Negative slope of the leaky rectifier on node-attention logits.
    pub attention_slope: f64,
    /// Fraction of each frame's training edges hidden from message passing
    /// while still serving as loss targets.
    pub supervision_ratio: f64,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            n_layers: 6,
            temporal_kernel: 3,
            spatial_kernel: 1,
            channels: vec![1, 8, 8, 8, 8, 8, 8],
            attention_dim: 16,
            frame_len: 20,
            stride: 10,
            epochs: 5,
            batch_size: 50,
            lr: 1e-4,
            init: Init::Identity,
            optimizer: Optimizer::Sgd,
            grad_clip: 0.0,
            lr_decay: 0.7,
            decay_every: 5,
            pooling: Pooling::Concat,
            heterogeneous: true,
            attention_slope: 0.2,
            supervision_ratio: 0.1,
            seed: 42,
        }
    }
}

impl StreamConfig {
    pub fn n_modules(&self) -> usize {
        self.n_layers / 3
    }

    /// Time extent entering module `o`'s graph layer.
    pub(crate) fn graph_time(&self, module: usize) -> usize {
        self.frame_len - (2 * module + 1) * (self.temporal_kernel - 1)
    }

    /// Time extent left after the last temporal convolution.
    pub(crate) fn final_time(&self) -> usize {
        self.frame_len - 2 * self.n_modules() * (self.temporal_kernel - 1)
    }

    /// Learning rate in force during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.decay_every).unwrap_or(0);
        self.lr * self.lr_decay.powi(steps as i32)
    }

    pub fn validate(&self, n_nodes: usize) -> Result<(), StreamError> {
        let bad = |m: String| Err(StreamError::ConfigInvalid(m));
        if self.n_layers == 0 || !self.n_layers.is_multiple_of(3) {
            return bad(format!(
                "n_layers must be a positive multiple of 3, got {}",
                self.n_layers
            ));
        }
        if self.channels.len() != self.n_layers + 1 {
            return bad(format!(
                "channels needs n_layers + 1 = {} entries, got {}",
                self.n_layers + 1,
                self.channels.len()
            ));
        }
        if self.channels[0] != 1 {
            return bad(format!(
                "channels[0] is the input width and must be 1, got {}",
                self.channels[0]
            ));
        }
        if self.init == Init::Identity && self.channels[1..].iter().any(|&c| c < 2) {
            return bad("identity initialisation needs at least 2 channels per hidden layer".into());
        }
        if self.channels.contains(&0) || self.embed_dim == 0 || self.attention_dim == 0 {
            return bad("channel, embedding and attention widths must be positive".into());
        }
        if self.temporal_kernel == 0 || self.temporal_kernel > self.frame_len {
            return bad(format!(
                "temporal_kernel must be in 1..=frame_len ({}), got {}",
                self.frame_len, self.temporal_kernel
            ));
        }
        if self.frame_len <= 2 * self.n_modules() * (self.temporal_kernel - 1) {
            return bad(format!(
                "frame_len {} is too short for {} temporal convolutions of width {}",
                self.frame_len,
                2 * self.n_modules(),
                self.temporal_kernel
            ));
        }
        if self.spatial_kernel == 0 || self.spatial_kernel > n_nodes {
            return bad(format!(
                "spatial_kernel must be in 1..={n_nodes}, got {}",
                self.spatial_kernel
            ));
        }
        if self.spatial_kernel != 1 {
            return bad("spatial_kernel > 1 shrinks the node axis, which the graph layers cannot follow; use 1".into());
        }
        if self.stride == 0 || self.stride > self.frame_len {
            return bad(format!("stride must be in 1..=frame_len, got {}", self.stride));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad("lr must be finite and non-negative and lr_decay positive".into());
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return bad(format!(
                "grad_clip must be finite and non-negative, got {}",
                self.grad_clip
            ));
        }
        if !(0.0..1.0).contains(&self.supervision_ratio) {
            return bad(format!(
                "supervision_ratio must be in [0,1), got {}",
                self.supervision_ratio
            ));
        }
        if !self.attention_slope.is_finite() {
            return bad("attention_slope must be finite".into());
        }
        Ok(())
    }
}
