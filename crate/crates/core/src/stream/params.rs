use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Init, StreamConfig, StreamError};
use crate::tensor::Tensor;

/// Positions of one ST-Conv module's tensors in the flat parameter list.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ModuleSlots {
    pub temporal_in: usize,
    pub temporal_out: usize,
    /// Graph kernel `O` per meta-path slot.
    pub graph_kernel: Vec<usize>,
    /// Node attention vector `a` per meta-path slot.
    pub node_attention: Vec<usize>,
    /// `(Q, b, r)` of the meta-path attention; absent in the homogeneous ablation.
    pub fusion: Option<(usize, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub modules: Vec<ModuleSlots>,
    pub output_weight: usize,
    pub output_bias: usize,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
}

/// Meta-path slots per module: one per relation, or a single union slot.
pub(crate) fn n_slots(config: &StreamConfig) -> usize {
    if config.heterogeneous {
        3
    } else {
        1
    }
}

impl Layout {
    pub fn new(config: &StreamConfig) -> Self {
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| {
            names.push(name);
            shapes.push(shape);
            names.len() - 1
        };
        let ch = &config.channels;
        let (ks, kt) = (config.spatial_kernel, config.temporal_kernel);
        let mut modules = Vec::new();
        for o in 0..config.n_modules() {
            let (c0, c1, c2, c3) = (ch[3 * o], ch[3 * o + 1], ch[3 * o + 2], ch[3 * o + 3]);
            let t = config.graph_time(o);
            let d = t * c2;
            let temporal_in = push(format!("module{o}.temporal_in"), vec![c1, ks, kt, c0]);
            let mut graph_kernel = Vec::new();
            let mut node_attention = Vec::new();
            for s in 0..n_slots(config) {
                graph_kernel.push(push(format!("module{o}.path{s}.graph_kernel"), vec![c2, c1, t, t]));
                node_attention.push(push(format!("module{o}.path{s}.node_attention"), vec![2 * d, 1]));
            }
            let fusion = config.heterogeneous.then(|| {
                let q = push(format!("module{o}.fusion.query"), vec![d, config.attention_dim]);
                let b = push(format!("module{o}.fusion.bias"), vec![1, config.attention_dim]);
                let r = push(format!("module{o}.fusion.context"), vec![config.attention_dim, 1]);
                (q, b, r)
            });
            let temporal_out = push(format!("module{o}.temporal_out"), vec![c3, ks, kt, c2]);
            modules.push(ModuleSlots {
                temporal_in,
                temporal_out,
                graph_kernel,
                node_attention,
                fusion,
            });
        }
        let d_out = config.final_time() * ch[config.n_layers];
        let output_weight = push("output.weight".into(), vec![d_out, config.embed_dim]);
        let output_bias = push("output.bias".into(), vec![1, config.embed_dim]);
        Self {
            modules,
            output_weight,
            output_bias,
            names,
            shapes,
        }
    }
}

const IDENTITY_NOISE: f64 = 0.1;

/// Adds the mirrored pass-through: channel 0 carries `relu(x)` and channel 1
/// carries `relu(-x)` of the input window.
fn add_identity(name: &str, t: &mut Tensor, channels: usize) {
    let shape = t.shape().to_vec();
    let mut bump = |idx: [usize; 4], v: f64| {
        let old = t.at(&idx);
        t.set(&idx, old + v);
    };
    if name.ends_with("graph_kernel") {
        for ch in 0..2 {
            for k in 0..shape[2] {
                bump([ch, ch, k, k], 1.0);
            }
        }
    } else if name.contains("temporal") {
        let mid = shape[2] / 2;
        if shape[3] == 1 {
            bump([0, 0, mid, 0], 1.0);
            bump([1, 0, mid, 0], -1.0);
        } else {
            bump([0, 0, mid, 0], 1.0);
            bump([0, 0, mid, 1], -1.0);
            bump([1, 0, mid, 1], 1.0);
            bump([1, 0, mid, 0], -1.0);
        }
    } else if name == "output.weight" {
        // flattened rows are (time, channel); recombine x⁺ − x⁻ per time step
        let steps = (shape[0] / channels).min(shape[1]);
        for k in 0..steps {
            bump2(t, [k * channels, k], 1.0);
            bump2(t, [k * channels + 1, k], -1.0);
        }
    }
}

fn bump2(t: &mut Tensor, idx: [usize; 2], v: f64) {
    let old = t.at(&idx);
    t.set(&idx, old + v);
}

/// The full trainable state, stored as a flat list in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl StreamParams {
    /// Seeded uniform initialisation; biases start at zero.
    pub fn init(config: &StreamConfig) -> Self {
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0x5354_5245_414d);
        let tensors = layout
            .shapes
            .iter()
            .zip(&layout.names)
            .map(|(shape, name)| {
                if name.ends_with("bias") {
                    return Tensor::zeros(shape);
                }
                // rectified layers get He scaling (fan_out = 0 doubles the variance)
                let (fan_in, fan_out) = match shape.len() {
                    4 if name.ends_with("graph_kernel") => (shape[1] * shape[2], 0),
                    4 => (shape[1] * shape[2] * shape[3], 0),
                    _ => (shape[0], shape[1]),
                };
                let mut t = Tensor::glorot(shape, fan_in, fan_out, &mut rng);
                if config.init == Init::Identity {
                    t = t.map(|v| v * IDENTITY_NOISE);
                    add_identity(name, &mut t, config.channels[config.n_layers]);
                }
                t
            })
            .collect();
        Self {
            names: layout.names,
            tensors,
        }
    }

    /// Rebuilds parameters from tensors, checking them against the layout
    /// implied by `config`.
    pub fn from_tensors(config: &StreamConfig, tensors: Vec<Tensor>) -> Result<Self, StreamError> {
        let layout = Layout::new(config);
        if tensors.len() != layout.shapes.len() {
            return Err(StreamError::ParamMismatch(format!(
                "expected {} tensors, got {}",
                layout.shapes.len(),
                tensors.len()
            )));
        }
        for ((t, shape), name) in tensors.iter().zip(&layout.shapes).zip(&layout.names) {
            if t.shape() != shape.as_slice() {
                return Err(StreamError::ParamMismatch(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            names: layout.names,
            tensors,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}
