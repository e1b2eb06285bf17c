//! Data model for the dynamic heterogeneous wireless-data knowledge graph.
//!
//! A [`WirelessKG`] is a fixed node set with static attributes and an ordered
//! list of [`GraphSlice`]s. Each slice covers one coherence block: its typed
//! edge set is constant over the block and it carries an `N × T_c` telemetry
//! matrix (one row per node, one column per sample tick).

mod adjacency;
mod frames;
mod io;
mod metapath;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use adjacency::{
    adjacency_matrix, coherence_block_samples, coherence_time, normalize_adjacency, NormalizedAdjacency,
};
pub use frames::{frame_data, frame_starts};
pub use io::{load_kg, save_kg, KG_FILE, TELEMETRY_FILE};
pub use metapath::{metapath_neighbors, metapath_subgraph, neighbor_mask};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("coherence time unbounded: v·cosθ = {0:e}; supply an explicit cap")]
    DegenerateMotion(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame length {frame_len} exceeds coherence block of {block} samples")]
    FrameTooLong { frame_len: usize, block: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Physical category of a data field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Throughput,
    Power,
    SchedulingIndication,
    ModulationEncodingIndication,
    ResourceBlocks,
    BlockErrorRate,
    SwitchIndication,
    AntennaConfigurationIndication,
    FrameStructure,
}

impl NodeType {
    pub const ALL: [NodeType; 9] = [
        NodeType::Throughput,
        NodeType::Power,
        NodeType::SchedulingIndication,
        NodeType::ModulationEncodingIndication,
        NodeType::ResourceBlocks,
        NodeType::BlockErrorRate,
        NodeType::SwitchIndication,
        NodeType::AntennaConfigurationIndication,
        NodeType::FrameStructure,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            NodeType::Throughput => "throughput",
            NodeType::Power => "power",
            NodeType::SchedulingIndication => "scheduling",
            NodeType::ModulationEncodingIndication => "mcs",
            NodeType::ResourceBlocks => "prb",
            NodeType::BlockErrorRate => "bler",
            NodeType::SwitchIndication => "switch",
            NodeType::AntennaConfigurationIndication => "antenna",
            NodeType::FrameStructure => "frame",
        }
    }
}

/// Protocol-stack layer a data field is collected at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Layer {
    Sdap,
    Pdcp,
    Rlc,
    Mac,
    Phy,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Sdap, Layer::Pdcp, Layer::Rlc, Layer::Mac, Layer::Phy];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Sdap => "SDAP",
            Layer::Pdcp => "PDCP",
            Layer::Rlc => "RLC",
            Layer::Mac => "MAC",
            Layer::Phy => "PHY",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeMeta {
    pub id: usize,
    pub name: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub layer: Layer,
    pub adjustable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationType {
    Causal,
    Explicit,
    Implicit,
}

impl RelationType {
    pub const ALL: [RelationType; 3] = [RelationType::Causal, RelationType::Explicit, RelationType::Implicit];

    pub fn index(self) -> usize {
        match self {
            RelationType::Causal => 0,
            RelationType::Explicit => 1,
            RelationType::Implicit => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Causal => "causal",
            RelationType::Explicit => "explicit",
            RelationType::Implicit => "implicit",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Undirected typed edge, stored with `src < dst`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
}

impl Edge {
    /// Canonical form of `(a, b, relation)`; `None` for a self-loop.
    pub fn new(a: usize, b: usize, relation: RelationType) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self {
                src: a,
                dst: b,
                relation,
            }),
            std::cmp::Ordering::Greater => Some(Self {
                src: b,
                dst: a,
                relation,
            }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.src, self.dst)
    }
}

/// One coherence block: constant typed topology plus its telemetry.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSlice {
    index: usize,
    edges: Vec<Edge>,
    data: Tensor,
    t_start: usize,
}

impl GraphSlice {
    /// Builds a slice over `data` (shape `N × T_c`). Edges are canonicalised;
    /// self-loops and duplicate triples are rejected.
    pub fn new(
        index: usize,
        edges: impl IntoIterator<Item = (usize, usize, RelationType)>,
        data: Tensor,
        t_start: usize,
    ) -> Result<Self, GraphError> {
        if data.ndim() != 2 {
            return Err(GraphError::Invalid(format!(
                "slice {index}: data must be 2-D, got {:?}",
                data.shape()
            )));
        }
        let n = data.shape()[0];
        let mut seen = BTreeSet::new();
        for (a, b, r) in edges {
            if a >= n || b >= n {
                return Err(GraphError::Invalid(format!(
                    "slice {index}: edge ({a},{b}) outside 0..{n}"
                )));
            }
            let e = Edge::new(a, b, r)
                .ok_or_else(|| GraphError::Invalid(format!("slice {index}: self-loop on node {a}")))?;
            if !seen.insert(e) {
                return Err(GraphError::Invalid(format!(
                    "slice {index}: duplicate edge ({},{},{})",
                    e.src, e.dst, r
                )));
            }
        }
        Ok(Self {
            index,
            edges: seen.into_iter().collect(),
            data,
            t_start,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Sorted canonical edges.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Telemetry, `N × T_c`.
    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn n_nodes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn t_start(&self) -> usize {
        self.t_start
    }

    pub fn t_end(&self) -> usize {
        self.t_start + self.len()
    }

    /// Number of sample ticks.
    pub fn len(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = (a.min(b), a.max(b));
        self.edges.iter().any(|e| e.src == lo && e.dst == hi)
    }

    /// Unordered node pairs joined by at least one edge.
    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(Edge::pair).collect()
    }

    /// Same slice with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        Self::new(
            self.index,
            edges.into_iter().map(|e| (e.src, e.dst, e.relation)),
            self.data.clone(),
            self.t_start,
        )
    }

    /// Telemetry row of one node.
    pub fn series(&self, node: usize) -> &[f64] {
        self.data.row(node)
    }
}

/// Static node set plus its ordered, contiguous graph slices.
#[derive(Clone, Debug, PartialEq)]
pub struct WirelessKG {
    nodes: Vec<NodeMeta>,
    slices: Vec<GraphSlice>,
    tc_samples: usize,
}

impl WirelessKG {
    pub fn new(nodes: Vec<NodeMeta>, slices: Vec<GraphSlice>, tc_samples: usize) -> Result<Self, GraphError> {
        let n = nodes.len();
        if n == 0 {
            return Err(GraphError::Invalid("no nodes".into()));
        }
        let mut names = BTreeSet::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::Invalid(format!(
                    "node ids must be dense: position {i} has id {}",
                    node.id
                )));
            }
            if node.name.is_empty() || node.name.contains([',', '"', '\n', '\r']) {
                return Err(GraphError::Invalid(format!(
                    "node {i}: name {:?} is not a valid column name",
                    node.name
                )));
            }
            if !names.insert(node.name.as_str()) {
                return Err(GraphError::Invalid(format!("duplicate node name {:?}", node.name)));
            }
        }
        if slices.is_empty() {
            return Err(GraphError::Invalid("at least one slice is required".into()));
        }
        if tc_samples == 0 {
            return Err(GraphError::Invalid("tc_samples must be positive".into()));
        }
        let mut expected_start = slices[0].t_start();
        for (m, s) in slices.iter().enumerate() {
            if s.n_nodes() != n {
                return Err(GraphError::Invalid(format!(
                    "slice {m}: {} rows for {n} nodes",
                    s.n_nodes()
                )));
            }
            if s.len() != tc_samples {
                return Err(GraphError::Invalid(format!(
                    "slice {m}: {} ticks, expected {tc_samples}",
                    s.len()
                )));
            }
            if s.t_start() != expected_start {
                return Err(GraphError::Invalid(format!(
                    "slice {m}: starts at tick {} but previous slice ended at {expected_start}",
                    s.t_start()
                )));
            }
            if s.index() != m {
                return Err(GraphError::Invalid(format!(
                    "slice at position {m} has index {}",
                    s.index()
                )));
            }
            expected_start = s.t_end();
        }
        Ok(Self {
            nodes,
            slices,
            tc_samples,
        })
    }

    pub fn nodes(&self) -> &[NodeMeta] {
        &self.nodes
    }

    pub fn slices(&self) -> &[GraphSlice] {
        &self.slices
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn tc_samples(&self) -> usize {
        self.tc_samples
    }

    pub fn node_by_name(&self, name: &str) -> Option<&NodeMeta> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Concatenated telemetry of one node across all slices.
    pub fn full_series(&self, node: usize) -> Vec<f64> {
        self.slices
            .iter()
            .flat_map(|s| s.series(node).iter().copied())
            .collect()
    }

    /// Unordered pairs present in any slice.
    pub fn union_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.slices.iter().flat_map(|s| s.pairs()).collect()
    }
}
