//! `kg.json` + `telemetry.csv` persistence.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, GraphSlice, NodeMeta, RelationType, WirelessKG};
use crate::fsutil::{read_to_string, write_atomic};
use crate::tensor::Tensor;

pub const KG_FILE: &str = "kg.json";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KgDoc {
    nodes: Vec<NodeMeta>,
    tc_samples: usize,
    slices: Vec<SliceDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliceDoc {
    index: usize,
    edges: Vec<(usize, usize, RelationType)>,
    t_start: usize,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> GraphError {
    GraphError::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

/// Writes `dir/kg.json` and `dir/telemetry.csv`, creating `dir` if needed.
pub fn save_kg(kg: &WirelessKG, dir: &Path) -> Result<(), GraphError> {
    std::fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let doc = KgDoc {
        nodes: kg.nodes().to_vec(),
        tc_samples: kg.tc_samples(),
        slices: kg
            .slices()
            .iter()
            .map(|s| SliceDoc {
                index: s.index(),
                edges: s.edges().iter().map(|e| (e.src, e.dst, e.relation)).collect(),
                t_start: s.t_start(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("serialisable");
    json.push('\n');
    write_atomic(&dir.join(KG_FILE), json.as_bytes()).map_err(|(path, source)| GraphError::Io { path, source })?;

    let mut csv = String::from("tick");
    for n in kg.nodes() {
        csv.push(',');
        csv.push_str(&n.name);
    }
    csv.push('\n');
    for s in kg.slices() {
        for t in 0..s.len() {
            write!(csv, "{}", s.t_start() + t).expect("string write");
            for i in 0..kg.n_nodes() {
                write!(csv, ",{}", s.data().at(&[i, t])).expect("string write");
            }
            csv.push('\n');
        }
    }
    write_atomic(&dir.join(TELEMETRY_FILE), csv.as_bytes()).map_err(|(path, source)| GraphError::Io { path, source })
}

/// Reads a KG written by [`save_kg`], validating every field.
pub fn load_kg(dir: &Path) -> Result<WirelessKG, GraphError> {
    let kg_path = dir.join(KG_FILE);
    let text = read_to_string(&kg_path).map_err(|(path, source)| GraphError::Io { path, source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let doc: KgDoc =
        serde_path_to_error::deserialize(de).map_err(|e| violation(e.path().to_string(), e.inner().to_string()))?;

    let n = doc.nodes.len();
    if n == 0 {
        return Err(violation("nodes", "at least one node required"));
    }
    let mut names = BTreeSet::new();
    for (i, node) in doc.nodes.iter().enumerate() {
        if node.id != i {
            return Err(violation(
                format!("nodes[{i}].id"),
                format!("expected {i}, found {}", node.id),
            ));
        }
        if !names.insert(node.name.as_str()) {
            return Err(violation(
                format!("nodes[{i}].name"),
                format!("duplicate name {:?}", node.name),
            ));
        }
    }
    if doc.tc_samples == 0 {
        return Err(violation("tc_samples", "must be positive"));
    }
    if doc.slices.is_empty() {
        return Err(violation("slices", "at least one slice required"));
    }
    for (m, s) in doc.slices.iter().enumerate() {
        if s.index != m {
            return Err(violation(
                format!("slices[{m}].index"),
                format!("expected {m}, found {}", s.index),
            ));
        }
        let expected = doc.slices[0].t_start + m * doc.tc_samples;
        if s.t_start != expected {
            return Err(violation(
                format!("slices[{m}].t_start"),
                format!("expected {expected}, found {}", s.t_start),
            ));
        }
        let mut seen = BTreeSet::new();
        for (k, &(a, b, r)) in s.edges.iter().enumerate() {
            let path = format!("slices[{m}].edges[{k}]");
            if a >= n || b >= n {
                return Err(violation(path, format!("node id out of range 0..{n}")));
            }
            let e = Edge::new(a, b, r).ok_or_else(|| violation(path.clone(), "self-loop"))?;
            if !seen.insert(e) {
                return Err(violation(path, "duplicate edge"));
            }
        }
    }

    let csv_path = dir.join(TELEMETRY_FILE);
    let csv = read_to_string(&csv_path).map_err(|(path, source)| GraphError::Io { path, source })?;
    let columns = read_telemetry(&csv, &doc)?;

    let tc = doc.tc_samples;
    let mut slices = Vec::with_capacity(doc.slices.len());
    for (m, s) in doc.slices.iter().enumerate() {
        let mut buf = Vec::with_capacity(n * tc);
        for col in &columns {
            buf.extend_from_slice(&col[m * tc..(m + 1) * tc]);
        }
        let data = Tensor::new(vec![n, tc], buf).expect("shape");
        slices.push(GraphSlice::new(s.index, s.edges.iter().copied(), data, s.t_start)?);
    }
    WirelessKG::new(doc.nodes, slices, tc)
}

/// Parses the telemetry CSV into one column per node.
fn read_telemetry(csv: &str, doc: &KgDoc) -> Result<Vec<Vec<f64>>, GraphError> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| violation(TELEMETRY_FILE, "empty file"))?;
    let mut cols = header.split(',');
    if cols.next() != Some("tick") {
        return Err(violation(format!("{TELEMETRY_FILE}:1"), "first column must be `tick`"));
    }
    let names: Vec<&str> = cols.collect();
    if names.len() != doc.nodes.len() || names.iter().zip(&doc.nodes).any(|(a, b)| *a != b.name) {
        return Err(violation(
            format!("{TELEMETRY_FILE}:1"),
            "columns must list node names in id order",
        ));
    }
    let total = doc.slices.len() * doc.tc_samples;
    let first_tick = doc.slices[0].t_start;
    let mut columns = vec![Vec::with_capacity(total); names.len()];
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = k + 2;
        let mut fields = line.split(',');
        let tick: usize = fields
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| violation(format!("{TELEMETRY_FILE}:{lineno}.tick"), "not an integer"))?;
        if tick != first_tick + rows {
            return Err(violation(
                format!("{TELEMETRY_FILE}:{lineno}.tick"),
                format!("expected {}, found {tick}", first_tick + rows),
            ));
        }
        let mut count = 0;
        for (i, f) in fields.enumerate() {
            if i >= names.len() {
                return Err(violation(format!("{TELEMETRY_FILE}:{lineno}"), "too many columns"));
            }
            let v: f64 = f.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                violation(
                    format!("{TELEMETRY_FILE}:{lineno}.{}", names[i]),
                    format!("invalid real {f:?}"),
                )
            })?;
            columns[i].push(v);
            count += 1;
        }
        if count != names.len() {
            return Err(violation(format!("{TELEMETRY_FILE}:{lineno}"), "too few columns"));
        }
        rows += 1;
    }
    if rows != total {
        return Err(violation(
            TELEMETRY_FILE,
            format!("expected {total} rows, found {rows}"),
        ));
    }
    Ok(columns)
}
