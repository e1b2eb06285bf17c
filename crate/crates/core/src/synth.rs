//! Seeded generator of wireless-data KGs with recoverable ground truth.
//!
//! The base topology is drawn once. Every slice then drops each non-KPI base
//! edge independently with `edge_flip_prob`, and its telemetry follows a
//! linear structural model over a fixed generation order: parentless nodes are
//! stationary AR(1) series, every other node is a weighted sum of its
//! in-slice parents plus white noise, and the KPI is a fixed linear map of
//! its designated parents plus noise.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::graph::{Edge, GraphSlice, Layer, NodeMeta, NodeType, RelationType, WirelessKG};
use crate::tensor::Tensor;

const AR_COEFF: f64 = 0.9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    ConfigInvalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub n_types: usize,
    /// Causal, explicit, implicit weights.
    pub relation_mix: [f64; 3],
    pub n_edges: usize,
    pub n_slices: usize,
    pub tc_samples: usize,
    pub edge_flip_prob: f64,
    pub noise_sigma: f64,
    pub kpi_node: usize,
    pub kpi_parents: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_nodes: 82,
            n_types: 9,
            relation_mix: [70.0, 35.0, 28.0],
            n_edges: 133,
            n_slices: 30,
            tc_samples: 100,
            edge_flip_prob: 0.05,
            noise_sigma: 0.3,
            kpi_node: 0,
            kpi_parents: vec![1, 2, 3, 4],
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be at least 2, got {}", self.n_nodes));
        }
        if !(1..=NodeType::ALL.len()).contains(&self.n_types) {
            return bad(format!("n_types must be in 1..=9, got {}", self.n_types));
        }
        if self.relation_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.relation_mix.iter().sum::<f64>() <= 0.0
        {
            return bad("relation_mix needs non-negative weights with a positive sum".into());
        }
        if self.n_slices == 0 || self.tc_samples == 0 {
            return bad("n_slices and tc_samples must be positive".into());
        }
        if !(0.0..1.0).contains(&self.edge_flip_prob) {
            return bad(format!("edge_flip_prob must be in [0,1), got {}", self.edge_flip_prob));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma));
        }
        if self.kpi_node >= self.n_nodes {
            return bad(format!("kpi_node {} out of range", self.kpi_node));
        }
        let parents: BTreeSet<_> = self.kpi_parents.iter().copied().collect();
        if parents.len() != self.kpi_parents.len() {
            return bad("kpi_parents must be distinct".into());
        }
        if parents.contains(&self.kpi_node) || parents.iter().any(|&p| p >= self.n_nodes) {
            return bad("kpi_parents must be valid ids other than kpi_node".into());
        }
        let n = self.n_nodes;
        let max_edges = n * (n - 1) / 2;
        if self.n_edges > max_edges {
            return bad(format!("n_edges {} exceeds n(n-1)/2 = {max_edges}", self.n_edges));
        }
        let free_pairs = (n - 1) * (n - 2) / 2;
        if self.n_edges < parents.len() || self.n_edges - parents.len() > free_pairs {
            return bad(format!(
                "n_edges {} cannot hold {} KPI edges plus the remaining edges among non-KPI nodes",
                self.n_edges,
                parents.len()
            ));
        }
        Ok(())
    }
}

/// Latent structure behind a generated KG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub base_edges: Vec<(usize, usize, RelationType)>,
    /// Influence weight of each base edge, aligned with `base_edges`.
    pub edge_weights: Vec<f64>,
    pub kpi_node: usize,
    pub kpi_parents: Vec<usize>,
    pub kpi_coefficients: Vec<f64>,
    /// Generation order; edges point from earlier to later nodes.
    pub order: Vec<usize>,
}

/// A generated KG together with the latent truth it was drawn from.
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub kg: WirelessKG,
    pub truth: GroundTruth,
}

impl Synthesized {
    /// Latent base edge set and the KPI's true parents.
    pub fn ground_truth(&self) -> (BTreeSet<Edge>, &[usize]) {
        let edges = self
            .truth
            .base_edges
            .iter()
            .map(|&(a, b, r)| Edge::new(a, b, r).expect("no self-loops"))
            .collect();
        (edges, &self.truth.kpi_parents)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Largest-remainder apportionment of `total` items by `weights`.
fn apportion(total: usize, weights: &[f64; 3]) -> [usize; 3] {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut rest: Vec<usize> = (0..3).collect();
    rest.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in rest.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

fn edge_weight<R: Rng>(relation: RelationType, rng: &mut R) -> f64 {
    let (lo, hi) = match relation {
        RelationType::Causal => (0.7, 1.0),
        RelationType::Explicit => (0.4, 0.7),
        RelationType::Implicit => (0.15, 0.4),
    };
    rng.random_range(lo..hi)
}

pub fn generate(config: &SynthConfig) -> Result<Synthesized, SynthError> {
    config.validate()?;
    let n = config.n_nodes;
    let kpi = config.kpi_node;
    let mut rng = stream(config.seed, 0);

    let nodes: Vec<NodeMeta> = (0..n)
        .map(|id| {
            let layer = Layer::ALL[rng.random_range(0..Layer::ALL.len())];
            let adjustable = rng.random_bool(0.5);
            if id == kpi {
                return NodeMeta {
                    id,
                    name: "PHY_throughput".into(),
                    node_type: NodeType::Throughput,
                    layer: Layer::Phy,
                    adjustable: false,
                };
            }
            let node_type = NodeType::ALL[id % config.n_types];
            NodeMeta {
                id,
                name: format!("{}_{}_{:02}", layer.as_str().to_lowercase(), node_type.slug(), id),
                node_type,
                layer,
                adjustable,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..n).filter(|&i| i != kpi).collect();
    order.shuffle(&mut rng);
    order.push(kpi);
    let mut rank = vec![0; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }

    // Base topology: the KPI edges first, then uniform pairs among the rest.
    let mut pairs: Vec<(usize, usize)> = config.kpi_parents.iter().map(|&p| (p.min(kpi), p.max(kpi))).collect();
    let mut taken: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
    let others: Vec<usize> = (0..n).filter(|&i| i != kpi).collect();
    while pairs.len() < config.n_edges {
        let a = others[rng.random_range(0..others.len())];
        let b = others[rng.random_range(0..others.len())];
        if a != b && taken.insert((a.min(b), a.max(b))) {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let counts = apportion(config.n_edges, &config.relation_mix);
    let mut labels: Vec<RelationType> = RelationType::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&r, c)| std::iter::repeat_n(r, c))
        .collect();
    labels.shuffle(&mut rng);
    let weights: Vec<f64> = labels.iter().map(|&r| edge_weight(r, &mut rng)).collect();
    let coeff_dist = Uniform::new(1.0, 2.0).expect("valid range");
    let kpi_coefficients: Vec<f64> = config.kpi_parents.iter().map(|_| coeff_dist.sample(&mut rng)).collect();

    let base_edges: Vec<(usize, usize, RelationType)> =
        pairs.iter().zip(&labels).map(|(&(a, b), &r)| (a, b, r)).collect();
    let pinned: Vec<bool> = pairs.iter().map(|&(a, b)| a == kpi || b == kpi).collect();

    let tc = config.tc_samples;
    let mut slices = Vec::with_capacity(config.n_slices);
    for m in 0..config.n_slices {
        let mut srng = stream(config.seed, 1 + m as u64);
        let present: Vec<bool> = pinned
            .iter()
            .map(|&pin| pin || !srng.random_bool(config.edge_flip_prob))
            .collect();

        // parents[v] = (parent, weight) for present edges pointing into v
        let mut parents: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (k, &(a, b, _)) in base_edges.iter().enumerate() {
            if !present[k] || a == kpi || b == kpi {
                continue;
            }
            let (from, to) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
            parents[to].push((from, weights[k]));
        }

        let mut data = vec![0.0; n * tc];
        let noise = |r: &mut ChaCha8Rng| -> f64 {
            let z: f64 = StandardNormal.sample(r);
            config.noise_sigma * z
        };
        for &v in &order {
            let row_start = v * tc;
            if v == kpi && !config.kpi_parents.is_empty() {
                for t in 0..tc {
                    let mut x = 0.0;
                    for (&p, &c) in config.kpi_parents.iter().zip(&kpi_coefficients) {
                        x += c * data[p * tc + t];
                    }
                    data[row_start + t] = x + noise(&mut srng);
                }
            } else if parents[v].is_empty() {
                let innov = (1.0 - AR_COEFF * AR_COEFF).sqrt();
                let mut x: f64 = StandardNormal.sample(&mut srng);
                for t in 0..tc {
                    if t > 0 {
                        let e: f64 = StandardNormal.sample(&mut srng);
                        x = AR_COEFF * x + innov * e;
                    }
                    data[row_start + t] = x;
                }
            } else {
                let norm = parents[v].iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                for t in 0..tc {
                    let mut x = 0.0;
                    for &(p, w) in &parents[v] {
                        x += w * data[p * tc + t];
                    }
                    data[row_start + t] = x / norm + noise(&mut srng);
                }
            }
        }

        let edges = base_edges.iter().zip(&present).filter(|(_, &p)| p).map(|(&e, _)| e);
        let slice = GraphSlice::new(m, edges, Tensor::new(vec![n, tc], data).expect("shape"), m * tc)
            .map_err(|e| SynthError::ConfigInvalid(e.to_string()))?;
        slices.push(slice);
    }

    let kg = WirelessKG::new(nodes, slices, tc).map_err(|e| SynthError::ConfigInvalid(e.to_string()))?;
    Ok(Synthesized {
        kg,
        truth: GroundTruth {
            base_edges,
            edge_weights: weights,
            kpi_node: kpi,
            kpi_parents: config.kpi_parents.clone(),
            kpi_coefficients,
            order,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_nodes: 20,
            n_edges: 25,
            n_slices: 4,
            tc_samples: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn apportion_matches_table_counts() {
        assert_eq!(apportion(133, &[70.0, 35.0, 28.0]), [70, 35, 28]);
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]).iter().sum::<usize>(), 10);
    }

    #[test]
    fn default_scale() {
        let s = generate(&SynthConfig::default()).unwrap();
        assert_eq!(s.kg.n_nodes(), 82);
        assert_eq!(s.kg.slices().len(), 30);
        assert_eq!(s.truth.base_edges.len(), 133);
        let n2 = 82.0 * 82.0;
        for slice in s.kg.slices() {
            // nonzero entries of the symmetric adjacency as a share of N²
            let density = 2.0 * slice.edges().len() as f64 / n2;
            assert!((0.02..0.05).contains(&density), "density {density}");
        }
        let mut by_rel = [0; 3];
        for &(_, _, r) in &s.truth.base_edges {
            by_rel[r.index()] += 1;
        }
        assert_eq!(by_rel, [70, 35, 28]);
    }

    #[test]
    fn edge_count_within_loose_bounds() {
        let c = SynthConfig::default();
        let s = generate(&c).unwrap();
        let lo = c.n_edges as f64 * (1.0 - c.edge_flip_prob) * 0.5;
        let hi = c.n_edges as f64 * 1.5;
        for slice in s.kg.slices() {
            let e = slice.edges().len() as f64;
            assert!(e >= lo && e <= hi);
        }
    }

    #[test]
    fn edgeless_config_gives_ar_series() {
        let c = SynthConfig {
            n_edges: 0,
            kpi_parents: vec![],
            ..small()
        };
        let s = generate(&c).unwrap();
        assert!(s.kg.slices().iter().all(|sl| sl.edges().is_empty()));
        // lag-1 autocorrelation of an AR(1) with coefficient 0.9 is high
        let x = s.kg.full_series(3);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!(cov / var > 0.6);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.kg, b.kg);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.kg, c.kg);
    }

    #[test]
    fn ground_truth_covers_persistent_edges() {
        let s = generate(&SynthConfig::default()).unwrap();
        let (base, parents) = s.ground_truth();
        assert_eq!(parents.len(), 4);
        let mut common: BTreeSet<Edge> = s.kg.slices()[0].edges().iter().copied().collect();
        for sl in s.kg.slices() {
            let here: BTreeSet<Edge> = sl.edges().iter().copied().collect();
            common = common.intersection(&here).copied().collect();
            assert!(here.is_subset(&base));
        }
        assert!(common.is_subset(&base));
    }

    #[test]
    fn no_flips_reproduces_base() {
        let s = generate(&SynthConfig {
            edge_flip_prob: 0.0,
            ..small()
        })
        .unwrap();
        let (base, _) = s.ground_truth();
        for sl in s.kg.slices() {
            let here: BTreeSet<Edge> = sl.edges().iter().copied().collect();
            assert_eq!(here, base);
        }
    }

    #[test]
    fn kpi_edges_never_flip() {
        let s = generate(&SynthConfig::default()).unwrap();
        for sl in s.kg.slices() {
            for &p in &s.truth.kpi_parents {
                assert!(sl.has_edge(p, s.truth.kpi_node));
            }
        }
    }

    #[test]
    fn noiseless_kpi_is_exact_linear_map() {
        let s = generate(&SynthConfig {
            noise_sigma: 0.0,
            ..small()
        })
        .unwrap();
        let t = &s.truth;
        let kpi = s.kg.full_series(t.kpi_node);
        let cols: Vec<Vec<f64>> = t.kpi_parents.iter().map(|&p| s.kg.full_series(p)).collect();
        for (i, y) in kpi.iter().enumerate() {
            let pred: f64 = cols.iter().zip(&t.kpi_coefficients).map(|(c, b)| b * c[i]).sum();
            assert!((y - pred).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let cases = [
            SynthConfig {
                n_edges: 82 * 81 / 2 + 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                kpi_parents: vec![1, 1],
                ..SynthConfig::default()
            },
            SynthConfig {
                kpi_parents: vec![0],
                ..SynthConfig::default()
            },
            SynthConfig {
                edge_flip_prob: 1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                n_edges: 2,
                ..SynthConfig::default()
            },
        ];
        for c in cases {
            assert!(matches!(generate(&c), Err(SynthError::ConfigInvalid(_))), "{c:?}");
        }
    }

    fn abs_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        (cov / (va * vb).sqrt()).abs()
    }

    #[test]
    fn adjacent_pairs_more_correlated_sign_test() {
        // One-sided sign test over 30 seeds: adjacent pair beats a random
        // non-adjacent pair far more often than chance.
        let mut wins = 0;
        let seeds = 30;
        for seed in 0..seeds {
            let s = generate(&SynthConfig { seed, ..small() }).unwrap();
            let sl = &s.kg.slices()[0];
            let mut rng = stream(seed, 99);
            let e = sl.edges()[rng.random_range(0..sl.edges().len())];
            let (a, b) = loop {
                let a = rng.random_range(0..sl.n_nodes());
                let b = rng.random_range(0..sl.n_nodes());
                if a != b && !sl.has_edge(a, b) {
                    break (a, b);
                }
            };
            if abs_corr(sl.series(e.src), sl.series(e.dst)) > abs_corr(sl.series(a), sl.series(b)) {
                wins += 1;
            }
        }
        // P(X ≥ 21 | n=30, p=0.5) ≈ 0.021
        assert!(wins >= 21, "wins = {wins}");
    }
}
