use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wdkg::fsutil::write_atomic;
use wdkg::graph::{load_kg, save_kg, WirelessKG, KG_FILE};
use wdkg::linkpred::{
    correlation_matrix, cosine_matrix, evaluate_view, mask_edges, sample_negatives, MaskedView, MetricsReport,
    ReferenceRow, ViewEvaluation, REFERENCE_ROW,
};
use wdkg::select::{
    association_matrix, combine_similarity, compression_ratio, cost_report, fit_regressor, greedy_select,
    rank_features, union_adjacency, CostReport, SimilaritySource,
};
use wdkg::stream::{
    embed_kg, embed_view, load_checkpoint, save_checkpoint, train_from, Checkpoint, MaskSpec, StreamParams,
    MANIFEST_FILE,
};
use wdkg::synth::generate;

use crate::config::RunConfig;
use crate::error::{require, CliError};
use crate::plot;

pub const TRUTH_FILE: &str = "truth.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CURVE_PLOT: &str = "training_curve.svg";
pub const RANKING_PLOT: &str = "feature_ranking.svg";

/// Default artifact locations under `run.out`.
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn kg(&self) -> PathBuf {
        self.root.join("kg")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval").join(REPORT_FILE)
    }
    pub fn select(&self) -> PathBuf {
        self.root.join("select")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_atomic(path, text.as_bytes()).map_err(|(p, e)| CliError::io(&p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Invalid(format!("{}: `{}`: {}", path.display(), e.path(), e.inner())))
}

fn open_kg(dir: &Path) -> Result<WirelessKG, CliError> {
    require(&dir.join(KG_FILE))?;
    Ok(load_kg(dir)?)
}

fn open_model(dir: &Path, kg: &WirelessKG) -> Result<Checkpoint, CliError> {
    require(&dir.join(MANIFEST_FILE))?;
    let ckpt = load_checkpoint(dir)?;
    if ckpt.n_nodes != kg.n_nodes() {
        return Err(CliError::Invalid(format!(
            "model {} was trained on {} nodes but the KG has {}",
            dir.display(),
            ckpt.n_nodes,
            kg.n_nodes()
        )));
    }
    Ok(ckpt)
}

fn masked_view(kg: &WirelessKG, mask: &MaskSpec) -> Result<MaskedView, CliError> {
    let view = mask_edges(kg, mask.mask_ratio, mask.seed)?;
    Ok(sample_negatives(kg, &view, mask.neg_ratio, mask.seed)?)
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = generate(&config.synth)?;
    save_kg(&s.kg, out)?;
    write_json(&out.join(TRUTH_FILE), &s.truth)?;
    eprintln!(
        "synth: {} nodes, {} slices, {} base edges -> {}",
        s.kg.n_nodes(),
        s.kg.slices().len(),
        s.truth.base_edges.len(),
        out.display()
    );
    Ok(())
}

pub fn train(config: &RunConfig, kg_dir: &Path, out: &Path) -> Result<(), CliError> {
    let kg = open_kg(kg_dir)?;
    let mask = MaskSpec {
        mask_ratio: config.mask.ratio,
        neg_ratio: config.mask.neg_ratio,
        seed: config.mask.seed,
    };
    let view = masked_view(&kg, &mask)?;
    let stream = &config.stream;
    stream.validate(kg.n_nodes())?;
    let started = Instant::now();
    let (params, training) = train_from(&kg, &view, stream, StreamParams::init(stream), |epoch, loss, f1| {
        eprintln!(
            "train: epoch {}/{} loss {loss:.4} train-F1 {f1:.4} ({:.1}s)",
            epoch + 1,
            stream.epochs,
            started.elapsed().as_secs_f64()
        )
    })?;
    let ckpt = Checkpoint {
        config: stream.clone(),
        n_nodes: kg.n_nodes(),
        params,
        training,
        mask: Some(mask),
    };
    save_checkpoint(&ckpt, out)?;
    eprintln!("train: {} parameters -> {}", ckpt.params.n_scalars(), out.display());
    Ok(())
}

/// Overrides for the evaluation mask; unset fields fall back to the mask the
/// model was trained under, then to the run config.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaskOverride {
    pub ratio: Option<f64>,
    pub neg: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mask: MaskSpec,
    /// False when the test pairs may overlap edges seen in training.
    pub matches_training_mask: bool,
    pub heterogeneous: bool,
    pub stream: ViewEvaluation,
    /// Pearson correlation of raw telemetry scored the same way.
    pub baseline: ViewEvaluation,
    pub published_reference: ReferenceRow,
}

fn metrics_line(name: &str, m: &MetricsReport) -> String {
    let auc = m.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
    format!(
        "{name:<22} acc {:.4}  precision {:.4}  recall {:.4}  F1 {:.4}  AUC {auc}",
        m.accuracy, m.precision, m.recall, m.f1
    )
}

pub fn eval(
    config: &RunConfig,
    kg_dir: &Path,
    model_dir: &Path,
    over: MaskOverride,
    out: &Path,
) -> Result<EvalReport, CliError> {
    let kg = open_kg(kg_dir)?;
    let ckpt = open_model(model_dir, &kg)?;
    let base = ckpt.mask.unwrap_or(MaskSpec {
        mask_ratio: config.mask.ratio,
        neg_ratio: config.mask.neg_ratio,
        seed: config.mask.seed,
    });
    let mask = MaskSpec {
        mask_ratio: over.ratio.unwrap_or(base.mask_ratio),
        neg_ratio: over.neg.unwrap_or(base.neg_ratio),
        seed: over.seed.unwrap_or(base.seed),
    };
    let view = masked_view(&kg, &mask)?;
    let z = embed_view(&kg, &view, &ckpt.config, &ckpt.params)?;
    let sims: Vec<_> = z.iter().map(|z| cosine_matrix(z).matrix).collect();
    let stream = evaluate_view(&view, &sims)?;
    let corr: Vec<_> = kg.slices().iter().map(|s| correlation_matrix(s.data())).collect();
    let baseline = evaluate_view(&view, &corr)?;
    let report = EvalReport {
        mask,
        matches_training_mask: ckpt.mask == Some(mask),
        heterogeneous: ckpt.config.heterogeneous,
        stream,
        baseline,
        published_reference: REFERENCE_ROW,
    };
    write_json(out, &report)?;
    if !report.matches_training_mask {
        eprintln!("eval: warning: mask differs from the training mask; held-out edges may have been seen in training");
    }
    let model = if report.heterogeneous { "STREAM" } else { "STREAM-homo" };
    println!("{}", metrics_line(&format!("{model} (micro)"), &report.stream.micro));
    println!(
        "{}",
        metrics_line(&format!("{model} (macro)"), &report.stream.macro_avg)
    );
    println!("{}", metrics_line("correlation (micro)", &report.baseline.micro));
    let r = REFERENCE_ROW;
    println!(
        "published reference, different data, comparison only: acc {:.3}  F1 {:.3}  AUC {:.3}",
        r.accuracy, r.f1, r.auc
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStep {
    pub feature: String,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorCost {
    #[serde(flatten)]
    pub cost: CostReport,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub kpi: String,
    pub threshold: f64,
    pub reached: bool,
    pub achieved: f64,
    pub selected: Vec<String>,
    pub steps: Vec<FitStep>,
    pub n_candidates: usize,
    /// Percent, two decimals.
    pub compression_ratio: f64,
    pub similarity: SimilaritySource,
    /// Regressor on every candidate versus on the selected features.
    pub raw: RegressorCost,
    pub distilled: RegressorCost,
}

#[derive(Serialize)]
struct Timing {
    selection_s: f64,
    raw_fit_s: f64,
}

pub fn select(
    config: &RunConfig,
    kg_dir: &Path,
    model_dir: &Path,
    kpi_name: &str,
    fit: f64,
    out: &Path,
) -> Result<SelectReport, CliError> {
    if !(0.0..=1.0).contains(&fit) {
        return Err(CliError::Invalid(format!("--fit must be in [0,1], got {fit}")));
    }
    let kg = open_kg(kg_dir)?;
    let ckpt = open_model(model_dir, &kg)?;
    let kpi = kg
        .node_by_name(kpi_name)
        .ok_or_else(|| CliError::Invalid(format!("no node named {kpi_name:?} in {}", kg_dir.display())))?
        .id;
    let name = |v: usize| kg.nodes()[v].name.clone();
    let spec = &config.select.regressor;

    let started = Instant::now();
    let z = embed_kg(&kg, &ckpt.config, &ckpt.params)?;
    let sims: Vec<_> = z.iter().map(|z| cosine_matrix(z).matrix).collect();
    let c = combine_similarity(&sims, config.select.similarity)?;
    let omega = association_matrix(&c, &union_adjacency(&kg))?;
    let table = rank_features(&omega, kpi)?;
    let series: Vec<Vec<f64>> = (0..kg.n_nodes()).map(|v| kg.full_series(v)).collect();
    let picked = greedy_select(&table, &series, fit, spec)?;
    let selection_s = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let all: Vec<&[f64]> = table.ids().map(|v| series[v].as_slice()).collect();
    let raw_r2 = fit_regressor(&all, &series[kpi], spec)?;
    let raw_fit_s = started.elapsed().as_secs_f64();

    let ratio = compression_ratio(picked.selected.len(), table.rows.len())?;
    let report = SelectReport {
        kpi: kpi_name.to_string(),
        threshold: fit,
        reached: picked.reached,
        achieved: picked.achieved,
        selected: picked.selected.iter().map(|&v| name(v)).collect(),
        steps: picked
            .selected
            .iter()
            .zip(&picked.fits)
            .map(|(&v, &r2)| FitStep { feature: name(v), r2 })
            .collect(),
        n_candidates: table.rows.len(),
        compression_ratio: (ratio * 100.0).round() / 100.0,
        similarity: config.select.similarity,
        raw: RegressorCost {
            cost: cost_report(spec, table.rows.len()),
            r2: raw_r2,
        },
        distilled: RegressorCost {
            cost: cost_report(spec, picked.selected.len()),
            r2: picked.achieved,
        },
    };

    ensure_dir(out)?;
    let mut ranking = String::from("rank,id,name,impact\n");
    for (i, &(v, score)) in table.rows.iter().enumerate() {
        writeln!(ranking, "{},{v},{},{score}", i + 1, name(v)).expect("string write");
    }
    write_file(&out.join(RANKING_FILE), &ranking)?;

    let mut features = String::from("tick");
    for &v in picked.selected.iter().chain([&kpi]) {
        write!(features, ",{}", name(v)).expect("string write");
    }
    features.push('\n');
    let ticks = kg
        .slices()
        .iter()
        .flat_map(|s| (0..s.len()).map(move |t| s.t_start() + t));
    for (row, tick) in ticks.enumerate() {
        write!(features, "{tick}").expect("string write");
        for &v in picked.selected.iter().chain([&kpi]) {
            write!(features, ",{}", series[v][row]).expect("string write");
        }
        features.push('\n');
    }
    write_file(&out.join(FEATURES_FILE), &features)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_json(&out.join(TIMING_FILE), &Timing { selection_s, raw_fit_s })?;

    println!(
        "select: {} of {} candidates, R² {:.4} (threshold {fit}{}), compression {:.2}%",
        report.selected.len(),
        report.n_candidates,
        report.achieved,
        if report.reached { "" } else { ", NOT reached" },
        report.compression_ratio
    );
    println!("select: {}", report.selected.join(", "));
    println!(
        "select: regressor params {} -> {}, FLOPs {} -> {}",
        report.raw.cost.params, report.distilled.cost.params, report.raw.cost.flops, report.distilled.cost.flops
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub id: usize,
    pub name: String,
    pub impact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub final_train_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub heterogeneous: bool,
    pub stream_micro: MetricsReport,
    pub stream_macro: MetricsReport,
    pub baseline_micro: MetricsReport,
    pub published_reference: ReferenceRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub training: TrainingSummary,
    pub link_prediction: LinkSummary,
    pub feature_selection: SelectReport,
    pub ranking: Vec<RankRow>,
}

fn read_ranking(path: &Path) -> Result<Vec<RankRow>, CliError> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize| CliError::Invalid(format!("{}:{line}: malformed ranking row", path.display()));
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let mut cols = line.splitn(4, ',');
            let mut next = || cols.next().ok_or_else(|| bad(i + 1));
            let rank = next()?.parse().map_err(|_| bad(i + 1))?;
            let id = next()?.parse().map_err(|_| bad(i + 1))?;
            let name = next()?.to_string();
            let impact = next()?.parse().map_err(|_| bad(i + 1))?;
            Ok(RankRow { rank, id, name, impact })
        })
        .collect()
}

pub fn report(run: &RunLayout, out: &Path) -> Result<Summary, CliError> {
    let model = run.model();
    require(&model.join(MANIFEST_FILE))?;
    let eval: EvalReport = read_json(&run.eval())?;
    let picked: SelectReport = read_json(&run.select().join(REPORT_FILE))?;
    let ranking = read_ranking(&run.select().join(RANKING_FILE))?;
    let training = load_checkpoint(&model)?.training;

    ensure_dir(out)?;
    let mut curves = String::from("epoch,loss,train_f1\n");
    for (e, (l, f)) in training.loss.iter().zip(&training.train_f1).enumerate() {
        writeln!(curves, "{},{l},{f}", e + 1).expect("string write");
    }
    write_file(&out.join(CURVES_FILE), &curves)?;
    write_file(
        &out.join(CURVE_PLOT),
        &plot::line_panels(
            "training",
            &[("loss", &training.loss), ("train F1", &training.train_f1)],
        ),
    )?;
    let bars: Vec<(String, f64, bool)> = ranking
        .iter()
        .map(|r| (r.name.clone(), r.impact, picked.selected.contains(&r.name)))
        .collect();
    write_file(
        &out.join(RANKING_PLOT),
        &plot::bar_chart(&format!("impact on {}", picked.kpi), &bars),
    )?;

    let summary = Summary {
        training: TrainingSummary {
            epochs: training.loss.len(),
            final_loss: training.loss.last().copied(),
            final_train_f1: training.train_f1.last().copied(),
        },
        link_prediction: LinkSummary {
            heterogeneous: eval.heterogeneous,
            stream_micro: eval.stream.micro,
            stream_macro: eval.stream.macro_avg,
            baseline_micro: eval.baseline.micro,
            published_reference: eval.published_reference,
        },
        feature_selection: picked,
        ranking,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    eprintln!(
        "report: {SUMMARY_FILE}, {CURVES_FILE}, {CURVE_PLOT}, {RANKING_PLOT} -> {}",
        out.display()
    );
    Ok(summary)
}
