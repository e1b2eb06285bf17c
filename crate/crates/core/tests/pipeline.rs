use wdkg::graph::{load_kg, save_kg};
use wdkg::linkpred::{cosine_matrix, evaluate_view, mask_edges, sample_negatives};
use wdkg::select::{
    association_matrix, combine_similarity, greedy_select, rank_features, union_adjacency, RegressorSpec,
    SimilaritySource,
};
use wdkg::stream::{embed_kg, embed_view, load_checkpoint, save_checkpoint, train, Checkpoint, StreamConfig};
use wdkg::synth::{generate, SynthConfig};

fn small() -> (SynthConfig, StreamConfig) {
    let synth = SynthConfig {
        n_nodes: 12,
        n_edges: 16,
        n_slices: 3,
        tc_samples: 40,
        ..SynthConfig::default()
    };
    let stream = StreamConfig {
        embed_dim: 8,
        channels: vec![1, 2, 2, 2, 2, 2, 2],
        attention_dim: 4,
        epochs: 3,
        batch_size: 4,
        ..StreamConfig::default()
    };
    (synth, stream)
}

#[test]
fn kg_survives_disk_round_trip() {
    let (synth, _) = small();
    let kg = generate(&synth).unwrap().kg;
    let dir = tempfile::tempdir().unwrap();
    save_kg(&kg, dir.path()).unwrap();
    let back = load_kg(dir.path()).unwrap();
    assert_eq!(back.n_nodes(), kg.n_nodes());
    assert_eq!(back.slices().len(), kg.slices().len());
    for v in 0..kg.n_nodes() {
        assert_eq!(back.full_series(v), kg.full_series(v));
    }
}

#[test]
fn synth_to_selection() {
    let (synth, stream) = small();
    let s = generate(&synth).unwrap();
    let kg = &s.kg;
    let view = mask_edges(kg, 0.1, 1).unwrap();
    let view = sample_negatives(kg, &view, 2, 1).unwrap();
    let (params, report) = train(kg, &view, &stream).unwrap();
    assert_eq!(report.loss.len(), stream.epochs);
    assert!(report.loss.iter().all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint {
        config: stream.clone(),
        n_nodes: kg.n_nodes(),
        params,
        training: report,
        mask: None,
    };
    save_checkpoint(&ckpt, dir.path()).unwrap();
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded.params.tensors(), ckpt.params.tensors());

    let z = embed_view(kg, &view, &loaded.config, &loaded.params).unwrap();
    let sims: Vec<_> = z.iter().map(|z| cosine_matrix(z).matrix).collect();
    let eval = evaluate_view(&view, &sims).unwrap();
    assert_eq!(eval.slices.len(), kg.slices().len());
    let auc = eval.micro.auc.unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let z = embed_kg(kg, &loaded.config, &loaded.params).unwrap();
    let sims: Vec<_> = z.iter().map(|z| cosine_matrix(z).matrix).collect();
    let omega = association_matrix(
        &combine_similarity(&sims, SimilaritySource::default()).unwrap(),
        &union_adjacency(kg),
    )
    .unwrap();
    let table = rank_features(&omega, s.truth.kpi_node).unwrap();
    assert_eq!(table.rows.len(), kg.n_nodes() - 1);
    let series: Vec<Vec<f64>> = (0..kg.n_nodes()).map(|v| kg.full_series(v)).collect();
    let spec = RegressorSpec {
        epochs: 5,
        ..RegressorSpec::default()
    };
    let picked = greedy_select(&table, &series, 0.5, &spec).unwrap();
    assert!(!picked.selected.is_empty());
    assert!(picked.selected.iter().all(|v| *v != s.truth.kpi_node));
    assert_eq!(picked.fits.len(), picked.selected.len());
}
