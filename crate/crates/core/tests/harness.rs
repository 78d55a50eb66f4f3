use std::time::Instant;

use noisemod::data::{read_metrics, Split, SyntheticSpec, METRICS_HEADER};
use noisemod::harness::{
    bench, prepare_data, run_experiment, sweep_beta, train, DatasetKind, ExperimentConfig, ModulationSpace,
    Regime,
};
use noisemod::models::Architecture;

fn cfg(outdir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.data.dataset = DatasetKind::Synthetic;
    c.data.synthetic = SyntheticSpec { classes: 4, count: 160, shape: [1, 8, 8], noise: 0.05 };
    c.data.synthetic_test_count = 60;
    c.model.arch = Architecture::Fcnn6;
    c.model.widths = Some(vec![4, 4, 6, 6, 8]);
    c.train.epochs = 2;
    c.train.batch_size = 32;
    c.output.outdir = outdir.to_path_buf();
    c
}

fn quiet(c: &ExperimentConfig) -> noisemod::harness::TrainOutcome {
    let data = prepare_data(c).unwrap();
    train(c, &data, None, &mut |_| Ok(())).unwrap()
}

#[test]
fn beta_one_is_standard_training_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = cfg(dir.path());
    a.train.regime = Regime::Standard;
    let mut b = a.clone();
    b.train.regime = Regime::NoiseMod;
    b.modulation.beta = 1.0;
    let (ra, rb) = (quiet(&a), quiet(&b));
    assert_eq!(ra.last.params, rb.last.params);
    b.modulation.space = ModulationSpace::Pixel;
    assert_eq!(quiet(&b).last.params, ra.last.params);
    let strip = |rows: &[noisemod::data::MetricsRow]| -> Vec<_> {
        rows.iter().map(|r| (r.epoch, r.split, r.accuracy, r.loss)).collect()
    };
    assert_eq!(strip(&ra.history), strip(&rb.history));
}

#[test]
fn zero_epsilon_adversarial_training_is_standard_training() {
    let dir = tempfile::tempdir().unwrap();
    let a = cfg(dir.path());
    let mut b = a.clone();
    b.train.regime = Regime::AdvTrain;
    b.attack.epsilon = 0.0;
    let (ra, rb) = (quiet(&a), quiet(&b));
    assert_eq!(ra.last.params, rb.last.params);
    assert_eq!(rb.backward_passes, rb.steps * (b.attack.steps as u64 + 1));
    assert_eq!(ra.backward_passes, ra.steps);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(dir.path());
    c.train.regime = Regime::NoiseMod;
    let (a, b) = (quiet(&c), quiet(&c));
    assert_eq!(a.last.params, b.last.params);
    c.modulation.space = ModulationSpace::Pixel;
    let (a, b) = (quiet(&c), quiet(&c));
    assert_eq!(a.last.params, b.last.params);
    c.train.regime = Regime::MultApprox;
    assert_eq!(quiet(&c).last.params, quiet(&c).last.params);
}

#[test]
fn experiment_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(dir.path());
    c.train.vii_every_epoch = true;
    let start = Instant::now();
    let report = run_experiment(&c, &prepare_data(&c).unwrap()).unwrap();
    assert!(start.elapsed().as_secs() < 60);
    let run = dir.path().join(c.experiment_id());
    assert_eq!(report.dir, run);
    for f in ["config.echo", "metrics.csv", "checkpoint.nmck", "vii.csv", "summary.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let text = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    let rows = read_metrics(run.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| (r.split == Split::Test) == r.vii.is_some()));
    let echoed = ExperimentConfig::load(run.join("config.echo"), noisemod::harness::Profile::Paper).unwrap();
    assert_eq!(echoed.hash(), c.hash());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], c.hash());
    assert!((0.0..=1.0).contains(&summary["mean_vii"].as_f64().unwrap()));
    let vii = std::fs::read_to_string(run.join("vii.csv")).unwrap();
    assert_eq!(vii.lines().count(), 1 + 60 + 1);
}

#[test]
fn sweep_and_bench_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(dir.path());
    c.train.epochs = 1;
    let data = prepare_data(&c).unwrap();
    let (rows, path) = sweep_beta(&c, &data, &[0.5, 1.0], &mut |_| {}).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.regime == Regime::NoiseMod));
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 3);
    let (report, _) = bench(&c, &data, 1).unwrap();
    assert_eq!(report.row(Regime::Standard).unwrap().backward_per_step, 1.0);
    assert_eq!(report.row(Regime::NoiseMod).unwrap().backward_per_step, 1.0);
    assert_eq!(report.row(Regime::AdvTrain).unwrap().backward_per_step, 8.0);
}
