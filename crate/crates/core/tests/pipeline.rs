use std::fs;
use std::path::Path;

use recipro::config::ExperimentConfig;
use recipro::error::Error;
use recipro::pipeline::{global_method_name, run_pipeline, seed_dir, RunOptions, PERSONALIZED_METHOD};

fn small(workdir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.num_companies = 60;
    cfg.synth.num_seekers = 300;
    cfg.synth.exposures_per_company = 60;
    cfg.meta.num_trees = 25;
    cfg.eval.folds = 2;
    cfg.eval.seeds = vec![4];
    cfg.workdir = workdir.to_path_buf();
    cfg
}

fn one_thread() -> RunOptions {
    RunOptions::default()
}

fn method_names(report: &recipro::eval::EvaluationReport) -> Vec<String> {
    report.methods.iter().map(|m| m.method.clone()).collect()
}

#[test]
fn report_covers_baselines_every_global_alpha_and_personalized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = run_pipeline(&cfg, &one_thread()).unwrap();
    let mut expected: Vec<String> = ["scout-only", "reply-only", "multiplication", "harmonic-mean", "dmp"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    expected.extend(cfg.eval.global_alphas.iter().map(|&a| global_method_name(a)));
    expected.push(PERSONALIZED_METHOD.to_string());
    expected.push("oracle".to_string());
    assert_eq!(method_names(&out.median), expected);

    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,segment,ndcg_at_k,num_companies"));
    assert_eq!(lines.count(), expected.len() * 4);
    for m in &out.median.methods {
        assert!((0.0..=1.0).contains(&m.overall));
        let counted: usize = m.segments.iter().map(|s| s.1).sum();
        assert_eq!(counted, m.overall_companies);
    }
    let trace = fs::read_to_string(seed_dir(dir.path(), 4).join("trace.csv")).unwrap();
    let folds = cfg.eval.folds;
    let rows = folds * cfg.eval.global_alphas.len() + folds * cfg.eval.segment_alphas.len() * 3;
    assert_eq!(trace.lines().count(), rows + 1);
}

#[test]
fn single_alpha_grid_gives_one_global_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.eval.global_alphas = vec![0.0];
    let out = run_pipeline(&cfg, &one_thread()).unwrap();
    let globals: Vec<_> = out
        .median
        .methods
        .iter()
        .filter(|m| m.method.starts_with("bob-global"))
        .collect();
    assert_eq!(globals.len(), 1);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("bob-global-0.00,")).count(), 4);
}

#[test]
fn fresh_runs_and_thread_counts_agree_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&small(a.path()), &one_thread()).unwrap();
    run_pipeline(&small(b.path()), &one_thread()).unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "report.csv"), read(b.path(), "report.csv"));
    let seed = seed_dir(Path::new(""), 4);
    let per_seed = seed.join("report.csv");
    assert_eq!(
        read(a.path(), per_seed.to_str().unwrap()),
        read(b.path(), per_seed.to_str().unwrap())
    );

    let before = read(a.path(), "report.csv");
    let threaded = RunOptions {
        threads: 4,
        ..RunOptions::default()
    };
    run_pipeline(&small(a.path()), &threaded).unwrap();
    assert_eq!(read(a.path(), "report.csv"), before);
}

fn model_dirs(seed_dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(seed_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("models-") || n.starts_with("meta-") || n.starts_with("data-"))
        .collect();
    v.sort();
    v
}

#[test]
fn eval_only_changes_reuse_trained_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_pipeline(&cfg, &one_thread()).unwrap();
    let sd = seed_dir(dir.path(), 4);
    let dirs = model_dirs(&sd);
    let models = sd.join(dirs.iter().find(|d| d.starts_with("models-")).unwrap());
    let stamp = fs::metadata(models.join("scout.model")).unwrap().modified().unwrap();

    let mut changed = cfg.clone();
    changed.eval.k = 5;
    let out = run_pipeline(&changed, &one_thread()).unwrap();
    assert_eq!(out.median.k, 5);
    assert_eq!(model_dirs(&sd), dirs);
    assert_eq!(
        fs::metadata(models.join("scout.model")).unwrap().modified().unwrap(),
        stamp
    );

    let mut retrain = cfg.clone();
    retrain.learner.epochs += 1;
    run_pipeline(&retrain, &one_thread()).unwrap();
    assert_eq!(model_dirs(&sd).iter().filter(|d| d.starts_with("models-")).count(), 2);
}

#[test]
fn cached_rerun_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let first = run_pipeline(&cfg, &one_thread()).unwrap();
    let bytes = fs::read(dir.path().join("report.csv")).unwrap();
    let second = run_pipeline(&cfg, &one_thread()).unwrap();
    assert_eq!(first.median, second.median);
    assert_eq!(fs::read(dir.path().join("report.csv")).unwrap(), bytes);
}

#[test]
fn medians_span_all_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.eval.seeds = vec![4, 5, 6];
    cfg.eval.global_alphas = vec![0.0, 1.0];
    cfg.eval.segment_alphas = vec![0.0, 0.5];
    let out = run_pipeline(&cfg, &one_thread()).unwrap();
    assert_eq!(out.seeds.len(), 3);
    for (i, m) in out.median.methods.iter().enumerate() {
        let mut v: Vec<f64> = out.seeds.iter().map(|s| s.report.methods[i].overall).collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(m.overall, v[1], "{}", m.method);
    }
    let only = run_pipeline(
        &cfg,
        &RunOptions {
            seed_override: Some(5),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(only.seeds.len(), 1);
    assert_eq!(only.median.methods, out.seeds[1].report.methods);
}

#[test]
fn stage_failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.synth.scout_scale = -1e6;
    let err = run_pipeline(&cfg, &one_thread()).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "train-directional"),
        other => panic!("untagged error {other}"),
    }
    assert!(err.to_string().contains("train-directional"));
}
