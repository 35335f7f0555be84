//! End-to-end experiment: synthesize → split → segment → directional models
//! → baselines → DMP → BoB per global alpha → per-segment tuning →
//! personalized BoB → report, for every seed in the config.
//!
//! Stage outputs are cached under the workdir in directories named by a hash
//! of the config sections they depend on, so editing the `[eval]` section
//! never retrains the directional, DMP or meta models.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::aggregate::{AggregatedScorer, Aggregator};
use crate::config::{hash_parts, ExperimentConfig};
use crate::domain::{assign_segments, quantile_boundary, sparsity, split_by_time, Dataset, Segment, SegmentAssignment};
use crate::error::{Error, Result, StageContext};
use crate::eval::{
    build_candidates, cross_validate, evaluate_method, fit_bob, score_ranker, select_alpha, write_trace_csv,
    BobSettings, CandidateSet, CrossFitModels, CvEntry, DirectionalModels, EvaluationReport, MethodResult, TuneMode,
};
use crate::learners::{train_dmp_model, MfModel};
use crate::meta::{FeatureContext, GbdtModel, MetaScorer};
use crate::pseudo::AlphaPolicy;
use crate::synth::{generate_ground_truth, simulate_log, MarketGroundTruth};
use crate::util::median;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Evaluation workers; 1 keeps everything on the calling thread.
    pub threads: usize,
    /// Replaces the config's seed list with a single seed.
    pub seed_override: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            seed_override: None,
        }
    }
}

/// Results of one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub report: EvaluationReport,
    /// Global alpha chosen by cross-validation.
    pub global_policy: AlphaPolicy,
    /// Per-segment alphas chosen by cross-validation; used by `bob-personalized`.
    pub segment_policy: AlphaPolicy,
    pub train_sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub seeds: Vec<SeedOutcome>,
    /// Per-method, per-segment medians across seeds.
    pub median: EvaluationReport,
}

pub fn global_method_name(alpha: f64) -> String {
    format!("bob-global-{alpha:.2}")
}

pub const PERSONALIZED_METHOD: &str = "bob-personalized";
pub const DMP_METHOD: &str = "dmp";
pub const ORACLE_METHOD: &str = "oracle";

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

/// Writes through a temporary file and renames, so a crashed run never leaves
/// a truncated artifact that a later run would mistake for a cache hit.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Opens an artifact, reporting which subcommand produces it when missing.
pub fn open_artifact(path: &Path, producer: &str) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        }),
        Err(e) => Err(e.into()),
    }
}

pub fn read_dataset(path: &Path, dims: (u32, u32), producer: &str) -> Result<Dataset> {
    Dataset::read_csv(open_artifact(path, producer)?, &path.display().to_string(), Some(dims))
}

pub fn read_mf(path: &Path, producer: &str) -> Result<MfModel> {
    MfModel::load(open_artifact(path, producer)?, &path.display().to_string())
}

pub fn read_gbdt(path: &Path, producer: &str) -> Result<GbdtModel> {
    GbdtModel::load(open_artifact(path, producer)?, &path.display().to_string())
}

fn cached_mf(path: &Path, train: impl FnOnce() -> Result<MfModel>) -> Result<MfModel> {
    if path.exists() {
        return read_mf(path, "run");
    }
    let m = train()?;
    write_atomic(path, |w| m.save(w))?;
    Ok(m)
}

fn cached_gbdt(path: &Path, train: impl FnOnce() -> Result<GbdtModel>) -> Result<GbdtModel> {
    if path.exists() {
        return read_gbdt(path, "run");
    }
    let m = train()?;
    write_atomic(path, |w| m.save(w))?;
    Ok(m)
}

fn write_cv(path: &Path, entries: &[CvEntry]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "alpha,fold,overall,high,middle,low")?;
        for e in entries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.alpha, e.fold, e.overall, e.segments[0], e.segments[1], e.segments[2]
            )?;
        }
        Ok(())
    })
}

fn read_cv(path: &Path) -> Result<Vec<CvEntry>> {
    use std::io::BufRead;
    let source = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in open_artifact(path, "run")?.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let num = |k: usize| -> Result<f64> {
            f.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(source.clone(), i + 1, "invalid cv row"))
        };
        out.push(CvEntry {
            alpha: num(0)?,
            fold: num(1)? as usize,
            overall: num(2)?,
            segments: [num(3)?, num(4)?, num(5)?],
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

type Writer<'a> = dyn Fn(&mut BufWriter<File>) -> Result<()> + 'a;

/// Generated market, its log and the train/test view of it.
pub struct DataStage {
    pub truth: MarketGroundTruth,
    pub events: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub segments: SegmentAssignment,
    pub candidates: CandidateSet,
}

pub fn data_stage(cfg: &ExperimentConfig, seed: u64, dir: Option<&Path>) -> Result<DataStage> {
    let synth = cfg.synth_for(seed);
    let truth = generate_ground_truth(&synth);
    let dims = (synth.num_companies, synth.num_seekers);
    let events = match dir.map(|d| d.join("events.csv")) {
        Some(p) if p.exists() => read_dataset(&p, dims, "synth")?,
        other => {
            let events = simulate_log(&truth, &synth)?;
            if let Some(p) = other {
                write_atomic(&p, |w| events.write_csv(w))?;
            }
            events
        }
    };
    let boundary = quantile_boundary(&events, cfg.train_fraction)?;
    let split = split_by_time(&events, boundary)?;
    let segments = assign_segments(&split.train);
    let candidates = build_candidates(&split.test)?;
    if let Some(d) = dir {
        let files: [(&str, &Writer); 4] = [
            ("train.csv", &|w| split.train.write_csv(w)),
            ("test.csv", &|w| split.test.write_csv(w)),
            ("segments.csv", &|w| segments.write_csv(w)),
            ("truth.csv", &|w| truth.write_csv(w, candidates.pairs())),
        ];
        for (name, write) in files {
            let p = d.join(name);
            if !p.exists() {
                write_atomic(&p, write)?;
            }
        }
    }
    Ok(DataStage {
        truth,
        events,
        train: split.train,
        test: split.test,
        segments,
        candidates,
    })
}

/// Learner, meta and evaluation settings of one seed's BoB fits.
pub fn bob_settings(cfg: &ExperimentConfig, seed: u64, threads: usize) -> BobSettings {
    BobSettings {
        learner: cfg.learner_for(seed),
        meta: cfg.meta_for(seed),
        pseudo_negatives_per_positive: cfg.pseudo_negatives_per_positive,
        cross_fit_folds: cfg.cross_fit_folds,
        k: cfg.eval.k,
        threads,
    }
}

fn union_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = a.iter().chain(b).copied().collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Runs every stage for one seed, caching under `seed_dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, seed_dir: &Path, threads: usize) -> Result<SeedOutcome> {
    let k = cfg.eval.k;
    let data_dir = seed_dir.join(format!("data-{}", cfg.data_key(seed)));
    let data = data_stage(cfg, seed, Some(&data_dir)).stage("synth")?;
    let train_sparsity = sparsity(&data.train).stage("split")?;

    let model_dir = seed_dir.join(format!("models-{}", cfg.model_key(seed)));
    let learner = cfg.learner_for(seed);
    let models = DirectionalModels {
        scout: cached_mf(&model_dir.join("scout.model"), || {
            crate::learners::train_scout_model(&data.train, &learner)
        })
        .stage("train-directional")?,
        reply: cached_mf(&model_dir.join("reply.model"), || {
            crate::learners::train_reply_model(&data.train, &learner)
        })
        .stage("train-directional")?,
    };
    let dmp = cached_mf(&model_dir.join("dmp.model"), || train_dmp_model(&data.train, &learner)).stage("train-dmp")?;

    let mut methods: Vec<MethodResult> = Vec::new();
    for kind in Aggregator::ALL {
        let scorer = AggregatedScorer {
            scout: &models.scout,
            reply: &models.reply,
            kind,
        };
        methods.push(
            evaluate_method(
                kind.name(),
                score_ranker(&scorer),
                &data.candidates,
                &data.segments,
                k,
                threads,
            )
            .stage("evaluate")?,
        );
    }
    methods.push(
        evaluate_method(
            DMP_METHOD,
            score_ranker(&dmp),
            &data.candidates,
            &data.segments,
            k,
            threads,
        )
        .stage("evaluate")?,
    );

    let settings = bob_settings(cfg, seed, threads);
    let meta_dir = seed_dir.join(format!("meta-{}", cfg.meta_key(seed)));
    let grid = union_grid(&cfg.eval.global_alphas, &cfg.eval.segment_alphas);
    let cv_key = hash_parts(&[&format!("{grid:?}"), &cfg.eval.folds.to_string(), &k.to_string()]);
    let cv_path = meta_dir.join(format!("cv-{cv_key}.csv"));
    let entries = if cv_path.exists() {
        read_cv(&cv_path).stage("tune-alpha")?
    } else {
        let e = cross_validate(&data.train, cfg.eval.folds, &grid, &settings).stage("tune-alpha")?;
        write_cv(&cv_path, &e).stage("tune-alpha")?;
        e
    };
    let (global_policy, mut traces) = select_alpha(&entries, &cfg.eval.global_alphas, TuneMode::Global);
    let (segment_policy, seg_trace) = select_alpha(&entries, &cfg.eval.segment_alphas, TuneMode::PerSegment);
    traces.extend(seg_trace);

    let ctx = FeatureContext::new(&data.train, &models.scout, &models.reply, &data.segments);
    let oof = CrossFitModels::train(&data.train, &settings).stage("train-meta")?;
    let mut run_bob = |name: String, policy: AlphaPolicy| -> Result<()> {
        let file = match policy {
            AlphaPolicy::Global(a) => format!("global-{a}.gbdt"),
            AlphaPolicy::PerSegment([h, m, l]) => format!("segment-{h}-{m}-{l}.gbdt"),
        };
        let model = cached_gbdt(&meta_dir.join(file), || {
            fit_bob(&data.train, &oof, &data.segments, &policy, &settings)
        })
        .stage("train-meta")?;
        let scorer = MetaScorer {
            model: &model,
            ctx: &ctx,
        };
        methods.push(
            evaluate_method(
                &name,
                score_ranker(&scorer),
                &data.candidates,
                &data.segments,
                k,
                threads,
            )
            .stage("evaluate")?,
        );
        Ok(())
    };
    for &alpha in &cfg.eval.global_alphas {
        run_bob(global_method_name(alpha), AlphaPolicy::Global(alpha))?;
    }
    run_bob(PERSONALIZED_METHOD.to_string(), segment_policy)?;

    methods.push(
        evaluate_method(
            ORACLE_METHOD,
            score_ranker(&data.truth),
            &data.candidates,
            &data.segments,
            k,
            threads,
        )
        .stage("evaluate")?,
    );

    let report = EvaluationReport { k, methods, traces };
    write_atomic(&seed_dir.join("report.csv"), |w| report.write_csv(w)).stage("report")?;
    write_atomic(&seed_dir.join("trace.csv"), |w| write_trace_csv(w, &report.traces)).stage("report")?;
    write_atomic(&seed_dir.join("alpha-global.csv"), |w| global_policy.write_csv(w)).stage("report")?;
    write_atomic(&seed_dir.join("alpha-per-segment.csv"), |w| segment_policy.write_csv(w)).stage("report")?;
    Ok(SeedOutcome {
        seed,
        report,
        global_policy,
        segment_policy,
        train_sparsity,
    })
}

/// Per-method, per-segment medians across seed reports (methods in first-report order).
pub fn median_report(reports: &[EvaluationReport]) -> EvaluationReport {
    let Some(first) = reports.first() else {
        return EvaluationReport::default();
    };
    let methods = first
        .methods
        .iter()
        .map(|m| {
            let rows: Vec<&MethodResult> = reports.iter().filter_map(|r| r.method(&m.method)).collect();
            let med = |f: &dyn Fn(&MethodResult) -> f64| {
                median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(0.0)
            };
            let seg = |s: Segment| {
                (
                    med(&|r| r.segments[s.index()].0),
                    med(&|r| r.segments[s.index()].1 as f64).round() as usize,
                )
            };
            MethodResult {
                method: m.method.clone(),
                overall: med(&|r| r.overall),
                overall_companies: med(&|r| r.overall_companies as f64).round() as usize,
                segments: [seg(Segment::High), seg(Segment::Middle), seg(Segment::Low)],
                companies_without_positive: med(&|r| r.companies_without_positive as f64).round() as usize,
            }
        })
        .collect();
    EvaluationReport {
        k: first.k,
        methods,
        traces: Vec::new(),
    }
}

pub fn seed_dir(workdir: &Path, seed: u64) -> PathBuf {
    workdir.join(format!("seed-{seed}"))
}

/// Runs every configured seed and writes the median report to `workdir/report.csv`.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let seeds = match opts.seed_override {
        Some(s) => vec![s],
        None => cfg.eval.seeds.clone(),
    };
    fs::create_dir_all(&cfg.workdir)?;
    write_atomic(&cfg.workdir.join("config.ini"), |w| {
        Ok(w.write_all(cfg.to_text().as_bytes())?)
    })?;
    let mut outcomes = Vec::with_capacity(seeds.len());
    for seed in seeds {
        outcomes.push(run_seed(cfg, seed, &seed_dir(&cfg.workdir, seed), opts.threads.max(1))?);
    }
    let median = median_report(&outcomes.iter().map(|o| o.report.clone()).collect::<Vec<_>>());
    write_atomic(&cfg.workdir.join("report.csv"), |w| median.write_csv(w)).stage("report")?;
    Ok(PipelineOutcome {
        seeds: outcomes,
        median,
    })
}
