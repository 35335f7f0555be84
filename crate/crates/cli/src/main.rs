//! `recipro`: stage-by-stage and end-to-end reciprocal recommendation experiments.
//!
//! Every subcommand reads and writes plain files in the working directory, so
//! stages can be rerun or inspected individually. `run` does everything for
//! every configured seed with content-keyed caching.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use recipro::aggregate::{AggregatedScorer, Aggregator};
use recipro::config::ExperimentConfig;
use recipro::domain::{assign_segments, quantile_boundary, split_by_time, Dataset, SegmentAssignment};
use recipro::error::StageContext;
use recipro::eval::{
    build_candidates, evaluate_method, pseudo_labels, score_ranker, tune_alpha, write_method_rows, write_trace_csv,
    CrossFitModels, EvaluationReport, MethodResult, TuneMode, REPORT_HEADER,
};
use recipro::learners::{train_dmp_model, train_reply_model, train_scout_model, MfModel, PairScoreModel};
use recipro::meta::{train_meta, FeatureContext, MetaScorer};
use recipro::pipeline::{
    bob_settings, global_method_name, open_artifact, read_dataset, read_gbdt, read_mf, run_pipeline, write_atomic,
    RunOptions, DMP_METHOD, ORACLE_METHOD,
};
use recipro::pseudo::{AlphaPolicy, PseudoLabelSet};
use recipro::synth::{generate_ground_truth, simulate_log, TruthTable};

#[derive(Parser)]
#[command(name = "recipro", version, about = "Reciprocal match recommendation experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `[paths] workdir`.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Evaluation worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market: events.csv and truth.csv.
    Synth {
        /// Write probabilities for every pair instead of test candidates only.
        #[arg(long)]
        full_truth: bool,
    },
    /// Time-split events.csv into train.csv and test.csv; assign segments.
    Split,
    /// Train the scout and reply models.
    TrainDirectional,
    /// Train the direct match model.
    TrainDmp,
    /// Build pseudo-match labels for the meta-model.
    BuildPseudo {
        /// Global blend weight.
        #[arg(long, conflicts_with = "policy")]
        alpha: Option<f64>,
        /// Alpha policy CSV written by `tune-alpha`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Fit the meta-model to pseudo.csv.
    TrainMeta,
    /// Cross-validate the blend weight on the train window.
    TuneAlpha {
        #[arg(long, default_value = "global")]
        mode: TuneMode,
    },
    /// Evaluate methods on the test window, one CSV fragment per method.
    Evaluate {
        /// Methods to evaluate: aggregator names, dmp, bob or oracle. Defaults to
        /// the aggregators, oracle, and dmp/bob when their models exist.
        #[arg(long = "method")]
        methods: Vec<String>,
        /// Report name of the meta-model method.
        #[arg(long, default_value = "bob")]
        bob_name: String,
    },
    /// Merge evaluated fragments into report.csv and print the table.
    Report,
    /// The full experiment for every configured seed.
    Run,
}

struct Ctx {
    cfg: ExperimentConfig,
    dir: PathBuf,
    seed: u64,
    threads: usize,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn dims(&self) -> (u32, u32) {
        (self.cfg.synth.num_companies, self.cfg.synth.num_seekers)
    }

    fn dataset(&self, name: &str, producer: &str) -> recipro::Result<Dataset> {
        read_dataset(&self.path(name), self.dims(), producer)
    }

    fn segments(&self) -> recipro::Result<SegmentAssignment> {
        let p = self.path(SEGMENTS);
        SegmentAssignment::read_csv(open_artifact(&p, "split")?, &p.display().to_string())
    }

    fn model(&self, name: &str, producer: &str) -> recipro::Result<MfModel> {
        read_mf(&self.path(name), producer)
    }
}

const EVENTS: &str = "events.csv";
const TRUTH: &str = "truth.csv";
const TRAIN: &str = "train.csv";
const TEST: &str = "test.csv";
const SEGMENTS: &str = "segments.csv";
const SCOUT_MODEL: &str = "scout.model";
const REPLY_MODEL: &str = "reply.model";
const DMP_MODEL: &str = "dmp.model";
const PSEUDO: &str = "pseudo.csv";
const META_MODEL: &str = "meta.gbdt";
const METHODS_DIR: &str = "methods";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            ExperimentConfig::parse(&text, &p.display().to_string())?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &args.workdir {
        cfg.workdir = dir.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    if cli.global.threads == 0 {
        bail!("--threads must be at least 1");
    }
    if let Command::Run = cli.command {
        return run(cfg, &cli.global);
    }
    let seed = cli.global.seed_override.unwrap_or(cfg.eval.seeds[0]);
    let ctx = Ctx {
        dir: cfg.workdir.clone(),
        cfg,
        seed,
        threads: cli.global.threads,
    };
    fs::create_dir_all(&ctx.dir).with_context(|| format!("creating {}", ctx.dir.display()))?;
    match cli.command {
        Command::Synth { full_truth } => synth(&ctx, full_truth).stage("synth")?,
        Command::Split => split(&ctx).stage("split")?,
        Command::TrainDirectional => train_directional(&ctx).stage("train-directional")?,
        Command::TrainDmp => train_dmp(&ctx).stage("train-dmp")?,
        Command::BuildPseudo { alpha, policy } => build_pseudo(&ctx, alpha, policy.as_deref()).stage("build-pseudo")?,
        Command::TrainMeta => train_meta_cmd(&ctx).stage("train-meta")?,
        Command::TuneAlpha { mode } => tune(&ctx, mode).stage("tune-alpha")?,
        Command::Evaluate { methods, bob_name } => evaluate(&ctx, &methods, &bob_name).stage("evaluate")?,
        Command::Report => report(&ctx).stage("report")?,
        Command::Run => unreachable!("handled above"),
    }
    Ok(())
}

fn run(cfg: ExperimentConfig, args: &GlobalArgs) -> Result<()> {
    let opts = RunOptions {
        threads: args.threads,
        seed_override: args.seed_override,
    };
    let out = run_pipeline(&cfg, &opts)?;
    for s in &out.seeds {
        println!(
            "seed {}: train sparsity {:.5}, tuned {} / {}",
            s.seed,
            s.train_sparsity,
            policy_label(&s.global_policy),
            policy_label(&s.segment_policy)
        );
    }
    println!();
    print!("{}", out.median.to_table());
    println!("\nreport: {}", cfg.workdir.join("report.csv").display());
    Ok(())
}

fn policy_label(p: &AlphaPolicy) -> String {
    match p {
        AlphaPolicy::Global(a) => format!("global alpha {a}"),
        AlphaPolicy::PerSegment([h, m, l]) => format!("segment alphas High {h}, Middle {m}, Low {l}"),
    }
}

fn synth(ctx: &Ctx, full_truth: bool) -> recipro::Result<()> {
    let synth = ctx.cfg.synth_for(ctx.seed);
    let truth = generate_ground_truth(&synth);
    let events = simulate_log(&truth, &synth)?;
    write_atomic(&ctx.path(EVENTS), |w| events.write_csv(w))?;
    if full_truth {
        let pairs = (0..synth.num_companies).flat_map(|c| {
            (0..synth.num_seekers).map(move |j| (recipro::domain::CompanyId(c), recipro::domain::SeekerId(j)))
        });
        write_atomic(&ctx.path(TRUTH), |w| truth.write_csv(w, pairs))?;
    } else {
        let boundary = quantile_boundary(&events, ctx.cfg.train_fraction)?;
        let candidates = build_candidates(&split_by_time(&events, boundary)?.test)?;
        write_atomic(&ctx.path(TRUTH), |w| truth.write_csv(w, candidates.pairs()))?;
    }
    println!("wrote {} events to {}", events.len(), ctx.path(EVENTS).display());
    Ok(())
}

fn split(ctx: &Ctx) -> recipro::Result<()> {
    let events = ctx.dataset(EVENTS, "synth")?;
    let boundary = quantile_boundary(&events, ctx.cfg.train_fraction)?;
    let split = split_by_time(&events, boundary)?;
    let segments = assign_segments(&split.train);
    write_atomic(&ctx.path(TRAIN), |w| split.train.write_csv(w))?;
    write_atomic(&ctx.path(TEST), |w| split.test.write_csv(w))?;
    write_atomic(&ctx.path(SEGMENTS), |w| segments.write_csv(w))?;
    println!(
        "train {} events, test {} events, boundary timestamp {}",
        split.train.len(),
        split.test.len(),
        split.boundary_timestamp
    );
    Ok(())
}

fn train_directional(ctx: &Ctx) -> recipro::Result<()> {
    let train = ctx.dataset(TRAIN, "split")?;
    let cfg = ctx.cfg.learner_for(ctx.seed);
    let scout = train_scout_model(&train, &cfg)?;
    let reply = train_reply_model(&train, &cfg)?;
    write_atomic(&ctx.path(SCOUT_MODEL), |w| scout.save(w))?;
    write_atomic(&ctx.path(REPLY_MODEL), |w| reply.save(w))?;
    println!("wrote {} and {}", SCOUT_MODEL, REPLY_MODEL);
    Ok(())
}

fn train_dmp(ctx: &Ctx) -> recipro::Result<()> {
    let train = ctx.dataset(TRAIN, "split")?;
    let dmp = train_dmp_model(&train, &ctx.cfg.learner_for(ctx.seed))?;
    write_atomic(&ctx.path(DMP_MODEL), |w| dmp.save(w))?;
    println!("wrote {DMP_MODEL}");
    Ok(())
}

fn build_pseudo(ctx: &Ctx, alpha: Option<f64>, policy_file: Option<&Path>) -> recipro::Result<()> {
    let policy = match (alpha, policy_file) {
        (Some(a), _) => AlphaPolicy::Global(a),
        (None, Some(p)) => AlphaPolicy::read_csv(open_artifact(p, "tune-alpha")?, &p.display().to_string())?,
        (None, None) => AlphaPolicy::Global(0.25),
    };
    policy.validate()?;
    let train = ctx.dataset(TRAIN, "split")?;
    let segments = ctx.segments()?;
    let settings = bob_settings(&ctx.cfg, ctx.seed, ctx.threads);
    let oof = CrossFitModels::train(&train, &settings)?;
    let labels = pseudo_labels(&train, &oof, &segments, &policy, &settings)?;
    write_atomic(&ctx.path(PSEUDO), |w| labels.write_csv(w))?;
    println!(
        "wrote {} pseudo-labelled pairs ({})",
        labels.len(),
        policy_label(&policy)
    );
    Ok(())
}

fn train_meta_cmd(ctx: &Ctx) -> recipro::Result<()> {
    let p = ctx.path(PSEUDO);
    let labels = PseudoLabelSet::read_csv(open_artifact(&p, "build-pseudo")?, &p.display().to_string())?;
    let train = ctx.dataset(TRAIN, "split")?;
    let segments = ctx.segments()?;
    let settings = bob_settings(&ctx.cfg, ctx.seed, ctx.threads);
    let oof = CrossFitModels::train(&train, &settings)?;
    let features = FeatureContext::new(&train, &oof.scout, &oof.reply, &segments);
    let fit = train_meta(&labels, &features, &settings.meta)?;
    write_atomic(&ctx.path(META_MODEL), |w| fit.model.save(w))?;
    println!(
        "wrote {META_MODEL}: {} trees, final training MSE {:.6}",
        fit.model.trees.len(),
        fit.mse_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn tune(ctx: &Ctx, mode: TuneMode) -> recipro::Result<()> {
    let train = ctx.dataset(TRAIN, "split")?;
    let grid = match mode {
        TuneMode::Global => &ctx.cfg.eval.global_alphas,
        TuneMode::PerSegment => &ctx.cfg.eval.segment_alphas,
    };
    let settings = bob_settings(&ctx.cfg, ctx.seed, ctx.threads);
    let (policy, trace) = tune_alpha(&train, ctx.cfg.eval.folds, mode, grid, &settings)?;
    write_atomic(&ctx.path(&format!("alpha-{}.csv", mode.name())), |w| {
        policy.write_csv(w)
    })?;
    write_atomic(&ctx.path(&format!("trace-{}.csv", mode.name())), |w| {
        write_trace_csv(w, &trace)
    })?;
    println!("selected {}", policy_label(&policy));
    Ok(())
}

fn evaluate(ctx: &Ctx, requested: &[String], bob_name: &str) -> recipro::Result<()> {
    let test = ctx.dataset(TEST, "split")?;
    let segments = ctx.segments()?;
    let candidates = build_candidates(&test)?;
    let k = ctx.cfg.eval.k;
    let methods: Vec<String> = if requested.is_empty() {
        let mut m: Vec<String> = Aggregator::ALL.iter().map(|a| a.name().to_string()).collect();
        if ctx.path(DMP_MODEL).exists() {
            m.push(DMP_METHOD.to_string());
        }
        if ctx.path(META_MODEL).exists() {
            m.push("bob".to_string());
        }
        m.push(ORACLE_METHOD.to_string());
        m
    } else {
        requested.to_vec()
    };
    let eval = |name: &str, model: &(dyn PairScoreModel + Sync)| -> recipro::Result<MethodResult> {
        evaluate_method(name, score_ranker(model), &candidates, &segments, k, ctx.threads)
    };
    let mut results = Vec::new();
    for method in &methods {
        let result = match method.as_str() {
            DMP_METHOD => eval(DMP_METHOD, &ctx.model(DMP_MODEL, "train-dmp")?)?,
            ORACLE_METHOD => {
                let p = ctx.path(TRUTH);
                let truth = TruthTable::read_csv(open_artifact(&p, "synth")?, &p.display().to_string(), ctx.dims())?;
                eval(ORACLE_METHOD, &truth)?
            }
            "bob" => {
                let model = read_gbdt(&ctx.path(META_MODEL), "train-meta")?;
                let train = ctx.dataset(TRAIN, "split")?;
                let scout = ctx.model(SCOUT_MODEL, "train-directional")?;
                let reply = ctx.model(REPLY_MODEL, "train-directional")?;
                let features = FeatureContext::new(&train, &scout, &reply, &segments);
                eval(
                    bob_name,
                    &MetaScorer {
                        model: &model,
                        ctx: &features,
                    },
                )?
            }
            other => {
                let kind: Aggregator = other.parse()?;
                let scout = ctx.model(SCOUT_MODEL, "train-directional")?;
                let reply = ctx.model(REPLY_MODEL, "train-directional")?;
                eval(
                    kind.name(),
                    &AggregatedScorer {
                        scout: &scout,
                        reply: &reply,
                        kind,
                    },
                )?
            }
        };
        let file = ctx.path(METHODS_DIR).join(format!("{}.csv", result.method));
        write_atomic(&file, |w| {
            use std::io::Write as _;
            writeln!(w, "{REPORT_HEADER}")?;
            write_method_rows(w, &result)
        })?;
        results.push(result);
    }
    print!(
        "{}",
        EvaluationReport {
            k,
            methods: results,
            traces: Vec::new()
        }
        .to_table()
    );
    Ok(())
}

/// Canonical row order; unknown methods follow alphabetically.
fn method_rank(name: &str, cfg: &ExperimentConfig) -> (usize, String) {
    let mut order: Vec<String> = Aggregator::ALL.iter().map(|a| a.name().to_string()).collect();
    order.push(DMP_METHOD.to_string());
    order.push("bob".to_string());
    order.extend(cfg.eval.global_alphas.iter().map(|&a| global_method_name(a)));
    order.push(recipro::pipeline::PERSONALIZED_METHOD.to_string());
    order.push(ORACLE_METHOD.to_string());
    let rank = order.iter().position(|m| m == name).unwrap_or(order.len());
    (rank, name.to_string())
}

fn report(ctx: &Ctx) -> recipro::Result<()> {
    let dir = ctx.path(METHODS_DIR);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(recipro::Error::MissingArtifact {
                path: dir,
                producer: "evaluate".into(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let mut methods = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let part = EvaluationReport::read_csv(
                open_artifact(&path, "evaluate")?,
                &path.display().to_string(),
                ctx.cfg.eval.k,
            )?;
            methods.extend(part.methods);
        }
    }
    methods.sort_by_key(|m| method_rank(&m.method, &ctx.cfg));
    let report = EvaluationReport {
        k: ctx.cfg.eval.k,
        methods,
        traces: Vec::new(),
    };
    write_atomic(&ctx.path("report.csv"), |w| report.write_csv(w))?;
    print!("{}", report.to_table());
    Ok(())
}
