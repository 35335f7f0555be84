//! Offline ranking evaluation: candidate sets from test-window exposures,
//! NDCG@k with binary match gains, per-segment aggregation, and
//! time-blocked cross-validation of the pseudo-label weight.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::domain::{assign_segments, split_by_time, CompanyId, Dataset, SeekerId, Segment, SegmentAssignment};
use crate::error::{Error, Result};
use crate::learners::{train_reply_model, train_scout_model, CrossFitModel, MfModel, PairScoreModel, TrainConfig};
use crate::meta::{train_meta, FeatureContext, GbdtConfig, GbdtModel, MetaScorer};
use crate::pseudo::{build_pseudo_labels, AlphaPolicy, PseudoLabelSet};
use crate::util::rank_descending;

/// An ordered list of seekers shown to one company.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub company: CompanyId,
    pub seekers: Vec<SeekerId>,
}

impl RankedList {
    pub fn new(company: CompanyId, seekers: Vec<SeekerId>) -> Result<Self> {
        let mut sorted = seekers.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::UnknownEntity(format!(
                "duplicate seeker in ranking for {company}"
            )));
        }
        Ok(RankedList { company, seekers })
    }
}

/// Test-window exposed seekers per company with binary match relevance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    /// Seekers in ascending id order; relevance is 1 if any test exposure of the pair matched.
    pub companies: BTreeMap<CompanyId, Vec<(SeekerId, bool)>>,
}

impl CandidateSet {
    pub fn num_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn num_with_positive(&self) -> usize {
        self.companies.values().filter(|c| c.iter().any(|&(_, r)| r)).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (CompanyId, SeekerId)> + '_ {
        self.companies
            .iter()
            .flat_map(|(&c, v)| v.iter().map(move |&(j, _)| (c, j)))
    }
}

pub fn build_candidates(test: &Dataset) -> Result<CandidateSet> {
    if test.is_empty() {
        return Err(Error::DegenerateSplit("empty test window".into()));
    }
    let mut per: BTreeMap<CompanyId, BTreeMap<SeekerId, bool>> = BTreeMap::new();
    for e in test.events() {
        let rel = per.entry(e.company).or_default().entry(e.seeker).or_insert(false);
        *rel |= e.match_label();
    }
    Ok(CandidateSet {
        companies: per.into_iter().map(|(c, m)| (c, m.into_iter().collect())).collect(),
    })
}

/// NDCG@k with gains taken from `relevance`; 0 when no item is relevant.
pub fn ndcg_at_k(ranking: &RankedList, relevance: &HashMap<SeekerId, bool>, k: usize) -> Result<f64> {
    let gains = ranking
        .seekers
        .iter()
        .map(|j| {
            relevance
                .get(j)
                .map(|&r| r as u8 as f64)
                .ok_or_else(|| Error::UnknownEntity(format!("{j} has no relevance label")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut ideal: Vec<f64> = relevance.values().map(|&r| r as u8 as f64).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    ndcg_from_gains(&gains, &ideal, k)
}

/// NDCG@k from gains in ranked order and the full pool of gains sorted descending.
pub fn ndcg_from_gains(ranked_gains: &[f64], ideal_gains: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    let dcg = |g: &[f64]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(i, &gain)| gain / ((i + 2) as f64).log2())
            .sum()
    };
    let idcg = dcg(ideal_gains);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(ranked_gains) / idcg)
}

/// Mean NDCG@k of one method, overall and per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: String,
    pub overall: f64,
    pub overall_companies: usize,
    /// Indexed by [`Segment::index`].
    pub segments: [(f64, usize); 3],
    /// Companies with candidates but no positive, excluded from the means.
    pub companies_without_positive: usize,
}

impl MethodResult {
    pub fn segment(&self, s: Segment) -> f64 {
        self.segments[s.index()].0
    }
}

/// Ranks each company's candidates with `rank` and averages NDCG@k over
/// companies that have at least one positive candidate. Companies are
/// processed on `threads` workers and merged in ascending id order.
pub fn evaluate_method<F>(
    method: &str,
    rank: F,
    candidates: &CandidateSet,
    segments: &SegmentAssignment,
    k: usize,
    threads: usize,
) -> Result<MethodResult>
where
    F: Fn(CompanyId, &[SeekerId]) -> Result<Vec<SeekerId>> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    let work: Vec<(&CompanyId, &Vec<(SeekerId, bool)>)> = candidates
        .companies
        .iter()
        .filter(|(_, v)| v.iter().any(|&(_, r)| r))
        .collect();
    let score_one = |(&c, cands): (&CompanyId, &Vec<(SeekerId, bool)>)| -> Result<(CompanyId, f64)> {
        let ids: Vec<SeekerId> = cands.iter().map(|&(j, _)| j).collect();
        let ranked = rank(c, &ids)?;
        let rel: HashMap<SeekerId, bool> = cands.iter().copied().collect();
        let list = RankedList::new(c, ranked)?;
        Ok((c, ndcg_at_k(&list, &rel, k)?))
    };
    let per_company: Vec<(CompanyId, f64)> = if threads <= 1 {
        work.into_iter().map(score_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| work.into_par_iter().map(score_one).collect::<Result<Vec<_>>>())?
    };

    let mut total = (0.0, 0usize);
    let mut seg = [(0.0, 0usize); 3];
    for (c, v) in &per_company {
        total.0 += v;
        total.1 += 1;
        let s = segments.get(*c).unwrap_or(Segment::Low).index();
        seg[s].0 += v;
        seg[s].1 += 1;
    }
    let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(MethodResult {
        method: method.to_string(),
        overall: mean(total),
        overall_companies: total.1,
        segments: seg.map(|p| (mean(p), p.1)),
        companies_without_positive: candidates.num_companies() - per_company.len(),
    })
}

/// Rank-by-score adapter for any pair model.
pub fn score_ranker<M: PairScoreModel + Sync + ?Sized>(
    model: &M,
) -> impl Fn(CompanyId, &[SeekerId]) -> Result<Vec<SeekerId>> + Sync + '_ {
    move |c, cands| {
        let scores = crate::learners::score_pairs(model, &cands.iter().map(|&j| (c, j)).collect::<Vec<_>>())?;
        Ok(rank_descending(cands, &scores))
    }
}

/// Per-method results plus tuning traces, with CSV and table renderings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    pub k: usize,
    pub methods: Vec<MethodResult>,
    pub traces: Vec<TraceRow>,
}

pub const REPORT_HEADER: &str = "method,segment,ndcg_at_k,num_companies";
pub const TRACE_HEADER: &str = "mode,segment,alpha,fold,validation_ndcg";

impl EvaluationReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for m in &self.methods {
            write_method_rows(&mut out, m)?;
        }
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_trace_csv(&mut out, &self.traces)
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let width = self.methods.iter().map(|m| m.method.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
            "method",
            format!("NDCG@{}", self.k),
            "High",
            "Middle",
            "Low",
            "companies"
        );
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}",
                m.method, m.overall, m.segments[0].0, m.segments[1].0, m.segments[2].0, m.overall_companies
            );
        }
        s
    }

    /// Parses a report CSV back into method results (traces are not included).
    pub fn read_csv<R: std::io::BufRead>(reader: R, source: &str, k: usize) -> Result<Self> {
        let mut methods: Vec<MethodResult> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(source, i + 1, "expected 4 fields"));
            }
            let v: f64 = f[2].parse().map_err(|_| Error::parse(source, i + 1, "invalid ndcg"))?;
            let n: usize = f[3]
                .parse()
                .map_err(|_| Error::parse(source, i + 1, "invalid company count"))?;
            if methods.last().is_none_or(|m| m.method != f[0]) {
                methods.push(MethodResult {
                    method: f[0].to_string(),
                    overall: 0.0,
                    overall_companies: 0,
                    segments: [(0.0, 0); 3],
                    companies_without_positive: 0,
                });
            }
            let m = methods.last_mut().expect("pushed above");
            match f[1] {
                "all" => {
                    m.overall = v;
                    m.overall_companies = n;
                }
                other => {
                    let s = Segment::parse(other).ok_or_else(|| Error::parse(source, i + 1, "invalid segment"))?;
                    m.segments[s.index()] = (v, n);
                }
            }
        }
        Ok(EvaluationReport {
            k,
            methods,
            traces: Vec::new(),
        })
    }
}

pub fn write_method_rows<W: Write>(out: &mut W, m: &MethodResult) -> Result<()> {
    writeln!(out, "{},all,{},{}", m.method, m.overall, m.overall_companies)?;
    for s in Segment::ALL {
        let (v, n) = m.segments[s.index()];
        writeln!(out, "{},{},{},{}", m.method, s, v, n)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Alpha tuning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMode {
    Global,
    PerSegment,
}

impl TuneMode {
    pub fn name(self) -> &'static str {
        match self {
            TuneMode::Global => "global",
            TuneMode::PerSegment => "per-segment",
        }
    }
}

impl std::str::FromStr for TuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(TuneMode::Global),
            "per-segment" => Ok(TuneMode::PerSegment),
            _ => Err(Error::Config(format!("unknown tuning mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub mode: TuneMode,
    /// `None` for the all-company score.
    pub segment: Option<Segment>,
    pub alpha: f64,
    pub fold: usize,
    /// NaN when the fold has no evaluable company in the segment.
    pub validation_ndcg: f64,
}

pub fn write_trace_csv<W: Write>(out: &mut W, rows: &[TraceRow]) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        let seg = r.segment.map_or("all", Segment::as_str);
        writeln!(
            out,
            "{},{},{},{},{}",
            r.mode.name(),
            seg,
            r.alpha,
            r.fold,
            r.validation_ndcg
        )?;
    }
    Ok(())
}

/// Learner, meta-model and evaluation settings shared by every BoB fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BobSettings {
    pub learner: TrainConfig,
    pub meta: GbdtConfig,
    /// Sampled unexposed pairs per matched exposure in the pseudo-label set.
    pub pseudo_negatives_per_positive: usize,
    /// Folds for the out-of-fold directional scores the meta-model trains on.
    pub cross_fit_folds: usize,
    pub k: usize,
    pub threads: usize,
}

/// Directional models trained on one window.
pub struct DirectionalModels {
    pub scout: MfModel,
    pub reply: MfModel,
}

impl DirectionalModels {
    pub fn train(train: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        Ok(DirectionalModels {
            scout: train_scout_model(train, cfg)?,
            reply: train_reply_model(train, cfg)?,
        })
    }
}

/// Out-of-fold directional scorers for the meta-model's training rows.
pub struct CrossFitModels {
    pub scout: CrossFitModel,
    pub reply: CrossFitModel,
}

impl CrossFitModels {
    pub fn train(train: &Dataset, settings: &BobSettings) -> Result<Self> {
        let folds = settings.cross_fit_folds;
        Ok(CrossFitModels {
            scout: CrossFitModel::train(train, folds, &settings.learner, train_scout_model)?,
            reply: CrossFitModel::train(train, folds, &settings.learner, train_reply_model)?,
        })
    }
}

/// Pseudo-labels of `train` under `policy`, predicted part from the out-of-fold scorers.
pub fn pseudo_labels(
    train: &Dataset,
    oof: &CrossFitModels,
    segments: &SegmentAssignment,
    policy: &AlphaPolicy,
    settings: &BobSettings,
) -> Result<PseudoLabelSet> {
    build_pseudo_labels(
        train,
        &oof.scout,
        &oof.reply,
        policy,
        segments,
        settings.pseudo_negatives_per_positive,
        settings.learner.rng_seed ^ 0xB0B,
    )
}

/// Builds pseudo-labels under `policy` and fits the meta-model. Both the
/// labels' predicted component and the training features use the
/// out-of-fold scorers; ranking later uses the full-data models.
pub fn fit_bob(
    train: &Dataset,
    oof: &CrossFitModels,
    segments: &SegmentAssignment,
    policy: &AlphaPolicy,
    settings: &BobSettings,
) -> Result<GbdtModel> {
    let labels = pseudo_labels(train, oof, segments, policy, settings)?;
    let ctx = FeatureContext::new(train, &oof.scout, &oof.reply, segments);
    Ok(train_meta(&labels, &ctx, &settings.meta)?.model)
}

/// Validation scores of one (alpha, fold) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub alpha: f64,
    pub fold: usize,
    pub overall: f64,
    /// NaN where no company of the segment was evaluable.
    pub segments: [f64; 3],
}

/// Splits `train` into `2 * folds` contiguous time blocks. Fold `f` fits on
/// blocks `0..folds + f` and validates on block `folds + f`.
pub fn time_folds(train: &Dataset, folds: usize) -> Result<Vec<(Dataset, Dataset)>> {
    if folds == 0 {
        return Err(Error::DegenerateFolds("at least one fold is required".into()));
    }
    let n = train.len();
    let blocks = 2 * folds;
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let fit_end = n * (folds + f) / blocks;
        let val_end = n * (folds + f + 1) / blocks;
        if fit_end == 0 || fit_end >= val_end || fit_end >= n {
            return Err(Error::DegenerateFolds(format!("fold {f} is empty")));
        }
        let boundary = train.events()[fit_end].timestamp;
        let window = train.slice(0..val_end);
        let split = split_by_time(&window, boundary).map_err(|e| Error::DegenerateFolds(format!("fold {f}: {e}")))?;
        out.push((split.train, split.test));
    }
    Ok(out)
}

/// Runs the BoB pipeline once per (fold, alpha) and records validation NDCG.
/// Segments are assigned from each fold's fitting window.
pub fn cross_validate(train: &Dataset, folds: usize, grid: &[f64], settings: &BobSettings) -> Result<Vec<CvEntry>> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if let Some(&bad) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidWeight(bad));
    }
    let mut entries = Vec::new();
    for (f, (fit, val)) in time_folds(train, folds)?.iter().enumerate() {
        let segments = assign_segments(fit);
        let models = DirectionalModels::train(fit, &settings.learner)
            .map_err(|e| Error::DegenerateFolds(format!("fold {f}: {e}")))?;
        let oof = CrossFitModels::train(fit, settings).map_err(|e| Error::DegenerateFolds(format!("fold {f}: {e}")))?;
        let ctx = FeatureContext::new(fit, &models.scout, &models.reply, &segments);
        let candidates = build_candidates(val)?;
        for &alpha in grid {
            let model = fit_bob(fit, &oof, &segments, &AlphaPolicy::Global(alpha), settings)?;
            let scorer = MetaScorer {
                model: &model,
                ctx: &ctx,
            };
            let r = evaluate_method(
                "bob",
                score_ranker(&scorer),
                &candidates,
                &segments,
                settings.k,
                settings.threads,
            )?;
            let seg = |s: Segment| {
                let (v, n) = r.segments[s.index()];
                if n == 0 {
                    f64::NAN
                } else {
                    v
                }
            };
            entries.push(CvEntry {
                alpha,
                fold: f,
                overall: if r.overall_companies == 0 { f64::NAN } else { r.overall },
                segments: [seg(Segment::High), seg(Segment::Middle), seg(Segment::Low)],
            });
        }
    }
    Ok(entries)
}

fn mean_defined(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Picks the grid value with the best mean score; ties go to the larger alpha.
fn argmax_alpha(grid: &[f64], score: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &a in grid {
        let s = score(a);
        if s > best.0 || (s == best.0 && a > best.1) {
            best = (s, a);
        }
    }
    best.1
}

/// Selects an alpha policy from cross-validation results restricted to `grid`,
/// returning the policy and its trace rows.
pub fn select_alpha(entries: &[CvEntry], grid: &[f64], mode: TuneMode) -> (AlphaPolicy, Vec<TraceRow>) {
    let in_grid = |a: f64| grid.contains(&a);
    let mut trace = Vec::new();
    for e in entries.iter().filter(|e| in_grid(e.alpha)) {
        match mode {
            TuneMode::Global => trace.push(TraceRow {
                mode,
                segment: None,
                alpha: e.alpha,
                fold: e.fold,
                validation_ndcg: e.overall,
            }),
            TuneMode::PerSegment => {
                for s in Segment::ALL {
                    trace.push(TraceRow {
                        mode,
                        segment: Some(s),
                        alpha: e.alpha,
                        fold: e.fold,
                        validation_ndcg: e.segments[s.index()],
                    });
                }
            }
        }
    }
    let policy = match mode {
        TuneMode::Global => AlphaPolicy::Global(argmax_alpha(grid, |a| {
            mean_defined(entries.iter().filter(|e| e.alpha == a).map(|e| e.overall))
        })),
        TuneMode::PerSegment => AlphaPolicy::PerSegment(Segment::ALL.map(|s| {
            argmax_alpha(grid, |a| {
                mean_defined(entries.iter().filter(|e| e.alpha == a).map(|e| e.segments[s.index()]))
            })
        })),
    };
    (policy, trace)
}

/// Cross-validated choice of the pseudo-label weight. Reads only `train`.
pub fn tune_alpha(
    train: &Dataset,
    folds: usize,
    mode: TuneMode,
    grid: &[f64],
    settings: &BobSettings,
) -> Result<(AlphaPolicy, Vec<TraceRow>)> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if grid.len() == 1 {
        let policy = match mode {
            TuneMode::Global => AlphaPolicy::Global(grid[0]),
            TuneMode::PerSegment => AlphaPolicy::PerSegment([grid[0]; 3]),
        };
        policy.validate()?;
        return Ok((policy, Vec::new()));
    }
    let entries = cross_validate(train, folds, grid, settings)?;
    Ok(select_alpha(&entries, grid, mode))
}
