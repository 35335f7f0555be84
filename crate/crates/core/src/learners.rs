//! Logistic matrix factorization learners: the scout and reply models of
//! predict-then-aggregate, and the direct match prediction model.
//!
//! All three share one SGD routine on binary cross-entropy and differ only
//! in which rows they see and which bit is the label:
//!
//! | model | rows | label | sampled negatives |
//! |-------|------|-------|-------------------|
//! | scout | every exposure | `scout_sent` | yes |
//! | reply | scouted exposures only | `replied` | no |
//! | DMP   | every exposure | match | yes |
//!
//! Sampled negatives are unexposed seekers drawn uniformly for the company of
//! each positive row.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::domain::{CompanyId, Dataset, SeekerId};
use crate::error::{Error, Result};
use crate::util::{derive_seed, dot, seeded_rng, sigmoid, Rng};

/// Anything that scores a (company, seeker) pair with a value in `[0, 1]`.
pub trait PairScoreModel {
    fn num_companies(&self) -> u32;
    fn num_seekers(&self) -> u32;
    /// Score of an in-range pair. Callers validate ids; see [`score_pairs`].
    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64;
}

pub(crate) fn check_pair<M: PairScoreModel + ?Sized>(model: &M, company: CompanyId, seeker: SeekerId) -> Result<()> {
    if company.0 >= model.num_companies() {
        return Err(Error::UnknownEntity(company.to_string()));
    }
    if seeker.0 >= model.num_seekers() {
        return Err(Error::UnknownEntity(seeker.to_string()));
    }
    Ok(())
}

/// Scores a batch of pairs in order.
pub fn score_pairs<M: PairScoreModel + ?Sized>(model: &M, pairs: &[(CompanyId, SeekerId)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(c, j)| {
            check_pair(model, c, j)?;
            Ok(model.score(c, j))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub l2_regularization: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub rng_seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 8,
            learning_rate: 0.05,
            l2_regularization: 0.1,
            epochs: 20,
            negatives_per_positive: 4,
            rng_seed: 11,
            loss: Loss::BinaryCrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("learner: latent_dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learner: learning_rate must be positive".into()));
        }
        if !(self.l2_regularization >= 0.0 && self.l2_regularization.is_finite()) {
            return Err(Error::Config("learner: l2_regularization must be non-negative".into()));
        }
        Ok(())
    }
}

/// `sigmoid(global_bias + company_bias[c] + seeker_bias[j] + <u_c, v_j>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    num_companies: u32,
    num_seekers: u32,
    latent_dim: usize,
    /// Row-major `num_companies × latent_dim`.
    company_factors: Vec<f64>,
    /// Row-major `num_seekers × latent_dim`.
    seeker_factors: Vec<f64>,
    company_bias: Vec<f64>,
    seeker_bias: Vec<f64>,
    global_bias: f64,
}

impl MfModel {
    /// Factors uniform in `±0.5/sqrt(d)`, biases zero.
    pub fn initialize(num_companies: u32, num_seekers: u32, latent_dim: usize, rng: &mut Rng) -> Self {
        let bound = 0.5 / (latent_dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let company_factors = draw(num_companies as usize * latent_dim);
        let seeker_factors = draw(num_seekers as usize * latent_dim);
        MfModel {
            num_companies,
            num_seekers,
            latent_dim,
            company_factors,
            seeker_factors,
            company_bias: vec![0.0; num_companies as usize],
            seeker_bias: vec![0.0; num_seekers as usize],
            global_bias: 0.0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn company_row(&self, c: usize) -> &[f64] {
        &self.company_factors[c * self.latent_dim..(c + 1) * self.latent_dim]
    }

    fn seeker_row(&self, j: usize) -> &[f64] {
        &self.seeker_factors[j * self.latent_dim..(j + 1) * self.latent_dim]
    }

    fn logit(&self, c: usize, j: usize) -> f64 {
        self.global_bias + self.company_bias[c] + self.seeker_bias[j] + dot(self.company_row(c), self.seeker_row(j))
    }

    fn sgd_step(&mut self, c: usize, j: usize, label: f64, lr: f64, l2: f64) {
        let grad = sigmoid(self.logit(c, j)) - label;
        let d = self.latent_dim;
        self.global_bias -= lr * grad;
        self.company_bias[c] -= lr * (grad + l2 * self.company_bias[c]);
        self.seeker_bias[j] -= lr * (grad + l2 * self.seeker_bias[j]);
        for k in 0..d {
            let u = self.company_factors[c * d + k];
            let v = self.seeker_factors[j * d + k];
            self.company_factors[c * d + k] -= lr * (grad * v + l2 * u);
            self.seeker_factors[j * d + k] -= lr * (grad * u + l2 * v);
        }
    }

    /// Mean binary cross-entropy over `samples`.
    pub fn mean_loss(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let total: f64 = samples
            .iter()
            .map(|s| {
                let p = sigmoid(self.logit(s.company.index(), s.seeker.index())).clamp(1e-15, 1.0 - 1e-15);
                -(s.label * p.ln() + (1.0 - s.label) * (1.0 - p).ln())
            })
            .sum();
        total / samples.len() as f64
    }

    /// Text layout:
    ///
    /// ```text
    /// recipro-mf v1
    /// dims <num_companies> <num_seekers> <latent_dim>
    /// global_bias <x>
    /// company_bias <x_0> ... <x_{C-1}>
    /// seeker_bias <x_0> ... <x_{J-1}>
    /// company_factors
    /// <d values>            (one line per company)
    /// seeker_factors
    /// <d values>            (one line per seeker)
    /// ```
    ///
    /// Values use Rust's shortest round-trip float formatting, so loading
    /// reproduces every parameter bit for bit.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MF_MAGIC}")?;
        writeln!(
            out,
            "dims {} {} {}",
            self.num_companies, self.num_seekers, self.latent_dim
        )?;
        writeln!(out, "global_bias {}", self.global_bias)?;
        write!(out, "company_bias")?;
        write_values(&mut out, &self.company_bias)?;
        write!(out, "seeker_bias")?;
        write_values(&mut out, &self.seeker_bias)?;
        writeln!(out, "company_factors")?;
        for row in self.company_factors.chunks(self.latent_dim) {
            writeln!(out, "{}", join(row))?;
        }
        writeln!(out, "seeker_factors")?;
        for row in self.seeker_factors.chunks(self.latent_dim) {
            writeln!(out, "{}", join(row))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut cur = LineCursor::new(&lines, source);
        let (n, v) = cur.tagged("recipro-mf")?;
        if v != ["v1"] {
            return Err(cur.err(n, "unsupported model version"));
        }
        let (n, dims) = cur.tagged("dims")?;
        if dims.len() != 3 {
            return Err(cur.err(n, "expected 3 dimensions"));
        }
        let dim = |k: usize| {
            dims[k]
                .parse::<u64>()
                .map_err(|_| Error::parse(source, n, "bad dimension"))
        };
        let num_companies = dim(0)? as u32;
        let num_seekers = dim(1)? as u32;
        let latent_dim = dim(2)? as usize;
        let (n, g) = cur.tagged("global_bias")?;
        let global_bias = parse_values(&g, 1, source, n)?[0];
        let (n, cb) = cur.tagged("company_bias")?;
        let company_bias = parse_values(&cb, num_companies as usize, source, n)?;
        let (n, sb) = cur.tagged("seeker_bias")?;
        let seeker_bias = parse_values(&sb, num_seekers as usize, source, n)?;
        let company_factors = cur.matrix("company_factors", num_companies as usize, latent_dim)?;
        let seeker_factors = cur.matrix("seeker_factors", num_seekers as usize, latent_dim)?;
        Ok(MfModel {
            num_companies,
            num_seekers,
            latent_dim,
            company_factors,
            seeker_factors,
            company_bias,
            seeker_bias,
            global_bias,
        })
    }
}

struct LineCursor<'a> {
    lines: &'a [String],
    pos: usize,
    source: &'a str,
}

impl<'a> LineCursor<'a> {
    fn new(lines: &'a [String], source: &'a str) -> Self {
        LineCursor { lines, pos: 0, source }
    }

    fn err(&self, line: usize, msg: &str) -> Error {
        Error::parse(self.source, line, msg.to_string())
    }

    fn line(&mut self) -> Result<(usize, Vec<&'a str>)> {
        let l = self
            .lines
            .get(self.pos)
            .ok_or_else(|| self.err(self.lines.len(), "unexpected end of file"))?;
        self.pos += 1;
        Ok((self.pos, l.split_whitespace().collect()))
    }

    fn tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, mut parts) = self.line()?;
        if parts.first() != Some(&tag) {
            return Err(self.err(n, &format!("expected `{tag}`")));
        }
        parts.remove(0);
        Ok((n, parts))
    }

    fn matrix(&mut self, tag: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        self.tagged(tag)?;
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, parts) = self.line()?;
            out.extend(parse_values(&parts, cols, self.source, n)?);
        }
        Ok(out)
    }
}

const MF_MAGIC: &str = "recipro-mf v1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_values<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        write!(out, " {v}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub(crate) fn parse_values(parts: &[&str], expected: usize, source: &str, line: usize) -> Result<Vec<f64>> {
    if parts.len() != expected {
        return Err(Error::parse(
            source,
            line,
            format!("expected {expected} values, found {}", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::parse(source, line, format!("invalid number `{p}`")))
        })
        .collect()
}

impl PairScoreModel for MfModel {
    fn num_companies(&self) -> u32 {
        self.num_companies
    }

    fn num_seekers(&self) -> u32 {
        self.num_seekers
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        sigmoid(self.logit(company.index(), seeker.index()))
    }
}

/// One labelled training row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub company: CompanyId,
    pub seeker: SeekerId,
    pub label: f64,
}

/// A fitted model together with the mean training loss after each epoch.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MfModel,
    pub loss_history: Vec<f64>,
}

/// Plain SGD on binary cross-entropy with a seeded shuffle per epoch.
pub fn fit_logistic_mf(
    samples: &[Sample],
    num_companies: u32,
    num_seekers: u32,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> FitResult {
    let mut model = MfModel::initialize(num_companies, num_seekers, cfg.latent_dim, rng);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let k = rng.random_range(0..=i);
            order.swap(i, k);
        }
        for &i in &order {
            let s = samples[i];
            model.sgd_step(
                s.company.index(),
                s.seeker.index(),
                s.label,
                cfg.learning_rate,
                cfg.l2_regularization,
            );
        }
        loss_history.push(model.mean_loss(samples));
    }
    FitResult { model, loss_history }
}

/// For every positive row, draws up to `per_positive` unexposed seekers of the
/// same company. Companies that were exposed to every seeker yield no negatives.
pub fn sample_unexposed_negatives(
    train: &Dataset,
    positives: &[(CompanyId, SeekerId)],
    per_positive: usize,
    rng: &mut Rng,
) -> Vec<(CompanyId, SeekerId)> {
    const MAX_ATTEMPTS: usize = 64;
    if per_positive == 0 || train.num_seekers() == 0 {
        return Vec::new();
    }
    let exposed: HashSet<(CompanyId, SeekerId)> = train.events().iter().map(|e| (e.company, e.seeker)).collect();
    let mut out = Vec::with_capacity(positives.len() * per_positive);
    for &(c, _) in positives {
        for _ in 0..per_positive {
            for _ in 0..MAX_ATTEMPTS {
                let j = SeekerId(rng.random_range(0..train.num_seekers()));
                if !exposed.contains(&(c, j)) {
                    out.push((c, j));
                    break;
                }
            }
        }
    }
    out
}

fn build_samples(
    train: &Dataset,
    rows: impl Iterator<Item = (CompanyId, SeekerId, bool)>,
    negatives_per_positive: usize,
    rng: &mut Rng,
) -> Vec<Sample> {
    let mut samples = Vec::new();
    let mut positives = Vec::new();
    for (company, seeker, y) in rows {
        if y {
            positives.push((company, seeker));
        }
        samples.push(Sample {
            company,
            seeker,
            label: if y { 1.0 } else { 0.0 },
        });
    }
    samples.extend(
        sample_unexposed_negatives(train, &positives, negatives_per_positive, rng)
            .into_iter()
            .map(|(company, seeker)| Sample {
                company,
                seeker,
                label: 0.0,
            }),
    );
    samples
}

fn fit_on(train: &Dataset, samples: Vec<Sample>, cfg: &TrainConfig, rng: &mut Rng) -> Result<FitResult> {
    cfg.validate()?;
    Ok(fit_logistic_mf(
        &samples,
        train.num_companies(),
        train.num_seekers(),
        cfg,
        rng,
    ))
}

/// Training rows of the scout model: every exposure labelled by `scout_sent`, plus sampled negatives.
pub fn scout_samples(train: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<Vec<Sample>> {
    if train.is_empty() {
        return Err(Error::DegenerateLabels("empty training window".into()));
    }
    if !train.events().iter().any(|e| e.scout_sent) {
        return Err(Error::DegenerateLabels("no scouts in training window".into()));
    }
    let rows = train.events().iter().map(|e| (e.company, e.seeker, e.scout_sent));
    Ok(build_samples(train, rows, cfg.negatives_per_positive, rng))
}

/// Training rows of the reply model: scouted exposures only, labelled by `replied`.
pub fn reply_samples(train: &Dataset) -> Result<Vec<Sample>> {
    let scouted: Vec<_> = train.events().iter().filter(|e| e.scout_sent).collect();
    if scouted.is_empty() {
        return Err(Error::NoReplyObservations);
    }
    if !scouted.iter().any(|e| e.replied) {
        return Err(Error::DegenerateLabels("no replies in training window".into()));
    }
    Ok(scouted
        .into_iter()
        .map(|e| Sample {
            company: e.company,
            seeker: e.seeker,
            label: if e.replied { 1.0 } else { 0.0 },
        })
        .collect())
}

/// Training rows of the direct match model: every exposure labelled by match, plus sampled negatives.
pub fn dmp_samples(train: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<Vec<Sample>> {
    if train.is_empty() {
        return Err(Error::DegenerateLabels("empty training window".into()));
    }
    if train.num_matches() == 0 {
        return Err(Error::DegenerateLabels("no matches in training window".into()));
    }
    let rows = train.events().iter().map(|e| (e.company, e.seeker, e.match_label()));
    Ok(build_samples(train, rows, cfg.negatives_per_positive, rng))
}

pub fn train_scout_model(train: &Dataset, cfg: &TrainConfig) -> Result<MfModel> {
    let mut rng = seeded_rng(cfg.rng_seed);
    let samples = scout_samples(train, cfg, &mut rng)?;
    Ok(fit_on(train, samples, cfg, &mut rng)?.model)
}

pub fn train_reply_model(train: &Dataset, cfg: &TrainConfig) -> Result<MfModel> {
    let mut rng = seeded_rng(cfg.rng_seed);
    let samples = reply_samples(train)?;
    Ok(fit_on(train, samples, cfg, &mut rng)?.model)
}

pub fn train_dmp_model(train: &Dataset, cfg: &TrainConfig) -> Result<MfModel> {
    let mut rng = seeded_rng(cfg.rng_seed);
    let samples = dmp_samples(train, cfg, &mut rng)?;
    Ok(fit_on(train, samples, cfg, &mut rng)?.model)
}

/// Fold of a (company, seeker) pair under `folds`-way pair hashing.
pub fn pair_fold(company: CompanyId, seeker: SeekerId, folds: usize) -> usize {
    let key = (u64::from(company.0) << 32) | u64::from(seeker.0);
    (derive_seed(key, 0xF01D) % folds as u64) as usize
}

/// Out-of-fold scorer: each pair is scored by a model trained without any
/// event of that pair, so in-sample scores look like scores on unseen pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFitModel {
    folds: Vec<MfModel>,
}

impl CrossFitModel {
    /// Trains one model per fold on the events of all other folds. With a
    /// single fold this is the plain model trained on everything.
    pub fn train(
        train: &Dataset,
        folds: usize,
        cfg: &TrainConfig,
        trainer: fn(&Dataset, &TrainConfig) -> Result<MfModel>,
    ) -> Result<Self> {
        if folds <= 1 {
            return Ok(CrossFitModel {
                folds: vec![trainer(train, cfg)?],
            });
        }
        let models = (0..folds)
            .map(|k| {
                let events = train
                    .events()
                    .iter()
                    .filter(|e| pair_fold(e.company, e.seeker, folds) != k)
                    .cloned()
                    .collect();
                let part = Dataset::new(events, train.num_companies(), train.num_seekers())?;
                let fold_cfg = TrainConfig {
                    rng_seed: derive_seed(cfg.rng_seed, k as u64 + 1),
                    ..cfg.clone()
                };
                trainer(&part, &fold_cfg)
            })
            .collect::<Result<_>>()?;
        Ok(CrossFitModel { folds: models })
    }

    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }
}

impl PairScoreModel for CrossFitModel {
    fn num_companies(&self) -> u32 {
        self.folds[0].num_companies()
    }

    fn num_seekers(&self) -> u32 {
        self.folds[0].num_seekers()
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.folds[pair_fold(company, seeker, self.folds.len())].score(company, seeker)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::InteractionEvent;

    /// Company 0 is shown seekers 0 and 1 twenty times each. Seeker 0 always
    /// gets a scout and always replies; seeker 1 never gets a scout.
    fn toy() -> Dataset {
        let mut events = Vec::new();
        for i in 0..40 {
            let s = (i % 2) as u32;
            events.push(InteractionEvent {
                timestamp: i as i64,
                company: CompanyId(0),
                seeker: SeekerId(s),
                scout_sent: s == 0,
                replied: s == 0,
            });
        }
        Dataset::new(events, 2, 2).unwrap()
    }

    fn toy_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            latent_dim: 2,
            learning_rate: 0.05,
            l2_regularization: 0.0,
            epochs: 30,
            negatives_per_positive: 1,
            rng_seed: seed,
            loss: Loss::BinaryCrossEntropy,
        }
    }

    #[test]
    fn separable_toy_orders_pairs() {
        let d = toy();
        let c = CompanyId(0);
        for seed in 0..5 {
            let m = train_scout_model(&d, &toy_cfg(seed)).unwrap();
            assert!(m.score(c, SeekerId(0)) > m.score(c, SeekerId(1)));
            let m = train_dmp_model(&d, &toy_cfg(seed)).unwrap();
            assert!(m.score(c, SeekerId(0)) > m.score(c, SeekerId(1)));
        }
    }

    #[test]
    fn zero_epochs_keeps_initial_scores() {
        let cfg = TrainConfig {
            epochs: 0,
            ..toy_cfg(3)
        };
        let m = train_scout_model(&toy(), &cfg).unwrap();
        for c in 0..2 {
            for j in 0..2 {
                let s = m.score(CompanyId(c), SeekerId(j));
                assert!(s > 0.0 && s < 1.0);
            }
        }
    }

    #[test]
    fn degenerate_labels_are_rejected() {
        let no_scout = Dataset::new(
            vec![InteractionEvent {
                timestamp: 0,
                company: CompanyId(0),
                seeker: SeekerId(0),
                scout_sent: false,
                replied: false,
            }],
            1,
            1,
        )
        .unwrap();
        let cfg = toy_cfg(0);
        assert!(matches!(
            train_scout_model(&no_scout, &cfg),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            train_reply_model(&no_scout, &cfg),
            Err(Error::NoReplyObservations)
        ));
        assert!(matches!(
            train_dmp_model(&no_scout, &cfg),
            Err(Error::DegenerateLabels(_))
        ));
        let scouted_no_reply = Dataset::new(
            vec![InteractionEvent {
                timestamp: 0,
                company: CompanyId(0),
                seeker: SeekerId(0),
                scout_sent: true,
                replied: false,
            }],
            1,
            1,
        )
        .unwrap();
        assert!(matches!(
            train_reply_model(&scouted_no_reply, &cfg),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn reply_model_never_sees_unscouted_rows() {
        let d = toy();
        let rows = reply_samples(&d).unwrap();
        assert_eq!(rows.len(), 20);
        assert!(rows.iter().all(|s| s.seeker == SeekerId(0)));
    }

    #[test]
    fn negatives_avoid_exposed_pairs() {
        let d = toy();
        let mut rng = seeded_rng(0);
        // every seeker of company 0 was exposed, so nothing can be drawn for it
        assert!(sample_unexposed_negatives(&d, &[(CompanyId(0), SeekerId(0))], 3, &mut rng).is_empty());
        let negs = sample_unexposed_negatives(&d, &[(CompanyId(1), SeekerId(0))], 3, &mut rng);
        assert_eq!(negs.len(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_dmp_model(&toy(), &toy_cfg(9)).unwrap();
        let b = train_dmp_model(&toy(), &toy_cfg(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_non_increasing_on_toy() {
        let d = toy();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 40,
            ..toy_cfg(1)
        };
        let mut rng = seeded_rng(cfg.rng_seed);
        let samples = scout_samples(&d, &cfg, &mut rng).unwrap();
        let fit = fit_logistic_mf(&samples, 2, 2, &cfg, &mut rng);
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{:?}", fit.loss_history);
        }
    }

    #[test]
    fn score_pairs_matches_direct_calls() {
        let m = train_scout_model(&toy(), &toy_cfg(2)).unwrap();
        assert!(score_pairs(&m, &[]).unwrap().is_empty());
        let one = score_pairs(&m, &[(CompanyId(1), SeekerId(0))]).unwrap();
        assert_eq!(one, vec![m.score(CompanyId(1), SeekerId(0))]);
        assert!(matches!(
            score_pairs(&m, &[(CompanyId(2), SeekerId(0))]),
            Err(Error::UnknownEntity(_))
        ));
    }

    #[test]
    fn save_load_roundtrip_is_bitwise() {
        let m = train_scout_model(&toy(), &toy_cfg(4)).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = MfModel::load(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
        for c in 0..2 {
            for j in 0..2 {
                let (c, j) = (CompanyId(c), SeekerId(j));
                assert_eq!(back.score(c, j).to_bits(), m.score(c, j).to_bits());
            }
        }
    }
}
