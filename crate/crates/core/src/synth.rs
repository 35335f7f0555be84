//! Synthetic two-sided marketplace with known directional probabilities.
//!
//! Each direction has its own latent factors and biases:
//!
//! ```text
//! p_scout(c, j) = sigmoid(scout_scale + a_c + b_j + <u_c, v_j>)
//! p_reply(c, j) = r_c * sigmoid(reply_scale + a'_c + b'_j + <u'_c, v'_j>)
//! ```
//!
//! where `r_c` is 1 except for the least active third of companies when
//! `low_activity_reply_factor` thins their replies. The true match
//! probability is the product of the two.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::domain::{CompanyId, Dataset, InteractionEvent, SeekerId};
use crate::error::{Error, Result};
use crate::learners::PairScoreModel;
use crate::util::{dot, rank_descending, seeded_rng, sigmoid, Rng};

pub const BASE_TIMESTAMP: i64 = 1_700_000_000;
pub const TIMESTAMP_STEP: i64 = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_companies: u32,
    pub num_seekers: u32,
    pub latent_dim: usize,
    /// Mean number of exposures per company over the whole log.
    pub exposures_per_company: u32,
    /// Logit offset of the scout direction.
    pub scout_scale: f64,
    /// Logit offset of the reply direction.
    pub reply_scale: f64,
    /// Log-normal sigma of company activity weights.
    pub segment_activity_skew: f64,
    /// Multiplies the unit-variance factor draws before the `1/sqrt(d)` scaling.
    pub affinity_scale: f64,
    /// Standard deviation of company and seeker biases.
    pub bias_scale: f64,
    /// Multiplier on reply probability for the least active third of companies.
    pub low_activity_reply_factor: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_companies: 300,
            num_seekers: 2000,
            latent_dim: 8,
            exposures_per_company: 100,
            scout_scale: -1.5,
            reply_scale: -1.5,
            segment_activity_skew: 1.4,
            affinity_scale: 1.5,
            bias_scale: 1.0,
            low_activity_reply_factor: 1.0,
            rng_seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_companies == 0 || self.num_seekers == 0 {
            return Err(Error::Config("synth: entity counts must be positive".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("synth: latent_dim must be at least 1".into()));
        }
        if self.exposures_per_company == 0 {
            return Err(Error::Config("synth: exposures_per_company must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.low_activity_reply_factor) {
            return Err(Error::Config(
                "synth: low_activity_reply_factor must be in [0, 1]".into(),
            ));
        }
        for (name, v) in [
            ("scout_scale", self.scout_scale),
            ("reply_scale", self.reply_scale),
            ("segment_activity_skew", self.segment_activity_skew),
            ("affinity_scale", self.affinity_scale),
            ("bias_scale", self.bias_scale),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("synth: {name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Latent parameters of one direction of preference.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalTruth {
    pub scale: f64,
    pub company_factors: Vec<Vec<f64>>,
    pub seeker_factors: Vec<Vec<f64>>,
    pub company_bias: Vec<f64>,
    pub seeker_bias: Vec<f64>,
}

impl DirectionalTruth {
    fn logit(&self, c: usize, j: usize) -> f64 {
        self.scale + self.company_bias[c] + self.seeker_bias[j] + dot(&self.company_factors[c], &self.seeker_factors[j])
    }

    fn draw(rng: &mut Rng, cfg: &SynthConfig, scale: f64) -> Self {
        let d = cfg.latent_dim;
        let f = cfg.affinity_scale / (d as f64).sqrt();
        let matrix = |rows: u32, rng: &mut Rng| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..d).map(|_| f * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        let company_factors = matrix(cfg.num_companies, rng);
        let seeker_factors = matrix(cfg.num_seekers, rng);
        let vector = |n: u32, rng: &mut Rng| -> Vec<f64> {
            (0..n)
                .map(|_| cfg.bias_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let company_bias = vector(cfg.num_companies, rng);
        let seeker_bias = vector(cfg.num_seekers, rng);
        DirectionalTruth {
            scale,
            company_factors,
            seeker_factors,
            company_bias,
            seeker_bias,
        }
    }
}

pub const TRUTH_HEADER: &str = "company_id,seeker_id,p_scout,p_reply";

/// Ground-truth market: both directional preference models plus activity.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketGroundTruth {
    pub scout: DirectionalTruth,
    pub reply: DirectionalTruth,
    /// Exposure propensity per company, normalized to mean 1.
    pub activity_weights: Vec<f64>,
    /// Per-company multiplier on reply probability.
    pub reply_multiplier: Vec<f64>,
}

impl MarketGroundTruth {
    pub fn num_companies(&self) -> usize {
        self.activity_weights.len()
    }

    pub fn num_seekers(&self) -> usize {
        self.scout.seeker_bias.len()
    }

    pub fn p_scout(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        sigmoid(self.scout.logit(company.index(), seeker.index()))
    }

    pub fn p_reply(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.reply_multiplier[company.index()] * sigmoid(self.reply.logit(company.index(), seeker.index()))
    }

    pub fn match_probability(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.p_scout(company, seeker) * self.p_reply(company, seeker)
    }

    /// Writes `company_id,seeker_id,p_scout,p_reply` rows for the given pairs.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        pairs: impl IntoIterator<Item = (CompanyId, SeekerId)>,
    ) -> Result<()> {
        writeln!(out, "{TRUTH_HEADER}")?;
        for (c, j) in pairs {
            writeln!(out, "{},{},{},{}", c.0, j.0, self.p_scout(c, j), self.p_reply(c, j))?;
        }
        Ok(())
    }
}

impl PairScoreModel for MarketGroundTruth {
    fn num_companies(&self) -> u32 {
        self.activity_weights.len() as u32
    }

    fn num_seekers(&self) -> u32 {
        self.scout.seeker_bias.len() as u32
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.match_probability(company, seeker)
    }
}

/// Directional probabilities read back from a truth sidecar file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthTable {
    pub num_companies: u32,
    pub num_seekers: u32,
    probabilities: HashMap<(CompanyId, SeekerId), (f64, f64)>,
}

impl TruthTable {
    pub fn read_csv<R: BufRead>(reader: R, source: &str, dims: (u32, u32)) -> Result<Self> {
        let mut probabilities = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            if i == 0 {
                if line.trim() != TRUTH_HEADER {
                    return Err(Error::parse(source, n, format!("expected header `{TRUTH_HEADER}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::parse(source, n, "expected 4 fields"));
            }
            let id = |k: usize, bound: u32| match f[k].parse::<u32>() {
                Ok(v) if v < bound => Ok(v),
                _ => Err(Error::parse(source, n, format!("invalid id `{}`", f[k]))),
            };
            let prob = |k: usize| match f[k].parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
                _ => Err(Error::parse(source, n, format!("invalid probability `{}`", f[k]))),
            };
            let pair = (CompanyId(id(0, dims.0)?), SeekerId(id(1, dims.1)?));
            probabilities.insert(pair, (prob(2)?, prob(3)?));
        }
        Ok(TruthTable {
            num_companies: dims.0,
            num_seekers: dims.1,
            probabilities,
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn get(&self, company: CompanyId, seeker: SeekerId) -> Option<(f64, f64)> {
        self.probabilities.get(&(company, seeker)).copied()
    }
}

/// Pairs missing from the table score 0.
impl PairScoreModel for TruthTable {
    fn num_companies(&self) -> u32 {
        self.num_companies
    }

    fn num_seekers(&self) -> u32 {
        self.num_seekers
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.get(company, seeker).map_or(0.0, |(s, r)| s * r)
    }
}

/// Draws a market from `config.rng_seed`. The same seed always yields the same market.
pub fn generate_ground_truth(config: &SynthConfig) -> MarketGroundTruth {
    let mut rng = seeded_rng(config.rng_seed);
    let scout = DirectionalTruth::draw(&mut rng, config, config.scout_scale);
    let reply = DirectionalTruth::draw(&mut rng, config, config.reply_scale);

    let raw: Vec<f64> = (0..config.num_companies)
        .map(|_| (config.segment_activity_skew * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let activity_weights: Vec<f64> = raw.iter().map(|w| w / mean).collect();

    let n = activity_weights.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| activity_weights[a].total_cmp(&activity_weights[b]).then(a.cmp(&b)));
    let mut reply_multiplier = vec![1.0; n];
    for &c in order.iter().take(n / 3) {
        reply_multiplier[c] = config.low_activity_reply_factor;
    }

    MarketGroundTruth {
        scout,
        reply,
        activity_weights,
        reply_multiplier,
    }
}

/// Runs the exposure → scout → reply funnel and returns a time-ordered log.
///
/// Company `c` receives `round(exposures_per_company * w_c)` exposures (at
/// least one) to uniformly drawn seekers. Exposures are interleaved in time
/// by a seeded shuffle and stamped at a fixed step.
pub fn simulate_log(truth: &MarketGroundTruth, config: &SynthConfig) -> Result<Dataset> {
    if truth.num_companies() != config.num_companies as usize || truth.num_seekers() != config.num_seekers as usize {
        return Err(Error::Config(
            "synth: ground truth does not match config dimensions".into(),
        ));
    }
    let mut rng = seeded_rng(config.rng_seed ^ 0x5EED_F00D);
    let mut exposures: Vec<(CompanyId, SeekerId)> = Vec::new();
    for (c, w) in truth.activity_weights.iter().enumerate() {
        let count = ((config.exposures_per_company as f64 * w).round() as usize).max(1);
        for _ in 0..count {
            let j = rng.random_range(0..config.num_seekers);
            exposures.push((CompanyId(c as u32), SeekerId(j)));
        }
    }
    // Fisher-Yates interleave
    for i in (1..exposures.len()).rev() {
        let k = rng.random_range(0..=i);
        exposures.swap(i, k);
    }
    let events = exposures
        .into_iter()
        .enumerate()
        .map(|(i, (company, seeker))| {
            let scout_sent = rng.random::<f64>() < truth.p_scout(company, seeker);
            let replied = scout_sent && rng.random::<f64>() < truth.p_reply(company, seeker);
            InteractionEvent {
                timestamp: BASE_TIMESTAMP + TIMESTAMP_STEP * i as i64,
                company,
                seeker,
                scout_sent,
                replied,
            }
        })
        .collect();
    Dataset::new(events, config.num_companies, config.num_seekers)
}

/// Ranks candidates by true match probability (ties by ascending id).
pub fn oracle_rank(truth: &MarketGroundTruth, company: CompanyId, candidates: &[SeekerId]) -> Vec<SeekerId> {
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&j| truth.match_probability(company, j))
        .collect();
    rank_descending(candidates, &scores)
}
