//! Aggregation of directional predictions into a match score, and the
//! predict-then-aggregate ranking.

use std::fmt;
use std::str::FromStr;

use crate::domain::{CompanyId, SeekerId};
use crate::error::{Error, Result};
use crate::learners::{check_pair, PairScoreModel};
use crate::util::rank_descending;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregator {
    ScoutOnly,
    ReplyOnly,
    Multiplication,
    HarmonicMean,
}

impl Aggregator {
    pub const ALL: [Aggregator; 4] = [
        Aggregator::ScoutOnly,
        Aggregator::ReplyOnly,
        Aggregator::Multiplication,
        Aggregator::HarmonicMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::ScoutOnly => "scout-only",
            Aggregator::ReplyOnly => "reply-only",
            Aggregator::Multiplication => "multiplication",
            Aggregator::HarmonicMean => "harmonic-mean",
        }
    }

    /// Unchecked combination of two probabilities.
    pub fn apply(self, p_scout: f64, p_reply: f64) -> f64 {
        match self {
            Aggregator::ScoutOnly => p_scout,
            Aggregator::ReplyOnly => p_reply,
            Aggregator::Multiplication => p_scout * p_reply,
            Aggregator::HarmonicMean => harmonic_mean(p_scout, p_reply),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aggregator::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregator `{s}`")))
    }
}

/// `2pq / (p + q)`, with the `(0, 0)` singularity defined as 0.
pub fn harmonic_mean(p: f64, q: f64) -> f64 {
    if p + q == 0.0 {
        0.0
    } else {
        2.0 * p * q / (p + q)
    }
}

/// Validated aggregation; both inputs must lie in `[0, 1]`.
pub fn aggregate(kind: Aggregator, p_scout: f64, p_reply: f64) -> Result<f64> {
    for p in [p_scout, p_reply] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    Ok(kind.apply(p_scout, p_reply))
}

/// Aggregated directional scores as a single pair model.
pub struct AggregatedScorer<'a, S: ?Sized, R: ?Sized> {
    pub scout: &'a S,
    pub reply: &'a R,
    pub kind: Aggregator,
}

impl<S: PairScoreModel + ?Sized, R: PairScoreModel + ?Sized> PairScoreModel for AggregatedScorer<'_, S, R> {
    fn num_companies(&self) -> u32 {
        self.scout.num_companies().min(self.reply.num_companies())
    }

    fn num_seekers(&self) -> u32 {
        self.scout.num_seekers().min(self.reply.num_seekers())
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        self.kind
            .apply(self.scout.score(company, seeker), self.reply.score(company, seeker))
    }
}

/// Ranks candidates by `M(p_scout, p_reply)`, ties by ascending seeker id.
pub fn pta_rank<S, R>(
    scout_model: &S,
    reply_model: &R,
    kind: Aggregator,
    company: CompanyId,
    candidates: &[SeekerId],
) -> Result<Vec<SeekerId>>
where
    S: PairScoreModel + ?Sized,
    R: PairScoreModel + ?Sized,
{
    let mut scores = Vec::with_capacity(candidates.len());
    for &j in candidates {
        check_pair(scout_model, company, j)?;
        check_pair(reply_model, company, j)?;
        scores.push(aggregate(
            kind,
            scout_model.score(company, j),
            reply_model.score(company, j),
        )?);
    }
    Ok(rank_descending(candidates, &scores))
}
