//! Log-derived features of a (company, seeker) pair for the meta-model.
//!
//! History statistics leave out the events of the pair being featurized, so a
//! training row never sees its own label through them.

use std::collections::HashMap;

use crate::aggregate::harmonic_mean;
use crate::domain::{CompanyId, Dataset, SeekerId, Segment, SegmentAssignment};
use crate::error::Result;
use crate::learners::{check_pair, PairScoreModel};
use crate::meta::gbdt::FeatureMatrix;

pub const FEATURE_NAMES: [&str; 11] = [
    "p_scout",
    "p_reply",
    "product",
    "harmonic_mean",
    "company_scout_count",
    "company_reply_rate",
    "seeker_exposure_count",
    "seeker_reply_rate",
    "segment_high",
    "segment_middle",
    "segment_low",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

pub fn feature_spec() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    exposures: u32,
    scouts: u32,
    replies: u32,
}

impl Counts {
    fn add(&mut self, scout: bool, reply: bool) {
        self.exposures += 1;
        self.scouts += scout as u32;
        self.replies += reply as u32;
    }

    fn minus(self, other: Counts) -> Counts {
        Counts {
            exposures: self.exposures - other.exposures,
            scouts: self.scouts - other.scouts,
            replies: self.replies - other.replies,
        }
    }
}

fn rate(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Train-window event counts per company, seeker and pair.
#[derive(Debug, Clone)]
pub struct HistoryStats {
    company: Vec<Counts>,
    seeker: Vec<Counts>,
    pair: HashMap<(u32, u32), Counts>,
}

impl HistoryStats {
    pub fn from_train(train: &Dataset) -> Self {
        let mut company = vec![Counts::default(); train.num_companies() as usize];
        let mut seeker = vec![Counts::default(); train.num_seekers() as usize];
        let mut pair: HashMap<(u32, u32), Counts> = HashMap::new();
        for e in train.events() {
            company[e.company.index()].add(e.scout_sent, e.replied);
            seeker[e.seeker.index()].add(e.scout_sent, e.replied);
            pair.entry((e.company.0, e.seeker.0))
                .or_default()
                .add(e.scout_sent, e.replied);
        }
        HistoryStats { company, seeker, pair }
    }
}

/// Everything needed to featurize a pair: train statistics, the two
/// directional models and the segment assignment.
pub struct FeatureContext<'a> {
    pub stats: HistoryStats,
    pub scout: &'a (dyn PairScoreModel + Sync),
    pub reply: &'a (dyn PairScoreModel + Sync),
    pub segments: &'a SegmentAssignment,
}

impl<'a> FeatureContext<'a> {
    pub fn new(
        train: &Dataset,
        scout: &'a (dyn PairScoreModel + Sync),
        reply: &'a (dyn PairScoreModel + Sync),
        segments: &'a SegmentAssignment,
    ) -> Self {
        FeatureContext {
            stats: HistoryStats::from_train(train),
            scout,
            reply,
            segments,
        }
    }

    pub fn featurize(&self, company: CompanyId, seeker: SeekerId) -> Result<[f64; NUM_FEATURES]> {
        check_pair(self.scout, company, seeker)?;
        check_pair(self.reply, company, seeker)?;
        let p = self.scout.score(company, seeker);
        let q = self.reply.score(company, seeker);
        let own = self.stats.pair.get(&(company.0, seeker.0)).copied().unwrap_or_default();
        let c = self
            .stats
            .company
            .get(company.index())
            .copied()
            .unwrap_or_default()
            .minus(own);
        let s = self
            .stats
            .seeker
            .get(seeker.index())
            .copied()
            .unwrap_or_default()
            .minus(own);
        let segment = self.segments.get(company).unwrap_or(Segment::Low);
        let mut one_hot = [0.0; 3];
        one_hot[segment.index()] = 1.0;
        Ok([
            p,
            q,
            p * q,
            harmonic_mean(p, q),
            c.scouts as f64,
            rate(c.replies, c.scouts),
            s.exposures as f64,
            rate(s.replies, s.scouts),
            one_hot[0],
            one_hot[1],
            one_hot[2],
        ])
    }

    pub fn featurize_all(&self, pairs: &[(CompanyId, SeekerId)]) -> Result<FeatureMatrix> {
        let mut m = FeatureMatrix::new(NUM_FEATURES);
        m.values.reserve(pairs.len() * NUM_FEATURES);
        for &(c, j) in pairs {
            m.push_row(&self.featurize(c, j)?);
        }
        Ok(m)
    }
}

/// Free-function form of [`FeatureContext::featurize`].
pub fn featurize(ctx: &FeatureContext<'_>, pair: (CompanyId, SeekerId)) -> Result<[f64; NUM_FEATURES]> {
    ctx.featurize(pair.0, pair.1)
}
