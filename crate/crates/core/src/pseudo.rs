//! Pseudo-match scores: a convex blend of the realized match label and the
//! product of the two directional predictions,
//!
//! ```text
//! s = alpha * m + (1 - alpha) * p_scout_hat * p_reply_hat
//! ```
//!
//! with `alpha` either global or chosen per company activity segment.

use std::io::{BufRead, Write};

use crate::domain::{CompanyId, Dataset, SeekerId, Segment, SegmentAssignment};
use crate::error::{Error, Result};
use crate::learners::{check_pair, sample_unexposed_negatives, PairScoreModel};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    Global(f64),
    /// Alphas indexed by [`Segment::index`]: High, Middle, Low.
    PerSegment([f64; 3]),
}

impl AlphaPolicy {
    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            AlphaPolicy::Global(a) => std::slice::from_ref(a),
            AlphaPolicy::PerSegment(a) => a,
        };
        match values.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            Some(&bad) => Err(Error::InvalidWeight(bad)),
            None => Ok(()),
        }
    }

    /// Writes `mode,segment,alpha` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mode,segment,alpha")?;
        match self {
            AlphaPolicy::Global(a) => writeln!(out, "global,all,{a}")?,
            AlphaPolicy::PerSegment(a) => {
                for s in Segment::ALL {
                    writeln!(out, "per-segment,{s},{}", a[s.index()])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut global = None;
        let mut seg = [None; 3];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::parse(source, i + 1, "expected 3 fields"));
            }
            let a: f64 = f[2].parse().map_err(|_| Error::parse(source, i + 1, "invalid alpha"))?;
            match (f[0], Segment::parse(f[1])) {
                ("global", _) => global = Some(a),
                ("per-segment", Some(s)) => seg[s.index()] = Some(a),
                _ => return Err(Error::parse(source, i + 1, "invalid mode or segment")),
            }
        }
        let policy = match (global, seg) {
            (Some(a), [None, None, None]) => AlphaPolicy::Global(a),
            (None, [Some(h), Some(m), Some(l)]) => AlphaPolicy::PerSegment([h, m, l]),
            _ => return Err(Error::parse(source, 1, "incomplete alpha policy")),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Blend of a realized match label with a predicted match probability.
pub fn pseudo_score(true_match: bool, p_scout_hat: f64, p_reply_hat: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidWeight(alpha));
    }
    for p in [p_scout_hat, p_reply_hat] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    Ok(blend(true_match, p_scout_hat * p_reply_hat, alpha))
}

fn blend(true_match: bool, prediction: f64, alpha: f64) -> f64 {
    let m = if true_match { 1.0 } else { 0.0 };
    alpha * m + (1.0 - alpha) * prediction
}

pub fn resolve_alpha(policy: &AlphaPolicy, segments: &SegmentAssignment, company: CompanyId) -> Result<f64> {
    match policy {
        AlphaPolicy::Global(a) => Ok(*a),
        AlphaPolicy::PerSegment(alphas) => segments
            .get(company)
            .map(|s| alphas[s.index()])
            .ok_or(Error::UnassignedCompany(company.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub company: CompanyId,
    pub seeker: SeekerId,
    pub segment: Segment,
    pub true_match: bool,
    /// `p_scout_hat * p_reply_hat`.
    pub prediction: f64,
    pub s_pseudo: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabelSet {
    pub rows: Vec<PseudoLabel>,
}

pub const PSEUDO_HEADER: &str = "company_id,seeker_id,segment,true_match,prediction,s_pseudo";

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.s_pseudo).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{PSEUDO_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.company.0, r.seeker.0, r.segment, r.true_match as u8, r.prediction, r.s_pseudo
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            if i == 0 {
                if line.trim_end() != PSEUDO_HEADER {
                    return Err(Error::parse(source, n, format!("expected header `{PSEUDO_HEADER}`")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse(source, n, "expected 6 fields"));
            }
            let bad = |w: &str| Error::parse(source, n, format!("invalid {w}"));
            rows.push(PseudoLabel {
                company: CompanyId(f[0].parse().map_err(|_| bad("company_id"))?),
                seeker: SeekerId(f[1].parse().map_err(|_| bad("seeker_id"))?),
                segment: Segment::parse(f[2]).ok_or_else(|| bad("segment"))?,
                true_match: match f[3] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("true_match")),
                },
                prediction: f[4].parse().map_err(|_| bad("prediction"))?,
                s_pseudo: f[5].parse().map_err(|_| bad("s_pseudo"))?,
            });
        }
        Ok(PseudoLabelSet { rows })
    }
}

/// One row per train exposure (in event order), then `negatives_per_positive`
/// sampled unexposed pairs per matched exposure with `true_match = 0`.
pub fn build_pseudo_labels<S, R>(
    train: &Dataset,
    scout_model: &S,
    reply_model: &R,
    policy: &AlphaPolicy,
    segments: &SegmentAssignment,
    negatives_per_positive: usize,
    rng_seed: u64,
) -> Result<PseudoLabelSet>
where
    S: PairScoreModel + ?Sized,
    R: PairScoreModel + ?Sized,
{
    policy.validate()?;
    let row = |company: CompanyId, seeker: SeekerId, true_match: bool| -> Result<PseudoLabel> {
        check_pair(scout_model, company, seeker)?;
        check_pair(reply_model, company, seeker)?;
        let alpha = resolve_alpha(policy, segments, company)?;
        let p = scout_model.score(company, seeker);
        let q = reply_model.score(company, seeker);
        let prediction = p * q;
        Ok(PseudoLabel {
            company,
            seeker,
            segment: segments.get(company).unwrap_or(Segment::Low),
            true_match,
            prediction,
            s_pseudo: blend(true_match, prediction, alpha),
        })
    };
    let mut rows = Vec::with_capacity(train.len());
    let mut positives = Vec::new();
    for e in train.events() {
        let m = e.match_label();
        if m {
            positives.push((e.company, e.seeker));
        }
        rows.push(row(e.company, e.seeker, m)?);
    }
    let mut rng = seeded_rng(rng_seed);
    for (c, j) in sample_unexposed_negatives(train, &positives, negatives_per_positive, &mut rng) {
        rows.push(row(c, j, false)?);
    }
    Ok(PseudoLabelSet { rows })
}
