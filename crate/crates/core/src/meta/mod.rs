//! The meta-model: gradient-boosted trees regressed onto pseudo-match
//! scores, and the ranking it induces.

pub mod features;
pub mod gbdt;

pub use features::{feature_spec, featurize, FeatureContext, FEATURE_NAMES, NUM_FEATURES};
pub use gbdt::{train_gbdt, FeatureMatrix, GbdtConfig, GbdtFit, GbdtModel, Node, RegressionLoss, Tree};

use crate::domain::{CompanyId, SeekerId};
use crate::error::{Error, Result};
use crate::learners::PairScoreModel;
use crate::pseudo::PseudoLabelSet;
use crate::util::rank_descending;

/// Featurizes every pseudo-labelled pair and fits the ensemble to `s_pseudo`.
pub fn train_meta(labels: &PseudoLabelSet, ctx: &FeatureContext<'_>, cfg: &GbdtConfig) -> Result<GbdtFit> {
    if labels.is_empty() {
        return Err(Error::DegenerateLabels("no pseudo-labelled rows".into()));
    }
    let pairs: Vec<_> = labels.rows.iter().map(|r| (r.company, r.seeker)).collect();
    let x = ctx.featurize_all(&pairs)?;
    train_gbdt(&x, &feature_spec(), &labels.targets(), cfg)
}

/// A trained ensemble bound to the context that featurizes its inputs.
pub struct MetaScorer<'a> {
    pub model: &'a GbdtModel,
    pub ctx: &'a FeatureContext<'a>,
}

impl PairScoreModel for MetaScorer<'_> {
    fn num_companies(&self) -> u32 {
        self.ctx.scout.num_companies().min(self.ctx.reply.num_companies())
    }

    fn num_seekers(&self) -> u32 {
        self.ctx.scout.num_seekers().min(self.ctx.reply.num_seekers())
    }

    fn score(&self, company: CompanyId, seeker: SeekerId) -> f64 {
        match self.ctx.featurize(company, seeker) {
            Ok(x) => self.model.predict(&x),
            Err(_) => 0.0,
        }
    }
}

/// Ranks candidates by meta-model prediction, ties by ascending seeker id.
pub fn bob_rank(
    model: &GbdtModel,
    ctx: &FeatureContext<'_>,
    company: CompanyId,
    candidates: &[SeekerId],
) -> Result<Vec<SeekerId>> {
    let scores = candidates
        .iter()
        .map(|&j| Ok(model.predict(&ctx.featurize(company, j)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rank_descending(candidates, &scores))
}
