//! Experiment configuration: a flat `key = value` file with `[section]`
//! headers and `#` comments.
//!
//! ```text
//! [synth]
//! num_companies = 300
//! [eval]
//! global_alphas = 0.0, 0.25, 0.5, 0.75, 1.0
//! seeds = 1, 2, 3, 4, 5
//! ```
//!
//! Unknown sections or keys are rejected. Missing keys keep their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{Loss, TrainConfig};
use crate::meta::{GbdtConfig, RegressionLoss};
use crate::synth::SynthConfig;
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub global_alphas: Vec<f64>,
    pub segment_alphas: Vec<f64>,
    pub folds: usize,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            global_alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            segment_alphas: vec![0.0, 0.25, 0.5, 0.75],
            folds: 5,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    /// Fraction of events (by time) in the train window.
    pub train_fraction: f64,
    pub learner: TrainConfig,
    pub meta: GbdtConfig,
    pub pseudo_negatives_per_positive: usize,
    /// Pair-hash folds for out-of-fold directional scores on meta-model
    /// training rows; 1 uses the in-sample models.
    pub cross_fit_folds: usize,
    pub eval: EvalConfig,
    pub workdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            train_fraction: 0.8,
            learner: TrainConfig::default(),
            meta: GbdtConfig::default(),
            pseudo_negatives_per_positive: 4,
            cross_fit_folds: 4,
            eval: EvalConfig::default(),
            workdir: PathBuf::from("work"),
        }
    }
}

/// Section → key → raw value, in file order of sections.
type RawConfig = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_raw(text: &str, source: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::new();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            raw.entry(name.clone()).or_default();
            section = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(source, n, "expected `key = value`"))?;
        let sec = section
            .as_ref()
            .ok_or_else(|| Error::parse(source, n, "key outside of a section"))?;
        let entries = raw.get_mut(sec).expect("section inserted on header");
        if entries
            .insert(key.trim().to_string(), (n, value.trim().to_string()))
            .is_some()
        {
            return Err(Error::parse(source, n, format!("duplicate key `{}`", key.trim())));
        }
    }
    Ok(raw)
}

struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, (usize, String)>,
    source: &'a str,
}

impl Section<'_> {
    fn take<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some((n, v)) = self.entries.remove(key) {
            *slot = v
                .parse()
                .map_err(|_| Error::parse(self.source, n, format!("invalid value `{v}` for {}.{key}", self.name)))?;
        }
        Ok(())
    }

    fn take_list<T: FromStr>(&mut self, key: &str, slot: &mut Vec<T>) -> Result<()> {
        if let Some((n, v)) = self.entries.remove(key) {
            *slot = v
                .split(',')
                .map(|x| x.trim())
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.parse().map_err(|_| {
                        Error::parse(
                            self.source,
                            n,
                            format!("invalid list item `{x}` for {}.{key}", self.name),
                        )
                    })
                })
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn take_enum<T>(&mut self, key: &str, slot: &mut T, options: &[(&str, T)]) -> Result<()>
    where
        T: Copy,
    {
        if let Some((n, v)) = self.entries.remove(key) {
            *slot = options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::parse(self.source, n, format!("unsupported {}.{key} `{v}`", self.name)))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((k, (n, _))) => Err(Error::parse(self.source, n, format!("unknown key {}.{k}", self.name))),
            None => Ok(()),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut raw = parse_raw(text, source)?;
        let mut cfg = ExperimentConfig::default();
        let mut section = |name: &'static str| Section {
            name,
            entries: raw.remove(name).unwrap_or_default(),
            source,
        };

        let mut s = section("synth");
        let sy = &mut cfg.synth;
        s.take("num_companies", &mut sy.num_companies)?;
        s.take("num_seekers", &mut sy.num_seekers)?;
        s.take("latent_dim", &mut sy.latent_dim)?;
        s.take("exposures_per_company", &mut sy.exposures_per_company)?;
        s.take("scout_scale", &mut sy.scout_scale)?;
        s.take("reply_scale", &mut sy.reply_scale)?;
        s.take("segment_activity_skew", &mut sy.segment_activity_skew)?;
        s.take("affinity_scale", &mut sy.affinity_scale)?;
        s.take("bias_scale", &mut sy.bias_scale)?;
        s.take("low_activity_reply_factor", &mut sy.low_activity_reply_factor)?;
        s.take("train_fraction", &mut cfg.train_fraction)?;
        s.finish()?;

        let mut s = section("learner");
        let l = &mut cfg.learner;
        s.take("latent_dim", &mut l.latent_dim)?;
        s.take("learning_rate", &mut l.learning_rate)?;
        s.take("l2_regularization", &mut l.l2_regularization)?;
        s.take("epochs", &mut l.epochs)?;
        s.take("negatives_per_positive", &mut l.negatives_per_positive)?;
        s.take("rng_seed", &mut l.rng_seed)?;
        s.take_enum(
            "loss",
            &mut l.loss,
            &[("binary-cross-entropy", Loss::BinaryCrossEntropy)],
        )?;
        s.finish()?;

        let mut s = section("meta");
        let m = &mut cfg.meta;
        s.take("num_trees", &mut m.num_trees)?;
        s.take("max_depth", &mut m.max_depth)?;
        s.take("min_samples_leaf", &mut m.min_samples_leaf)?;
        s.take("shrinkage", &mut m.shrinkage)?;
        s.take("subsample_fraction", &mut m.subsample_fraction)?;
        s.take("rng_seed", &mut m.rng_seed)?;
        s.take_enum("loss", &mut m.loss, &[("squared-error", RegressionLoss::SquaredError)])?;
        s.take("pseudo_negatives_per_positive", &mut cfg.pseudo_negatives_per_positive)?;
        s.take("cross_fit_folds", &mut cfg.cross_fit_folds)?;
        s.finish()?;

        let mut s = section("eval");
        let e = &mut cfg.eval;
        s.take("k", &mut e.k)?;
        s.take_list("global_alphas", &mut e.global_alphas)?;
        s.take_list("segment_alphas", &mut e.segment_alphas)?;
        s.take("folds", &mut e.folds)?;
        s.take_list("seeds", &mut e.seeds)?;
        s.finish()?;

        let mut s = section("paths");
        let mut workdir = cfg.workdir.display().to_string();
        s.take("workdir", &mut workdir)?;
        cfg.workdir = PathBuf::from(workdir);
        s.finish()?;

        if let Some(name) = raw.keys().next() {
            return Err(Error::Config(format!("{source}: unknown section [{name}]")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.learner.validate()?;
        self.meta.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("synth.train_fraction must be in (0, 1)".into()));
        }
        let e = &self.eval;
        if self.cross_fit_folds == 0 {
            return Err(Error::Config("meta.cross_fit_folds must be at least 1".into()));
        }
        if e.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must not be empty".into()));
        }
        if e.folds == 0 {
            return Err(Error::Config("eval.folds must be at least 1".into()));
        }
        if e.global_alphas.is_empty() || e.segment_alphas.is_empty() {
            return Err(Error::Config("eval alpha grids must not be empty".into()));
        }
        if let Some(a) = e
            .global_alphas
            .iter()
            .chain(&e.segment_alphas)
            .find(|a| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::InvalidWeight(*a));
        }
        Ok(())
    }

    /// Renders the config in the file format; parsing the output yields `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "{}", self.synth_section());
        let _ = writeln!(out, "{}", self.learner_section());
        let _ = writeln!(out, "{}", self.meta_section());
        let e = &self.eval;
        let _ = writeln!(out, "[eval]");
        let _ = writeln!(out, "k = {}", e.k);
        let _ = writeln!(out, "global_alphas = {}", list(&e.global_alphas));
        let _ = writeln!(out, "segment_alphas = {}", list(&e.segment_alphas));
        let _ = writeln!(out, "folds = {}", e.folds);
        let _ = writeln!(
            out,
            "seeds = {}\n",
            e.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(out, "[paths]\nworkdir = {}", self.workdir.display());
        out
    }

    fn synth_section(&self) -> String {
        let s = &self.synth;
        format!(
            "[synth]\nnum_companies = {}\nnum_seekers = {}\nlatent_dim = {}\nexposures_per_company = {}\n\
             scout_scale = {:?}\nreply_scale = {:?}\nsegment_activity_skew = {:?}\naffinity_scale = {:?}\n\
             bias_scale = {:?}\nlow_activity_reply_factor = {:?}\ntrain_fraction = {:?}\n",
            s.num_companies,
            s.num_seekers,
            s.latent_dim,
            s.exposures_per_company,
            s.scout_scale,
            s.reply_scale,
            s.segment_activity_skew,
            s.affinity_scale,
            s.bias_scale,
            s.low_activity_reply_factor,
            self.train_fraction
        )
    }

    fn learner_section(&self) -> String {
        let l = &self.learner;
        format!(
            "[learner]\nlatent_dim = {}\nlearning_rate = {:?}\nl2_regularization = {:?}\nepochs = {}\n\
             negatives_per_positive = {}\nrng_seed = {}\nloss = binary-cross-entropy\n",
            l.latent_dim, l.learning_rate, l.l2_regularization, l.epochs, l.negatives_per_positive, l.rng_seed
        )
    }

    fn meta_section(&self) -> String {
        let m = &self.meta;
        format!(
            "[meta]\nnum_trees = {}\nmax_depth = {}\nmin_samples_leaf = {}\nshrinkage = {:?}\n\
             subsample_fraction = {:?}\nrng_seed = {}\nloss = squared-error\npseudo_negatives_per_positive = {}\n\
             cross_fit_folds = {}\n",
            m.num_trees,
            m.max_depth,
            m.min_samples_leaf,
            m.shrinkage,
            m.subsample_fraction,
            m.rng_seed,
            self.pseudo_negatives_per_positive,
            self.cross_fit_folds
        )
    }

    /// Content hash of the data-generation inputs.
    pub fn data_key(&self, seed: u64) -> String {
        hash_parts(&[&self.synth_section(), &seed.to_string()])
    }

    /// Content hash of everything the directional and DMP models depend on.
    pub fn model_key(&self, seed: u64) -> String {
        hash_parts(&[&self.data_key(seed), &self.learner_section()])
    }

    /// Content hash of everything a meta-model depends on, minus its alpha policy.
    pub fn meta_key(&self, seed: u64) -> String {
        hash_parts(&[&self.model_key(seed), &self.meta_section()])
    }

    /// Synth config for one run seed.
    pub fn synth_for(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            rng_seed: seed,
            ..self.synth.clone()
        }
    }

    pub fn learner_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            rng_seed: derive_seed(seed, self.learner.rng_seed),
            ..self.learner.clone()
        }
    }

    pub fn meta_for(&self, seed: u64) -> GbdtConfig {
        GbdtConfig {
            rng_seed: derive_seed(seed, self.meta.rng_seed),
            ..self.meta.clone()
        }
    }
}

pub fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_text() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_text(), "mem").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let text = "# tiny\n[synth]\nnum_companies = 30 # inline\n[eval]\nglobal_alphas = 0.0\nseeds = 4, 9\n";
        let cfg = ExperimentConfig::parse(text, "mem").unwrap();
        assert_eq!(cfg.synth.num_companies, 30);
        assert_eq!(cfg.eval.global_alphas, vec![0.0]);
        assert_eq!(cfg.eval.seeds, vec![4, 9]);
        assert_eq!(cfg.learner, TrainConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::parse("[synth]\nbogus = 1\n", "mem").is_err());
        assert!(ExperimentConfig::parse("[nope]\n", "mem").is_err());
        assert!(ExperimentConfig::parse("k = 1\n", "mem").is_err());
        assert!(ExperimentConfig::parse("[eval]\nk = ten\n", "mem").is_err());
        assert!(ExperimentConfig::parse("[eval]\nseeds =\n", "mem").is_err());
        assert!(ExperimentConfig::parse("[eval]\nglobal_alphas = 0.5, 1.5\n", "mem").is_err());
        assert!(ExperimentConfig::parse("[meta]\nloss = huber\n", "mem").is_err());
    }

    #[test]
    fn eval_changes_leave_model_keys_alone() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.eval.k = 5;
        b.eval.global_alphas = vec![0.5];
        assert_eq!(a.model_key(1), b.model_key(1));
        assert_eq!(a.meta_key(1), b.meta_key(1));
        let mut c = a.clone();
        c.learner.epochs += 1;
        assert_ne!(a.model_key(1), c.model_key(1));
        assert_eq!(a.data_key(1), c.data_key(1));
    }
}
