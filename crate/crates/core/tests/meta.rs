use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recipro::domain::{CompanyId, Dataset, InteractionEvent, SeekerId, Segment, SegmentAssignment};
use recipro::learners::PairScoreModel;
use recipro::meta::{
    bob_rank, feature_spec, train_gbdt, FeatureContext, FeatureMatrix, GbdtConfig, GbdtModel, Node, NUM_FEATURES,
};

fn cfg() -> GbdtConfig {
    GbdtConfig {
        num_trees: 40,
        max_depth: 3,
        min_samples_leaf: 5,
        shrinkage: 0.3,
        subsample_fraction: 1.0,
        ..GbdtConfig::default()
    }
}

fn random_problem(rows: usize, features: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = FeatureMatrix::new(features);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..features).map(|_| rng.random::<f64>()).collect();
        let target = (0.6 * row[0] + 0.3 * (row[1] > 0.4) as u8 as f64 + 0.1 * rng.random::<f64>()).min(1.0);
        x.push_row(&row);
        y.push(target);
    }
    (x, y)
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

#[test]
fn identical_targets_give_a_constant_model() {
    let (x, _) = random_problem(50, 3, 1);
    let fit = train_gbdt(&x, &names(3), &[0.3; 50], &cfg()).unwrap();
    assert!(fit.model.trees.is_empty());
    assert_eq!(fit.model.predict(&[0.9, 0.1, 0.5]), 0.3);
    assert_eq!(fit.model.predict(&[-4.0, 7.0, 0.0]), 0.3);
}

#[test]
fn stumps_recover_a_step_function() {
    let mut x = FeatureMatrix::new(1);
    let mut y = Vec::new();
    for i in 0..200 {
        let v = i as f64 / 199.0;
        x.push_row(&[v]);
        y.push(if v > 0.5 { 1.0 } else { 0.0 });
    }
    let c = GbdtConfig {
        num_trees: 200,
        max_depth: 1,
        shrinkage: 1.0,
        subsample_fraction: 1.0,
        ..GbdtConfig::default()
    };
    let fit = train_gbdt(&x, &names(1), &y, &c).unwrap();
    let mse = fit.mse_history.last().copied().unwrap();
    assert!(mse < 1e-4, "training MSE {mse}");
}

#[test]
fn training_loss_never_increases_without_subsampling() {
    for seed in 0..3 {
        let (x, y) = random_problem(400, 4, seed);
        let fit = train_gbdt(&x, &names(4), &y, &cfg()).unwrap();
        assert_eq!(fit.mse_history.len(), fit.model.trees.len() + 1);
        for w in fit.mse_history.windows(2) {
            assert!(w[1] <= w[0], "MSE rose from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn splits_are_valid_and_predictions_clamped() {
    let (x, y) = random_problem(300, 3, 5);
    let fit = train_gbdt(&x, &names(3), &y, &cfg()).unwrap();
    let m = &fit.model;
    for t in &m.trees {
        for node in &t.nodes {
            match node {
                Node::Split { feature, threshold, .. } => {
                    assert!(*feature < 3);
                    assert!(threshold.is_finite());
                }
                Node::Leaf { value } => assert!(value.is_finite()),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let row: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..3.0)).collect();
        let p = m.predict(&row);
        assert_eq!(p, m.predict_raw(&row).clamp(0.0, 1.0));
    }
}

fn thresholds(model: &GbdtModel, feature: usize) -> Vec<f64> {
    let mut t: Vec<f64> = model
        .trees
        .iter()
        .flat_map(|t| &t.nodes)
        .filter_map(|n| match n {
            Node::Split {
                feature: f, threshold, ..
            } if *f == feature => Some(*threshold),
            _ => None,
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

#[test]
fn predictions_are_piecewise_constant() {
    let (x, y) = random_problem(300, 3, 11);
    let model = train_gbdt(&x, &names(3), &y, &cfg()).unwrap().model;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let row: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let f = rng.random_range(0..3);
        let ts = thresholds(&model, f);
        // Interval (lo, hi] holding row[f]; any other point in it routes identically.
        let lo = ts
            .iter()
            .copied()
            .filter(|&t| t < row[f])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = ts.iter().copied().find(|&t| t >= row[f]).unwrap_or(f64::INFINITY);
        let lo = lo.max(-10.0);
        let hi = hi.min(10.0);
        let mut moved = row.clone();
        moved[f] = if hi == 10.0 { (row[f] + hi) / 2.0 } else { hi };
        if moved[f] <= lo {
            continue;
        }
        assert_eq!(model.predict(&row).to_bits(), model.predict(&moved).to_bits());
    }
}

#[test]
fn save_load_reproduces_predictions_bitwise() {
    let (x, y) = random_problem(300, 4, 21);
    let mut c = cfg();
    c.subsample_fraction = 0.7;
    let model = train_gbdt(&x, &names(4), &y, &c).unwrap().model;
    let mut buf = Vec::new();
    model.save(&mut buf).unwrap();
    let loaded = GbdtModel::load(buf.as_slice(), "mem").unwrap();
    assert_eq!(loaded.feature_spec, model.feature_spec);
    assert_eq!(loaded.trees.len(), model.trees.len());
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..500 {
        let row: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        assert_eq!(model.predict_raw(&row).to_bits(), loaded.predict_raw(&row).to_bits());
    }
    let mut again = Vec::new();
    loaded.save(&mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn load_rejects_bad_files() {
    assert!(GbdtModel::load("recipro-gbdt v9\n".as_bytes(), "mem").is_err());
    assert!(GbdtModel::load("".as_bytes(), "mem").is_err());
}

#[test]
fn same_seed_gives_the_same_ensemble() {
    let (x, y) = random_problem(200, 3, 31);
    let mut c = cfg();
    c.subsample_fraction = 0.5;
    let a = train_gbdt(&x, &names(3), &y, &c).unwrap().model;
    let b = train_gbdt(&x, &names(3), &y, &c).unwrap().model;
    assert_eq!(a, b);
}

/// Constant directional scores, so feature arithmetic is easy to check.
struct Fixed {
    p: f64,
    dims: (u32, u32),
}

impl PairScoreModel for Fixed {
    fn num_companies(&self) -> u32 {
        self.dims.0
    }
    fn num_seekers(&self) -> u32 {
        self.dims.1
    }
    fn score(&self, _: CompanyId, _: SeekerId) -> f64 {
        self.p
    }
}

/// Score depends on the pair, so rankings are non-trivial.
struct Hashy;

impl PairScoreModel for Hashy {
    fn num_companies(&self) -> u32 {
        40
    }
    fn num_seekers(&self) -> u32 {
        60
    }
    fn score(&self, c: CompanyId, j: SeekerId) -> f64 {
        ((c.0 * 31 + j.0 * 17) % 97) as f64 / 97.0
    }
}

fn ev(ts: i64, c: u32, j: u32, scout: bool, reply: bool) -> InteractionEvent {
    InteractionEvent {
        timestamp: ts,
        company: CompanyId(c),
        seeker: SeekerId(j),
        scout_sent: scout,
        replied: reply,
    }
}

#[test]
fn product_and_harmonic_mean_features() {
    let train = Dataset::new(vec![ev(1, 0, 0, true, true)], 4, 6).unwrap();
    let segments = SegmentAssignment::from_vec(vec![Segment::High; 4]);
    let (p, q) = (Fixed { p: 0.4, dims: (4, 6) }, Fixed { p: 0.5, dims: (4, 6) });
    let ctx = FeatureContext::new(&train, &p, &q, &segments);
    let f = ctx.featurize(CompanyId(1), SeekerId(2)).unwrap();
    assert_eq!(f[0], 0.4);
    assert_eq!(f[1], 0.5);
    assert!((f[2] - 0.20).abs() < 1e-15);
    assert!((f[3] - 4.0 / 9.0).abs() < 1e-15);
    assert!((f[3] - 0.4444).abs() < 1e-4);
    assert!(ctx.featurize(CompanyId(4), SeekerId(0)).is_err());
    assert!(ctx.featurize(CompanyId(0), SeekerId(6)).is_err());
}

#[test]
fn unseen_company_gets_zero_activity_and_low_segment() {
    let train = Dataset::new(vec![ev(1, 0, 0, true, false), ev(2, 0, 1, true, true)], 4, 6).unwrap();
    // Company 3 is missing from the assignment as well as from the log.
    let segments = SegmentAssignment::from_vec(vec![Segment::High; 3]);
    let (p, q) = (Fixed { p: 0.4, dims: (4, 6) }, Fixed { p: 0.5, dims: (4, 6) });
    let ctx = FeatureContext::new(&train, &p, &q, &segments);
    let f = ctx.featurize(CompanyId(3), SeekerId(5)).unwrap();
    assert_eq!(&f[4..6], &[0.0, 0.0]);
    assert_eq!(&f[6..8], &[0.0, 0.0]);
    assert_eq!(&f[8..], &[0.0, 0.0, 1.0]);
}

#[test]
fn features_match_recomputation_from_the_log() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let events: Vec<_> = (0..3000)
        .map(|i| {
            let scout = rng.random_bool(0.3);
            ev(
                i,
                rng.random_range(0..40),
                rng.random_range(0..60),
                scout,
                scout && rng.random_bool(0.4),
            )
        })
        .collect();
    let train = Dataset::new(events, 40, 60).unwrap();
    let segments = SegmentAssignment::from_vec((0..40).map(|c| Segment::ALL[c % 3]).collect());
    let ctx = FeatureContext::new(&train, &Hashy, &Fixed { p: 0.3, dims: (40, 60) }, &segments);
    for _ in 0..20 {
        let (c, j) = (rng.random_range(0..40u32), rng.random_range(0..60u32));
        let f = ctx.featurize(CompanyId(c), SeekerId(j)).unwrap();
        assert_eq!(f.len(), NUM_FEATURES);
        let others = train.events().iter().filter(|e| !(e.company.0 == c && e.seeker.0 == j));
        let (mut c_scouts, mut c_replies, mut s_exposures, mut s_scouts, mut s_replies) = (0, 0, 0, 0, 0);
        for e in others {
            if e.company.0 == c {
                c_scouts += e.scout_sent as u32;
                c_replies += e.replied as u32;
            }
            if e.seeker.0 == j {
                s_exposures += 1;
                s_scouts += e.scout_sent as u32;
                s_replies += e.replied as u32;
            }
        }
        let ratio = |a: u32, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = Hashy.score(CompanyId(c), SeekerId(j));
        let hm = if p + 0.3 == 0.0 { 0.0 } else { 2.0 * p * 0.3 / (p + 0.3) };
        let mut seg = [0.0; 3];
        seg[c as usize % 3] = 1.0;
        let expected = [
            p,
            0.3,
            p * 0.3,
            hm,
            c_scouts as f64,
            ratio(c_replies, c_scouts),
            s_exposures as f64,
            ratio(s_replies, s_scouts),
            seg[0],
            seg[1],
            seg[2],
        ];
        for (k, (a, b)) in f.iter().zip(expected).enumerate() {
            assert!((a - b).abs() < 1e-12, "feature {k} of ({c},{j}): {a} vs {b}");
        }
    }
}

#[test]
fn bob_rank_orders_by_prediction_with_id_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let events: Vec<_> = (0..2000)
        .map(|i| {
            let scout = rng.random_bool(0.3);
            ev(
                i,
                rng.random_range(0..40),
                rng.random_range(0..60),
                scout,
                scout && rng.random_bool(0.4),
            )
        })
        .collect();
    let train = Dataset::new(events, 40, 60).unwrap();
    let segments = recipro::domain::assign_segments(&train);
    let reply = Fixed { p: 0.5, dims: (40, 60) };
    let ctx = FeatureContext::new(&train, &Hashy, &reply, &segments);
    let pairs: Vec<_> = train.events().iter().map(|e| (e.company, e.seeker)).collect();
    let x = ctx.featurize_all(&pairs).unwrap();
    let y: Vec<f64> = train.events().iter().map(|e| e.match_label() as u8 as f64).collect();
    let model = train_gbdt(&x, &feature_spec(), &y, &cfg()).unwrap().model;

    let c = CompanyId(3);
    assert_eq!(bob_rank(&model, &ctx, c, &[SeekerId(9)]).unwrap(), vec![SeekerId(9)]);

    let candidates: Vec<SeekerId> = (0..50).map(|j| SeekerId((j * 7) % 60)).collect();
    let ranked = bob_rank(&model, &ctx, c, &candidates).unwrap();
    let mut oracle: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&j| (model.predict(&ctx.featurize(c, j).unwrap()), j.0))
        .collect();
    oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    assert_eq!(ranked, oracle.iter().map(|&(_, j)| SeekerId(j)).collect::<Vec<_>>());

    let constant = train_gbdt(&x, &feature_spec(), &vec![0.2; y.len()], &cfg())
        .unwrap()
        .model;
    let ranked = bob_rank(&constant, &ctx, c, &[SeekerId(5), SeekerId(2), SeekerId(40)]).unwrap();
    assert_eq!(ranked, vec![SeekerId(2), SeekerId(5), SeekerId(40)]);
}
