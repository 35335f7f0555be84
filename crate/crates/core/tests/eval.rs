use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recipro::config::ExperimentConfig;
use recipro::domain::{CompanyId, Dataset, InteractionEvent, SeekerId, Segment};
use recipro::eval::{
    build_candidates, evaluate_method, ndcg_at_k, score_ranker, time_folds, tune_alpha, BobSettings, RankedList,
    TuneMode,
};
use recipro::pipeline::{bob_settings, data_stage};
use recipro::pseudo::AlphaPolicy;
use recipro::synth::oracle_rank;

/// DCG over every prefix position, straight from the definition.
fn brute_ndcg(order: &[u32], relevant: &[u32], k: usize) -> f64 {
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, j)| {
            if relevant.contains(j) {
                1.0 / ((i + 2) as f64).log2()
            } else {
                0.0
            }
        })
        .sum();
    let ideal: f64 = (0..relevant.len().min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

#[test]
fn ndcg_matches_the_definition_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let n = rng.random_range(1..=30u32);
        let mut order: Vec<u32> = (0..n).collect();
        order.shuffle(&mut rng);
        let relevant: Vec<u32> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
        let rel: HashMap<SeekerId, bool> = (0..n).map(|j| (SeekerId(j), relevant.contains(&j))).collect();
        let list = RankedList::new(CompanyId(0), order.iter().map(|&j| SeekerId(j)).collect()).unwrap();
        let k = rng.random_range(1..=12);
        let got = ndcg_at_k(&list, &rel, k).unwrap();
        assert!((got - brute_ndcg(&order, &relevant, k)).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&got));
    }
}

#[test]
fn ndcg_ignores_reordering_of_irrelevant_tail() {
    let rel: HashMap<SeekerId, bool> = (0..20).map(|j| (SeekerId(j), j == 3 || j == 5)).collect();
    let mut order: Vec<SeekerId> = (0..20).map(SeekerId).collect();
    let base = ndcg_at_k(&RankedList::new(CompanyId(0), order.clone()).unwrap(), &rel, 10).unwrap();
    order[10..].reverse();
    order.swap(12, 19);
    let v = ndcg_at_k(&RankedList::new(CompanyId(0), order).unwrap(), &rel, 10).unwrap();
    assert_eq!(v.to_bits(), base.to_bits());
}

fn ev(ts: i64, c: u32, j: u32, m: bool) -> InteractionEvent {
    InteractionEvent {
        timestamp: ts,
        company: CompanyId(c),
        seeker: SeekerId(j),
        scout_sent: m,
        replied: m,
    }
}

#[test]
fn candidates_keep_relevance_per_seeker() {
    let test = Dataset::new(vec![ev(1, 2, 4, false), ev(2, 2, 7, true)], 3, 10).unwrap();
    let c = build_candidates(&test).unwrap();
    assert_eq!(
        c.companies[&CompanyId(2)],
        vec![(SeekerId(4), false), (SeekerId(7), true)]
    );
    assert_eq!(c.num_companies(), 1);
}

#[test]
fn candidates_match_a_group_by_on_the_benchmark() {
    let cfg = ExperimentConfig::default();
    let data = data_stage(&cfg, cfg.eval.seeds[0], None).unwrap();
    let mut oracle: BTreeMap<u32, BTreeMap<u32, bool>> = BTreeMap::new();
    for e in data.test.events() {
        let slot = oracle
            .entry(e.company.0)
            .or_default()
            .entry(e.seeker.0)
            .or_insert(false);
        *slot |= e.match_label();
    }
    assert_eq!(data.candidates.num_companies(), oracle.len());
    for (c, seekers) in &oracle {
        let mut got = data.candidates.companies[&CompanyId(*c)].clone();
        got.sort();
        let want: Vec<_> = seekers.iter().map(|(&j, &r)| (SeekerId(j), r)).collect();
        assert_eq!(got, want, "company {c}");
    }
}

#[test]
fn oracle_dominates_its_reverse_and_relevance_ranking_is_perfect() {
    let cfg = ExperimentConfig::default();
    let data = data_stage(&cfg, cfg.eval.seeds[0], None).unwrap();
    let k = cfg.eval.k;
    let oracle = evaluate_method(
        "oracle",
        |c, cands: &[SeekerId]| Ok(oracle_rank(&data.truth, c, cands)),
        &data.candidates,
        &data.segments,
        k,
        1,
    )
    .unwrap();
    let reversed = evaluate_method(
        "reversed",
        |c, cands: &[SeekerId]| {
            let mut r = oracle_rank(&data.truth, c, cands);
            r.reverse();
            Ok(r)
        },
        &data.candidates,
        &data.segments,
        k,
        1,
    )
    .unwrap();
    assert!(oracle.overall > reversed.overall);

    let relevance: HashMap<(CompanyId, SeekerId), bool> = data
        .candidates
        .companies
        .iter()
        .flat_map(|(&c, v)| v.iter().map(move |&(j, r)| ((c, j), r)))
        .collect();
    let perfect = evaluate_method(
        "perfect",
        |c, cands: &[SeekerId]| {
            let mut v = cands.to_vec();
            v.sort_by_key(|&j| (!relevance[&(c, j)], j));
            Ok(v)
        },
        &data.candidates,
        &data.segments,
        k,
        1,
    )
    .unwrap();
    assert_eq!(perfect.overall, 1.0);
    let counted: usize = Segment::ALL.iter().map(|s| perfect.segments[s.index()].1).sum();
    assert_eq!(counted, perfect.overall_companies);
    assert_eq!(
        perfect.overall_companies + perfect.companies_without_positive,
        data.candidates.num_companies()
    );
}

#[test]
fn evaluation_is_identical_across_thread_counts() {
    let cfg = ExperimentConfig::default();
    let data = data_stage(&cfg, cfg.eval.seeds[0], None).unwrap();
    let one = evaluate_method(
        "oracle",
        score_ranker(&data.truth),
        &data.candidates,
        &data.segments,
        10,
        1,
    )
    .unwrap();
    let again = evaluate_method(
        "oracle",
        score_ranker(&data.truth),
        &data.candidates,
        &data.segments,
        10,
        1,
    )
    .unwrap();
    let four = evaluate_method(
        "oracle",
        score_ranker(&data.truth),
        &data.candidates,
        &data.segments,
        10,
        4,
    )
    .unwrap();
    assert_eq!(one, again);
    assert_eq!(one, four);
    assert_eq!(one.overall.to_bits(), four.overall.to_bits());
}

fn quick_settings(cfg: &ExperimentConfig) -> BobSettings {
    let mut s = bob_settings(cfg, 1, 1);
    s.meta.num_trees = 20;
    s
}

#[test]
fn singleton_grid_returns_without_search() {
    let cfg = ExperimentConfig::default();
    let tiny = Dataset::new(vec![ev(1, 0, 0, true)], 1, 1).unwrap();
    // One event cannot form folds, so any search would fail.
    let (p, trace) = tune_alpha(&tiny, 5, TuneMode::Global, &[0.25], &quick_settings(&cfg)).unwrap();
    assert_eq!(p, AlphaPolicy::Global(0.25));
    assert!(trace.is_empty());
    assert!(tune_alpha(&tiny, 5, TuneMode::Global, &[0.25, 0.5], &quick_settings(&cfg)).is_err());
}

#[test]
fn folds_are_expanding_time_windows() {
    let events: Vec<_> = (0..100)
        .map(|i| ev(i, (i % 5) as u32, (i % 7) as u32, i % 3 == 0))
        .collect();
    let data = Dataset::new(events, 5, 7).unwrap();
    let folds = time_folds(&data, 5).unwrap();
    assert_eq!(folds.len(), 5);
    for (f, (fit, val)) in folds.iter().enumerate() {
        assert_eq!(fit.len(), 10 * (5 + f));
        assert_eq!(val.len(), 10);
        assert!(fit.max_timestamp().unwrap() < val.min_timestamp().unwrap());
    }
    assert!(time_folds(&data.slice(0..3), 5).is_err());
}

#[test]
fn per_segment_tuning_reads_only_train_and_yields_a_full_trace() {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.num_companies = 60;
    cfg.synth.num_seekers = 300;
    let data = data_stage(&cfg, 2, None).unwrap();
    let grid = [0.0, 0.5];
    let settings = quick_settings(&cfg);
    let (policy, trace) = tune_alpha(&data.train, 2, TuneMode::PerSegment, &grid, &settings).unwrap();
    assert!(matches!(policy, AlphaPolicy::PerSegment(_)));
    policy.validate().unwrap();
    assert_eq!(trace.len(), 2 * grid.len() * 3);
    let (again, _) = tune_alpha(&data.train, 2, TuneMode::PerSegment, &grid, &settings).unwrap();
    assert_eq!(policy, again);
}
