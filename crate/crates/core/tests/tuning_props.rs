use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xfactor_core::hmm::{self, GaussianHmm, TrainConfig};
use xfactor_core::models::{self, ActivitySet, Variant};
use xfactor_core::tuning::{
    iqr_outliers, select_xi, split_outliers, split_with_models, stratified_folds, trace_csv, TuningData,
};

/// Type-7 quantile by explicit sort and interpolation.
fn oracle_quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn oracle_flags(xs: &[f64], omega: f64) -> Vec<bool> {
    if xs.len() < 4 {
        return vec![false; xs.len()];
    }
    let q1 = oracle_quantile(xs, 0.25);
    let q3 = oracle_quantile(xs, 0.75);
    let iqr = q3 - q1;
    xs.iter().map(|&x| x < q1 - omega * iqr || x > q3 + omega * iqr).collect()
}

fn score_set(rng: &mut impl Rng, case: usize) -> Vec<f64> {
    let n = rng.random_range(1..40);
    match case % 4 {
        0 => vec![-12.5; n],
        1 => (0..n).map(|_| rng.random_range(-100.0..0.0)).collect(),
        2 => (0..n)
            .map(|_| if rng.random_bool(0.1) { rng.random_range(-1e4..-1e3) } else { rng.random_range(-60.0..-40.0) })
            .collect(),
        _ => (0..n).map(|_| rng.random_range(-5i32..5) as f64).collect(),
    }
}

#[test]
fn iqr_rule_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..100 {
        let scores = score_set(&mut rng, case);
        let (_, flags) = iqr_outliers(&scores, 1.5);
        assert_eq!(flags, oracle_flags(&scores, 1.5), "case {case}: {scores:?}");
        if case % 4 == 0 {
            assert!(flags.iter().all(|f| !f));
        }
    }
}

#[test]
fn worked_quartile_example() {
    let (q, flags) = iqr_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0], 1.5);
    let q = q.unwrap();
    assert_eq!((q.q1, q.q3, q.iqr), (2.0, 4.0, 2.0));
    assert_eq!(flags, vec![false, false, false, false, true]);
}

fn activity_sets(rng: &mut impl Rng, counts: &[usize], len: usize) -> (Vec<GaussianHmm>, Vec<Vec<Vec<Vec<f64>>>>) {
    let sources: Vec<GaussianHmm> = counts
        .iter()
        .enumerate()
        .map(|(a, _)| {
            let c = 3.0 * a as f64;
            GaussianHmm::new(
                vec![0.5, 0.5],
                vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                vec![vec![c, -c], vec![c + 1.0, 1.0 - c]],
                vec![vec![0.3, 0.4], vec![0.5, 0.3]],
            )
            .unwrap()
        })
        .collect();
    let data = counts
        .iter()
        .zip(&sources)
        .map(|(&n, m)| (0..n).map(|_| m.sample(len, rng).1).collect())
        .collect();
    (sources, data)
}

fn as_sets(data: &[Vec<Vec<Vec<f64>>>]) -> Vec<ActivitySet<'_>> {
    data.iter()
        .enumerate()
        .map(|(a, seqs)| ActivitySet {
            name: format!("act{a}"),
            sequences: seqs.iter().map(Vec::as_slice).collect(),
        })
        .collect()
}

#[test]
fn split_outliers_decisions_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (sources, mut data) = activity_sets(&mut rng, &[30, 3, 20], 10);
    // plant a few far sequences
    for k in 0..3 {
        data[0][k * 7] = sources[0].inflated(30.0).sample(10, &mut rng).1;
    }
    let sets = as_sets(&data);
    let split = split_outliers(&sets, 1.5, 2, &TrainConfig::default()).unwrap();
    for (a, act) in split.activities.iter().enumerate() {
        let flags = oracle_flags(&act.scores, 1.5);
        let expect: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
        assert_eq!(act.outliers, expect);
        let mut all: Vec<usize> = act.non_fall.iter().chain(&act.outliers).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..data[a].len()).collect::<Vec<_>>());
    }
    assert!(split.activities[1].quartiles.is_none());
    assert!(split.activities[1].outliers.is_empty());
    for k in 0..3 {
        assert!(split.activities[0].outliers.contains(&(k * 7)));
    }
    assert_eq!(split.outlier_sequences(&sets).len(), split.n_outliers());
}

#[test]
fn outlier_decisions_are_local_to_each_activity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (_, data) = activity_sets(&mut rng, &[25, 25], 8);
    let cfg = TrainConfig::default();
    let base = split_outliers(&as_sets(&data), 1.5, 2, &cfg).unwrap();
    let mut shuffled = data.clone();
    rand::seq::SliceRandom::shuffle(&mut shuffled[1][..], &mut rng);
    shuffled[1].truncate(15);
    let other = split_outliers(&as_sets(&shuffled), 1.5, 2, &cfg).unwrap();
    assert_eq!(base.activities[0], other.activities[0]);
}

fn xi_data(seed: u64) -> (Vec<Vec<Vec<Vec<f64>>>>, Vec<Vec<Vec<f64>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sources, data) = activity_sets(&mut rng, &[24, 24], 8);
    // proxies: frames displaced by 8 standard deviations from a state mean
    let outliers = (0..12)
        .map(|i| {
            let m = &sources[i % 2];
            (0..8)
                .map(|_| {
                    let s = rng.random_range(0..2);
                    (0..2)
                        .map(|d| {
                            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                            m.means[s][d] + sign * 8.0 * m.vars[s][d].sqrt()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    (data, outliers)
}

#[test]
fn xi_tuned_on_far_proxies_flags_them() {
    let (data, outliers) = xi_data(21);
    let sets = as_sets(&data);
    let tuning = TuningData::Pose {
        sets: sets.clone(),
        outliers: outliers.iter().map(Vec::as_slice).collect(),
    };
    let cfg = TrainConfig::default().with_seed(5);
    let grid = [1.0, 1.5, 5.0, 10.0, 100.0];
    for variant in [Variant::Xhmm1, Variant::Xhmm2] {
        let sel = select_xi(variant, &tuning, &grid, 3, 2, &cfg).unwrap();
        assert!(sel.chosen_xi > 1.0);
        assert_eq!(sel.trace.len(), grid.len() * 3);
        let pooled: Vec<&[Vec<f64>]> = sets.iter().flat_map(|s| s.sequences.iter().copied()).collect();
        let det = match variant {
            Variant::Xhmm1 => {
                let ms = models::train_activity_models(&sets, 2, &cfg).unwrap();
                models::build_xhmm1(vec!["act0".into(), "act1".into()], ms, sel.chosen_xi).unwrap()
            }
            _ => models::build_xhmm2(hmm::train(&pooled, 2, &cfg).unwrap().0, sel.chosen_xi).unwrap(),
        };
        let flagged = outliers.iter().filter(|o| det.classify(o).unwrap().is_fall).count();
        assert!(flagged as f64 > 0.9 * outliers.len() as f64, "{variant}: {flagged}");
    }
}

#[test]
fn xi_selection_is_deterministic_and_respects_grid() {
    let (data, outliers) = xi_data(22);
    let tuning = TuningData::Pose {
        sets: as_sets(&data),
        outliers: outliers.iter().map(Vec::as_slice).collect(),
    };
    let cfg = TrainConfig::default().with_seed(7);
    let a = select_xi(Variant::Xhmm2, &tuning, &[1.5, 5.0, 10.0, 100.0], 3, 2, &cfg).unwrap();
    let b = select_xi(Variant::Xhmm2, &tuning, &[1.5, 5.0, 10.0, 100.0], 3, 2, &cfg).unwrap();
    assert_eq!(trace_csv(&a.trace).unwrap(), trace_csv(&b.trace).unwrap());
    assert_eq!(a, b);
    let best = a.mean_gmean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = a.grid.iter().zip(&a.mean_gmean).find(|(_, &g)| g == best).unwrap().0;
    assert_eq!(a.chosen_xi, *first);

    let single = select_xi(Variant::Xhmm2, &tuning, &[10.0], 3, 2, &cfg).unwrap();
    assert_eq!(single.chosen_xi, 10.0);
    assert!(select_xi(Variant::Xhmm2, &tuning, &[], 3, 2, &cfg).is_err());
    assert!(select_xi(Variant::Hmm1, &tuning, &[5.0], 3, 2, &cfg).is_err());
    let none = TuningData::Pose {
        sets: as_sets(&data),
        outliers: vec![],
    };
    assert!(select_xi(Variant::Xhmm2, &none, &[5.0], 3, 2, &cfg).is_err());
}

#[test]
fn split_rejects_bad_omega() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (sources, data) = activity_sets(&mut rng, &[5], 4);
    assert!(split_with_models(&as_sets(&data), &sources, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn larger_whiskers_reject_a_subset(seed in any::<u64>(), w1 in 0.0f64..4.0, dw in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = score_set(&mut rng, (seed % 4) as usize);
        let (_, small) = iqr_outliers(&scores, w1);
        let (_, large) = iqr_outliers(&scores, w1 + dw);
        for (s, l) in small.iter().zip(&large) {
            prop_assert!(!l || *s);
        }
    }

    #[test]
    fn folds_keep_every_activity_in_training(sizes in proptest::collection::vec(2usize..30, 1..6), k in 2usize..6, seed in any::<u64>()) {
        let folds = stratified_folds(&sizes, k, seed).unwrap();
        prop_assert_eq!(&folds, &stratified_folds(&sizes, k, seed).unwrap());
        for (g, assignment) in folds.iter().enumerate() {
            prop_assert_eq!(assignment.len(), sizes[g]);
            for f in 0..k {
                prop_assert!(assignment.iter().any(|&x| x != f));
            }
            let mut counts = vec![0usize; k];
            for &x in assignment {
                counts[x] += 1;
            }
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }
}

#[test]
fn folds_require_two_items_per_activity() {
    assert!(stratified_folds(&[5, 1], 3, 0).is_err());
    assert!(stratified_folds(&[5], 1, 0).is_err());
}
