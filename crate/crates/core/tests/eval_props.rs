use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xfactor_core::eval::{
    compute_metrics, diagnose_outliers, fall_injection_curve, generate_synthetic, gmean_of, loocv, Confusion,
    EvalConfig, EvalReport, SyntheticConfig,
};
use xfactor_core::hmm::{GaussianHmm, TrainConfig};
use xfactor_core::models::{ActivitySet, Variant};
use xfactor_core::tuning::{ActivitySplit, OutlierSplit};
use xfactor_core::FeatureDataset;

fn small_dataset(subjects: usize, windows: usize, seed: u64) -> FeatureDataset {
    let mut cfg = SyntheticConfig::default();
    cfg.n_subjects = subjects;
    cfg.windows_per_subject = windows;
    generate_synthetic(&cfg, seed).unwrap()
}

#[test]
fn metric_examples() {
    let truth = [true, true, false, false, false];
    let (_, m) = compute_metrics(&truth, &truth).unwrap();
    assert_eq!(m.gmean, 1.0);
    let (_, m) = compute_metrics(&[false, false, true, false, false], &truth).unwrap();
    assert_eq!(m.gmean, 0.0);
    assert!((m.far - 1.0 / 3.0).abs() < 1e-15);
    assert!((gmean_of(9, 1, 8, 2) - 0.8485).abs() < 1e-4);
    assert!(compute_metrics(&[], &[]).is_err());
    let (c, m) = compute_metrics(&[false, true], &[false, false]).unwrap();
    assert_eq!(c, Confusion { tp: 0, fp: 1, tn: 1, fn_: 0 });
    assert!(m.tpr.is_nan() && m.gmean.is_nan() && m.fdr.is_nan());
    assert_eq!(m.far, 0.5);
}

proptest! {
    #[test]
    fn gmean_symmetric_under_class_swap(tp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50, fp in 0usize..50) {
        let a = gmean_of(tp, fn_, tn, fp);
        let b = gmean_of(tn, fp, tp, fn_);
        prop_assert!((a.is_nan() && b.is_nan()) || (a - b).abs() < 1e-15);
    }

    #[test]
    fn metrics_follow_from_counts(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let (c, m) = compute_metrics(&p, &t).unwrap();
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, p.len());
        let again = c.metrics();
        prop_assert_eq!(format!("{again:?}"), format!("{m:?}"));
        if !m.gmean.is_nan() {
            prop_assert!((m.gmean - (m.tpr * m.tnr).sqrt()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&m.tpr) && (0.0..=1.0).contains(&m.tnr));
        }
        if !m.far.is_nan() {
            prop_assert!((m.far - (1.0 - m.tnr)).abs() < 1e-15);
        }
        prop_assert!(m.fdr.to_bits() == m.tpr.to_bits());
    }
}

fn check_report(report: &EvalReport, dataset: &FeatureDataset) {
    for f in &report.folds {
        let p = &f.provenance;
        assert!(!p.training_subjects.contains(&f.subject_id));
        let expected_normal = dataset
            .windows
            .iter()
            .filter(|w| w.subject_id != f.subject_id && !w.is_fall())
            .count();
        assert_eq!(p.scaler_fit_windows, expected_normal);
        assert_eq!(p.train_normal_windows + p.outliers_excluded, expected_normal);
        if !report.variant.is_supervised() {
            assert_eq!(p.train_fall_windows, 0);
        }
        let m = f.confusion.metrics();
        assert_eq!(format!("{m:?}"), format!("{:?}", f.metrics));
        let n_test = dataset.windows.iter().filter(|w| w.subject_id == f.subject_id).count();
        let c = f.confusion;
        assert_eq!(c.tp + c.fp + c.tn + c.fn_, n_test);
        assert_eq!(f.chosen_xi.is_some(), report.variant.uses_xi());
    }
}

#[test]
fn two_subject_xhmm2_separates_synthetic_falls() {
    let ds = generate_synthetic(
        &SyntheticConfig {
            n_subjects: 2,
            subject_shift_sd: 0.0,
            ..SyntheticConfig::default()
        },
        5,
    )
    .unwrap();
    let cfg = EvalConfig {
        seed: 3,
        ..EvalConfig::default()
    };
    let report = loocv(&ds, Variant::Xhmm2, &cfg).unwrap();
    check_report(&report, &ds);
    assert!(report.summary.gmean > 0.9, "gmean {}", report.summary.gmean);
    let again = loocv(&ds, Variant::Xhmm2, &cfg).unwrap();
    assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
}

#[test]
fn provenance_for_every_variant() {
    let ds = small_dataset(3, 120, 12);
    let cfg = EvalConfig {
        seed: 1,
        train: TrainConfig {
            max_iterations: 5,
            ..TrainConfig::default()
        },
        ..EvalConfig::default()
    };
    for v in Variant::ALL {
        match loocv(&ds, v, &cfg) {
            Ok(report) => {
                check_report(&report, &ds);
                let json = report.to_json().unwrap();
                let back: EvalReport = serde_json::from_str(&json).unwrap();
                assert_eq!(back.to_json().unwrap(), json);
            }
            Err(e) => panic!("{v}: {e}"),
        }
    }
}

#[test]
fn supervised_needs_falls() {
    let mut cfg = SyntheticConfig::default();
    cfg.n_subjects = 2;
    cfg.windows_per_subject = 60;
    cfg.fall_prevalence = 0.0;
    let ds = generate_synthetic(&cfg, 2).unwrap();
    assert!(loocv(&ds, Variant::Hmm3Sup, &EvalConfig::default()).is_err());
    assert!(loocv(&small_dataset(1, 60, 1), Variant::Xhmm2, &EvalConfig::default()).is_err());
}

#[test]
fn injection_with_repeated_count_is_identical() {
    let ds = small_dataset(3, 120, 13);
    let cfg = EvalConfig {
        seed: 5,
        ..EvalConfig::default()
    };
    for v in [Variant::Hmm3Sup, Variant::Hmm2Sup] {
        let curve = fall_injection_curve(&ds, v, &[2, 2, 1000], 2, &cfg).unwrap();
        assert_eq!(curve.points.len(), 3);
        assert_eq!(format!("{:?}", curve.points[0]), format!("{:?}", curve.points[1]));
        assert!(curve.points[2].capped && !curve.points[0].capped);
        assert!(fall_injection_curve(&ds, v, &[0], 1, &cfg).is_err());
    }
    assert!(fall_injection_curve(&ds, Variant::Xhmm3, &[1], 1, &cfg).is_err());
}

#[test]
fn diagnostic_separates_fall_like_from_core_outliers() {
    let cfg = SyntheticConfig::default();
    let fall_model = cfg.fall_archetype().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let sample = |m: &GaussianHmm, rng: &mut ChaCha8Rng| m.sample(8, rng).1;
    let data: Vec<Vec<Vec<Vec<f64>>>> = cfg
        .activities
        .iter()
        .enumerate()
        .map(|(a, arch)| {
            let mut seqs: Vec<Vec<Vec<f64>>> = (0..20).map(|_| sample(&arch.model, &mut rng)).collect();
            // the last ten are outliers: from the fall distribution for
            // activity 0, from the tight core of the activity otherwise
            let core = arch.model.inflated(0.1);
            seqs.extend((0..10).map(|_| sample(&core, &mut rng)));
            if a == 0 {
                for s in seqs.iter_mut().skip(20) {
                    *s = sample(&fall_model, &mut rng);
                }
            }
            seqs
        })
        .collect();
    let sets: Vec<ActivitySet<'_>> = cfg
        .activities
        .iter()
        .zip(&data)
        .map(|(arch, seqs)| ActivitySet {
            name: arch.name.clone(),
            sequences: seqs.iter().map(Vec::as_slice).collect(),
        })
        .collect();
    let split = OutlierSplit {
        omega: 1.5,
        activities: (0..sets.len())
            .map(|a| ActivitySplit {
                activity: sets[a].name.clone(),
                quartiles: None,
                scores: vec![0.0; 30],
                non_fall: (0..20).collect(),
                outliers: (20..30).collect(),
            })
            .collect(),
    };
    let falls: Vec<Vec<Vec<f64>>> = (0..30).map(|_| sample(&fall_model, &mut rng)).collect();
    let fall_refs: Vec<&[Vec<f64>]> = falls.iter().map(Vec::as_slice).collect();
    for v in [Variant::Hmm1Sup, Variant::Hmm2Sup] {
        let diag = diagnose_outliers(v, &sets, &split, &fall_refs, 4, &TrainConfig::default()).unwrap();
        assert!(diag.rows[0].fraction >= 0.9, "{v}: {:?}", diag.rows[0]);
        for row in &diag.rows[1..] {
            assert!(row.fraction <= 0.1, "{v}: {row:?}");
        }
    }
    let empty = OutlierSplit {
        omega: 3.0,
        activities: split
            .activities
            .iter()
            .map(|a| ActivitySplit {
                non_fall: (0..30).collect(),
                outliers: vec![],
                ..a.clone()
            })
            .collect(),
    };
    let err = diagnose_outliers(Variant::Hmm1Sup, &sets, &empty, &fall_refs, 2, &TrainConfig::default()).unwrap_err();
    assert!(err.to_string().contains("omega"));
}

#[test]
fn generated_frames_prefer_their_own_archetype() {
    let cfg = SyntheticConfig::default();
    let ds = generate_synthetic(
        &SyntheticConfig {
            subject_shift_sd: 0.0,
            artifact_rate: 0.0,
            windows_per_subject: 100,
            ..cfg.clone()
        },
        15,
    )
    .unwrap();
    for (a, arch) in cfg.activities.iter().enumerate() {
        let own: Vec<&Vec<Vec<f64>>> = ds.windows.iter().filter(|w| w.label == arch.name).map(|w| &w.frames).collect();
        assert!(!own.is_empty());
        let mean_ll = |m: &GaussianHmm| own.iter().map(|f| m.log_likelihood(f).unwrap()).sum::<f64>() / own.len() as f64;
        let mine = mean_ll(&arch.model);
        for (b, other) in cfg.activities.iter().enumerate() {
            if a != b {
                assert!(mine > mean_ll(&other.model));
            }
        }
    }
}
