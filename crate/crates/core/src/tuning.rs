//! Proxy-outlier split of normal training data and cross-validated choice of
//! the covariance inflation factor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::gmean_of;
use crate::hmm::{self, GaussianHmm, TrainConfig};
use crate::models::{self, ActivitySet, ActivityStats, FallDetector, Variant};
use crate::stats::{derive_seed, quartiles};

pub const DEFAULT_OMEGA: f64 = 1.5;
pub const DEFAULT_XI_GRID: [f64; 4] = [1.5, 5.0, 10.0, 100.0];
pub const DEFAULT_CV_FOLDS: usize = 3;
/// Activities with fewer scored sequences are never split.
pub const MIN_SEQUENCES_FOR_SPLIT: usize = 4;

/// Quartile summary of one activity's training log-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Quartiles {
    pub fn of(scores: &[f64]) -> Quartiles {
        let (q1, q3, iqr) = quartiles(scores);
        Quartiles { q1, q3, iqr }
    }

    /// Strictly beyond either whisker.
    pub fn is_outlier(&self, score: f64, omega: f64) -> bool {
        score > self.q3 + omega * self.iqr || score < self.q1 - omega * self.iqr
    }
}

/// IQR rule over one activity's scores. Returns the quartiles (absent when
/// there are too few scores) and a rejection flag per score.
pub fn iqr_outliers(scores: &[f64], omega: f64) -> (Option<Quartiles>, Vec<bool>) {
    if scores.len() < MIN_SEQUENCES_FOR_SPLIT {
        return (None, vec![false; scores.len()]);
    }
    let q = Quartiles::of(scores);
    let flags = scores.iter().map(|&s| q.is_outlier(s, omega)).collect();
    (Some(q), flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySplit {
    pub activity: String,
    pub quartiles: Option<Quartiles>,
    /// Log-likelihood of every input sequence under the activity model.
    pub scores: Vec<f64>,
    /// Indices (into the activity's input sequences) kept as non-fall.
    pub non_fall: Vec<usize>,
    /// Indices rejected as outliers.
    pub outliers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSplit {
    pub omega: f64,
    pub activities: Vec<ActivitySplit>,
}

impl OutlierSplit {
    pub fn n_outliers(&self) -> usize {
        self.activities.iter().map(|a| a.outliers.len()).sum()
    }

    /// Pooled outliers as `(activity index, sequence index)`.
    pub fn pooled_outliers(&self) -> Vec<(usize, usize)> {
        self.activities
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.outliers.iter().map(move |&i| (a, i)))
            .collect()
    }

    /// Applies the split to the sets it was computed from.
    pub fn non_fall_sets<'a>(&self, sets: &[ActivitySet<'a>]) -> Vec<ActivitySet<'a>> {
        self.activities
            .iter()
            .zip(sets)
            .map(|(a, s)| ActivitySet {
                name: s.name.clone(),
                sequences: a.non_fall.iter().map(|&i| s.sequences[i]).collect(),
            })
            .collect()
    }

    pub fn outlier_sequences<'a>(&self, sets: &[ActivitySet<'a>]) -> Vec<&'a [Vec<f64>]> {
        self.pooled_outliers()
            .into_iter()
            .map(|(a, i)| sets[a].sequences[i])
            .collect()
    }
}

/// Splits given per-activity models already trained on the full normal data.
pub fn split_with_models(sets: &[ActivitySet<'_>], models: &[GaussianHmm], omega: f64) -> Result<OutlierSplit> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::InvalidInput(format!("omega must be a finite value >= 0, got {omega}")));
    }
    if sets.len() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            got: models.len(),
        });
    }
    let activities = sets
        .iter()
        .zip(models)
        .map(|(set, model)| {
            let scores = set
                .sequences
                .iter()
                .map(|s| model.log_likelihood(s))
                .collect::<Result<Vec<f64>>>()?;
            let (quartiles, flags) = iqr_outliers(&scores, omega);
            if quartiles.is_none() {
                log::info!(
                    "activity {:?} has {} sequence(s); no outliers rejected",
                    set.name,
                    scores.len()
                );
            }
            let (outliers, non_fall): (Vec<usize>, Vec<usize>) = (0..scores.len()).partition(|&i| flags[i]);
            Ok(ActivitySplit {
                activity: set.name.clone(),
                quartiles,
                scores,
                non_fall,
                outliers,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OutlierSplit { omega, activities })
}

/// Trains one HMM per activity on all of its sequences and rejects those
/// whose log-likelihood lies beyond the IQR whiskers.
pub fn split_outliers(sets: &[ActivitySet<'_>], omega: f64, n_states: usize, cfg: &TrainConfig) -> Result<OutlierSplit> {
    let models = models::train_activity_models(sets, n_states, cfg)?;
    split_with_models(sets, &models, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub variant: Variant,
    pub xi: f64,
    pub fold: usize,
    pub gmean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiSelection {
    pub variant: Variant,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub chosen_xi: f64,
    /// Mean held-out gmean per grid entry.
    pub mean_gmean: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Non-fall training data and proxy outliers at the level a variant uses.
#[derive(Debug, Clone)]
pub enum TuningData<'a> {
    /// Frame sequences per activity (xhmm1, xhmm2).
    Pose {
        sets: Vec<ActivitySet<'a>>,
        outliers: Vec<&'a [Vec<f64>]>,
    },
    /// Window vectors per activity with the label transitions seen in
    /// training (xhmm3).
    Activity {
        names: Vec<String>,
        windows: Vec<Vec<&'a [f64]>>,
        pairs: Vec<(&'a str, &'a str)>,
        outliers: Vec<&'a [f64]>,
    },
}

impl TuningData<'_> {
    fn n_outliers(&self) -> usize {
        match self {
            TuningData::Pose { outliers, .. } => outliers.len(),
            TuningData::Activity { outliers, .. } => outliers.len(),
        }
    }

    fn group_sizes(&self) -> Vec<(String, usize)> {
        match self {
            TuningData::Pose { sets, .. } => sets.iter().map(|s| (s.name.clone(), s.sequences.len())).collect(),
            TuningData::Activity { names, windows, .. } => {
                names.iter().cloned().zip(windows.iter().map(Vec::len)).collect()
            }
        }
    }
}

/// Seeded stratified assignment: each activity's items are shuffled and dealt
/// round-robin, so with at least two items per activity every training split
/// keeps every activity.
pub fn stratified_folds(group_sizes: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    group_sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            if n < 2 {
                return Err(Error::InsufficientData(format!(
                    "activity #{g} has {n} item(s); every training fold needs it, so at least 2 are required"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut fold = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                fold[i] = pos % k;
            }
            Ok(fold)
        })
        .collect()
}

enum FoldBase {
    PerActivity(Vec<String>, Vec<GaussianHmm>),
    Pooled(GaussianHmm),
    Stats(ActivityStats),
}

impl FoldBase {
    fn detector(&self, xi: f64) -> Result<FallDetector> {
        match self {
            FoldBase::PerActivity(names, ms) => models::build_xhmm1(names.clone(), ms.clone(), xi),
            FoldBase::Pooled(m) => models::build_xhmm2(m.clone(), xi),
            FoldBase::Stats(s) => models::build_xhmm3(s, xi),
        }
    }
}

fn fold_gmean(det: &FallDetector, normals: &[&[Vec<f64>]], proxies: &[&[Vec<f64>]]) -> Result<f64> {
    let mut tn = 0;
    for s in normals {
        if !det.classify(s)?.is_fall {
            tn += 1;
        }
    }
    let mut tp = 0;
    for s in proxies {
        if det.classify(s)?.is_fall {
            tp += 1;
        }
    }
    Ok(gmean_of(tp, proxies.len() - tp, tn, normals.len() - tn))
}

/// K-fold cross-validated choice of ξ: each fold trains on the other folds'
/// non-fall data, then scores its own non-fall data (negatives) and every
/// outlier (positives). The grid entry with the best mean gmean wins, ties
/// going to the smallest ξ.
pub fn select_xi(
    variant: Variant,
    data: &TuningData<'_>,
    grid: &[f64],
    k: usize,
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<XiSelection> {
    if !variant.uses_xi() {
        return Err(Error::InvalidInput(format!("{variant} has no inflation factor to tune")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("xi grid is empty".into()));
    }
    if let Some(x) = grid.iter().find(|&&x| !(x >= 1.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("xi grid entry {x} is not a finite value >= 1")));
    }
    if data.n_outliers() == 0 {
        return Err(Error::InsufficientData(
            "no proxy outliers to tune against; lower omega".into(),
        ));
    }
    match (variant, data) {
        (Variant::Xhmm1 | Variant::Xhmm2, TuningData::Pose { .. }) | (Variant::Xhmm3, TuningData::Activity { .. }) => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "{variant} was given tuning data at the wrong level"
            )))
        }
    }
    let sizes = data.group_sizes();
    let assignment = stratified_folds(
        &sizes.iter().map(|(_, n)| *n).collect::<Vec<_>>(),
        k,
        derive_seed(cfg.seed, &[0x7475_6e65]),
    )
    .map_err(|e| match e {
        Error::InsufficientData(_) => {
            let small: Vec<&str> = sizes.iter().filter(|(_, n)| *n < 2).map(|(a, _)| a.as_str()).collect();
            Error::InsufficientData(format!("cannot stratify folds; too little data for {}", small.join(", ")))
        }
        other => other,
    })?;

    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let fold_cfg = cfg.with_seed(derive_seed(cfg.seed, &[fold as u64]));
            let (base, held_out, proxies): (FoldBase, Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) = match data {
                TuningData::Pose { sets, outliers } => {
                    let mut train_sets = Vec::with_capacity(sets.len());
                    let mut held: Vec<Vec<Vec<f64>>> = Vec::new();
                    for (set, folds) in sets.iter().zip(&assignment) {
                        let mut tr = Vec::new();
                        for (seq, &f) in set.sequences.iter().zip(folds) {
                            if f == fold {
                                held.push(seq.to_vec());
                            } else {
                                tr.push(*seq);
                            }
                        }
                        train_sets.push(ActivitySet {
                            name: set.name.clone(),
                            sequences: tr,
                        });
                    }
                    let base = if variant == Variant::Xhmm1 {
                        let names = train_sets.iter().map(|s| s.name.clone()).collect();
                        FoldBase::PerActivity(names, models::train_activity_models(&train_sets, n_states, &fold_cfg)?)
                    } else {
                        let pooled: Vec<&[Vec<f64>]> =
                            train_sets.iter().flat_map(|s| s.sequences.iter().copied()).collect();
                        FoldBase::Pooled(hmm::train(&pooled, n_states, &fold_cfg)?.0)
                    };
                    (base, held, outliers.iter().map(|s| s.to_vec()).collect())
                }
                TuningData::Activity {
                    names,
                    windows,
                    pairs,
                    outliers,
                } => {
                    let mut samples = Vec::new();
                    let mut held = Vec::new();
                    for ((name, rows), folds) in names.iter().zip(windows).zip(&assignment) {
                        for (row, &f) in rows.iter().zip(folds) {
                            if f == fold {
                                held.push(vec![row.to_vec()]);
                            } else {
                                samples.push((name.as_str(), *row));
                            }
                        }
                    }
                    let stats = ActivityStats::estimate(names, &samples, pairs, &fold_cfg)?;
                    (
                        FoldBase::Stats(stats),
                        held,
                        outliers.iter().map(|o| vec![o.to_vec()]).collect(),
                    )
                }
            };
            let held_refs: Vec<&[Vec<f64>]> = held_out.iter().map(Vec::as_slice).collect();
            let proxy_refs: Vec<&[Vec<f64>]> = proxies.iter().map(Vec::as_slice).collect();
            grid.iter()
                .map(|&xi| fold_gmean(&base.detector(xi)?, &held_refs, &proxy_refs))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trace = Vec::with_capacity(grid.len() * k);
    let mut mean_gmean = Vec::with_capacity(grid.len());
    for (g, &xi) in grid.iter().enumerate() {
        let mut sum = 0.0;
        for (fold, scores) in per_fold.iter().enumerate() {
            trace.push(TraceRow {
                variant,
                xi,
                fold,
                gmean: scores[g],
            });
            sum += scores[g];
        }
        mean_gmean.push(sum / k as f64);
    }
    let mut best = 0;
    for g in 1..grid.len() {
        let better = mean_gmean[g] > mean_gmean[best];
        let tie_smaller = mean_gmean[g] == mean_gmean[best] && grid[g] < grid[best];
        if better || tie_smaller {
            best = g;
        }
    }
    Ok(XiSelection {
        variant,
        grid: grid.to_vec(),
        folds: k,
        chosen_xi: grid[best],
        mean_gmean,
        trace,
    })
}

/// Tuning trace as CSV: `variant,xi,fold,gmean`.
pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "xi", "fold", "gmean"])
        .map_err(|e| Error::Serialization(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.variant.name().to_string(),
            r.xi.to_string(),
            r.fold.to_string(),
            r.gmean.to_string(),
        ])
        .map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_iqr_example() {
        let (q, flags) = iqr_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0], 1.5);
        let q = q.unwrap();
        assert_eq!((q.q1, q.q3, q.iqr), (2.0, 4.0, 2.0));
        assert_eq!(flags, vec![false, false, false, false, true]);
    }

    #[test]
    fn identical_scores_no_outliers() {
        let (_, flags) = iqr_outliers(&[-3.5; 9], 1.5);
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn small_activities_untouched() {
        let (q, flags) = iqr_outliers(&[1.0, 2.0, 1e9], 0.0);
        assert!(q.is_none());
        assert_eq!(flags, vec![false; 3]);
    }

    #[test]
    fn folds_are_stratified() {
        let f = stratified_folds(&[7, 2, 3], 3, 11).unwrap();
        for g in &f {
            let distinct: std::collections::BTreeSet<_> = g.iter().collect();
            assert!(distinct.len() >= 2.min(g.len()));
        }
        assert!(stratified_folds(&[7, 1], 3, 11).is_err());
        assert!(stratified_folds(&[7], 1, 11).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        let seq = vec![vec![0.0]; 4];
        let data = TuningData::Pose {
            sets: vec![ActivitySet {
                name: "a".into(),
                sequences: vec![&seq[..]; 3],
            }],
            outliers: vec![&seq[..]],
        };
        assert!(select_xi(Variant::Xhmm2, &data, &[], 3, 1, &TrainConfig::default()).is_err());
        assert!(select_xi(Variant::Hmm1, &data, &[2.0], 3, 1, &TrainConfig::default()).is_err());
    }
}
