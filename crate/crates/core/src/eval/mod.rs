//! Leave-one-subject-out evaluation, detection metrics, fall-injection
//! curves and the outlier-versus-fall diagnostic.

mod synthetic;

pub use synthetic::{generate_synthetic, ActivityArchetype, SyntheticConfig};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, Preprocessing, WindowRecord};
use crate::error::{Error, Result};
use crate::features::{activity_runs, relief_f_rank};
use crate::hmm::{self, TrainConfig};
use crate::models::{self, ActivitySet, ActivityStats, FallDetector, Level, SupervisedInput, Variant};
use crate::stats::derive_seed;
use crate::tuning::{self, OutlierSplit, TuningData, XiSelection};

/// Serialises NaN as `null` and back.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Rates with fall as the positive class. A rate whose class is absent from
/// the ground truth is NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "nan_as_null")]
    pub tpr: f64,
    #[serde(with = "nan_as_null")]
    pub tnr: f64,
    #[serde(with = "nan_as_null")]
    pub gmean: f64,
    /// Fall detection rate, equal to the TPR.
    #[serde(with = "nan_as_null")]
    pub fdr: f64,
    /// False alarm rate, `FP / (FP + TN)`.
    #[serde(with = "nan_as_null")]
    pub far: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// `sqrt(TPR * TNR)` from counts.
pub fn gmean_of(tp: usize, fn_: usize, tn: usize, fp: usize) -> f64 {
    (ratio(tp, tp + fn_) * ratio(tn, tn + fp)).sqrt()
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Confusion> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::InvalidInput("no predictions to score".into()));
        }
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn metrics(&self) -> Metrics {
        let tpr = ratio(self.tp, self.tp + self.fn_);
        let tnr = ratio(self.tn, self.tn + self.fp);
        Metrics {
            tpr,
            tnr,
            gmean: (tpr * tnr).sqrt(),
            fdr: tpr,
            far: ratio(self.fp, self.fp + self.tn),
        }
    }
}

pub fn compute_metrics(predicted: &[bool], truth: &[bool]) -> Result<(Confusion, Metrics)> {
    let c = Confusion::from_predictions(predicted, truth)?;
    let m = c.metrics();
    if m.tpr.is_nan() {
        log::info!("no falls in ground truth; TPR and gmean undefined for this fold");
    }
    if m.tnr.is_nan() {
        log::info!("no normal windows in ground truth; TNR undefined for this fold");
    }
    Ok((c, m))
}

/// Mean of the finite entries; NaN when there are none.
pub fn nan_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs
        .into_iter()
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    ratio_f(sum, n)
}

fn ratio_f(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn nan_std(xs: &[f64]) -> f64 {
    let vals: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if vals.is_empty() {
        return f64::NAN;
    }
    crate::stats::std_dev(&vals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_states: usize,
    pub omega: f64,
    pub xi_grid: Vec<f64>,
    pub cv_folds: usize,
    pub seed: u64,
    /// Keep only the top-ranked RELIEF-F features at each level.
    pub top_k: Option<usize>,
    pub relief_neighbors: usize,
    pub relief_probes: usize,
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_states: models::DEFAULT_N_STATES,
            omega: tuning::DEFAULT_OMEGA,
            xi_grid: tuning::DEFAULT_XI_GRID.to_vec(),
            cv_folds: tuning::DEFAULT_CV_FOLDS,
            seed: 0,
            top_k: None,
            relief_neighbors: 10,
            relief_probes: 300,
            train: TrainConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_states == 0 {
            return Err(Error::InvalidInput("n_states must be at least 1".into()));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidInput(format!("omega must be finite and >= 0, got {}", self.omega)));
        }
        if self.xi_grid.is_empty() {
            return Err(Error::InvalidInput("xi grid is empty".into()));
        }
        if let Some(x) = self.xi_grid.iter().find(|&&x| !(x >= 1.0) || !x.is_finite()) {
            return Err(Error::InvalidInput(format!("xi grid entry {x} is not a finite value >= 1")));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput(format!("cv_folds must be at least 2, got {}", self.cv_folds)));
        }
        if self.top_k == Some(0) {
            return Err(Error::InvalidInput("top_k must be positive".into()));
        }
        Ok(())
    }

    fn train_cfg(&self, path: &[u64]) -> TrainConfig {
        self.train.with_seed(derive_seed(self.seed, path))
    }
}

/// Preprocessed training windows. Normal windows keep dataset order so that
/// label transitions can be read off consecutive windows.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub normal: Vec<WindowRecord>,
    pub falls: Vec<WindowRecord>,
    pub activities: Vec<String>,
    /// Label pairs of consecutive normal windows within a recording.
    pub pairs: Vec<(String, String)>,
    pub preprocessing: Preprocessing,
}

fn consecutive(a: &WindowRecord, b: &WindowRecord) -> bool {
    a.subject_id == b.subject_id && a.recording == b.recording && a.index + 1 == b.index
}

impl TrainingData {
    /// Fits feature selection and standardisation on the normal windows of
    /// `windows` and applies them. Falls are kept only when `keep_falls`.
    pub fn prepare(windows: &[&WindowRecord], keep_falls: bool, cfg: &EvalConfig, seed_path: &[u64]) -> Result<TrainingData> {
        let normal_raw: Vec<&WindowRecord> = windows.iter().copied().filter(|w| !w.is_fall()).collect();
        if normal_raw.is_empty() {
            return Err(Error::InsufficientData("no normal training windows".into()));
        }
        let (frame_mask, summary_mask) = match cfg.top_k {
            None => (None, None),
            Some(k) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[seed_path, &[0x7265]].concat()));
                let labels: Vec<String> = normal_raw.iter().map(|w| w.label.clone()).collect();
                let summaries: Vec<Vec<f64>> = normal_raw.iter().map(|w| w.summary.clone()).collect();
                let s_rank = relief_f_rank(&summaries, &labels, cfg.relief_neighbors, cfg.relief_probes, &mut rng)?;
                let frames: Vec<Vec<f64>> = normal_raw.iter().flat_map(|w| w.frames.iter().cloned()).collect();
                let frame_labels: Vec<String> = normal_raw
                    .iter()
                    .flat_map(|w| std::iter::repeat_n(w.label.clone(), w.frames.len()))
                    .collect();
                let f_rank = relief_f_rank(&frames, &frame_labels, cfg.relief_neighbors, cfg.relief_probes, &mut rng)?;
                (Some(f_rank.top(k)), Some(s_rank.top(k)))
            }
        };
        let preprocessing = Preprocessing::fit(&normal_raw, frame_mask, summary_mask)?;
        let mut normal = Vec::with_capacity(normal_raw.len());
        let mut falls = Vec::new();
        let mut pairs = Vec::new();
        let mut prev: Option<&WindowRecord> = None;
        for &w in windows {
            if w.is_fall() {
                if keep_falls {
                    falls.push(preprocessing.apply(w));
                }
            } else {
                if let Some(p) = prev.filter(|p| !p.is_fall() && consecutive(p, w)) {
                    pairs.push((p.label.clone(), w.label.clone()));
                }
                normal.push(preprocessing.apply(w));
            }
            prev = Some(w);
        }
        let mut activities: Vec<String> = normal.iter().map(|w| w.label.clone()).collect();
        activities.sort();
        activities.dedup();
        Ok(TrainingData {
            normal,
            falls,
            activities,
            pairs,
            preprocessing,
        })
    }

    /// Indices of normal windows per activity, in activity order.
    fn by_activity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.activities.len()];
        for (i, w) in self.normal.iter().enumerate() {
            let a = self.activities.binary_search(&w.label).unwrap();
            groups[a].push(i);
        }
        groups
    }

    fn pose_sets(&self, groups: &[Vec<usize>]) -> Vec<ActivitySet<'_>> {
        self.activities
            .iter()
            .zip(groups)
            .map(|(name, idx)| ActivitySet {
                name: name.clone(),
                sequences: idx.iter().map(|&i| self.normal[i].frames.as_slice()).collect(),
            })
            .collect()
    }

    fn pair_refs(&self) -> Vec<(&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect()
    }

    fn activity_stats(&self, windows: &[usize], cfg: &TrainConfig) -> Result<ActivityStats> {
        let samples: Vec<(&str, &[f64])> = windows
            .iter()
            .map(|&i| (self.normal[i].label.as_str(), self.normal[i].summary.as_slice()))
            .collect();
        ActivityStats::estimate(&self.activities, &samples, &self.pair_refs(), cfg)
    }
}

/// A trained detector with the by-products of its training.
#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub detector: FallDetector,
    pub selection: Option<XiSelection>,
    pub split: Option<OutlierSplit>,
    pub fall_windows_used: usize,
}

impl TrainedDetector {
    pub fn outliers_excluded(&self) -> usize {
        self.split.as_ref().map_or(0, OutlierSplit::n_outliers)
    }
}

/// Normal-data part of a supervised detector, reusable across fall subsets.
#[derive(Debug, Clone)]
pub enum SupervisedBase {
    Pose(Vec<String>, Vec<crate::GaussianHmm>),
    Activity(ActivityStats),
}

pub fn supervised_base(variant: Variant, data: &TrainingData, cfg: &EvalConfig, seed_path: &[u64]) -> Result<SupervisedBase> {
    let groups = data.by_activity();
    let tcfg = cfg.train_cfg(seed_path);
    match variant {
        Variant::Hmm1Sup => {
            let sets = data.pose_sets(&groups);
            Ok(SupervisedBase::Pose(
                data.activities.clone(),
                models::train_activity_models(&sets, cfg.n_states, &tcfg)?,
            ))
        }
        Variant::Hmm2Sup => {
            let all: Vec<&[Vec<f64>]> = data.normal.iter().map(|w| w.frames.as_slice()).collect();
            Ok(SupervisedBase::Pose(
                vec!["normal".into()],
                vec![hmm::train(&all, cfg.n_states, &tcfg)?.0],
            ))
        }
        Variant::Hmm3Sup => {
            let all: Vec<usize> = (0..data.normal.len()).collect();
            Ok(SupervisedBase::Activity(data.activity_stats(&all, &tcfg)?))
        }
        other => Err(Error::InvalidInput(format!("{other} is not a supervised variant"))),
    }
}

pub fn supervised_with_falls(
    variant: Variant,
    base: &SupervisedBase,
    falls: &[&WindowRecord],
    cfg: &EvalConfig,
    seed_path: &[u64],
) -> Result<FallDetector> {
    if falls.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{variant} needs fall windows in the training data"
        )));
    }
    let tcfg = cfg.train_cfg(seed_path);
    match base {
        SupervisedBase::Pose(names, normal) => {
            let seqs: Vec<&[Vec<f64>]> = falls.iter().map(|w| w.frames.as_slice()).collect();
            models::pose_supervised_from_models(variant, names.clone(), normal.clone(), &seqs, cfg.n_states, &tcfg)
        }
        SupervisedBase::Activity(stats) => {
            let input = SupervisedInput::Activity {
                stats: stats.clone(),
                falls: falls.iter().map(|w| w.summary.as_slice()).collect(),
            };
            models::train_supervised(variant, &input, cfg.n_states, &tcfg)
        }
    }
}

/// Full training procedure for one variant: outlier split and ξ selection
/// where the variant needs them, then the final fit on non-fall data (plus
/// falls for supervised variants).
pub fn train_detector(variant: Variant, data: &TrainingData, cfg: &EvalConfig, seed_path: &[u64]) -> Result<TrainedDetector> {
    cfg.validate()?;
    let tcfg = cfg.train_cfg(seed_path);
    let groups = data.by_activity();
    let done = |detector, selection, split| TrainedDetector {
        detector,
        selection,
        split,
        fall_windows_used: 0,
    };
    if variant.is_supervised() {
        let base = supervised_base(variant, data, cfg, seed_path)?;
        let falls: Vec<&WindowRecord> = data.falls.iter().collect();
        let detector = supervised_with_falls(variant, &base, &falls, cfg, seed_path)?;
        return Ok(TrainedDetector {
            fall_windows_used: falls.len(),
            ..done(detector, None, None)
        });
    }
    let sets = data.pose_sets(&groups);
    match variant {
        Variant::Hmm1 => return Ok(done(models::train_hmm1(&sets, cfg.n_states, &tcfg)?, None, None)),
        Variant::Hmm2 => {
            let all: Vec<&[Vec<f64>]> = data.normal.iter().map(|w| w.frames.as_slice()).collect();
            return Ok(done(models::train_hmm2(&all, cfg.n_states, &tcfg)?, None, None));
        }
        Variant::Ocnn => {
            let points = data.normal.iter().map(|w| w.summary.clone()).collect();
            return Ok(done(models::train_ocnn(points)?, None, None));
        }
        _ => {}
    }

    let split = tuning::split_outliers(&sets, cfg.omega, cfg.n_states, &tcfg)?;
    if split.n_outliers() == 0 {
        return Err(Error::InsufficientData(format!(
            "the outlier split rejected nothing at omega = {}; {variant} needs proxy outliers, lower omega",
            cfg.omega
        )));
    }
    let non_fall_sets = split.non_fall_sets(&sets);
    let outliers = split.outlier_sequences(&sets);
    let pooled_non_fall: Vec<&[Vec<f64>]> = non_fall_sets.iter().flat_map(|s| s.sequences.iter().copied()).collect();
    let tune_cfg = cfg.train_cfg(&[seed_path, &[0x78]].concat());

    let (detector, selection) = match variant {
        Variant::Xhmm1 | Variant::Xhmm2 => {
            let tdata = TuningData::Pose {
                sets: non_fall_sets.clone(),
                outliers: outliers.clone(),
            };
            let sel = tuning::select_xi(variant, &tdata, &cfg.xi_grid, cfg.cv_folds, cfg.n_states, &tune_cfg)?;
            let det = if variant == Variant::Xhmm1 {
                let ms = models::train_activity_models(&non_fall_sets, cfg.n_states, &tcfg)?;
                models::build_xhmm1(data.activities.clone(), ms, sel.chosen_xi)?
            } else {
                let (pooled, _) = hmm::train(&pooled_non_fall, cfg.n_states, &tcfg)?;
                models::build_xhmm2(pooled, sel.chosen_xi)?
            };
            (det, Some(sel))
        }
        Variant::Xhmm3 => {
            let non_fall_idx: Vec<Vec<usize>> = split
                .activities
                .iter()
                .zip(&groups)
                .map(|(a, g)| a.non_fall.iter().map(|&i| g[i]).collect())
                .collect();
            let outlier_rows: Vec<&[f64]> = split
                .pooled_outliers()
                .into_iter()
                .map(|(a, i)| data.normal[groups[a][i]].summary.as_slice())
                .collect();
            let tdata = TuningData::Activity {
                names: data.activities.clone(),
                windows: non_fall_idx
                    .iter()
                    .map(|g| g.iter().map(|&i| data.normal[i].summary.as_slice()).collect())
                    .collect(),
                pairs: data.pair_refs(),
                outliers: outlier_rows,
            };
            let sel = tuning::select_xi(variant, &tdata, &cfg.xi_grid, cfg.cv_folds, cfg.n_states, &tune_cfg)?;
            let flat: Vec<usize> = non_fall_idx.concat();
            let stats = data.activity_stats(&flat, &tcfg)?;
            (models::build_xhmm3(&stats, sel.chosen_xi)?, Some(sel))
        }
        Variant::HmmNormOut => (
            models::train_hmm_normout(&pooled_non_fall, &outliers, cfg.n_states, &tcfg)?,
            None,
        ),
        _ => unreachable!(),
    };
    Ok(done(detector, selection, Some(split)))
}

/// Classifies preprocessed windows, returning one fall flag per window.
/// Activity-level detectors decode runs of consecutive windows.
pub fn classify_windows(det: &FallDetector, windows: &[WindowRecord]) -> Result<Vec<bool>> {
    match det.variant.level() {
        Level::Pose => windows
            .par_iter()
            .map(|w| det.classify(&w.frames).map(|v| v.is_fall))
            .collect(),
        Level::Vector => windows
            .par_iter()
            .map(|w| det.classify(std::slice::from_ref(&w.summary)).map(|v| v.is_fall))
            .collect(),
        Level::Activity => {
            let mut out = vec![false; windows.len()];
            for run in activity_runs(windows) {
                for (flag, &src) in det.classify_steps(&run.vectors)?.into_iter().zip(&run.sources) {
                    out[src] = flag;
                }
            }
            Ok(out)
        }
    }
}

/// Which data a fold's training actually touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub training_subjects: Vec<String>,
    pub scaler_fit_windows: usize,
    pub train_normal_windows: usize,
    pub train_fall_windows: usize,
    pub outliers_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub subject_id: String,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub chosen_xi: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "nan_as_null")]
    pub gmean: f64,
    #[serde(with = "nan_as_null")]
    pub fdr: f64,
    #[serde(with = "nan_as_null")]
    pub far: f64,
    /// Folds with both classes present, i.e. those averaged into gmean.
    pub folds_in_gmean: usize,
}

impl Summary {
    pub fn of(folds: &[FoldResult]) -> Summary {
        Summary {
            gmean: nan_mean(folds.iter().map(|f| f.metrics.gmean)),
            fdr: nan_mean(folds.iter().map(|f| f.metrics.fdr)),
            far: nan_mean(folds.iter().map(|f| f.metrics.far)),
            folds_in_gmean: folds.iter().filter(|f| !f.metrics.gmean.is_nan()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub folds: Vec<FoldResult>,
    pub summary: Summary,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per fold.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let f = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
        self.folds
            .iter()
            .map(|r| {
                vec![
                    self.variant.name().to_string(),
                    r.subject_id.clone(),
                    r.confusion.tp.to_string(),
                    r.confusion.fp.to_string(),
                    r.confusion.tn.to_string(),
                    r.confusion.fn_.to_string(),
                    f(r.metrics.tpr),
                    f(r.metrics.tnr),
                    f(r.metrics.gmean),
                    f(r.metrics.fdr),
                    f(r.metrics.far),
                    r.chosen_xi.map(|x| x.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 12] =
        ["variant", "subject", "tp", "fp", "tn", "fn", "tpr", "tnr", "gmean", "fdr", "far", "xi"];
}

/// Writes rows under a header as CSV bytes.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

struct FoldSetup<'a> {
    subject: String,
    train_raw: Vec<&'a WindowRecord>,
    test_raw: Vec<&'a WindowRecord>,
}

fn fold_setups(dataset: &FeatureDataset) -> Result<Vec<FoldSetup<'_>>> {
    dataset.validate()?;
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test_raw, train_raw): (Vec<&WindowRecord>, Vec<&WindowRecord>) =
                dataset.windows.iter().partition(|w| w.subject_id == s);
            FoldSetup {
                subject: s,
                train_raw,
                test_raw,
            }
        })
        .collect())
}

fn training_subjects(train: &[&WindowRecord]) -> Vec<String> {
    let mut s: Vec<String> = train.iter().map(|w| w.subject_id.clone()).collect();
    s.sort();
    s.dedup();
    s
}

/// Leave-one-subject-out evaluation of one variant. Each fold fits
/// preprocessing, the outlier split, ξ and the detector on the other
/// subjects only, then classifies every window of the held-out subject.
pub fn loocv(dataset: &FeatureDataset, variant: Variant, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let setups = fold_setups(dataset)?;
    if variant.is_supervised() && dataset.fall_count() == 0 {
        return Err(Error::InsufficientData(format!(
            "{variant} needs fall windows but the dataset has none"
        )));
    }
    let folds = setups
        .par_iter()
        .enumerate()
        .map(|(k, fold)| -> Result<FoldResult> {
            let path = [k as u64];
            let data = TrainingData::prepare(&fold.train_raw, variant.is_supervised(), cfg, &path)?;
            let trained = train_detector(variant, &data, cfg, &path)?;
            let test: Vec<WindowRecord> = fold.test_raw.iter().map(|w| data.preprocessing.apply(w)).collect();
            let predicted = classify_windows(&trained.detector, &test)?;
            let truth: Vec<bool> = test.iter().map(WindowRecord::is_fall).collect();
            let (confusion, metrics) = compute_metrics(&predicted, &truth)?;
            let training_subjects = training_subjects(&fold.train_raw);
            debug_assert!(!training_subjects.contains(&fold.subject));
            Ok(FoldResult {
                subject_id: fold.subject.clone(),
                confusion,
                metrics,
                chosen_xi: trained.selection.as_ref().map(|s| s.chosen_xi),
                provenance: Provenance {
                    training_subjects,
                    scaler_fit_windows: data.normal.len(),
                    train_normal_windows: data.normal.len() - trained.outliers_excluded(),
                    train_fall_windows: trained.fall_windows_used,
                    outliers_excluded: trained.outliers_excluded(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        variant,
        summary: Summary::of(&folds),
        folds,
        config: cfg.clone(),
    })
}

pub const DEFAULT_INJECTION_COUNTS: [usize; 8] = [1, 2, 4, 6, 8, 10, 25, 50];
pub const DEFAULT_INJECTION_REPEATS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub count: usize,
    /// Some fold had fewer training falls than `count` and used them all.
    pub capped: bool,
    #[serde(with = "nan_as_null")]
    pub mean_gmean: f64,
    #[serde(with = "nan_as_null")]
    pub std_gmean: f64,
    #[serde(with = "nan_as_null")]
    pub mean_fdr: f64,
    #[serde(with = "nan_as_null")]
    pub mean_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionCurve {
    pub variant: Variant,
    pub repeats: usize,
    pub points: Vec<InjectionPoint>,
}

impl InjectionCurve {
    pub const CSV_HEADER: [&'static str; 7] =
        ["variant", "count", "capped", "mean_gmean", "std_gmean", "mean_fdr", "mean_far"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let f = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
        self.points
            .iter()
            .map(|p| {
                vec![
                    self.variant.name().to_string(),
                    p.count.to_string(),
                    p.capped.to_string(),
                    f(p.mean_gmean),
                    f(p.std_gmean),
                    f(p.mean_fdr),
                    f(p.mean_far),
                ]
            })
            .collect()
    }
}

/// Supervised detectors trained with only `count` randomly chosen training
/// falls per fold, `repeats` times per count. Each repeat is scored by its
/// LOOCV fold average; points report the mean and spread over repeats.
pub fn fall_injection_curve(
    dataset: &FeatureDataset,
    variant: Variant,
    counts: &[usize],
    repeats: usize,
    cfg: &EvalConfig,
) -> Result<InjectionCurve> {
    cfg.validate()?;
    if !variant.is_supervised() {
        return Err(Error::InvalidInput(format!("{variant} is not a supervised variant")));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "{variant} cannot be trained with 0 falls; counts must be positive"
        )));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be positive".into()));
    }
    let setups = fold_setups(dataset)?;
    struct Prepared {
        data: TrainingData,
        base: SupervisedBase,
        test: Vec<WindowRecord>,
        truth: Vec<bool>,
    }
    let prepared = setups
        .par_iter()
        .enumerate()
        .map(|(k, fold)| -> Result<Prepared> {
            let path = [k as u64];
            let data = TrainingData::prepare(&fold.train_raw, true, cfg, &path)?;
            if data.falls.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no training falls when holding out subject {}",
                    fold.subject
                )));
            }
            let base = supervised_base(variant, &data, cfg, &path)?;
            let test: Vec<WindowRecord> = fold.test_raw.iter().map(|w| data.preprocessing.apply(w)).collect();
            let truth = test.iter().map(WindowRecord::is_fall).collect();
            Ok(Prepared { data, base, test, truth })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_folds = prepared.len();
    let jobs: Vec<(usize, usize, usize)> = counts
        .iter()
        .flat_map(|&c| (0..repeats).flat_map(move |r| (0..n_folds).map(move |k| (c, r, k))))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(count, repeat, k)| -> Result<(Metrics, bool)> {
            let p = &prepared[k];
            let available = p.data.falls.len();
            let take = count.min(available);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[count as u64, repeat as u64, k as u64]));
            let mut idx = rand::seq::index::sample(&mut rng, available, take).into_vec();
            idx.sort_unstable();
            let falls: Vec<&WindowRecord> = idx.iter().map(|&i| &p.data.falls[i]).collect();
            let det = supervised_with_falls(variant, &p.base, &falls, cfg, &[k as u64, count as u64, repeat as u64])?;
            let predicted = classify_windows(&det, &p.test)?;
            Ok((Confusion::from_predictions(&predicted, &p.truth)?.metrics(), take < count))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(counts.len());
    for (ci, &count) in counts.iter().enumerate() {
        let mut gm = Vec::with_capacity(repeats);
        let mut fdr = Vec::with_capacity(repeats);
        let mut far = Vec::with_capacity(repeats);
        let mut capped = false;
        for r in 0..repeats {
            let slice = &results[(ci * repeats + r) * n_folds..(ci * repeats + r + 1) * n_folds];
            capped |= slice.iter().any(|(_, c)| *c);
            gm.push(nan_mean(slice.iter().map(|(m, _)| m.gmean)));
            fdr.push(nan_mean(slice.iter().map(|(m, _)| m.fdr)));
            far.push(nan_mean(slice.iter().map(|(m, _)| m.far)));
        }
        if capped {
            log::warn!("fewer than {count} training falls in some fold; all available falls were used");
        }
        points.push(InjectionPoint {
            count,
            capped,
            mean_gmean: nan_mean(gm.iter().copied()),
            std_gmean: nan_std(&gm),
            mean_fdr: nan_mean(fdr),
            mean_far: nan_mean(far),
        });
    }
    Ok(InjectionCurve {
        variant,
        repeats,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub activity: String,
    pub outliers: usize,
    pub classified_fall: usize,
    #[serde(with = "nan_as_null")]
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierDiagnostic {
    pub variant: Variant,
    pub omega: f64,
    pub rows: Vec<DiagnosticRow>,
}

impl OutlierDiagnostic {
    pub const CSV_HEADER: [&'static str; 5] = ["variant", "activity", "outliers", "classified_fall", "fraction"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.variant.name().to_string(),
                    r.activity.clone(),
                    r.outliers.to_string(),
                    r.classified_fall.to_string(),
                    if r.fraction.is_nan() { String::new() } else { r.fraction.to_string() },
                ]
            })
            .collect()
    }
}

/// Trains a supervised pose-level detector on the non-fall part of `sets`
/// and on `falls`, then reports per activity how many of the outliers it
/// labels as falls.
pub fn diagnose_outliers(
    variant: Variant,
    sets: &[ActivitySet<'_>],
    split: &OutlierSplit,
    falls: &[&[Vec<f64>]],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<OutlierDiagnostic> {
    if !matches!(variant, Variant::Hmm1Sup | Variant::Hmm2Sup) {
        return Err(Error::InvalidInput(format!(
            "the outlier diagnostic takes hmm1_sup or hmm2_sup, not {variant}"
        )));
    }
    if split.n_outliers() == 0 {
        return Err(Error::InsufficientData(format!(
            "no outliers at omega = {}; try a smaller omega",
            split.omega
        )));
    }
    let non_fall = split.non_fall_sets(sets);
    let normal_sets = if variant == Variant::Hmm2Sup {
        vec![ActivitySet {
            name: "normal".into(),
            sequences: non_fall.iter().flat_map(|s| s.sequences.iter().copied()).collect(),
        }]
    } else {
        non_fall
    };
    let det = models::train_supervised(
        variant,
        &SupervisedInput::Pose {
            sets: normal_sets,
            falls: falls.to_vec(),
        },
        n_states,
        cfg,
    )?;
    let mut rows = Vec::with_capacity(sets.len());
    for (set, a) in sets.iter().zip(&split.activities) {
        let mut flagged = 0;
        for &i in &a.outliers {
            if det.classify(set.sequences[i])?.is_fall {
                flagged += 1;
            }
        }
        rows.push(DiagnosticRow {
            activity: set.name.clone(),
            outliers: a.outliers.len(),
            classified_fall: flagged,
            fraction: ratio(flagged, a.outliers.len()),
        });
    }
    Ok(OutlierDiagnostic {
        variant,
        omega: split.omega,
        rows,
    })
}

/// Outlier-versus-fall diagnostic over the whole dataset.
pub fn outlier_vs_fall_diagnostic(dataset: &FeatureDataset, variant: Variant, cfg: &EvalConfig) -> Result<OutlierDiagnostic> {
    cfg.validate()?;
    dataset.validate()?;
    let all: Vec<&WindowRecord> = dataset.windows.iter().collect();
    let data = TrainingData::prepare(&all, true, cfg, &[])?;
    if data.falls.is_empty() {
        return Err(Error::InsufficientData("the diagnostic needs fall windows".into()));
    }
    let groups = data.by_activity();
    let sets = data.pose_sets(&groups);
    let tcfg = cfg.train_cfg(&[]);
    let split = tuning::split_outliers(&sets, cfg.omega, cfg.n_states, &tcfg)?;
    let falls: Vec<&[Vec<f64>]> = data.falls.iter().map(|w| w.frames.as_slice()).collect();
    diagnose_outliers(variant, &sets, &split, &falls, cfg.n_states, &tcfg)
}

/// Count of windows per label, for reporting.
pub fn label_counts(dataset: &FeatureDataset) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for w in &dataset.windows {
        *m.entry(w.label.clone()).or_insert(0) += 1;
    }
    m
}
