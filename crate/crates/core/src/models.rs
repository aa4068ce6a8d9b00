//! Fall detectors built from Gaussian HMMs, plus the one-class
//! nearest-neighbour baseline.
//!
//! Pose-level detectors score one window at a time (its frame vectors).
//! Activity-level detectors decode a run of window vectors with one hidden
//! state per activity and an extra fall state.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Preprocessing;
use crate::error::{Error, Result};
use crate::hmm::{self, GaussianHmm, TrainConfig};
use crate::FALL_LABEL;

pub const DEFAULT_N_STATES: usize = 4;
/// Fall-state self-transition in the activity-level model.
pub const FALL_SELF_TRANSITION: f64 = 0.95;
/// Probability of leaving any normal activity for the fall state.
pub const NORMAL_TO_FALL: f64 = 0.05;
/// Total probability of leaving the fall state, shared evenly by activities.
pub const FALL_EXIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Hmm1,
    Hmm2,
    Xhmm1,
    Xhmm2,
    Xhmm3,
    #[serde(rename = "hmm_normout")]
    HmmNormOut,
    Hmm1Sup,
    Hmm2Sup,
    Hmm3Sup,
    Ocnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// Frame vectors of a single window.
    Pose,
    /// Runs of window vectors.
    Activity,
    /// Single window vectors.
    Vector,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Hmm1,
        Variant::Hmm2,
        Variant::Xhmm1,
        Variant::Xhmm2,
        Variant::Xhmm3,
        Variant::HmmNormOut,
        Variant::Hmm1Sup,
        Variant::Hmm2Sup,
        Variant::Hmm3Sup,
        Variant::Ocnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hmm1 => "hmm1",
            Variant::Hmm2 => "hmm2",
            Variant::Xhmm1 => "xhmm1",
            Variant::Xhmm2 => "xhmm2",
            Variant::Xhmm3 => "xhmm3",
            Variant::HmmNormOut => "hmm_normout",
            Variant::Hmm1Sup => "hmm1_sup",
            Variant::Hmm2Sup => "hmm2_sup",
            Variant::Hmm3Sup => "hmm3_sup",
            Variant::Ocnn => "ocnn",
        }
    }

    pub fn level(self) -> Level {
        match self {
            Variant::Xhmm3 | Variant::Hmm3Sup => Level::Activity,
            Variant::Ocnn => Level::Vector,
            _ => Level::Pose,
        }
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, Variant::Hmm1Sup | Variant::Hmm2Sup | Variant::Hmm3Sup)
    }

    pub fn uses_xi(self) -> bool {
        matches!(self, Variant::Xhmm1 | Variant::Xhmm2 | Variant::Xhmm3)
    }

    /// Whether training consumes the IQR proxy outliers.
    pub fn uses_outliers(self) -> bool {
        self.uses_xi() || self == Variant::HmmNormOut
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown variant {s:?}; expected one of {}",
                    Variant::ALL.map(Variant::name).join(", ")
                ))
            })
    }
}

/// Variant-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorBody {
    /// Fall iff the negative log-likelihood exceeds every model's threshold.
    Threshold {
        models: Vec<GaussianHmm>,
        thresholds: Vec<f64>,
    },
    /// Fall iff the alternate model strictly beats every normal model.
    Argmax {
        normal: Vec<GaussianHmm>,
        alternate: GaussianHmm,
        xi: Option<f64>,
    },
    /// One state per activity plus a final fall state, decoded by Viterbi.
    Activity { model: GaussianHmm, xi: Option<f64> },
    /// One-class nearest neighbour.
    NearestNeighbour {
        points: Vec<Vec<f64>>,
        /// Distance from each point to its nearest other point.
        neighbour_dist: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallDetector {
    pub variant: Variant,
    /// Labels of the normal models or states, in order.
    pub activity_names: Vec<String>,
    pub body: DetectorBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub is_fall: bool,
    pub winning_label: String,
    /// Model label and log-likelihood; empty for activity-level and
    /// nearest-neighbour detectors.
    pub per_model_loglik: Vec<(String, f64)>,
    pub decoded_path: Option<Vec<usize>>,
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 1.0) || !xi.is_finite() {
        return Err(Error::InvalidInput(format!("xi must be a finite value >= 1, got {xi}")));
    }
    Ok(())
}

impl FallDetector {
    pub fn xi(&self) -> Option<f64> {
        match &self.body {
            DetectorBody::Argmax { xi, .. } | DetectorBody::Activity { xi, .. } => *xi,
            _ => None,
        }
    }

    /// Checks that the body matches the variant and carries exactly the
    /// parameters the variant needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidInput(format!("{} detector: {why}", self.variant)));
        let v = self.variant;
        match &self.body {
            DetectorBody::Threshold { models, thresholds } => {
                if !matches!(v, Variant::Hmm1 | Variant::Hmm2) {
                    return bad("thresholds only belong to hmm1/hmm2");
                }
                if models.is_empty() || models.len() != thresholds.len() || models.len() != self.activity_names.len() {
                    return bad("model, threshold and name counts differ");
                }
                if v == Variant::Hmm2 && models.len() != 1 {
                    return bad("hmm2 has a single pooled model");
                }
                models.iter().try_for_each(GaussianHmm::validate)?;
            }
            DetectorBody::Argmax { normal, alternate, xi } => {
                if !matches!(
                    v,
                    Variant::Xhmm1 | Variant::Xhmm2 | Variant::HmmNormOut | Variant::Hmm1Sup | Variant::Hmm2Sup
                ) {
                    return bad("argmax body does not fit this variant");
                }
                if v.uses_xi() != xi.is_some() {
                    return bad("xi must be present exactly for x-factor variants");
                }
                if let Some(x) = xi {
                    check_xi(*x)?;
                }
                if normal.is_empty() || normal.len() != self.activity_names.len() {
                    return bad("normal model count differs from activity names");
                }
                normal.iter().chain(std::iter::once(alternate)).try_for_each(GaussianHmm::validate)?;
                if normal.iter().any(|m| m.dim() != alternate.dim()) {
                    return bad("models disagree on feature dimension");
                }
            }
            DetectorBody::Activity { model, xi } => {
                if !matches!(v, Variant::Xhmm3 | Variant::Hmm3Sup) {
                    return bad("activity body does not fit this variant");
                }
                if v.uses_xi() != xi.is_some() {
                    return bad("xi must be present exactly for x-factor variants");
                }
                if let Some(x) = xi {
                    check_xi(*x)?;
                }
                model.validate()?;
                if model.n_states() != self.activity_names.len() + 1 {
                    return bad("state count must be activities + 1");
                }
            }
            DetectorBody::NearestNeighbour { points, neighbour_dist } => {
                if v != Variant::Ocnn {
                    return bad("nearest-neighbour body only belongs to ocnn");
                }
                if points.len() < 2 || points.len() != neighbour_dist.len() {
                    return bad("needs at least two points with their neighbour distances");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.body {
            DetectorBody::Threshold { models, .. } => models[0].dim(),
            DetectorBody::Argmax { alternate, .. } => alternate.dim(),
            DetectorBody::Activity { model, .. } => model.dim(),
            DetectorBody::NearestNeighbour { points, .. } => points[0].len(),
        }
    }

    /// Classifies one observation sequence.
    ///
    /// Pose-level detectors take the frame vectors of one window. The
    /// activity-level detector decodes the sequence and reports a fall if the
    /// path visits the fall state anywhere; use [`FallDetector::classify_steps`]
    /// for per-window decisions. The nearest-neighbour detector flags the
    /// sequence if any vector is rejected.
    pub fn classify(&self, seq: &[Vec<f64>]) -> Result<Verdict> {
        match &self.body {
            DetectorBody::Threshold { models, thresholds } => {
                let lls = models
                    .iter()
                    .map(|m| m.log_likelihood(seq))
                    .collect::<Result<Vec<f64>>>()?;
                let is_fall = lls.iter().zip(thresholds).all(|(ll, t)| -ll > *t);
                let per_model_loglik: Vec<(String, f64)> =
                    self.activity_names.iter().cloned().zip(lls.iter().copied()).collect();
                let winning_label = if is_fall {
                    FALL_LABEL.to_string()
                } else {
                    self.activity_names[argmax_first(&lls)].clone()
                };
                Ok(Verdict {
                    is_fall,
                    winning_label,
                    per_model_loglik,
                    decoded_path: None,
                })
            }
            DetectorBody::Argmax { normal, alternate, .. } => {
                let lls = normal
                    .iter()
                    .map(|m| m.log_likelihood(seq))
                    .collect::<Result<Vec<f64>>>()?;
                let alt = alternate.log_likelihood(seq)?;
                let best = argmax_first(&lls);
                let is_fall = alt > lls[best];
                let mut per_model_loglik: Vec<(String, f64)> =
                    self.activity_names.iter().cloned().zip(lls.iter().copied()).collect();
                per_model_loglik.push((FALL_LABEL.to_string(), alt));
                Ok(Verdict {
                    is_fall,
                    winning_label: if is_fall {
                        FALL_LABEL.to_string()
                    } else {
                        self.activity_names[best].clone()
                    },
                    per_model_loglik,
                    decoded_path: None,
                })
            }
            DetectorBody::Activity { model, .. } => {
                let (path, _) = model.viterbi(seq)?;
                let fall_state = self.activity_names.len();
                let is_fall = path.contains(&fall_state);
                let last = *path.last().unwrap();
                Ok(Verdict {
                    is_fall,
                    winning_label: if is_fall {
                        FALL_LABEL.to_string()
                    } else {
                        self.activity_names[last].clone()
                    },
                    per_model_loglik: Vec::new(),
                    decoded_path: Some(path),
                })
            }
            DetectorBody::NearestNeighbour { .. } => {
                if seq.is_empty() {
                    return Err(Error::InvalidInput("empty observation sequence".into()));
                }
                let mut is_fall = false;
                for v in seq {
                    is_fall |= self.nn_reject(v)?;
                }
                Ok(Verdict {
                    is_fall,
                    winning_label: if is_fall { FALL_LABEL } else { "normal" }.to_string(),
                    per_model_loglik: Vec::new(),
                    decoded_path: None,
                })
            }
        }
    }

    /// Per-step fall decisions. For activity-level detectors step `t` is a
    /// fall iff the decoded path is in the fall state at `t`; other detectors
    /// classify each vector as a length-1 sequence.
    pub fn classify_steps(&self, seq: &[Vec<f64>]) -> Result<Vec<bool>> {
        match &self.body {
            DetectorBody::Activity { model, .. } => {
                let fall_state = self.activity_names.len();
                Ok(model.viterbi(seq)?.0.into_iter().map(|s| s == fall_state).collect())
            }
            _ => seq
                .iter()
                .map(|v| self.classify(std::slice::from_ref(v)).map(|r| r.is_fall))
                .collect(),
        }
    }

    fn nn_reject(&self, v: &[f64]) -> Result<bool> {
        let DetectorBody::NearestNeighbour { points, neighbour_dist } = &self.body else {
            unreachable!()
        };
        if v.len() != points[0].len() {
            return Err(Error::DimensionMismatch {
                expected: points[0].len(),
                got: v.len(),
            });
        }
        let (idx, d) = nearest(points, v, None);
        if d == 0.0 {
            return Ok(false);
        }
        Ok(d / neighbour_dist[idx] > 1.0)
    }
}

/// Index of the first maximum.
fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest(points: &[Vec<f64>], v: &[f64], skip: Option<usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = euclidean(p, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Normal training sequences of one activity.
#[derive(Debug, Clone)]
pub struct ActivitySet<'a> {
    pub name: String,
    pub sequences: Vec<&'a [Vec<f64>]>,
}

fn check_sets(sets: &[ActivitySet<'_>]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::InsufficientData("no activities to train on".into()));
    }
    if let Some(s) = sets.iter().find(|s| s.sequences.is_empty()) {
        return Err(Error::InsufficientData(format!("activity {:?} has no sequences", s.name)));
    }
    Ok(())
}

/// Trains one pose-level HMM per activity. Model `i` uses seed `cfg.seed + i`.
pub fn train_activity_models(sets: &[ActivitySet<'_>], n_states: usize, cfg: &TrainConfig) -> Result<Vec<GaussianHmm>> {
    check_sets(sets)?;
    sets.par_iter()
        .enumerate()
        .map(|(i, s)| {
            hmm::train(&s.sequences, n_states, &cfg.with_seed(cfg.seed.wrapping_add(i as u64)))
                .map(|(m, _)| m)
                .map_err(|e| match e {
                    Error::InsufficientData(msg) => Error::InsufficientData(format!("activity {:?}: {msg}", s.name)),
                    other => other,
                })
        })
        .collect()
}

fn max_nll(model: &GaussianHmm, seqs: &[&[Vec<f64>]]) -> Result<f64> {
    let mut t = f64::NEG_INFINITY;
    for s in seqs {
        t = t.max(-model.log_likelihood(s)?);
    }
    Ok(t)
}

/// HMM1 from already trained per-activity models: each threshold is the
/// largest negative log-likelihood over that activity's training sequences.
pub fn hmm1_from_models(sets: &[ActivitySet<'_>], models: Vec<GaussianHmm>) -> Result<FallDetector> {
    check_sets(sets)?;
    if models.len() != sets.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            got: models.len(),
        });
    }
    let thresholds = models
        .iter()
        .zip(sets)
        .map(|(m, s)| max_nll(m, &s.sequences))
        .collect::<Result<Vec<f64>>>()?;
    let det = FallDetector {
        variant: Variant::Hmm1,
        activity_names: sets.iter().map(|s| s.name.clone()).collect(),
        body: DetectorBody::Threshold { models, thresholds },
    };
    det.validate()?;
    Ok(det)
}

pub fn train_hmm1(sets: &[ActivitySet<'_>], n_states: usize, cfg: &TrainConfig) -> Result<FallDetector> {
    let models = train_activity_models(sets, n_states, cfg)?;
    hmm1_from_models(sets, models)
}

pub fn hmm2_from_model(sequences: &[&[Vec<f64>]], model: GaussianHmm) -> Result<FallDetector> {
    if sequences.is_empty() {
        return Err(Error::InsufficientData("no normal sequences".into()));
    }
    let t = max_nll(&model, sequences)?;
    Ok(FallDetector {
        variant: Variant::Hmm2,
        activity_names: vec!["normal".into()],
        body: DetectorBody::Threshold {
            models: vec![model],
            thresholds: vec![t],
        },
    })
}

pub fn train_hmm2(sequences: &[&[Vec<f64>]], n_states: usize, cfg: &TrainConfig) -> Result<FallDetector> {
    if sequences.is_empty() {
        return Err(Error::InsufficientData("no normal sequences".into()));
    }
    let (model, _) = hmm::train(sequences, n_states, cfg)?;
    hmm2_from_model(sequences, model)
}

fn mean_of(rows: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = rows.clone().count() as f64;
    rows.sum::<f64>() / n
}

/// Element-wise average of models with equal shapes; the averaged
/// covariances are multiplied by `xi`.
pub fn averaged_model(models: &[GaussianHmm], xi: f64) -> Result<GaussianHmm> {
    check_xi(xi)?;
    let first = models
        .first()
        .ok_or_else(|| Error::InsufficientData("no models to average".into()))?;
    let (n, d) = (first.n_states(), first.dim());
    if let Some(m) = models.iter().find(|m| m.n_states() != n || m.dim() != d) {
        return Err(Error::InvalidInput(format!(
            "cannot average models of shape {}x{} and {}x{}",
            n,
            d,
            m.n_states(),
            m.dim()
        )));
    }
    let prior = (0..n).map(|j| mean_of(models.iter().map(|m| m.prior[j]))).collect();
    let trans = (0..n)
        .map(|i| (0..n).map(|j| mean_of(models.iter().map(|m| m.trans[i][j]))).collect())
        .collect();
    let means = (0..n)
        .map(|j| (0..d).map(|k| mean_of(models.iter().map(|m| m.means[j][k]))).collect())
        .collect();
    let vars = (0..n)
        .map(|j| (0..d).map(|k| xi * mean_of(models.iter().map(|m| m.vars[j][k]))).collect())
        .collect();
    GaussianHmm::new(prior, trans, means, vars)
}

/// XHMM1: per-activity models against their averaged, inflated X-factor.
pub fn build_xhmm1(activity_names: Vec<String>, models: Vec<GaussianHmm>, xi: f64) -> Result<FallDetector> {
    let alternate = averaged_model(&models, xi)?;
    let det = FallDetector {
        variant: Variant::Xhmm1,
        activity_names,
        body: DetectorBody::Argmax {
            normal: models,
            alternate,
            xi: Some(xi),
        },
    };
    det.validate()?;
    Ok(det)
}

/// XHMM2: a pooled normal model against itself with inflated covariances.
pub fn build_xhmm2(pooled: GaussianHmm, xi: f64) -> Result<FallDetector> {
    check_xi(xi)?;
    let alternate = pooled.inflated(xi);
    let det = FallDetector {
        variant: Variant::Xhmm2,
        activity_names: vec!["normal".into()],
        body: DetectorBody::Argmax {
            normal: vec![pooled],
            alternate,
            xi: Some(xi),
        },
    };
    det.validate()?;
    Ok(det)
}

pub fn train_hmm_normout(
    non_fall: &[&[Vec<f64>]],
    outliers: &[&[Vec<f64>]],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<FallDetector> {
    if outliers.is_empty() {
        return Err(Error::InsufficientData(
            "no outlier sequences to train the outlier model; lower omega".into(),
        ));
    }
    if non_fall.is_empty() {
        return Err(Error::InsufficientData("no non-fall sequences".into()));
    }
    let (normal, _) = hmm::train(non_fall, n_states, cfg)?;
    let (alternate, _) = hmm::train(outliers, n_states, &cfg.with_seed(cfg.seed.wrapping_add(1)))?;
    Ok(FallDetector {
        variant: Variant::HmmNormOut,
        activity_names: vec!["normal".into()],
        body: DetectorBody::Argmax {
            normal: vec![normal],
            alternate,
            xi: None,
        },
    })
}

/// Per-activity window moments and label transitions for the activity-level
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStats {
    pub names: Vec<String>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    /// Row-stochastic empirical transitions between activities.
    pub transitions: Vec<Vec<f64>>,
}

/// Population mean and clamped variance of a set of vectors.
pub fn moments(rows: &[&[f64]], cfg: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InsufficientData("no vectors for moment estimation".into()))?;
    let d = first.len();
    let n = rows.len() as f64;
    let mut mu = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        for (m, v) in mu.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mu) {
            *s += (v - m) * (v - m);
        }
    }
    let var = var.into_iter().map(|s| (s / n).clamp(cfg.var_floor, cfg.var_ceil)).collect();
    Ok((mu, var))
}

impl ActivityStats {
    /// `samples` are labelled window vectors; `pairs` are consecutive label
    /// pairs observed in training recordings. Rows with no observed
    /// transitions become uniform.
    pub fn estimate(
        names: &[String],
        samples: &[(&str, &[f64])],
        pairs: &[(&str, &str)],
        cfg: &TrainConfig,
    ) -> Result<ActivityStats> {
        if names.is_empty() {
            return Err(Error::InsufficientData("no activities".into()));
        }
        let index = |l: &str| names.iter().position(|n| n == l);
        let mut means = Vec::with_capacity(names.len());
        let mut vars = Vec::with_capacity(names.len());
        for name in names {
            let rows: Vec<&[f64]> = samples.iter().filter(|(l, _)| l == name).map(|(_, v)| *v).collect();
            if rows.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "activity {name:?} has {} window(s); at least 2 are needed for its moments",
                    rows.len()
                )));
            }
            let (m, v) = moments(&rows, cfg)?;
            means.push(m);
            vars.push(v);
        }
        let n = names.len();
        let mut counts = vec![vec![0.0; n]; n];
        for (a, b) in pairs {
            if let (Some(i), Some(j)) = (index(a), index(b)) {
                counts[i][j] += 1.0;
            }
        }
        let transitions = counts
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.into_iter().map(|c| c / s).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            })
            .collect();
        Ok(ActivityStats {
            names: names.to_vec(),
            means,
            vars,
            transitions,
        })
    }
}

/// Adds a fall state to an activity transition matrix: each normal row is
/// scaled by `1 - NORMAL_TO_FALL` and gains `NORMAL_TO_FALL` towards the fall
/// state; the fall row keeps `FALL_SELF_TRANSITION` and spreads the rest
/// evenly over the activities.
pub fn augment_transitions(empirical: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = empirical.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty transition matrix".into()));
    }
    let mut out = Vec::with_capacity(n + 1);
    for row in empirical {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidInput("empirical transition rows must be stochastic".into()));
        }
        let mut r: Vec<f64> = row.iter().map(|p| p / s * (1.0 - NORMAL_TO_FALL)).collect();
        r.push(NORMAL_TO_FALL);
        out.push(r);
    }
    let leave = FALL_EXIT / n as f64;
    let mut fall_row = vec![leave; n];
    fall_row.push(FALL_SELF_TRANSITION);
    out.push(fall_row);
    Ok(out)
}

fn activity_detector(
    variant: Variant,
    stats: &ActivityStats,
    fall_mean: Vec<f64>,
    fall_var: Vec<f64>,
    xi: Option<f64>,
) -> Result<FallDetector> {
    let n = stats.names.len() + 1;
    let mut means = stats.means.clone();
    means.push(fall_mean);
    let mut vars = stats.vars.clone();
    vars.push(fall_var);
    let model = GaussianHmm::new(vec![1.0 / n as f64; n], augment_transitions(&stats.transitions)?, means, vars)?;
    let det = FallDetector {
        variant,
        activity_names: stats.names.clone(),
        body: DetectorBody::Activity { model, xi },
    };
    det.validate()?;
    Ok(det)
}

/// XHMM3: the fall state takes the average activity mean and the average
/// activity variance times `xi`.
pub fn build_xhmm3(stats: &ActivityStats, xi: f64) -> Result<FallDetector> {
    check_xi(xi)?;
    let k = stats.names.len();
    let d = stats.means[0].len();
    let mean = (0..d).map(|f| mean_of(stats.means.iter().map(|m| m[f]))).collect();
    let var = (0..d)
        .map(|f| xi * mean_of(stats.vars.iter().map(|v| v[f])))
        .collect();
    debug_assert!(k > 0);
    activity_detector(Variant::Xhmm3, stats, mean, var, Some(xi))
}

/// Training input for the supervised variants.
#[derive(Debug, Clone)]
pub enum SupervisedInput<'a> {
    /// Pose-level normal data per activity (hmm1_sup) or pooled (hmm2_sup,
    /// a single set), with fall frame sequences.
    Pose {
        sets: Vec<ActivitySet<'a>>,
        falls: Vec<&'a [Vec<f64>]>,
    },
    /// Activity-level statistics with fall window vectors (hmm3_sup).
    Activity {
        stats: ActivityStats,
        falls: Vec<&'a [f64]>,
    },
}

/// Supervised counterpart of the X-factor detectors: the fall model or state
/// is estimated from labelled fall data instead of by inflation.
pub fn train_supervised(
    variant: Variant,
    input: &SupervisedInput<'_>,
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<FallDetector> {
    let no_falls = || {
        Error::InsufficientData(format!(
            "{variant} needs at least one fall sequence; supervised detectors cannot be trained without falls"
        ))
    };
    match (variant, input) {
        (Variant::Hmm1Sup | Variant::Hmm2Sup, SupervisedInput::Pose { sets, falls }) => {
            if falls.is_empty() {
                return Err(no_falls());
            }
            if variant == Variant::Hmm2Sup && sets.len() != 1 {
                return Err(Error::InvalidInput("hmm2_sup takes a single pooled normal set".into()));
            }
            let normal = train_activity_models(sets, n_states, cfg)?;
            let names = sets.iter().map(|s| s.name.clone()).collect();
            pose_supervised_from_models(variant, names, normal, falls, n_states, cfg)
        }
        (Variant::Hmm3Sup, SupervisedInput::Activity { stats, falls }) => {
            if falls.is_empty() {
                return Err(no_falls());
            }
            let (mean, var) = moments(falls, cfg)?;
            activity_detector(Variant::Hmm3Sup, stats, mean, var, None)
        }
        _ => Err(Error::InvalidInput(format!(
            "{variant} is not a supervised variant or was given the wrong kind of input"
        ))),
    }
}

/// hmm1_sup / hmm2_sup from already trained normal models; only the fall
/// model is trained here.
pub fn pose_supervised_from_models(
    variant: Variant,
    activity_names: Vec<String>,
    normal: Vec<GaussianHmm>,
    falls: &[&[Vec<f64>]],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<FallDetector> {
    if !matches!(variant, Variant::Hmm1Sup | Variant::Hmm2Sup) {
        return Err(Error::InvalidInput(format!("{variant} is not a pose-level supervised variant")));
    }
    if falls.is_empty() {
        return Err(Error::InsufficientData(format!("{variant} needs at least one fall sequence")));
    }
    let fall_states = n_states.min(falls.iter().map(|s| s.len()).max().unwrap_or(0)).max(1);
    let (alternate, _) = hmm::train(falls, fall_states, &cfg.with_seed(cfg.seed.wrapping_add(1000)))?;
    let det = FallDetector {
        variant,
        activity_names,
        body: DetectorBody::Argmax {
            normal,
            alternate,
            xi: None,
        },
    };
    det.validate()?;
    Ok(det)
}

/// One-class nearest neighbour over normal vectors.
pub fn train_ocnn(points: Vec<Vec<f64>>) -> Result<FallDetector> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("ocnn needs at least two training vectors".into()));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let neighbour_dist = (0..points.len())
        .into_par_iter()
        .map(|i| nearest(&points, &points[i], Some(i)).1)
        .collect();
    Ok(FallDetector {
        variant: Variant::Ocnn,
        activity_names: vec!["normal".into()],
        body: DetectorBody::NearestNeighbour { points, neighbour_dist },
    })
}

pub const DETECTOR_FORMAT_VERSION: u32 = 1;

/// Serialised detector with the preprocessing needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFile {
    pub version: u32,
    pub detector: FallDetector,
    /// Feature selection and standardisation expected on the input.
    pub preprocessing: Option<Preprocessing>,
}

impl DetectorFile {
    pub fn new(detector: FallDetector) -> Self {
        DetectorFile {
            version: DETECTOR_FORMAT_VERSION,
            detector,
            preprocessing: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DetectorFile = serde_json::from_str(text)?;
        if f.version != DETECTOR_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported detector format version {}",
                f.version
            )));
        }
        f.detector.validate()?;
        Ok(f)
    }
}
