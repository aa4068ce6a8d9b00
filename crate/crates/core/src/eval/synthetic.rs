//! Seeded synthetic feature datasets with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, WindowRecord};
use crate::error::{Error, Result};
use crate::hmm::GaussianHmm;
use crate::models::averaged_model;
use crate::stats::derive_seed;
use crate::FALL_LABEL;

const ACTIVITY_NAMES: [&str; 8] = [
    "walking", "sitting", "running", "standing", "lying", "jumping", "stairs", "cycling",
];

/// Generating model of one normal activity over frame vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityArchetype {
    pub name: String,
    pub model: GaussianHmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub windows_per_subject: usize,
    pub frames_per_window: usize,
    pub activities: Vec<ActivityArchetype>,
    /// Window-to-window activity chain within a recording.
    pub activity_transitions: Vec<Vec<f64>>,
    /// Fraction of each subject's windows that are falls.
    pub fall_prevalence: f64,
    /// Falls come from the averaged activity model with covariances scaled
    /// by this factor.
    pub fall_inflation: f64,
    /// Fraction of normal windows drawn with inflated covariances, standing
    /// in for sensor artefacts and unusual movement inside normal recordings.
    pub artifact_rate: f64,
    pub artifact_inflation: f64,
    /// Standard deviation of a per-subject offset added to every frame.
    pub subject_shift_sd: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig::standard(3, 6, 0)
    }
}

impl SyntheticConfig {
    /// Archetypes with 4 ergodic states each and well separated means, drawn
    /// from `archetype_seed`; 5 subjects, 400 windows of 8 frames, 5% falls.
    pub fn standard(n_activities: usize, dim: usize, archetype_seed: u64) -> SyntheticConfig {
        let n_activities = n_activities.clamp(1, ACTIVITY_NAMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(archetype_seed, &[0x6172]));
        let n_states = 4;
        let activities = (0..n_activities)
            .map(|a| {
                let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let means = (0..n_states)
                    .map(|_| centre.iter().map(|c| c + rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let vars = (0..n_states)
                    .map(|_| (0..dim).map(|_| rng.random_range(0.3..0.8)).collect())
                    .collect();
                let trans = (0..n_states)
                    .map(|i| (0..n_states).map(|j| if i == j { 0.7 } else { 0.1 }).collect())
                    .collect();
                ActivityArchetype {
                    name: ACTIVITY_NAMES[a].to_string(),
                    model: GaussianHmm::new(vec![0.25; n_states], trans, means, vars).expect("valid archetype"),
                }
            })
            .collect();
        let stay = if n_activities == 1 { 1.0 } else { 0.9 };
        let leave = if n_activities == 1 { 0.0 } else { 0.1 / (n_activities - 1) as f64 };
        let activity_transitions = (0..n_activities)
            .map(|i| (0..n_activities).map(|j| if i == j { stay } else { leave }).collect())
            .collect();
        SyntheticConfig {
            n_subjects: 5,
            windows_per_subject: 400,
            frames_per_window: 8,
            activities,
            activity_transitions,
            fall_prevalence: 0.05,
            fall_inflation: 6.0,
            artifact_rate: 0.03,
            artifact_inflation: 25.0,
            subject_shift_sd: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activities.len() < 2 {
            return Err(Error::InvalidInput("at least 2 activity archetypes are required".into()));
        }
        let dim = self.activities[0].model.dim();
        for a in &self.activities {
            a.model.validate()?;
            if a.model.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.model.dim(),
                });
            }
        }
        let k = self.activities.len();
        if self.activity_transitions.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.activity_transitions.len(),
            });
        }
        for (i, row) in self.activity_transitions.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.len() != k || row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "activity transition row {i} is not a probability vector over {k} activities"
                )));
            }
        }
        if self.n_subjects == 0 || self.windows_per_subject == 0 || self.frames_per_window < 2 {
            return Err(Error::InvalidInput(
                "need at least one subject, one window and two frames per window".into(),
            ));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.fall_prevalence) || !unit(self.artifact_rate) {
            return Err(Error::InvalidInput("fall prevalence and artifact rate must lie in [0, 1)".into()));
        }
        if !(self.fall_inflation >= 1.0) || !(self.artifact_inflation >= 1.0) {
            return Err(Error::InvalidInput("inflation factors must be >= 1".into()));
        }
        if !(self.subject_shift_sd >= 0.0) {
            return Err(Error::InvalidInput("subject shift must be non-negative".into()));
        }
        Ok(())
    }

    pub fn fall_archetype(&self) -> Result<GaussianHmm> {
        let models: Vec<GaussianHmm> = self.activities.iter().map(|a| a.model.clone()).collect();
        averaged_model(&models, self.fall_inflation)
    }
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn summarise(frames: &[Vec<f64>]) -> Vec<f64> {
    let d = frames[0].len();
    let mut out = Vec::with_capacity(2 * d);
    for f in 0..d {
        let col: Vec<f64> = frames.iter().map(|r| r[f]).collect();
        out.push(crate::stats::mean(&col));
    }
    for f in 0..d {
        let col: Vec<f64> = frames.iter().map(|r| r[f]).collect();
        out.push(crate::stats::std_dev(&col));
    }
    out
}

/// Generates a labelled feature dataset. Window vectors are the per-feature
/// mean and standard deviation of the window's frames. Each fall closes its
/// recording; the next window starts a new one.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<FeatureDataset> {
    config.validate()?;
    let fall_model = config.fall_archetype()?;
    let artifact_models: Vec<GaussianHmm> = config
        .activities
        .iter()
        .map(|a| a.model.inflated(config.artifact_inflation))
        .collect();
    let dim = fall_model.dim();
    let k = config.activities.len();
    let width = config.n_subjects.to_string().len().max(2);
    let mut windows = Vec::with_capacity(config.n_subjects * config.windows_per_subject);
    for s in 0..config.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[s as u64]));
        let subject_id = format!("s{:0width$}", s + 1);
        let shift: Vec<f64> = if config.subject_shift_sd > 0.0 {
            let n = Normal::new(0.0, config.subject_shift_sd).unwrap();
            (0..dim).map(|_| n.sample(&mut rng)).collect()
        } else {
            vec![0.0; dim]
        };
        let n_windows = config.windows_per_subject;
        let n_falls = ((config.fall_prevalence * n_windows as f64).round() as usize).min(n_windows.saturating_sub(1));
        let mut is_fall = vec![false; n_windows];
        if n_falls > 0 {
            for i in rand::seq::index::sample(&mut rng, n_windows - 1, n_falls) {
                is_fall[i + 1] = true;
            }
        }
        let mut recording = 0usize;
        let mut index = 0usize;
        let mut activity: Option<usize> = None;
        for fall in is_fall {
            let (label, model) = if fall {
                (FALL_LABEL.to_string(), &fall_model)
            } else {
                let a = match activity {
                    None => rng.random_range(0..k),
                    Some(prev) => pick(&config.activity_transitions[prev], &mut rng),
                };
                activity = Some(a);
                let artifact = config.artifact_rate > 0.0 && rng.random::<f64>() < config.artifact_rate;
                let m = if artifact {
                    &artifact_models[a]
                } else {
                    &config.activities[a].model
                };
                (config.activities[a].name.clone(), m)
            };
            let (_, mut frames) = model.sample(config.frames_per_window, &mut rng);
            for f in &mut frames {
                for (v, o) in f.iter_mut().zip(&shift) {
                    *v += o;
                }
            }
            windows.push(WindowRecord {
                subject_id: subject_id.clone(),
                recording,
                index,
                label,
                summary: summarise(&frames),
                frames,
            });
            index += 1;
            if fall {
                recording += 1;
                index = 0;
                activity = None;
            }
        }
    }
    let ds = FeatureDataset::new(windows);
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_falls_at_zero_prevalence() {
        let mut cfg = SyntheticConfig::default();
        cfg.fall_prevalence = 0.0;
        cfg.windows_per_subject = 40;
        let ds = generate_synthetic(&cfg, 1).unwrap();
        assert_eq!(ds.fall_count(), 0);
        assert_eq!(ds.len(), 200);
    }

    #[test]
    fn reproducible() {
        let mut cfg = SyntheticConfig::default();
        cfg.windows_per_subject = 30;
        let a = generate_synthetic(&cfg, 9).unwrap().to_csv_bytes().unwrap();
        let b = generate_synthetic(&cfg, 9).unwrap().to_csv_bytes().unwrap();
        let c = generate_synthetic(&cfg, 10).unwrap().to_csv_bytes().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_simplex_rejected() {
        let mut cfg = SyntheticConfig::default();
        cfg.activity_transitions[0][0] = 0.5;
        assert!(generate_synthetic(&cfg, 0).is_err());
    }

    #[test]
    fn fall_count_matches_prevalence() {
        let cfg = SyntheticConfig::default();
        let ds = generate_synthetic(&cfg, 3).unwrap();
        assert_eq!(ds.fall_count(), 5 * 20);
        assert_eq!(ds.summary_dim(), 12);
    }
}
