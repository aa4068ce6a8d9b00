//! The 31 time and frequency domain features computed per window or frame,
//! observation sequence assembly and RELIEF-F feature ranking.
//!
//! Features are ordered as follows (signals are `a_x, a_y, a_z, a_norm, ω_norm`):
//!
//! | index (1-based) | feature |
//! |---|---|
//! | 1–5 | mean of each signal |
//! | 6–10 | maximum |
//! | 11–15 | minimum |
//! | 16–20 | population standard deviation |
//! | 21–22 | IQR of `a_norm`, `ω_norm` |
//! | 23 | normalised signal magnitude area |
//! | 24 | normalised average PSD of `a_norm` |
//! | 25 | spectral entropy of `a_norm` |
//! | 26 | DC component of `a_norm` |
//! | 27 | FFT energy of `a_norm` |
//! | 28 | normalised information entropy of FFT magnitudes of `a_norm` |
//! | 29–31 | correlations `(a_x,a_y)`, `(a_x,a_z)`, `(a_y,a_z)` |

mod relief;

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowRecord;
use crate::error::{Error, Result};
use crate::stats;
use crate::FALL_LABEL;

pub use relief::{relief_f_rank, ReliefRanking};

pub const N_FEATURES: usize = 31;

pub const FEATURE_DESCRIPTIONS: [&str; N_FEATURES] = [
    "mean a_x",
    "mean a_y",
    "mean a_z",
    "mean a_norm",
    "mean w_norm",
    "max a_x",
    "max a_y",
    "max a_z",
    "max a_norm",
    "max w_norm",
    "min a_x",
    "min a_y",
    "min a_z",
    "min a_norm",
    "min w_norm",
    "std a_x",
    "std a_y",
    "std a_z",
    "std a_norm",
    "std w_norm",
    "iqr a_norm",
    "iqr w_norm",
    "signal magnitude area",
    "average psd a_norm",
    "spectral entropy a_norm",
    "dc component a_norm",
    "fft energy a_norm",
    "fft magnitude entropy a_norm",
    "corr(a_x, a_y)",
    "corr(a_x, a_z)",
    "corr(a_y, a_z)",
];

/// The five derived signals, one value per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
    pub a_norm: Vec<f64>,
    pub w_norm: Vec<f64>,
}

impl Signals {
    fn channels(&self) -> [&[f64]; 5] {
        [&self.ax, &self.ay, &self.az, &self.a_norm, &self.w_norm]
    }
}

pub fn derive_signals(accel: &[[f64; 3]], gyro: &[[f64; 3]]) -> Signals {
    let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    Signals {
        ax: accel.iter().map(|v| v[0]).collect(),
        ay: accel.iter().map(|v| v[1]).collect(),
        az: accel.iter().map(|v| v[2]).collect(),
        a_norm: accel.iter().map(norm).collect(),
        w_norm: gyro.iter().map(norm).collect(),
    }
}

/// A feature vector with an optional subset selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mask: Option<Vec<usize>>,
}

impl FeatureVector {
    pub fn masked(&self) -> Vec<f64> {
        match &self.mask {
            Some(m) => m.iter().map(|&i| self.values[i]).collect(),
            None => self.values.clone(),
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// DFT of `x` zero-padded to the next power of two.
pub fn padded_fft(x: &[f64]) -> Vec<Complex<f64>> {
    let len = x.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len).process(&mut buf));
    buf
}

/// Frequency-domain features of one signal: `[avg psd, spectral entropy, dc, energy, magnitude entropy]`.
fn spectral_features(x: &[f64]) -> [f64; 5] {
    let n = x.len() as f64;
    let spectrum = padded_fft(x);
    let len = spectrum.len();
    // one-sided, DC excluded: bins 1..=len/2
    let one_sided = &spectrum[1..=len / 2];
    let power: Vec<f64> = one_sided.iter().map(|c| c.norm_sqr() / n).collect();
    let avg_psd = stats::mean(&power) / n;
    let spectral_entropy = stats::normalized_entropy(&power);
    let dc = spectrum[0].norm() / n;
    let energy = spectrum[1..].iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
    let magnitudes: Vec<f64> = one_sided.iter().map(|c| c.norm()).collect();
    let magnitude_entropy = stats::normalized_entropy(&magnitudes);
    [avg_psd, spectral_entropy, dc, energy, magnitude_entropy]
}

/// Computes the 31 features of a sample block (at least two samples).
pub fn extract(accel: &[[f64; 3]], gyro: &[[f64; 3]]) -> Result<FeatureVector> {
    if accel.len() < 2 || gyro.len() != accel.len() {
        return Err(Error::InvalidInput(format!(
            "feature extraction needs at least 2 paired samples, got {} accel / {} gyro",
            accel.len(),
            gyro.len()
        )));
    }
    let sig = derive_signals(accel, gyro);
    let ch = sig.channels();
    let mut v = Vec::with_capacity(N_FEATURES);
    v.extend(ch.iter().map(|c| stats::mean(c)));
    v.extend(ch.iter().map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    v.extend(ch.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)));
    v.extend(ch.iter().map(|c| stats::std_dev(c)));
    v.push(stats::quartiles(&sig.a_norm).2);
    v.push(stats::quartiles(&sig.w_norm).2);
    let sma = accel
        .iter()
        .map(|a| a[0].abs() + a[1].abs() + a[2].abs())
        .sum::<f64>()
        / accel.len() as f64;
    v.push(sma);
    v.extend(spectral_features(&sig.a_norm));
    v.push(stats::pearson(&sig.ax, &sig.ay));
    v.push(stats::pearson(&sig.ax, &sig.az));
    v.push(stats::pearson(&sig.ay, &sig.az));
    debug_assert_eq!(v.len(), N_FEATURES);
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("feature f{} is not finite", i + 1)));
    }
    Ok(FeatureVector {
        values: v,
        mask: None,
    })
}

/// An ordered list of feature vectors forming one HMM observation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub subject_id: String,
    /// Sequence label: the window label in pose mode, the last window's label
    /// for an activity run (so a run ending in a fall is labelled fall).
    pub label: String,
    pub vectors: Vec<Vec<f64>>,
    /// Per-vector labels (constant in pose mode).
    pub step_labels: Vec<String>,
    /// Indices of the source windows in the dataset.
    pub sources: Vec<usize>,
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// Pose mode: one sequence per window, one vector per frame.
pub fn pose_sequences(windows: &[WindowRecord]) -> Vec<ObservationSequence> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| ObservationSequence {
            subject_id: w.subject_id.clone(),
            label: w.label.clone(),
            vectors: w.frames.clone(),
            step_labels: vec![w.label.clone(); w.frames.len()],
            sources: vec![i],
        })
        .collect()
}

/// Activity mode: maximal runs of temporally consecutive windows of one
/// subject and recording, one summary vector per window. A fall window ends
/// the run it belongs to.
pub fn activity_runs(windows: &[WindowRecord]) -> Vec<ObservationSequence> {
    let mut runs: Vec<ObservationSequence> = Vec::new();
    let mut open = false;
    for (i, w) in windows.iter().enumerate() {
        let extends = open
            && runs.last().is_some_and(|r| {
                let prev = &windows[*r.sources.last().unwrap()];
                prev.subject_id == w.subject_id && prev.recording == w.recording && prev.index + 1 == w.index
            });
        if !extends {
            runs.push(ObservationSequence {
                subject_id: w.subject_id.clone(),
                label: String::new(),
                vectors: Vec::new(),
                step_labels: Vec::new(),
                sources: Vec::new(),
            });
        }
        let run = runs.last_mut().unwrap();
        run.vectors.push(w.summary.clone());
        run.step_labels.push(w.label.clone());
        run.sources.push(i);
        run.label = w.label.clone();
        open = w.label != FALL_LABEL;
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let s = derive_signals(&[[0.0; 3], [3.0, 4.0, 0.0]], &[[1.0, 2.0, 2.0], [0.0; 3]]);
        assert_eq!(s.a_norm, vec![0.0, 5.0]);
        assert_eq!(s.w_norm, vec![3.0, 0.0]);
    }

    #[test]
    fn constant_block() {
        let c = -2.0;
        let f = extract(&[[c; 3]; 16], &[[0.5; 3]; 16]).unwrap().values;
        assert!(f[15..20].iter().all(|&v| v == 0.0));
        assert_eq!(&f[28..31], &[0.0; 3]);
        assert!((f[22] - 3.0 * c.abs()).abs() < 1e-12);
        assert_eq!(f[24], 0.0);
        assert_eq!(f[27], 0.0);
    }

    #[test]
    fn perfectly_correlated_axes() {
        let accel: Vec<[f64; 3]> = (0..20).map(|i| [i as f64, i as f64, (i % 3) as f64]).collect();
        let f = extract(&accel, &vec![[0.0; 3]; 20]).unwrap().values;
        assert!((f[28] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(extract(&[[1.0; 3]], &[[1.0; 3]]).is_err());
    }

    fn record(subject: &str, recording: usize, index: usize, label: &str) -> WindowRecord {
        WindowRecord {
            subject_id: subject.into(),
            recording,
            index,
            label: label.into(),
            frames: vec![vec![index as f64]; 8],
            summary: vec![index as f64],
        }
    }

    #[test]
    fn sequence_assembly() {
        let w = vec![record("a", 0, 0, "walk")];
        let pose = pose_sequences(&w);
        assert_eq!(pose.len(), 1);
        assert_eq!(pose[0].len(), 8);
        let runs = activity_runs(&w);
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].len(), 1);

        let w: Vec<_> = (0..5).map(|i| record("a", 0, i, "walk")).collect();
        let runs = activity_runs(&w);
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].len(), 5);
    }

    #[test]
    fn runs_break_on_gaps_subjects_and_falls() {
        let w = vec![
            record("a", 0, 0, "walk"),
            record("a", 0, 1, "sit"),
            record("a", 0, 2, FALL_LABEL),
            record("a", 0, 3, "sit"),
            record("a", 0, 5, "sit"),
            record("a", 1, 6, "sit"),
            record("b", 1, 7, "sit"),
        ];
        let lens: Vec<usize> = activity_runs(&w).iter().map(|r| r.len()).collect();
        assert_eq!(lens, vec![3, 1, 1, 1, 1]);
        assert_eq!(activity_runs(&w)[0].label, FALL_LABEL);
    }
}
