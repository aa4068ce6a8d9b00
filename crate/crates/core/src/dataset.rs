//! Feature-level dataset: one record per window holding the per-frame
//! feature vectors (pose level) and a window summary vector (activity level).
//!
//! On disk the dataset is a CSV with header
//! `subject,recording,window,frame,label,f1..fD,w1..wK`. Each window is
//! written as one summary row (empty `frame`, `w*` filled, `f*` empty)
//! followed by one row per frame (`frame` = 0.., `f*` filled, `w*` empty).

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::features;
use crate::ingest::SensorStream;
use crate::FALL_LABEL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub subject_id: String,
    /// Recording number; windows of different recordings are never contiguous.
    pub recording: usize,
    /// Window position within its recording.
    pub index: usize,
    pub label: String,
    pub frames: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

impl WindowRecord {
    pub fn is_fall(&self) -> bool {
        self.label == FALL_LABEL
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    pub windows: Vec<WindowRecord>,
}

impl FeatureDataset {
    pub fn new(windows: Vec<WindowRecord>) -> Self {
        FeatureDataset { windows }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Subject ids in first-appearance order.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.windows
            .iter()
            .filter(|w| seen.insert(w.subject_id.as_str()))
            .map(|w| w.subject_id.clone())
            .collect()
    }

    /// Sorted normal activity names.
    pub fn activities(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .windows
            .iter()
            .filter(|w| !w.is_fall())
            .map(|w| w.label.as_str())
            .collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn frame_dim(&self) -> usize {
        self.windows
            .iter()
            .find_map(|w| w.frames.first())
            .map_or(0, Vec::len)
    }

    pub fn summary_dim(&self) -> usize {
        self.windows.first().map_or(0, |w| w.summary.len())
    }

    pub fn fall_count(&self) -> usize {
        self.windows.iter().filter(|w| w.is_fall()).count()
    }

    pub fn validate(&self) -> Result<()> {
        let (fd, sd) = (self.frame_dim(), self.summary_dim());
        for w in &self.windows {
            if w.frames.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "window {}/{}/{} has no frames",
                    w.subject_id, w.recording, w.index
                )));
            }
            if let Some(f) = w.frames.iter().find(|f| f.len() != fd) {
                return Err(Error::DimensionMismatch {
                    expected: fd,
                    got: f.len(),
                });
            }
            if w.summary.len() != sd {
                return Err(Error::DimensionMismatch {
                    expected: sd,
                    got: w.summary.len(),
                });
            }
            if w.frames.iter().flatten().chain(&w.summary).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "window {}/{}/{} has non-finite features",
                    w.subject_id, w.recording, w.index
                )));
            }
        }
        Ok(())
    }

    /// Keeps only the listed feature indices at each level.
    pub fn select_features(&self, frame_idx: &[usize], summary_idx: &[usize]) -> FeatureDataset {
        let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        FeatureDataset {
            windows: self
                .windows
                .iter()
                .map(|w| WindowRecord {
                    frames: w.frames.iter().map(|f| pick(f, frame_idx)).collect(),
                    summary: pick(&w.summary, summary_idx),
                    ..w.clone()
                })
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let (fd, sd) = (self.frame_dim(), self.summary_dim());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["subject", "recording", "window", "frame", "label"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=fd).map(|i| format!("f{i}")));
        header.extend((1..=sd).map(|i| format!("w{i}")));
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(&header).map_err(ser)?;
        for win in &self.windows {
            let mut row = vec![
                win.subject_id.clone(),
                win.recording.to_string(),
                win.index.to_string(),
                String::new(),
                win.label.clone(),
            ];
            row.extend(std::iter::repeat_n(String::new(), fd));
            row.extend(win.summary.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(ser)?;
            for (k, frame) in win.frames.iter().enumerate() {
                let mut row = vec![
                    win.subject_id.clone(),
                    win.recording.to_string(),
                    win.index.to_string(),
                    k.to_string(),
                    win.label.clone(),
                ];
                row.extend(frame.iter().map(|v| v.to_string()));
                row.extend(std::iter::repeat_n(String::new(), sd));
                w.write_record(&row).map_err(ser)?;
            }
        }
        w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureDataset> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })?;
        let header = reader
            .headers()
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let fixed = ["subject", "recording", "window", "frame", "label"];
        if header.len() < fixed.len() || header.iter().zip(fixed).any(|(a, b)| a != b) {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: format!("header must start with {}", fixed.join(",")),
            });
        }
        let f_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('f') && i >= 5).collect();
        let w_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('w') && i >= 5).collect();

        let mut windows: Vec<WindowRecord> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let bad = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            };
            let int = |i: usize| -> Result<usize> {
                record[i]
                    .parse()
                    .map_err(|_| bad(format!("bad integer `{}` in column {}", &record[i], &header[i])))
            };
            let floats = |cols: &[usize]| -> Result<Vec<f64>> {
                cols.iter()
                    .map(|&i| {
                        record[i]
                            .parse::<f64>()
                            .map_err(|_| bad(format!("bad number `{}` in column {}", &record[i], &header[i])))
                    })
                    .collect()
            };
            let subject = record[0].to_string();
            let recording = int(1)?;
            let index = int(2)?;
            let label = record[4].to_string();
            if record[3].is_empty() {
                windows.push(WindowRecord {
                    subject_id: subject,
                    recording,
                    index,
                    label,
                    frames: Vec::new(),
                    summary: floats(&w_cols)?,
                });
            } else {
                let frame_no = int(3)?;
                let win = windows
                    .last_mut()
                    .filter(|w| w.subject_id == subject && w.recording == recording && w.index == index)
                    .ok_or_else(|| bad("frame row without a preceding window row".into()))?;
                if frame_no != win.frames.len() {
                    return Err(bad(format!("expected frame {}, got {frame_no}", win.frames.len())));
                }
                if label != win.label {
                    return Err(bad(format!("frame label `{label}` differs from window label `{}`", win.label)));
                }
                win.frames.push(floats(&f_cols)?);
            }
        }
        let ds = FeatureDataset { windows };
        ds.validate()?;
        Ok(ds)
    }

    /// Audit export of one level: header `f1..fD,label,subject`, one row per
    /// window (summary level) or per frame (frame level).
    pub fn feature_matrix_csv(&self, frames: bool) -> Result<Vec<u8>> {
        let dim = if frames { self.frame_dim() } else { self.summary_dim() };
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header: Vec<String> = (1..=dim).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        header.push("subject".into());
        w.write_record(&header).map_err(ser)?;
        for win in &self.windows {
            let rows: Vec<&Vec<f64>> = if frames { win.frames.iter().collect() } else { vec![&win.summary] };
            for r in rows {
                let mut row: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                row.push(win.label.clone());
                row.push(win.subject_id.clone());
                w.write_record(&row).map_err(ser)?;
            }
        }
        w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Per-feature standardisation `(x - mean) / scale`, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<Scaler> {
        let mut it = rows.into_iter().peekable();
        let dim = it
            .peek()
            .map(|r| r.len())
            .ok_or_else(|| Error::InsufficientData("cannot fit a scaler on no rows".into()))?;
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sumsq = vec![0.0; dim];
        let rows: Vec<&Vec<f64>> = it.collect();
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for ((s, v), m) in sumsq.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = sumsq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Scaler { mean, scale })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Scalers for both levels of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScaler {
    pub frames: Scaler,
    pub summary: Scaler,
}

impl DatasetScaler {
    pub fn fit(windows: &[&WindowRecord]) -> Result<DatasetScaler> {
        Ok(DatasetScaler {
            frames: Scaler::fit(windows.iter().flat_map(|w| w.frames.iter()))?,
            summary: Scaler::fit(windows.iter().map(|w| &w.summary))?,
        })
    }

    pub fn apply(&self, w: &WindowRecord) -> WindowRecord {
        WindowRecord {
            frames: w.frames.iter().map(|f| self.frames.apply(f)).collect(),
            summary: self.summary.apply(&w.summary),
            ..w.clone()
        }
    }
}

/// Feature selection followed by standardisation, both fitted on training
/// windows and applied unchanged to test windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// Selected frame feature columns; `None` keeps all.
    pub frame_mask: Option<Vec<usize>>,
    /// Selected window feature columns; `None` keeps all.
    pub summary_mask: Option<Vec<usize>>,
    pub scaler: DatasetScaler,
}

impl Preprocessing {
    pub fn fit(
        windows: &[&WindowRecord],
        frame_mask: Option<Vec<usize>>,
        summary_mask: Option<Vec<usize>>,
    ) -> Result<Preprocessing> {
        let masked: Vec<WindowRecord> = windows
            .iter()
            .map(|w| mask_window(w, frame_mask.as_deref(), summary_mask.as_deref()))
            .collect();
        let refs: Vec<&WindowRecord> = masked.iter().collect();
        Ok(Preprocessing {
            scaler: DatasetScaler::fit(&refs)?,
            frame_mask,
            summary_mask,
        })
    }

    pub fn apply(&self, w: &WindowRecord) -> WindowRecord {
        self.scaler
            .apply(&mask_window(w, self.frame_mask.as_deref(), self.summary_mask.as_deref()))
    }
}

fn mask_window(w: &WindowRecord, frames: Option<&[usize]>, summary: Option<&[usize]>) -> WindowRecord {
    let pick = |v: &[f64], idx: Option<&[usize]>| match idx {
        Some(idx) => idx.iter().map(|&i| v[i]).collect(),
        None => v.to_vec(),
    };
    WindowRecord {
        frames: w.frames.iter().map(|f| pick(f, frames)).collect(),
        summary: pick(&w.summary, summary),
        ..w.clone()
    }
}

/// Preprocessing settings for turning raw streams into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub overlap: f64,
    pub frame_s: f64,
    pub cutoff_hz: f64,
    pub filter_order: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_s: 1.28,
            overlap: dsp::DEFAULT_OVERLAP,
            frame_s: dsp::DEFAULT_FRAME_S,
            cutoff_hz: dsp::DEFAULT_CUTOFF_HZ,
            filter_order: dsp::DEFAULT_FILTER_ORDER,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineStats {
    pub windows: usize,
    pub dropped_mixed: usize,
}

/// Filters, windows, frames and extracts features for every stream.
pub fn build_dataset<'a>(
    streams: impl IntoIterator<Item = &'a SensorStream>,
    cfg: &PipelineConfig,
) -> Result<(FeatureDataset, PipelineStats)> {
    let streams: Vec<&SensorStream> = streams.into_iter().collect();
    let per_stream: Vec<Result<(Vec<WindowRecord>, usize)>> = streams
        .par_iter()
        .enumerate()
        .map(|(rec, s)| {
            let filtered = dsp::lowpass_filter(s, cfg.cutoff_hz, cfg.filter_order)?;
            let windowing = dsp::make_windows(&filtered, cfg.window_s, cfg.overlap)?;
            let mut out = Vec::with_capacity(windowing.windows.len());
            for w in &windowing.windows {
                let frames = dsp::make_frames(w, cfg.frame_s)?
                    .iter()
                    .map(|f| features::extract(f.accel(), f.gyro()).map(|v| v.values))
                    .collect::<Result<Vec<_>>>()?;
                out.push(WindowRecord {
                    subject_id: s.subject_id().to_string(),
                    recording: rec,
                    index: w.index,
                    label: w.label.to_string(),
                    frames,
                    summary: features::extract(w.accel(), w.gyro())?.values,
                });
            }
            Ok((out, windowing.dropped_mixed))
        })
        .collect();
    let mut stats = PipelineStats::default();
    let mut windows = Vec::new();
    for r in per_stream {
        let (w, dropped) = r?;
        stats.windows += w.len();
        stats.dropped_mixed += dropped;
        windows.extend(w);
    }
    Ok((FeatureDataset { windows }, stats))
}
