//! Low-pass filtering, overlapped windowing and frame subdivision.

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::ingest::SensorStream;

pub const DEFAULT_CUTOFF_HZ: f64 = 20.0;
pub const DEFAULT_FILTER_ORDER: usize = 1;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_FRAME_S: f64 = 0.16;

/// One biquad in transposed direct form II. First-order sections have
/// `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    /// State that makes a constant input `c` produce the constant output `c`.
    fn steady_state(&self, c: f64) -> [f64; 2] {
        let z2 = (self.b[2] - self.a[1]) * c;
        let z1 = (self.b[1] - self.a[0]) * c + z2;
        [z1, z2]
    }

    #[inline]
    fn step(&self, x: f64, z: &mut [f64; 2]) -> f64 {
        let y = self.b[0] * x + z[0];
        z[0] = self.b[1] * x - self.a[0] * y + z[1];
        z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Causal Butterworth low-pass designed by the bilinear transform with the
/// cutoff pre-warped, realised as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Section>,
}

impl Butterworth {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64, order: usize) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if !(cutoff_hz > 0.0) || cutoff_hz >= nyquist {
            return Err(Error::CutoffAboveNyquist {
                cutoff_hz,
                nyquist_hz: nyquist,
            });
        }
        if order == 0 {
            return Err(Error::InvalidInput("filter order must be at least 1".into()));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let inv_q = 2.0 * theta.sin();
            let a0 = 1.0 + k * inv_q + k2;
            sections.push(Section {
                b: [k2 / a0, 2.0 * k2 / a0, k2 / a0],
                a: [(2.0 * k2 - 2.0) / a0, (1.0 - k * inv_q + k2) / a0],
            });
        }
        if order % 2 == 1 {
            let g = k / (1.0 + k);
            sections.push(Section {
                b: [g, g, 0.0],
                a: [(k - 1.0) / (k + 1.0), 0.0],
            });
        }
        Ok(Butterworth { sections })
    }

    /// Filters one channel. The state starts at steady state for the first
    /// sample so a constant prefix passes through unchanged.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let Some(&first) = x.first() else {
            return Vec::new();
        };
        let mut out = x.to_vec();
        for s in &self.sections {
            let mut z = s.steady_state(first);
            for v in out.iter_mut() {
                *v = s.step(*v, &mut z);
            }
        }
        out
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        self.sections
            .iter()
            .map(|s| {
                // H(e^{jw}) = (b0 + b1 e^{-jw} + b2 e^{-2jw}) / (1 + a1 e^{-jw} + a2 e^{-2jw})
                let (c1, s1) = (w.cos(), -w.sin());
                let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = s.b[1] * s1 + s.b[2] * s2;
                let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
                let di = s.a[0] * s1 + s.a[1] * s2;
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }
}

fn filter_axes(f: &Butterworth, data: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; data.len()];
    for axis in 0..3 {
        let channel: Vec<f64> = data.iter().map(|v| v[axis]).collect();
        for (o, y) in out.iter_mut().zip(f.filter(&channel)) {
            o[axis] = y;
        }
    }
    out
}

/// Filters all six inertial channels independently; timestamps and labels
/// are carried over unchanged.
pub fn lowpass_filter(stream: &SensorStream, cutoff_hz: f64, order: usize) -> Result<SensorStream> {
    let f = Butterworth::new(cutoff_hz, stream.sample_rate_hz(), order)?;
    Ok(SensorStream {
        header: stream.header.clone(),
        timestamps: stream.timestamps.clone(),
        accel: filter_axes(&f, &stream.accel),
        gyro: filter_axes(&f, &stream.gyro),
        labels: stream.labels.clone(),
    })
}

/// A contiguous, single-label slice of a stream.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub stream: &'a SensorStream,
    pub range: Range<usize>,
    /// Position of this window in the full (unfiltered by label) enumeration.
    pub index: usize,
    pub duration_s: f64,
    pub label: &'a str,
}

impl<'a> Window<'a> {
    pub fn accel(&self) -> &'a [[f64; 3]] {
        &self.stream.accel[self.range.clone()]
    }

    pub fn gyro(&self) -> &'a [[f64; 3]] {
        &self.stream.gyro[self.range.clone()]
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn subject_id(&self) -> &'a str {
        self.stream.subject_id()
    }
}

/// A contiguous sub-slice of a window.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    pub stream: &'a SensorStream,
    pub range: Range<usize>,
    pub duration_s: f64,
}

impl<'a> Frame<'a> {
    pub fn accel(&self) -> &'a [[f64; 3]] {
        &self.stream.accel[self.range.clone()]
    }

    pub fn gyro(&self) -> &'a [[f64; 3]] {
        &self.stream.gyro[self.range.clone()]
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Windowing<'a> {
    pub windows: Vec<Window<'a>>,
    /// Windows discarded because they straddle a label change.
    pub dropped_mixed: usize,
}

/// `(window length, stride)` in samples.
pub fn window_geometry(duration_s: f64, overlap: f64, sample_rate_hz: f64) -> (usize, usize) {
    let len = (duration_s * sample_rate_hz).round() as usize;
    let stride = ((duration_s * (1.0 - overlap) * sample_rate_hz).round() as usize).max(1);
    (len, stride)
}

pub fn make_windows(stream: &SensorStream, duration_s: f64, overlap: f64) -> Result<Windowing<'_>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidInput(format!("overlap {overlap} outside [0, 1)")));
    }
    let (len, stride) = window_geometry(duration_s, overlap, stream.sample_rate_hz());
    if len == 0 {
        return Err(Error::InvalidInput(format!(
            "window of {duration_s} s holds no samples at {} Hz",
            stream.sample_rate_hz()
        )));
    }
    let mut out = Windowing {
        windows: Vec::new(),
        dropped_mixed: 0,
    };
    if stream.len() < len {
        return Ok(out);
    }
    let count = (stream.len() - len) / stride + 1;
    for index in 0..count {
        let range = index * stride..index * stride + len;
        let labels = &stream.labels[range.clone()];
        let label = labels[0].as_str();
        if labels.iter().any(|l| l != label) {
            out.dropped_mixed += 1;
            continue;
        }
        out.windows.push(Window {
            stream,
            range,
            index,
            duration_s,
            label,
        });
    }
    if out.dropped_mixed > 0 {
        log::debug!(
            "{}/{}: dropped {} mixed-label windows",
            stream.subject_id(),
            stream.header.recording,
            out.dropped_mixed
        );
    }
    Ok(out)
}

/// `(frame count, samples per frame)` for a window.
pub fn frame_geometry(window_s: f64, frame_s: f64, sample_rate_hz: f64) -> (usize, usize) {
    const EPS: f64 = 1e-9;
    let count = (window_s / frame_s + EPS).floor() as usize;
    let len = (frame_s * sample_rate_hz + EPS).floor() as usize;
    (count, len)
}

pub fn make_frames<'a>(window: &Window<'a>, frame_duration_s: f64) -> Result<Vec<Frame<'a>>> {
    if !(frame_duration_s > 0.0) || frame_duration_s > window.duration_s + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "frame duration {frame_duration_s} s must be positive and at most the window duration {} s",
            window.duration_s
        )));
    }
    let (count, len) = frame_geometry(window.duration_s, frame_duration_s, window.stream.sample_rate_hz());
    if len < 2 {
        return Err(Error::FrameTooShort { samples: len });
    }
    let count = count.min(window.len() / len);
    Ok((0..count)
        .map(|i| {
            let start = window.range.start + i * len;
            Frame {
                stream: window.stream,
                range: start..start + len,
                duration_s: frame_duration_s,
            }
        })
        .collect())
}
