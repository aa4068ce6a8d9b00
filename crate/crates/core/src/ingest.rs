//! Raw recording ingestion.
//!
//! Three layouts are understood:
//!
//! * `generic-csv`: one CSV per recording with header `t,ax,ay,az,gx,gy,gz,label`
//!   and a sidecar `<stem>.meta.toml` holding `subject_id`, `sample_rate_hz`,
//!   `accel_unit`, `label_set` and optionally `placement`.
//! * `dlr`: one directory per subject containing CSV recordings whose header
//!   names at least `t,ax,ay,az,gx,gy,gz,label`; extra columns (magnetometer)
//!   are ignored. Activity names are normalised to the DLR label set.
//! * `mobifall`: the MobiFall tree of `<CODE>_<acc|gyro>_<subject>_<trial>.txt`
//!   files, nanosecond timestamps. Gyroscope samples are interpolated onto the
//!   accelerometer grid.
//!
//! Subjects that lack either normal or fall recordings are reported in
//! [`LoadedDataset::exclusions`] and left out of [`LoadedDataset::usable_streams`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FALL_LABEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccelUnit {
    #[serde(rename = "m/s2")]
    MetersPerSecondSquared,
    #[serde(rename = "g")]
    StandardGravity,
}

impl FromStr for AccelUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "m/s2" | "m/s^2" | "mps2" => Ok(AccelUnit::MetersPerSecondSquared),
            "g" => Ok(AccelUnit::StandardGravity),
            other => Err(Error::InvalidInput(format!("unknown accel unit `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schema {
    GenericCsv,
    Dlr,
    MobiFall,
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic-csv" => Ok(Schema::GenericCsv),
            "dlr" => Ok(Schema::Dlr),
            "mobifall" => Ok(Schema::MobiFall),
            other => Err(Error::InvalidInput(format!(
                "unknown dataset schema `{other}` (expected generic-csv, dlr or mobifall)"
            ))),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::GenericCsv => "generic-csv",
            Schema::Dlr => "dlr",
            Schema::MobiFall => "mobifall",
        })
    }
}

/// Per-recording metadata shared by every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub subject_id: String,
    pub recording: String,
    pub sample_rate_hz: f64,
    pub accel_unit: AccelUnit,
    /// Declared normal activities; [`FALL_LABEL`] is always accepted in addition.
    pub label_set: Vec<String>,
    pub placement: Option<String>,
}

impl StreamHeader {
    pub fn accepts(&self, label: &str) -> bool {
        label == FALL_LABEL || self.label_set.iter().any(|l| l == label)
    }
}

/// A synchronised six-axis recording with one activity label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub header: StreamHeader,
    pub timestamps: Vec<f64>,
    pub accel: Vec<[f64; 3]>,
    pub gyro: Vec<[f64; 3]>,
    pub labels: Vec<String>,
}

impl SensorStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.header.subject_id
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.header.sample_rate_hz
    }

    pub fn has_fall(&self) -> bool {
        self.labels.iter().any(|l| l == FALL_LABEL)
    }

    pub fn has_normal(&self) -> bool {
        self.labels.iter().any(|l| l != FALL_LABEL)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if !(self.header.sample_rate_hz > 0.0) || !self.header.sample_rate_hz.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {}",
                self.header.sample_rate_hz
            )));
        }
        if self.accel.len() != n || self.gyro.len() != n || self.labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "stream {}/{}: channel lengths differ (t={}, accel={}, gyro={}, labels={})",
                self.header.subject_id,
                self.header.recording,
                n,
                self.accel.len(),
                self.gyro.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(format!(
                "stream {}/{}: timestamps not strictly increasing at sample {}",
                self.header.subject_id,
                self.header.recording,
                i + 1
            )));
        }
        if let Some(l) = self.labels.iter().find(|l| !self.header.accepts(l)) {
            return Err(unknown_label(l, &self.header.label_set));
        }
        Ok(())
    }

    /// Accelerometer and gyroscope split back into separate tracks.
    pub fn tracks(&self) -> (Track, Track) {
        (
            Track {
                timestamps: self.timestamps.clone(),
                values: self.accel.clone(),
            },
            Track {
                timestamps: self.timestamps.clone(),
                values: self.gyro.clone(),
            },
        )
    }
}

fn unknown_label(label: &str, declared: &[String]) -> Error {
    Error::UnknownLabel {
        label: label.to_string(),
        declared: declared.join(", "),
    }
}

/// Timestamped three-axis samples from a single sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub timestamps: Vec<f64>,
    pub values: Vec<[f64; 3]>,
}

impl Track {
    fn check(&self, name: &str) -> Result<()> {
        if self.timestamps.is_empty() {
            return Err(Error::InvalidInput(format!("{name} track is empty")));
        }
        if self.timestamps.len() != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "{name} track has {} timestamps but {} samples",
                self.timestamps.len(),
                self.values.len()
            )));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(format!(
                "{name} track timestamps are not strictly increasing"
            )));
        }
        Ok(())
    }
}

/// Linearly interpolates `gyro` onto the accelerometer timestamps.
///
/// Returns the range of accelerometer samples that lie inside the gyroscope
/// time span together with the interpolated gyro values for that range.
pub fn interpolate_onto(accel_t: &[f64], gyro: &Track) -> Result<(Range<usize>, Vec<[f64; 3]>)> {
    gyro.check("gyroscope")?;
    let g0 = gyro.timestamps[0];
    let g1 = *gyro.timestamps.last().unwrap();
    let start = accel_t.partition_point(|&t| t < g0);
    let end = accel_t.partition_point(|&t| t <= g1);
    if start >= end {
        return Err(Error::NoOverlap);
    }
    let mut out = Vec::with_capacity(end - start);
    let mut j = 0usize;
    for &t in &accel_t[start..end] {
        while j + 1 < gyro.timestamps.len() && gyro.timestamps[j + 1] <= t {
            j += 1;
        }
        let tj = gyro.timestamps[j];
        if t == tj || j + 1 == gyro.timestamps.len() {
            out.push(gyro.values[j]);
            continue;
        }
        let w = (t - tj) / (gyro.timestamps[j + 1] - tj);
        let (a, b) = (gyro.values[j], gyro.values[j + 1]);
        let mut v = [0.0; 3];
        for k in 0..3 {
            let lo = a[k].min(b[k]);
            let hi = a[k].max(b[k]);
            v[k] = (a[k] + w * (b[k] - a[k])).clamp(lo, hi);
        }
        out.push(v);
    }
    Ok((start..end, out))
}

/// Builds a stream on the accelerometer grid, trimming accelerometer samples
/// (and their labels) that fall outside the gyroscope time span.
pub fn synchronize(
    header: StreamHeader,
    accel: &Track,
    labels: &[String],
    gyro: &Track,
) -> Result<SensorStream> {
    accel.check("accelerometer")?;
    if labels.len() != accel.timestamps.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} accelerometer samples",
            labels.len(),
            accel.timestamps.len()
        )));
    }
    let (range, gyro_values) = interpolate_onto(&accel.timestamps, gyro)?;
    let stream = SensorStream {
        header,
        timestamps: accel.timestamps[range.clone()].to_vec(),
        accel: accel.values[range.clone()].to_vec(),
        gyro: gyro_values,
        labels: labels[range].to_vec(),
    };
    stream.validate()?;
    Ok(stream)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubjectExclusion {
    pub subject_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub streams: Vec<SensorStream>,
    pub exclusions: Vec<SubjectExclusion>,
}

impl LoadedDataset {
    fn from_streams(streams: Vec<SensorStream>) -> Self {
        let mut normal: BTreeMap<&str, bool> = BTreeMap::new();
        let mut fall: BTreeMap<&str, bool> = BTreeMap::new();
        for s in &streams {
            *normal.entry(s.subject_id()).or_default() |= s.has_normal();
            *fall.entry(s.subject_id()).or_default() |= s.has_fall();
        }
        let exclusions = normal
            .keys()
            .filter_map(|&subject| {
                let reason = match (normal[subject], fall[subject]) {
                    (true, true) => return None,
                    (true, false) => "no fall data",
                    (false, true) => "fall data only",
                    (false, false) => "no data",
                };
                log::info!("excluding subject {subject}: {reason}");
                Some(SubjectExclusion {
                    subject_id: subject.to_string(),
                    reason: reason.to_string(),
                })
            })
            .collect();
        LoadedDataset {
            streams,
            exclusions,
        }
    }

    pub fn is_excluded(&self, subject: &str) -> bool {
        self.exclusions.iter().any(|e| e.subject_id == subject)
    }

    pub fn usable_streams(&self) -> impl Iterator<Item = &SensorStream> {
        self.streams
            .iter()
            .filter(move |s| !self.is_excluded(s.subject_id()))
    }

    pub fn usable_subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.usable_streams().map(|s| s.subject_id()).collect();
        set.into_iter().map(String::from).collect()
    }
}

pub fn load_dataset(path: &Path, schema: Schema) -> Result<LoadedDataset> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "dataset path {} does not exist",
            path.display()
        )));
    }
    let streams = match schema {
        Schema::GenericCsv => load_generic(path)?,
        Schema::Dlr => load_dlr(path)?,
        Schema::MobiFall => load_mobifall(path)?,
    };
    Ok(LoadedDataset::from_streams(streams))
}

fn sorted_files(root: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file()
            && entry.path().extension().and_then(|e| e.to_str()) == Some(ext)
        {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

// ---------------------------------------------------------------- generic CSV

#[derive(Debug, Deserialize)]
struct Sidecar {
    subject_id: String,
    sample_rate_hz: f64,
    accel_unit: String,
    label_set: Vec<String>,
    placement: Option<String>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    csv.with_file_name(format!("{stem}.meta.toml"))
}

fn read_sidecar(csv: &Path) -> Result<StreamHeader> {
    let path = sidecar_path(csv);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Sidecar = toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.clone(),
        line: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1))
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    Ok(StreamHeader {
        subject_id: meta.subject_id,
        recording: csv
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string(),
        sample_rate_hz: meta.sample_rate_hz,
        accel_unit: meta.accel_unit.parse()?,
        label_set: meta.label_set,
        placement: meta.placement,
    })
}

fn load_generic(path: &Path) -> Result<Vec<SensorStream>> {
    let files = if path.is_dir() {
        sorted_files(path, "csv")?
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| {
            let header = read_sidecar(f)?;
            read_sample_csv(f, header, None)
        })
        .collect()
}

/// Maps raw label text onto the header's label set; `None` keeps labels as is.
type LabelMap = fn(&str) -> Option<String>;

const REQUIRED_COLUMNS: [&str; 8] = ["t", "ax", "ay", "az", "gx", "gy", "gz", "label"];

/// Reads a CSV with (at least) the columns `t,ax,ay,az,gx,gy,gz,label`.
pub fn read_sample_csv(
    path: &Path,
    header: StreamHeader,
    label_map: Option<LabelMap>,
) -> Result<SensorStream> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let names = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut cols = [0usize; 8];
    for (slot, want) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = names
            .iter()
            .position(|h| h.eq_ignore_ascii_case(want))
            .ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column `{want}`"),
            })?;
    }

    let mut stream = SensorStream {
        header,
        timestamps: Vec::new(),
        accel: Vec::new(),
        gyro: Vec::new(),
        labels: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let num = |i: usize| -> Result<f64> {
            let raw = record.get(cols[i]).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("bad value `{raw}` in column `{}`", REQUIRED_COLUMNS[i])))
        };
        let t = num(0)?;
        if let Some(&prev) = stream.timestamps.last() {
            if !(t > prev) {
                return Err(malformed(format!("timestamp {t} does not increase")));
            }
        }
        let raw_label = record.get(cols[7]).unwrap_or("");
        let label = match label_map {
            Some(map) => map(raw_label).ok_or_else(|| unknown_label(raw_label, &stream.header.label_set))?,
            None => raw_label.to_string(),
        };
        if !stream.header.accepts(&label) {
            return Err(unknown_label(&label, &stream.header.label_set));
        }
        stream.timestamps.push(t);
        stream.accel.push([num(1)?, num(2)?, num(3)?]);
        stream.gyro.push([num(4)?, num(5)?, num(6)?]);
        stream.labels.push(label);
    }
    stream.validate()?;
    Ok(stream)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes a stream in the generic CSV layout plus its sidecar.
pub fn write_generic(stream: &SensorStream, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
    w.write_record(REQUIRED_COLUMNS).map_err(|e| csv_error(csv_path, e))?;
    for i in 0..stream.len() {
        let a = stream.accel[i];
        let g = stream.gyro[i];
        let row = [
            stream.timestamps[i].to_string(),
            a[0].to_string(),
            a[1].to_string(),
            a[2].to_string(),
            g[0].to_string(),
            g[1].to_string(),
            g[2].to_string(),
            stream.labels[i].clone(),
        ];
        w.write_record(&row).map_err(|e| csv_error(csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let h = &stream.header;
    let mut meta = toml::Table::new();
    meta.insert("subject_id".into(), h.subject_id.clone().into());
    meta.insert("sample_rate_hz".into(), h.sample_rate_hz.into());
    meta.insert(
        "accel_unit".into(),
        match h.accel_unit {
            AccelUnit::MetersPerSecondSquared => "m/s2",
            AccelUnit::StandardGravity => "g",
        }
        .into(),
    );
    meta.insert(
        "label_set".into(),
        toml::Value::Array(h.label_set.iter().cloned().map(Into::into).collect()),
    );
    if let Some(p) = &h.placement {
        meta.insert("placement".into(), p.clone().into());
    }
    let side = sidecar_path(csv_path);
    let text = toml::to_string(&meta).map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

// ------------------------------------------------------------------------ DLR

pub const DLR_ACTIVITIES: [&str; 6] = ["standing", "sitting", "lying", "walking", "running", "jumping"];

fn dlr_label(raw: &str) -> Option<String> {
    let l = raw.trim().to_ascii_lowercase();
    let mapped = match l.as_str() {
        "standing" | "stand" => "standing",
        "sitting" | "sit" => "sitting",
        "lying" | "lie" => "lying",
        "walking" | "walk" | "upstairs" | "downstairs" | "walking_upstairs" | "walking_downstairs" => "walking",
        "running" | "run" | "jogging" => "running",
        "jumping" | "jump" => "jumping",
        "falling" | "fall" => FALL_LABEL,
        _ => return None,
    };
    Some(mapped.to_string())
}

fn load_dlr(root: &Path) -> Result<Vec<SensorStream>> {
    let mut streams = Vec::new();
    for file in sorted_files(root, "csv")? {
        let subject = file
            .parent()
            .filter(|p| p != &root)
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidInput(format!(
                "DLR recording {} is not inside a subject directory",
                file.display()
            )))?
            .to_string();
        let side = sidecar_path(&file);
        let header = if side.exists() {
            read_sidecar(&file)?
        } else {
            StreamHeader {
                subject_id: subject,
                recording: file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
                sample_rate_hz: 100.0,
                accel_unit: AccelUnit::MetersPerSecondSquared,
                label_set: DLR_ACTIVITIES.iter().map(|s| s.to_string()).collect(),
                placement: None,
            }
        };
        streams.push(read_sample_csv(&file, header, Some(dlr_label))?);
    }
    Ok(streams)
}

// ------------------------------------------------------------------- MobiFall

pub const MOBIFALL_ACTIVITIES: [&str; 8] = [
    "step_in_car",
    "step_out_car",
    "jogging",
    "jumping",
    "sitting",
    "standing",
    "stairs",
    "walking",
];

fn mobifall_label(code: &str) -> Option<&'static str> {
    Some(match code {
        "CSI" => "step_in_car",
        "CSO" => "step_out_car",
        "JOG" => "jogging",
        "JUM" => "jumping",
        "SCH" => "sitting",
        "STD" => "standing",
        "STU" | "STN" => "stairs",
        "WAL" => "walking",
        "FOL" | "FKL" | "BSC" | "SDL" => FALL_LABEL,
        _ => return None,
    })
}

/// `(code, sensor, subject, trial)` from e.g. `STD_acc_1_1.txt`.
fn parse_mobifall_name(name: &str) -> Option<(String, String, String, String)> {
    let stem = name.strip_suffix(".txt")?;
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() != 4 {
        return None;
    }
    Some((
        parts[0].to_string(),
        parts[1].to_string(),
        parts[2].to_string(),
        parts[3].to_string(),
    ))
}

fn read_mobifall_track(path: &Path) -> Result<Track> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let has_marker = text.lines().any(|l| l.trim() == "@DATA");
    let mut in_data = !has_marker;
    let mut track = Track {
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if !in_data {
            in_data = line == "@DATA";
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) if v.len() == 4 => {
                let t = v[0] * 1e-9;
                if let Some(&prev) = track.timestamps.last() {
                    if !(t > prev) {
                        // duplicated timestamps occur in the phone logs; keep the first
                        continue;
                    }
                }
                track.timestamps.push(t);
                track.values.push([v[1], v[2], v[3]]);
            }
            _ => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected `timestamp,x,y,z`, got `{line}`"),
                })
            }
        }
    }
    Ok(track)
}

fn median_rate(ts: &[f64]) -> f64 {
    let mut dt: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if dt.is_empty() {
        return 0.0;
    }
    dt.sort_by(f64::total_cmp);
    1.0 / dt[dt.len() / 2]
}

fn load_mobifall(root: &Path) -> Result<Vec<SensorStream>> {
    // (subject, code, trial) -> (acc, gyro)
    let mut groups: BTreeMap<(String, String, String), (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for file in sorted_files(root, "txt")? {
        let name = file.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((code, sensor, subject, trial)) = parse_mobifall_name(name) else {
            continue;
        };
        let slot = groups.entry((subject, code, trial)).or_default();
        match sensor.as_str() {
            "acc" => slot.0 = Some(file),
            "gyro" => slot.1 = Some(file),
            _ => {}
        }
    }
    let label_set: Vec<String> = MOBIFALL_ACTIVITIES.iter().map(|s| s.to_string()).collect();
    let mut streams = Vec::new();
    for ((subject, code, trial), (acc, gyro)) in groups {
        let label = mobifall_label(&code).ok_or_else(|| unknown_label(&code, &label_set))?;
        let (Some(acc), Some(gyro)) = (acc, gyro) else {
            log::warn!("MobiFall {code} subject {subject} trial {trial}: missing acc or gyro file, skipped");
            continue;
        };
        let acc_track = read_mobifall_track(&acc)?;
        let gyro_track = read_mobifall_track(&gyro)?;
        let header = StreamHeader {
            subject_id: subject.clone(),
            recording: format!("{code}_{trial}"),
            sample_rate_hz: median_rate(&acc_track.timestamps),
            accel_unit: AccelUnit::MetersPerSecondSquared,
            label_set: label_set.clone(),
            placement: Some("trouser_pocket".into()),
        };
        let labels = vec![label.to_string(); acc_track.timestamps.len()];
        streams.push(synchronize(header, &acc_track, &labels, &gyro_track)?);
    }
    Ok(streams)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> StreamHeader {
        StreamHeader {
            subject_id: "s1".into(),
            recording: "r".into(),
            sample_rate_hz: 1.0,
            accel_unit: AccelUnit::MetersPerSecondSquared,
            label_set: vec!["walk".into()],
            placement: None,
        }
    }

    #[test]
    fn linear_midpoint() {
        let accel = Track {
            timestamps: vec![1.0],
            values: vec![[0.0; 3]],
        };
        let gyro = Track {
            timestamps: vec![0.0, 2.0],
            values: vec![[0.0; 3], [2.0, 4.0, -2.0]],
        };
        let s = synchronize(header(), &accel, &["walk".into()], &gyro).unwrap();
        assert_eq!(s.gyro, vec![[1.0, 2.0, -1.0]]);
    }

    #[test]
    fn samples_outside_gyro_span_are_trimmed() {
        let accel = Track {
            timestamps: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            values: vec![[1.0; 3]; 5],
        };
        let labels: Vec<String> = ["walk", "walk", "fall", "walk", "walk"].map(String::from).to_vec();
        let gyro = Track {
            timestamps: vec![0.5, 3.0],
            values: vec![[0.0; 3], [5.0; 3]],
        };
        let s = synchronize(header(), &accel, &labels, &gyro).unwrap();
        assert_eq!(s.timestamps, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.labels, vec!["walk", "fall", "walk"]);
        assert_eq!(s.gyro[2], [5.0; 3]);
    }

    #[test]
    fn disjoint_tracks_fail() {
        let accel = Track {
            timestamps: vec![0.0, 1.0],
            values: vec![[0.0; 3]; 2],
        };
        let gyro = Track {
            timestamps: vec![5.0, 6.0],
            values: vec![[0.0; 3]; 2],
        };
        let labels = vec!["walk".to_string(); 2];
        assert!(matches!(
            synchronize(header(), &accel, &labels, &gyro),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn mobifall_names() {
        assert_eq!(
            parse_mobifall_name("STD_acc_1_1.txt"),
            Some(("STD".into(), "acc".into(), "1".into(), "1".into()))
        );
        assert_eq!(parse_mobifall_name("readme.txt"), None);
        assert_eq!(mobifall_label("FKL"), Some(FALL_LABEL));
        assert_eq!(dlr_label("Upstairs").as_deref(), Some("walking"));
    }
}
