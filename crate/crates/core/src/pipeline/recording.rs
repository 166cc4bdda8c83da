//! Multichannel recordings and the on-disk bundle format.
//!
//! A bundle is a directory holding `meta.json` and either `signal.bin`
//! (little-endian `f64`, channel-major) or `signal.csv` (header row of channel
//! names, one row per sample).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const SIGNAL_BIN: &str = "signal.bin";
pub const SIGNAL_CSV: &str = "signal.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seizure {
    pub onset_s: f64,
    pub offset_s: f64,
}

impl Seizure {
    pub fn new(onset_s: f64, offset_s: f64) -> Self {
        Seizure { onset_s, offset_s }
    }
}

/// A continuous multichannel EEG recording with seizure annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    subject_id: String,
    sample_rate_hz: f64,
    channels: Vec<String>,
    /// Channel-major, `channels.len() * samples` values.
    signal: Vec<f64>,
    samples: usize,
    seizures: Vec<Seizure>,
}

impl Recording {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<String>,
        signal: Vec<f64>,
        seizures: Vec<Seizure>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::Parameter("recording needs at least one channel".into()));
        }
        if signal.is_empty() || signal.len() % channels.len() != 0 {
            return Err(Error::Parameter(format!(
                "signal length {} is not a positive multiple of {} channels",
                signal.len(),
                channels.len()
            )));
        }
        let samples = signal.len() / channels.len();
        let rec = Recording {
            subject_id: subject_id.into(),
            sample_rate_hz,
            channels,
            signal,
            samples,
            seizures,
        };
        validate_seizures(&rec.seizures, rec.duration_s())?;
        Ok(rec)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.samples as f64 / self.sample_rate_hz
    }

    pub fn seizures(&self) -> &[Seizure] {
        &self.seizures
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.signal[index * self.samples..(index + 1) * self.samples]
    }
}

fn validate_seizures(seizures: &[Seizure], duration_s: f64) -> Result<()> {
    for (i, s) in seizures.iter().enumerate() {
        if !(s.onset_s.is_finite() && s.offset_s.is_finite()) {
            return Err(Error::Data(format!("seizure {i} has non-finite times")));
        }
        if s.offset_s <= s.onset_s {
            return Err(Error::Data(format!(
                "seizure {i} offset {} s is not after onset {} s",
                s.offset_s, s.onset_s
            )));
        }
        if s.onset_s < 0.0 || s.offset_s > duration_s {
            return Err(Error::Data(format!(
                "seizure {i} [{}, {}] s lies outside the {duration_s} s recording",
                s.onset_s, s.offset_s
            )));
        }
        if i > 0 {
            let prev = seizures[i - 1];
            if s.onset_s <= prev.onset_s {
                return Err(Error::Data(format!("seizure onsets are not strictly increasing at {i}")));
            }
            if s.onset_s < prev.offset_s {
                return Err(Error::Data(format!("seizure {i} overlaps seizure {}", i - 1)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    subject_id: String,
    sample_rate_hz: f64,
    channels: Vec<String>,
    duration_s: f64,
    seizures: Vec<Seizure>,
    dtype: String,
    layout: String,
}

/// Writes `meta.json` and `signal.bin` into `dir`, creating it if needed.
pub fn write_recording(rec: &Recording, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        subject_id: rec.subject_id.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        channels: rec.channels.clone(),
        duration_s: rec.duration_s(),
        seizures: rec.seizures.clone(),
        dtype: "f64le".into(),
        layout: "channel-major".into(),
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let mut bytes = Vec::with_capacity(rec.signal.len() * 8);
    for v in &rec.signal {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let sig_path = dir.join(SIGNAL_BIN);
    fs::write(&sig_path, bytes).map_err(|e| Error::io(&sig_path, e))
}

/// Writes the CSV variant (`meta.json` + `signal.csv`).
pub fn write_recording_csv(rec: &Recording, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        subject_id: rec.subject_id.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        channels: rec.channels.clone(),
        duration_s: rec.duration_s(),
        seizures: rec.seizures.clone(),
        dtype: "csv".into(),
        layout: "sample-major".into(),
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let csv_path = dir.join(SIGNAL_CSV);
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    w.write_record(&rec.channels)
        .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    for s in 0..rec.samples {
        let row = (0..rec.channel_count()).map(|c| format!("{:?}", rec.signal[c * rec.samples + s]));
        w.write_record(row)
            .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))
}

pub fn read_recording(dir: impl AsRef<Path>) -> Result<Recording> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta =
        serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if !(meta.sample_rate_hz.is_finite() && meta.sample_rate_hz > 0.0) {
        return Err(Error::format(&meta_path, "sample_rate_hz must be positive"));
    }
    if meta.channels.is_empty() {
        return Err(Error::format(&meta_path, "channel list is empty"));
    }
    if !(meta.duration_s.is_finite() && meta.duration_s > 0.0) {
        return Err(Error::format(&meta_path, "duration_s must be positive"));
    }
    let samples = (meta.duration_s * meta.sample_rate_hz).round() as usize;
    let n_ch = meta.channels.len();

    let bin_path = dir.join(SIGNAL_BIN);
    let signal = if bin_path.exists() {
        if meta.dtype != "f64le" || meta.layout != "channel-major" {
            return Err(Error::format(
                &meta_path,
                format!(
                    "unsupported payload encoding dtype={} layout={} (expected f64le, channel-major)",
                    meta.dtype, meta.layout
                ),
            ));
        }
        let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let expected = n_ch * samples * 8;
        if bytes.len() != expected {
            let kind = if bytes.len() < expected { "truncated" } else { "oversized" };
            return Err(Error::format(
                &bin_path,
                format!(
                    "{kind} payload: expected {expected} bytes ({n_ch} channels x {samples} samples x 8), found {}",
                    bytes.len()
                ),
            ));
        }
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()
    } else {
        read_csv_signal(&dir.join(SIGNAL_CSV), &meta.channels, samples)?
    };

    validate_seizures(&meta.seizures, samples as f64 / meta.sample_rate_hz)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    Recording::new(meta.subject_id, meta.sample_rate_hz, meta.channels, signal, meta.seizures)
        .map_err(|e| Error::format(&meta_path, e.to_string()))
}

fn read_csv_signal(path: &Path, channels: &[String], samples: usize) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != channels.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::format(
            path,
            format!("CSV header {names:?} does not match meta channels {channels:?}"),
        ));
    }
    let n_ch = channels.len();
    let mut signal = vec![0.0; n_ch * samples];
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if rows >= samples {
            rows += 1;
            continue;
        }
        if record.len() != n_ch {
            return Err(Error::format(
                path,
                format!("row {} has {} values, expected {n_ch}", rows + 1, record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            signal[c * samples + rows] = field
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("bad number `{field}` in row {}", rows + 1)))?;
        }
        rows += 1;
    }
    if rows != samples {
        return Err(Error::format(
            path,
            format!("expected {samples} sample rows from meta duration, found {rows}"),
        ));
    }
    Ok(signal)
}
