//! Raw pen recording → fixed-shape model input.
//!
//! The pipeline is: calibration, channel selection (the magnetometer is
//! dropped by default), degree→radian conversion of the gyroscope, Fourier
//! resampling to a common length, and signed-log scaling.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::autodiff::log1p_signed;
use crate::dataset::label_index;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel layout of a recording: two accelerometers, gyroscope,
/// magnetometer, force, and two auxiliary columns.
pub const DEFAULT_CHANNELS: [&str; 15] = [
    "a1x", "a1y", "a1z", "a2x", "a2y", "a2z", "gx", "gy", "gz", "mx", "my", "mz", "force", "aux1",
    "aux2",
];
pub const MAGNETOMETER_CHANNELS: [&str; 3] = ["mx", "my", "mz"];
pub const GYRO_CHANNELS: [&str; 3] = ["gx", "gy", "gz"];
pub const DEFAULT_TARGET_LENGTH: usize = 256;

/// One pen recording as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSample {
    /// Channel name → series, in file column order.
    pub channels: Vec<(String, Vec<f64>)>,
    pub writer_id: String,
    pub label: char,
}

impl RawSample {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Length of the recording (all channels share it).
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-channel `(bias, scale)` correction: `v ↦ (v − bias)·scale`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub entries: BTreeMap<String, (f64, f64)>,
}

impl CalibrationTable {
    pub fn insert(&mut self, channel: impl Into<String>, bias: f64, scale: f64) {
        self.entries.insert(channel.into(), (bias, scale));
    }

    /// Missing channels are left untouched.
    pub fn get(&self, channel: &str) -> (f64, f64) {
        self.entries.get(channel).copied().unwrap_or((0.0, 1.0))
    }

    /// Reads a `channel,bias,scale` CSV.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["channel", "bias", "scale"] {
            return Err(Error::parse(path, "expected header `channel,bias,scale`"));
        }
        let mut table = Self::default();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let field = |i: usize| -> Result<f64> {
                record[i].trim().parse().map_err(|_| {
                    Error::parse(path, format!("row {}: bad number `{}`", row + 1, &record[i]))
                })
            };
            let (bias, scale) = (field(1)?, field(2)?);
            if scale == 0.0 {
                return Err(Error::ZeroScale(record[0].trim().to_string()));
            }
            table.insert(record[0].trim(), bias, scale);
        }
        Ok(table)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let io = |e: csv::Error| csv_error(path, e);
        writer.write_record(["channel", "bias", "scale"]).map_err(io)?;
        for (channel, (bias, scale)) in &self.entries {
            writer
                .write_record([channel.clone(), bias.to_string(), scale.to_string()])
                .map_err(io)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::parse(path, format!("{other:?}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocConfig {
    /// Channels kept, in output row order.
    pub keep_channels: Vec<String>,
    /// Channels converted from degrees to radians.
    pub gyro_channels: Vec<String>,
    pub target_length: usize,
    pub apply_log: bool,
    pub calibration: Option<CalibrationTable>,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            keep_channels: DEFAULT_CHANNELS
                .iter()
                .filter(|c| !MAGNETOMETER_CHANNELS.contains(c))
                .map(|c| c.to_string())
                .collect(),
            gyro_channels: GYRO_CHANNELS.iter().map(|c| c.to_string()).collect(),
            target_length: DEFAULT_TARGET_LENGTH,
            apply_log: true,
            calibration: None,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep_channels.is_empty() {
            return Err(Error::Config("keep_channels must not be empty".into()));
        }
        if let Some(g) = self
            .gyro_channels
            .iter()
            .find(|g| !self.keep_channels.contains(g))
        {
            return Err(Error::Config(format!(
                "gyro channel `{g}` is not among the kept channels"
            )));
        }
        if self.target_length < 2 {
            return Err(Error::Config("target_length must be at least 2".into()));
        }
        Ok(())
    }
}

/// Model-ready recording: `[channels, target_length]` plus its label.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedSample {
    pub data: Tensor<f64>,
    pub label_index: usize,
    pub writer_id: String,
}

pub fn apply_calibration(raw: &RawSample, calib: &CalibrationTable) -> Result<RawSample> {
    let mut out = raw.clone();
    for (name, series) in &mut out.channels {
        let (bias, scale) = calib.get(name);
        if scale == 0.0 {
            return Err(Error::ZeroScale(name.clone()));
        }
        series.iter_mut().for_each(|v| *v = (*v - bias) * scale);
    }
    Ok(out)
}

pub fn deg_to_rad(series: &[f64]) -> Vec<f64> {
    series.iter().map(|v| v * PI / 180.0).collect()
}

pub fn signed_log(series: &[f64]) -> Vec<f64> {
    series.iter().map(|&v| log1p_signed(v)).collect()
}

/// Resamples `series` to `target` points by truncating or zero-padding its
/// spectrum, then inverse transforming.
///
/// An even-length spectrum's Nyquist bin is split between the positive and
/// negative halves when upsampling and folded back when downsampling. The
/// output is scaled by `target / len` so a constant stays the same constant.
pub fn fourier_resample(series: &[f64], target: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InputTooShort {
            length: n,
            reason: "resampling needs at least two samples".into(),
        });
    }
    if target < 2 {
        return Err(Error::Config(format!("resample target {target} is below 2")));
    }
    if target == n {
        return Ok(series.to_vec());
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let m = n.min(target);
    let mut resized = vec![Complex64::new(0.0, 0.0); target];
    // non-negative frequencies up to and including m/2
    let positive = m / 2 + 1;
    resized[..positive].copy_from_slice(&spectrum[..positive]);
    // negative frequencies
    let negative = m - positive;
    for i in 1..=negative {
        resized[target - i] = spectrum[n - i];
    }
    if m % 2 == 0 {
        let nyq = m / 2;
        if target < n {
            resized[nyq] += spectrum[n - nyq];
        } else {
            let half = resized[nyq] * 0.5;
            resized[nyq] = half;
            resized[target - nyq] = half;
        }
    }

    planner.plan_fft_inverse(target).process(&mut resized);
    // unnormalised inverse: 1/target from the inverse, target/n amplitude scale
    let scale = 1.0 / n as f64;
    Ok(resized.iter().map(|c| c.re * scale).collect())
}

/// Runs the full pipeline on one recording.
pub fn preprocess(raw: &RawSample, config: &PreprocConfig) -> Result<ProcessedSample> {
    let label_index = label_index(raw.label).ok_or_else(|| Error::UnknownLabel {
        label: raw.label.to_string(),
        row: None,
    })?;
    Ok(ProcessedSample {
        data: preprocess_channels(&raw.channels, config)?,
        label_index,
        writer_id: raw.writer_id.clone(),
    })
}

/// The pipeline on bare named series, for recordings without a label.
/// Returns `[keep_channels, target_length]`.
pub fn preprocess_channels(channels: &[(String, Vec<f64>)], config: &PreprocConfig) -> Result<Tensor<f64>> {
    config.validate()?;
    if let Some(calib) = &config.calibration {
        if let Some((name, _)) = channels.iter().find(|(n, _)| calib.get(n).1 == 0.0) {
            return Err(Error::ZeroScale(name.clone()));
        }
    }
    let target = config.target_length;
    let mut data = Vec::with_capacity(config.keep_channels.len() * target);
    for name in &config.keep_channels {
        let series = channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::MissingChannel(name.clone()))?;
        let (bias, scale) = config.calibration.as_ref().map_or((0.0, 1.0), |c| c.get(name));
        let mut series: Vec<f64> = series.iter().map(|v| (v - bias) * scale).collect();
        if config.gyro_channels.contains(name) {
            series = deg_to_rad(&series);
        }
        let mut resampled = fourier_resample(&series, target)?;
        if config.apply_log {
            resampled = signed_log(&resampled);
        }
        if let Some(bad) = resampled.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("channel `{name}` at step {bad}")));
        }
        data.extend(resampled);
    }
    Tensor::new([config.keep_channels.len(), target], data)
}
