//! Synthetic pen recordings with a learnable class signal.
//!
//! Each letter gets a fixed per-channel waveform (a sum of two sinusoids in
//! normalised time). Writers rescale it and add a slow drift, every sample
//! gets white noise and a random length, and finally a per-channel sensor
//! bias and scale distort the values. The matching [`CalibrationTable`]
//! undoes that distortion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{label_char, save_manifest, write_sample_csv, ManifestEntry};
use crate::error::{Error, Result};
use crate::preprocess::{CalibrationTable, RawSample, DEFAULT_CHANNELS, GYRO_CHANNELS};

const CLASSES: usize = 52;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub writers: usize,
    pub per_class: usize,
    pub channels: usize,
    pub length: usize,
    pub seed: u64,
    pub noise: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            writers: 10,
            per_class: 1,
            channels: DEFAULT_CHANNELS.len(),
            length: 200,
            seed: 0,
            noise: true,
        }
    }
}

pub struct SynthDataset {
    pub samples: Vec<RawSample>,
    /// Sample paths are relative to the dataset directory.
    pub manifest: Vec<ManifestEntry>,
    pub calibration: CalibrationTable,
}

impl SynthDataset {
    /// Writes `samples/<writer>/*.csv`, `manifest.csv` and `calibration.csv`
    /// under `dir`, which must already exist.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
        for (sample, entry) in self.samples.iter().zip(&self.manifest) {
            let path = dir.join(&entry.sample_path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_sample_csv(&path, sample)?;
        }
        save_manifest(&dir.join("manifest.csv"), &self.manifest)?;
        self.calibration.save_csv(&dir.join("calibration.csv"))
    }
}

/// Channel names: the default schema first, then `extra<N>` columns.
pub fn channel_names(count: usize) -> Vec<String> {
    (0..count)
        .map(|i| match DEFAULT_CHANNELS.get(i) {
            Some(name) => name.to_string(),
            None => format!("extra{}", i - DEFAULT_CHANNELS.len() + 1),
        })
        .collect()
}

/// Separate random streams per purpose, so e.g. adding writers never changes
/// the class signatures.
fn stream(seed: u64, kind: u64, a: usize, b: usize, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind << 60 | (a as u64) << 40 | (b as u64) << 20 | c as u64);
    rng
}

/// Channels that carry no class information.
fn is_nuisance(name: &str) -> bool {
    matches!(name, "mx" | "my" | "mz" | "aux1" | "aux2")
}

struct Wave {
    amp: f64,
    cycles: f64,
    phase: f64,
}

impl Wave {
    fn draw(rng: &mut ChaCha8Rng, max_cycles: u32) -> Self {
        Self {
            amp: rng.random_range(0.5..2.0),
            cycles: rng.random_range(1..=max_cycles) as f64,
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, u: f64) -> f64 {
        self.amp * (2.0 * PI * self.cycles * u + self.phase).sin()
    }
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthDataset> {
    let SynthConfig { writers, per_class, channels, length, seed, noise } = *config;
    if writers == 0 || per_class == 0 || channels == 0 || length < 2 {
        return Err(Error::Config(
            "synth needs writers, per_class and channels ≥ 1 and length ≥ 2".into(),
        ));
    }
    let names = channel_names(channels);
    // rough physical ranges so calibration and unit conversion matter
    let unit = |name: &str| -> f64 {
        if GYRO_CHANNELS.contains(&name) {
            180.0 / PI
        } else if name == "force" {
            100.0
        } else {
            1.0
        }
    };

    let signatures: Vec<Vec<[Wave; 2]>> = (0..CLASSES)
        .map(|class| {
            let mut rng = stream(seed, 1, class, 0, 0);
            names
                .iter()
                .map(|_| [Wave::draw(&mut rng, 4), Wave::draw(&mut rng, 8)])
                .collect()
        })
        .collect();

    let mut calibration = CalibrationTable::default();
    let mut sensor_rng = stream(seed, 2, 0, 0, 0);
    let sensor: Vec<(f64, f64)> = names
        .iter()
        .map(|name| {
            let bias = sensor_rng.random_range(-0.5..0.5) * unit(name);
            let scale = sensor_rng.random_range(0.5..2.0);
            calibration.insert(name.clone(), bias, scale);
            (bias, scale)
        })
        .collect();

    let mut samples = Vec::with_capacity(writers * per_class * CLASSES);
    let mut manifest = Vec::with_capacity(samples.capacity());
    for writer in 0..writers {
        let writer_id = format!("w{writer:02}");
        let mut wrng = stream(seed, 3, writer, 0, 0);
        let style: Vec<(f64, Wave)> = names
            .iter()
            .map(|_| {
                let gain = wrng.random_range(0.8..1.2);
                let mut drift = Wave::draw(&mut wrng, 1);
                drift.amp *= 0.2;
                (gain, drift)
            })
            .collect();

        for class in 0..CLASSES {
            let letter = label_char(class).expect("class in range");
            for rep in 0..per_class {
                let mut srng = stream(seed, 4, writer, class, rep);
                let jitter: f64 = srng.random_range(0.75..=1.25);
                let len = ((length as f64 * jitter).round() as usize).max(2);
                let mut series = Vec::with_capacity(names.len());
                for (c, name) in names.iter().enumerate() {
                    let (gain, drift) = &style[c];
                    let mut clean: Vec<f64> = (0..len)
                        .map(|i| {
                            let u = i as f64 / len as f64;
                            let signal = if is_nuisance(name) {
                                0.0
                            } else {
                                gain * signatures[class][c].iter().map(|w| w.at(u)).sum::<f64>()
                            };
                            signal + drift.at(u)
                        })
                        .collect();
                    if is_nuisance(name) {
                        // unrelated to the letter, but not constant
                        let wave = Wave::draw(&mut srng, 8);
                        clean.iter_mut().enumerate().for_each(|(i, v)| *v += wave.at(i as f64 / len as f64));
                    }
                    if noise {
                        let rms = (clean.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
                        if rms > 0.0 {
                            let dist = Normal::new(0.0, 0.1 * rms).expect("positive sigma");
                            clean.iter_mut().for_each(|v| *v += dist.sample(&mut srng));
                        }
                    }
                    let (bias, scale) = sensor[c];
                    let k = unit(name);
                    let raw = clean.into_iter().map(|v| v * k / scale + bias).collect();
                    series.push((name.clone(), raw));
                }
                let sample_path: PathBuf =
                    format!("samples/{writer_id}/{class:02}_{letter}_{rep}.csv").into();
                manifest.push(ManifestEntry {
                    sample_path,
                    label: letter,
                    writer_id: writer_id.clone(),
                });
                samples.push(RawSample {
                    channels: series,
                    writer_id: writer_id.clone(),
                    label: letter,
                });
            }
        }
    }
    Ok(SynthDataset { samples, manifest, calibration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_manifest;
    use crate::preprocess::{preprocess, PreprocConfig};

    fn small(seed: u64, noise: bool) -> SynthConfig {
        SynthConfig { writers: 2, per_class: 1, channels: 15, length: 60, seed, noise }
    }

    #[test]
    fn counts_and_balance() {
        let data = synth_generate(&SynthConfig { writers: 5, per_class: 2, ..small(1, true) }).unwrap();
        assert_eq!(data.samples.len(), 520);
        for class in 0..52 {
            let letter = label_char(class).unwrap();
            assert_eq!(data.samples.iter().filter(|s| s.label == letter).count(), 10);
        }
        for s in &data.samples {
            assert_eq!(s.channels.len(), 15);
            assert!((45..=75).contains(&s.len()), "length {}", s.len());
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = synth_generate(&small(7, true)).unwrap();
        let b = synth_generate(&small(7, true)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.manifest, b.manifest);
        let c = synth_generate(&small(8, true)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn classes_have_distinct_signatures() {
        let data = synth_generate(&small(2, false)).unwrap();
        let config = PreprocConfig { target_length: 64, ..PreprocConfig::default() };
        let first = preprocess(&data.samples[0], &config).unwrap();
        let second = preprocess(&data.samples[1], &config).unwrap();
        assert_ne!(first.data, second.data);
    }

    #[test]
    fn calibration_inverts_sensor_distortion() {
        let data = synth_generate(&small(4, false)).unwrap();
        let calibrated = crate::preprocess::apply_calibration(&data.samples[0], &data.calibration).unwrap();
        // magnetometer carries only its own nuisance wave plus drift; bounded
        let mx = calibrated.channel("mx").unwrap();
        assert!(mx.iter().all(|v| v.abs() < 3.0));
    }

    /// Nearest class centroid, estimated on other writers.
    #[test]
    fn noiseless_data_is_separable_by_centroids() {
        let data = synth_generate(&SynthConfig { writers: 4, per_class: 1, channels: 15, length: 80, seed: 5, noise: false }).unwrap();
        let config = PreprocConfig {
            target_length: 64,
            calibration: Some(data.calibration.clone()),
            ..PreprocConfig::default()
        };
        let processed: Vec<_> = data.samples.iter().map(|s| preprocess(s, &config).unwrap()).collect();
        let (train, test): (Vec<_>, Vec<_>) = processed.iter().partition(|p| p.writer_id != "w03");
        let dim = train[0].data.numel();
        let mut centroids = vec![vec![0.0; dim]; 52];
        let mut counts = [0usize; 52];
        for p in &train {
            counts[p.label_index] += 1;
            for (c, v) in centroids[p.label_index].iter_mut().zip(p.data.data()) {
                *c += v;
            }
        }
        for (centroid, n) in centroids.iter_mut().zip(counts) {
            centroid.iter_mut().for_each(|c| *c /= n as f64);
        }
        let correct = test
            .iter()
            .filter(|p| {
                let dist = |c: &Vec<f64>| -> f64 {
                    c.iter().zip(p.data.data()).map(|(a, b)| (a - b).powi(2)).sum()
                };
                let best = (0..52)
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best == p.label_index
            })
            .count();
        let accuracy = correct as f64 / test.len() as f64;
        assert!(accuracy > 0.95, "centroid accuracy {accuracy}");
    }

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_generate(&SynthConfig { writers: 1, per_class: 1, channels: 3, length: 20, seed: 0, noise: true }).unwrap();
        data.write_to(dir.path()).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.len(), 52);
        let loaded = crate::dataset::load_samples(&manifest).unwrap();
        assert_eq!(loaded, data.samples);
        let calib = CalibrationTable::load_csv(&dir.path().join("calibration.csv")).unwrap();
        assert_eq!(calib, data.calibration);
        assert!(data.write_to(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn wide_schemas_get_extra_columns() {
        assert_eq!(channel_names(17)[15..], ["extra1".to_string(), "extra2".to_string()]);
        assert_eq!(channel_names(2), ["a1x", "a1y"]);
    }
}
