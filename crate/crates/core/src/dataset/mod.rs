//! Manifests, labels, writer-exclusive splits and batching.

mod synth;

pub use synth::{synth_generate, SynthConfig, SynthDataset};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{csv_error, ProcessedSample, RawSample};
use crate::tensor::{Scalar, Tensor};

/// Class labels in index order: lower case first, then upper case.
pub const LABELS: [char; 52] = {
    let mut out = ['a'; 52];
    let mut i = 0;
    while i < 26 {
        out[i] = (b'a' + i as u8) as char;
        out[26 + i] = (b'A' + i as u8) as char;
        i += 1;
    }
    out
};

pub fn label_index(label: char) -> Option<usize> {
    match label {
        'a'..='z' => Some(label as usize - 'a' as usize),
        'A'..='Z' => Some(26 + label as usize - 'A' as usize),
        _ => None,
    }
}

pub fn label_char(index: usize) -> Option<char> {
    LABELS.get(index).copied()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_path: PathBuf,
    pub label: char,
    pub writer_id: String,
}

const MANIFEST_HEADER: [&str; 3] = ["sample_path", "label", "writer_id"];

/// Reads a `sample_path,label,writer_id` manifest. Relative sample paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(Error::parse(path, "expected header `sample_path,label,writer_id`"));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::parse(path, format!("row {row}: {e}")))?;
        let sample = record[0].trim();
        if sample.is_empty() {
            return Err(Error::parse(path, format!("row {row}: empty sample_path")));
        }
        let raw_label = record[1].trim();
        let mut chars = raw_label.chars();
        let label = match (chars.next(), chars.next()) {
            (Some(c), None) if label_index(c).is_some() => c,
            _ => {
                return Err(Error::UnknownLabel {
                    label: raw_label.to_string(),
                    row: Some(row),
                })
            }
        };
        let writer_id = record[2].trim();
        if writer_id.is_empty() {
            return Err(Error::parse(path, format!("row {row}: empty writer_id")));
        }
        entries.push(ManifestEntry {
            sample_path: base.join(sample),
            label,
            writer_id: writer_id.to_string(),
        });
    }
    Ok(entries)
}

/// Writes a manifest; paths are stored as given.
pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for entry in entries {
        let sample = entry.sample_path.to_string_lossy();
        writer
            .write_record([sample.as_ref(), &entry.label.to_string(), &entry.writer_id])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a sample CSV: a header of channel names, then one row per tick.
pub fn read_sample_csv(path: &Path, label: char, writer_id: &str) -> Result<RawSample> {
    if label_index(label).is_none() {
        return Err(Error::UnknownLabel {
            label: label.to_string(),
            row: None,
        });
    }
    Ok(RawSample {
        channels: read_sample_channels(path)?,
        writer_id: writer_id.to_string(),
        label,
    })
}

/// Named columns of a sample CSV.
pub fn read_sample_channels(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::parse(path, "missing or blank channel names in header"));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::parse(path, format!("row {row}: {e}")))?;
        for (column, field) in columns.iter_mut().zip(record.iter()) {
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("row {row}: bad number `{field}`")))?;
            if !value.is_finite() {
                return Err(Error::parse(path, format!("row {row}: non-finite value")));
            }
            column.push(value);
        }
    }
    if columns[0].len() < 2 {
        return Err(Error::parse(path, "a recording needs at least two rows"));
    }
    Ok(names.into_iter().zip(columns).collect())
}

pub fn write_sample_csv(path: &Path, sample: &RawSample) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let io = |e: csv::Error| csv_error(path, e);
    writer
        .write_record(sample.channels.iter().map(|(n, _)| n.as_str()))
        .map_err(io)?;
    let mut row = Vec::with_capacity(sample.channels.len());
    for t in 0..sample.len() {
        row.clear();
        row.extend(sample.channels.iter().map(|(_, v)| v[t].to_string()));
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads every sample a manifest names.
pub fn load_samples(entries: &[ManifestEntry]) -> Result<Vec<RawSample>> {
    entries
        .iter()
        .map(|e| read_sample_csv(&e.sample_path, e.label, &e.writer_id))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Writers are sorted, shuffled by seed, and the first
/// `round(train_fraction · writers)` of them (at least one, leaving at least
/// one) form the training side. Entries keep their manifest order.
pub fn writer_exclusive_split<E: HasWriter + Clone>(
    entries: &[E],
    config: &SplitConfig,
) -> Result<(Vec<E>, Vec<E>)> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {} must lie strictly between 0 and 1",
            config.train_fraction
        )));
    }
    let writers: BTreeSet<&str> = entries.iter().map(|e| e.writer_id()).collect();
    if writers.len() < 2 {
        return Err(Error::Config(format!(
            "a writer-exclusive split needs at least 2 writers, found {}",
            writers.len()
        )));
    }
    let mut order: Vec<&str> = writers.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = ((config.train_fraction * order.len() as f64).round() as usize)
        .clamp(1, order.len() - 1);
    let train_writers: BTreeSet<&str> = order[..n_train].iter().copied().collect();

    let (train, test) = entries
        .iter()
        .cloned()
        .partition(|e| train_writers.contains(e.writer_id()));
    Ok((train, test))
}

pub trait HasWriter {
    fn writer_id(&self) -> &str;
}

impl HasWriter for ManifestEntry {
    fn writer_id(&self) -> &str {
        &self.writer_id
    }
}

impl HasWriter for RawSample {
    fn writer_id(&self) -> &str {
        &self.writer_id
    }
}

impl HasWriter for ProcessedSample {
    fn writer_id(&self) -> &str {
        &self.writer_id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    /// `[batch, channels, length]`
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Groups samples into batches, optionally shuffled by seed. The last batch
/// may be smaller than `batch_size`.
pub fn make_batches<T: Scalar>(
    samples: &[ProcessedSample],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch<T>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let first = samples.first().ok_or(Error::Empty("no samples to batch"))?;
    let sample_shape = first.data.shape().to_vec();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut data = Vec::with_capacity(chunk.len() * first.data.numel());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let sample = &samples[i];
                if sample.data.shape() != sample_shape.as_slice() {
                    return Err(Error::ShapeMismatch {
                        op: "make_batches",
                        lhs: sample_shape.clone(),
                        rhs: sample.data.shape().to_vec(),
                    });
                }
                data.extend(sample.data.data().iter().map(|&v| T::from_f64_lossy(v)));
                labels.push(sample.label_index);
            }
            let mut shape = vec![chunk.len()];
            shape.extend(&sample_shape);
            Ok(Batch {
                inputs: Tensor::new(shape, data)?,
                labels,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(writer: &str, label: char) -> ManifestEntry {
        ManifestEntry {
            sample_path: format!("{writer}_{label}.csv").into(),
            label,
            writer_id: writer.into(),
        }
    }

    #[test]
    fn label_map_round_trips() {
        for i in 0..52 {
            assert_eq!(label_index(label_char(i).unwrap()), Some(i));
        }
        assert_eq!(label_index('a'), Some(0));
        assert_eq!(label_index('z'), Some(25));
        assert_eq!(label_index('A'), Some(26));
        assert_eq!(label_index('Z'), Some(51));
        assert_eq!(label_index('ß'), None);
        assert_eq!(label_char(52), None);
    }

    #[test]
    fn manifest_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, "sample_path,label,writer_id\na.csv,a,w1\nb.csv,Q,w1\nc.csv,z,w2\n").unwrap();
        let entries = load_manifest(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].label, 'Q');
        assert_eq!(entries[2].sample_path, dir.path().join("c.csv"));

        std::fs::write(&path, "sample_path,label,writer_id\n").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());

        std::fs::write(&path, "sample_path,label,writer_id\na.csv,a,w1\nb.csv,ß,w1\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { row: Some(2), .. }));
        assert!(err.to_string().contains("row 2"));

        assert!(matches!(
            load_manifest(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn manifest_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let entries = vec![entry("w1", 'a'), entry("w2", 'B')];
        save_manifest(&path, &entries).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back[1].label, 'B');
        assert_eq!(back[1].sample_path, dir.path().join("w2_B.csv"));
    }

    #[test]
    fn sample_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let sample = RawSample {
            channels: vec![
                ("gx".into(), vec![0.1, -2.5e-7, 1.0 / 3.0]),
                ("force".into(), vec![512.0, 0.0, -1e300]),
            ],
            writer_id: "w9".into(),
            label: 'k',
        };
        write_sample_csv(&path, &sample).unwrap();
        assert_eq!(read_sample_csv(&path, 'k', "w9").unwrap(), sample);

        std::fs::write(&path, "gx,force\n1,2\nx,3\n").unwrap();
        assert!(matches!(read_sample_csv(&path, 'k', "w9"), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_examples() {
        let entries: Vec<_> = ["A", "B", "C", "D", "E"].iter().map(|w| entry(w, 'a')).collect();
        let config = SplitConfig { train_fraction: 0.8, seed: 3 };
        let (train, test) = writer_exclusive_split(&entries, &config).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
        assert!(!train.iter().any(|e| e.writer_id == test[0].writer_id));
        assert_eq!(writer_exclusive_split(&entries, &config).unwrap(), (train, test));

        let pair = [entry("A", 'a'), entry("B", 'b')];
        let (train, test) =
            writer_exclusive_split(&pair, &SplitConfig { train_fraction: 0.5, seed: 1 }).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));

        assert!(writer_exclusive_split(&[entry("A", 'a'), entry("A", 'b')], &config).is_err());
        let bad = SplitConfig { train_fraction: 1.0, seed: 0 };
        assert!(writer_exclusive_split(&entries, &bad).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_writer_partition(
            writers in proptest::collection::vec(0u8..20, 2..120),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let entries: Vec<_> = writers
                .iter()
                .enumerate()
                .map(|(i, w)| entry(&format!("w{w}"), label_char(i % 52).unwrap()))
                .collect();
            let distinct: BTreeSet<_> = writers.iter().collect();
            prop_assume!(distinct.len() >= 2);
            let (train, test) =
                writer_exclusive_split(&entries, &SplitConfig { train_fraction: fraction, seed }).unwrap();
            prop_assert_eq!(train.len() + test.len(), entries.len());
            let tw: BTreeSet<_> = train.iter().map(|e| &e.writer_id).collect();
            let sw: BTreeSet<_> = test.iter().map(|e| &e.writer_id).collect();
            prop_assert!(tw.is_disjoint(&sw));
            prop_assert!(!tw.is_empty() && !sw.is_empty());
            prop_assert_eq!(tw.len() + sw.len(), distinct.len());
        }
    }

    fn processed(n: usize) -> Vec<ProcessedSample> {
        (0..n)
            .map(|i| ProcessedSample {
                data: Tensor::full([2, 3], i as f64),
                label_index: i % 52,
                writer_id: "w".into(),
            })
            .collect()
    }

    #[test]
    fn batch_sizes() {
        let samples = processed(10);
        let sizes: Vec<_> = make_batches::<f32>(&samples, 4, Some(1))
            .unwrap()
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, [4, 4, 2]);
        let singles = make_batches::<f32>(&samples, 1, Some(1)).unwrap();
        assert_eq!(singles.len(), 10);
        assert!(singles.iter().all(|b| b.inputs.shape() == [1, 2, 3]));
    }

    #[test]
    fn batches_are_deterministic_and_complete() {
        let samples = processed(10);
        let a = make_batches::<f64>(&samples, 3, Some(9)).unwrap();
        assert_eq!(a, make_batches::<f64>(&samples, 3, Some(9)).unwrap());
        let mut labels: Vec<_> = a.iter().flat_map(|b| b.labels.clone()).collect();
        labels.sort();
        assert_eq!(labels, (0..10).collect::<Vec<_>>());
        // data rows follow their labels
        for batch in &a {
            for (row, &label) in batch.labels.iter().enumerate() {
                assert_eq!(batch.inputs.data()[row * 6], label as f64);
            }
        }
        let ordered = make_batches::<f64>(&samples, 3, None).unwrap();
        assert_eq!(ordered[0].labels, [0, 1, 2]);
    }

    #[test]
    fn batching_errors() {
        assert!(matches!(make_batches::<f32>(&[], 4, None), Err(Error::Empty(_))));
        assert!(make_batches::<f32>(&processed(3), 0, None).is_err());
    }
}
