//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns plain numbers or a JSON string so the page needs no
//! glue beyond what `wasm-bindgen` generates.

use pennet::dataset::{label_index, synth_generate, SynthConfig};
use pennet::nn::{ExpMode, ModelSpec};
use pennet::preprocess::{fourier_resample, preprocess_channels, PreprocConfig};
use pennet::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Fourier-resamples `series` to `target` points.
#[wasm_bindgen]
pub fn resample(series: Vec<f64>, target: usize) -> std::result::Result<Vec<f64>, JsError> {
    fourier_resample(&series, target).map_err(js)
}

/// A sampled test signal: `cycles` periods of a sine plus an optional step.
#[wasm_bindgen]
pub fn test_signal(length: usize, cycles: f64, step: bool) -> Vec<f64> {
    (0..length)
        .map(|i| {
            let u = i as f64 / length as f64;
            let s = (2.0 * std::f64::consts::PI * cycles * u).sin();
            if step && u >= 0.5 {
                s + 1.0
            } else {
                s
            }
        })
        .collect()
}

#[derive(Serialize)]
struct LetterView {
    label: char,
    writer: String,
    channels: Vec<String>,
    raw: Vec<Vec<f64>>,
    processed: Vec<Vec<f64>>,
}

fn letter_view(letter: char, writer: usize, seed: u64, target_length: usize, apply_log: bool) -> Result<LetterView> {
    let index = label_index(letter).ok_or(Error::UnknownLabel { label: letter.to_string(), row: None })?;
    let data = synth_generate(&SynthConfig {
        writers: writer + 1,
        seed,
        ..SynthConfig::default()
    })?;
    let sample = data
        .samples
        .iter()
        .filter(|s| label_index(s.label) == Some(index))
        .nth(writer)
        .ok_or(Error::Empty("no synthetic sample for that letter"))?;
    let config = PreprocConfig {
        target_length,
        apply_log,
        calibration: Some(data.calibration.clone()),
        ..PreprocConfig::default()
    };
    let processed = preprocess_channels(&sample.channels, &config)?;
    let steps = processed.shape()[1];
    let raw = config
        .keep_channels
        .iter()
        .map(|name| sample.channel(name).unwrap_or_default().to_vec())
        .collect();
    Ok(LetterView {
        label: sample.label,
        writer: sample.writer_id.clone(),
        channels: config.keep_channels.clone(),
        raw,
        processed: processed.data().chunks(steps).map(<[f64]>::to_vec).collect(),
    })
}

/// Synthesises one recording of `letter` and runs it through preprocessing.
/// Returns `{label, writer, channels, raw, processed}` as JSON.
#[wasm_bindgen]
pub fn synth_letter(
    letter: char,
    writer: usize,
    seed: u64,
    target_length: usize,
    apply_log: bool,
) -> std::result::Result<String, JsError> {
    let view = letter_view(letter, writer, seed, target_length, apply_log).map_err(js)?;
    Ok(serde_json::to_string(&view).expect("view serialises"))
}

#[derive(Serialize)]
struct ShapeRow {
    layer: String,
    channels: usize,
    length: usize,
}

fn shape_rows(length: usize, channels: usize) -> Result<Vec<ShapeRow>> {
    let spec = ModelSpec::cnn_lstm_net12()
        .with_input_channels(channels)
        .with_exp_mode(ExpMode::SignedInverse);
    spec.validate()?;
    let mut rows = vec![ShapeRow {
        layer: "input".into(),
        channels,
        length,
    }];
    rows.extend(spec.shape_chain(length)?.into_iter().map(|s| ShapeRow {
        layer: s.name,
        channels: s.channels,
        length: s.length,
    }));
    Ok(rows)
}

/// Per-layer activation geometry of the full network for an input of
/// `channels × length`, as a JSON array.
#[wasm_bindgen]
pub fn shape_chain(length: usize, channels: usize) -> std::result::Result<String, JsError> {
    let rows = shape_rows(length, channels).map_err(js)?;
    Ok(serde_json::to_string(&rows).expect("rows serialise"))
}

/// Shortest input the network accepts.
#[wasm_bindgen]
pub fn min_input_length() -> usize {
    ModelSpec::cnn_lstm_net12().min_input_length()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rows_follow_the_network() {
        let rows = shape_rows(256, 12).unwrap();
        let len = |name: &str| rows.iter().find(|r| r.layer == name).unwrap().length;
        assert_eq!((len("conv1"), len("maxpool1"), len("maxpool2")), (128, 41, 12));
        assert_eq!(rows.last().unwrap().channels, 52);
        assert!(shape_rows(10, 12).is_err());
    }

    #[test]
    fn letter_view_is_preprocessed() {
        let view = letter_view('Q', 1, 3, 128, true).unwrap();
        assert_eq!(view.label, 'Q');
        assert_eq!(view.channels.len(), 12);
        assert_eq!(view.processed.len(), 12);
        assert!(view.processed.iter().all(|c| c.len() == 128));
        assert!(view.raw.iter().all(|c| !c.is_empty()));
        assert!(letter_view('?', 0, 3, 128, true).is_err());
    }

    #[test]
    fn test_signal_has_requested_length() {
        assert_eq!(test_signal(50, 2.0, true).len(), 50);
    }
}
