use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pennet::autodiff::softmax_rows;
use pennet::dataset::{
    label_char, load_manifest, make_batches, read_sample_channels, read_sample_csv, synth_generate,
    writer_exclusive_split, ManifestEntry, SplitConfig, SynthConfig,
};
use pennet::gradcheck::{model_gradcheck, ModelCheckConfig};
use pennet::nn::{LayerSpec, Model, ModelSpec};
use pennet::preprocess::{preprocess, preprocess_channels, CalibrationTable, PreprocConfig, ProcessedSample};
use pennet::train::{checkpoint, evaluate, fit, AdamConfig, MetricsRow, TrainConfig};
use pennet::{Scalar, Tensor};

use crate::args::{
    Cli, Command, EvalArgs, GradcheckArgs, ModelArgs, Precision, PredictArgs, PreprocArgs, SynthArgs,
    TrainArgs,
};
use crate::exit::{Failure, CONFIG, IO, THRESHOLD_BREACH};
use crate::run_manifest::{self, RunManifest};

struct Global {
    seed: u64,
    out_dir: Option<PathBuf>,
    precision: Precision,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let global = Global {
        seed: cli.seed,
        out_dir: cli.out_dir,
        precision: cli.precision,
    };
    match cli.command {
        Command::Synth(args) => synth(&global, &args),
        Command::Train(args) => train(&global, &args),
        Command::Eval(args) => match global.precision {
            Precision::F32 => eval::<f32>(&global, &args),
            Precision::F64 => eval::<f64>(&global, &args),
        },
        Command::Predict(args) => match global.precision {
            Precision::F32 => predict::<f32>(&args),
            Precision::F64 => predict::<f64>(&args),
        },
        Command::Gradcheck(args) => gradcheck(&global, &args),
    }
}

fn existing_dir(dir: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = dir.unwrap_or(Path::new(".")).to_path_buf();
    if dir.is_dir() {
        Ok(dir)
    } else {
        Err(Failure::new(IO, format!("output directory {} does not exist", dir.display())))
    }
}

fn preproc_config(args: &PreprocArgs) -> Result<PreprocConfig, Failure> {
    let defaults = PreprocConfig::default();
    // `--gyro-channels=` means an empty list
    let names = |list: &Option<Vec<String>>, default: Vec<String>| match list {
        Some(list) => list.iter().filter(|n| !n.is_empty()).cloned().collect(),
        None => default,
    };
    let config = PreprocConfig {
        keep_channels: names(&args.keep_channels, defaults.keep_channels),
        gyro_channels: names(&args.gyro_channels, defaults.gyro_channels),
        target_length: args.target_length,
        apply_log: args.apply_log,
        calibration: args
            .calibration
            .as_deref()
            .map(CalibrationTable::load_csv)
            .transpose()?,
    };
    config.validate()?;
    Ok(config)
}

fn model_spec(args: &ModelArgs, preproc: &PreprocConfig) -> Result<ModelSpec, Failure> {
    let mut spec = ModelSpec::cnn_lstm_net12()
        .with_input_channels(preproc.keep_channels.len())
        .with_exp_mode(args.exp_mode);
    for layer in &mut spec.layers {
        if let LayerSpec::Lstm { hidden, .. } = layer {
            *hidden = args.lstm_hidden;
        }
    }
    check_spec(&spec, preproc)?;
    Ok(spec)
}

fn check_spec(spec: &ModelSpec, preproc: &PreprocConfig) -> Result<(), Failure> {
    spec.validate()?;
    if spec.input_channels != preproc.keep_channels.len() {
        return Err(Failure::new(
            CONFIG,
            format!(
                "model expects {} input channels but {} are kept",
                spec.input_channels,
                preproc.keep_channels.len()
            ),
        ));
    }
    spec.shape_chain(preproc.target_length)?;
    Ok(())
}

fn load_processed(entries: &[ManifestEntry], config: &PreprocConfig) -> Result<Vec<ProcessedSample>, Failure> {
    entries
        .iter()
        .map(|e| {
            let raw = read_sample_csv(&e.sample_path, e.label, &e.writer_id)?;
            Ok(preprocess(&raw, config)?)
        })
        .collect()
}

fn load_entries(path: &Path) -> Result<Vec<ManifestEntry>, Failure> {
    let entries = load_manifest(path)?;
    if entries.is_empty() {
        return Err(Failure::new(CONFIG, format!("{} lists no samples", path.display())));
    }
    Ok(entries)
}

fn synth(global: &Global, args: &SynthArgs) -> Result<(), Failure> {
    let dir = existing_dir(global.out_dir.as_deref())?;
    let as_usize = |v: u64| usize::try_from(v).map_err(|_| Failure::new(CONFIG, format!("{v} is too large")));
    let config = SynthConfig {
        writers: as_usize(args.writers)?,
        per_class: as_usize(args.per_class)?,
        channels: as_usize(args.channels)?,
        length: as_usize(args.length)?,
        seed: global.seed,
        noise: !args.no_noise,
    };
    let data = synth_generate(&config)?;
    data.write_to(&dir)?;
    println!("wrote {} samples, manifest.csv and calibration.csv to {}", data.samples.len(), dir.display());
    Ok(())
}

/// Timestamped progress log; the only output that differs between replays.
struct RunLog(File);

impl RunLog {
    fn create(path: &Path) -> Result<Self, Failure> {
        File::create(path)
            .map(RunLog)
            .map_err(|e| Failure::new(IO, format!("{}: {e}", path.display())))
    }

    fn line(&mut self, message: &str) {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        // logging is best effort
        let _ = writeln!(self.0, "[{}.{:03}] {message}", now.as_secs(), now.subsec_millis());
    }
}

fn resolve_train(global: &Global, args: &TrainArgs) -> Result<RunManifest, Failure> {
    if let Some(path) = &args.run_manifest {
        let mut manifest = RunManifest::load(path)?;
        if let Some(dir) = &global.out_dir {
            manifest.out_dir = dir.clone();
        }
        return Ok(manifest);
    }
    let preprocess = preproc_config(&args.preproc)?;
    let model = model_spec(&args.model, &preprocess)?;
    Ok(RunManifest {
        seed: global.seed,
        precision: global.precision,
        out_dir: global.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        manifest: args.manifest.clone().expect("required by the argument parser"),
        calibration: args.preproc.calibration.clone(),
        train_fraction: args.train_fraction,
        preprocess,
        model,
        train: TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed: global.seed,
            checkpoint_every: args.checkpoint_every,
            eval_every: args.eval_every,
            final_epoch: args.final_epoch,
            adam: AdamConfig {
                lr: args.lr,
                beta1: args.beta1,
                beta2: args.beta2,
                eps: args.adam_eps,
                weight_decay: args.weight_decay,
            },
        },
    })
}

fn train(global: &Global, args: &TrainArgs) -> Result<(), Failure> {
    let run = resolve_train(global, args)?;
    let dir = existing_dir(Some(&run.out_dir))?;
    if !(run.train_fraction > 0.0 && run.train_fraction <= 1.0) {
        return Err(Failure::new(CONFIG, format!("train_fraction {} is outside (0, 1]", run.train_fraction)));
    }
    run.preprocess.validate()?;
    check_spec(&run.model, &run.preprocess)?;
    run.train.validate()?;
    run.save(&dir.join(run_manifest::FILE_NAME))?;
    match run.precision {
        Precision::F32 => train_with::<f32>(&run, &dir),
        Precision::F64 => train_with::<f64>(&run, &dir),
    }
}

fn train_with<T: Scalar>(run: &RunManifest, dir: &Path) -> Result<(), Failure> {
    let mut log = RunLog::create(&dir.join("run.log"))?;
    log.line(&format!("start: precision {}, seed {}", T::NAME, run.seed));

    let entries = load_entries(&run.manifest)?;
    let (train_entries, test_entries) = if run.train_fraction >= 1.0 {
        (entries, Vec::new())
    } else {
        writer_exclusive_split(&entries, &SplitConfig { train_fraction: run.train_fraction, seed: run.seed })?
    };
    write_split(&dir.join("split.csv"), &train_entries, &test_entries)?;
    log.line(&format!("split: {} train / {} test samples", train_entries.len(), test_entries.len()));

    let train_set = load_processed(&train_entries, &run.preprocess)?;
    let test_set = load_processed(&test_entries, &run.preprocess)?;
    log.line("preprocessing done");

    let mut model = Model::<T>::new(&run.model, run.seed)?;
    let test = (!test_set.is_empty()).then_some(test_set.as_slice());
    let outcome = fit(&mut model, &train_set, test, &run.train, Some(dir), |row: &MetricsRow| {
        let mut line = format!("epoch {} train_loss {:.6} train_acc {:.4}", row.epoch, row.train_loss, row.train_acc);
        if let (Some(loss), Some(acc)) = (row.test_loss, row.test_acc) {
            line.push_str(&format!(" test_loss {loss:.6} test_acc {acc:.4}"));
        }
        println!("{line}");
        log.line(&line);
    })?;
    if let Some(test) = &outcome.test {
        println!("test accuracy {:.4} over {} samples", test.accuracy, test.confusion.total());
    }
    log.line("finished");
    Ok(())
}

fn write_split(path: &Path, train: &[ManifestEntry], test: &[ManifestEntry]) -> Result<(), Failure> {
    let mut writers = std::collections::BTreeMap::new();
    for (side, entries) in [("train", train), ("test", test)] {
        for e in entries {
            writers.insert(e.writer_id.as_str(), side);
        }
    }
    let mut text = String::from("writer_id,side\n");
    for (writer, side) in writers {
        text.push_str(&format!("{writer},{side}\n"));
    }
    std::fs::write(path, text).map_err(|e| Failure::new(IO, format!("{}: {e}", path.display())))
}

fn eval<T: Scalar>(global: &Global, args: &EvalArgs) -> Result<(), Failure> {
    let dir = existing_dir(global.out_dir.as_deref())?;
    if args.batch_size == 0 {
        return Err(Failure::new(CONFIG, "batch_size must be at least 1"));
    }
    let preproc = preproc_config(&args.preproc)?;
    let spec = model_spec(&args.model, &preproc)?;
    let entries = load_entries(&args.manifest)?;
    let mut model = checkpoint::load::<T>(&args.checkpoint, &spec)?;
    let samples = load_processed(&entries, &preproc)?;
    let batches = make_batches::<T>(&samples, args.batch_size, None)?;
    let result = evaluate(&mut model, &batches)?;
    println!("samples {}", result.confusion.total());
    println!("accuracy {}", result.accuracy);
    println!("loss {}", result.loss);
    result.confusion.save_csv(&dir.join("eval_confusion_matrix.csv"))?;
    Ok(())
}

fn predict<T: Scalar>(args: &PredictArgs) -> Result<(), Failure> {
    let preproc = preproc_config(&args.preproc)?;
    let spec = model_spec(&args.model, &preproc)?;
    let mut model = checkpoint::load::<T>(&args.checkpoint, &spec)?;
    let channels = read_sample_channels(&args.sample)?;
    let features = preprocess_channels(&channels, &preproc)?;
    let mut shape = vec![1];
    shape.extend(features.shape());
    let input = Tensor::<T>::from_f64(shape, features.data())?;
    let logits = model.predict(&input)?;
    let probs = softmax_rows(logits.data(), spec.class_count);
    let mut ranked: Vec<usize> = (0..probs.len()).collect();
    // stable sort: ties keep the lower class index first
    ranked.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal));
    for &k in ranked.iter().take(args.top as usize) {
        let label = label_char(k).map_or_else(|| k.to_string(), String::from);
        println!("{label} {:.9}", probs[k].as_f64());
    }
    Ok(())
}

fn gradcheck(global: &Global, args: &GradcheckArgs) -> Result<(), Failure> {
    let config = ModelCheckConfig {
        scale: args.scale as usize,
        length: args.length,
        seed: global.seed,
        eps: args.eps,
        corrupt: args.corrupt_backward,
        ..ModelCheckConfig::default()
    };
    let reports = model_gradcheck(&config)?;
    println!("{:<12} {:>14} {:>8}", "layer", "max_rel_error", "values");
    let mut worst = 0.0f64;
    let mut finite = true;
    for r in &reports {
        println!("{:<12} {:>14.3e} {:>8}", r.layer, r.max_rel_error, r.checked);
        finite &= r.max_rel_error.is_finite();
        worst = worst.max(r.max_rel_error);
    }
    println!("max relative error {worst:.3e}, threshold {:.0e}", args.threshold);
    if finite && worst < args.threshold {
        Ok(())
    } else {
        Err(Failure::new(THRESHOLD_BREACH, format!("gradient check failed: {worst:.3e} ≥ {:.0e}", args.threshold)))
    }
}
