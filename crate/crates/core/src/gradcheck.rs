//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{OpKind, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Largest acceptable relative error of a model gradient check.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// `|analytic − numeric| / max(1, |analytic|)`, maximised over elements.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Compares the tape gradient of a scalar function against central
/// differences at `x` and returns the maximum relative error.
///
/// `f` must record a scalar-valued computation of its input on the tape.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite difference step must be positive, got {eps}")));
    }
    let eval = |point: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point.clone());
        let out = f(&mut tape, v)?;
        if tape.value(out).numel() != 1 {
            return Err(Error::NonScalarLoss(tape.shape(out).to_vec()));
        }
        Ok(tape.data(out)[0])
    };

    let mut tape = Tape::new();
    let v = tape.variable(x.clone());
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(v)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = original - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = original;
        numeric.push((plus - minus) / (2.0 * eps));
    }
    Ok(max_relative_error(&analytic, &numeric))
}

/// End-to-end check of a shrunken network in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckConfig {
    /// Input channels and the width of every hidden layer.
    pub scale: usize,
    pub length: usize,
    pub batch: usize,
    pub classes: usize,
    pub seed: u64,
    pub eps: f64,
    /// Deliberately break one backward rule (negative control).
    pub corrupt: Option<OpKind>,
}

impl Default for ModelCheckConfig {
    fn default() -> Self {
        Self {
            scale: 3,
            length: 32,
            batch: 2,
            classes: 52,
            seed: 0,
            eps: DEFAULT_EPS,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerReport {
    /// Parameter group, e.g. `conv2`, `conv2.bn`, `lstm1`, or `input`.
    pub layer: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares every parameter gradient (and the input gradient) of the
/// cross-entropy loss against central differences, grouped by layer.
pub fn model_gradcheck(config: &ModelCheckConfig) -> Result<Vec<LayerReport>> {
    if !(config.eps > 0.0) {
        return Err(Error::Config(format!("finite difference step must be positive, got {}", config.eps)));
    }
    let spec = ModelSpec::reduced(config.scale, config.scale, config.classes);
    let mut model = Model::<f64>::new(&spec, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let shape = [config.batch, config.scale, config.length];
    let data: Vec<f64> = (0..shape.iter().product::<usize>())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let input = Tensor::new(shape, data)?;
    let targets: Vec<usize> = (0..config.batch).map(|_| rng.random_range(0..config.classes)).collect();

    let loss_at = |model: &mut Model<f64>, input: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = model.forward(&mut tape, x)?;
        let loss = tape.cross_entropy(out.logits, &targets)?;
        Ok(tape.data(loss)[0])
    };

    let mut tape = Tape::new();
    if let Some(kind) = config.corrupt {
        tape.corrupt_backward_rule(kind);
    }
    let x = tape.variable(input.clone());
    let forward = model.forward(&mut tape, x)?;
    let loss = tape.cross_entropy(forward.logits, &targets)?;
    tape.backward(loss)?;
    let zeros = |n: usize| vec![0.0; n];
    let input_grad = tape.grad(x).map_or_else(|| zeros(input.numel()), <[f64]>::to_vec);
    let param_grads: Vec<Vec<f64>> = forward
        .params
        .iter()
        .map(|&p| tape.grad(p).map_or_else(|| zeros(tape.value(p).numel()), <[f64]>::to_vec))
        .collect();
    drop(tape);

    let eps = config.eps;
    let mut reports: Vec<LayerReport> = Vec::new();
    let mut record = |layer: &str, analytic: &[f64], numeric: &[f64]| {
        let err = max_relative_error(analytic, numeric);
        match reports.iter_mut().find(|r| r.layer == layer) {
            Some(r) => {
                r.max_rel_error = r.max_rel_error.max(err);
                r.checked += analytic.len();
            }
            None => reports.push(LayerReport {
                layer: layer.to_string(),
                max_rel_error: err,
                checked: analytic.len(),
            }),
        }
    };

    let mut probe = input.clone();
    let mut numeric = Vec::with_capacity(input.numel());
    for i in 0..input.numel() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + eps;
        let plus = loss_at(&mut model, &probe)?;
        probe.data_mut()[i] = original - eps;
        let minus = loss_at(&mut model, &probe)?;
        probe.data_mut()[i] = original;
        numeric.push((plus - minus) / (2.0 * eps));
    }
    record("input", &input_grad, &numeric);

    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
    for (p, name) in names.iter().enumerate() {
        let count = param_grads[p].len();
        let mut numeric = Vec::with_capacity(count);
        for i in 0..count {
            let original = model.parameters()[p].data()[i];
            let nudge = |model: &mut Model<f64>, value: f64| {
                model.parameters_mut()[p].data_mut()[i] = value;
            };
            nudge(&mut model, original + eps);
            let plus = loss_at(&mut model, &input)?;
            nudge(&mut model, original - eps);
            let minus = loss_at(&mut model, &input)?;
            nudge(&mut model, original);
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let layer = name.rsplit_once('.').map_or(name.as_str(), |(l, _)| l);
        record(layer, &param_grads[p], &numeric);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(data: &[f64]) -> Tensor<f64> {
        Tensor::from_slice([data.len()], data).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let err = finite_diff_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                Ok(tape.sum(sq))
            },
            &vector(&[1.0, 2.0, 3.0]),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn sum_of_signed_logs() {
        let err = finite_diff_check(
            |tape, x| {
                let l = tape.log1p_signed(x);
                Ok(tape.sum(l))
            },
            &vector(&[-2.0, 0.5, 3.0]),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = finite_diff_check(
            |tape, _x| Ok(tape.constant(Tensor::scalar(4.0))),
            &vector(&[1.0, -1.0]),
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(finite_diff_check(|tape, x| Ok(tape.sum(x)), &vector(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn reduced_model_passes() {
        let reports = model_gradcheck(&ModelCheckConfig::default()).unwrap();
        let layers: Vec<&str> = reports.iter().map(|r| r.layer.as_str()).collect();
        assert_eq!(layers[..4], ["input", "conv1", "conv1.bn", "conv2"]);
        assert!(layers.contains(&"lstm1") && layers.contains(&"fc"));
        for r in &reports {
            assert!(r.max_rel_error < DEFAULT_THRESHOLD, "{r:?}");
        }
    }

    #[test]
    fn corrupted_rule_is_caught() {
        let config = ModelCheckConfig { corrupt: Some(OpKind::Linear), ..ModelCheckConfig::default() };
        let worst = model_gradcheck(&config)
            .unwrap()
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max);
        assert!(worst > DEFAULT_THRESHOLD, "{worst}");
    }
}
