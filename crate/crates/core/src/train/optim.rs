use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty: `weight_decay · param` is added to the gradient
    /// before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        Self { config, t: 0, m: zeros(), v: zeros() }
    }

    /// One update. `grads[i]` of `None` means the parameter got no gradient
    /// and is treated as zero; `names` is only used for diagnostics.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Option<&[T]>],
        names: &[String],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, grad) in grads.iter().enumerate() {
            if let Some(g) = grad {
                if g.len() != params[i].numel() {
                    return Err(Error::ShapeMismatch {
                        op: "adam gradient",
                        lhs: params[i].shape().to_vec(),
                        rhs: vec![g.len()],
                    });
                }
                if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                    let name = names.get(i).map_or("?", String::as_str);
                    return Err(Error::NonFinite(format!("gradient of `{name}` at element {bad}")));
                }
            }
        }

        self.t += 1;
        let c = &self.config;
        let t = self.t as i32;
        let from = T::from_f64_lossy;
        let (b1, b2) = (from(c.beta1), from(c.beta2));
        let (one_b1, one_b2) = (from(1.0 - c.beta1), from(1.0 - c.beta2));
        let correct1 = from(1.0 - c.beta1.powi(t));
        let correct2 = from(1.0 - c.beta2.powi(t));
        let (lr, eps, wd) = (from(c.lr), from(c.eps), from(c.weight_decay));

        for (i, param) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in param.data_mut().iter_mut().enumerate() {
                let g = grads[i].map_or(T::zero(), |g| g[j]) + wd * *p;
                m[j] = b1 * m[j] + one_b1 * g;
                v[j] = b2 * v[j] + one_b2 * g * g;
                let m_hat = m[j] / correct1;
                let v_hat = v[j] / correct2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(param: f64, grad: f64, config: AdamConfig) -> (f64, AdamState<f64>) {
        let mut p = Tensor::scalar(param);
        let mut state = AdamState::new(config, &[&p]);
        state.step(&mut [&mut p], &[Some(&[grad][..])], &["p".into()]).unwrap();
        (p.item(), state)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let config = AdamConfig { lr: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
        let (p, state) = run(0.0, 1.0, config);
        // m̂ = v̂ = 1, so the step is lr / (1 + eps)
        assert!((p - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn hand_evaluated_second_step() {
        let config = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.99, eps: 1e-8, weight_decay: 0.0 };
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new(config, &[&p]);
        state.step(&mut [&mut p], &[Some(&[2.0][..])], &[]).unwrap();
        state.step(&mut [&mut p], &[Some(&[-1.0][..])], &[]).unwrap();
        let (m1, v1) = (0.1 * 2.0, 0.01 * 4.0);
        let p1 = 1.0 - 0.01 * (m1 / 0.1) / ((v1 / 0.01f64).sqrt() + 1e-8);
        let (m2, v2) = (0.9 * m1 + 0.1 * -1.0, 0.99 * v1 + 0.01 * 1.0);
        let p2 = p1 - 0.01 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.9801f64)).sqrt() + 1e-8);
        assert!((p.item() - p2).abs() < 1e-14);
    }

    #[test]
    fn zero_gradient_without_decay_keeps_param() {
        let config = AdamConfig { lr: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
        let (p, state) = run(0.7, 0.0, config);
        assert_eq!(p, 0.7);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn decay_shrinks_positive_param() {
        let config = AdamConfig { lr: 0.01, weight_decay: 0.1, ..AdamConfig::default() };
        let (p, _) = run(0.5, 0.0, config);
        assert!(p < 0.5);
    }

    #[test]
    fn zero_lr_is_identity() {
        let config = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        let (p, _) = run(0.3, 123.0, config);
        assert_eq!(p, 0.3);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Tensor::<f32>::zeros([2]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        let err = state
            .step(&mut [&mut p], &[Some(&[0.0, f32::NAN][..])], &["fc.bias".into()])
            .unwrap_err();
        assert!(err.to_string().contains("fc.bias"));
        assert_eq!(state.t, 0);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut p = Tensor::<f64>::zeros([3]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        for g in [[1.0, -2.0, 0.5], [-3.0, 0.0, 4.0]] {
            state.step(&mut [&mut p], &[Some(&g[..])], &[]).unwrap();
        }
        assert!(state.v[0].iter().all(|&v| v >= 0.0));
    }
}
