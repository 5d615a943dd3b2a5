//! Parameterised layers. Each `forward` binds the layer's tensors onto the
//! tape and records the layer computation.

use rand::Rng;

use crate::autodiff::{BatchNormStats, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Records `tensor` on the tape, as a differentiable variable when training.
fn bind<T: Scalar>(tape: &mut Tape<T>, tensor: &Tensor<T>, track: bool, bound: &mut Vec<Var>) -> Var {
    let var = tape.leaf(tensor.clone().with_requires_grad(track));
    bound.push(var);
    var
}

pub(crate) fn uniform<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

#[derive(Clone, Debug)]
pub struct Conv1dLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv1dLayer<T> {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            weight: uniform(rng, &[out_channels, in_channels, kernel], in_channels * kernel),
            bias: Tensor::zeros([out_channels]),
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, track: bool, bound: &mut Vec<Var>) -> Result<Var> {
        let w = bind(tape, &self.weight, track, bound);
        let b = bind(tape, &self.bias, track, bound);
        tape.conv1d(x, w, Some(b), self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm1dLayer<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Scalar> BatchNorm1dLayer<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full([channels], T::one()),
            beta: Tensor::zeros([channels]),
            running_mean: Tensor::zeros([channels]),
            running_var: Tensor::full([channels], T::one()),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    /// Normalises with batch statistics when `training` (updating the running
    /// estimates), otherwise with the running estimates.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        x: Var,
        training: bool,
        bound: &mut Vec<Var>,
    ) -> Result<Var> {
        let gamma = bind(tape, &self.gamma, training, bound);
        let beta = bind(tape, &self.beta, training, bound);
        let eps = T::from_f64_lossy(self.eps);
        let stats = if training {
            BatchNormStats::Batch { eps }
        } else {
            BatchNormStats::Running {
                mean: self.running_mean.data().to_vec(),
                var: self.running_var.data().to_vec(),
                eps,
            }
        };
        let (out, batch) = tape.batch_norm(x, gamma, beta, &stats)?;
        if let Some((mean, var)) = batch {
            let shape = tape.shape(x);
            let count = (shape[0] * shape[2]) as f64;
            // running variance uses the unbiased estimate
            let unbias = T::from_f64_lossy(count / (count - 1.0));
            let m = T::from_f64_lossy(self.momentum);
            let keep = T::one() - m;
            for (r, b) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = keep * *r + m * *b;
            }
            for (r, b) in self.running_var.data_mut().iter_mut().zip(&var) {
                *r = keep * *r + m * *b * unbias;
            }
        }
        Ok(out)
    }
}

/// Single-layer LSTM with gates stacked as (input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct LstmLayer<T> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b_ih: Tensor<T>,
    pub b_hh: Tensor<T>,
    pub hidden: usize,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut b_ih = Tensor::zeros([4 * hidden]);
        b_ih.data_mut()[hidden..2 * hidden].fill(T::one());
        Self {
            w_ih: uniform(rng, &[4 * hidden, input], input),
            w_hh: uniform(rng, &[4 * hidden, hidden], hidden),
            b_ih,
            b_hh: Tensor::zeros([4 * hidden]),
            hidden,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[1]
    }

    /// `x: [batch, steps, features]` → last hidden state `[batch, hidden]`,
    /// starting from zero hidden and cell states.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, track: bool, bound: &mut Vec<Var>) -> Result<Var> {
        let [batch, steps, features] = tape.shape(x)[..] else {
            return Err(Error::InvalidShape {
                shape: tape.shape(x).to_vec(),
                reason: "LSTM expects [batch, steps, features]".into(),
            });
        };
        if features != self.input_size() || steps == 0 {
            return Err(Error::ShapeMismatch {
                op: "lstm input",
                lhs: vec![batch, steps, features],
                rhs: self.w_ih.shape().to_vec(),
            });
        }
        let h = self.hidden;
        let w_ih = bind(tape, &self.w_ih, track, bound);
        let w_hh = bind(tape, &self.w_hh, track, bound);
        let b_ih = bind(tape, &self.b_ih, track, bound);
        let b_hh = bind(tape, &self.b_hh, track, bound);

        // input projections for all steps at once
        let flat = tape.reshape(x, &[batch * steps, features])?;
        let projected = tape.linear(flat, w_ih, Some(b_ih))?;
        let projected = tape.reshape(projected, &[batch, steps, 4 * h])?;

        let mut hidden = tape.constant(Tensor::zeros([batch, h]));
        let mut cell = tape.constant(Tensor::zeros([batch, h]));
        for t in 0..steps {
            let input_part = tape.select_axis1(projected, t)?;
            let recurrent = tape.linear(hidden, w_hh, Some(b_hh))?;
            let gates = tape.add(input_part, recurrent)?;
            let i = tape.narrow_last(gates, 0, h)?;
            let f = tape.narrow_last(gates, h, h)?;
            let g = tape.narrow_last(gates, 2 * h, h)?;
            let o = tape.narrow_last(gates, 3 * h, h)?;
            let i = tape.sigmoid(i);
            let f = tape.sigmoid(f);
            let g = tape.tanh(g);
            let o = tape.sigmoid(o);
            let kept = tape.mul(f, cell)?;
            let written = tape.mul(i, g)?;
            cell = tape.add(kept, written)?;
            let squashed = tape.tanh(cell);
            hidden = tape.mul(o, squashed)?;
        }
        Ok(hidden)
    }
}

#[derive(Clone, Debug)]
pub struct LinearLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearLayer<T> {
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Self {
            weight: uniform(rng, &[output, input], input),
            bias: Tensor::zeros([output]),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, track: bool, bound: &mut Vec<Var>) -> Result<Var> {
        let w = bind(tape, &self.weight, track, bound);
        let b = bind(tape, &self.bias, track, bound);
        tape.linear(x, w, Some(b))
    }
}
