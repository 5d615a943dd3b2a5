use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm1dLayer, Conv1dLayer, LinearLayer, LstmLayer};
use super::spec::{ExpMode, LayerSpec, ModelSpec};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
enum Block<T> {
    Conv {
        name: String,
        conv: Conv1dLayer<T>,
        relu: bool,
        norm: Option<BatchNorm1dLayer<T>>,
    },
    Exp {
        name: String,
        mode: ExpMode,
    },
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
    },
    Lstm {
        name: String,
        lstm: LstmLayer<T>,
    },
    Linear {
        name: String,
        linear: LinearLayer<T>,
    },
}

impl<T> Block<T> {
    fn name(&self) -> &str {
        match self {
            Block::Conv { name, .. }
            | Block::Exp { name, .. }
            | Block::MaxPool { name, .. }
            | Block::Lstm { name, .. }
            | Block::Linear { name, .. } => name,
        }
    }
}

/// Result of one forward pass.
pub struct Forward {
    /// Raw class scores, `[batch, classes]`.
    pub logits: Var,
    /// Bound parameter tensors, in [`Model::parameters`] order.
    pub params: Vec<Var>,
    /// Output shape of every layer, in order.
    pub trace: Vec<(String, Vec<usize>)>,
}

/// A CNN-LSTM classifier instantiated from a [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: ModelSpec,
    blocks: Vec<Block<T>>,
    training: bool,
}

impl<T: Scalar> Model<T> {
    /// Builds the model with seeded initialisation. The model starts in
    /// training mode.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channels = spec.input_channels;
        let mut blocks = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let block = match layer {
                LayerSpec::Conv {
                    name,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    relu,
                    batch_norm,
                } => {
                    let conv =
                        Conv1dLayer::new(&mut rng, channels, *out_channels, *kernel, *stride, *padding);
                    channels = *out_channels;
                    Block::Conv {
                        name: name.clone(),
                        conv,
                        relu: *relu,
                        norm: batch_norm.then(|| BatchNorm1dLayer::new(channels)),
                    }
                }
                LayerSpec::Exp { name, mode } => Block::Exp {
                    name: name.clone(),
                    mode: *mode,
                },
                LayerSpec::MaxPool {
                    name,
                    kernel,
                    stride,
                } => Block::MaxPool {
                    name: name.clone(),
                    kernel: *kernel,
                    stride: *stride,
                },
                LayerSpec::Lstm { name, hidden } => {
                    let lstm = LstmLayer::new(&mut rng, channels, *hidden);
                    channels = *hidden;
                    Block::Lstm {
                        name: name.clone(),
                        lstm,
                    }
                }
                LayerSpec::Linear { name } => Block::Linear {
                    name: name.clone(),
                    linear: LinearLayer::new(&mut rng, channels, spec.class_count),
                },
            };
            blocks.push(block);
        }
        Ok(Self {
            spec: spec.clone(),
            blocks,
            training: true,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn train(&mut self) {
        self.training = true;
    }

    pub fn eval(&mut self) {
        self.training = false;
    }

    /// Records the full network on `tape` for `input: [batch, channels, length]`.
    ///
    /// In training mode parameters are bound as differentiable variables and
    /// batch norm uses (and tracks) batch statistics; in evaluation mode
    /// parameters are constants and the running statistics are used.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var) -> Result<Forward> {
        let shape = tape.shape(input).to_vec();
        let [_, channels, length] = shape[..] else {
            return Err(Error::InvalidShape {
                shape,
                reason: "model input must be [batch, channels, length]".into(),
            });
        };
        if channels != self.spec.input_channels {
            return Err(Error::ShapeMismatch {
                op: "model input channels",
                lhs: vec![self.spec.input_channels],
                rhs: vec![channels],
            });
        }
        self.spec.shape_chain(length)?;

        let training = self.training;
        let mut params = Vec::new();
        let mut trace = Vec::with_capacity(self.blocks.len());
        let mut x = input;
        for block in &mut self.blocks {
            x = match block {
                Block::Conv {
                    conv, relu, norm, ..
                } => {
                    let mut y = conv.forward(tape, x, training, &mut params)?;
                    if *relu {
                        y = tape.relu(y);
                    }
                    if let Some(norm) = norm {
                        y = norm.forward(tape, y, training, &mut params)?;
                    }
                    y
                }
                Block::Exp { mode, .. } => match mode {
                    ExpMode::SignedInverse => tape.exp1m_signed(x),
                    ExpMode::Plain => tape.exp(x),
                },
                Block::MaxPool { kernel, stride, .. } => tape.max_pool1d(x, *kernel, *stride)?,
                Block::Lstm { lstm, .. } => {
                    let steps_first = tape.transpose_last(x)?;
                    lstm.forward(tape, steps_first, training, &mut params)?
                }
                Block::Linear { linear, .. } => linear.forward(tape, x, training, &mut params)?,
            };
            trace.push((block.name().to_string(), tape.shape(x).to_vec()));
        }
        Ok(Forward {
            logits: x,
            params,
            trace,
        })
    }

    /// Convenience forward pass on a fresh tape; returns the logits tensor.
    pub fn predict(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, x)?;
        Ok(tape.value(out.logits).clone().with_requires_grad(false))
    }

    /// Trainable tensors with their qualified names, in binding order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for block in &self.blocks {
            match block {
                Block::Conv {
                    name, conv, norm, ..
                } => {
                    out.push((format!("{name}.weight"), &conv.weight));
                    out.push((format!("{name}.bias"), &conv.bias));
                    if let Some(norm) = norm {
                        out.push((format!("{name}.bn.gamma"), &norm.gamma));
                        out.push((format!("{name}.bn.beta"), &norm.beta));
                    }
                }
                Block::Lstm { name, lstm } => {
                    out.push((format!("{name}.w_ih"), &lstm.w_ih));
                    out.push((format!("{name}.w_hh"), &lstm.w_hh));
                    out.push((format!("{name}.b_ih"), &lstm.b_ih));
                    out.push((format!("{name}.b_hh"), &lstm.b_hh));
                }
                Block::Linear { name, linear } => {
                    out.push((format!("{name}.weight"), &linear.weight));
                    out.push((format!("{name}.bias"), &linear.bias));
                }
                Block::Exp { .. } | Block::MaxPool { .. } => {}
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    /// Mutable trainable tensors, in the same order as [`Model::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            match block {
                Block::Conv { conv, norm, .. } => {
                    out.push(&mut conv.weight);
                    out.push(&mut conv.bias);
                    if let Some(norm) = norm {
                        out.push(&mut norm.gamma);
                        out.push(&mut norm.beta);
                    }
                }
                Block::Lstm { lstm, .. } => {
                    out.push(&mut lstm.w_ih);
                    out.push(&mut lstm.w_hh);
                    out.push(&mut lstm.b_ih);
                    out.push(&mut lstm.b_hh);
                }
                Block::Linear { linear, .. } => {
                    out.push(&mut linear.weight);
                    out.push(&mut linear.bias);
                }
                Block::Exp { .. } | Block::MaxPool { .. } => {}
            }
        }
        out
    }

    /// Parameters followed by batch-norm running statistics: everything a
    /// checkpoint has to carry.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.named_parameters();
        for block in &self.blocks {
            if let Block::Conv {
                name,
                norm: Some(norm),
                ..
            } = block
            {
                out.push((format!("{name}.bn.running_mean"), &norm.running_mean));
                out.push((format!("{name}.bn.running_var"), &norm.running_var));
            }
        }
        out
    }

    /// Mutable counterpart of [`Model::named_state`], same order.
    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for block in &mut self.blocks {
            match block {
                Block::Conv { conv, norm, .. } => {
                    params.push(&mut conv.weight);
                    params.push(&mut conv.bias);
                    if let Some(norm) = norm {
                        params.push(&mut norm.gamma);
                        params.push(&mut norm.beta);
                        buffers.push(&mut norm.running_mean);
                        buffers.push(&mut norm.running_var);
                    }
                }
                Block::Lstm { lstm, .. } => {
                    params.push(&mut lstm.w_ih);
                    params.push(&mut lstm.w_hh);
                    params.push(&mut lstm.b_ih);
                    params.push(&mut lstm.b_hh);
                }
                Block::Linear { linear, .. } => {
                    params.push(&mut linear.weight);
                    params.push(&mut linear.bias);
                }
                Block::Exp { .. } | Block::MaxPool { .. } => {}
            }
        }
        params.extend(buffers);
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }

    /// Converts every tensor to another element type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let blocks = self
            .blocks
            .iter()
            .map(|block| match block {
                Block::Conv {
                    name,
                    conv,
                    relu,
                    norm,
                } => Block::Conv {
                    name: name.clone(),
                    conv: Conv1dLayer {
                        weight: conv.weight.cast(),
                        bias: conv.bias.cast(),
                        stride: conv.stride,
                        padding: conv.padding,
                    },
                    relu: *relu,
                    norm: norm.as_ref().map(|n| BatchNorm1dLayer {
                        gamma: n.gamma.cast(),
                        beta: n.beta.cast(),
                        running_mean: n.running_mean.cast(),
                        running_var: n.running_var.cast(),
                        eps: n.eps,
                        momentum: n.momentum,
                    }),
                },
                Block::Exp { name, mode } => Block::Exp {
                    name: name.clone(),
                    mode: *mode,
                },
                Block::MaxPool {
                    name,
                    kernel,
                    stride,
                } => Block::MaxPool {
                    name: name.clone(),
                    kernel: *kernel,
                    stride: *stride,
                },
                Block::Lstm { name, lstm } => Block::Lstm {
                    name: name.clone(),
                    lstm: LstmLayer {
                        w_ih: lstm.w_ih.cast(),
                        w_hh: lstm.w_hh.cast(),
                        b_ih: lstm.b_ih.cast(),
                        b_hh: lstm.b_hh.cast(),
                        hidden: lstm.hidden,
                    },
                },
                Block::Linear { name, linear } => Block::Linear {
                    name: name.clone(),
                    linear: LinearLayer {
                        weight: linear.weight.cast(),
                        bias: linear.bias.cast(),
                    },
                },
            })
            .collect();
        Model {
            spec: self.spec.clone(),
            blocks,
            training: self.training,
        }
    }
}
