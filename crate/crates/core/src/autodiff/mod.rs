//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and enough
//! saved state to run its backward rule. Nodes are only ever appended, so
//! the tape is always in topological order and [`Tape::backward`] simply
//! walks it in reverse.
//!
//! A tape is single-threaded and short-lived: the training loop builds one
//! per batch, reads the parameter gradients out, and drops it.

mod elementwise;
mod layers;
mod linalg;
mod shape;

pub use elementwise::{exp1m_signed, log1p_signed, sigmoid, BinaryKind, UnaryKind};
pub use layers::{softmax_rows, window_output_len, BatchNormStats};
pub use shape::ReduceKind;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Coarse operation category, used for diagnostics and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Binary,
    Unary,
    MatMul,
    Linear,
    Reduce,
    Reshape,
    Transpose,
    Narrow,
    Select,
    Conv1d,
    MaxPool1d,
    BatchNorm,
    CrossEntropy,
}

impl std::str::FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "binary" => OpKind::Binary,
            "unary" => OpKind::Unary,
            "matmul" => OpKind::MatMul,
            "linear" => OpKind::Linear,
            "reduce" => OpKind::Reduce,
            "reshape" => OpKind::Reshape,
            "transpose" => OpKind::Transpose,
            "narrow" => OpKind::Narrow,
            "select" => OpKind::Select,
            "conv1d" => OpKind::Conv1d,
            "maxpool1d" => OpKind::MaxPool1d,
            "batchnorm" => OpKind::BatchNorm,
            "cross_entropy" | "crossentropy" => OpKind::CrossEntropy,
            other => return Err(Error::Config(format!("unknown op kind `{other}`"))),
        })
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Unary {
        kind: UnaryKind,
        a: Var,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Reduce {
        kind: ReduceKind,
        a: Var,
        axis: Option<usize>,
        argmax: Vec<usize>,
    },
    Reshape {
        a: Var,
    },
    TransposeLast {
        a: Var,
    },
    NarrowLast {
        a: Var,
        start: usize,
    },
    SelectAxis1 {
        a: Var,
        index: usize,
    },
    Conv1d {
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Binary { .. } => OpKind::Binary,
            Op::Unary { .. } => OpKind::Unary,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Linear { .. } => OpKind::Linear,
            Op::Reduce { .. } => OpKind::Reduce,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::TransposeLast { .. } => OpKind::Transpose,
            Op::NarrowLast { .. } => OpKind::Narrow,
            Op::SelectAxis1 { .. } => OpKind::Select,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::MaxPool1d { .. } => OpKind::MaxPool1d,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.push_node(tensor, Op::Leaf)
    }

    /// Records an input tensor that gradients are tracked for.
    pub fn variable(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Records an input tensor that is never differentiated.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn data(&self, var: Var) -> &[T] {
        self.nodes[var.0].value.data()
    }

    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.nodes[var.0].value.grad()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad()
    }

    pub fn op_kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    /// Clears every gradient on the tape.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    /// Test hook: perturbs every backward rule of the given kind so that
    /// gradient checks can be shown to catch a broken rule.
    #[doc(hidden)]
    pub fn corrupt_backward_rule(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    fn push_node(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Appends an operation output; it requires grad iff any input does.
    fn push_op(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        let value = Tensor::new(shape, data)
            .expect("operation produced an inconsistent tensor")
            .with_requires_grad(requires_grad);
        self.push_node(value, op)
    }

    /// Accumulates gradients of `loss` into every reachable tensor that
    /// requires grad. Repeated calls add to existing gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if !loss_value.requires_grad() {
            return Ok(());
        }

        let mut adjoints: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adjoints[loss.0] = Some(vec![T::one()]);

        for index in (0..=loss.0).rev() {
            let Some(grad) = adjoints[index].take() else {
                continue;
            };
            let mut sink = GradSink {
                nodes: &self.nodes,
                adjoints: &mut adjoints,
                scale: (self.fault == Some(self.nodes[index].op.kind()))
                    .then(|| T::from_f64_lossy(1.25)),
            };
            self.nodes[index].backward(&grad, &mut sink);
            self.nodes[index].value.accumulate_grad(&grad);
        }
        Ok(())
    }
}

/// Collects input adjoints produced by one backward rule.
pub(crate) struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    adjoints: &'a mut [Option<Vec<T>>],
    scale: Option<T>,
}

impl<T: Scalar> GradSink<'_, T> {
    pub(crate) fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad()
    }

    pub(crate) fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Adds `delta` to the adjoint of `var`; ignored when `var` needs no grad.
    pub(crate) fn send(&mut self, var: Var, mut delta: Vec<T>) {
        if !self.wants(var) {
            return;
        }
        if let Some(scale) = self.scale {
            delta.iter_mut().for_each(|d| *d *= scale);
        }
        match &mut self.adjoints[var.0] {
            Some(existing) => existing
                .iter_mut()
                .zip(&delta)
                .for_each(|(e, &d)| *e += d),
            slot @ None => *slot = Some(delta),
        }
    }
}

impl<T: Scalar> Node<T> {
    fn backward(&self, grad: &[T], sink: &mut GradSink<'_, T>) {
        match &self.op {
            Op::Leaf => {}
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            } => elementwise::binary_backward(*kind, *a, *b, *broadcast, grad, sink),
            Op::Unary { kind, a } => {
                elementwise::unary_backward(*kind, *a, self.value.data(), grad, sink)
            }
            Op::MatMul { a, b } => linalg::matmul_backward(*a, *b, grad, sink),
            Op::Linear { x, weight, bias } => {
                linalg::linear_backward(*x, *weight, *bias, grad, sink)
            }
            Op::Reduce {
                kind,
                a,
                axis,
                argmax,
            } => shape::reduce_backward(*kind, *a, *axis, argmax, grad, sink),
            Op::Reshape { a } => sink.send(*a, grad.to_vec()),
            Op::TransposeLast { a } => shape::transpose_backward(*a, grad, sink),
            Op::NarrowLast { a, start } => {
                shape::narrow_backward(*a, *start, self.value.shape(), grad, sink)
            }
            Op::SelectAxis1 { a, index } => shape::select_backward(*a, *index, grad, sink),
            Op::Conv1d {
                x,
                weight,
                bias,
                stride,
                padding,
            } => layers::conv1d_backward(*x, *weight, *bias, *stride, *padding, grad, sink),
            Op::MaxPool1d { x, argmax } => {
                let mut dx = vec![T::zero(); sink.value(*x).numel()];
                for (&src, &g) in argmax.iter().zip(grad) {
                    dx[src] += g;
                }
                sink.send(*x, dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            } => layers::batch_norm_backward(
                *x,
                *gamma,
                *beta,
                normalized,
                inv_std,
                *batch_stats,
                grad,
                sink,
            ),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => layers::cross_entropy_backward(*logits, targets, probs, grad, sink),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_slice(shape, data).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1], &[3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[6.0][..]));
    }

    #[test]
    fn relu_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[2], &[-1.0, 2.0]));
        let r = tape.relu(x);
        let loss = tape.sum(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn mean_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[4], &[1.0, -2.0, 3.0, 7.0]));
        let loss = tape.mean(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[0.25; 4][..]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[2], &[1.0, 2.0]));
        assert!(matches!(
            tape.backward(x),
            Err(Error::NonScalarLoss(shape)) if shape == vec![2]
        ));
    }

    #[test]
    fn repeated_backward_accumulates_until_reset() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1], &[3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[12.0][..]));
        tape.zero_grad();
        assert_eq!(tape.grad(x), None);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[6.0][..]));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[2], &[1.0, 2.0]));
        let c = tape.constant(t(&[2], &[5.0, 7.0]));
        let p = tape.mul(x, c).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[5.0, 7.0][..]));
        assert_eq!(tape.grad(c), None);
    }

    #[test]
    fn unreachable_variable_keeps_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[1], &[1.0]));
        let y = tape.variable(t(&[1], &[2.0]));
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert!(tape.grad(y).is_none());
    }

    #[test]
    fn corrupted_rule_changes_gradient() {
        let mut tape = Tape::new();
        tape.corrupt_backward_rule(OpKind::Unary);
        let x = tape.variable(t(&[1], &[2.0]));
        let r = tape.relu(x);
        let loss = tape.sum(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), Some(&[1.25][..]));
    }

    #[test]
    fn op_kind_parses() {
        assert_eq!("Conv1d".parse::<OpKind>().unwrap(), OpKind::Conv1d);
        assert!("nope".parse::<OpKind>().is_err());
    }
}
