use super::{GradSink, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// `(outer, len, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: Option<usize>) -> (usize, usize, usize) {
    match axis {
        None => (1, shape.iter().product(), 1),
        Some(axis) => (
            shape[..axis].iter().product(),
            shape[axis],
            shape[axis + 1..].iter().product(),
        ),
    }
}

impl<T: Scalar> Tape<T> {
    /// Reduces over one axis, or over everything when `axis` is `None`.
    /// The reduced axis is removed; a full reduction yields shape `[1]`.
    pub fn reduce(&mut self, kind: ReduceKind, a: Var, axis: Option<usize>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if let Some(axis) = axis {
            if axis >= shape.len() {
                return Err(Error::AxisOutOfRange {
                    axis,
                    rank: shape.len(),
                });
            }
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let data = self.data(a);
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::new();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                match kind {
                    ReduceKind::Sum | ReduceKind::Mean => {
                        let s: T = (0..len).map(|j| data[at(j)]).sum();
                        out.push(if kind == ReduceKind::Mean {
                            s / T::from_usize(len).unwrap()
                        } else {
                            s
                        });
                    }
                    ReduceKind::Max => {
                        // strict comparison keeps the first of tied maxima
                        let mut best = at(0);
                        for j in 1..len {
                            if data[at(j)] > data[best] {
                                best = at(j);
                            }
                        }
                        argmax.push(best);
                        out.push(data[best]);
                    }
                }
            }
        }
        let mut out_shape: Vec<usize> = match axis {
            None => vec![],
            Some(axis) => shape
                .iter()
                .enumerate()
                .filter(|&(d, _)| d != axis)
                .map(|(_, &n)| n)
                .collect(),
        };
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(self.push_op(
            out_shape,
            out,
            Op::Reduce {
                kind,
                a,
                axis,
                argmax,
            },
            &[a],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.reduce(ReduceKind::Sum, a, None).expect("full reduction")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.reduce(ReduceKind::Mean, a, None).expect("full reduction")
    }

    pub fn max(&mut self, a: Var) -> Var {
        self.reduce(ReduceKind::Max, a, None).expect("full reduction")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || numel != self.value(a).numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.data(a).to_vec();
        Ok(self.push_op(shape.to_vec(), data, Op::Reshape { a }, &[a]))
    }

    /// Swaps the last two dimensions: `[.., m, n] → [.., n, m]`.
    pub fn transpose_last(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let rank = shape.len();
        if rank < 2 {
            return Err(Error::InvalidShape {
                shape,
                reason: "transpose needs rank ≥ 2".into(),
            });
        }
        let (m, n) = (shape[rank - 2], shape[rank - 1]);
        let data = transpose_blocks(self.data(a), m, n);
        let mut out_shape = shape;
        out_shape.swap(rank - 2, rank - 1);
        Ok(self.push_op(out_shape, data, Op::TransposeLast { a }, &[a]))
    }

    /// Keeps `len` entries of the last dimension starting at `start`.
    pub fn narrow_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().unwrap();
        if len == 0 || start + len > width {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("cannot take {len} entries from {start}"),
            });
        }
        let data = self
            .data(a)
            .chunks_exact(width)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        Ok(self.push_op(out_shape, data, Op::NarrowLast { a, start }, &[a]))
    }

    /// `[b, t, f] → [b, f]` picking step `index` of the middle axis.
    pub fn select_axis1(&mut self, a: Var, index: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [batch, steps, features] = shape[..] else {
            return Err(Error::InvalidShape {
                shape,
                reason: "select expects rank 3".into(),
            });
        };
        if index >= steps {
            return Err(Error::AxisOutOfRange {
                axis: index,
                rank: steps,
            });
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(batch * features);
        for b in 0..batch {
            let offset = (b * steps + index) * features;
            data.extend_from_slice(&src[offset..offset + features]);
        }
        Ok(self.push_op(
            vec![batch, features],
            data,
            Op::SelectAxis1 { a, index },
            &[a],
        ))
    }
}

fn transpose_blocks<T: Scalar>(src: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for (block_in, block_out) in src.chunks_exact(m * n).zip(out.chunks_exact_mut(m * n)) {
        for i in 0..m {
            for j in 0..n {
                block_out[j * m + i] = block_in[i * n + j];
            }
        }
    }
    out
}

pub(super) fn reduce_backward<T: Scalar>(
    kind: ReduceKind,
    a: Var,
    axis: Option<usize>,
    argmax: &[usize],
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let shape = sink.value(a).shape().to_vec();
    let numel = sink.value(a).numel();
    let (outer, len, inner) = split_axis(&shape, axis);
    let mut da = vec![T::zero(); numel];
    match kind {
        ReduceKind::Max => {
            for (&src, &g) in argmax.iter().zip(grad) {
                da[src] += g;
            }
        }
        ReduceKind::Sum | ReduceKind::Mean => {
            let scale = if kind == ReduceKind::Mean {
                T::one() / T::from_usize(len).unwrap()
            } else {
                T::one()
            };
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        da[o * len * inner + j * inner + i] = grad[o * inner + i] * scale;
                    }
                }
            }
        }
    }
    sink.send(a, da);
}

pub(super) fn transpose_backward<T: Scalar>(a: Var, grad: &[T], sink: &mut GradSink<'_, T>) {
    let shape = sink.value(a).shape();
    let rank = shape.len();
    let (m, n) = (shape[rank - 2], shape[rank - 1]);
    // grad has the transposed layout [.., n, m]
    let da = transpose_blocks(grad, n, m);
    sink.send(a, da);
}

pub(super) fn narrow_backward<T: Scalar>(
    a: Var,
    start: usize,
    out_shape: &[usize],
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let width = *sink.value(a).shape().last().unwrap();
    let len = *out_shape.last().unwrap();
    let mut da = vec![T::zero(); sink.value(a).numel()];
    for (row, g) in da.chunks_exact_mut(width).zip(grad.chunks_exact(len)) {
        row[start..start + len].copy_from_slice(g);
    }
    sink.send(a, da);
}

pub(super) fn select_backward<T: Scalar>(
    a: Var,
    index: usize,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let shape = sink.value(a).shape();
    let (steps, features) = (shape[1], shape[2]);
    let mut da = vec![T::zero(); sink.value(a).numel()];
    for (b, g) in grad.chunks_exact(features).enumerate() {
        let offset = (b * steps + index) * features;
        da[offset..offset + features].copy_from_slice(g);
    }
    sink.send(a, da);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sum_all() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_slice([3], &[1.0, 2.0, 3.0]).unwrap());
        let s = tape.sum(x);
        assert_eq!(tape.shape(s), &[1]);
        assert_eq!(tape.data(s), &[6.0]);
    }

    #[test]
    fn mean_over_first_axis() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_slice([2, 2], &[1.0, 3.0, 5.0, 7.0]).unwrap());
        let m = tape.reduce(ReduceKind::Mean, x, Some(0)).unwrap();
        assert_eq!(tape.shape(m), &[2]);
        assert_eq!(tape.data(m), &[3.0, 5.0]);
    }

    #[test]
    fn max_routes_gradient_to_first_tie() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_slice([3], &[1.0, 5.0, 5.0]).unwrap());
        let m = tape.max(x);
        assert_eq!(tape.data(m), &[5.0]);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x), Some(&[0.0, 1.0, 0.0][..]));
    }

    #[test]
    fn axis_out_of_range() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros([2, 2]));
        assert!(matches!(
            tape.reduce(ReduceKind::Sum, x, Some(2)),
            Err(Error::AxisOutOfRange { axis: 2, rank: 2 })
        ));
    }

    #[test]
    fn max_over_middle_axis() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64).collect();
        let x = tape.variable(Tensor::from_slice([2, 3, 2], &data).unwrap());
        let m = tape.reduce(ReduceKind::Max, x, Some(1)).unwrap();
        assert_eq!(tape.shape(m), &[2, 2]);
        // columns of the first block: [0,4,3] and [2,1,0]
        assert_eq!(&tape.data(m)[..2], &[4.0, 2.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = tape.constant(Tensor::from_slice([2, 3, 4], &data).unwrap());
        let t = tape.transpose_last(x).unwrap();
        assert_eq!(tape.shape(t), &[2, 4, 3]);
        assert_eq!(tape.data(t)[1], 4.0);
        let back = tape.transpose_last(t).unwrap();
        assert_eq!(tape.data(back), &data[..]);
    }

    #[test]
    fn narrow_and_select() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let x = tape.constant(Tensor::from_slice([2, 3, 2], &data).unwrap());
        let s = tape.select_axis1(x, 1).unwrap();
        assert_eq!(tape.data(s), &[2.0, 3.0, 8.0, 9.0]);
        let n = tape.narrow_last(s, 1, 1).unwrap();
        assert_eq!(tape.data(n), &[3.0, 9.0]);
    }
}
