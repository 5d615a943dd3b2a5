//! Fused network operations with hand-written backward rules.

use super::{GradSink, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Which statistics a batch-norm node normalises with.
#[derive(Clone, Debug)]
pub enum BatchNormStats<T> {
    /// Statistics of the current batch (training).
    Batch { eps: T },
    /// Fixed running statistics (evaluation).
    Running { mean: Vec<T>, var: Vec<T>, eps: T },
}

/// Output length of a strided window over `length` elements.
pub fn window_output_len(length: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = length + 2 * padding;
    (kernel >= 1 && stride >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

fn rank3(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("{op} expects [batch, channels, length]"),
        }),
    }
}

struct ConvGeometry {
    in_channels: usize,
    length: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.in_channels * self.kernel
    }

    /// Output columns `lo..hi` whose tap `k` lands inside the input; column
    /// `j` reads position `j·stride + k − padding`.
    #[inline]
    fn valid_columns(&self, k: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(k).div_ceil(self.stride).min(self.out_len);
        let hi = if self.length + self.padding > k {
            ((self.length - 1 + self.padding - k) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Unrolls one `[in_channels, length]` item into `[in_channels·kernel, out_len]`.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        for c in 0..self.in_channels {
            let src = &x[c * self.length..(c + 1) * self.length];
            for k in 0..self.kernel {
                let row = &mut cols[(c * self.kernel + k) * self.out_len..][..self.out_len];
                let (lo, hi) = self.valid_columns(k);
                row[..lo].fill(T::zero());
                row[hi..].fill(T::zero());
                if lo < hi {
                    let start = lo * self.stride + k - self.padding;
                    if self.stride == 1 {
                        row[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (slot, &v) in row[lo..hi].iter_mut().zip(src[start..].iter().step_by(self.stride)) {
                            *slot = v;
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        for c in 0..self.in_channels {
            let dst = &mut dx[c * self.length..(c + 1) * self.length];
            for k in 0..self.kernel {
                let row = &cols[(c * self.kernel + k) * self.out_len..][..self.out_len];
                let (lo, hi) = self.valid_columns(k);
                if lo < hi {
                    let start = lo * self.stride + k - self.padding;
                    for (d, &g) in dst[start..].iter_mut().step_by(self.stride).zip(&row[lo..hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// 1-D cross-correlation with zero padding.
    ///
    /// `x: [batch, in, length]`, `weight: [out, in, kernel]`, `bias: [out]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (batch, in_channels, length) = rank3(self.shape(x), "conv1d")?;
        let (out_channels, w_in, kernel) = rank3(self.shape(weight), "conv1d weight")?;
        if w_in != in_channels {
            return Err(Error::ShapeMismatch {
                op: "conv1d channels",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(weight).to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::Config("conv1d stride must be ≥ 1".into()));
        }
        let out_len = window_output_len(length, kernel, stride, padding).ok_or_else(|| {
            Error::InputTooShort {
                length,
                reason: format!("kernel {kernel} exceeds padded input (padding {padding})"),
            }
        })?;
        if let Some(bias) = bias {
            if self.shape(bias) != [out_channels] {
                return Err(Error::ShapeMismatch {
                    op: "conv1d bias",
                    lhs: vec![out_channels],
                    rhs: self.shape(bias).to_vec(),
                });
            }
        }
        let geom = ConvGeometry {
            in_channels,
            length,
            kernel,
            stride,
            padding,
            out_len,
        };
        let xs = self.data(x);
        let ws = self.data(weight);
        let mut out = vec![T::zero(); batch * out_channels * out_len];
        let mut cols = vec![T::zero(); geom.rows() * out_len];
        for (item, dst) in xs
            .chunks_exact(in_channels * length)
            .zip(out.chunks_exact_mut(out_channels * out_len))
        {
            if let Some(bias) = bias {
                for (row, &b) in dst.chunks_exact_mut(out_len).zip(self.data(bias)) {
                    row.fill(b);
                }
            }
            geom.im2col(item, &mut cols);
            T::gemm(
                out_channels,
                geom.rows(),
                out_len,
                T::one(),
                ws,
                (geom.rows(), 1),
                &cols,
                (out_len, 1),
                T::one(),
                dst,
                out_len,
            );
        }
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push_op(
            vec![batch, out_channels, out_len],
            out,
            Op::Conv1d {
                x,
                weight,
                bias,
                stride,
                padding,
            },
            &inputs,
        ))
    }

    /// Unpadded max pooling along the last axis; ties go to the first element.
    pub fn max_pool1d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (batch, channels, length) = rank3(self.shape(x), "max_pool1d")?;
        if stride == 0 {
            return Err(Error::Config("max_pool1d stride must be ≥ 1".into()));
        }
        let out_len = window_output_len(length, kernel, stride, 0).ok_or_else(|| {
            Error::InputTooShort {
                length,
                reason: format!("pool kernel {kernel} exceeds input"),
            }
        })?;
        let xs = self.data(x);
        let mut out = Vec::with_capacity(batch * channels * out_len);
        let mut argmax = Vec::with_capacity(batch * channels * out_len);
        for (r, row) in xs.chunks_exact(length).enumerate() {
            for j in 0..out_len {
                let start = j * stride;
                let mut best = start;
                for p in start + 1..start + kernel {
                    if row[p] > row[best] {
                        best = p;
                    }
                }
                out.push(row[best]);
                argmax.push(r * length + best);
            }
        }
        Ok(self.push_op(
            vec![batch, channels, out_len],
            out,
            Op::MaxPool1d { x, argmax },
            &[x],
        ))
    }

    /// Per-channel normalisation of `x: [batch, channels, length]` followed by
    /// `gamma·x̂ + beta`.
    ///
    /// With batch statistics, also returns the batch mean and biased variance
    /// so the caller can update its running estimates.
    #[allow(clippy::type_complexity)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &BatchNormStats<T>,
    ) -> Result<(Var, Option<(Vec<T>, Vec<T>)>)> {
        let (batch, channels, length) = rank3(self.shape(x), "batch_norm")?;
        for (p, op) in [(gamma, "batch_norm gamma"), (beta, "batch_norm beta")] {
            if self.shape(p) != [channels] {
                return Err(Error::ShapeMismatch {
                    op,
                    lhs: vec![channels],
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let count = batch * length;
        let xs = self.data(x);
        let at = |b: usize, c: usize| (b * channels + c) * length;

        let (mean, var, eps, batch_stats) = match stats {
            BatchNormStats::Batch { eps } => {
                if count < 2 {
                    return Err(Error::InputTooShort {
                        length: count,
                        reason: "batch norm needs at least two values per channel in training".into(),
                    });
                }
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for c in 0..channels {
                    let mut s = T::zero();
                    for b in 0..batch {
                        s += xs[at(b, c)..at(b, c) + length].iter().copied().sum::<T>();
                    }
                    let m = s / n;
                    let mut ss = T::zero();
                    for b in 0..batch {
                        for &v in &xs[at(b, c)..at(b, c) + length] {
                            ss += (v - m) * (v - m);
                        }
                    }
                    mean[c] = m;
                    var[c] = ss / n;
                }
                (mean, var, *eps, true)
            }
            BatchNormStats::Running { mean, var, eps } => {
                if mean.len() != channels || var.len() != channels {
                    return Err(Error::ShapeMismatch {
                        op: "batch_norm running stats",
                        lhs: vec![channels],
                        rhs: vec![mean.len()],
                    });
                }
                (mean.clone(), var.clone(), *eps, false)
            }
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gs = self.data(gamma);
        let bs = self.data(beta);
        let mut normalized = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for b in 0..batch {
            for c in 0..channels {
                let range = at(b, c)..at(b, c) + length;
                for i in range {
                    let xh = (xs[i] - mean[c]) * inv_std[c];
                    normalized[i] = xh;
                    out[i] = gs[c] * xh + bs[c];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        let var_out = self.push_op(
            shape,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        );
        Ok((var_out, batch_stats.then_some((mean, var))))
    }

    /// Mean over the batch of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (batch, classes) = match *self.shape(logits) {
            [b, k] => (b, k),
            _ => {
                return Err(Error::InvalidShape {
                    shape: self.shape(logits).to_vec(),
                    reason: "cross entropy expects [batch, classes]".into(),
                })
            }
        };
        if targets.len() != batch {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy targets",
                lhs: vec![batch],
                rhs: vec![targets.len()],
            });
        }
        if let Some(&index) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::ClassOutOfRange { index, classes });
        }
        let probs = softmax_rows(self.data(logits), classes);
        let mut loss = T::zero();
        for (row, &t) in self.data(logits).chunks_exact(classes).zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
            loss += lse - row[t];
        }
        loss /= T::from_usize(batch).unwrap();
        Ok(self.push_op(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&z| (z - max).exp()));
        let total: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|p| *p /= total);
    }
    out
}

pub(super) fn conv1d_backward<T: Scalar>(
    x: Var,
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    padding: usize,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let (in_channels, length) = (sink.value(x).shape()[1], sink.value(x).shape()[2]);
    let (out_channels, kernel) = (sink.value(weight).shape()[0], sink.value(weight).shape()[2]);
    let out_len = window_output_len(length, kernel, stride, padding).unwrap();
    let geom = ConvGeometry {
        in_channels,
        length,
        kernel,
        stride,
        padding,
        out_len,
    };
    let rows = geom.rows();
    let want_x = sink.wants(x);
    let want_w = sink.wants(weight);

    let xs = sink.value(x).data();
    let ws = sink.value(weight).data();
    let mut dx = want_x.then(|| vec![T::zero(); xs.len()]);
    let mut dw = want_w.then(|| vec![T::zero(); ws.len()]);
    let mut cols = vec![T::zero(); rows * out_len];
    let mut dcols = vec![T::zero(); rows * out_len];

    for (b, g) in grad.chunks_exact(out_channels * out_len).enumerate() {
        if let Some(dw) = dw.as_mut() {
            geom.im2col(&xs[b * in_channels * length..][..in_channels * length], &mut cols);
            // dW += g · colsᵀ
            T::gemm(
                out_channels,
                out_len,
                rows,
                T::one(),
                g,
                (out_len, 1),
                &cols,
                (1, out_len),
                T::one(),
                dw,
                rows,
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · g
            T::gemm(
                rows,
                out_channels,
                out_len,
                T::one(),
                ws,
                (1, rows),
                g,
                (out_len, 1),
                T::zero(),
                &mut dcols,
                out_len,
            );
            geom.col2im(&dcols, &mut dx[b * in_channels * length..][..in_channels * length]);
        }
    }
    let db = bias.filter(|&b| sink.wants(b)).map(|_| {
        let mut db = vec![T::zero(); out_channels];
        for item in grad.chunks_exact(out_channels * out_len) {
            for (d, row) in db.iter_mut().zip(item.chunks_exact(out_len)) {
                *d += row.iter().copied().sum::<T>();
            }
        }
        db
    });

    if let Some(dx) = dx {
        sink.send(x, dx);
    }
    if let Some(dw) = dw {
        sink.send(weight, dw);
    }
    if let (Some(bias), Some(db)) = (bias, db) {
        sink.send(bias, db);
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batch_norm_backward<T: Scalar>(
    x: Var,
    gamma: Var,
    beta: Var,
    normalized: &[T],
    inv_std: &[T],
    batch_stats: bool,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let shape = sink.value(x).shape();
    let (batch, channels, length) = (shape[0], shape[1], shape[2]);
    let gs = sink.value(gamma).data();
    let n = T::from_usize(batch * length).unwrap();

    let mut sum_g = vec![T::zero(); channels];
    let mut sum_g_xhat = vec![T::zero(); channels];
    for b in 0..batch {
        for c in 0..channels {
            let start = (b * channels + c) * length;
            for i in start..start + length {
                sum_g[c] += grad[i];
                sum_g_xhat[c] += grad[i] * normalized[i];
            }
        }
    }

    if sink.wants(x) {
        let mut dx = vec![T::zero(); grad.len()];
        for b in 0..batch {
            for c in 0..channels {
                let start = (b * channels + c) * length;
                let k = gs[c] * inv_std[c];
                for i in start..start + length {
                    dx[i] = if batch_stats {
                        k / n * (n * grad[i] - sum_g[c] - normalized[i] * sum_g_xhat[c])
                    } else {
                        k * grad[i]
                    };
                }
            }
        }
        sink.send(x, dx);
    }
    sink.send(gamma, sum_g_xhat);
    sink.send(beta, sum_g);
}

pub(super) fn cross_entropy_backward<T: Scalar>(
    logits: Var,
    targets: &[usize],
    probs: &[T],
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let classes = sink.value(logits).shape()[1];
    let scale = grad[0] / T::from_usize(targets.len()).unwrap();
    let mut d = probs.to_vec();
    for (row, &t) in d.chunks_exact_mut(classes).zip(targets) {
        row[t] -= T::one();
        row.iter_mut().for_each(|v| *v *= scale);
    }
    sink.send(logits, d);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t3(shape: [usize; 3], data: &[f64]) -> Tensor<f64> {
        Tensor::from_slice(shape, data).unwrap()
    }

    #[test]
    fn output_length_formula() {
        assert_eq!(window_output_len(256, 11, 2, 5), Some(128));
        assert_eq!(window_output_len(128, 7, 3, 0), Some(41));
        assert_eq!(window_output_len(41, 7, 3, 0), Some(12));
        assert_eq!(window_output_len(5, 7, 3, 0), None);
    }

    #[test]
    fn hand_convolution() {
        let mut tape = Tape::new();
        let x = tape.constant(t3([1, 1, 3], &[1.0, 2.0, 3.0]));
        let w = tape.constant(t3([1, 1, 3], &[1.0, 0.0, -1.0]));
        let y = tape.conv1d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1]);
        assert_eq!(tape.data(y), &[-2.0]);
    }

    #[test]
    fn centred_delta_kernel_is_identity() {
        for k in [3usize, 5, 11] {
            let mut kernel = vec![0.0; k];
            kernel[k / 2] = 1.0;
            let input: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut tape = Tape::new();
            let x = tape.constant(t3([1, 1, 20], &input));
            let w = tape.constant(t3([1, 1, k], &kernel));
            let y = tape.conv1d(x, w, None, 1, k / 2).unwrap();
            assert_eq!(tape.data(y), &input[..]);
        }
    }

    #[test]
    fn conv_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros([1, 2, 8]));
        let w = tape.constant(Tensor::<f64>::zeros([4, 3, 3]));
        assert!(matches!(
            tape.conv1d(x, w, None, 1, 1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn conv_window_larger_than_input() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros([1, 1, 4]));
        let w = tape.constant(Tensor::<f64>::zeros([1, 1, 11]));
        assert!(matches!(
            tape.conv1d(x, w, None, 1, 2),
            Err(Error::InputTooShort { .. })
        ));
    }

    #[test]
    fn pool_single_window() {
        let mut tape = Tape::new();
        let x = tape.variable(t3([1, 1, 9], &[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0]));
        let y = tape.max_pool1d(x, 7, 3).unwrap();
        assert_eq!(tape.data(y), &[9.0]);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap()[5], 1.0);
        assert_eq!(tape.grad(x).unwrap().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn pool_shorter_than_kernel() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros([1, 1, 6]));
        assert!(tape.max_pool1d(x, 7, 3).is_err());
    }

    fn bn(
        data: &[f64],
        shape: [usize; 3],
        gamma: f64,
        beta: f64,
        stats: BatchNormStats<f64>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(t3(shape, data));
        let g = tape.constant(Tensor::full([shape[1]], gamma));
        let b = tape.constant(Tensor::full([shape[1]], beta));
        let (y, _) = tape.batch_norm(x, g, b, &stats)?;
        Ok(tape.data(y).to_vec())
    }

    #[test]
    fn batch_norm_two_values() {
        let out = bn(&[1.0, 3.0], [1, 1, 2], 1.0, 0.0, BatchNormStats::Batch { eps: 1e-5 }).unwrap();
        // var = 1, so x̂ = ±1/sqrt(1 + 1e-5)
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0] + expected).abs() < 1e-12);
        assert!((out[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_zero_gamma() {
        let out = bn(&[1.0, 3.0, 4.0], [1, 1, 3], 0.0, 0.5, BatchNormStats::Batch { eps: 1e-5 }).unwrap();
        assert_eq!(out, vec![0.5; 3]);
    }

    #[test]
    fn batch_norm_eval_identity_stats() {
        let data = [0.3, -1.2, 4.0, 2.5];
        let out = bn(
            &data,
            [2, 1, 2],
            1.0,
            0.0,
            BatchNormStats::Running {
                mean: vec![0.0],
                var: vec![1.0],
                eps: 1e-5,
            },
        )
        .unwrap();
        for (o, x) in out.iter().zip(data) {
            assert!((o - x).abs() < 1e-4 * x.abs().max(1.0));
        }
    }

    #[test]
    fn batch_norm_needs_two_values_in_training() {
        assert!(bn(&[1.0], [1, 1, 1], 1.0, 0.0, BatchNormStats::Batch { eps: 1e-5 }).is_err());
    }

    fn ce(logits: &[f64], classes: usize, targets: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::from_slice([targets.len(), classes], logits).unwrap());
        let loss = tape.cross_entropy(l, targets)?;
        Ok(tape.data(loss)[0])
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let loss = ce(&[0.0; 52], 52, &[7]).unwrap();
        assert!((loss - 52f64.ln()).abs() < 1e-12);
        assert!((loss - 3.9512).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logit_gives_near_zero_loss() {
        let mut logits = vec![0.0; 52];
        logits[3] = 100.0;
        assert!(ce(&logits, 52, &[3]).unwrap() < 1e-40);
    }

    #[test]
    fn loss_is_shift_invariant() {
        let logits = [0.3, -1.0, 2.0, 0.5, 0.0, 1.0];
        let shifted: Vec<f64> = logits.iter().map(|z| z + 17.25).collect();
        let a = ce(&logits, 3, &[2, 0]).unwrap();
        let b = ce(&shifted, 3, &[2, 0]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn target_out_of_range() {
        assert!(matches!(
            ce(&[0.0; 3], 3, &[3]),
            Err(Error::ClassOutOfRange { index: 3, classes: 3 })
        ));
    }

    proptest::proptest! {
        #[test]
        fn unrolling_matches_direct_indexing(
            length in 1usize..40,
            kernel in 1usize..12,
            stride in 1usize..4,
            pad in 0usize..12,
        ) {
            let padding = pad % kernel;
            let Some(out_len) = window_output_len(length, kernel, stride, padding) else {
                return Ok(());
            };
            let geom = ConvGeometry { in_channels: 2, length, kernel, stride, padding, out_len };
            let x: Vec<f64> = (0..2 * length).map(|i| i as f64 + 1.0).collect();
            let mut cols = vec![f64::NAN; geom.rows() * out_len];
            geom.im2col(&x, &mut cols);
            let mut back = vec![0.0; 2 * length];
            let ones = vec![1.0; cols.len()];
            geom.col2im(&ones, &mut back);
            let mut expected_back = vec![0.0; 2 * length];
            for c in 0..2 {
                for k in 0..kernel {
                    for j in 0..out_len {
                        let pos = (j * stride + k) as isize - padding as isize;
                        let inside = pos >= 0 && (pos as usize) < length;
                        let want = if inside { x[c * length + pos as usize] } else { 0.0 };
                        proptest::prop_assert_eq!(cols[(c * kernel + k) * out_len + j], want);
                        if inside {
                            expected_back[c * length + pos as usize] += 1.0;
                        }
                    }
                }
            }
            proptest::prop_assert_eq!(back, expected_back);
        }
    }
}
