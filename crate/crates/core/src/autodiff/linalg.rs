use super::{GradSink, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

fn matrix_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match *shape {
        [rows, cols] => Ok((rows, cols)),
        _ => Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("{op} expects a matrix"),
        }),
    }
}

impl<T: Scalar> Tape<T> {
    /// `[m, k] · [k, n] → [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.shape(a), "matmul")?;
        let (k2, n) = matrix_dims(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.data(a),
            (k, 1),
            self.data(b),
            (n, 1),
            T::zero(),
            &mut out,
            n,
        );
        Ok(self.push_op(vec![m, n], out, Op::MatMul { a, b }, &[a, b]))
    }

    /// Affine map `x · weightᵀ + bias` with `x: [n, in]`, `weight: [out, in]`,
    /// `bias: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, fan_in) = matrix_dims(self.shape(x), "linear")?;
        let (fan_out, w_in) = matrix_dims(self.shape(weight), "linear")?;
        if fan_in != w_in {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(weight).to_vec(),
            });
        }
        let mut out = vec![T::zero(); n * fan_out];
        if let Some(bias) = bias {
            if self.shape(bias) != [fan_out] {
                return Err(Error::ShapeMismatch {
                    op: "linear bias",
                    lhs: vec![fan_out],
                    rhs: self.shape(bias).to_vec(),
                });
            }
            let bv = self.data(bias);
            for row in out.chunks_exact_mut(fan_out) {
                row.copy_from_slice(bv);
            }
        }
        T::gemm(
            n,
            fan_in,
            fan_out,
            T::one(),
            self.data(x),
            (fan_in, 1),
            self.data(weight),
            (1, fan_in),
            T::one(),
            &mut out,
            fan_out,
        );
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push_op(
            vec![n, fan_out],
            out,
            Op::Linear { x, weight, bias },
            &inputs,
        ))
    }
}

pub(super) fn matmul_backward<T: Scalar>(a: Var, b: Var, grad: &[T], sink: &mut GradSink<'_, T>) {
    let (m, k) = (sink.value(a).shape()[0], sink.value(a).shape()[1]);
    let n = sink.value(b).shape()[1];
    if sink.wants(a) {
        // dA = dC · Bᵀ
        let mut da = vec![T::zero(); m * k];
        T::gemm(
            m,
            n,
            k,
            T::one(),
            grad,
            (n, 1),
            sink.value(b).data(),
            (1, n),
            T::zero(),
            &mut da,
            k,
        );
        sink.send(a, da);
    }
    if sink.wants(b) {
        // dB = Aᵀ · dC
        let mut db = vec![T::zero(); k * n];
        T::gemm(
            k,
            m,
            n,
            T::one(),
            sink.value(a).data(),
            (1, k),
            grad,
            (n, 1),
            T::zero(),
            &mut db,
            n,
        );
        sink.send(b, db);
    }
}

pub(super) fn linear_backward<T: Scalar>(
    x: Var,
    weight: Var,
    bias: Option<Var>,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let (n, fan_in) = (sink.value(x).shape()[0], sink.value(x).shape()[1]);
    let fan_out = sink.value(weight).shape()[0];
    if sink.wants(x) {
        let mut dx = vec![T::zero(); n * fan_in];
        T::gemm(
            n,
            fan_out,
            fan_in,
            T::one(),
            grad,
            (fan_out, 1),
            sink.value(weight).data(),
            (fan_in, 1),
            T::zero(),
            &mut dx,
            fan_in,
        );
        sink.send(x, dx);
    }
    if sink.wants(weight) {
        let mut dw = vec![T::zero(); fan_out * fan_in];
        T::gemm(
            fan_out,
            n,
            fan_in,
            T::one(),
            grad,
            (1, fan_out),
            sink.value(x).data(),
            (fan_in, 1),
            T::zero(),
            &mut dw,
            fan_in,
        );
        sink.send(weight, dw);
    }
    if let Some(bias) = bias.filter(|&b| sink.wants(b)) {
        let mut db = vec![T::zero(); fan_out];
        for row in grad.chunks_exact(fan_out) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
        sink.send(bias, db);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn mat(tape: &mut Tape<f64>, rows: usize, cols: usize, data: &[f64]) -> Var {
        tape.constant(Tensor::from_slice([rows, cols], data).unwrap())
    }

    #[test]
    fn identity_product() {
        let mut tape = Tape::new();
        let i = mat(&mut tape, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = mat(&mut tape, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = tape.matmul(i, m).unwrap();
        assert_eq!(tape.data(p), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn hand_product() {
        let mut tape = Tape::new();
        let a = mat(&mut tape, 1, 2, &[1.0, 2.0]);
        let b = mat(&mut tape, 2, 1, &[3.0, 4.0]);
        let p = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(p), &[1, 1]);
        assert_eq!(tape.data(p), &[11.0]);
    }

    #[test]
    fn zero_matrix_product() {
        let mut tape = Tape::new();
        let z = mat(&mut tape, 3, 4, &[0.0; 12]);
        let b = mat(&mut tape, 4, 2, &[1.5, -2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let p = tape.matmul(z, b).unwrap();
        assert_eq!(tape.shape(p), &[3, 2]);
        assert!(tape.data(p).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inner_dimension_mismatch() {
        let mut tape = Tape::new();
        let a = mat(&mut tape, 2, 3, &[0.0; 6]);
        let b = mat(&mut tape, 2, 3, &[0.0; 6]);
        assert!(matches!(
            tape.matmul(a, b),
            Err(Error::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn linear_matches_matmul_plus_bias() {
        let mut tape = Tape::new();
        let x = mat(&mut tape, 2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let w = mat(&mut tape, 2, 3, &[0.1, 0.2, 0.3, -0.4, 0.5, -0.6]);
        let b = tape.constant(Tensor::from_slice([2], &[1.0, -1.0]).unwrap());
        let y = tape.linear(x, w, Some(b)).unwrap();
        let expected = [
            0.1 + 0.4 + 0.9 + 1.0,
            -0.4 + 1.0 - 1.8 - 1.0,
            -0.1 + 0.1 + 0.6 + 1.0,
            0.4 + 0.25 - 1.2 - 1.0,
        ];
        for (got, want) in tape.data(y).iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
