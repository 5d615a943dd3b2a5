use super::{GradSink, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Neg,
    Exp,
    /// `sign(x)·ln(|x| + 1)`
    Log1pSigned,
    /// `sign(x)·(e^|x| − 1)`, the inverse of [`UnaryKind::Log1pSigned`].
    Exp1mSigned,
    Relu,
    Tanh,
    Sigmoid,
}

pub fn log1p_signed<T: Scalar>(x: T) -> T {
    x.signum() * x.abs().ln_1p()
}

pub fn exp1m_signed<T: Scalar>(x: T) -> T {
    x.signum() * x.abs().exp_m1()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl UnaryKind {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log1pSigned => log1p_signed(x),
            UnaryKind::Exp1mSigned => exp1m_signed(x),
            UnaryKind::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            UnaryKind::Neg => -T::one(),
            UnaryKind::Exp => y,
            UnaryKind::Log1pSigned => T::one() / (x.abs() + T::one()),
            UnaryKind::Exp1mSigned => y.abs() + T::one(),
            // zero at the kink
            UnaryKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::Tanh => T::one() - y * y,
            UnaryKind::Sigmoid => y * (T::one() - y),
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Pointwise binary operation. `b` may also be a one-element tensor,
    /// which is broadcast against `a`.
    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.shape() == [1] {
            true
        } else {
            return Err(Error::ShapeMismatch {
                op: "binary",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let rhs = |i: usize| if broadcast { bv.data()[0] } else { bv.data()[i] };
        if kind == BinaryKind::Div {
            if let Some(index) = (0..av.numel()).find(|&i| rhs(i) == T::zero()) {
                return Err(Error::DivisionByZero { index });
            }
        }
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = rhs(i);
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let shape = av.shape().to_vec();
        Ok(self.push_op(
            shape,
            data,
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            },
            &[a, b],
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| kind.apply(x)).collect();
        let shape = av.shape().to_vec();
        self.push_op(shape, data, Op::Unary { kind, a }, &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log1p_signed(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Log1pSigned, a)
    }

    pub fn exp1m_signed(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp1mSigned, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, a)
    }
}

pub(super) fn binary_backward<T: Scalar>(
    kind: BinaryKind,
    a: Var,
    b: Var,
    broadcast: bool,
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let av = sink.value(a).data();
    let bv = sink.value(b).data();
    let rhs = |i: usize| if broadcast { bv[0] } else { bv[i] };

    let da: Option<Vec<T>> = sink.wants(a).then(|| {
        grad.iter()
            .enumerate()
            .map(|(i, &g)| match kind {
                BinaryKind::Add | BinaryKind::Sub => g,
                BinaryKind::Mul => g * rhs(i),
                BinaryKind::Div => g / rhs(i),
            })
            .collect()
    });
    let db: Option<Vec<T>> = sink.wants(b).then(|| {
        let full = grad.iter().enumerate().map(|(i, &g)| match kind {
            BinaryKind::Add => g,
            BinaryKind::Sub => -g,
            BinaryKind::Mul => g * av[i],
            BinaryKind::Div => {
                let y = rhs(i);
                -g * av[i] / (y * y)
            }
        });
        if broadcast {
            vec![full.sum()]
        } else {
            full.collect()
        }
    });
    if let Some(da) = da {
        sink.send(a, da);
    }
    if let Some(db) = db {
        sink.send(b, db);
    }
}

pub(super) fn unary_backward<T: Scalar>(
    kind: UnaryKind,
    a: Var,
    output: &[T],
    grad: &[T],
    sink: &mut GradSink<'_, T>,
) {
    let input = sink.value(a).data();
    let da = grad
        .iter()
        .zip(input.iter().zip(output))
        .map(|(&g, (&x, &y))| g * kind.derivative(x, y))
        .collect();
    sink.send(a, da);
}
