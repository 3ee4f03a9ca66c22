use crate::error::{Result, TensorError};
use crate::shape::{broadcast_shapes, BroadcastMap};
use crate::tensor::Tensor;

/// Elementwise op kinds accepted by [`Tensor::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Relu,
    Gelu,
    Square,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul | Self::Div)
    }
}

const GELU_COEFF: f64 = 0.044715;
// sqrt(2 / pi)
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;

#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SCALE * (1.0 + 3.0 * GELU_COEFF * x * x)
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    #[inline]
    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        }
    }
}

fn binary(a: &Tensor, b: &Tensor, kind: Binary) -> Result<Tensor> {
    let out_shape = broadcast_shapes(a.shape(), b.shape())?;
    let n: usize = out_shape.iter().product();
    let ma = BroadcastMap::new(&out_shape, a.shape());
    let mb = BroadcastMap::new(&out_shape, b.shape());
    let (ad, bd) = (a.data(), b.data());
    let data: Vec<f64> = match (&ma, &mb) {
        (BroadcastMap::Identity, BroadcastMap::Identity) => {
            ad.iter().zip(bd).map(|(&x, &y)| kind.apply(x, y)).collect()
        }
        _ => (0..n).map(|i| kind.apply(ad[ma.get(i)], bd[mb.get(i)])).collect(),
    };
    let (na, nb) = (a.numel(), b.numel());
    Tensor::from_op(
        data,
        &out_shape,
        kind.name(),
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents, _| {
            let (x, y) = (parents[0].data(), parents[1].data());
            let mut ga = parents[0].tracks_grad().then(|| vec![0.0; na]);
            let mut gb = parents[1].tracks_grad().then(|| vec![0.0; nb]);
            for (i, &gi) in g.iter().enumerate() {
                let (ia, ib) = (ma.get(i), mb.get(i));
                let (dx, dy) = match kind {
                    Binary::Add => (gi, gi),
                    Binary::Sub => (gi, -gi),
                    Binary::Mul => (gi * y[ib], gi * x[ia]),
                    Binary::Div => (gi / y[ib], -gi * x[ia] / (y[ib] * y[ib])),
                };
                if let Some(ga) = ga.as_mut() {
                    ga[ia] += dx;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] += dy;
                }
            }
            vec![ga, gb]
        }),
    )
}

fn unary(
    a: &Tensor,
    name: &'static str,
    f: impl Fn(f64) -> f64,
    df: fn(f64, f64) -> f64,
) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(
        data,
        a.shape(),
        name,
        vec![a.clone()],
        Box::new(move |g, parents, out| {
            let x = parents[0].data();
            let grad = g
                .iter()
                .zip(x.iter().zip(out))
                .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
                .collect();
            vec![Some(grad)]
        }),
    )
    .expect("unary op preserves shape")
}

impl Tensor {
    /// Dispatches an elementwise op by kind. Binary kinds require `b`.
    pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        if op.is_binary() {
            let b = b.ok_or_else(|| {
                TensorError::shape("elementwise", format!("{op:?} needs a second operand"))
            })?;
            return match op {
                ElementwiseOp::Add => a.add(b),
                ElementwiseOp::Sub => a.sub(b),
                ElementwiseOp::Mul => a.mul(b),
                _ => a.div(b),
            };
        }
        Ok(match op {
            ElementwiseOp::Neg => a.neg(),
            ElementwiseOp::Exp => a.exp(),
            ElementwiseOp::Ln => a.ln(),
            ElementwiseOp::Sin => a.sin(),
            ElementwiseOp::Cos => a.cos(),
            ElementwiseOp::Tanh => a.tanh(),
            ElementwiseOp::Sqrt => a.sqrt(),
            ElementwiseOp::Relu => a.relu(),
            ElementwiseOp::Gelu => a.gelu(),
            _ => a.square(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Div)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, "add_scalar", move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            data,
            self.shape(),
            "mul_scalar",
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(g.iter().map(|&v| v * c).collect())]),
        )
        .expect("shape preserved")
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn exp(&self) -> Tensor {
        unary(self, "exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        unary(self, "ln", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sin(&self) -> Tensor {
        unary(self, "sin", f64::sin, |x, _| x.cos())
    }

    pub fn cos(&self) -> Tensor {
        unary(self, "cos", f64::cos, |x, _| -x.sin())
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, "tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sqrt(&self) -> Tensor {
        unary(self, "sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(&self) -> Tensor {
        unary(self, "square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn powf(&self, p: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x.powf(p)).collect();
        Tensor::from_op(
            data,
            self.shape(),
            "powf",
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let x = parents[0].data();
                vec![Some(
                    g.iter().zip(x).map(|(&gi, &xi)| gi * p * xi.powf(p - 1.0)).collect(),
                )]
            }),
        )
        .expect("shape preserved")
    }

    pub fn relu(&self) -> Tensor {
        unary(self, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// GELU, tanh approximation with cubic coefficient 0.044715.
    pub fn gelu(&self) -> Tensor {
        unary(self, "gelu", gelu_scalar, |x, _| gelu_grad_scalar(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_small_vectors() {
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let x = Tensor::new(vec![0.5, -1.5, 2.25, 3.0], &[2, 2]).unwrap();
        assert_eq!(x.mul(&x.ones_like()).unwrap().data(), x.data());
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        let msg = a.add(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn gelu_zero_and_symmetry() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        let x = 1.3;
        assert!((gelu_scalar(x) - gelu_scalar(-x) - x).abs() < 1e-15);
    }

    #[test]
    fn binary_dispatch_requires_operand() {
        let a = Tensor::from_slice(&[1.0]);
        assert!(Tensor::elementwise(ElementwiseOp::Add, &a, None).is_err());
        let e = Tensor::elementwise(ElementwiseOp::Exp, &a, None).unwrap();
        assert!((e.item() - std::f64::consts::E).abs() < 1e-15);
    }
}
