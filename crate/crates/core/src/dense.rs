//! Fully connected layers and their activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    None,
}

/// Logistic function, kept strictly inside (0, 1) even where the exact value
/// rounds to an endpoint.
#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    let y = if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    };
    let eps = F::epsilon();
    y.max(eps).min(F::one() - eps)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<F: Scalar>(z: &[F]) -> Vec<F> {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: F = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v = *v / sum);
    out
}

impl Activation {
    pub fn apply<F: Scalar>(self, z: &[F]) -> Vec<F> {
        match self {
            Activation::Relu => z.iter().map(|&v| v.max(F::zero())).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => softmax(z),
            Activation::None => z.to_vec(),
        }
    }

    /// Maps the gradient w.r.t. the activation output `y` back onto the
    /// pre-activation `z`.
    fn backward<F: Scalar>(self, z: &[F], y: &[F], dy: &[F]) -> Vec<F> {
        match self {
            Activation::Relu => z
                .iter()
                .zip(dy)
                .map(|(&zi, &g)| if zi > F::zero() { g } else { F::zero() })
                .collect(),
            Activation::Sigmoid => y
                .iter()
                .zip(dy)
                .map(|(&yi, &g)| g * yi * (F::one() - yi))
                .collect(),
            Activation::Softmax => {
                let inner = dot(dy, y);
                y.iter().zip(dy).map(|(&yi, &g)| yi * (g - inner)).collect()
            }
            Activation::None => dy.to_vec(),
        }
    }
}

/// Weights of one feed-forward layer: `activation(W x + b)` with `W` of shape
/// `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F = f32> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
    pub activation: Activation,
}

impl<F: Scalar> DenseParams<F> {
    pub fn zeros(in_size: usize, out_size: usize, activation: Activation) -> Self {
        DenseParams {
            w: Tensor::zeros(&[out_size, in_size]),
            b: Tensor::zeros(&[out_size]),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_size: usize,
        out_size: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(in_size, out_size, activation);
        glorot_fill(&mut p.w, in_size, out_size, rng);
        p
    }

    pub fn in_size(&self) -> usize {
        self.w.cols()
    }

    pub fn out_size(&self) -> usize {
        self.w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_size(), self.out_size(), self.activation)
    }

    pub fn cast<G: Scalar>(&self) -> DenseParams<G> {
        DenseParams {
            w: self.w.cast(),
            b: self.b.cast(),
            activation: self.activation,
        }
    }
}

pub(crate) fn glorot_fill<F: Scalar, R: Rng + ?Sized>(
    t: &mut Tensor<F>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = F::lit(rng.random_range(-limit..limit));
    }
}

/// Values recorded by a forward pass for use in [`dense_backward`].
#[derive(Debug, Clone)]
pub struct DenseTrace<F> {
    pub input: Vec<F>,
    pub pre: Vec<F>,
    pub output: Vec<F>,
}

pub fn dense_forward<F: Scalar>(x: &[F], p: &DenseParams<F>) -> Result<Vec<F>> {
    Ok(dense_forward_trace(x, p)?.output)
}

pub fn dense_forward_trace<F: Scalar>(x: &[F], p: &DenseParams<F>) -> Result<DenseTrace<F>> {
    if x.len() != p.in_size() {
        return Err(Error::dim("dense_forward", p.w.shape(), &[x.len()]));
    }
    let pre: Vec<F> = (0..p.out_size())
        .map(|r| dot(p.w.row(r), x) + p.b.data()[r])
        .collect();
    let output = p.activation.apply(&pre);
    Ok(DenseTrace {
        input: x.to_vec(),
        pre,
        output,
    })
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// w.r.t. the layer input.
pub fn dense_backward<F: Scalar>(
    trace: &DenseTrace<F>,
    p: &DenseParams<F>,
    dy: &[F],
    grads: &mut DenseParams<F>,
) -> Vec<F> {
    let dz = p.activation.backward(&trace.pre, &trace.output, dy);
    let in_size = p.in_size();
    let mut dx = vec![F::zero(); in_size];
    for (r, &g) in dz.iter().enumerate() {
        if g == F::zero() {
            continue;
        }
        axpy(
            g,
            &trace.input,
            &mut grads.w.data_mut()[r * in_size..(r + 1) * in_size],
        );
        grads.b.data_mut()[r] += g;
        axpy(g, p.w.row(r), &mut dx);
    }
    dx
}
