use rand::Rng;

use super::{gemm, he_normal, join, Mode, Module, ParamRole, Scalar, Tensor};
use crate::{Result, SerError};

/// Fully-connected layer: `y = x·Wᵀ + b` with `W` of shape `[out, in]`.
pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_features: usize,
    pub out_features: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> std::fmt::Debug for Linear<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Linear({}→{})", self.in_features, self.out_features)
    }
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(rng: &mut R, in_features: usize, out_features: usize) -> Result<Self> {
        let w = he_normal(rng, in_features * out_features, in_features);
        Self::from_weights(w, vec![T::zero(); out_features], in_features, out_features)
    }

    pub fn from_weights(weight: Vec<T>, bias: Vec<T>, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Linear {
            weight: Tensor::param(&[out_features, in_features], weight)?,
            bias: Tensor::param(&[out_features], bias)?,
            in_features,
            out_features,
            input: None,
        })
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let [n, d] = *x.shape() else {
            return Err(SerError::Shape(format!("linear expects [N, D], got {:?}", x.shape())));
        };
        if d != self.in_features {
            return Err(SerError::Shape(format!(
                "linear expects {} features, got {d}",
                self.in_features
            )));
        }
        let k = self.out_features;
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(self.bias.data());
        }
        gemm(false, true, n, k, d, x.data(), self.weight.data(), T::one(), &mut out);
        self.input = Some(x.clone());
        Tensor::from_vec(&[n, k], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| SerError::Shape("linear backward called before forward".into()))?;
        let (n, d, k) = (x.shape()[0], self.in_features, self.out_features);
        if grad_out.shape() != [n, k] {
            return Err(SerError::Shape("linear grad shape mismatch".into()));
        }
        let g = grad_out.data();
        gemm(true, false, k, d, n, g, x.data(), T::one(), self.weight.grad_mut());
        {
            let bg = self.bias.grad_mut();
            for row in g.chunks(k) {
                bg.iter_mut().zip(row).for_each(|(b, &v)| *b += v);
            }
        }
        let mut dx = vec![T::zero(); n * d];
        gemm(false, false, n, d, k, g, self.weight.data(), T::zero(), &mut dx);
        Tensor::from_vec(&[n, d], dx)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {
        f(&join(prefix, "weight"), &mut self.weight, ParamRole::Weight);
        f(&join(prefix, "bias"), &mut self.bias, ParamRole::Weight);
    }
}
