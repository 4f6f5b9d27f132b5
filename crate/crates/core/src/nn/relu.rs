use super::{Mode, Module, ParamRole, Scalar, Tensor};
use crate::{Result, SerError};

#[derive(Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

impl<T: Scalar> Module<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let mask: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
        let out = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m || v.is_nan() { v } else { T::zero() })
            .collect();
        self.mask = Some(mask);
        Tensor::from_vec(x.shape(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| SerError::Shape("relu backward called before forward".into()))?;
        if mask.len() != grad_out.len() {
            return Err(SerError::Shape("relu grad shape mismatch".into()));
        }
        let dx = grad_out
            .data()
            .iter()
            .zip(&mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        Tensor::from_vec(grad_out.shape(), dx)
    }

    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {}
}
