//! A small reverse-mode layer library over `[N, C, H, W]` tensors.
//!
//! Layers cache what their backward pass needs during `forward` and
//! accumulate parameter gradients into each parameter tensor's `grad`
//! buffer during `backward`. Topology is fixed by the caller; there is no
//! tape.

mod batchnorm;
mod checkpoint;
mod conv;
mod gemm;
mod gradcheck;
mod init;
mod linear;
mod pool;
mod relu;
mod scalar;
mod tensor;

pub use batchnorm::BatchNorm2d;
pub use checkpoint::{Checkpoint, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{conv_out_len, Conv2d};
pub use gradcheck::{check_module, check_module_sampled, grad_check, GradReport};
pub use init::he_normal;
pub use linear::Linear;
pub use pool::{GlobalAvgPool, MaxPool2d};
pub use relu::Relu;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub(crate) use gemm::gemm;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    /// Trainable, has a gradient buffer.
    Weight,
    /// Persistent state updated outside the optimizer (BN running stats).
    Buffer,
}

pub trait Module<T: Scalar> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Consumes the gradient w.r.t. the last forward output, accumulates
    /// parameter gradients and returns the gradient w.r.t. its input.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    /// Visits every parameter and buffer in a fixed order under `prefix`.
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, t, role| {
            if role == ParamRole::Weight {
                t.zero_grad();
            }
        });
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t, role| {
            if role == ParamRole::Weight {
                n += t.len();
            }
        });
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
