use rand::Rng;

use super::{gemm, he_normal, join, Mode, Module, ParamRole, Scalar, Tensor};
use crate::par::Exec;
use crate::{Result, SerError};

/// Output extent of a convolution or pooling window along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

struct ConvCache<T> {
    input_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
    /// Per-sample im2col matrices, `[C·k·k, H'·W']` each.
    cols: Vec<Vec<T>>,
}

/// 2-D cross-correlation with zero padding, square kernels, im2col + GEMM.
pub struct Conv2d<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub exec: Exec,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> std::fmt::Debug for Conv2d<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Conv2d({}→{}, k={}, s={}, p={}, bias={})",
            self.in_channels,
            self.out_channels,
            self.kernel,
            self.stride,
            self.pad,
            self.bias.is_some()
        )
    }
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal initialized convolution without bias.
    pub fn new<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let w = he_normal(rng, out_channels * fan_in, fan_in);
        Self::from_weights(w, None, in_channels, out_channels, kernel, stride, pad)
    }

    pub fn from_weights(
        weight: Vec<T>,
        bias: Option<Vec<T>>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 || kernel == 0 {
            return Err(SerError::Config("conv kernel and stride must be ≥ 1".into()));
        }
        let weight = Tensor::param(&[out_channels, in_channels, kernel, kernel], weight)?;
        let bias = bias.map(|b| Tensor::param(&[out_channels], b)).transpose()?;
        Ok(Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            exec: Exec::default(),
            cache: None,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (n, c, h, w) = match *input {
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(SerError::Shape(format!("conv2d expects 4-D input, got {input:?}"))),
        };
        if c != self.in_channels {
            return Err(SerError::Shape(format!(
                "conv2d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let oh = conv_out_len(h, self.kernel, self.stride, self.pad);
        let ow = conv_out_len(w, self.kernel, self.stride, self.pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(vec![n, self.out_channels, oh, ow]),
            _ => Err(SerError::Shape(format!(
                "{h}x{w} input too small for kernel {} with padding {}",
                self.kernel, self.pad
            ))),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    fn im2col(&self, x: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel;
        let p = oh * ow;
        let mut col = vec![T::zero(); c * k * k * p];
        for ch in 0..c {
            let plane = &x[ch * h * w..(ch + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut col[((ch * k + ki) * k + kj) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[oy * ow..][..ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[T], dx: &mut [T], c: usize, h: usize, w: usize, oh: usize, ow: usize) {
        let k = self.kernel;
        let p = oh * ow;
        for ch in 0..c {
            let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &col[((ch * k + ki) * k + kj) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        for (ox, &g) in row[oy * ow..][..ow].iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(x.shape())?;
        let (n, c, h, w) = x.dims4()?;
        let (oh, ow) = (out_shape[2], out_shape[3]);
        let (o, p, ckk) = (self.out_channels, oh * ow, c * self.kernel * self.kernel);
        let xd = x.data();
        let cols = self
            .exec
            .map_range(n, |i| self.im2col(&xd[i * c * h * w..][..c * h * w], c, h, w, oh, ow));
        let mut out = vec![T::zero(); n * o * p];
        let weight = self.weight.data();
        let bias = self.bias.as_ref().map(|b| b.data());
        self.exec.for_each_chunk_mut(&mut out, o * p, |i, y| {
            gemm(false, false, o, p, ckk, weight, &cols[i], T::zero(), y);
            if let Some(b) = bias {
                for (row, &bv) in y.chunks_mut(p).zip(b) {
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        });
        self.cache = Some(ConvCache {
            input_shape: (n, c, h, w),
            out_hw: (oh, ow),
            cols,
        });
        Tensor::from_vec(&out_shape, out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| SerError::Shape("conv2d backward called before forward".into()))?;
        let (n, c, h, w) = cache.input_shape;
        let (oh, ow) = cache.out_hw;
        let (o, p, ckk) = (self.out_channels, oh * ow, c * self.kernel * self.kernel);
        if grad_out.shape() != [n, o, oh, ow] {
            return Err(SerError::Shape(format!(
                "conv2d grad {:?} does not match output [{n}, {o}, {oh}, {ow}]",
                grad_out.shape()
            )));
        }
        let gd = grad_out.data();

        // Per-sample weight-gradient partials, summed in sample order.
        let partials = self.exec.map_range(n, |i| {
            let mut dw = vec![T::zero(); o * ckk];
            gemm(false, true, o, ckk, p, &gd[i * o * p..][..o * p], &cache.cols[i], T::zero(), &mut dw);
            dw
        });
        {
            let wg = self.weight.grad_mut();
            for dw in &partials {
                wg.iter_mut().zip(dw).for_each(|(g, &d)| *g += d);
            }
        }
        if let Some(b) = self.bias.as_mut() {
            let bg = b.grad_mut();
            for i in 0..n {
                for (ch, g) in bg.iter_mut().enumerate() {
                    *g += gd[(i * o + ch) * p..][..p].iter().copied().sum::<T>();
                }
            }
        }

        let mut dx = vec![T::zero(); n * c * h * w];
        let weight = self.weight.data();
        self.exec.for_each_chunk_mut(&mut dx, c * h * w, |i, dxi| {
            let mut dcol = vec![T::zero(); ckk * p];
            gemm(true, false, ckk, p, o, weight, &gd[i * o * p..][..o * p], T::zero(), &mut dcol);
            self.col2im(&dcol, dxi, c, h, w, oh, ow);
        });
        Tensor::from_vec(&[n, c, h, w], dx)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {
        f(&join(prefix, "weight"), &mut self.weight, ParamRole::Weight);
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b, ParamRole::Weight);
        }
    }
}
