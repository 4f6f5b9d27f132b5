use super::{conv_out_len, Mode, Module, ParamRole, Scalar, Tensor};
use crate::{Result, SerError};

/// Max pooling with implicit `-inf` padding.
#[derive(Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        MaxPool2d {
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, c, h, w] = *input else {
            return Err(SerError::Shape(format!("max pool expects 4-D input, got {input:?}")));
        };
        if self.pad >= self.kernel {
            return Err(SerError::Config("pool padding must be smaller than the kernel".into()));
        }
        match (
            conv_out_len(h, self.kernel, self.stride, self.pad),
            conv_out_len(w, self.kernel, self.stride, self.pad),
        ) {
            (Some(oh), Some(ow)) => Ok(vec![n, c, oh, ow]),
            _ => Err(SerError::Shape(format!("{h}x{w} input too small for max pool"))),
        }
    }
}

impl<T: Scalar> Module<T> for MaxPool2d {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(x.shape())?;
        let (n, c, h, w) = x.dims4()?;
        let (oh, ow) = (out_shape[2], out_shape[3]);
        let xd = x.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut arg = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for ki in 0..self.kernel {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kj in 0..self.kernel {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let j = base + iy as usize * w + ix as usize;
                            if best_i == usize::MAX || xd[j] > best || (xd[j].is_nan() && !best.is_nan()) {
                                best = xd[j];
                                best_i = j;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
        self.cache = Some((x.shape().to_vec(), arg));
        Tensor::from_vec(&out_shape, out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, arg) = self
            .cache
            .take()
            .ok_or_else(|| SerError::Shape("max pool backward called before forward".into()))?;
        if arg.len() != grad_out.len() {
            return Err(SerError::Shape("max pool grad shape mismatch".into()));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&j, &g) in arg.iter().zip(grad_out.data()) {
            d[j] += g;
        }
        Ok(dx)
    }

    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {}
}

/// Spatial mean per channel: `[N, C, H, W] → [N, C]`.
#[derive(Debug, Default)]
pub struct GlobalAvgPool {
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool::default()
    }
}

impl<T: Scalar> Module<T> for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let inv = T::one() / T::of(hw as f64);
        let out = x
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        self.cache = Some(x.shape().to_vec());
        Tensor::from_vec(&[n, c], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .cache
            .take()
            .ok_or_else(|| SerError::Shape("global pool backward called before forward".into()))?;
        let hw: usize = shape[2..].iter().product();
        if grad_out.len() * hw != shape.iter().product::<usize>() {
            return Err(SerError::Shape("global pool grad shape mismatch".into()));
        }
        let inv = T::one() / T::of(hw as f64);
        let dx = grad_out
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, hw))
            .collect();
        Tensor::from_vec(&shape, dx)
    }

    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {}
}
