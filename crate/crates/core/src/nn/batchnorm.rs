use super::{join, Mode, Module, ParamRole, Scalar, Tensor};
use crate::{Result, SerError};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct BnCache<T> {
    shape: (usize, usize, usize, usize),
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel batch normalization over `(N, H, W)`.
///
/// TRAIN normalizes with the biased batch variance and folds the unbiased
/// variance into the running estimate; EVAL uses the running statistics.
pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    /// Channels seen with exactly zero batch variance in TRAIN mode.
    pub zero_variance_events: usize,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> std::fmt::Debug for BatchNorm2d<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BatchNorm2d({})", self.channels())
    }
}

impl<T: Scalar> BatchNorm2d<T> {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Self {
        let p = |v: f64| Tensor::param(&[channels], vec![T::of(v); channels]).expect("channels > 0");
        let b = |v: f64| Tensor::filled(&[channels], T::of(v));
        BatchNorm2d {
            gamma: p(1.0),
            beta: p(0.0),
            running_mean: b(0.0),
            running_var: b(1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            zero_variance_events: 0,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels()
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(SerError::Shape(format!(
                "batch norm has {} channels, input has {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let m = n * hw;
        let xd = x.data();
        let eps = T::of(self.eps);
        let (mean, var): (Vec<T>, Vec<T>) = match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(SerError::DegenerateBatch(format!(
                        "a single value per channel ({n}x{c}x{h}x{w}) has no batch variance"
                    )));
                }
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                let inv_m = T::one() / T::of(m as f64);
                for ch in 0..c {
                    let plane = |i: usize| &xd[(i * c + ch) * hw..][..hw];
                    let mu = (0..n).map(|i| plane(i).iter().copied().sum::<T>()).sum::<T>() * inv_m;
                    let v = (0..n)
                        .map(|i| plane(i).iter().map(|&v| (v - mu) * (v - mu)).sum::<T>())
                        .sum::<T>()
                        * inv_m;
                    mean[ch] = mu;
                    var[ch] = v;
                }
                let zeros = var.iter().filter(|v| **v == T::zero()).count();
                if zeros > 0 {
                    self.zero_variance_events += zeros;
                    log::warn!("batch norm: {zeros} channel(s) with zero batch variance; clamped by eps");
                }
                let mom = T::of(self.momentum);
                let unbias = T::of(m as f64 / (m - 1) as f64);
                let rm = self.running_mean.data_mut();
                for (r, &mu) in rm.iter_mut().zip(&mean) {
                    *r = (T::one() - mom) * *r + mom * mu;
                }
                let rv = self.running_var.data_mut();
                for (r, &v) in rv.iter_mut().zip(&var) {
                    *r = (T::one() - mom) * *r + mom * v * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (g, b) = (self.gamma.data(), self.beta.data());
        let mut x_hat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    let xh = (xd[j] - mean[ch]) * inv_std[ch];
                    x_hat[j] = xh;
                    out[j] = g[ch] * xh + b[ch];
                }
            }
        }
        self.cache = Some(BnCache {
            shape: (n, c, h, w),
            x_hat,
            inv_std,
            mode,
        });
        Tensor::from_vec(x.shape(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| SerError::Shape("batch norm backward called before forward".into()))?;
        let (n, c, h, w) = cache.shape;
        if grad_out.len() != n * c * h * w {
            return Err(SerError::Shape("batch norm grad shape mismatch".into()));
        }
        let hw = h * w;
        let gd = grad_out.data();
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    sum_dy[ch] += gd[j];
                    sum_dy_xhat[ch] += gd[j] * cache.x_hat[j];
                }
            }
        }
        {
            let gg = self.gamma.grad_mut();
            gg.iter_mut().zip(&sum_dy_xhat).for_each(|(g, &s)| *g += s);
        }
        {
            let bg = self.beta.grad_mut();
            bg.iter_mut().zip(&sum_dy).for_each(|(g, &s)| *g += s);
        }
        let gamma = self.gamma.data();
        let inv_m = T::one() / T::of((n * hw) as f64);
        let mut dx = vec![T::zero(); gd.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let scale = gamma[ch] * cache.inv_std[ch];
                for j in off..off + hw {
                    dx[j] = match cache.mode {
                        Mode::Eval => scale * gd[j],
                        Mode::Train => {
                            scale * (gd[j] - inv_m * sum_dy[ch] - cache.x_hat[j] * inv_m * sum_dy_xhat[ch])
                        }
                    };
                }
            }
        }
        Tensor::from_vec(grad_out.shape(), dx)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {
        f(&join(prefix, "gamma"), &mut self.gamma, ParamRole::Weight);
        f(&join(prefix, "beta"), &mut self.beta, ParamRole::Weight);
        f(&join(prefix, "running_mean"), &mut self.running_mean, ParamRole::Buffer);
        f(&join(prefix, "running_var"), &mut self.running_var, ParamRole::Buffer);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_module;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(seed: u64, shape: &[usize], scale: f64, shift: f64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale) + shift).collect()).unwrap()
    }

    #[test]
    fn normalized_batch_is_a_fixed_point() {
        // Per channel: values ±1 → mean 0, biased variance 1.
        let data: Vec<f64> = (0..2 * 3 * 2 * 2).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Tensor::from_vec(&[2, 3, 2, 2], data).unwrap();
        let mut bn = BatchNorm2d::<f64>::new(3);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let x = rand_tensor(1, &[3, 2, 4, 4], 5.0, 2.0);
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma.set_data(&[0.0, 0.0]).unwrap();
        bn.beta.set_data(&[0.5, -2.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (j, &v) in y.data().iter().enumerate() {
            let ch = (j / 16) % 2;
            assert_eq!(v, [0.5, -2.0][ch]);
        }
    }

    #[test]
    fn train_output_has_unit_moments() {
        let x = rand_tensor(2, &[4, 3, 5, 5], 3.0, 7.0);
        let mut bn = BatchNorm2d::<f64>::new(3);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|i| y.data()[(i * 3 + ch) * 25..][..25].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_use_momentum() {
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.data()[0] - 0.4).abs() < 1e-12);
        // Unbiased variance of {1,3,5,7} is 20/3.
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_is_batch_size_independent() {
        let x = rand_tensor(3, &[5, 2, 3, 3], 1.0, 0.0);
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.forward(&rand_tensor(4, &[6, 2, 3, 3], 2.0, 1.0), Mode::Train).unwrap();
        let all = bn.forward(&x, Mode::Eval).unwrap();
        let one = Tensor::from_vec(&[1, 2, 3, 3], x.data()[2 * 18..3 * 18].to_vec()).unwrap();
        let single = bn.forward(&one, Mode::Eval).unwrap();
        assert_eq!(single.data(), &all.data()[2 * 18..3 * 18]);
    }

    #[test]
    fn degenerate_batches() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let single = Tensor::from_vec(&[1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        assert!(matches!(bn.forward(&single, Mode::Train), Err(SerError::DegenerateBatch(_))));
        assert!(bn.forward(&single, Mode::Eval).is_ok());

        let flat = Tensor::from_vec(&[1, 2, 2, 2], vec![3.0; 8]).unwrap();
        let y = bn.forward(&flat, Mode::Train).unwrap();
        assert!(y.all_finite());
        assert_eq!(bn.zero_variance_events, 2);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = rand_tensor(5, &[3, 2, 3, 4], 1.5, 0.3);
        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma.set_data(&[1.3, -0.7]).unwrap();
        bn.beta.set_data(&[0.2, 0.1]).unwrap();
        let r = check_module(&mut bn, &x, Mode::Train, 1e-5, 1).unwrap();
        assert!(r.max() < 1e-5, "{r:?}");
        let r = check_module(&mut bn, &x, Mode::Eval, 1e-5, 2).unwrap();
        assert!(r.max() < 1e-5, "{r:?}");
    }
}
