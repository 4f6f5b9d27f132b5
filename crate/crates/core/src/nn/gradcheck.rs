use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, Module, ParamRole, Tensor};
use crate::{Result, SerError};

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central-difference gradient check of a scalar function.
///
/// `f` returns the value and its analytic gradient at the given point; the
/// gradient is only read at `x`. Returns the maximum over coordinates of
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(mut f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(SerError::Config(format!("grad_check step {eps} outside [1e-7, 1e-3]")));
    }
    let (v0, analytic) = f(x)?;
    if analytic.len() != x.len() {
        return Err(SerError::Shape("analytic gradient length differs from input".into()));
    }
    if !v0.is_finite() || analytic.iter().any(|g| !g.is_finite()) {
        return Err(SerError::Numeric("non-finite value or gradient at x".into()));
    }
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?.0;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?.0;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(SerError::Numeric(format!("non-finite value near coordinate {i}")));
        }
        worst = worst.max(rel_err(analytic[i], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Worst relative errors found by [`check_module`].
#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub input: f64,
    pub params: Vec<(String, f64)>,
}

impl GradReport {
    pub fn max(&self) -> f64 {
        self.params.iter().map(|p| p.1).fold(self.input, f64::max)
    }
}

/// Checks a module's input and parameter gradients against central
/// differences of `L = Σ r ⊙ forward(x)` for a fixed random `r`.
pub fn check_module<M: Module<f64>>(module: &mut M, x: &Tensor<f64>, mode: Mode, eps: f64, seed: u64) -> Result<GradReport> {
    check_module_sampled(module, x, mode, eps, seed, None)
}

/// Like [`check_module`], but probes at most `per_tensor` random coordinates
/// of each tensor.
pub fn check_module_sampled<M: Module<f64>>(
    module: &mut M,
    x: &Tensor<f64>,
    mode: Mode,
    eps: f64,
    seed: u64,
    per_tensor: Option<usize>,
) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = module.forward(x, mode)?;
    let r = Tensor::from_vec(y.shape(), (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let dot = |t: &Tensor<f64>| t.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>();

    module.zero_grad();
    module.forward(x, mode)?;
    let dx = module.backward(&r)?;
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    module.visit("", &mut |name, t, role| {
        if role == ParamRole::Weight {
            analytic.push((name.to_string(), t.grad().map(<[f64]>::to_vec).unwrap_or_default()));
        }
    });

    let pick = |len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        match per_tensor {
            Some(k) if k < len => sample(rng, len, k).into_vec(),
            _ => (0..len).collect(),
        }
    };

    let mut report = GradReport::default();
    let mut probe = x.clone();
    for i in pick(x.len(), &mut rng) {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = dot(&module.forward(&probe, mode)?);
        probe.data_mut()[i] = orig - eps;
        let minus = dot(&module.forward(&probe, mode)?);
        probe.data_mut()[i] = orig;
        report.input = report.input.max(rel_err(dx.data()[i], (plus - minus) / (2.0 * eps)));
    }

    for (name, grad) in &analytic {
        let mut worst: f64 = 0.0;
        for i in pick(grad.len(), &mut rng) {
            let eval = |delta: f64, module: &mut M| -> Result<f64> {
                module.visit("", &mut |n, t, _| {
                    if n == name {
                        t.data_mut()[i] += delta;
                    }
                });
                let v = dot(&module.forward(x, mode)?);
                module.visit("", &mut |n, t, _| {
                    if n == name {
                        t.data_mut()[i] -= delta;
                    }
                });
                Ok(v)
            };
            let plus = eval(eps, module)?;
            let minus = eval(-eps, module)?;
            worst = worst.max(rel_err(grad[i], (plus - minus) / (2.0 * eps)));
        }
        report.params.push((name.clone(), worst));
    }
    Ok(report)
}
