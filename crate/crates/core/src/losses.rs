//! Softmax cross-entropy and focal loss, `FL(p_t) = −(1 − p_t)^γ · log(p_t)`.
//!
//! Per-sample math runs in `f64` regardless of the network's element type;
//! batch losses are the mean over samples.

use serde::{Deserialize, Serialize};

use crate::nn::{Scalar, Tensor};
use crate::{Result, SerError};

/// Lower clamp on `p_t` inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_GAMMA: f64 = 2.0;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(SerError::EmptyInput("probability vector".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SerError::Numeric(format!("probabilities outside [0, 1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SerError::Numeric(format!("probabilities sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn p_label(&self, label: usize) -> Result<f64> {
        self.0.get(label).copied().ok_or(SerError::Index {
            index: label,
            len: self.0.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig { gamma: DEFAULT_GAMMA }
    }
}

impl FocalConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(SerError::Config(format!("focal gamma must be finite and ≥ 0, got {gamma}")));
        }
        Ok(FocalConfig { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(SerError::EmptyInput("logits".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(SerError::Numeric(format!("non-finite logits {logits:?}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbVector(exps.into_iter().map(|e| e / sum).collect()))
}

pub fn cross_entropy(p: &ProbVector, label: usize) -> Result<f64> {
    Ok(-p.p_label(label)?.max(LOG_CLAMP).ln())
}

pub fn focal_loss(p: &ProbVector, label: usize, cfg: FocalConfig) -> Result<f64> {
    let pt = p.p_label(label)?;
    Ok(-(1.0 - pt).powf(cfg.gamma) * pt.max(LOG_CLAMP).ln())
}

/// Focal loss and its gradient with respect to the logits, from precomputed
/// softmax probabilities.
fn focal_from_probs(p: &[f64], label: usize, gamma: f64) -> (f64, Vec<f64>) {
    let pt = p[label];
    // 1 − p_t as the sum of the other classes stays accurate as p_t → 1.
    let q: f64 = p.iter().enumerate().filter(|&(j, _)| j != label).map(|(_, v)| v).sum();
    let log_pt = pt.max(LOG_CLAMP).ln();
    let modulator = q.powf(gamma);
    let loss = -modulator * log_pt;

    // dL/dz_j = [γ q^(γ−1) p_t log p_t − q^γ · 1{p_t ≥ clamp}] · (δ_tj − p_j)
    let focus_term = if gamma == 0.0 || q <= 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * pt * log_pt
    };
    let log_term = if pt >= LOG_CLAMP { modulator } else { 0.0 };
    let coeff = focus_term - log_term;
    let grad = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| coeff * (if j == label { 1.0 } else { 0.0 } - pj))
        .collect();
    (loss, grad)
}

/// Analytic gradient of `focal_loss(softmax(logits), label)` w.r.t. the logits.
pub fn focal_loss_backward(logits: &[f64], label: usize, cfg: FocalConfig) -> Result<Vec<f64>> {
    let p = softmax(logits)?;
    p.p_label(label)?;
    let (_, grad) = focal_from_probs(p.probs(), label, cfg.gamma);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(SerError::Numeric("non-finite focal gradient".into()));
    }
    Ok(grad)
}

/// Gradient of softmax cross-entropy w.r.t. the logits: `p − onehot(label)`.
pub fn cross_entropy_backward(logits: &[f64], label: usize) -> Result<Vec<f64>> {
    let p = softmax(logits)?;
    p.p_label(label)?;
    Ok(p.0
        .iter()
        .enumerate()
        .map(|(j, &pj)| pj - if j == label { 1.0 } else { 0.0 })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCe,
    Focal { gamma: f64 },
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SoftmaxCe => "softmax",
            LossKind::Focal { .. } => "focal",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Focal { gamma } = *self {
            FocalConfig::new(gamma)?;
        }
        Ok(())
    }

    /// Loss and logit-gradient for one sample.
    pub fn sample(&self, logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        let p = softmax(logits)?;
        p.p_label(label)?;
        Ok(match *self {
            LossKind::SoftmaxCe => {
                let loss = -p.0[label].max(LOG_CLAMP).ln();
                let grad = p
                    .0
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| pj - if j == label { 1.0 } else { 0.0 })
                    .collect();
                (loss, grad)
            }
            LossKind::Focal { gamma } => focal_from_probs(&p.0, label, gamma),
        })
    }

    /// Mean loss over a `[N, K]` logit batch and its gradient (already
    /// divided by `N`).
    pub fn batch<T: Scalar>(&self, logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
        let [n, k] = *logits.shape() else {
            return Err(SerError::Shape(format!("logits must be [N, K], got {:?}", logits.shape())));
        };
        if labels.len() != n {
            return Err(SerError::Shape(format!("{n} logit rows but {} labels", labels.len())));
        }
        let inv_n = 1.0 / n as f64;
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(n * k);
        for (row, &label) in logits.data().chunks(k).zip(labels) {
            let z: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            let (loss, g) = self.sample(&z, label)?;
            total += loss;
            grad.extend(g.into_iter().map(|v| T::of(v * inv_n)));
        }
        Ok((total * inv_n, Tensor::from_vec(&[n, k], grad)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn central_diff(logits: &[f64], label: usize, gamma: f64, eps: f64) -> Vec<f64> {
        let f = |z: &[f64]| focal_loss(&softmax(z).unwrap(), label, FocalConfig::new(gamma).unwrap()).unwrap();
        (0..logits.len())
            .map(|i| {
                let mut a = logits.to_vec();
                let mut b = logits.to_vec();
                a[i] += eps;
                b[i] -= eps;
                (f(&a) - f(&b)) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0; 4]).unwrap().probs(), &[0.25; 4]);
        let a = softmax(&[0.3, -1.2]).unwrap();
        let b = softmax(&[1000.3, 998.8]).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (x, y) in p.probs().iter().zip(&e) {
            assert!((x - y / s).abs() < 1e-12);
        }
        assert!(softmax(&[1.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&pv(&[1.0, 0.0]), 0).unwrap(), 0.0);
        assert!((cross_entropy(&pv(&[0.8, 0.2]), 0).unwrap() - 0.22314).abs() < 1e-5);
        assert!((cross_entropy(&pv(&[0.5, 0.5]), 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(cross_entropy(&pv(&[0.5, 0.5]), 2), Err(SerError::Index { .. })));
        assert!((cross_entropy(&pv(&[0.0, 1.0]), 0).unwrap() - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn focal_examples() {
        let cfg = FocalConfig::new(2.0).unwrap();
        let p = pv(&[0.8, 0.1, 0.05, 0.05]);
        let fl = focal_loss(&p, 0, cfg).unwrap();
        assert!((fl - 0.0089257).abs() < 1e-7);
        let ce = cross_entropy(&p, 0).unwrap();
        assert!((fl / ce - 0.04).abs() < 1e-9);

        let p = pv(&[0.1, 0.9]);
        let fl = focal_loss(&p, 0, cfg).unwrap();
        assert!((fl - 0.81 * 10f64.ln()).abs() < 1e-12);
        assert!((fl - 1.86509).abs() < 1e-5);

        assert!(matches!(FocalConfig::new(-0.5), Err(SerError::Config(_))));
        assert!(matches!(focal_loss(&p, 4, cfg), Err(SerError::Index { .. })));
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let cfg = FocalConfig::new(0.0).unwrap();
        for probs in [[0.8, 0.2], [0.0, 1.0], [0.5, 0.5], [1e-20, 1.0 - 1e-20]] {
            let p = pv(&probs);
            for label in 0..2 {
                assert_eq!(focal_loss(&p, label, cfg).unwrap(), cross_entropy(&p, label).unwrap());
            }
        }
        let z = [0.3, -2.0, 1.1, 0.0];
        let g = focal_loss_backward(&z, 2, cfg).unwrap();
        assert_eq!(g, cross_entropy_backward(&z, 2).unwrap());
    }

    #[test]
    fn saturated_correct_logit_has_vanishing_gradient() {
        for gamma in [0.5, 1.0, 2.0] {
            let g = focal_loss_backward(&[60.0, 0.0, 0.0, 0.0], 0, FocalConfig::new(gamma).unwrap()).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-20), "{gamma}: {g:?}");
            let g = focal_loss_backward(&[1e4, 0.0], 0, FocalConfig::new(gamma).unwrap()).unwrap();
            assert!(g.iter().all(|v| *v == 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let logits = [0.4, -1.3, 2.2, 0.05];
        for gamma in [0.5, 1.0, 2.0, 5.0] {
            for label in 0..4 {
                let g = focal_loss_backward(&logits, label, FocalConfig::new(gamma).unwrap()).unwrap();
                let num = central_diff(&logits, label, gamma, 1e-6);
                for (a, n) in g.iter().zip(&num) {
                    assert!((a - n).abs() / (a.abs() + n.abs()).max(1e-8) < 1e-6, "γ={gamma} {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn batch_mean_and_shape_checks() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 1.0, 0.0]).unwrap();
        let (loss, grad) = LossKind::SoftmaxCe.batch(&logits, &[0, 1]).unwrap();
        let p1 = 1.0 / (1.0 + 1f64.exp());
        assert!((loss - 0.5 * (2f64.ln() - p1.ln())).abs() < 1e-12);
        assert!((grad.data()[0] - 0.5 * (0.5 - 1.0)).abs() < 1e-15);
        assert!(LossKind::SoftmaxCe.batch(&logits, &[0]).is_err());
        assert!(LossKind::Focal { gamma: -1.0 }.validate().is_err());
        let (fl, fg) = LossKind::Focal { gamma: 0.0 }.batch(&logits, &[0, 1]).unwrap();
        assert_eq!(fl, loss);
        assert_eq!(fg, grad);
    }
}
