use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{argmax, Metrics};
use super::optim::{Optimizer, OptimizerKind};
use super::{FeatureSet, Standardization, Standardizer};
use crate::dsp::FeatureKind;
use crate::losses::{LossKind, DEFAULT_GAMMA};
use crate::nn::{Checkpoint, Mode, Module};
use crate::par::Exec;
use crate::resnet::{build_resnet18, ResNet18, ResNet18Config};
use crate::{Emotion, Result, SerError};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub width_scale: f64,
    pub feature_kind: FeatureKind,
    #[serde(default)]
    pub standardization: Standardization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Focal { gamma: DEFAULT_GAMMA },
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            width_scale: 1.0,
            feature_kind: FeatureKind::Mfcc,
            standardization: Standardization::Global,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is allowed so a run can be checked for side effects.
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(SerError::Config("epochs and batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(SerError::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.width_scale > 0.0) || !self.width_scale.is_finite() {
            return Err(SerError::Config(format!("invalid width scale {}", self.width_scale)));
        }
        Ok(())
    }

    pub fn model_config(&self, cols: usize) -> ResNet18Config {
        let mut c = ResNet18Config::new(self.feature_kind.rows(), self.width_scale);
        c.input_cols = cols;
        c
    }
}

/// Visiting order for one epoch. Depends only on seed, epoch and size, so
/// runs that differ only in their loss see identical batches.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn check_features(data: &FeatureSet, cfg: &TrainConfig, model: &ResNet18<f32>) -> Result<()> {
    if data.kind != cfg.feature_kind || data.rows != model.config.input_rows {
        return Err(SerError::Config(format!(
            "{} features with {} rows do not match a {} model with {} input rows",
            data.kind.name(),
            data.rows,
            cfg.feature_kind.name(),
            model.config.input_rows
        )));
    }
    Ok(())
}

/// Mini-batch training on already standardized features. Returns the mean
/// training loss of each epoch.
pub fn train(model: &mut ResNet18<f32>, data: &FeatureSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_features(data, cfg, model)?;
    if data.is_empty() {
        return Err(SerError::EmptyInput("empty training set".into()));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, data.len());
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.batch(idx)?;
            let labels = data.label_indices(idx);
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            if !logits.all_finite() {
                return Err(SerError::Divergence { epoch, batch: b, loss: f64::NAN });
            }
            let (loss, grad) = cfg.loss.batch(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(SerError::Divergence { epoch, batch: b, loss });
            }
            model.backward(&grad)?;
            opt.step(model);
            total += loss * idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(history)
}

/// Eval-mode argmax predictions for already standardized features.
pub fn predict(model: &mut ResNet18<f32>, data: &FeatureSet) -> Result<Vec<Emotion>> {
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let logits = model.forward_logits(&data.batch(idx)?, Mode::Eval)?;
        for row in logits.data().chunks(model.config.n_classes) {
            out.push(Emotion::ALL[argmax(row)]);
        }
    }
    Ok(out)
}

/// A trained network together with the input statistics it expects.
pub struct TrainedModel {
    pub model: ResNet18<f32>,
    pub standardizer: Standardizer,
    pub config: TrainConfig,
    pub history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    train: TrainConfig,
    model: ResNet18Config,
    standardizer: Standardizer,
    history: Vec<f64>,
}

impl TrainedModel {
    pub fn predict(&mut self, data: &FeatureSet) -> Result<Vec<Emotion>> {
        let x = self.standardizer.transform(data)?;
        predict(&mut self.model, &x)
    }

    pub fn to_checkpoint(&mut self) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            train: self.config.clone(),
            model: self.model.config.clone(),
            standardizer: self.standardizer.clone(),
            history: self.history.clone(),
        };
        Ok(Checkpoint::from_module(&mut self.model, serde_json::to_string(&meta)?))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<TrainedModel> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta)
            .map_err(|e| SerError::Format(format!("checkpoint metadata: {e}")))?;
        let mut model = build_resnet18(&meta.model, 0)?;
        ck.load_into(&mut model)?;
        Ok(TrainedModel {
            model,
            standardizer: meta.standardizer,
            config: meta.train,
            history: meta.history,
        })
    }
}

/// Builds a model from `cfg.seed`, fits standardization on `data` and trains.
pub fn fit(data: &FeatureSet, cfg: &TrainConfig, exec: Exec) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut model = build_resnet18::<f32>(&cfg.model_config(data.cols), cfg.seed)?;
    model.set_exec(exec);
    check_features(data, cfg, &model)?;
    let standardizer = Standardizer::fit(data, cfg.standardization)?;
    let x = standardizer.transform(data)?;
    let history = train(&mut model, &x, cfg)?;
    Ok(TrainedModel {
        model,
        standardizer,
        config: cfg.clone(),
        history,
    })
}

pub fn evaluate(trained: &mut TrainedModel, test: &FeatureSet) -> Result<Metrics> {
    if test.is_empty() {
        return Err(SerError::EmptyInput("empty test set".into()));
    }
    let pred = trained.predict(test)?;
    Metrics::from_predictions(&test.labels, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamRole;
    use rand::Rng;

    /// Two classes told apart by which half of the map is bright.
    fn toy_set(n: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = FeatureSet::new(FeatureKind::Mfcc, 12);
        for i in 0..n {
            let label = if i % 2 == 0 { Emotion::Neutral } else { Emotion::Anger };
            let v: Vec<f32> = (0..40 * 12)
                .map(|k| {
                    let top = k < 20 * 12;
                    let bright = top == (label == Emotion::Neutral);
                    rng.random_range(-1.0..1.0) + if bright { 1.5 } else { 0.0 }
                })
                .collect();
            s.push(format!("t{i}"), &v, label).unwrap();
        }
        s
    }

    fn cfg(loss: LossKind, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            epochs,
            batch_size: 5,
            width_scale: 0.125,
            seed,
            ..TrainConfig::default()
        }
    }

    fn weights(m: &mut ResNet18<f32>) -> Vec<f32> {
        let mut v = Vec::new();
        m.visit("", &mut |_, t, role| {
            if role == ParamRole::Weight {
                v.extend_from_slice(t.data());
            }
        });
        v
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(3, 0, 50);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(3, 0, 50));
        assert_ne!(a, epoch_order(3, 1, 50));
        assert_ne!(a, epoch_order(4, 0, 50));
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let data = toy_set(10, 1);
        let c = TrainConfig { learning_rate: 0.0, ..cfg(LossKind::SoftmaxCe, 1, 0) };
        let mut initial = build_resnet18::<f32>(&c.model_config(12), 0).unwrap();
        let mut trained = fit(&data, &c, Exec::Sequential).unwrap();
        assert_eq!(weights(&mut initial), weights(&mut trained.model));
    }

    #[test]
    fn training_reduces_loss() {
        for seed in 0..3 {
            let data = toy_set(20, 10 + seed);
            let t = fit(&data, &cfg(LossKind::Focal { gamma: 2.0 }, 30, seed), Exec::default()).unwrap();
            assert!(t.history.last().unwrap() < &t.history[0], "{:?}", t.history);
        }
    }

    #[test]
    fn deterministic_history() {
        let data = toy_set(12, 2);
        let c = cfg(LossKind::SoftmaxCe, 3, 9);
        let a = fit(&data, &c, Exec::Sequential).unwrap().history;
        let b = fit(&data, &c, Exec::default()).unwrap().history;
        assert_eq!(a, b);
    }

    #[test]
    fn focal_with_zero_gamma_tracks_softmax() {
        let data = toy_set(12, 3);
        let a = fit(&data, &cfg(LossKind::SoftmaxCe, 4, 5), Exec::default()).unwrap().history;
        let b = fit(&data, &cfg(LossKind::Focal { gamma: 0.0 }, 4, 5), Exec::default()).unwrap().history;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatched_features_are_rejected() {
        let data = toy_set(4, 0);
        let c = TrainConfig {
            feature_kind: FeatureKind::Spectrogram,
            ..cfg(LossKind::SoftmaxCe, 1, 0)
        };
        assert!(matches!(fit(&data, &c, Exec::Sequential), Err(SerError::Config(_))));
        let bad = TrainConfig { epochs: 0, ..cfg(LossKind::SoftmaxCe, 1, 0) };
        assert!(fit(&data, &bad, Exec::Sequential).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = toy_set(6, 0);
        data.data[0] = f32::NAN;
        let c = TrainConfig {
            standardization: Standardization::None,
            ..cfg(LossKind::SoftmaxCe, 1, 0)
        };
        let mut model = build_resnet18::<f32>(&c.model_config(12), 0).unwrap();
        match train(&mut model, &data, &c) {
            Err(SerError::Divergence { epoch: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_predicts_identically() {
        let data = toy_set(10, 4);
        let mut t = fit(&data, &cfg(LossKind::SoftmaxCe, 2, 1), Exec::default()).unwrap();
        let mut bytes = Vec::new();
        t.to_checkpoint().unwrap().write_to(&mut bytes).unwrap();
        let ck = Checkpoint::read_from(bytes.as_slice()).unwrap();
        let mut back = TrainedModel::from_checkpoint(&ck).unwrap();
        assert_eq!(back.config, t.config);
        assert_eq!(back.history, t.history);
        assert_eq!(back.predict(&data).unwrap(), t.predict(&data).unwrap());
        let m = evaluate(&mut back, &data).unwrap();
        assert_eq!(m.support, [5, 0, 0, 5]);
    }
}
