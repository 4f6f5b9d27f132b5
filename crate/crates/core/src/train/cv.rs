use serde::{Deserialize, Serialize};

use super::fit::{evaluate, fit, TrainConfig};
use super::metrics::Metrics;
use super::{FeatureSet, Standardization, SCHEMA_VERSION};
use crate::data::FoldAssignment;
use crate::dsp::FeatureKind;
use crate::losses::{LossKind, DEFAULT_GAMMA};
use crate::par::Exec;
use crate::{Emotion, Result, SerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Summary { mean, std }
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema_version: u32,
    pub kind: String,
    pub config: TrainConfig,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub overall_accuracy: Summary,
    pub class_accuracy: Summary,
}

fn check_folds(data: &FeatureSet, folds: &FoldAssignment, which: &[usize]) -> Result<()> {
    folds.check(data.len())?;
    if which.is_empty() {
        return Err(SerError::Config("no folds selected".into()));
    }
    if let Some(&f) = which.iter().find(|&&f| f >= folds.k) {
        return Err(SerError::Config(format!("fold {f} out of range for k={}", folds.k)));
    }
    Ok(())
}

/// Runs `run(train, test, exec)` for each selected fold. With several folds
/// and a parallel policy the folds themselves run concurrently and each
/// gets a sequential policy.
pub fn cross_validate_with<F>(
    data: &FeatureSet,
    folds: &FoldAssignment,
    which: &[usize],
    exec: Exec,
    run: F,
) -> Result<Vec<FoldResult>>
where
    F: Fn(&FeatureSet, &FeatureSet, Exec) -> Result<(Metrics, Vec<f64>)> + Sync + Send,
{
    check_folds(data, folds, which)?;
    let (outer, inner) = if which.len() > 1 && exec.is_parallel() {
        (Exec::Parallel, Exec::Sequential)
    } else {
        (Exec::Sequential, exec)
    };
    outer
        .map_slice(which, |&fold| {
            let train = data.subset(&folds.train_indices(fold));
            let test = data.subset(&folds.test_indices(fold));
            let (metrics, history) = run(&train, &test, inner)?;
            Ok(FoldResult {
                fold,
                n_train: train.len(),
                n_test: test.len(),
                metrics,
                history,
            })
        })
        .into_iter()
        .collect()
}

/// Trains on all folds but `i` and evaluates on fold `i`, for each `i` in `which`.
pub fn cross_validate(
    data: &FeatureSet,
    folds: &FoldAssignment,
    which: &[usize],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<CvReport> {
    cfg.validate()?;
    let results = cross_validate_with(data, folds, which, exec, |train, test, inner| {
        let mut model = fit(train, cfg, inner)?;
        Ok((evaluate(&mut model, test)?, model.history))
    })?;
    let overall: Vec<f64> = results.iter().map(|r| r.metrics.overall_accuracy).collect();
    let class: Vec<f64> = results.iter().map(|r| r.metrics.class_accuracy).collect();
    Ok(CvReport {
        schema_version: SCHEMA_VERSION,
        kind: "cross_validation".into(),
        config: cfg.clone(),
        k: folds.k,
        folds: results,
        overall_accuracy: mean_std(&overall),
        class_accuracy: mean_std(&class),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub fold: usize,
    pub metrics: Metrics,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub feature_kind: FeatureKind,
    pub loss: LossKind,
    pub epochs: usize,
    pub runs: Vec<AblationRun>,
    pub overall_accuracy: Summary,
    pub class_accuracy: Summary,
    pub median_overall_accuracy: f64,
    pub median_class_accuracy: f64,
    /// Per-class median of the confusion diagonal over runs where the class was present.
    pub median_diagonal: [Option<f64>; Emotion::COUNT],
    /// Element-wise mean of the per-run confusion matrices.
    pub mean_confusion: [Option<[f64; Emotion::COUNT]>; Emotion::COUNT],
}

impl AblationCell {
    fn from_runs(feature_kind: FeatureKind, loss: LossKind, epochs: usize, runs: Vec<AblationRun>) -> Self {
        let overall: Vec<f64> = runs.iter().map(|r| r.metrics.overall_accuracy).collect();
        let class: Vec<f64> = runs.iter().map(|r| r.metrics.class_accuracy).collect();
        let median_diagonal = std::array::from_fn(|c| {
            let d: Vec<f64> = runs.iter().filter_map(|r| r.metrics.diagonal()[c]).collect();
            (!d.is_empty()).then(|| median(&d))
        });
        let mean_confusion = std::array::from_fn(|c| {
            let rows: Vec<[f64; 4]> = runs.iter().filter_map(|r| r.metrics.confusion[c]).collect();
            (!rows.is_empty()).then(|| {
                std::array::from_fn(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            })
        });
        AblationCell {
            feature_kind,
            loss,
            epochs,
            overall_accuracy: mean_std(&overall),
            class_accuracy: mean_std(&class),
            median_overall_accuracy: median(&overall),
            median_class_accuracy: median(&class),
            median_diagonal,
            mean_confusion,
            runs,
        }
    }

    /// The cell's mean confusion as a [`Metrics`]-shaped value for CSV output.
    pub fn mean_metrics(&self) -> Metrics {
        let diag: Vec<f64> = (0..4).filter_map(|c| self.mean_confusion[c].map(|r| r[c])).collect();
        Metrics {
            overall_accuracy: self.overall_accuracy.mean,
            class_accuracy: diag.iter().sum::<f64>() / diag.len().max(1) as f64,
            confusion: self.mean_confusion,
            counts: [[0; 4]; 4],
            support: [0; 4],
            absent_classes: Emotion::ALL
                .into_iter()
                .filter(|e| self.mean_confusion[e.index()].is_none())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub kind: String,
    pub gamma: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub folds: Vec<usize>,
    pub k: usize,
    pub standardization: Standardization,
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, kind: FeatureKind, focal: bool) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.feature_kind == kind && matches!(c.loss, LossKind::Focal { .. }) == focal)
    }
}

/// One grid cell: every seed on every selected fold with a fixed loss.
pub fn run_cell(
    data: &FeatureSet,
    folds: &FoldAssignment,
    which: &[usize],
    cfg: &TrainConfig,
    seeds: &[u64],
    exec: Exec,
) -> Result<AblationCell> {
    if seeds.is_empty() {
        return Err(SerError::Config("at least one seed is required".into()));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        let c = TrainConfig {
            seed,
            feature_kind: data.kind,
            ..cfg.clone()
        };
        let report = cross_validate(data, folds, which, &c, exec)?;
        for f in report.folds {
            runs.push(AblationRun {
                seed,
                fold: f.fold,
                final_loss: f.history.last().copied().unwrap_or(f64::NAN),
                metrics: f.metrics,
            });
        }
    }
    Ok(AblationCell::from_runs(data.kind, cfg.loss, cfg.epochs, runs))
}

/// Spectrogram and MFCC, each under softmax cross-entropy and focal loss,
/// with identical folds, seeds, epochs and batch orders in every cell.
pub fn run_ablation(
    sets: &[&FeatureSet],
    folds: &FoldAssignment,
    which: &[usize],
    base: &TrainConfig,
    seeds: &[u64],
    exec: Exec,
) -> Result<AblationReport> {
    let find = |kind: FeatureKind| {
        sets.iter()
            .find(|s| s.kind == kind)
            .copied()
            .ok_or_else(|| SerError::Config(format!("ablation needs {} features", kind.name())))
    };
    let spec = find(FeatureKind::Spectrogram)?;
    let mfcc = find(FeatureKind::Mfcc)?;
    if spec.labels != mfcc.labels || spec.ids != mfcc.ids {
        return Err(SerError::Config("feature sets do not describe the same utterances".into()));
    }
    let gamma = match base.loss {
        LossKind::Focal { gamma } => gamma,
        LossKind::SoftmaxCe => DEFAULT_GAMMA,
    };
    let mut cells = Vec::new();
    for data in [spec, mfcc] {
        for loss in [LossKind::SoftmaxCe, LossKind::Focal { gamma }] {
            let cfg = TrainConfig { loss, ..base.clone() };
            log::info!("ablation cell {} / {}", data.kind.name(), loss.name());
            cells.push(run_cell(data, folds, which, &cfg, seeds, exec)?);
        }
    }
    Ok(AblationReport {
        schema_version: SCHEMA_VERSION,
        kind: "ablation".into(),
        gamma,
        epochs: base.epochs,
        seeds: seeds.to_vec(),
        folds: which.to_vec(),
        k: folds.k,
        standardization: base.standardization,
        cells,
    })
}
