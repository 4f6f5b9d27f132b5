//! `ser`: synthesize data, featurize, train, evaluate, cross-validate,
//! ablate and render reports.

mod report;
mod serf;

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ser_core::data::{
    generate_synthetic, load_manifest, session_folds, stratified_kfold, DatasetManifest, FoldAssignment,
    SyntheticSpec,
};
use ser_core::dsp::{load_wav_file, FeatureConfig, FeatureExtractor, FeatureKind};
use ser_core::losses::LossKind;
use ser_core::nn::Checkpoint;
use ser_core::par::Exec;
use ser_core::train::{
    confusion_csv, cross_validate, evaluate, fit, run_ablation, FeatureSet, Metrics, OptimizerKind, Standardization,
    TrainConfig, TrainedModel, SCHEMA_VERSION,
};
use ser_core::SerError;

use serf::FeatureFile;

#[derive(Parser)]
#[command(name = "ser", version, about = "Speech emotion recognition with a residual CNN and focal loss")]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic imbalanced WAV corpus and its manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute one feature file per manifest record.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        out: PathBuf,
        /// Standardize each MFCC frame to zero mean and unit variance.
        #[arg(long)]
        mfcc_normalize: bool,
    },
    /// Train on all folds but one and evaluate on the held-out fold.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest or one of its folds.
    Eval(EvalArgs),
    /// K-fold cross-validation.
    Kfold(TrainArgs),
    /// Spectrogram/MFCC × softmax/focal grid.
    Ablate(AblateArgs),
    /// Render a feature file as PNG or a metrics report as CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Spectrogram,
    Mfcc,
}

impl From<KindArg> for FeatureKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Spectrogram => FeatureKind::Spectrogram,
            KindArg::Mfcc => FeatureKind::Mfcc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Focal,
    Softmax,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum StdArg {
    Global,
    PerRow,
    None,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "focal")]
    loss: LossArg,
    /// Focusing parameter; only used with --loss focal.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptArg,
    #[arg(long, env = "SER_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    width_scale: f64,
    #[arg(long, value_enum, default_value = "global")]
    standardize: StdArg,
}

impl ModelArgs {
    fn config(&self, kind: FeatureKind) -> TrainConfig {
        TrainConfig {
            loss: match self.loss {
                LossArg::Focal => LossKind::Focal { gamma: self.gamma },
                LossArg::Softmax => LossKind::SoftmaxCe,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: match self.optimizer {
                OptArg::Adam => OptimizerKind::Adam,
                OptArg::Sgd => OptimizerKind::SgdMomentum,
            },
            seed: self.seed,
            width_scale: self.width_scale,
            feature_kind: kind,
            standardization: match self.standardize {
                StdArg::Global => Standardization::Global,
                StdArg::PerRow => Standardization::PerRow,
                StdArg::None => Standardization::None,
            },
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed of the stratified split, independent of the training seed.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Use session-based (speaker-independent) folds.
    #[arg(long)]
    group_by_session: bool,
}

impl SplitArgs {
    fn assign(&self, m: &DatasetManifest) -> ser_core::Result<FoldAssignment> {
        if self.group_by_session {
            session_folds(m, self.folds)
        } else {
            stratified_kfold(m, self.folds, self.split_seed)
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Held-out fold (train) or the only folds to run (kfold; repeatable).
    #[arg(long)]
    fold: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Evaluate only this fold's records instead of the whole manifest.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Feature directories; one spectrogram and one MFCC directory are required.
    #[arg(long, required = true, num_args = 1..)]
    features: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Training seeds; every cell uses all of them.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Folds to evaluate (repeatable; default all).
    #[arg(long)]
    fold: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, requires = "png", conflicts_with = "metrics")]
    features: Option<PathBuf>,
    #[arg(long)]
    png: Option<PathBuf>,
    /// Integer upscale factor for the PNG.
    #[arg(long, default_value_t = 1)]
    scale: usize,
    #[arg(long, requires = "table")]
    metrics: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
}

/// `metrics.json` written by `train` and `eval`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    pub kind: String,
    pub command: String,
    pub config: TrainConfig,
    pub fold: Option<usize>,
    pub k: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: usize,
    pub metrics: Metrics,
    pub history: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(spec: &Path, out: &Path, exec: Exec) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| SerError::Schema(format!("{}: {e}", spec.display())))?;
    let m = generate_synthetic(&spec, out, exec)?;
    println!("wrote {} clips to {} (per class {:?})", m.len(), out.display(), m.counts);
    Ok(())
}

fn cmd_featurize(manifest: &Path, kind: FeatureKind, out: &Path, normalize: bool, exec: Exec) -> Result<()> {
    let m = load_manifest(manifest)?;
    fs::create_dir_all(out)?;
    let fx = FeatureExtractor::new(FeatureConfig { mfcc_normalize: normalize });
    let results = exec.map_slice(&m.records, |r| -> ser_core::Result<PathBuf> {
        let clip = load_wav_file(&m.resolve(r))?;
        let map = fx.extract(&clip, kind)?;
        let file = FeatureFile::new(kind, map.rows, map.cols, map.values.iter().map(|&v| v as f32).collect())?;
        let name = PathBuf::from(format!("{}.serf", r.utterance_id));
        file.save(&out.join(&name))?;
        Ok(name)
    });
    let mut index = csv::Writer::from_path(out.join("index.csv"))?;
    index.write_record(["utterance_id", "file", "label"])?;
    let mut failures = Vec::new();
    for (r, res) in m.records.iter().zip(results) {
        match res {
            Ok(name) => index.write_record([r.utterance_id.as_str(), &name.to_string_lossy(), r.label.name()])?,
            Err(e) => failures.push((r, e)),
        }
    }
    index.flush()?;
    let failure_path = out.join("failures.csv");
    if failures.is_empty() {
        if failure_path.exists() {
            fs::remove_file(&failure_path)?;
        }
        println!("wrote {} {} feature files to {}", m.len(), kind.name(), out.display());
        return Ok(());
    }
    let mut w = csv::Writer::from_path(&failure_path)?;
    w.write_record(["utterance_id", "wav_path", "error"])?;
    for (r, e) in &failures {
        w.write_record([r.utterance_id.as_str(), &r.wav_path.to_string_lossy(), &e.to_string()])?;
    }
    w.flush()?;
    bail!(
        "{} of {} recordings failed; see {}",
        failures.len(),
        m.len(),
        failure_path.display()
    )
}

/// Loads `index.csv` + SERF files for every manifest record, in manifest order.
fn load_features(dir: &Path, m: &DatasetManifest) -> Result<FeatureSet> {
    let index_path = dir.join("index.csv");
    let mut rdr = csv::Reader::from_path(&index_path).with_context(|| format!("reading {}", index_path.display()))?;
    let mut files: HashMap<String, (String, String)> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        files.insert(get(0), (get(1), get(2)));
    }
    let mut set: Option<FeatureSet> = None;
    for r in &m.records {
        let (file, label) = files
            .get(&r.utterance_id)
            .ok_or_else(|| SerError::Config(format!("{} has no features for {}", dir.display(), r.utterance_id)))?;
        if label != r.label.name() {
            return Err(SerError::Config(format!(
                "{}: manifest says {}, feature index says {label}",
                r.utterance_id, r.label
            ))
            .into());
        }
        let f = FeatureFile::load(&dir.join(file)).with_context(|| format!("loading {file}"))?;
        let set = set.get_or_insert_with(|| FeatureSet::new(f.kind, f.cols));
        if f.kind != set.kind {
            return Err(SerError::Config(format!(
                "mixed feature kinds in {}: {} and {}",
                dir.display(),
                set.kind.name(),
                f.kind.name()
            ))
            .into());
        }
        if f.cols != set.cols {
            return Err(SerError::Config(format!("{file} has {} columns, expected {}", f.cols, set.cols)).into());
        }
        set.push(&r.utterance_id, &f.values, r.label)?;
    }
    set.ok_or_else(|| SerError::EmptyInput("manifest has no records".into()).into())
}

fn write_metrics(out: &Path, file: &MetricsFile) -> Result<()> {
    write_json(&out.join("metrics.json"), file)?;
    fs::write(out.join("confusion.csv"), confusion_csv(&file.metrics))?;
    println!(
        "overall accuracy {:.1}%, class accuracy {:.1}% on {} samples",
        file.metrics.overall_accuracy, file.metrics.class_accuracy, file.n_test
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs, exec: Exec) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let data = load_features(&a.features, &m)?;
    let folds = a.split.assign(&m)?;
    let fold = match a.fold.as_slice() {
        [] => 0,
        [f] if *f < folds.k => *f,
        _ => return Err(SerError::Config("train takes a single --fold below --folds".into()).into()),
    };
    let cfg = a.model.config(data.kind);
    let train = data.subset(&folds.train_indices(fold));
    let test = data.subset(&folds.test_indices(fold));
    let mut model = fit(&train, &cfg, exec)?;
    let metrics = evaluate(&mut model, &test)?;
    fs::create_dir_all(&a.out)?;
    model
        .to_checkpoint()?
        .write_to(BufWriter::new(fs::File::create(a.out.join("model.ckpt"))?))?;
    write_metrics(
        &a.out,
        &MetricsFile {
            schema_version: SCHEMA_VERSION,
            kind: "metrics".into(),
            command: "train".into(),
            config: cfg,
            fold: Some(fold),
            k: Some(folds.k),
            n_train: Some(train.len()),
            n_test: test.len(),
            metrics,
            history: model.history,
        },
    )
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let bytes = fs::read(&a.checkpoint).with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let mut model = TrainedModel::from_checkpoint(&Checkpoint::read_from(bytes.as_slice())?)?;
    let m = load_manifest(&a.manifest)?;
    let data = load_features(&a.features, &m)?;
    if data.kind != model.config.feature_kind {
        return Err(SerError::Config(format!(
            "checkpoint expects {} features, {} holds {}",
            model.config.feature_kind.name(),
            a.features.display(),
            data.kind.name()
        ))
        .into());
    }
    let (test, k) = match a.fold {
        Some(f) => {
            let folds = a.split.assign(&m)?;
            if f >= folds.k {
                return Err(SerError::Config(format!("fold {f} out of range for k={}", folds.k)).into());
            }
            (data.subset(&folds.test_indices(f)), Some(folds.k))
        }
        None => (data, None),
    };
    let metrics = evaluate(&mut model, &test)?;
    fs::create_dir_all(&a.out)?;
    write_metrics(
        &a.out,
        &MetricsFile {
            schema_version: SCHEMA_VERSION,
            kind: "metrics".into(),
            command: "eval".into(),
            config: model.config.clone(),
            fold: a.fold,
            k,
            n_train: None,
            n_test: test.len(),
            metrics,
            history: model.history.clone(),
        },
    )
}

fn selected_folds(requested: &[usize], k: usize) -> Vec<usize> {
    if requested.is_empty() {
        (0..k).collect()
    } else {
        requested.to_vec()
    }
}

fn cmd_kfold(a: &TrainArgs, exec: Exec) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let data = load_features(&a.features, &m)?;
    let folds = a.split.assign(&m)?;
    let cfg = a.model.config(data.kind);
    let report = cross_validate(&data, &folds, &selected_folds(&a.fold, folds.k), &cfg, exec)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    for f in &report.folds {
        fs::write(a.out.join(format!("confusion_fold{}.csv", f.fold)), confusion_csv(&f.metrics))?;
    }
    println!(
        "{} folds: overall {:.1} ± {:.1}%, class {:.1} ± {:.1}%",
        report.folds.len(),
        report.overall_accuracy.mean,
        report.overall_accuracy.std,
        report.class_accuracy.mean,
        report.class_accuracy.std
    );
    Ok(())
}

fn cmd_ablate(a: &AblateArgs, exec: Exec) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let sets = a
        .features
        .iter()
        .map(|d| load_features(d, &m))
        .collect::<Result<Vec<_>>>()?;
    let kinds: Vec<FeatureKind> = sets.iter().map(|s| s.kind).collect();
    if sets.len() != 2 || kinds[0] == kinds[1] {
        return Err(SerError::Config("ablate needs exactly one spectrogram and one MFCC feature directory".into()).into());
    }
    let folds = a.split.assign(&m)?;
    let base = a.model.config(FeatureKind::Mfcc);
    let refs: Vec<&FeatureSet> = sets.iter().collect();
    let report = run_ablation(&refs, &folds, &selected_folds(&a.fold, folds.k), &base, &a.seeds, exec)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("ablation.json"), &report)?;
    fs::write(a.out.join("ablation.csv"), report::metrics_table(&serde_json::to_string(&report)?)?)?;
    for c in &report.cells {
        if c.feature_kind == FeatureKind::Mfcc {
            let name = format!("confusion_mfcc_{}.csv", c.loss.name());
            fs::write(a.out.join(name), confusion_csv(&c.mean_metrics()))?;
        }
        println!(
            "{:<11} {:<8} overall {:.1}%  class {:.1}%",
            c.feature_kind.name(),
            c.loss.name(),
            c.overall_accuracy.mean,
            c.class_accuracy.mean
        );
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    match (&a.features, &a.png, &a.metrics, &a.table) {
        (Some(features), Some(png), None, None) => {
            let f = FeatureFile::load(features).with_context(|| format!("reading {}", features.display()))?;
            report::write_png(&f, a.scale, png)
        }
        (None, None, Some(metrics), Some(table)) => {
            let json = fs::read_to_string(metrics).with_context(|| format!("reading {}", metrics.display()))?;
            let csv = report::metrics_table(&json).map_err(|e| SerError::Schema(format!("{e:#}")))?;
            fs::write(table, csv).with_context(|| format!("writing {}", table.display()))
        }
        _ => Err(SerError::Config("use either --features F --png OUT or --metrics F --table OUT".into()).into()),
    }
}

fn exec_for(jobs: Option<usize>) -> Result<Exec> {
    match jobs {
        Some(0) => Err(SerError::Config("--jobs must be at least 1".into()).into()),
        Some(1) => Ok(Exec::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("configuring worker pool: {e}"))?;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = exec_for(cli.jobs)?;
    match &cli.command {
        Command::Synth { spec, out } => cmd_synth(spec, out, exec),
        Command::Featurize {
            manifest,
            kind,
            out,
            mfcc_normalize,
        } => cmd_featurize(manifest, (*kind).into(), out, *mfcc_normalize, exec),
        Command::Train(a) => cmd_train(a, exec),
        Command::Eval(a) => cmd_eval(a),
        Command::Kfold(a) => cmd_kfold(a, exec),
        Command::Ablate(a) => cmd_ablate(a, exec),
        Command::Report(a) => cmd_report(a),
    }
}

/// 2 for invalid input or usage, 1 for anything that failed at runtime.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SerError>() {
            return match e {
                SerError::Config(_)
                | SerError::Schema(_)
                | SerError::Parse { .. }
                | SerError::Stratification { .. }
                | SerError::EmptyInput(_)
                | SerError::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ser_core::Emotion;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&SerError::Schema("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::Error::from(SerError::EmptyInput("x".into())).context("loading")), 2);
        assert_eq!(exit_code(&SerError::Format("x".into()).into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }

    #[test]
    fn every_emotion_has_a_csv_row() {
        let truth: Vec<Emotion> = Emotion::ALL.to_vec();
        let csv = confusion_csv(&Metrics::from_predictions(&truth, &truth).unwrap());
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
