//! Feature-map rasters and CSV result tables.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ser_core::train::{confusion_csv, AblationReport, CvReport, Metrics};

use crate::serf::FeatureFile;
use crate::MetricsFile;

/// 8-bit grayscale pixels, time left to right, row 0 at the bottom.
pub fn raster(f: &FeatureFile, scale: usize) -> (u32, u32, Vec<u8>) {
    let scale = scale.max(1);
    let (lo, hi) = f
        .values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let (w, h) = (f.cols * scale, f.rows * scale);
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        let row = f.rows - 1 - y / scale;
        for x in 0..w {
            let v = f.get(row, x / scale);
            px[y * w + x] = if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 };
        }
    }
    (w as u32, h as u32, px)
}

pub fn write_png(f: &FeatureFile, scale: usize, out: &Path) -> Result<()> {
    let (w, h, px) = raster(f, scale);
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&px)?;
    writer.finish()?;
    Ok(())
}

fn cv_table(r: &CvReport) -> String {
    let mut s = String::from("fold,overall_accuracy,class_accuracy\n");
    for f in &r.folds {
        let _ = writeln!(s, "{},{:.1},{:.1}", f.fold, f.metrics.overall_accuracy, f.metrics.class_accuracy);
    }
    let _ = writeln!(s, "mean,{:.1},{:.1}", r.overall_accuracy.mean, r.class_accuracy.mean);
    let _ = writeln!(s, "std,{:.1},{:.1}", r.overall_accuracy.std, r.class_accuracy.std);
    s
}

fn ablation_table(r: &AblationReport) -> String {
    let mut s = String::from("features,loss,overall_accuracy,overall_std,class_accuracy,class_std,runs\n");
    for c in &r.cells {
        let _ = writeln!(
            s,
            "{},{},{:.1},{:.1},{:.1},{:.1},{}",
            c.feature_kind.name(),
            c.loss.name(),
            c.overall_accuracy.mean,
            c.overall_accuracy.std,
            c.class_accuracy.mean,
            c.class_accuracy.std,
            c.runs.len()
        );
    }
    s
}

/// CSV rendering of any report written by the train, eval, kfold or ablate commands.
pub fn metrics_table(json: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(json).context("parsing metrics JSON")?;
    match v.get("kind").and_then(|k| k.as_str()) {
        Some("metrics") => {
            let m: MetricsFile = serde_json::from_value(v)?;
            Ok(confusion_csv(&m.metrics))
        }
        Some("cross_validation") => Ok(cv_table(&serde_json::from_value(v)?)),
        Some("ablation") => Ok(ablation_table(&serde_json::from_value(v)?)),
        Some(other) => bail!("unknown report kind `{other}`"),
        None => {
            let m: Metrics = serde_json::from_value(v).context("expected a report with a `kind` field")?;
            Ok(confusion_csv(&m))
        }
    }
}
