use serde::{Deserialize, Serialize};

use crate::dsp::{FeatureKind, FeatureMap};
use crate::nn::Tensor;
use crate::{Emotion, Result, SerError};

/// Feature maps of one kind and width, stored contiguously as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub labels: Vec<Emotion>,
    pub ids: Vec<String>,
}

impl FeatureSet {
    pub fn new(kind: FeatureKind, cols: usize) -> Self {
        FeatureSet {
            kind,
            rows: kind.rows(),
            cols,
            data: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, values: &[f32], label: Emotion) -> Result<()> {
        if values.len() != self.rows * self.cols {
            return Err(SerError::Shape(format!(
                "expected {}x{} values, got {}",
                self.rows,
                self.cols,
                values.len()
            )));
        }
        self.data.extend_from_slice(values);
        self.labels.push(label);
        self.ids.push(id.into());
        Ok(())
    }

    pub fn push_map(&mut self, id: impl Into<String>, map: &FeatureMap, label: Emotion) -> Result<()> {
        if map.kind != self.kind || map.rows != self.rows || map.cols != self.cols {
            return Err(SerError::Shape(format!(
                "{} map {}x{} does not fit a {} set of {}x{}",
                map.kind.name(),
                map.rows,
                map.cols,
                self.kind.name(),
                self.rows,
                self.cols
            )));
        }
        let v: Vec<f32> = map.values.iter().map(|&x| x as f32).collect();
        self.push(id, &v, label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        let mut out = FeatureSet::new(self.kind, self.cols);
        out.rows = self.rows;
        for &i in indices {
            out.data.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
            out.ids.push(self.ids[i].clone());
        }
        out
    }

    /// `[indices.len(), 1, rows, cols]` input tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let mut v = Vec::with_capacity(indices.len() * self.rows * self.cols);
        for &i in indices {
            v.extend_from_slice(self.sample(i));
        }
        Tensor::from_vec(&[indices.len(), 1, self.rows, self.cols], v)
    }

    pub fn label_indices(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i].index()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// One mean and standard deviation over the whole training split.
    #[default]
    Global,
    /// One mean and standard deviation per feature row.
    PerRow,
    None,
}

/// Statistics fitted on a training split and replayed on any other split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mode: Standardization,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(set: &FeatureSet, mode: Standardization) -> Result<Self> {
        if set.is_empty() {
            return Err(SerError::EmptyInput("cannot fit standardization on an empty set".into()));
        }
        let groups = match mode {
            Standardization::Global => 1,
            Standardization::PerRow => set.rows,
            Standardization::None => {
                return Ok(Standardizer {
                    mode,
                    mean: vec![0.0],
                    std: vec![1.0],
                })
            }
        };
        let mut sum = vec![0.0f64; groups];
        let mut sq = vec![0.0f64; groups];
        for s in 0..set.len() {
            for (r, row) in set.sample(s).chunks(set.cols).enumerate() {
                let g = r % groups;
                for &v in row {
                    sum[g] += v as f64;
                    sq[g] += (v as f64) * (v as f64);
                }
            }
        }
        let per_group = (set.len() * set.cols * set.rows / groups) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / per_group).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / per_group - m * m).max(0.0);
                if var.sqrt() < 1e-8 {
                    1.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Ok(Standardizer { mode, mean, std })
    }

    pub fn apply(&self, set: &mut FeatureSet) -> Result<()> {
        let groups = self.mean.len();
        if groups != 1 && groups != set.rows {
            return Err(SerError::Shape(format!(
                "standardizer has {groups} groups, features have {} rows",
                set.rows
            )));
        }
        let cols = set.cols;
        let rows = set.rows;
        for (k, v) in set.data.iter_mut().enumerate() {
            let g = if groups == 1 { 0 } else { (k / cols) % rows };
            *v = ((*v as f64 - self.mean[g]) / self.std[g]) as f32;
        }
        Ok(())
    }

    pub fn transform(&self, set: &FeatureSet) -> Result<FeatureSet> {
        let mut out = set.clone();
        self.apply(&mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: &[[f32; 6]], kind: FeatureKind) -> FeatureSet {
        let mut s = FeatureSet::new(kind, 3);
        s.rows = 2;
        for (i, v) in values.iter().enumerate() {
            s.push(format!("s{i}"), v, Emotion::ALL[i % 4]).unwrap();
        }
        s
    }

    #[test]
    fn global_standardization_has_unit_moments() {
        let s = set(&[[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0.0, -2.0, 9.0, 4.0, 1.0, 1.0]], FeatureKind::Mfcc);
        let st = Standardizer::fit(&s, Standardization::Global).unwrap();
        let t = st.transform(&s).unwrap();
        let n = t.data.len() as f64;
        let mean = t.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = t.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn per_row_statistics() {
        let s = set(&[[1.0, 1.0, 1.0, 0.0, 2.0, 4.0], [3.0, 3.0, 3.0, 2.0, 2.0, 2.0]], FeatureKind::Mfcc);
        let st = Standardizer::fit(&s, Standardization::PerRow).unwrap();
        assert_eq!(st.mean, vec![2.0, 2.0]);
        assert!((st.std[0] - 1.0).abs() < 1e-12);
        assert!((st.std[1] - (8.0f64 / 6.0).sqrt()).abs() < 1e-12);
        let c = set(&[[5.0; 6]], FeatureKind::Mfcc);
        let st = Standardizer::fit(&c, Standardization::Global).unwrap();
        assert_eq!(st.std, vec![1.0]);
        assert!(st.transform(&c).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subset_and_batch_layout() {
        let s = set(&[[0.0; 6], [1.0; 6], [2.0; 6]], FeatureKind::Mfcc);
        let sub = s.subset(&[2, 0]);
        assert_eq!(sub.labels, vec![Emotion::Sadness, Emotion::Neutral]);
        let b = s.batch(&[1, 2]).unwrap();
        assert_eq!(b.shape(), &[2, 1, 2, 3]);
        assert_eq!(&b.data()[6..], &[2.0; 6]);
        let mut bad = s.clone();
        assert!(bad.push("x", &[0.0; 5], Emotion::Anger).is_err());
    }
}
