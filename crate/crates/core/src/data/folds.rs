use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::{Emotion, Result, SerError};

/// Fold index per manifest record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// `counts[fold][class]` for the given labels.
    pub fn class_counts(&self, labels: &[Emotion]) -> Vec<[usize; Emotion::COUNT]> {
        let mut out = vec![[0; Emotion::COUNT]; self.k];
        for (&f, l) in self.fold_of.iter().zip(labels) {
            out[f][l.index()] += 1;
        }
        out
    }

    pub fn check(&self, n_records: usize) -> Result<()> {
        if self.fold_of.len() != n_records {
            return Err(SerError::Config(format!(
                "fold assignment covers {} records, manifest has {n_records}",
                self.fold_of.len()
            )));
        }
        if let Some(&f) = self.fold_of.iter().find(|&&f| f >= self.k) {
            return Err(SerError::Config(format!("fold index {f} out of range for k={}", self.k)));
        }
        Ok(())
    }
}

/// Shuffles each class with `seed`, then deals its records round-robin over
/// the folds. The dealing position carries over between classes so fold
/// totals also stay within one of each other.
pub fn stratified_kfold(m: &DatasetManifest, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(SerError::Config(format!("k must be at least 2, got {k}")));
    }
    for e in Emotion::ALL {
        let count = m.counts[e.index()];
        if count > 0 && count < k {
            return Err(SerError::Stratification {
                class: e.name().to_string(),
                count,
                k,
            });
        }
    }
    if m.is_empty() {
        return Err(SerError::EmptyInput("cannot fold an empty manifest".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; m.len()];
    let mut next = 0;
    for e in Emotion::ALL {
        let mut members: Vec<usize> = (0..m.len()).filter(|&i| m.records[i].label == e).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, seed, fold_of })
}

/// Speaker-independent alternative: fold = (session − 1) mod k.
pub fn session_folds(m: &DatasetManifest, k: usize) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(SerError::Config(format!("k must be at least 2, got {k}")));
    }
    let fold_of: Vec<usize> = m.records.iter().map(|r| (r.session as usize - 1) % k).collect();
    for f in 0..k {
        if !fold_of.contains(&f) {
            return Err(SerError::Config(format!("session grouping leaves fold {f} empty")));
        }
    }
    Ok(FoldAssignment { k, seed: 0, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Speaker, UtteranceRecord};
    use proptest::prelude::*;

    fn manifest(counts: &[usize]) -> DatasetManifest {
        let mut records = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for j in 0..n {
                records.push(UtteranceRecord {
                    utterance_id: format!("c{c}_{j}"),
                    wav_path: format!("c{c}_{j}.wav").into(),
                    label: Emotion::ALL[c],
                    session: (1 + j % 5) as u8,
                    speaker: Speaker::F,
                    agreement: 2,
                });
            }
        }
        DatasetManifest::new(records, ".")
    }

    #[test]
    fn divisible_counts_split_exactly() {
        let m = manifest(&[50, 25, 15, 10]);
        let f = stratified_kfold(&m, 5, 1).unwrap();
        for c in f.class_counts(&m.labels()) {
            assert_eq!(c, [10, 5, 3, 2]);
        }
    }

    #[test]
    fn remainder_dealing() {
        let m = manifest(&[52]);
        let f = stratified_kfold(&m, 5, 9).unwrap();
        let sizes: Vec<usize> = f.class_counts(&m.labels()).iter().map(|c| c[0]).collect();
        assert_eq!(sizes, [11, 11, 10, 10, 10]);
    }

    #[test]
    fn seeds_permute_but_keep_counts() {
        let m = manifest(&[30, 12, 17, 9]);
        let a = stratified_kfold(&m, 5, 3).unwrap();
        assert_eq!(a, stratified_kfold(&m, 5, 3).unwrap());
        let b = stratified_kfold(&m, 5, 4).unwrap();
        assert_ne!(a.fold_of, b.fold_of);
        assert_eq!(a.class_counts(&m.labels()), b.class_counts(&m.labels()));
    }

    #[test]
    fn small_class_is_rejected_by_name() {
        let m = manifest(&[20, 4, 20, 20]);
        match stratified_kfold(&m, 5, 0) {
            Err(SerError::Stratification { class, count, k }) => {
                assert_eq!((class.as_str(), count, k), ("Happiness", 4, 5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn session_grouping_is_speaker_independent() {
        let m = manifest(&[20, 10, 10, 10]);
        let f = session_folds(&m, 5).unwrap();
        for (r, &fold) in m.records.iter().zip(&f.fold_of) {
            assert_eq!(fold, r.session as usize - 1);
        }
    }

    proptest! {
        #[test]
        fn stratification_bound_and_partition(
            counts in proptest::collection::vec(5usize..60, 1..=4),
            k in 2usize..=5,
            seed in any::<u64>(),
        ) {
            let m = manifest(&counts);
            let f = stratified_kfold(&m, k, seed).unwrap();
            let per_fold = f.class_counts(&m.labels());
            for c in 0..counts.len() {
                let col: Vec<usize> = per_fold.iter().map(|r| r[c]).collect();
                let (lo, hi) = (col.iter().min().unwrap(), col.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                prop_assert_eq!(col.iter().sum::<usize>(), counts[c]);
            }
            let mut seen = vec![0usize; m.len()];
            for fold in 0..k {
                let test = f.test_indices(fold);
                let train = f.train_indices(fold);
                prop_assert_eq!(test.len() + train.len(), m.len());
                for i in test {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
    }
}
