//! Class-wise cross-validation: folds partition the seen classes, and each
//! fold's validation classes play the unseen role.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::bundle::{DatasetBundle, SplitKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    /// Seen class ids kept for training, ascending.
    pub train_classes: Vec<usize>,
    /// Seen class ids held out as pseudo-unseen, ascending.
    pub val_classes: Vec<usize>,
}

impl CvSplit {
    /// Builds the pseudo-ZSL problem for this split.
    ///
    /// Training classes are relabelled `0..p'` in ascending id order; the
    /// held-out samples become the test set with ids `p'..p'+q'`.
    pub fn materialize(&self, bundle: &DatasetBundle) -> Result<DatasetBundle> {
        if self.train_classes.is_empty() || self.val_classes.is_empty() {
            return Err(Error::invalid("split needs both training and validation classes"));
        }
        let p = bundle.p();
        let mut role = vec![None; p];
        for (i, &c) in self.train_classes.iter().enumerate() {
            role[c] = Some((true, i));
        }
        for (j, &c) in self.val_classes.iter().enumerate() {
            role[c] = Some((false, self.train_classes.len() + j));
        }
        let (mut train_idx, mut train_labels) = (Vec::new(), Vec::new());
        let (mut val_idx, mut val_labels) = (Vec::new(), Vec::new());
        for (i, &l) in bundle.seen_labels.iter().enumerate() {
            match role[l] {
                Some((true, id)) => {
                    train_idx.push(i);
                    train_labels.push(id);
                }
                Some((false, id)) => {
                    val_idx.push(i);
                    val_labels.push(id);
                }
                None => {}
            }
        }
        let out = DatasetBundle {
            seen_features: bundle.seen_features.select_columns(&train_idx),
            seen_labels: train_labels,
            seen_prototypes: bundle.seen_prototypes.select_columns(&self.train_classes),
            unseen_prototypes: bundle.seen_prototypes.select_columns(&self.val_classes),
            test_features: Some(bundle.seen_features.select_columns(&val_idx)),
            test_labels: Some(val_labels),
            split_kind: SplitKind::PureZsl,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Partitions the `p` seen classes into `folds` groups after a seeded shuffle.
pub fn class_cv_splits(bundle: &DatasetBundle, folds: usize, seed: u64) -> Result<Vec<CvSplit>> {
    let p = bundle.p();
    if folds == 0 || folds > p {
        return Err(Error::invalid(format!("folds must be in 1..={p}, got {folds}")));
    }
    let mut classes: Vec<usize> = (0..p).collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let splits = (0..folds)
        .map(|f| {
            let mut val: Vec<usize> = classes.iter().copied().skip(f).step_by(folds).collect();
            val.sort_unstable();
            let train = (0..p).filter(|c| val.binary_search(c).is_err()).collect();
            CvSplit {
                train_classes: train,
                val_classes: val,
            }
        })
        .collect();
    Ok(splits)
}
