//! Dataset bundles: types, on-disk format, synthetic problems and class-wise
//! cross-validation.

mod bundle;
pub mod cv;
pub mod format;
mod synthetic;

pub(crate) use bundle::normalize_columns;
pub use bundle::{
    load_bundle, save_bundle, DatasetBundle, FslBundle, LoadedBundle, Manifest, SplitKind, SupportSet, MANIFEST,
};
pub use cv::{class_cv_splits, CvSplit};
pub use synthetic::{make_synthetic_fsl, make_synthetic_problem, SyntheticSpec};
