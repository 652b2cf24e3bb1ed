use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::format::{read_labels, read_matrix, write_labels, write_matrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    PureZsl,
    GeneralizedZsl,
    Fsl,
}

/// Seen-class training data plus class prototypes for both class sets.
///
/// Class ids are global and 0-based: seen classes are `0..p`, unseen (or
/// novel) classes are `p..p+q`. `seen_labels` therefore lie in `0..p`, while
/// test and support labels may use the full range.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// `d×N_s`, one sample per column.
    pub seen_features: Matrix,
    pub seen_labels: Vec<usize>,
    /// `k×p`.
    pub seen_prototypes: Matrix,
    /// `k×q`.
    pub unseen_prototypes: Matrix,
    /// `d×N_t`.
    pub test_features: Option<Matrix>,
    pub test_labels: Option<Vec<usize>>,
    pub split_kind: SplitKind,
}

impl DatasetBundle {
    pub fn d(&self) -> usize {
        self.seen_features.rows()
    }

    pub fn k(&self) -> usize {
        self.seen_prototypes.rows()
    }

    pub fn p(&self) -> usize {
        self.seen_prototypes.cols()
    }

    pub fn q(&self) -> usize {
        self.unseen_prototypes.cols()
    }

    pub fn n_seen(&self) -> usize {
        self.seen_features.cols()
    }

    /// `k×N_s` matrix whose column `i` is the prototype of sample `i`'s class.
    pub fn seen_label_prototypes(&self) -> Matrix {
        self.seen_prototypes.select_columns(&self.seen_labels)
    }

    /// All prototypes `[Y_s | Y_u]`, indexed by global class id.
    pub fn all_prototypes(&self) -> Matrix {
        self.seen_prototypes
            .hconcat(&self.unseen_prototypes)
            .expect("prototype matrices share k")
    }

    pub fn validate(&self) -> Result<()> {
        let (d, k, p, q) = (self.d(), self.k(), self.p(), self.q());
        if d == 0 || k == 0 || p == 0 {
            return Err(Error::invalid(format!("empty dimension: d={d}, k={k}, p={p}")));
        }
        if self.unseen_prototypes.rows() != k {
            return Err(Error::dim(format!(
                "unseen prototypes have {} rows, expected k={k}",
                self.unseen_prototypes.rows()
            )));
        }
        if self.seen_labels.len() != self.n_seen() {
            return Err(Error::dim(format!(
                "{} seen labels for {} seen samples",
                self.seen_labels.len(),
                self.n_seen()
            )));
        }
        if let Some(&bad) = self.seen_labels.iter().find(|&&l| l >= p) {
            return Err(Error::invalid(format!("seen label {bad} out of range 0..{p}")));
        }
        check_prototypes(&self.seen_prototypes, "seen")?;
        check_prototypes(&self.unseen_prototypes, "unseen")?;

        match (&self.test_features, &self.test_labels) {
            (None, None) => {}
            (Some(x), Some(l)) => {
                if x.rows() != d {
                    return Err(Error::dim(format!(
                        "test features have {} rows, expected d={d}",
                        x.rows()
                    )));
                }
                if l.len() != x.cols() {
                    return Err(Error::dim(format!(
                        "{} test labels for {} test samples",
                        l.len(),
                        x.cols()
                    )));
                }
                let allowed = match self.split_kind {
                    SplitKind::GeneralizedZsl => 0..p + q,
                    SplitKind::PureZsl | SplitKind::Fsl => p..p + q,
                };
                if let Some(&bad) = l.iter().find(|l| !allowed.contains(l)) {
                    return Err(Error::invalid(format!(
                        "test label {bad} out of range {}..{} for {:?}",
                        allowed.start, allowed.end, self.split_kind
                    )));
                }
            }
            _ => return Err(Error::invalid("test features and labels must be given together")),
        }
        Ok(())
    }

    /// Returns a copy with every feature column and prototype column scaled
    /// to unit Euclidean norm (zero columns are left untouched).
    pub fn l2_normalized(&self) -> Self {
        let mut out = self.clone();
        normalize_columns(&mut out.seen_features);
        normalize_columns(&mut out.seen_prototypes);
        normalize_columns(&mut out.unseen_prototypes);
        if let Some(x) = out.test_features.as_mut() {
            normalize_columns(x);
        }
        out
    }
}

pub(crate) fn normalize_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let col = m.column(j);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scaled: Vec<f64> = col.iter().map(|v| v / norm).collect();
            m.set_column(j, &scaled);
        }
    }
}

fn check_prototypes(y: &Matrix, which: &str) -> Result<()> {
    for j in 0..y.cols() {
        if !y.column(j).iter().any(|&v| v != 0.0) {
            return Err(Error::invalid(format!("{which} prototype {j} is all zeros")));
        }
    }
    Ok(())
}

/// Few-shot bundle: base classes take the seen role, novel classes the
/// unseen role, plus `K` labelled support shots per novel class.
#[derive(Debug, Clone, PartialEq)]
pub struct FslBundle {
    /// Base training data; `unseen_prototypes` hold the novel prototypes and
    /// the test set covers novel classes only.
    pub base: DatasetBundle,
    /// `d×(K·q)`.
    pub support_features: Matrix,
    /// Global class ids in `p..p+q`.
    pub support_labels: Vec<usize>,
}

impl FslBundle {
    pub fn novel_prototypes(&self) -> &Matrix {
        &self.base.unseen_prototypes
    }

    /// Support labels as novel-class indices in `0..q`.
    pub fn support_novel_indices(&self) -> Vec<usize> {
        let p = self.base.p();
        self.support_labels.iter().map(|&l| l - p).collect()
    }

    /// The labelled novel-class shots with their prototypes.
    pub fn support_set(&self) -> SupportSet {
        SupportSet {
            features: self.support_features.clone(),
            classes: self.support_novel_indices(),
            prototypes: self.base.unseen_prototypes.clone(),
        }
    }

    /// Shots per novel class.
    pub fn shots(&self) -> usize {
        self.support_labels.len() / self.base.q().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let (d, p, q) = (self.base.d(), self.base.p(), self.base.q());
        if self.support_features.rows() != d {
            return Err(Error::dim(format!(
                "support features have {} rows, expected d={d}",
                self.support_features.rows()
            )));
        }
        if self.support_labels.len() != self.support_features.cols() {
            return Err(Error::dim("support labels and features differ in count"));
        }
        if q == 0 {
            return Err(Error::invalid("few-shot bundle has no novel classes"));
        }
        let mut counts = vec![0usize; q];
        for &l in &self.support_labels {
            if !(p..p + q).contains(&l) {
                return Err(Error::invalid(format!("support label {l} out of range {p}..{}", p + q)));
            }
            counts[l - p] += 1;
        }
        let k = counts[0];
        if k == 0 || counts.iter().any(|&c| c != k) {
            return Err(Error::invalid(format!(
                "every novel class needs the same positive number of shots, got {counts:?}"
            )));
        }
        Ok(())
    }

    /// Keeps only the first `shots` support samples of every novel class.
    pub fn with_shots(&self, shots: usize) -> Result<Self> {
        if shots == 0 || shots > self.shots() {
            return Err(Error::invalid(format!(
                "requested {shots} shots, bundle has {}",
                self.shots()
            )));
        }
        let mut taken = vec![0usize; self.base.q()];
        let p = self.base.p();
        let keep: Vec<usize> = self
            .support_labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| {
                let c = &mut taken[l - p];
                *c += 1;
                (*c <= shots).then_some(i)
            })
            .collect();
        Ok(Self {
            base: self.base.clone(),
            support_features: self.support_features.select_columns(&keep),
            support_labels: keep.iter().map(|&i| self.support_labels[i]).collect(),
        })
    }
}

/// Labelled samples of the novel classes, with class indices local to the
/// novel prototype matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    /// `d×N_u`.
    pub features: Matrix,
    /// Novel-class index in `0..q` per sample.
    pub classes: Vec<usize>,
    /// `k×q`.
    pub prototypes: Matrix,
}

impl SupportSet {
    /// `k×N_u` prototypes of each support sample's class.
    pub fn label_prototypes(&self) -> Matrix {
        self.prototypes.select_columns(&self.classes)
    }
}

/// Either kind of bundle, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedBundle {
    Zsl(DatasetBundle),
    Fsl(FslBundle),
}

impl LoadedBundle {
    /// The ZSL-shaped view (the base part of a few-shot bundle).
    pub fn dataset(&self) -> &DatasetBundle {
        match self {
            LoadedBundle::Zsl(b) => b,
            LoadedBundle::Fsl(f) => &f.base,
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub split_kind: SplitKind,
    pub files: BTreeMap<String, String>,
}

const FILE_KEYS: [&str; 8] = [
    "seen_features",
    "seen_labels",
    "seen_prototypes",
    "unseen_prototypes",
    "test_features",
    "test_labels",
    "support_features",
    "support_labels",
];

fn file_name(key: &str) -> String {
    format!("{key}.zslb")
}

/// Writes a bundle directory: `manifest.json` plus one `ZSLB` file per array.
pub fn save_bundle(bundle: &LoadedBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = bundle.dataset();
    let mut files = BTreeMap::new();
    let mut put_matrix = |key: &str, m: &Matrix| -> Result<()> {
        let name = file_name(key);
        write_matrix(dir.join(&name), m)?;
        files.insert(key.to_string(), name);
        Ok(())
    };
    put_matrix("seen_features", &base.seen_features)?;
    put_matrix("seen_prototypes", &base.seen_prototypes)?;
    put_matrix("unseen_prototypes", &base.unseen_prototypes)?;
    if let Some(x) = &base.test_features {
        put_matrix("test_features", x)?;
    }
    if let LoadedBundle::Fsl(f) = bundle {
        put_matrix("support_features", &f.support_features)?;
    }
    let mut put_labels = |key: &str, l: &[usize]| -> Result<()> {
        let name = file_name(key);
        write_labels(dir.join(&name), l)?;
        files.insert(key.to_string(), name);
        Ok(())
    };
    put_labels("seen_labels", &base.seen_labels)?;
    if let Some(l) = &base.test_labels {
        put_labels("test_labels", l)?;
    }
    if let LoadedBundle::Fsl(f) = bundle {
        put_labels("support_labels", &f.support_labels)?;
    }

    let manifest = Manifest {
        d: base.d(),
        k: base.k(),
        p: base.p(),
        q: base.q(),
        split_kind: base.split_kind,
        files,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads and validates a bundle directory written by [`save_bundle`].
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<LoadedBundle> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if let Some(unknown) = manifest.files.keys().find(|k| !FILE_KEYS.contains(&k.as_str())) {
        return Err(Error::format(&manifest_path, format!("unknown file key {unknown:?}")));
    }

    let path_of = |key: &str| manifest.files.get(key).map(|name| dir.join(name));
    let required =
        |key: &str| path_of(key).ok_or_else(|| Error::format(&manifest_path, format!("manifest lacks files.{key}")));
    let matrix = |key: &str, rows: usize, cols: Option<usize>| -> Result<Matrix> {
        let path = required(key)?;
        let m = read_matrix(&path)?;
        if m.rows() != rows || cols.is_some_and(|c| c != m.cols()) {
            return Err(Error::format(
                &path,
                format!(
                    "{key} is {}x{}, manifest implies {rows}x{}",
                    m.rows(),
                    m.cols(),
                    cols.map_or("N".to_string(), |c| c.to_string())
                ),
            ));
        }
        Ok(m)
    };
    let Manifest { d, k, p, q, .. } = manifest;

    let seen_features = matrix("seen_features", d, None)?;
    let seen_labels = read_labels(required("seen_labels")?)?;
    let seen_prototypes = matrix("seen_prototypes", k, Some(p))?;
    let unseen_prototypes = matrix("unseen_prototypes", k, Some(q))?;
    let (test_features, test_labels) = match (path_of("test_features"), path_of("test_labels")) {
        (None, None) => (None, None),
        (Some(_), Some(lp)) => (Some(matrix("test_features", d, None)?), Some(read_labels(lp)?)),
        _ => {
            return Err(Error::format(
                &manifest_path,
                "test_features and test_labels must be listed together",
            ))
        }
    };
    let base = DatasetBundle {
        seen_features,
        seen_labels,
        seen_prototypes,
        unseen_prototypes,
        test_features,
        test_labels,
        split_kind: manifest.split_kind,
    };

    let loaded = if manifest.split_kind == SplitKind::Fsl {
        let support_features = matrix("support_features", d, None)?;
        let support_labels = read_labels(required("support_labels")?)?;
        let fsl = FslBundle {
            base,
            support_features,
            support_labels,
        };
        fsl.validate()?;
        LoadedBundle::Fsl(fsl)
    } else {
        base.validate()?;
        LoadedBundle::Zsl(base)
    };
    Ok(loaded)
}
