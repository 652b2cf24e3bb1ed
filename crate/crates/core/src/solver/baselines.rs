//! Single-direction ridge baselines.

use super::assemble::SeenStats;
use super::SolverConfig;
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};

fn seen_stats(bundle: &DatasetBundle, cfg: &SolverConfig) -> Result<SeenStats> {
    if !(cfg.beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {}", cfg.beta)));
    }
    if bundle.n_seen() == 0 {
        return Err(Error::invalid("no seen samples to fit"));
    }
    SeenStats::from_bundle(bundle)
}

/// Forward projection: minimizes `Σ‖Wᵀx − y‖² + β‖W‖²`, i.e.
/// `(Σxxᵀ + βI) W = Σxyᵀ`.
pub fn fit_fpl(bundle: &DatasetBundle, cfg: &SolverConfig) -> Result<Matrix> {
    let stats = seen_stats(bundle, cfg)?;
    let mut a = stats.xx;
    a.add_diagonal(cfg.beta);
    lu_solve(&a, &stats.xy).ok_or_else(|| Error::SingularPencil("forward normal matrix is singular".into()))
}

/// Reverse projection: minimizes `Σ‖x − Wy‖² + β‖W‖²`, i.e.
/// `W = Σxyᵀ (Σyyᵀ + βI)⁻¹`.
pub fn fit_rpl(bundle: &DatasetBundle, cfg: &SolverConfig) -> Result<Matrix> {
    let stats = seen_stats(bundle, cfg)?;
    let mut b = stats.yy;
    b.add_diagonal(cfg.beta);
    // (Σyyᵀ + βI) is symmetric, so Wᵀ solves it against (Σxyᵀ)ᵀ.
    let wt = lu_solve(&b, &stats.xy.transpose())
        .ok_or_else(|| Error::SingularPencil("reverse normal matrix is singular".into()))?;
    Ok(wt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitKind;

    fn scalar() -> DatasetBundle {
        DatasetBundle {
            seen_features: Matrix::from_rows(&[&[2.0]]),
            seen_labels: vec![0],
            seen_prototypes: Matrix::from_rows(&[&[1.0]]),
            unseen_prototypes: Matrix::from_rows(&[&[1.0]]),
            test_features: None,
            test_labels: None,
            split_kind: SplitKind::PureZsl,
        }
    }

    #[test]
    fn scalar_closed_forms() {
        let cfg = SolverConfig::default();
        let f = fit_fpl(&scalar(), &cfg).unwrap()[(0, 0)];
        let r = fit_rpl(&scalar(), &cfg).unwrap()[(0, 0)];
        assert!((f - 2.0 / 4.01).abs() < 1e-15);
        assert!((r - 2.0 / 1.01).abs() < 1e-15);
        assert!((f - 0.4988).abs() < 1e-4 && (r - 1.9802).abs() < 1e-4);
    }
}
