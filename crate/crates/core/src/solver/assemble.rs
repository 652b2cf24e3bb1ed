//! Normal equations `Â W + W B̂ = Ĉ` of one competitive iteration.

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::{accumulate_cross, accumulate_gram, Matrix};

/// Second-moment sums of labelled data: `Σ x xᵀ`, `Σ y_l y_lᵀ`, `Σ x y_lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeenStats {
    pub xx: Matrix,
    pub yy: Matrix,
    pub xy: Matrix,
    pub count: usize,
}

impl SeenStats {
    /// Statistics of paired columns: features `x` (`d×N`) and label
    /// prototypes `y` (`k×N`).
    pub fn from_pairs(x: &Matrix, y: &Matrix) -> Result<Self> {
        Ok(Self {
            xx: accumulate_gram(x, None)?,
            yy: accumulate_gram(y, None)?,
            xy: accumulate_cross(x, y, None)?,
            count: x.cols(),
        })
    }

    pub fn from_bundle(bundle: &DatasetBundle) -> Result<Self> {
        Self::from_pairs(&bundle.seen_features, &bundle.seen_label_prototypes())
    }

    pub fn d(&self) -> usize {
        self.xx.rows()
    }

    pub fn k(&self) -> usize {
        self.yy.rows()
    }

    /// `Σ ‖Wᵀx − y‖² + ‖x − W y‖²` over the summarized samples.
    pub fn bidirectional_loss(&self, w: &Matrix) -> Result<f64> {
        // tr(Wᵀ XXᵀ W) + tr(W YYᵀ Wᵀ) − 4 tr(Wᵀ XYᵀ) + tr(XXᵀ) + tr(YYᵀ)
        let aw = self.xx.matmul(w)?;
        let wb = w.matmul(&self.yy)?;
        let mut s = 0.0;
        for (i, (&wi, (&a, &b))) in w
            .as_slice()
            .iter()
            .zip(aw.as_slice().iter().zip(wb.as_slice()))
            .enumerate()
        {
            s += wi * (a + b) - 4.0 * wi * self.xy.as_slice()[i];
        }
        let tr_a: f64 = (0..self.d()).map(|i| self.xx[(i, i)]).sum();
        let tr_b: f64 = (0..self.k()).map(|i| self.yy[(i, i)]).sum();
        Ok(s + tr_a + tr_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    /// `d×d`, symmetric positive definite for `μ < 1`, `β > 0`.
    pub a: Matrix,
    /// `k×k`, symmetric, possibly indefinite.
    pub b: Matrix,
    /// `d×k`.
    pub c: Matrix,
}

/// Competitive contributions of synthesized samples.
pub struct SynthTerms<'a> {
    /// `d×N_g` synthesized features.
    pub features: &'a Matrix,
    /// `k×q` candidate class prototypes.
    pub prototypes: &'a Matrix,
    /// `N_g×q`.
    pub delta: &'a Matrix,
    /// Weight of `Σ x xᵀ` per unit `α_t` (the common row sum of `δ`, `1 − μ`).
    pub feature_weight: f64,
}

/// Assembles the normal equations from precomputed statistics.
///
/// `Â = (1−α_t)·A₀ + α_t·A_u + α_t·w·Σ_g x xᵀ + βI`, with `B̂`, `Ĉ` built the
/// same way from the `δ`-weighted prototype sums. `support` carries the
/// optional labelled target-class term (`A_u`, `B_u`, `C_u`). When
/// `alpha_t == 0` only the base term and the ridge enter.
pub fn assemble_from_stats(
    base: &SeenStats,
    support: Option<&SeenStats>,
    synth: Option<&SynthTerms<'_>>,
    alpha_t: f64,
    beta: f64,
) -> Result<NormalEquations> {
    if !(0.0..1.0).contains(&alpha_t) {
        return Err(Error::invalid(format!("alpha_t must lie in [0, 1), got {alpha_t}")));
    }
    let (d, k) = (base.d(), base.k());
    let keep = 1.0 - alpha_t;
    let mut a = base.xx.scale(keep);
    let mut b = base.yy.scale(keep);
    let mut c = base.xy.scale(2.0 * keep);

    if alpha_t > 0.0 {
        if let Some(s) = support {
            if s.d() != d || s.k() != k {
                return Err(Error::dim("support statistics do not match base dimensions"));
            }
            a.add_scaled(alpha_t, &s.xx)?;
            b.add_scaled(alpha_t, &s.yy)?;
            c.add_scaled(2.0 * alpha_t, &s.xy)?;
        }
        if let Some(t) = synth {
            add_synth_terms(&mut a, &mut b, &mut c, t, alpha_t)?;
        }
    }
    a.add_diagonal(beta);
    b.add_diagonal(beta);
    Ok(NormalEquations { a, b, c })
}

fn add_synth_terms(a: &mut Matrix, b: &mut Matrix, c: &mut Matrix, t: &SynthTerms<'_>, alpha_t: f64) -> Result<()> {
    let (d, n) = t.features.shape();
    let (k, q) = t.prototypes.shape();
    if d != a.rows() || k != b.rows() || t.delta.shape() != (n, q) {
        return Err(Error::dim(format!(
            "synth terms: features {}x{}, prototypes {}x{}, delta {}x{}",
            d,
            n,
            k,
            q,
            t.delta.rows(),
            t.delta.cols()
        )));
    }
    if n == 0 {
        return Ok(());
    }
    a.add_scaled(alpha_t * t.feature_weight, &accumulate_gram(t.features, None)?)?;

    // Σ_i Σ_j δ_ij y_j y_jᵀ = Σ_j (Σ_i δ_ij) y_j y_jᵀ
    let mut class_mass = vec![0.0; q];
    for i in 0..n {
        for (m, &v) in class_mass.iter_mut().zip(t.delta.row(i)) {
            *m += v;
        }
    }
    b.add_scaled(alpha_t, &accumulate_gram(t.prototypes, Some(&class_mass))?)?;

    // Σ_i x_i (Σ_j δ_ij y_j)ᵀ, skipping the zero entries of each δ row.
    let mut targets = Matrix::zeros(k, n);
    for i in 0..n {
        for (j, &v) in t.delta.row(i).iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for r in 0..k {
                targets[(r, i)] += v * t.prototypes[(r, j)];
            }
        }
    }
    c.add_scaled(2.0 * alpha_t, &accumulate_cross(t.features, &targets, None)?)?;
    Ok(())
}

/// Normal equations for a ZSL bundle and a synthesized set.
pub fn assemble_normal_equations(
    bundle: &DatasetBundle,
    synth_features: &Matrix,
    delta: &Matrix,
    alpha_t: f64,
    mu: f64,
    beta: f64,
) -> Result<NormalEquations> {
    if !(mu < 1.0) {
        return Err(Error::invalid(format!("mu must be below 1, got {mu}")));
    }
    let stats = SeenStats::from_bundle(bundle)?;
    let terms = SynthTerms {
        features: synth_features,
        prototypes: &bundle.unseen_prototypes,
        delta,
        feature_weight: 1.0 - mu,
    };
    assemble_from_stats(&stats, None, Some(&terms), alpha_t, beta)
}
