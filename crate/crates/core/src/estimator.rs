//! Fitting a recursive model equation by equation and propagating the implied
//! joint moments.
//!
//! Each equation `x_k = Σ_{j∈R(k)} β_jk x_j + ε_k` is fitted by least squares
//! against the true correlations. The fitted system is then read as a linear
//! Gaussian network whose errors are mutually uncorrelated, and its covariance
//! matrix Σ̂ is built node by node. Σ̂ generally differs from the true matrix
//! wherever the DAG's conditional-independence claims are false.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corr::CorrMatrix;
use crate::dag::{chain_dag, Dag};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Eigenvalues of a parent block below this magnitude are dropped by the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;
/// Largest negative residual variance treated as rounding and clamped to zero.
pub const RESID_CLAMP: f64 = 1e-10;
/// Default tolerance on `|Var̂(x_k) − 1|` for [`variance_audit`].
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Use the minimum-norm least-squares solution when a parent block is singular.
    /// When false, a singular block is an error.
    pub allow_pseudo_inverse: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { allow_pseudo_inverse: true }
    }
}

/// OLS coefficients and residual variances for every equation of a DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T = f64> {
    dag: Dag,
    betas: Vec<Vec<T>>,
    resid_var: Vec<T>,
}

impl<T: Real> FittedModel<T> {
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// Coefficients of node `k`'s equation, aligned with `dag().parents(k)`.
    pub fn betas(&self, k: usize) -> &[T] {
        &self.betas[k - 1]
    }

    pub fn resid_var(&self, k: usize) -> T {
        self.resid_var[k - 1]
    }
}

pub fn fit<T: Real>(rho: &CorrMatrix<T>, g: &Dag) -> Result<FittedModel<T>> {
    fit_with(rho, g, FitOptions::default())
}

/// `β_k = ρ_{k,R(k)} ρ_{R(k),R(k)}⁻¹` and `σ²_k = 1 − β_k·ρ_{R(k),k}` for every node.
pub fn fit_with<T: Real>(rho: &CorrMatrix<T>, g: &Dag, opts: FitOptions) -> Result<FittedModel<T>> {
    if rho.n() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), found: rho.n() });
    }
    let cutoff = T::tol(PINV_CUTOFF);
    let mut betas = Vec::with_capacity(g.n());
    let mut resid_var = Vec::with_capacity(g.n());
    for k in 1..=g.n() {
        let idx: Vec<usize> = g.parents(k).iter().map(|&p| p - 1).collect();
        if idx.is_empty() {
            betas.push(Vec::new());
            resid_var.push(T::one());
            continue;
        }
        let block = rho.matrix().select(&idx, &idx);
        let cross: Vec<T> = idx.iter().map(|&i| rho.get(i, k - 1)).collect();
        let (inv, sigma_min) = block.pinv_symmetric(cutoff);
        if sigma_min < cutoff && !opts.allow_pseudo_inverse {
            return Err(Error::SingularParentBlock { node: k, sigma_min: sigma_min.as_f64() });
        }
        let beta = inv.mul_vec(&cross);
        let s2 = T::one() - dot(&beta, &cross);
        // negative values beyond the clamp band only arise from matrices outside
        // the PSD band and are still reported as zero residual variance
        resid_var.push(s2.max(T::zero()));
        betas.push(beta);
    }
    Ok(FittedModel { dag: g.clone(), betas, resid_var })
}

/// The model-implied covariance matrix Σ̂ (0-based indexing, like [`CorrMatrix`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimatedMoments<T = f64> {
    pub sigma_hat: Matrix<T>,
}

impl<T: Real> EstimatedMoments<T> {
    /// `Var̂(x_k)` for 1-based node `k`.
    pub fn var_hat(&self, k: usize) -> T {
        self.sigma_hat[(k - 1, k - 1)]
    }

    /// `Cov̂(x_i, x_j)` for 1-based nodes.
    pub fn cov_hat(&self, i: usize, j: usize) -> T {
        self.sigma_hat[(i - 1, j - 1)]
    }

    pub fn n(&self) -> usize {
        self.sigma_hat.rows()
    }
}

/// Builds Σ̂ in node order:
/// `Σ̂[k][j] = Σ_{i∈R(k)} β_ik Σ̂[i][j]` for `j < k` and
/// `Σ̂[k][k] = β_kᵀ Σ̂[R(k),R(k)] β_k + σ²_k`.
pub fn propagate<T: Real>(m: &FittedModel<T>) -> EstimatedMoments<T> {
    let n = m.dag.n();
    let mut s = Matrix::zeros(n, n);
    for k in 1..=n {
        let row = k - 1;
        let parents: Vec<usize> = m.dag.parents(k).iter().map(|&p| p - 1).collect();
        let beta = m.betas(k);
        for j in 0..row {
            let v = parents.iter().zip(beta).fold(T::zero(), |acc, (&i, &b)| acc + b * s[(i, j)]);
            s[(row, j)] = v;
            s[(j, row)] = v;
        }
        let explained = s.select(&parents, &parents).quad_form(beta);
        s[(row, row)] = explained + m.resid_var(k);
    }
    EstimatedMoments { sigma_hat: s }
}

/// `ρ̂_ij = Σ̂_ij / √(Σ̂_ii Σ̂_jj)` for 1-based nodes.
pub fn estimated_corr<T: Real>(em: &EstimatedMoments<T>, i: usize, j: usize) -> Result<T> {
    for node in [i, j] {
        if node == 0 || node > em.n() {
            return Err(Error::NodeOutOfRange { node, n: em.n() });
        }
        let v = em.var_hat(node);
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::DegenerateVariance { node, value: v.as_f64() });
        }
    }
    Ok(em.cov_hat(i, j) / (em.var_hat(i) * em.var_hat(j)).sqrt())
}

/// Fit, propagate and read off `ρ̂_1n` in one call.
pub fn estimated_end_corr<T: Real>(rho: &CorrMatrix<T>, g: &Dag) -> Result<T> {
    let em = propagate(&fit(rho, g)?);
    estimated_corr(&em, 1, g.n())
}

/// Per-node estimated variances and whether all lie within `tolerance` of one.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceAudit<T = f64> {
    pub var_hat: Vec<T>,
    pub max_deviation: T,
    pub tolerance: T,
    pub pass: bool,
}

pub fn variance_audit<T: Real>(m: &FittedModel<T>) -> VarianceAudit<T> {
    variance_audit_with_tol(m, T::lit(AUDIT_TOL))
}

pub fn variance_audit_with_tol<T: Real>(m: &FittedModel<T>, tolerance: T) -> VarianceAudit<T> {
    let em = propagate(m);
    let var_hat: Vec<T> = (1..=em.n()).map(|k| em.var_hat(k)).collect();
    let max_deviation = var_hat.iter().map(|&v| (v - T::one()).abs()).fold(T::zero(), T::max);
    VarianceAudit { pass: max_deviation <= tolerance, var_hat, max_deviation, tolerance }
}

/// `∏_{k} ρ_{k,k+1}` over the superdiagonal: the chain model's `ρ̂_1n`.
pub fn chain_product_corr<T: Real>(rho: &CorrMatrix<T>) -> T {
    (1..rho.n()).fold(T::one(), |acc, k| acc * rho.get(k - 1, k))
}

/// The same quantity through the full fit/propagate pipeline on the chain DAG.
pub fn chain_pipeline_corr<T: Real>(rho: &CorrMatrix<T>) -> Result<T> {
    estimated_end_corr(rho, &chain_dag(rho.n())?)
}

fn node_map<T: Copy>(values: impl Iterator<Item = (usize, T)>) -> BTreeMap<String, T> {
    values.map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Serialize, Deserialize)]
struct FittedRepr<T> {
    dag: Dag,
    betas: BTreeMap<String, Vec<T>>,
    resid_var: BTreeMap<String, T>,
}

impl<T: Real> Serialize for FittedModel<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let betas = (1..=self.dag.n())
            .filter(|&k| !self.betas(k).is_empty())
            .map(|k| (k.to_string(), self.betas(k).to_vec()))
            .collect();
        let resid_var = node_map((1..=self.dag.n()).map(|k| (k, self.resid_var(k))));
        FittedRepr { dag: self.dag.clone(), betas, resid_var }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for FittedModel<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = FittedRepr::<T>::deserialize(d)?;
        let n = repr.dag.n();
        let mut betas = Vec::with_capacity(n);
        let mut resid_var = Vec::with_capacity(n);
        for k in 1..=n {
            let key = k.to_string();
            let b = repr.betas.get(&key).cloned().unwrap_or_default();
            if b.len() != repr.dag.parents(k).len() {
                return Err(D::Error::custom(format!("node {k}: {} coefficients for {} parents", b.len(), repr.dag.parents(k).len())));
            }
            let v = *repr.resid_var.get(&key).ok_or_else(|| D::Error::custom(format!("missing resid_var for node {k}")))?;
            if v < -T::tol(RESID_CLAMP) {
                return Err(D::Error::custom(format!("negative residual variance for node {k}")));
            }
            betas.push(b);
            resid_var.push(v.max(T::zero()));
        }
        Ok(FittedModel { dag: repr.dag, betas, resid_var })
    }
}

impl<T: Real> Serialize for VarianceAudit<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<T> {
            var_hat: BTreeMap<String, T>,
            max_deviation: T,
            tolerance: T,
            pass: bool,
        }
        Repr {
            var_hat: node_map(self.var_hat.iter().copied().enumerate().map(|(i, v)| (i + 1, v))),
            max_deviation: self.max_deviation,
            tolerance: self.tolerance,
            pass: self.pass,
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::validate_corr;
    use crate::dag::validate_dag;

    fn star() -> Dag {
        validate_dag(3, &[(3, vec![1, 2])].into_iter().collect()).unwrap()
    }

    fn half_chain() -> CorrMatrix {
        validate_corr(&[vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.5], vec![0.0, 0.5, 1.0]]).unwrap()
    }

    #[test]
    fn chain_fit_by_hand() {
        let m = fit(&half_chain(), &chain_dag(3).unwrap()).unwrap();
        assert_eq!(m.betas(1), &[] as &[f64]);
        assert!((m.betas(2)[0] - 0.5).abs() < 1e-15);
        assert!((m.betas(3)[0] - 0.5).abs() < 1e-15);
        assert!((m.resid_var(2) - 0.75).abs() < 1e-15);
        assert!((m.resid_var(3) - 0.75).abs() < 1e-15);
        let em = propagate(&m);
        assert!((estimated_corr(&em, 1, 3).unwrap() - 0.25).abs() < 1e-15);
        for k in 1..=3 {
            assert!((em.var_hat(k) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_fits_zero_coefficients() {
        let m = fit(&CorrMatrix::<f64>::identity(4), &validate_dag(4, &[(3, vec![1, 2]), (4, vec![3])].into_iter().collect()).unwrap()).unwrap();
        for k in 1..=4 {
            assert!(m.betas(k).iter().all(|&b| b == 0.0));
            assert_eq!(m.resid_var(k), 1.0);
        }
        assert!(variance_audit(&m).pass);
        assert_eq!(estimated_corr(&propagate(&m), 1, 4).unwrap(), 0.0);
    }

    #[test]
    fn bad_control_star() {
        let delta: f64 = -0.99;
        let gamma = (1.0 - delta * delta).sqrt();
        let rho: CorrMatrix = validate_corr(&[vec![1.0, delta, 0.0], vec![delta, 1.0, gamma], vec![0.0, gamma, 1.0]]).unwrap();
        let m = fit(&rho, &star()).unwrap();
        assert!((m.betas(3)[0] + delta / gamma).abs() < 1e-10);
        assert!((m.betas(3)[1] - 1.0 / gamma).abs() < 1e-10);
        assert!(m.resid_var(3) < 1e-12);
        let r = estimated_corr(&propagate(&m), 1, 3).unwrap();
        // −(δ/γ)/√(1 + 2(δ/γ)²) with γ = √(1 − δ²)
        let q = delta / gamma;
        assert!((r - (-q / (1.0 + 2.0 * q * q).sqrt())).abs() < 1e-12);
        assert!((r - 0.703_54).abs() < 1e-5);
    }

    #[test]
    fn star_distorts_variance() {
        let rho: CorrMatrix = validate_corr(&[vec![1.0, 0.5, 0.6], vec![0.5, 1.0, 0.6], vec![0.6, 0.6, 1.0]]).unwrap();
        let m = fit(&rho, &star()).unwrap();
        // β = (.4, .4), σ² = .52, Var̂ = .16 + .16 + .52
        assert!((m.betas(3)[0] - 0.4).abs() < 1e-14);
        assert!((m.resid_var(3) - 0.52).abs() < 1e-14);
        let audit = variance_audit(&m);
        assert!(!audit.pass);
        assert!((audit.var_hat[2] - 0.84).abs() < 1e-14);
    }

    #[test]
    fn two_node_model_reproduces_truth() {
        let rho: CorrMatrix = validate_corr(&[vec![1.0, -0.3], vec![-0.3, 1.0]]).unwrap();
        assert_eq!(estimated_end_corr(&rho, &chain_dag(2).unwrap()).unwrap(), -0.3);
    }

    #[test]
    fn singular_block_policy() {
        // x2 duplicates x1, so the parent block of node 3 is singular
        let rho: CorrMatrix = validate_corr(&[vec![1.0, 1.0, 0.5], vec![1.0, 1.0, 0.5], vec![0.5, 0.5, 1.0]]).unwrap();
        let g = validate_dag(3, &[(2, vec![1]), (3, vec![1, 2])].into_iter().collect()).unwrap();
        let m = fit(&rho, &g).unwrap();
        assert!((m.betas(3)[0] - 0.25).abs() < 1e-12 && (m.betas(3)[1] - 0.25).abs() < 1e-12);
        assert!((m.resid_var(3) - 0.75).abs() < 1e-12);
        let strict = fit_with(&rho, &g, FitOptions { allow_pseudo_inverse: false });
        assert!(matches!(strict, Err(Error::SingularParentBlock { node: 3, .. })));
    }

    #[test]
    fn errors() {
        assert!(matches!(fit(&half_chain(), &chain_dag(4).unwrap()), Err(Error::DimensionMismatch { .. })));
        let em = EstimatedMoments { sigma_hat: Matrix::<f64>::zeros(2, 2) };
        assert!(matches!(estimated_corr(&em, 1, 2), Err(Error::DegenerateVariance { node: 1, .. })));
    }

    #[test]
    fn chain_product_examples() {
        assert!((chain_product_corr(&half_chain()) - 0.25).abs() < 1e-15);
        let zero: CorrMatrix = validate_corr(&[vec![1.0, 0.0, 0.3], vec![0.0, 1.0, 0.2], vec![0.3, 0.2, 1.0]]).unwrap();
        assert_eq!(chain_product_corr(&zero), 0.0);
    }

    #[test]
    fn serialization_round_trip() {
        let m = fit(&half_chain(), &star()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""betas":{"3":["#));
        let back: FittedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let audit = serde_json::to_value(variance_audit(&m)).unwrap();
        assert!(audit["var_hat"]["3"].is_number());
    }

    #[test]
    fn single_precision_chain() {
        let rho = half_chain().cast::<f32>();
        let r = chain_pipeline_corr(&rho).unwrap();
        assert!((r - 0.25).abs() < 1e-6);
    }
}
