//! Closed-form ceilings on the false correlation and the constructions that attain them.
//!
//! * Gaussian chains: with `θ = arccos(r)/(n−1)`, no `n`-variable recursive model
//!   that preserves individual variances can report more than `cos(θ)^(n−1)`.
//!   Equally spaced unit vectors on the great circle through the two endpoint
//!   vectors attain it.
//! * Single-equation models (variance constraint dropped, `r = 0`): the supremum is
//!   `1/√2`, approached by a "bad control" that is almost perfectly anti-correlated
//!   with `x_1`.
//! * Uniform binary chains: the ceiling is `(1 − (1−r)/(n−1))^(n−1)`, attained by
//!   taking signs of an equiangular Gaussian construction.

use serde::Serialize;

use crate::corr::CorrMatrix;
use crate::dag::{chain_dag, validate_dag, Dag};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{clamped_acos, Real};

/// Smallest admissible distance of `delta` from ±1 in [`single_eq_construction`].
pub const DELTA_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct BoundResult<T = f64> {
    pub r: T,
    pub n: usize,
    /// `arccos(r)/(n−1)` in radians.
    pub theta: T,
    #[serde(rename = "bound")]
    pub value: T,
}

fn check_r<T: Real>(r: T) -> Result<T> {
    let band = T::tol(1e-12);
    if r.is_nan() || r < -T::one() - band || r > T::one() + band {
        return Err(Error::BadArguments(format!("r = {r} must lie in [-1, 1]")));
    }
    Ok(r.max(-T::one()).min(T::one()))
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::BadArguments(format!("n = {n} must be at least 2")));
    }
    Ok(())
}

/// `θ_{r,n} = arccos(r)/(n−1)`.
pub fn chain_angle<T: Real>(r: T, n: usize) -> Result<T> {
    let r = check_r(r)?;
    check_n(n)?;
    let total = clamped_acos(r).expect("r already clamped");
    Ok(total / T::from_usize_lossy(n - 1))
}

/// `cos(θ_{r,n})^(n−1)`: the largest `ρ̂_1n` of any variance-preserving
/// `n`-variable recursive model when the true correlation is `r`.
pub fn theorem1_bound<T: Real>(r: T, n: usize) -> Result<BoundResult<T>> {
    let theta = chain_angle(r, n)?;
    let r = check_r(r)?;
    // a single edge reports r itself; skip the cos(arccos r) round trip
    let value = if n == 2 { r } else { theta.cos().powi((n - 1) as i32) };
    Ok(BoundResult { r, n, theta, value })
}

/// The attaining pair: `ρ_ij = cos(|i−j|·θ_{r,n})` with the chain DAG.
///
/// These are the correlations of `x_k = s₁cos((k−1)θ) + s₂sin((k−1)θ)` for
/// independent standard normal `s₁, s₂`.
pub fn optimal_construction<T: Real>(r: T, n: usize) -> Result<(CorrMatrix<T>, Dag)> {
    let theta = chain_angle(r, n)?;
    let r = check_r(r)?;
    let mut m = Matrix::from_fn(n, n, |i, j| (T::from_usize_lossy(i.abs_diff(j)) * theta).cos());
    // pin the end-to-end entry to r itself rather than cos(arccos r)
    m[(0, n - 1)] = r;
    m[(n - 1, 0)] = r;
    Ok((CorrMatrix::from_gram_unchecked(m), chain_dag(n)?))
}

/// The two-factor loadings `(cos((k−1)θ), sin((k−1)θ))` behind [`optimal_construction`].
pub fn optimal_construction_vectors<T: Real>(r: T, n: usize) -> Result<Vec<Vec<T>>> {
    let theta = chain_angle(r, n)?;
    Ok((0..n)
        .map(|k| {
            let a = T::from_usize_lossy(k) * theta;
            vec![a.cos(), a.sin()]
        })
        .collect())
}

/// `ρ₁₂ = δ, ρ₁₃ = 0, ρ₂₃ = √(1−δ²)` with the single-equation DAG `1 → 3 ← 2`.
pub fn single_eq_construction<T: Real>(delta: T) -> Result<(CorrMatrix<T>, Dag)> {
    if delta.is_nan() || delta.abs() > T::one() - T::lit(DELTA_MARGIN) {
        return Err(Error::DeltaOutOfRange(delta.as_f64()));
    }
    let gamma = (T::one() - delta * delta).sqrt();
    let z = T::zero();
    let o = T::one();
    let m = Matrix::from_rows(&[vec![o, delta, z], vec![delta, o, gamma], vec![z, gamma, o]]).expect("square");
    let g = validate_dag(3, &[(3, vec![1, 2])].into_iter().collect())?;
    Ok((CorrMatrix::from_gram_unchecked(m), g))
}

/// `ρ̂_13 = −δ/√(1+δ²)` of the single-equation construction.
pub fn single_eq_corr<T: Real>(delta: T) -> T {
    -delta / (T::one() + delta * delta).sqrt()
}

/// `Var̂(x_3) = (1+δ²)/(1−δ²)`, which diverges as `δ → ±1`.
pub fn single_eq_var_hat<T: Real>(delta: T) -> T {
    (T::one() + delta * delta) / (T::one() - delta * delta)
}

/// The single-equation supremum `1/√2` at `r = 0`.
pub fn single_eq_sup<T: Real>() -> T {
    T::FRAC_1_SQRT_2()
}

/// `(1 − (1−r)/(n−1))^(n−1)`: the largest `ρ̂_1n` of a chain over uniform binary variables.
pub fn binary_bound<T: Real>(r: T, n: usize) -> Result<T> {
    let r = check_r(r)?;
    check_n(n)?;
    let m = T::from_usize_lossy(n - 1);
    Ok((T::one() - (T::one() - r) / m).powi((n - 1) as i32))
}

/// Correlation `1 − 2θ/π` of the signs of two standard Gaussians whose
/// representing vectors meet at angle `θ`.
pub fn sign_corr<T: Real>(theta: T) -> Result<T> {
    if theta.is_nan() || theta < T::zero() || theta > T::PI() {
        return Err(Error::BadAngle(theta.as_f64()));
    }
    Ok(T::one() - T::lit(2.0) * theta / T::PI())
}

/// Sign-of-Gaussian realization of the binary bound: vectors equally spaced over a
/// total angle `π(1−r)/2`, so the end-to-end sign correlation is `r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SignConstruction<T = f64> {
    pub r: T,
    pub n: usize,
    pub total_angle: T,
    pub step_angle: T,
    /// Correlation of consecutive signs, `1 − (1−r)/(n−1)`.
    pub consecutive_corr: T,
    /// Pairwise sign correlations `1 − 2|i−j|·step/π`.
    pub correlations: CorrMatrix<T>,
    /// `consecutive_corr^(n−1)`, the chain model's `ρ̂_1n`.
    pub product: T,
}

pub fn sign_construction<T: Real>(r: T, n: usize) -> Result<SignConstruction<T>> {
    let r = check_r(r)?;
    check_n(n)?;
    let total_angle = T::PI() * (T::one() - r) / T::lit(2.0);
    let step_angle = total_angle / T::from_usize_lossy(n - 1);
    let consecutive_corr = sign_corr(step_angle)?;
    let m = Matrix::from_fn(n, n, |i, j| {
        let angle = (T::from_usize_lossy(i.abs_diff(j)) * step_angle).min(T::PI());
        sign_corr(angle).expect("angle within [0, pi]")
    });
    Ok(SignConstruction {
        r,
        n,
        total_angle,
        step_angle,
        consecutive_corr,
        correlations: CorrMatrix::from_gram_unchecked(m),
        product: consecutive_corr.powi((n - 1) as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::validate_corr;
    use crate::estimator::{chain_pipeline_corr, chain_product_corr, estimated_end_corr, fit, propagate};

    #[test]
    fn bound_table_at_zero() {
        let expect = [(2, 0.0), (3, 0.5), (4, 0.649_519_052_838_329), (5, 0.728_553_390_593_273_7)];
        for (n, v) in expect {
            let b = theorem1_bound::<f64>(0.0, n).unwrap();
            assert!((b.value - v).abs() < 1e-12, "n = {n}: {}", b.value);
        }
    }

    #[test]
    fn bound_edge_cases() {
        for n in 2..10 {
            assert!((theorem1_bound::<f64>(1.0, n).unwrap().value - 1.0).abs() < 1e-15);
        }
        for r in [-1.0f64, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(theorem1_bound(r, 2).unwrap().value, r);
        }
        assert!(theorem1_bound(1.0 + 1e-13, 3).is_ok());
        assert!(matches!(theorem1_bound(1.1, 3), Err(Error::BadArguments(_))));
        assert!(matches!(theorem1_bound(0.0, 1), Err(Error::BadArguments(_))));
    }

    #[test]
    fn bound_is_increasing_and_tends_to_one() {
        for r in [-0.9, -0.5, 0.0, 0.5, 0.9] {
            let values: Vec<f64> = (2..=64).map(|n| theorem1_bound(r, n).unwrap().value).collect();
            assert!(values.windows(2).all(|w| w[1] > w[0]));
            assert!(values.iter().all(|&v| v >= r - 1e-15));
            let big = (2..).find(|&n| theorem1_bound(r, n).unwrap().value > 0.999).unwrap();
            assert!(theorem1_bound(r, big + 100).unwrap().value > 0.999);
        }
    }

    #[test]
    fn constructions_attain_the_bound() {
        let (m, g) = optimal_construction(0.0f64, 3).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.get(0, 1) - s).abs() < 1e-15 && (m.get(1, 2) - s).abs() < 1e-15);
        assert_eq!(m.get(0, 2), 0.0);
        assert!((estimated_end_corr(&m, &g).unwrap() - 0.5).abs() < 1e-12);

        let (m, _) = optimal_construction(0.0f64, 2).unwrap();
        assert_eq!(m, CorrMatrix::identity(2));

        let (m, g) = optimal_construction(-0.5f64, 6).unwrap();
        let want = (2.0 * std::f64::consts::PI / 15.0).cos().powi(5);
        assert!((estimated_end_corr(&m, &g).unwrap() - want).abs() < 1e-9);
        assert_eq!(m.get(0, 5), -0.5);
        validate_corr(&m.to_rows()).unwrap();
    }

    #[test]
    fn construction_factor_loadings_match_matrix() {
        let v = optimal_construction_vectors(0.3f64, 5).unwrap();
        let (m, _) = optimal_construction(0.3, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = v[i][0] * v[j][0] + v[i][1] * v[j][1];
                assert!((d - m.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn chain_product_of_construction() {
        let (m, _) = optimal_construction(0.0f64, 4).unwrap();
        assert!((chain_product_corr(&m) - (std::f64::consts::PI / 6.0).cos().powi(3)).abs() < 1e-15);
        assert!((chain_product_corr(&m) - 0.649_519).abs() < 1e-6);
        assert!((chain_pipeline_corr(&m).unwrap() - chain_product_corr(&m)).abs() < 1e-12);
    }

    #[test]
    fn single_equation() {
        let (m, g) = single_eq_construction(0.0f64).unwrap();
        assert!(estimated_end_corr(&m, &g).unwrap().abs() < 1e-15);
        let (m, g) = single_eq_construction(-0.99f64).unwrap();
        let r = estimated_end_corr(&m, &g).unwrap();
        assert!((r - single_eq_corr(-0.99)).abs() < 1e-9);
        assert!((r - 0.703_54).abs() < 1e-5 && r < single_eq_sup());
        let var = propagate(&fit(&m, &g).unwrap()).var_hat(3);
        assert!((var - single_eq_var_hat(-0.99)).abs() < 1e-9);
        assert!(matches!(single_eq_construction(-1.0), Err(Error::DeltaOutOfRange(_))));
        assert!(single_eq_construction(-(1.0 - 2e-6)).is_ok());
    }

    #[test]
    fn single_equation_beats_three_variable_chain_but_loses_at_five() {
        assert!(theorem1_bound(0.0, 3).unwrap().value < single_eq_sup::<f64>());
        assert!(theorem1_bound(0.0, 4).unwrap().value < single_eq_sup::<f64>());
        for n in 5..500 {
            assert!(theorem1_bound(0.0, n).unwrap().value > single_eq_sup::<f64>());
        }
    }

    #[test]
    fn binary_bounds() {
        assert_eq!(binary_bound(0.0f64, 3).unwrap(), 0.25);
        assert!((binary_bound(0.0f64, 4).unwrap() - 8.0 / 27.0).abs() < 1e-15);
        for n in 2..20 {
            assert_eq!(binary_bound(1.0f64, n).unwrap(), 1.0);
        }
        for r in [-0.8f64, 0.0, 0.4] {
            assert!((binary_bound(r, 2).unwrap() - r).abs() < 1e-15);
        }
        let seq: Vec<f64> = (2..=2000).map(|n| binary_bound(0.0, n).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] > w[0]));
        assert!((seq.last().unwrap() - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn binary_never_exceeds_gaussian() {
        for n in 2..=30 {
            for i in 0..=40 {
                let r = -1.0 + 0.05 * i as f64;
                assert!(binary_bound(r, n).unwrap() <= theorem1_bound(r, n).unwrap().value + 1e-12);
            }
        }
    }

    #[test]
    fn sign_corr_values() {
        assert_eq!(sign_corr(0.0).unwrap(), 1.0);
        assert!(sign_corr(std::f64::consts::FRAC_PI_2).unwrap().abs() < 1e-15);
        assert!((sign_corr(std::f64::consts::FRAC_PI_4).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(sign_corr(-0.1), Err(Error::BadAngle(_))));
        assert!(matches!(sign_corr(4.0), Err(Error::BadAngle(_))));
    }

    #[test]
    fn sign_constructions() {
        let c = sign_construction(0.0f64, 3).unwrap();
        assert!((c.consecutive_corr - 0.5).abs() < 1e-15);
        assert!((c.product - 0.25).abs() < 1e-15);
        assert!(c.correlations.get(0, 2).abs() < 1e-15);

        let c = sign_construction(0.0f64, 2).unwrap();
        assert!((c.step_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(c.correlations.get(0, 1).abs() < 1e-15);

        let c = sign_construction(0.0f64, 11).unwrap();
        assert!((c.consecutive_corr - 0.9).abs() < 1e-15);
        assert!((c.product - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((c.product - 0.348_678_440_1).abs() < 1e-10);
        for r in [-0.6f64, 0.0, 0.5] {
            for n in 2..12 {
                let c = sign_construction(r, n).unwrap();
                assert!((c.product - binary_bound(r, n).unwrap()).abs() < 1e-12);
                assert!((c.correlations.get(0, n - 1) - r).abs() < 1e-12);
                validate_corr(&c.correlations.to_rows()).unwrap();
            }
        }
    }

    #[test]
    fn single_precision_bounds() {
        let b = theorem1_bound(0.0f32, 5).unwrap();
        assert!((b.value - 0.728_553_4).abs() < 1e-6);
        let (m, g) = optimal_construction(0.0f32, 4).unwrap();
        assert!((estimated_end_corr(&m, &g).unwrap() - 0.649_519).abs() < 1e-5);
    }
}
