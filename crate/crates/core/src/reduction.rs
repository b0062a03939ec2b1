//! Collapsing a perfect-DAG model into a chain over scalar variables that
//! reports the same `ρ̂_1n` and has the same true `ρ_1n`.
//!
//! Let `C_1, …, C_K` be the cliques on the junction-tree path from node 1 to
//! node `n`, with `C_0 = {1}` and `C_{K+1} = {n}` adjoined. Because the DAG is
//! perfect, the model's conditional `p_G(x_{C_k} | x_{C_{k−1}})` equals the true
//! conditional given the separator `S_k = C_k ∩ C_{k−1}`, with conditional mean
//! `A_k x_{C_{k−1}}`, where `A_k = Σ(C_k, S_k) Σ(S_k, S_k)⁻¹` (zero on
//! `C_{k−1} \ S_k`). Setting `α_K = A_{K+1}` and `α_{k−1} = α_k A_k`, the
//! variables `z_k = α_k x_{C_k}` form a chain whose consecutive correlations
//! only involve entries inside a single clique, so the model cannot distort
//! them, and their product telescopes to `ρ̂_1n`.
//!
//! `z_K` is `x_n` itself (since `n ∈ C_K`), so the returned chain is
//! `(x_1, z_1, …, z_{K−1}, x_n)`, of length `K + 1 ≤ n`.

use serde::Serialize;

use crate::corr::CorrMatrix;
use crate::dag::{clique_path, junction_tree, Dag};
use crate::error::{Error, Result};
use crate::estimator::PINV_CUTOFF;
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Variances of collapsed variables below this are reported as degenerate.
pub const COLLAPSE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ChainReduction<T = f64> {
    /// True correlations of `(x_1, z_1, …, z_{K−1}, x_n)`.
    pub chain_corr: CorrMatrix<T>,
    /// `C_1, …, C_K` (1-based node labels, each sorted).
    pub clique_sequence: Vec<Vec<usize>>,
    /// `α_k` for `k = 1..K`, aligned with `clique_sequence[k−1]`.
    pub alphas: Vec<Vec<T>>,
    /// `A_k` for `k = 1..K+1`: `|C_k| × |C_{k−1}|`.
    pub a_matrices: Vec<Matrix<T>>,
    /// Unstandardized covariance of the chain variables.
    pub raw_cov: Matrix<T>,
}

impl<T: Real> ChainReduction<T> {
    /// Number of variables in the collapsed chain.
    pub fn len(&self) -> usize {
        self.chain_corr.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn positions(within: &[usize], nodes: &[usize]) -> Vec<usize> {
    nodes.iter().map(|v| within.binary_search(v).expect("node in clique")).collect()
}

fn zero_based(nodes: &[usize]) -> Vec<usize> {
    nodes.iter().map(|&v| v - 1).collect()
}

/// `A_k` mapping `x_{prev}` to `E[x_{cur} | x_{cur ∩ prev}]`.
fn conditional_mean<T: Real>(rho: &CorrMatrix<T>, cur: &[usize], prev: &[usize]) -> Matrix<T> {
    let sep: Vec<usize> = cur.iter().copied().filter(|v| prev.binary_search(v).is_ok()).collect();
    let s0 = zero_based(&sep);
    let (inv, _) = rho.matrix().select(&s0, &s0).pinv_symmetric(T::tol(PINV_CUTOFF));
    let coef = rho.matrix().select(&zero_based(cur), &s0).matmul(&inv);
    let cols = positions(prev, &sep);
    let mut a = Matrix::zeros(cur.len(), prev.len());
    for i in 0..cur.len() {
        for (j, &c) in cols.iter().enumerate() {
            a[(i, c)] = coef[(i, j)];
        }
    }
    a
}

/// Collapses the model `(rho, g)` into an equivalent chain.
pub fn reduce_to_chain<T: Real>(rho: &CorrMatrix<T>, g: &Dag) -> Result<ChainReduction<T>> {
    if rho.n() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), found: rho.n() });
    }
    let n = g.n();
    let jt = junction_tree(g)?;
    let path = clique_path(&jt, g)?;
    let k_len = path.len();

    // a_matrices[k] holds A_{k+1}
    let mut a_matrices = Vec::with_capacity(k_len + 1);
    a_matrices.push(conditional_mean(rho, &path[0], &[1]));
    for k in 1..k_len {
        a_matrices.push(conditional_mean(rho, &path[k], &path[k - 1]));
    }
    a_matrices.push(conditional_mean(rho, &[n], &path[k_len - 1]));

    let mut alphas = vec![Vec::new(); k_len];
    alphas[k_len - 1] = a_matrices[k_len].row(0).to_vec();
    for k in (0..k_len - 1).rev() {
        alphas[k] = Matrix::row_vector(&alphas[k + 1]).matmul(&a_matrices[k + 1]).row(0).to_vec();
    }
    for alpha in &mut alphas {
        // orient each z_k so its dominant weight is positive; a chain then
        // reduces to itself rather than to a sign-flipped copy
        let lead = alpha.iter().copied().fold(T::zero(), |m, a| if a.abs() > m.abs() { a } else { m });
        if lead < T::zero() {
            alpha.iter_mut().for_each(|a| *a = -*a);
        }
    }

    let mut weights: Vec<Vec<T>> = Vec::with_capacity(k_len + 1);
    let unit = |v: usize| (1..=n).map(|i| if i == v { T::one() } else { T::zero() }).collect::<Vec<T>>();
    weights.push(unit(1));
    for k in 0..k_len - 1 {
        let mut w = vec![T::zero(); n];
        for (&v, &a) in path[k].iter().zip(&alphas[k]) {
            w[v - 1] = a;
        }
        weights.push(w);
    }
    weights.push(unit(n));

    let sigma = rho.matrix();
    let sw: Vec<Vec<T>> = weights.iter().map(|w| sigma.mul_vec(w)).collect();
    let m = weights.len();
    let raw_cov = Matrix::from_fn(m, m, |i, j| dot(&weights[i], &sw[j]));
    for k in 1..m - 1 {
        let v = raw_cov[(k, k)];
        if !(v >= T::lit(COLLAPSE_TOL)) {
            return Err(Error::DegenerateCollapse { k, value: v.as_f64() });
        }
    }
    let sd: Vec<T> = (0..m).map(|i| raw_cov[(i, i)].sqrt()).collect();
    let corr = Matrix::from_fn(m, m, |i, j| raw_cov[(i, j)] / (sd[i] * sd[j]));
    let chain_corr = CorrMatrix::from_gram_unchecked(corr);

    Ok(ChainReduction { chain_corr, clique_sequence: path, alphas, a_matrices, raw_cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{random_corr, validate_corr};
    use crate::dag::{chain_dag, random_perfect_dag, validate_dag};
    use crate::estimator::{chain_product_corr, estimated_end_corr};

    fn dag(n: usize, edges: &[(usize, &[usize])]) -> Dag {
        validate_dag(n, &edges.iter().map(|&(k, p)| (k, p.to_vec())).collect()).unwrap()
    }

    fn check(rho: &CorrMatrix, g: &Dag) -> ChainReduction {
        let red = reduce_to_chain(rho, g).unwrap();
        let want = estimated_end_corr(rho, g).unwrap();
        assert!((chain_product_corr(&red.chain_corr) - want).abs() < 1e-9);
        assert!((red.chain_corr.get(0, red.len() - 1) - rho.get(0, g.n() - 1)).abs() < 1e-9);
        assert!(red.len() <= g.n());
        validate_corr(&red.chain_corr.to_rows()).unwrap();
        red
    }

    #[test]
    fn chain_is_a_fixed_point() {
        for seed in 0..20 {
            let rho: CorrMatrix = random_corr(5, 5, seed).unwrap();
            let red = check(&rho, &chain_dag(5).unwrap());
            assert!(red.chain_corr.matrix().max_abs_diff(rho.matrix()) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn diamond_collapses() {
        let g = dag(4, &[(2, &[1]), (3, &[1, 2]), (4, &[2, 3])]);
        for seed in 0..20 {
            let rho: CorrMatrix = random_corr(4, 4, seed).unwrap();
            let red = check(&rho, &g);
            assert_eq!(red.clique_sequence, vec![vec![1, 2, 3], vec![2, 3, 4]]);
            assert_eq!(red.len(), 3);
        }
    }

    #[test]
    fn shared_clique_gives_trivial_chain() {
        let g = dag(3, &[(2, &[1]), (3, &[1, 2])]);
        let rho: CorrMatrix = random_corr(3, 3, 7).unwrap();
        let red = check(&rho, &g);
        assert_eq!(red.len(), 2);
        assert!((red.chain_corr.get(0, 1) - rho.get(0, 2)).abs() < 1e-15);
    }

    #[test]
    fn random_perfect_dags_preserve_both_correlations() {
        for seed in 0..100 {
            let n = 3 + (seed as usize % 5);
            let g = random_perfect_dag(n, seed).unwrap();
            let rho: CorrMatrix = random_corr(n, n, seed + 1000).unwrap();
            check(&rho, &g);
        }
    }

    #[test]
    fn standardization_does_not_change_the_product() {
        let g = dag(5, &[(2, &[1]), (3, &[1, 2]), (4, &[2, 3]), (5, &[3, 4])]);
        let rho: CorrMatrix = random_corr(5, 3, 11).unwrap();
        let red = check(&rho, &g);
        let c = &red.raw_cov;
        let raw: f64 = (1..red.len()).map(|k| c[(k - 1, k)] / (c[(k - 1, k - 1)] * c[(k, k)]).sqrt()).product();
        assert!((raw - chain_product_corr(&red.chain_corr)).abs() < 1e-12);
    }

    #[test]
    fn imperfect_and_degenerate_inputs() {
        let star = dag(3, &[(3, &[1, 2])]);
        let rho: CorrMatrix = random_corr(3, 3, 1).unwrap();
        assert!(matches!(reduce_to_chain(&rho, &star), Err(Error::NotPerfect { .. })));

        // x_3 carries no information about x_1 through x_2 being pure noise
        let g = dag(4, &[(2, &[1]), (3, &[1, 2]), (4, &[2, 3])]);
        let rho = validate_corr(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(reduce_to_chain(&rho, &g), Err(Error::DegenerateCollapse { k: 1, .. })));
    }
}
