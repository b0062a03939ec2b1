//! Invariants checked over randomly generated inputs.

use std::collections::BTreeMap;

use falsecorr::binary::{binary_propagate, fit_binary_chain, random_binary_joint, BinaryJoint};
use falsecorr::bounds::{binary_bound, theorem1_bound};
use falsecorr::corr::{gram_factor, gram_from_vectors, random_corr, validate_corr, CorrMatrix};
use falsecorr::dag::{chain_dag, junction_tree, maximal_cliques, random_perfect_dag, validate_dag, Dag};
use falsecorr::estimator::{chain_pipeline_corr, chain_product_corr, estimated_corr, fit, propagate, variance_audit_with_tol, FittedModel};
use falsecorr::reduction::reduce_to_chain;
use falsecorr::search::{best_chain_subset, synth_pool, PoolProblem, Strategy};
use proptest::prelude::*;

fn arbitrary_dag(n: usize, mask: u64) -> Dag {
    let mut parents = BTreeMap::new();
    let mut bit = 0;
    for k in 2..=n {
        let list: Vec<usize> = (1..k)
            .filter(|_| {
                bit += 1;
                mask >> (bit % 64) & 1 == 1
            })
            .collect();
        parents.insert(k, list);
    }
    validate_dag(n, &parents).unwrap()
}

/// Correlation matrix of a linear system over `g` with the given coefficients:
/// `x = L e` with `L = (I − B)⁻¹` by forward substitution, unit noise variances.
fn consistent_corr(g: &Dag, coefs: &[f64]) -> CorrMatrix {
    let n = g.n();
    let mut load = vec![vec![0.0; n]; n];
    let mut c = coefs.iter().cycle();
    for k in 1..=n {
        load[k - 1][k - 1] = 1.0;
        for &p in g.parents(k) {
            let b = *c.next().unwrap();
            for j in 0..n {
                load[k - 1][j] += b * load[p - 1][j];
            }
        }
    }
    let cov: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|t| load[i][t] * load[j][t]).sum()).collect()).collect();
    let raw: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).collect()).collect();
    validate_corr(&raw).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_factor_round_trips(n in 2usize..9, seed in any::<u64>()) {
        let rho: CorrMatrix = random_corr(n, n, seed).unwrap();
        let back = gram_from_vectors(&gram_factor(&rho));
        prop_assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-9);
        prop_assert!(rho.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn perfect_models_preserve_moments(n in 2usize..9, gs in any::<u64>(), rs in any::<u64>(), dim in 2usize..9) {
        let g = random_perfect_dag(n, gs).unwrap();
        let rho: CorrMatrix = random_corr(n, dim.min(n).max(2), rs).unwrap();
        let m = fit(&rho, &g).unwrap();
        prop_assert!(variance_audit_with_tol(&m, 1e-9).pass);
        let em = propagate(&m);
        for clique in maximal_cliques(&g).unwrap() {
            for &a in &clique {
                for &b in &clique {
                    prop_assert!((em.cov_hat(a, b) - rho.get(a - 1, b - 1)).abs() < 1e-9);
                }
            }
        }
        let hat = estimated_corr(&em, 1, n).unwrap();
        prop_assert!(hat <= theorem1_bound(rho.get(0, n - 1), n).unwrap().value + 1e-9);
    }

    #[test]
    fn chain_law(n in 2usize..13, seed in any::<u64>()) {
        let rho: CorrMatrix = random_corr(n, n, seed).unwrap();
        prop_assert!((chain_product_corr(&rho) - chain_pipeline_corr(&rho).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn consistent_matrices_are_reproduced(n in 2usize..8, mask in any::<u64>(), coefs in prop::collection::vec(-1.5f64..1.5, 1..30)) {
        let g = arbitrary_dag(n, mask);
        let rho = consistent_corr(&g, &coefs);
        let em = propagate(&fit(&rho, &g).unwrap());
        prop_assert!(em.sigma_hat.max_abs_diff(rho.matrix()) < 1e-9);
    }

    #[test]
    fn reduction_preserves_estimate(n in 3usize..8, gs in any::<u64>(), rs in any::<u64>()) {
        let g = random_perfect_dag(n, gs).unwrap();
        let rho: CorrMatrix = random_corr(n, n, rs).unwrap();
        let red = reduce_to_chain(&rho, &g).unwrap();
        let direct = estimated_corr(&propagate(&fit(&rho, &g).unwrap()), 1, n).unwrap();
        prop_assert!((chain_product_corr(&red.chain_corr) - direct).abs() < 1e-9);
        prop_assert!(red.len() <= n);
        prop_assert!(validate_corr(&red.chain_corr.to_rows()).is_ok());
    }

    #[test]
    fn junction_trees_are_trees(n in 2usize..10, seed in any::<u64>()) {
        let g = random_perfect_dag(n, seed).unwrap();
        let jt = junction_tree(&g).unwrap();
        prop_assert!(jt.is_tree());
        prop_assert!(jt.running_intersection_holds());
    }

    #[test]
    fn binary_chain_bound(n in 2usize..9, seed in any::<u64>()) {
        let j: BinaryJoint = random_binary_joint(n, seed).unwrap();
        let m = fit_binary_chain(&j).unwrap();
        let hat = binary_propagate(&m).rho_hat;
        prop_assert!(hat <= binary_bound(j.corr(1, n), n).unwrap() + 1e-9);
        // the fitted chain keeps every marginal uniform
        let mut plus = m.first[1];
        for t in &m.conditionals {
            plus = (1.0 - plus) * t[0][1] + plus * t[1][1];
            prop_assert!((plus - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_bound_below_gaussian(n in 2usize..200, r in -1.0f64..=1.0) {
        prop_assert!(binary_bound(r, n).unwrap() <= theorem1_bound(r, n).unwrap().value + 1e-12);
        prop_assert!(theorem1_bound(r, n).unwrap().value >= r - 1e-12);
    }

    #[test]
    fn search_never_beats_the_bound(m in 3usize..12, r in -0.9f64..0.9, dim in 2usize..6, seed in any::<u64>(), n in 3usize..6) {
        let p: PoolProblem = synth_pool(m, r, dim, false, seed).unwrap();
        let e = best_chain_subset(&p, n, Strategy::Exhaustive).unwrap();
        let g = best_chain_subset(&p, n, Strategy::Greedy).unwrap();
        prop_assert!(g.value <= e.value + 1e-12);
        prop_assert!(e.value <= theorem1_bound(r, n).unwrap().value + 1e-9);

        let mut reversed = p.clone();
        reversed.pool_indices.reverse();
        let e2 = best_chain_subset(&reversed, n, Strategy::Exhaustive).unwrap();
        prop_assert!((e.value - e2.value).abs() < 1e-15);
    }

    #[test]
    fn json_round_trips(n in 2usize..7, seed in any::<u64>()) {
        let g = random_perfect_dag(n, seed).unwrap();
        let rho: CorrMatrix = random_corr(n, n, seed).unwrap();
        let m = fit(&rho, &g).unwrap();
        let rho2: CorrMatrix = serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        prop_assert_eq!(&rho2, &rho);
        let g2: Dag = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(&g2, &g);
        let m2: FittedModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(&m2, &m);
        let j: BinaryJoint = random_binary_joint(n, seed).unwrap();
        let j2: BinaryJoint = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        prop_assert_eq!(&j2, &j);
    }
}

#[test]
fn chain_reduces_to_itself() {
    let rho: CorrMatrix = random_corr(6, 6, 3).unwrap();
    let red = reduce_to_chain(&rho, &chain_dag(6).unwrap()).unwrap();
    assert!(red.chain_corr.matrix().max_abs_diff(rho.matrix()) < 1e-12);
}
