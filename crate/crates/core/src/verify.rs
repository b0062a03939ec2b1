//! The acceptance checks, runnable from tests and from the command line.
//!
//! Each check compares the library against an independent computation (a
//! closed form evaluated separately, brute-force enumeration, Monte Carlo, or
//! a direct search) with pinned tolerances, and reports one pass/fail line.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::binary::{binary_estimated_corr_bruteforce, binary_propagate, fit_binary_chain, random_binary_joint, realize_sign_joint, BinaryJoint};
use crate::bounds::{binary_bound, optimal_construction, sign_construction, single_eq_construction, single_eq_sup, theorem1_bound};
use crate::corr::{random_corr, CorrMatrix};
use crate::dag::{chain_dag, random_perfect_dag, validate_dag, Dag};
use crate::error::Result;
use crate::estimator::{chain_product_corr, estimated_corr, fit, propagate, variance_audit_with_tol};
use crate::optimize::{binary_joint_oracle, maximize_chain_corr, psd_oracle};
use crate::reduction::reduce_to_chain;
use crate::search::{pool_growth_curve, synth_pool};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}. {}: {}", self.id, self.name, self.details.join("; "))
    }
}

fn report(id: u8, name: &'static str, checks: Vec<(bool, String)>) -> CriterionReport {
    let pass = checks.iter().all(|(ok, _)| *ok);
    let details = checks
        .into_iter()
        .map(|(ok, msg)| if ok { msg } else { format!("FAILED {msg}") })
        .collect();
    CriterionReport { id, name, pass, details }
}

fn fail_on_err(id: u8, name: &'static str, r: Result<CriterionReport>) -> CriterionReport {
    r.unwrap_or_else(|e| CriterionReport { id, name, pass: false, details: vec![format!("error: {e}")] })
}

const R_GRID: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

/// Three-variable bound table at `r = 0`, against the rounded published values
/// and against `cos(π/(2(n−1)))^(n−1)` evaluated directly.
pub fn bound_table() -> CriterionReport {
    let name = "bound table";
    fail_on_err(1, name, (|| {
        let rounded = [0.0f64, 0.5, 0.65, 0.73];
        let mut checks = Vec::new();
        for (n, want) in (2..=5).zip(rounded) {
            let got = theorem1_bound(0.0f64, n)?.value;
            let direct = (std::f64::consts::PI / (2.0 * (n - 1) as f64)).cos().powi(n as i32 - 1);
            checks.push(((got - want).abs() <= 0.005, format!("n={n}: {got:.5} vs table {want}")));
            checks.push(((got - direct).abs() <= 1e-12, format!("n={n}: closed form gap {:.1e}", (got - direct).abs())));
        }
        Ok(report(1, name, checks))
    })())
}

/// The equiangular construction through the generic fit/propagate engine.
pub fn construction_attainment() -> CriterionReport {
    let name = "construction attainment";
    fail_on_err(2, name, (|| {
        let mut worst_bound: f64 = 0.0;
        let mut worst_r: f64 = 0.0;
        let mut worst_var: f64 = 0.0;
        let mut failures = Vec::new();
        for r in R_GRID {
            for n in 3..=10 {
                let (rho, g) = optimal_construction(r, n)?;
                let model = fit(&rho, &g)?;
                let rho_hat = estimated_corr(&propagate(&model), 1, n)?;
                let bound = theorem1_bound(r, n)?.value;
                let audit = variance_audit_with_tol(&model, 1e-9);
                let (db, dr) = ((rho_hat - bound).abs(), (rho.get(0, n - 1) - r).abs());
                worst_bound = worst_bound.max(db);
                worst_r = worst_r.max(dr);
                worst_var = worst_var.max(audit.max_deviation);
                if db > 1e-9 || dr > 1e-12 || !audit.pass {
                    failures.push(format!("(r={r}, n={n})"));
                }
            }
        }
        Ok(report(2, name, vec![
            (failures.is_empty(), format!("40 grid points, failures: [{}]", failures.join(", "))),
            (worst_bound <= 1e-9, format!("max |rho_hat - bound| = {worst_bound:.1e} (tol 1e-9)")),
            (worst_r <= 1e-12, format!("max |rho_1n - r| = {worst_r:.1e} (tol 1e-12)")),
            (worst_var <= 1e-9, format!("max |var_hat - 1| = {worst_var:.1e} (tol 1e-9)")),
        ]))
    })())
}

/// Coordinate ascent from below and brute-force search from below must pin the
/// closed form: ascent within 1e-6 of it, neither above it.
pub fn optimizer_sandwich() -> CriterionReport {
    let name = "optimizer/oracle sandwich";
    fail_on_err(3, name, (|| {
        let grid: Vec<(f64, usize)> = R_GRID.iter().flat_map(|&r| (3..=8).map(move |n| (r, n))).collect();
        let ascent: Vec<(f64, usize, f64, f64, usize)> = grid
            .par_iter()
            .map(|&(r, n)| {
                let res = maximize_chain_corr(r, n, 20, 1000 + n as u64)?;
                let bound = theorem1_bound(r, n)?.value;
                let off = res.restart_values.iter().filter(|&&v| (v - res.value).abs() > 1e-6).count();
                Ok((r, n, res.value, bound, off))
            })
            .collect::<Result<_>>()?;
        let mut below = 0.0f64;
        let mut above = f64::NEG_INFINITY;
        let mut off_restarts = 0;
        for &(_, _, v, b, off) in &ascent {
            below = below.max(b - v);
            above = above.max(v - b);
            off_restarts += off;
        }
        let oracle_cases: Vec<(f64, usize)> = R_GRID.iter().flat_map(|&r| [(r, 3), (r, 4)]).collect();
        let oracle: Vec<(f64, usize, f64, f64)> = oracle_cases
            .par_iter()
            .map(|&(r, n)| Ok((r, n, psd_oracle(r, n, 100_000, 2000 + n as u64)?, theorem1_bound(r, n)?.value)))
            .collect::<Result<_>>()?;
        let over = oracle.iter().map(|&(_, _, v, b)| v - b).fold(f64::NEG_INFINITY, f64::max);
        let gap = oracle.iter().map(|&(_, _, v, b)| b - v).fold(0.0, f64::max);
        Ok(report(3, name, vec![
            (below <= 1e-6, format!("ascent: max shortfall {below:.1e} over 30 points (tol 1e-6)")),
            (above <= 1e-12, format!("ascent: max excess {above:.1e} (tol 1e-12)")),
            (true, format!("ascent: {off_restarts} of 600 restarts ended more than 1e-6 below the best")),
            (over <= 1e-7, format!("psd oracle: max excess {over:.1e} (tol 1e-7)")),
            (gap <= 1e-3, format!("psd oracle: max shortfall {gap:.1e} (tol 1e-3)")),
        ]))
    })())
}

fn dag(n: usize, edges: &[(usize, &[usize])]) -> Result<Dag> {
    validate_dag(n, &edges.iter().map(|&(k, p)| (k, p.to_vec())).collect())
}

/// Imperfect DAGs used for the genericity check: each has two non-adjacent co-parents.
pub fn imperfect_catalog() -> Result<Vec<(String, Dag)>> {
    let list: Vec<(&str, usize, Vec<(usize, &[usize])>)> = vec![
        ("star 1->3<-2", 3, vec![(3, &[1, 2])]),
        ("collider then child", 4, vec![(3, &[1, 2]), (4, &[3])]),
        ("chain into collider", 4, vec![(2, &[1]), (4, &[2, 3])]),
        ("three-parent star", 4, vec![(4, &[1, 2, 3])]),
        ("open diamond", 4, vec![(2, &[1]), (3, &[1]), (4, &[2, 3])]),
        ("late collider", 5, vec![(2, &[1]), (3, &[2]), (5, &[3, 4])]),
        ("collider with tail", 5, vec![(3, &[1, 2]), (4, &[3]), (5, &[4])]),
        ("open diamond with tail", 6, vec![(2, &[1]), (3, &[1]), (4, &[2, 3]), (5, &[4]), (6, &[5])]),
        ("two colliders", 6, vec![(3, &[1, 2]), (4, &[3]), (6, &[4, 5])]),
    ];
    list.into_iter().map(|(name, n, edges)| Ok((name.to_string(), dag(n, &edges)?))).collect()
}

/// Perfect DAGs used for the genericity check.
pub fn perfect_catalog() -> Result<Vec<(String, Dag)>> {
    let mut out: Vec<(String, Dag)> = (3..=6).map(|n| Ok((format!("chain n={n}"), chain_dag(n)?))).collect::<Result<_>>()?;
    out.push(("closed star".into(), dag(3, &[(2, &[1]), (3, &[1, 2])])?));
    out.push(("diamond".into(), dag(4, &[(2, &[1]), (3, &[1, 2]), (4, &[2, 3])])?));
    out.push(("fork".into(), dag(4, &[(2, &[1]), (3, &[1]), (4, &[3])])?));
    for (n, seed) in [(5, 1), (6, 2), (6, 3)] {
        out.push((format!("random perfect n={n} seed={seed}"), random_perfect_dag(n, seed)?));
    }
    Ok(out)
}

pub fn genericity() -> CriterionReport {
    let name = "variance distortion genericity";
    fail_on_err(4, name, (|| {
        const DRAWS: u64 = 1000;
        let mut checks = Vec::new();
        for (label, g) in imperfect_catalog()? {
            let fails = (0..DRAWS)
                .into_par_iter()
                .map(|s| {
                    let rho: CorrMatrix = random_corr(g.n(), g.n(), s)?;
                    Ok(!variance_audit_with_tol(&fit(&rho, &g)?, 1e-6).pass)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&f| f)
                .count();
            checks.push((fails * 100 >= 99 * DRAWS as usize, format!("{label}: {fails}/{DRAWS} distorted")));
        }
        for (label, g) in perfect_catalog()? {
            let passes = (0..DRAWS)
                .into_par_iter()
                .map(|s| {
                    let rho: CorrMatrix = random_corr(g.n(), g.n(), s)?;
                    Ok(variance_audit_with_tol(&fit(&rho, &g)?, 1e-9).pass)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&p| p)
                .count();
            checks.push((passes == DRAWS as usize, format!("{label}: {passes}/{DRAWS} undistorted")));
        }
        Ok(report(4, name, checks))
    })())
}

pub fn reduction_preserves() -> CriterionReport {
    let name = "chain reduction";
    fail_on_err(5, name, (|| {
        let mut worst_hat: f64 = 0.0;
        let mut worst_r: f64 = 0.0;
        let mut too_long = 0;
        for trial in 0..200u64 {
            let n = 3 + (trial as usize % 5);
            let g = random_perfect_dag(n, 5000 + trial)?;
            let rho: CorrMatrix = random_corr(n, n, 7000 + trial)?;
            let red = reduce_to_chain(&rho, &g)?;
            let direct = estimated_corr(&propagate(&fit(&rho, &g)?), 1, n)?;
            worst_hat = worst_hat.max((chain_product_corr(&red.chain_corr) - direct).abs());
            worst_r = worst_r.max((red.chain_corr.get(0, red.len() - 1) - rho.get(0, n - 1)).abs());
            if red.len() > n {
                too_long += 1;
            }
        }
        Ok(report(5, name, vec![
            (worst_hat <= 1e-9, format!("max |rho_hat change| = {worst_hat:.1e} over 200 pairs (tol 1e-9)")),
            (worst_r <= 1e-9, format!("max |rho_1n change| = {worst_r:.1e} (tol 1e-9)")),
            (too_long == 0, format!("{too_long} chains longer than n")),
        ]))
    })())
}

pub fn single_equation_sweep() -> CriterionReport {
    let name = "single-equation sweep";
    fail_on_err(6, name, (|| {
        let sup = single_eq_sup::<f64>();
        let mut checks = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for delta in [-0.9f64, -0.99, -0.999] {
            let (rho, g) = single_eq_construction(delta)?;
            let em = propagate(&fit(&rho, &g)?);
            let hat = estimated_corr(&em, 1, 3)?;
            let want = -delta / (1.0 + delta * delta).sqrt();
            let var_want = (1.0 + delta * delta) / (1.0 - delta * delta);
            checks.push(((hat - want).abs() <= 1e-9, format!("delta={delta}: rho_hat {hat:.9}")));
            checks.push(((em.var_hat(3) - var_want).abs() <= 1e-9, format!("var_hat {:.6}", em.var_hat(3))));
            checks.push((hat > prev && hat < sup, format!("increasing and below 1/sqrt2 (gap {:.2e})", sup - hat)));
            prev = hat;
        }
        Ok(report(6, name, checks))
    })())
}

pub fn binary_chains() -> CriterionReport {
    let name = "binary chains";
    fail_on_err(7, name, (|| {
        let mut worst_prop: f64 = 0.0;
        let mut worst_rec: f64 = 0.0;
        for seed in 0..100u64 {
            let n = 3 + (seed as usize % 6);
            let j: BinaryJoint = random_binary_joint(n, 9000 + seed)?;
            let prop = binary_propagate(&fit_binary_chain(&j)?).rho_hat;
            worst_prop = worst_prop.max((prop - binary_estimated_corr_bruteforce(&j)?).abs());
            let tail = binary_propagate(&fit_binary_chain(&j.drop_first()?)?).rho_hat;
            worst_rec = worst_rec.max((prop - j.corr(1, 2) * tail).abs());
        }
        let mut checks = vec![
            (worst_prop <= 1e-12, format!("(a) propagation vs enumeration: max gap {worst_prop:.1e} on 100 joints")),
            (worst_rec <= 1e-12, format!("(b) rho_hat_1n = rho_12 * rho_hat_2n: max gap {worst_rec:.1e}")),
        ];

        const SAMPLES: usize = 1_000_000;
        let eff = (SAMPLES / 2) as f64;
        for (r, n) in [(0.0f64, 3), (0.5, 4), (0.0, 6)] {
            let j: BinaryJoint = realize_sign_joint(r, n, SAMPLES, 31)?;
            let c = sign_construction(r, n)?.consecutive_corr;
            let se = ((1.0 - c * c) / eff).sqrt();
            let worst = (1..n).map(|k| (j.corr(k, k + 1) - c).abs()).fold(0.0, f64::max);
            let hat = binary_propagate(&fit_binary_chain(&j)?).rho_hat;
            let bound = binary_bound(r, n)?;
            // linearized error of a product of n−1 factors, each off by at most 3 SE
            let hat_tol = 3.0 * se * (n - 1) as f64 * bound / c;
            checks.push((worst <= 3.0 * se, format!("(c) r={r}, n={n}: consecutive off by {worst:.1e} (3 SE = {:.1e})", 3.0 * se)));
            checks.push(((hat - bound).abs() <= hat_tol, format!("rho_hat {hat:.5} vs bound {bound:.5} (tol {hat_tol:.1e})")));
        }

        let oracle = binary_joint_oracle(0.0f64, 3, 16, 41)?.value;
        let formula = binary_bound(0.0, 3)?;
        let ok = (0.25 - 1e-4..=0.25 + 1e-6).contains(&oracle);
        let verdict = if ok && (oracle - 1.0 / 3.0).abs() > 1e-2 {
            "the n=3 maximum is 1/4; the stated 1/3 is not attainable"
        } else {
            "inconclusive"
        };
        checks.push((ok, format!(
            "(d) n=3, r=0: stated value 1/3 = {:.5}, formula (1-1/2)^2 = {formula:.5}, oracle max = {oracle:.6}; verdict: {verdict}",
            1.0 / 3.0
        )));
        Ok(report(7, name, checks))
    })())
}

pub fn pool_growth() -> CriterionReport {
    let name = "pool growth curve";
    fail_on_err(8, name, (|| {
        let p = synth_pool(2000, 0.0f64, 2, false, 8)?;
        let c = pool_growth_curve(&p, &p.pool_indices, 3)?;
        let last = c.points.last().expect("nonempty").1;
        let peak = c.points.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
        let planted = synth_pool(2000, 0.0f64, 2, true, 8)?;
        let pc = pool_growth_curve(&planted, &planted.pool_indices, 3)?;
        let planted_gap = pc.points[1..].iter().map(|&(_, v)| (v - 0.5).abs()).fold(0.0, f64::max);
        Ok(report(8, name, vec![
            ((0.49..=0.5).contains(&last), format!("final value {last:.6} in [0.49, 0.5]")),
            (peak <= 0.5 + 1e-9, format!("max over prefixes {peak:.12} <= 0.5 + 1e-9")),
            (planted_gap <= 1e-15, format!("planted bisector: max |value - 0.5| = {planted_gap:.1e} (tol 1e-15)")),
        ]))
    })())
}

pub fn dominance_crossover() -> CriterionReport {
    let name = "dominance crossover";
    fail_on_err(9, name, (|| {
        let sup = single_eq_sup::<f64>();
        let three = theorem1_bound(0.0f64, 3)?.value;
        let four = theorem1_bound(0.0f64, 4)?.value;
        let first_above = (5..=10_000).find(|&n| theorem1_bound(0.0f64, n).map(|b| b.value <= sup).unwrap_or(true));
        Ok(report(9, name, vec![
            ((three - 0.5).abs() <= 1e-12 && three < sup, format!("n=3: {three:.12} = 0.5 (tol 1e-12) < {sup:.5}")),
            (true, format!("n=4: {four:.5} (below 1/sqrt2)")),
            (first_above.is_none(), format!("n=5..10000 all exceed 1/sqrt2 (n=5: {:.5})", theorem1_bound(0.0f64, 5)?.value)),
        ]))
    })())
}

/// Every criterion in order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        bound_table(),
        construction_attainment(),
        optimizer_sandwich(),
        genericity(),
        reduction_preserves(),
        single_equation_sweep(),
        binary_chains(),
        pool_growth(),
        dominance_crossover(),
    ]
}
