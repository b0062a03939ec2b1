//! Choosing auxiliary variables from a pool so that a chain model through them
//! reports the largest possible correlation between two fixed targets.
//!
//! A chain `x_1 → v_1 → ⋯ → v_m → x_n` reports `ρ̂_1n = ∏` of consecutive true
//! correlations, so every search here works on the correlation matrix alone.

use rayon::prelude::*;
use serde::Serialize;

use crate::corr::{gram_from_vectors, CorrMatrix, UnitVectorConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Largest number of ordered chains an exhaustive search may evaluate.
pub const EXHAUSTIVE_BUDGET: u128 = 10_000_000;
/// Default dimension of random pool vectors in [`synth_pool`].
pub const DEFAULT_POOL_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct PoolProblem<T = f64> {
    pub corr: CorrMatrix<T>,
    pub x1_index: usize,
    pub xn_index: usize,
    pub pool_indices: Vec<usize>,
}

impl<T: Real> PoolProblem<T> {
    pub fn new(corr: CorrMatrix<T>, x1_index: usize, xn_index: usize, pool_indices: Vec<usize>) -> Result<Self> {
        let n = corr.n();
        let mut seen = vec![false; n];
        for &i in [x1_index, xn_index].iter().chain(&pool_indices) {
            if i >= n {
                return Err(Error::BadPool(format!("index {i} out of range for {n} variables")));
            }
            if seen[i] {
                return Err(Error::BadPool(format!("index {i} used twice")));
            }
            seen[i] = true;
        }
        Ok(Self { corr, x1_index, xn_index, pool_indices })
    }

    /// Problem whose variables are the given unit vectors: targets at
    /// columns 0 and 1, the pool after them.
    pub fn from_vectors(x1: Vec<T>, xn: Vec<T>, pool: Vec<Vec<T>>) -> Result<Self> {
        let m = pool.len();
        let mut all = vec![x1, xn];
        all.extend(pool);
        let corr = gram_from_vectors(&UnitVectorConfig::new(all)?);
        Self::new(corr, 0, 1, (2..m + 2).collect())
    }

    /// True correlation between the two targets.
    pub fn target_corr(&self) -> T {
        self.corr.get(self.x1_index, self.xn_index)
    }

    /// `∏` of consecutive correlations along `x_1 → via… → x_n`.
    pub fn chain_value(&self, via: &[usize]) -> T {
        let mut prev = self.x1_index;
        let mut acc = T::one();
        for &v in via.iter().chain(std::iter::once(&self.xn_index)) {
            acc = acc * self.corr.get(prev, v);
            prev = v;
        }
        acc
    }
}

/// The pool variable `v` maximizing `ρ(x_1, v)·ρ(v, x_n)`, lowest index on ties.
pub fn best_single_auxiliary<T: Real>(p: &PoolProblem<T>) -> Result<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for &v in &p.pool_indices {
        let value = p.chain_value(&[v]);
        best = match best {
            Some((b, bv)) if bv > value || (bv == value && b < v) => Some((b, bv)),
            _ => Some((v, value)),
        };
    }
    best.ok_or(Error::EmptyPool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ChainChoice<T = f64> {
    /// Auxiliary columns in chain order.
    pub indices: Vec<usize>,
    pub value: T,
}

fn ordered_count(pool: usize, slots: usize) -> u128 {
    (0..slots).fold(1u128, |acc, i| acc.saturating_mul((pool - i) as u128))
}

fn better<T: Real>(a: &ChainChoice<T>, b: &ChainChoice<T>) -> bool {
    a.value > b.value || (a.value == b.value && a.indices < b.indices)
}

fn exhaustive_from<T: Real>(p: &PoolProblem<T>, prefix: &mut Vec<usize>, acc: T, slots: usize, best: &mut Option<ChainChoice<T>>) {
    let last = *prefix.last().unwrap_or(&p.x1_index);
    if prefix.len() == slots {
        let value = acc * p.corr.get(last, p.xn_index);
        let cand = ChainChoice { indices: prefix.clone(), value };
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            *best = Some(cand);
        }
        return;
    }
    for &v in &p.pool_indices {
        if prefix.contains(&v) {
            continue;
        }
        prefix.push(v);
        exhaustive_from(p, prefix, acc * p.corr.get(last, v), slots, best);
        prefix.pop();
    }
}

fn exhaustive<T: Real>(p: &PoolProblem<T>, slots: usize) -> ChainChoice<T> {
    p.pool_indices
        .par_iter()
        .map(|&first| {
            let mut best = None;
            let mut prefix = vec![first];
            exhaustive_from(p, &mut prefix, p.corr.get(p.x1_index, first), slots, &mut best);
            best.expect("pool large enough")
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .expect("nonempty pool")
}

fn greedy<T: Real>(p: &PoolProblem<T>, slots: usize) -> ChainChoice<T> {
    let mut chain: Vec<usize> = Vec::with_capacity(slots);
    for _ in 0..slots {
        let mut best: Option<(T, usize, usize)> = None;
        for &v in &p.pool_indices {
            if chain.contains(&v) {
                continue;
            }
            for pos in 0..=chain.len() {
                let mut trial = chain.clone();
                trial.insert(pos, v);
                let value = p.chain_value(&trial);
                if best.is_none_or(|(bv, _, _)| value > bv) {
                    best = Some((value, v, pos));
                }
            }
        }
        let (_, v, pos) = best.expect("pool large enough");
        chain.insert(pos, v);
    }
    let value = p.chain_value(&chain);
    ChainChoice { indices: chain, value }
}

/// Best `n`-variable chain from `x_1` to `x_n` through `n − 2` distinct pool
/// variables. Greedy insertion adds, one at a time, the variable and position
/// that maximize the current product.
pub fn best_chain_subset<T: Real>(p: &PoolProblem<T>, n: usize, strategy: Strategy) -> Result<ChainChoice<T>> {
    if n < 3 {
        return Err(Error::BadArguments(format!("n = {n} must be at least 3")));
    }
    if p.pool_indices.is_empty() {
        return Err(Error::EmptyPool);
    }
    let slots = n - 2;
    if p.pool_indices.len() < slots {
        return Err(Error::PoolTooSmall { pool: p.pool_indices.len(), needed: slots });
    }
    Ok(match strategy {
        Strategy::Exhaustive => {
            let count = ordered_count(p.pool_indices.len(), slots);
            if count > EXHAUSTIVE_BUDGET {
                return Err(Error::BudgetExceeded { count, limit: EXHAUSTIVE_BUDGET });
            }
            exhaustive(p, slots)
        }
        Strategy::Greedy => greedy(p, slots),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct GrowthCurve<T = f64> {
    /// `(pool_size, best ρ̂)` for every prefix of the order, starting at size 0.
    pub points: Vec<(usize, T)>,
    /// The auxiliary columns achieving each point (empty when none fit).
    pub chosen: Vec<Vec<usize>>,
}

impl<T: Real> GrowthCurve<T> {
    /// CSV with header `pool_size,best_rho_hat,witness`; witness columns are `;`-separated.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pool_size", "best_rho_hat", "witness"])?;
        for ((size, value), chosen) in self.points.iter().zip(&self.chosen) {
            let witness = chosen.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";");
            w.write_record([size.to_string(), value.to_string(), witness])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Running maximum of the best chain value over the prefixes of `order`.
///
/// The empty prefix scores 0 and seeds the maximum, so the curve is
/// nondecreasing from the start; a point keeps an empty witness until some
/// chain beats 0.
pub fn pool_growth_curve<T: Real>(p: &PoolProblem<T>, order: &[usize], n: usize) -> Result<GrowthCurve<T>> {
    if n < 3 {
        return Err(Error::BadArguments(format!("n = {n} must be at least 3")));
    }
    let mut sorted_order = order.to_vec();
    sorted_order.sort_unstable();
    let mut sorted_pool = p.pool_indices.clone();
    sorted_pool.sort_unstable();
    if sorted_order != sorted_pool {
        return Err(Error::BadPool("order is not a permutation of the pool".into()));
    }
    let slots = n - 2;
    let mut points = vec![(0, T::zero())];
    let mut chosen = vec![Vec::new()];
    let mut best = ChainChoice { indices: Vec::new(), value: T::zero() };
    for m in 1..=order.len() {
        let cand = if slots == 1 {
            let v = order[m - 1];
            Some(ChainChoice { indices: vec![v], value: p.chain_value(&[v]) })
        } else if m >= slots {
            let prefix = PoolProblem { pool_indices: order[..m].to_vec(), ..p.clone() };
            Some(best_chain_subset(&prefix, n, Strategy::Exhaustive)?)
        } else {
            None
        };
        if let Some(c) = cand {
            if c.value > best.value {
                best = c;
            }
        }
        points.push((m, best.value));
        chosen.push(best.indices.clone());
    }
    Ok(GrowthCurve { points, chosen })
}

/// Targets `e_1` and `e_1 r + e_2 √(1−r²)` with `m` uniformly random unit
/// vectors in `dim` dimensions as the pool. With `plant_optimum` the first pool
/// variable is the targets' bisector, which attains the three-variable bound.
pub fn synth_pool<T: Real>(m: usize, r: T, dim: usize, plant_optimum: bool, seed: u64) -> Result<PoolProblem<T>> {
    if m == 0 {
        return Err(Error::BadArguments("pool size must be at least 1".into()));
    }
    if dim < 2 {
        return Err(Error::BadArguments(format!("dim = {dim} must be at least 2")));
    }
    if r.is_nan() || r.abs() > T::one() + T::tol(1e-12) {
        return Err(Error::BadArguments(format!("r = {r} must lie in [-1, 1]")));
    }
    let r = r.max(-T::one()).min(T::one());
    let mut x1 = vec![T::zero(); dim];
    x1[0] = T::one();
    let mut xn = vec![T::zero(); dim];
    xn[0] = r;
    xn[1] = (T::one() - r * r).sqrt();
    let mut rng = rng::seeded(seed);
    let mut pool = Vec::with_capacity(m);
    if plant_optimum {
        let sum: Vec<T> = x1.iter().zip(&xn).map(|(&a, &b)| a + b).collect();
        let l = crate::linalg::norm(&sum);
        let bisector = if l > T::tol(1e-12) {
            sum.into_iter().map(|x| x / l).collect()
        } else {
            let mut e2 = vec![T::zero(); dim];
            e2[1] = T::one();
            e2
        };
        pool.push(bisector);
    }
    while pool.len() < m {
        pool.push(rng::unit_vector(&mut rng, dim));
    }
    PoolProblem::from_vectors(x1, xn, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{optimal_construction_vectors, theorem1_bound};
    use crate::corr::validate_corr;

    fn angle(t: f64) -> Vec<f64> {
        vec![t.cos(), t.sin()]
    }

    #[test]
    fn bisector_is_chosen() {
        let p = PoolProblem::from_vectors(
            angle(0.0),
            angle(std::f64::consts::FRAC_PI_2),
            vec![angle(0.3), angle(std::f64::consts::FRAC_PI_4), angle(1.2)],
        )
        .unwrap();
        let (idx, v) = best_single_auxiliary(&p).unwrap();
        assert_eq!(idx, 3);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uncorrelated_pool_and_direct_comparison() {
        let p = PoolProblem::from_vectors(
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(best_single_auxiliary(&p).unwrap(), (2, 0.0));

        let raw = vec![
            vec![1.0, 0.0, 0.6, 0.5],
            vec![0.0, 1.0, 0.3, 0.5],
            vec![0.6, 0.3, 1.0, 0.0],
            vec![0.5, 0.5, 0.0, 1.0],
        ];
        let p = PoolProblem::new(validate_corr(&raw).unwrap(), 0, 1, vec![2, 3]).unwrap();
        assert_eq!(best_single_auxiliary(&p).unwrap(), (3, 0.25));
        assert!(matches!(PoolProblem::new(p.corr.clone(), 0, 0, vec![2]), Err(Error::BadPool(_))));
        let empty = PoolProblem::new(p.corr.clone(), 0, 1, vec![]).unwrap();
        assert!(matches!(best_single_auxiliary(&empty), Err(Error::EmptyPool)));
    }

    #[test]
    fn three_variable_search_is_single_auxiliary() {
        let p: PoolProblem = synth_pool(50, 0.2, 4, false, 3).unwrap();
        let (idx, v) = best_single_auxiliary(&p).unwrap();
        for s in [Strategy::Exhaustive, Strategy::Greedy] {
            let c = best_chain_subset(&p, 3, s).unwrap();
            assert_eq!((c.indices.clone(), c.value), (vec![idx], v));
        }
    }

    #[test]
    fn planted_four_chain_is_recovered() {
        let mut v = optimal_construction_vectors(0.0, 4).unwrap();
        let xn = v.pop().unwrap();
        let x1 = v.remove(0);
        let mut pool = v;
        pool.push(angle(0.2));
        pool.push(angle(1.0));
        let p = PoolProblem::from_vectors(x1, xn, pool).unwrap();
        let c = best_chain_subset(&p, 4, Strategy::Exhaustive).unwrap();
        assert!((c.value - 0.75f64.sqrt().powi(3)).abs() < 1e-12);
        assert_eq!(c.indices, vec![2, 3]);
    }

    #[test]
    fn greedy_falls_short_of_exhaustive() {
        use std::f64::consts::PI;
        // greedy grabs the bisector first and can no longer reach the
        // equiangular pair at π/6 and π/3
        let p = PoolProblem::from_vectors(
            angle(0.0),
            angle(PI / 2.0),
            vec![angle(PI / 4.0), angle(PI / 6.0), angle(PI / 3.0)],
        )
        .unwrap();
        let g = best_chain_subset(&p, 4, Strategy::Greedy).unwrap();
        let e = best_chain_subset(&p, 4, Strategy::Exhaustive).unwrap();
        assert!(g.value < e.value - 0.05, "{} vs {}", g.value, e.value);
        assert!((e.value - theorem1_bound(0.0, 4).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn search_errors() {
        let p: PoolProblem = synth_pool(3, 0.0, 3, false, 1).unwrap();
        assert!(matches!(best_chain_subset(&p, 6, Strategy::Greedy), Err(Error::PoolTooSmall { pool: 3, needed: 4 })));
        assert!(matches!(best_chain_subset(&p, 2, Strategy::Greedy), Err(Error::BadArguments(_))));
        let big: PoolProblem = synth_pool(100, 0.0, 3, false, 1).unwrap();
        assert!(matches!(best_chain_subset(&big, 6, Strategy::Exhaustive), Err(Error::BudgetExceeded { .. })));
        assert!(matches!(synth_pool::<f64>(0, 0.0, 3, false, 1), Err(Error::BadArguments(_))));
        assert!(matches!(synth_pool::<f64>(5, 0.0, 1, false, 1), Err(Error::BadArguments(_))));
    }

    #[test]
    fn growth_curves() {
        let p: PoolProblem = synth_pool(500, 0.0, 8, false, 11).unwrap();
        let c = pool_growth_curve(&p, &p.pool_indices, 3).unwrap();
        assert_eq!(c.points.len(), 501);
        assert_eq!(c.points[0], (0, 0.0));
        assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
        let last = c.points.last().unwrap().1;
        assert!(last <= 0.5 + 1e-9);
        assert!(last > 0.3, "{last}");

        let p: PoolProblem = synth_pool(40, 0.0, 8, true, 12).unwrap();
        let c = pool_growth_curve(&p, &p.pool_indices, 3).unwrap();
        assert!(c.points[1..].iter().all(|&(_, v)| (v - 0.5).abs() < 1e-15));

        let c = pool_growth_curve(&p, &p.pool_indices[..].iter().rev().copied().collect::<Vec<_>>(), 4).unwrap();
        assert_eq!(c.points[1], (1, 0.0));
        assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(c.points.last().unwrap().1 <= theorem1_bound(0.0, 4).unwrap().value + 1e-9);

        assert!(matches!(pool_growth_curve(&p, &[2, 3], 3), Err(Error::BadPool(_))));

        // a first candidate with a negative product leaves the curve at 0
        let q = PoolProblem::from_vectors(angle(0.0), angle(1.0), vec![angle(-1.0), angle(0.5)]).unwrap();
        let c = pool_growth_curve(&q, &q.pool_indices, 3).unwrap();
        assert_eq!(c.points[1], (1, 0.0));
        assert!(c.chosen[1].is_empty());
        assert_eq!(c.chosen[2], vec![3]);
        let csv = pool_growth_curve(&p, &p.pool_indices, 3).unwrap().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("pool_size,best_rho_hat,witness"));
        assert_eq!(lines.next(), Some("0,0,"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!((row[0], row[2]), ("1", "2"));
        assert!((row[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn synth_pool_is_deterministic() {
        let a: PoolProblem = synth_pool(20, 0.3, 5, false, 9).unwrap();
        let b: PoolProblem = synth_pool(20, 0.3, 5, false, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.target_corr() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_random_variable_in_high_dimension() {
        let hits = (0..200)
            .filter(|&s| best_single_auxiliary(&synth_pool::<f64>(1, 0.0, 400, false, s).unwrap()).unwrap().1.abs() < 0.02)
            .count();
        assert!(hits >= 190, "{hits}");
    }
}
