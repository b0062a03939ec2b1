//! Chain models over `{−1, 1}`-valued variables with uniform marginals.
//!
//! The chain model replaces the true joint by
//! `p_G(x) = p(x_1) ∏ p(x_k | x_{k−1})`, and its correlation between the
//! endpoints is read off as `p_G(x_n=1 | x_1=1) − p_G(x_n=1 | x_1=−1)`, which is
//! the usual correlation whenever marginals are uniform.
//!
//! Sign patterns are indexed by their binary encoding with `+1 ↦ 1` and
//! variable 1 as the most significant bit.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::sign_construction;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Largest variable count a [`BinaryJoint`] may have.
pub const JOINT_LIMIT: usize = 20;
/// Largest variable count accepted by [`binary_estimated_corr_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 12;
const SUM_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-9;
const MIN_MC_SAMPLES: usize = 100_000;
const MC_BLOCK: usize = 1 << 16;

/// A pmf over `{−1, 1}^n` with uniform one-dimensional marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryJoint<T = f64> {
    n: usize,
    pmf: Vec<T>,
}

/// Value (`±1`) of variable `i` (1-based) in pattern `idx` of an `n`-variable joint.
pub fn sign_of(idx: usize, i: usize, n: usize) -> i8 {
    if idx >> (n - i) & 1 == 1 {
        1
    } else {
        -1
    }
}

impl<T: Real> BinaryJoint<T> {
    pub fn new(n: usize, pmf: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidJoint("need at least one variable".into()));
        }
        if n > JOINT_LIMIT {
            return Err(Error::TooLarge { n, limit: JOINT_LIMIT });
        }
        if pmf.len() != 1 << n {
            return Err(Error::InvalidJoint(format!("expected {} probabilities, got {}", 1usize << n, pmf.len())));
        }
        if let Some(idx) = pmf.iter().position(|&p| !(p >= T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidJoint(format!("entry {idx} is {}", pmf[idx])));
        }
        let total: T = pmf.iter().copied().sum();
        if (total - T::one()).abs() > T::tol(SUM_TOL) {
            return Err(Error::InvalidJoint(format!("probabilities sum to {total}")));
        }
        let joint = Self { n, pmf };
        for i in 1..=n {
            let m = joint.prob_plus(i);
            if (m - T::lit(0.5)).abs() > T::tol(MARGINAL_TOL) {
                return Err(Error::InvalidJoint(format!("p(x_{i} = 1) = {m}, not 1/2")));
            }
        }
        Ok(joint)
    }

    /// Builds a joint from unnormalized nonnegative weights, without checking marginals.
    pub(crate) fn from_weights_unchecked(n: usize, weights: Vec<T>) -> Self {
        let total: T = weights.iter().copied().sum();
        Self { n, pmf: weights.into_iter().map(|w| w / total).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pmf(&self) -> &[T] {
        &self.pmf
    }

    fn sign(&self, idx: usize, i: usize) -> T {
        T::lit(sign_of(idx, i, self.n) as f64)
    }

    /// `p(x_i = 1)`.
    pub fn prob_plus(&self, i: usize) -> T {
        self.pmf.iter().enumerate().filter(|(idx, _)| sign_of(*idx, i, self.n) == 1).map(|(_, &p)| p).sum()
    }

    /// `p(x_i = a, x_j = b)` for `a, b ∈ {−1, 1}`.
    pub fn pair_prob(&self, i: usize, a: i8, j: usize, b: i8) -> T {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(idx, _)| sign_of(*idx, i, self.n) == a && sign_of(*idx, j, self.n) == b)
            .map(|(_, &p)| p)
            .sum()
    }

    /// `E[x_i x_j]`, the correlation under uniform marginals.
    pub fn corr(&self, i: usize, j: usize) -> T {
        self.pmf.iter().enumerate().map(|(idx, &p)| p * self.sign(idx, i) * self.sign(idx, j)).sum()
    }

    /// `p(x_j = 1 | x_i = 1) − p(x_j = 1 | x_i = −1)`.
    pub fn conditional_difference(&self, i: usize, j: usize) -> T {
        let plus = self.pair_prob(i, 1, j, 1) / self.prob_plus(i);
        let minus = self.pair_prob(i, -1, j, 1) / (T::one() - self.prob_plus(i));
        plus - minus
    }

    /// The marginal joint of `x_2, …, x_n`.
    pub fn drop_first(&self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::InvalidJoint("cannot drop the only variable".into()));
        }
        let half = 1 << (self.n - 1);
        let pmf = (0..half).map(|idx| self.pmf[idx] + self.pmf[idx + half]).collect();
        Ok(Self { n: self.n - 1, pmf })
    }
}

impl<T: Real> Serialize for BinaryJoint<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.pmf.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for BinaryJoint<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pmf = Vec::<T>::deserialize(d)?;
        if !pmf.len().is_power_of_two() || pmf.len() < 2 {
            return Err(serde::de::Error::custom(format!("length {} is not 2^n with n >= 1", pmf.len())));
        }
        let n = pmf.len().trailing_zeros() as usize;
        BinaryJoint::new(n, pmf).map_err(serde::de::Error::custom)
    }
}

/// Uniform-marginal joint drawn as a random convex mixture of antithetic pairs
/// `{s, −s}`, each of which has exactly uniform marginals.
pub fn random_binary_joint<T: Real>(n: usize, seed: u64) -> Result<BinaryJoint<T>> {
    if n == 0 || n > JOINT_LIMIT {
        return Err(Error::TooLarge { n, limit: JOINT_LIMIT });
    }
    let mut rng = rng::seeded(seed);
    let size = 1usize << n;
    let components = rng.random_range(1..=(size / 2).clamp(1, 16));
    let mut w = vec![T::zero(); size];
    for _ in 0..components {
        let s = rng.random_range(0..size);
        let weight = T::lit(-(1.0 - rng.random::<f64>()).ln());
        w[s] = w[s] + weight;
        w[size - 1 - s] = w[size - 1 - s] + weight;
    }
    Ok(BinaryJoint::from_weights_unchecked(n, w))
}

/// `table[a][b] = p(x_k = b | x_{k−1} = a)` with index 0 for −1 and 1 for +1.
pub type CondTable<T> = [[T; 2]; 2];

/// Chain model `p(x_1) ∏ p(x_k | x_{k−1})` fitted to a binary joint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct BinaryChainModel<T = f64> {
    /// `p(x_1 = −1), p(x_1 = 1)`.
    pub first: [T; 2],
    /// Tables for `k = 2..n`.
    pub conditionals: Vec<CondTable<T>>,
}

const VALUES: [i8; 2] = [-1, 1];

pub fn fit_binary_chain<T: Real>(p: &BinaryJoint<T>) -> Result<BinaryChainModel<T>> {
    let n = p.n();
    let plus1 = p.prob_plus(1);
    let mut conditionals = Vec::with_capacity(n.saturating_sub(1));
    for k in 2..=n {
        let plus = p.prob_plus(k - 1);
        let mut table = [[T::zero(); 2]; 2];
        for (ai, &a) in VALUES.iter().enumerate() {
            let given = if a == 1 { plus } else { T::one() - plus };
            if !(given > T::zero()) {
                return Err(Error::DegenerateConditioning { var: k - 1, prob: given.as_f64() });
            }
            for (bi, &b) in VALUES.iter().enumerate() {
                table[ai][bi] = p.pair_prob(k - 1, a, k, b) / given;
            }
        }
        conditionals.push(table);
    }
    Ok(BinaryChainModel { first: [T::one() - plus1, plus1], conditionals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct BinaryPropagation<T = f64> {
    /// `p_G(x_n = b | x_1 = a)`, indexed as in [`CondTable`].
    pub table: CondTable<T>,
    pub rho_hat: T,
}

fn table_mul<T: Real>(a: &CondTable<T>, b: &CondTable<T>) -> CondTable<T> {
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `p_G(x_n | x_1)` as the product of the conditional tables, and `ρ̂_1n`.
pub fn binary_propagate<T: Real>(m: &BinaryChainModel<T>) -> BinaryPropagation<T> {
    let id = [[T::one(), T::zero()], [T::zero(), T::one()]];
    let table = m.conditionals.iter().fold(id, |acc, t| table_mul(&acc, t));
    BinaryPropagation { table, rho_hat: table[1][1] - table[0][1] }
}

/// `ρ̂_1n` by summing `∏ p(x_k | x_{k−1})` over every intermediate sign pattern.
pub fn binary_estimated_corr_bruteforce<T: Real>(p: &BinaryJoint<T>) -> Result<T> {
    let n = p.n();
    if n > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge { n, limit: BRUTEFORCE_LIMIT });
    }
    if n < 2 {
        return Err(Error::InvalidJoint("need at least two variables".into()));
    }
    let cond = |k: usize, a: i8, b: i8| {
        let given = if a == 1 { p.prob_plus(k - 1) } else { T::one() - p.prob_plus(k - 1) };
        p.pair_prob(k - 1, a, k, b) / given
    };
    let mid = n - 2;
    let given_first = |a: i8| -> T {
        (0..1usize << mid)
            .map(|pattern| {
                let mut prev = a;
                let mut w = T::one();
                for k in 2..n {
                    let x = if pattern >> (n - 1 - k) & 1 == 1 { 1 } else { -1 };
                    w = w * cond(k, prev, x);
                    prev = x;
                }
                w * cond(n, prev, 1)
            })
            .sum()
    };
    Ok(given_first(1) - given_first(-1))
}

/// Empirical joint of the signs of the two-factor Gaussian construction whose
/// vectors are equally spaced over a total angle `π(1−r)/2`.
///
/// Every draw `(s₁, s₂)` is paired with `(−s₁, −s₂)`, so the marginals are
/// exactly uniform; `mc_samples` counts both members of each pair.
pub fn realize_sign_joint<T: Real>(r: T, n: usize, mc_samples: usize, seed: u64) -> Result<BinaryJoint<T>> {
    if !(2..=BRUTEFORCE_LIMIT).contains(&n) {
        return Err(Error::BadArguments(format!("n = {n} must lie in 2..={BRUTEFORCE_LIMIT}")));
    }
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::BadArguments(format!("mc_samples = {mc_samples} is below {MIN_MC_SAMPLES}")));
    }
    let step = sign_construction(r, n)?.step_angle.as_f64();
    let loadings: Vec<(f64, f64)> = (0..n).map(|k| ((k as f64 * step).cos(), (k as f64 * step).sin())).collect();
    let pairs = mc_samples / 2;
    let blocks = pairs.div_ceil(MC_BLOCK);
    let size = 1usize << n;
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut counts = vec![0u64; size];
            let len = MC_BLOCK.min(pairs - b * MC_BLOCK);
            for _ in 0..len {
                let s1: f64 = rng::normal(&mut rng);
                let s2: f64 = rng::normal(&mut rng);
                let idx = loadings
                    .iter()
                    .fold(0usize, |acc, &(c, s)| (acc << 1) | usize::from(s1 * c + s2 * s >= 0.0));
                counts[idx] += 1;
                counts[size - 1 - idx] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    BinaryJoint::new(n, counts.into_iter().map(|c| T::lit(c as f64 / (2 * pairs) as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{binary_bound, sign_corr};

    fn product(n: usize) -> BinaryJoint {
        BinaryJoint::new(n, vec![1.0 / (1 << n) as f64; 1 << n]).unwrap()
    }

    fn comonotone(n: usize) -> BinaryJoint {
        let mut pmf = vec![0.0; 1 << n];
        pmf[0] = 0.5;
        pmf[(1 << n) - 1] = 0.5;
        BinaryJoint::new(n, pmf).unwrap()
    }

    #[test]
    fn pattern_encoding() {
        // index 0b10 of a 2-variable joint is (x_1, x_2) = (+1, −1)
        assert_eq!(sign_of(0b10, 1, 2), 1);
        assert_eq!(sign_of(0b10, 2, 2), -1);
    }

    #[test]
    fn joint_validation() {
        assert!(matches!(BinaryJoint::new(2, vec![0.5, 0.5, 0.0, 0.0]), Err(Error::InvalidJoint(_))));
        assert!(matches!(BinaryJoint::new(2, vec![0.25; 3]), Err(Error::InvalidJoint(_))));
        assert!(matches!(BinaryJoint::new(1, vec![0.6, 0.6]), Err(Error::InvalidJoint(_))));
        assert!(matches!(BinaryJoint::<f64>::new(21, vec![]), Err(Error::TooLarge { .. })));
        let j: BinaryJoint = serde_json::from_str("[0.5, 0, 0, 0.5]").unwrap();
        assert_eq!(j.corr(1, 2), 1.0);
        assert_eq!(serde_json::to_string(&j).unwrap(), "[0.5,0.0,0.0,0.5]");
        assert!(serde_json::from_str::<BinaryJoint>("[0.5, 0.5, 0]").is_err());
    }

    #[test]
    fn independent_and_comonotone_chains() {
        let m = fit_binary_chain(&product(4)).unwrap();
        assert!(m.conditionals.iter().flatten().flatten().all(|&p| p == 0.5));
        assert_eq!(binary_propagate(&m).rho_hat, 0.0);
        assert_eq!(binary_estimated_corr_bruteforce(&product(4)).unwrap(), 0.0);

        let m = fit_binary_chain(&comonotone(3)).unwrap();
        for t in &m.conditionals {
            assert_eq!(*t, [[1.0, 0.0], [0.0, 1.0]]);
        }
        assert_eq!(binary_propagate(&m).rho_hat, 1.0);
    }

    #[test]
    fn two_variables_reproduce_r() {
        for seed in 0..20 {
            let j: BinaryJoint = random_binary_joint(2, seed).unwrap();
            let rho_hat = binary_propagate(&fit_binary_chain(&j).unwrap()).rho_hat;
            assert!((rho_hat - j.corr(1, 2)).abs() < 1e-15);
        }
    }

    #[test]
    fn half_half_chain_gives_quarter() {
        let t = [[0.75f64, 0.25], [0.25, 0.75]];
        let m = BinaryChainModel { first: [0.5, 0.5], conditionals: vec![t, t] };
        assert!((binary_propagate(&m).rho_hat - 0.25).abs() < 1e-15);
    }

    #[test]
    fn propagation_matches_enumeration_and_recursion() {
        for seed in 0..100 {
            let n = 2 + (seed as usize % 7);
            let j: BinaryJoint = random_binary_joint(n, seed).unwrap();
            let prop = binary_propagate(&fit_binary_chain(&j).unwrap()).rho_hat;
            let brute = binary_estimated_corr_bruteforce(&j).unwrap();
            assert!((prop - brute).abs() < 1e-12, "seed {seed}");
            let consecutive: f64 = (1..n).map(|k| j.corr(k, k + 1)).product();
            assert!((prop - consecutive).abs() < 1e-12);
            assert!(prop <= binary_bound(j.corr(1, n), n).unwrap() + 1e-9);
            for k in 1..n {
                assert!((j.corr(k, k + 1) - j.conditional_difference(k, k + 1)).abs() < 1e-12);
            }
            if n >= 3 {
                let tail = j.drop_first().unwrap();
                let tail_hat = binary_propagate(&fit_binary_chain(&tail).unwrap()).rho_hat;
                assert!((prop - j.corr(1, 2) * tail_hat).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bruteforce_limit() {
        let j = product(13);
        assert!(matches!(binary_estimated_corr_bruteforce(&j), Err(Error::TooLarge { n: 13, limit: 12 })));
    }

    #[test]
    fn realized_sign_joints() {
        let j: BinaryJoint = realize_sign_joint(0.0, 2, 200_000, 1).unwrap();
        assert!(j.corr(1, 2).abs() < 3.0 / (100_000f64).sqrt());

        let n = 4;
        let samples = 400_000;
        let j: BinaryJoint = realize_sign_joint(0.5, n, samples, 2).unwrap();
        let c = sign_construction(0.5, n).unwrap();
        for a in 1..=n {
            assert!((j.prob_plus(a) - 0.5).abs() < 1e-12);
            for b in a + 1..=n {
                let want = sign_corr((b - a) as f64 * c.step_angle).unwrap();
                let se = ((1.0 - want * want) / (samples / 2) as f64).sqrt();
                assert!((j.corr(a, b) - want).abs() < 3.0 * se + 1e-12, "({a},{b})");
            }
        }
        let rho_hat = binary_propagate(&fit_binary_chain(&j).unwrap()).rho_hat;
        assert!((rho_hat - binary_bound(0.5, n).unwrap()).abs() < 0.01);

        let j: BinaryJoint = realize_sign_joint(0.0, 3, 200_000, 3).unwrap();
        let m = fit_binary_chain(&j).unwrap();
        assert!((m.conditionals[0][1][1] - 0.75).abs() < 0.01);
        assert!(matches!(realize_sign_joint(0.0, 3, 10, 3), Err(Error::BadArguments(_))));
    }

    #[test]
    fn realization_is_deterministic() {
        let a: BinaryJoint = realize_sign_joint(0.2, 5, 150_000, 9).unwrap();
        let b: BinaryJoint = realize_sign_joint(0.2, 5, 150_000, 9).unwrap();
        assert_eq!(a, b);
    }
}
