//! Numerical maximization of `∏ ρ_{k,k+1}` over correlation matrices with a
//! fixed `ρ_1n = r`, written as a problem over unit vectors `a_1, …, a_n` with
//! `ρ_ij = a_i·a_j`, plus brute-force oracles that do not rely on the
//! equiangular solution.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::binary::BinaryJoint;
use crate::bounds::optimal_construction_vectors;
use crate::corr::{gram_from_vectors, UnitVectorConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{self, Rng};
use crate::scalar::Real;

/// Sweeps stop once no vector moves by more than this.
pub const MOVE_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100_000;
/// Standard deviation of the Gaussian perturbation of the initial arc.
pub const INIT_NOISE: f64 = 0.1;
const ORACLE_MIN_SAMPLES: usize = 10_000;
const JOINT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct OptimizeResult<T = f64> {
    pub config: UnitVectorConfig<T>,
    pub value: T,
    /// Sweeps performed by the winning restart.
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    /// Final value of every restart, in restart order.
    pub restart_values: Vec<T>,
    /// Objective after each sweep of the winning restart (starting with the initial value).
    #[serde(skip)]
    pub trace: Vec<T>,
}

/// `∏_{k} a_k·a_{k+1}`.
pub fn chain_objective<T: Real>(vectors: &[Vec<T>]) -> T {
    vectors.windows(2).map(|w| dot(&w[0], &w[1])).fold(T::one(), |a, b| a * b)
}

fn open_r<T: Real>(r: T) -> Result<T> {
    if r.is_nan() || r <= -T::one() || r >= T::one() {
        return Err(Error::BadArguments(format!("r = {r} must lie strictly inside (-1, 1)")));
    }
    Ok(r)
}

/// `a_1 = e_1` and `a_n = e_1 r + e_2 √(1−r²)` in `dim` dimensions.
fn endpoints<T: Real>(r: T, dim: usize) -> (Vec<T>, Vec<T>) {
    let mut a1 = vec![T::zero(); dim];
    a1[0] = T::one();
    let mut an = vec![T::zero(); dim];
    an[0] = r;
    an[1] = (T::one() - r * r).sqrt();
    (a1, an)
}

fn normalize<T: Real>(v: Vec<T>) -> Option<Vec<T>> {
    let l = norm(&v);
    (l > T::tol(1e-12)).then(|| v.into_iter().map(|x| x / l).collect())
}

/// Exact maximizer of `f = c · (a·u)(a·v)` over unit `a`, where `c` is the
/// product of the remaining factors: the bisector of `u, v` when `c > 0`, the
/// direction of `u − v` when `c < 0`.
fn coordinate_argmax<T: Real>(u: &[T], v: &[T], rest: T, current: &[T]) -> Vec<T> {
    let candidate = if rest > T::zero() {
        normalize(u.iter().zip(v).map(|(&x, &y)| x + y).collect())
    } else if rest < T::zero() {
        normalize(u.iter().zip(v).map(|(&x, &y)| x - y).collect())
    } else {
        None
    };
    match candidate {
        Some(c) if rest * dot(&c, u) * dot(&c, v) >= rest * dot(current, u) * dot(current, v) => c,
        _ => current.to_vec(),
    }
}

struct Run<T> {
    vectors: Vec<Vec<T>>,
    value: T,
    sweeps: usize,
    converged: bool,
    trace: Vec<T>,
}

fn ascend<T: Real>(mut a: Vec<Vec<T>>) -> Run<T> {
    let n = a.len();
    let mut trace = vec![chain_objective(&a)];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut moved = T::zero();
        for k in 1..n - 1 {
            let rest = (0..n - 1)
                .filter(|&j| j != k - 1 && j != k)
                .fold(T::one(), |acc, j| acc * dot(&a[j], &a[j + 1]));
            let next = coordinate_argmax(&a[k - 1], &a[k + 1], rest, &a[k]);
            let shift = next.iter().zip(&a[k]).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max);
            moved = moved.max(shift);
            a[k] = next;
        }
        trace.push(chain_objective(&a));
        if moved < T::lit(MOVE_TOL) {
            converged = true;
            break;
        }
    }
    Run { value: chain_objective(&a), vectors: a, sweeps, converged, trace }
}

fn initial_config<T: Real>(r: T, n: usize, rng: &mut Rng) -> Result<Vec<Vec<T>>> {
    let arc = optimal_construction_vectors(r, n)?;
    let (a1, an) = endpoints(r, n);
    let mut a = vec![a1];
    for v in &arc[1..n - 1] {
        loop {
            let mut w: Vec<T> = (0..n).map(|_| rng::normal::<T>(rng) * T::lit(INIT_NOISE)).collect();
            w[0] = w[0] + v[0];
            w[1] = w[1] + v[1];
            if let Some(w) = normalize(w) {
                a.push(w);
                break;
            }
        }
    }
    a.push(an);
    Ok(a)
}

/// Cyclic coordinate ascent: each interior `a_k` is replaced by the exact
/// maximizer given its neighbours, with the endpoints held fixed so that
/// `a_1·a_n = r` throughout. Restarts run in parallel on independent streams;
/// the best value wins, ties going to the lowest restart index.
pub fn maximize_chain_corr<T: Real>(r: T, n: usize, restarts: usize, seed: u64) -> Result<OptimizeResult<T>> {
    let r = open_r(r)?;
    if n < 3 {
        return Err(Error::BadArguments(format!("n = {n} must be at least 3")));
    }
    if restarts == 0 {
        return Err(Error::BadArguments("need at least one restart".into()));
    }
    let runs: Vec<Run<T>> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            initial_config(r, n, &mut rng).map(ascend)
        })
        .collect::<Result<_>>()?;
    let restart_values: Vec<T> = runs.iter().map(|run| run.value).collect();
    let best = (1..runs.len()).fold(0, |b, i| if runs[i].value > runs[b].value { i } else { b });
    let run = runs.into_iter().nth(best).expect("at least one restart");
    Ok(OptimizeResult {
        config: UnitVectorConfig::new(run.vectors)?,
        value: run.value,
        iterations: run.sweeps,
        converged: run.converged,
        restarts_used: restarts,
        restart_values,
        trace: run.trace,
    })
}

/// Best `∏ ρ_{k,k+1}` found by random search over Gram factors followed by
/// stochastic hill climbing. Every evaluated point is a genuine correlation
/// matrix with `ρ_1n = r`, so the result is a certified lower estimate of the
/// true maximum.
pub fn psd_oracle<T: Real>(r: T, n: usize, samples: usize, seed: u64) -> Result<T> {
    let r = open_r(r)?;
    if !(3..=4).contains(&n) {
        return Err(Error::BadArguments(format!("n = {n} must be 3 or 4")));
    }
    if samples < ORACLE_MIN_SAMPLES {
        return Err(Error::BadArguments(format!("samples = {samples} is below {ORACLE_MIN_SAMPLES}")));
    }
    let mut rng = rng::seeded(seed);
    let (a1, an) = endpoints(r, n);
    let eval = |interior: &[Vec<T>]| {
        let mut all = vec![a1.clone()];
        all.extend_from_slice(interior);
        all.push(an.clone());
        chain_objective(&all)
    };
    let draw = |rng: &mut Rng| -> Vec<Vec<T>> { (1..n - 1).map(|_| rng::unit_vector(rng, n)).collect() };

    let search = samples / 2;
    let mut best = draw(&mut rng);
    let mut best_value = eval(&best);
    for _ in 1..search {
        let cand = draw(&mut rng);
        let v = eval(&cand);
        if v > best_value {
            best = cand;
            best_value = v;
        }
    }
    let mut step = T::lit(0.5);
    let mut since_improvement = 0;
    for _ in search..samples {
        let k = rng.random_range(0..n - 2);
        let mut cand = best.clone();
        let moved: Vec<T> = cand[k].iter().map(|&x| x + step * rng::normal::<T>(&mut rng)).collect();
        let Some(moved) = normalize(moved) else { continue };
        cand[k] = moved;
        let v = eval(&cand);
        if v > best_value {
            best = cand;
            best_value = v;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 50 {
                step = (step * T::lit(0.5)).max(T::lit(1e-9));
                since_improvement = 0;
            }
        }
    }
    Ok(best_value)
}

/// Euclidean projection of `x` onto `{y ≥ 0, Σ y = total}`.
fn project_simplex<T: Real>(x: &[T], total: T) -> Vec<T> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cum = T::zero();
    let mut shift = T::zero();
    for (i, &v) in sorted.iter().enumerate() {
        cum = cum + v;
        let t = (cum - total) / T::from_usize_lossy(i + 1);
        if v - t > T::zero() {
            shift = t;
        }
    }
    x.iter().map(|&v| (v - shift).max(T::zero())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct JointOracleResult<T = f64> {
    pub value: T,
    pub witness: BinaryJoint<T>,
    pub restart_values: Vec<T>,
}

/// Maximizes `∏ ρ_{k,k+1}(p)` over joints on `{−1,1}^n` with uniform marginals
/// and `ρ_1n = r`, by projected gradient ascent from several random starts.
///
/// Replacing `p` by `(p(s) + p(−s))/2` keeps every pairwise correlation, so the
/// search runs over sign-symmetric joints, parametrized by `q(s) = 2p(s)` on
/// patterns with `s_1 = +1`. Marginals are then uniform automatically and
/// `ρ_1n = r` splits the feasible set into two scaled simplices: mass
/// `(1+r)/2` on `s_n = s_1` and `(1−r)/2` on `s_n ≠ s_1`.
pub fn binary_joint_oracle<T: Real>(r: T, n: usize, restarts: usize, seed: u64) -> Result<JointOracleResult<T>> {
    let band = T::tol(1e-12);
    if r.is_nan() || r.abs() > T::one() + band {
        return Err(Error::InfeasibleR(r.as_f64()));
    }
    let r = r.max(-T::one()).min(T::one());
    if !(2..=6).contains(&n) {
        return Err(Error::BadArguments(format!("n = {n} must lie in 2..=6")));
    }
    if restarts == 0 {
        return Err(Error::BadArguments("need at least one restart".into()));
    }
    let half = 1usize << (n - 1);
    // pattern idx < half has s_1 = +1 after adding `half`
    let signs: Vec<Vec<T>> = (0..half)
        .map(|idx| (1..=n).map(|i| T::lit(crate::binary::sign_of(idx + half, i, n) as f64)).collect())
        .collect();
    let same: Vec<usize> = (0..half).filter(|&i| signs[i][n - 1] > T::zero()).collect();
    let diff: Vec<usize> = (0..half).filter(|&i| signs[i][n - 1] < T::zero()).collect();
    let mass_same = (T::one() + r) / T::lit(2.0);
    let mass_diff = (T::one() - r) / T::lit(2.0);

    let corrs = |q: &[T]| -> Vec<T> {
        (0..n - 1).map(|k| q.iter().zip(&signs).map(|(&w, s)| w * s[k] * s[k + 1]).sum()).collect()
    };
    let objective = |q: &[T]| corrs(q).into_iter().fold(T::one(), |a, b| a * b);
    let project = |x: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); half];
        for (group, mass) in [(&same, mass_same), (&diff, mass_diff)] {
            let part: Vec<T> = group.iter().map(|&i| x[i]).collect();
            for (&i, v) in group.iter().zip(project_simplex(&part, mass)) {
                out[i] = v;
            }
        }
        out
    };

    let runs: Vec<(T, Vec<T>)> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = rng::stream(seed, restart as u64);
            let start: Vec<T> = (0..half).map(|_| T::lit(-(1.0 - rng.random::<f64>()).ln())).collect();
            let mut q = project(&start);
            let mut value = objective(&q);
            let mut step = T::one();
            for _ in 0..JOINT_MAX_ITERS {
                let c = corrs(&q);
                let grad: Vec<T> = signs
                    .iter()
                    .map(|s| {
                        (0..n - 1)
                            .map(|k| {
                                let rest = (0..n - 1).filter(|&j| j != k).fold(T::one(), |a, j| a * c[j]);
                                rest * s[k] * s[k + 1]
                            })
                            .sum()
                    })
                    .collect();
                let mut accepted = false;
                while step > T::lit(1e-14) {
                    let trial = project(&q.iter().zip(&grad).map(|(&x, &g)| x + step * g).collect::<Vec<T>>());
                    let v = objective(&trial);
                    if v > value {
                        q = trial;
                        value = v;
                        step = step * T::lit(2.0);
                        accepted = true;
                        break;
                    }
                    step = step * T::lit(0.5);
                }
                if !accepted {
                    break;
                }
            }
            (value, q)
        })
        .collect();

    let restart_values: Vec<T> = runs.iter().map(|(v, _)| *v).collect();
    let best = (1..runs.len()).fold(0, |b, i| if runs[i].0 > runs[b].0 { i } else { b });
    let (value, q) = runs[best].clone();
    let mut pmf = vec![T::zero(); 1 << n];
    for (idx, &w) in q.iter().enumerate() {
        pmf[idx + half] = w / T::lit(2.0);
        pmf[half - 1 - idx] = w / T::lit(2.0);
    }
    let witness = BinaryJoint::from_weights_unchecked(n, pmf);
    Ok(JointOracleResult { value, witness, restart_values })
}

/// Gram matrix of an optimizer result, for validation.
pub fn result_gram<T: Real>(res: &OptimizeResult<T>) -> crate::corr::CorrMatrix<T> {
    gram_from_vectors(&res.config)
}
