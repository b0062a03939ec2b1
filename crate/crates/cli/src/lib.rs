//! Argument parsing, dispatch and report writing for the `falsecorr` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use falsecorr::binary::{self, BinaryJoint};
use falsecorr::bounds;
use falsecorr::corr::{random_corr, sample_corr, CorrMatrix, Dataset};
use falsecorr::dag::Dag;
use falsecorr::estimator::{self, estimated_corr, fit, propagate, variance_audit_with_tol};
use falsecorr::optimize::{binary_joint_oracle, maximize_chain_corr, psd_oracle};
use falsecorr::reduction::reduce_to_chain;
use falsecorr::search::{self, best_chain_subset, best_single_auxiliary, pool_growth_curve, synth_pool, PoolProblem, Strategy};
use falsecorr::{verify, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Fully resolved invocation, echoed into every JSON report.
#[derive(Debug, Clone, PartialEq, Parser, Serialize)]
#[command(name = "falsecorr", version, about = "False correlations from misspecified recursive linear models")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Report format; JSON unless the command produces a series.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
}

/// Where a correlation matrix comes from.
#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct Input {
    /// CSV with a header row; columns are nodes 1..n in order.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Correlation matrix as JSON {"labels"?: [...], "entries": [[...]]}.
    #[arg(long)]
    pub corr: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructKind {
    Chain,
    SingleEq,
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryMode {
    Bound,
    Oracle,
    Realize,
    Analyze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Single,
    Exhaustive,
    Greedy,
    Curve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Pool,
    Corr,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Ceilings on the false correlation for true correlation r and n variables.
    #[command(allow_negative_numbers = true)]
    Bound {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        n: usize,
        /// Emit a CSV table for 2..=n instead of a single value.
        #[arg(long)]
        table: bool,
    },
    /// Constructions that attain the ceilings.
    #[command(allow_negative_numbers = true)]
    Construct {
        #[arg(long, value_enum, default_value = "chain")]
        kind: ConstructKind,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = -0.99)]
        delta: f64,
    },
    /// Fit a recursive model and report its implied moments.
    Fit {
        #[command(flatten)]
        input: Input,
        /// DAG as JSON {"n": .., "parents": {"k": [...]}}.
        #[arg(long)]
        dag: PathBuf,
        /// Pair "i,j" (1-based) whose model correlation is reported; defaults to 1,n.
        #[arg(long)]
        pair: Option<String>,
    },
    /// Check whether the fitted model reproduces every variance.
    Audit {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        dag: PathBuf,
        #[arg(long, default_value_t = estimator::AUDIT_TOL)]
        tolerance: f64,
    },
    /// Collapse a perfect-DAG model into an equivalent chain.
    Reduce {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        dag: PathBuf,
    },
    /// Maximize the chain objective numerically and compare with the closed form.
    #[command(allow_negative_numbers = true)]
    Optimize {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, env = "FALSECORR_SEED", default_value_t = 0)]
        seed: u64,
        /// Also run the brute-force oracle with this many samples (n = 3 or 4).
        #[arg(long)]
        oracle_samples: Option<usize>,
    },
    /// Chains over uniform binary variables.
    #[command(allow_negative_numbers = true)]
    Binary {
        #[arg(long, value_enum, default_value = "bound")]
        mode: BinaryMode,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Joint pmf as a JSON array of 2^n probabilities (for `analyze`).
        #[arg(long)]
        joint: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, env = "FALSECORR_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Pick auxiliary variables from a pool to maximize the model correlation.
    #[command(allow_negative_numbers = true)]
    Search {
        #[arg(long, value_enum, default_value = "single")]
        mode: SearchMode,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Correlation matrix JSON holding the targets and the pool; without it a
        /// synthetic pool is generated.
        #[arg(long)]
        corr: Option<PathBuf>,
        /// Target column (1-based index or label) when using --corr.
        #[arg(long, default_value = "1")]
        x1: String,
        #[arg(long, default_value = "2")]
        xn: String,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Generate a synthetic pool or a random correlation matrix.
    #[command(allow_negative_numbers = true)]
    Synth {
        #[arg(long, value_enum, default_value = "pool")]
        kind: SynthKind,
        #[command(flatten)]
        pool: PoolArgs,
        /// Matrix size for `--kind corr`.
        #[arg(long, default_value_t = 5)]
        n: usize,
    },
    /// Run the acceptance checks and print a pass/fail table.
    Verify,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
pub struct PoolArgs {
    /// Pool size.
    #[arg(long, default_value_t = 500)]
    pub m: usize,
    /// True correlation between the targets.
    #[arg(long = "target-r", default_value_t = 0.0)]
    pub target_r: f64,
    /// Dimension of the random vectors behind the pool.
    #[arg(long, default_value_t = search::DEFAULT_POOL_DIM)]
    pub dim: usize,
    /// Put the targets' bisector first in the pool.
    #[arg(long)]
    pub plant: bool,
    #[arg(long, env = "FALSECORR_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn usage(msg: impl std::fmt::Display) -> clap::Error {
    RunConfig::command().error(ErrorKind::ValueValidation, msg)
}

fn in_closed_unit(name: &str, r: f64) -> Result<(), clap::Error> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(usage(format!("--{name} must lie in [-1, 1], got {r}")));
    }
    Ok(())
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), clap::Error> {
    if v < min {
        return Err(usage(format!("--{name} must be at least {min}, got {v}")));
    }
    Ok(())
}

impl RunConfig {
    /// Checks every parameter against the preconditions of the operation it feeds.
    pub fn validate(&self) -> Result<(), clap::Error> {
        if self.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        match &self.command {
            Command::Bound { r, n, .. } => {
                in_closed_unit("r", *r)?;
                at_least("n", *n, 2)
            }
            Command::Construct { kind, r, n, delta } => match kind {
                ConstructKind::SingleEq => {
                    if !(delta.abs() <= 1.0 - bounds::DELTA_MARGIN) {
                        return Err(usage(format!("--delta must satisfy |delta| <= 1 - 1e-6, got {delta}")));
                    }
                    Ok(())
                }
                _ => {
                    in_closed_unit("r", *r)?;
                    at_least("n", *n, 2)
                }
            },
            Command::Audit { tolerance, .. } if !(*tolerance >= 0.0) => Err(usage("--tolerance must be nonnegative")),
            Command::Fit { pair: Some(p), .. } => parse_pair(p).map(|_| ()),
            Command::Optimize { r, n, restarts, oracle_samples, .. } => {
                if !(r.abs() < 1.0) {
                    return Err(usage(format!("--r must lie in (-1, 1), got {r}")));
                }
                at_least("n", *n, 3)?;
                at_least("restarts", *restarts, 1)?;
                if oracle_samples.is_some() && !(3..=4).contains(n) {
                    return Err(usage("--oracle-samples requires n = 3 or 4"));
                }
                Ok(())
            }
            Command::Binary { mode, r, n, joint, restarts, .. } => {
                in_closed_unit("r", *r)?;
                match mode {
                    BinaryMode::Bound => at_least("n", *n, 2),
                    BinaryMode::Oracle => {
                        at_least("restarts", *restarts, 1)?;
                        if !(2..=6).contains(n) {
                            return Err(usage("--n must lie in 2..=6 for the oracle"));
                        }
                        Ok(())
                    }
                    BinaryMode::Realize => {
                        if !(2..=binary::BRUTEFORCE_LIMIT).contains(n) {
                            return Err(usage(format!("--n must lie in 2..={}", binary::BRUTEFORCE_LIMIT)));
                        }
                        Ok(())
                    }
                    BinaryMode::Analyze if joint.is_none() => Err(usage("--mode analyze requires --joint")),
                    BinaryMode::Analyze => Ok(()),
                }
            }
            Command::Search { n, pool, .. } => {
                at_least("n", *n, 3)?;
                pool.validate()
            }
            Command::Synth { kind, pool, n } => match kind {
                SynthKind::Pool => pool.validate(),
                SynthKind::Corr => {
                    at_least("n", *n, 2)?;
                    at_least("dim", pool.dim, 2)?;
                    if pool.dim > *n {
                        return Err(usage("--dim must not exceed --n"));
                    }
                    Ok(())
                }
            },
            _ => Ok(()),
        }
    }

    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

impl PoolArgs {
    fn validate(&self) -> Result<(), clap::Error> {
        at_least("m", self.m, 1)?;
        at_least("dim", self.dim, 2)?;
        in_closed_unit("target-r", self.target_r)
    }
}

/// Parses and validates a full argument vector (including the program name).
pub fn parse_args<I, S>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cfg = RunConfig::try_parse_from(argv)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_pair(p: &str) -> Result<(usize, usize), clap::Error> {
    let parts: Vec<&str> = p.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(i), Ok(j)) if i >= 1 && j >= 1 => Ok((i, j)),
            _ => Err(usage(format!("--pair expects two 1-based indices \"i,j\", got {p:?}"))),
        },
        _ => Err(usage(format!("--pair expects \"i,j\", got {p:?}"))),
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Json(Value),
    Csv(String),
    Text(String),
}

/// A report plus the process exit code it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

fn read_to_string(path: &Path) -> falsecorr::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_corr(input: &Input) -> falsecorr::Result<CorrMatrix> {
    match (&input.data, &input.corr) {
        (Some(path), _) => sample_corr(&Dataset::from_csv_path(path)?),
        (None, Some(path)) => Ok(serde_json::from_str(&read_to_string(path)?)?),
        (None, None) => Err(Error::BadArguments("one of --data or --corr is required".into())),
    }
}

fn load_dag(path: &Path) -> falsecorr::Result<Dag> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

fn to_value<T: Serialize>(v: &T) -> falsecorr::Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn node_map(values: impl IntoIterator<Item = f64>) -> Value {
    let map: Map<String, Value> = values.into_iter().enumerate().map(|(i, v)| ((i + 1).to_string(), json!(v))).collect();
    Value::Object(map)
}

/// Adds the echoed configuration to a JSON object report.
fn with_config(cfg: &RunConfig, mut body: Value) -> falsecorr::Result<Value> {
    if let Value::Object(map) = &mut body {
        map.insert("run_config".into(), to_value(cfg)?);
    }
    Ok(body)
}

fn column(corr: &CorrMatrix, key: &str) -> falsecorr::Result<usize> {
    if let Ok(i) = key.parse::<usize>() {
        if i >= 1 && i <= corr.n() {
            return Ok(i - 1);
        }
        return Err(Error::NodeOutOfRange { node: i, n: corr.n() });
    }
    corr.index_of(key).ok_or_else(|| Error::BadPool(format!("no column labelled {key:?}")))
}

fn pool_problem(corr: Option<&PathBuf>, x1: &str, xn: &str, pool: &PoolArgs) -> falsecorr::Result<PoolProblem> {
    match corr {
        Some(path) => {
            let m: CorrMatrix = serde_json::from_str(&read_to_string(path)?)?;
            let (a, b) = (column(&m, x1)?, column(&m, xn)?);
            let rest = (0..m.n()).filter(|&i| i != a && i != b).collect();
            PoolProblem::new(m, a, b, rest)
        }
        None => synth_pool(pool.m, pool.target_r, pool.dim, pool.plant, pool.seed),
    }
}

/// Runs the configured command.
pub fn execute(cfg: &RunConfig) -> falsecorr::Result<Outcome> {
    if let Some(t) = cfg.threads {
        // a global pool can only be installed once per process; later calls keep the first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let json = |body: Value| -> falsecorr::Result<Outcome> { Ok(Outcome { report: Report::Json(with_config(cfg, body)?), exit_code: 0 }) };
    match &cfg.command {
        Command::Bound { r, n, table } => {
            if *table || cfg.format == Some(Format::Csv) {
                let mut out = String::from("n,gaussian_bound,binary_bound\n");
                for k in 2..=*n {
                    let g = bounds::theorem1_bound(*r, k)?.value;
                    out.push_str(&format!("{k},{g},{}\n", bounds::binary_bound(*r, k)?));
                }
                return Ok(Outcome { report: Report::Csv(out), exit_code: 0 });
            }
            let b = bounds::theorem1_bound(*r, *n)?;
            let mut body = to_value(&b)?;
            body["binary_bound"] = json!(bounds::binary_bound(*r, *n)?);
            body["single_equation_sup"] = json!(bounds::single_eq_sup::<f64>());
            json(body)
        }
        Command::Construct { kind, r, n, delta } => match kind {
            ConstructKind::Chain => {
                let (m, g) = bounds::optimal_construction(*r, *n)?;
                let hat = estimator::estimated_end_corr(&m, &g)?;
                json(json!({ "corr": to_value(&m)?, "dag": to_value(&g)?, "rho_hat": hat,
                             "bound": bounds::theorem1_bound(*r, *n)?.value }))
            }
            ConstructKind::SingleEq => {
                let (m, g) = bounds::single_eq_construction(*delta)?;
                let em = propagate(&fit(&m, &g)?);
                json(json!({ "corr": to_value(&m)?, "dag": to_value(&g)?,
                             "rho_hat": estimated_corr(&em, 1, 3)?, "var_hat_3": em.var_hat(3),
                             "supremum": bounds::single_eq_sup::<f64>() }))
            }
            ConstructKind::Sign => json(to_value(&bounds::sign_construction(*r, *n)?)?),
        },
        Command::Fit { input, dag, pair } => {
            let rho = load_corr(input)?;
            let g = load_dag(dag)?;
            let model = fit(&rho, &g)?;
            let em = propagate(&model);
            let (i, j) = match pair {
                Some(p) => parse_pair(p).map_err(|e| Error::BadArguments(e.to_string()))?,
                None => (1, g.n()),
            };
            let mut body = json!({
                "model": to_value(&model)?,
                "sigma_hat": em.sigma_hat.to_rows(),
                "var_hat": node_map((1..=g.n()).map(|k| em.var_hat(k))),
            });
            body[format!("rho_hat_{i}_{j}")] = json!(estimated_corr(&em, i, j)?);
            body[format!("rho_{i}_{j}")] = json!(rho.get(i - 1, j - 1));
            if let Some(labels) = rho.labels() {
                body["labels"] = json!(labels);
            }
            json(body)
        }
        Command::Audit { input, dag, tolerance } => {
            let rho = load_corr(input)?;
            let g = load_dag(dag)?;
            let audit = variance_audit_with_tol(&fit(&rho, &g)?, *tolerance);
            let witness = g.imperfection_witness().map(|(c, a, b)| json!({ "child": c, "parents": [a, b] }));
            json(json!({
                "pass": audit.pass,
                "var_hat": node_map(audit.var_hat.iter().copied()),
                "max_deviation": audit.max_deviation,
                "tolerance": audit.tolerance,
                "perfect": g.is_perfect(),
                "imperfection": witness,
            }))
        }
        Command::Reduce { input, dag } => {
            let rho = load_corr(input)?;
            let g = load_dag(dag)?;
            let red = reduce_to_chain(&rho, &g)?;
            let mut body = to_value(&red)?;
            body["rho_hat"] = json!(estimator::chain_product_corr(&red.chain_corr));
            json(body)
        }
        Command::Optimize { r, n, restarts, seed, oracle_samples } => {
            let res = maximize_chain_corr(*r, *n, *restarts, *seed)?;
            let mut body = to_value(&res)?;
            body["bound"] = json!(bounds::theorem1_bound(*r, *n)?.value);
            if let Some(s) = oracle_samples {
                body["psd_oracle"] = json!(psd_oracle(*r, *n, *s, *seed)?);
            }
            json(body)
        }
        Command::Binary { mode, r, n, joint, samples, restarts, seed } => match mode {
            BinaryMode::Bound => json(json!({ "binary_bound": bounds::binary_bound(*r, *n)?,
                                              "gaussian_bound": bounds::theorem1_bound(*r, *n)?.value })),
            BinaryMode::Oracle => {
                let res = binary_joint_oracle(*r, *n, *restarts, *seed)?;
                let mut body = to_value(&res)?;
                body["binary_bound"] = json!(bounds::binary_bound(*r, *n)?);
                json(body)
            }
            BinaryMode::Realize => {
                let j: BinaryJoint = binary::realize_sign_joint(*r, *n, *samples, *seed)?;
                analyze_joint(&j).and_then(json)
            }
            BinaryMode::Analyze => {
                let path = joint.as_ref().ok_or_else(|| Error::BadArguments("--joint is required".into()))?;
                let j: BinaryJoint = serde_json::from_str(&read_to_string(path)?)?;
                analyze_joint(&j).and_then(json)
            }
        },
        Command::Search { mode, n, corr, x1, xn, pool } => {
            let p = pool_problem(corr.as_ref(), x1, xn, pool)?;
            match mode {
                SearchMode::Single => {
                    let (idx, value) = best_single_auxiliary(&p)?;
                    json(json!({ "index": idx, "value": value, "target_corr": p.target_corr() }))
                }
                SearchMode::Exhaustive | SearchMode::Greedy => {
                    let strategy = if *mode == SearchMode::Exhaustive { Strategy::Exhaustive } else { Strategy::Greedy };
                    let c = best_chain_subset(&p, *n, strategy)?;
                    let mut body = to_value(&c)?;
                    body["target_corr"] = json!(p.target_corr());
                    body["bound"] = json!(bounds::theorem1_bound(p.target_corr(), *n)?.value);
                    json(body)
                }
                SearchMode::Curve => {
                    let curve = pool_growth_curve(&p, &p.pool_indices, *n)?;
                    match cfg.format_or(Format::Csv) {
                        Format::Csv => Ok(Outcome { report: Report::Csv(curve.to_csv()?), exit_code: 0 }),
                        Format::Json => json(to_value(&curve)?),
                    }
                }
            }
        }
        Command::Synth { kind, pool, n } => match kind {
            SynthKind::Pool => json(to_value(&synth_pool(pool.m, pool.target_r, pool.dim, pool.plant, pool.seed)?)?),
            SynthKind::Corr => {
                let m: CorrMatrix = random_corr(*n, pool.dim, pool.seed)?;
                json(json!({ "corr": to_value(&m)? }))
            }
        },
        Command::Verify => {
            let reports = verify::run_all();
            let exit_code = if reports.iter().all(|r| r.pass) { 0 } else { 1 };
            let report = match cfg.format {
                Some(Format::Json) => Report::Json(with_config(cfg, json!({ "criteria": to_value(&reports)? }))?),
                _ => Report::Text(reports.iter().map(|r| format!("{r}\n")).collect()),
            };
            Ok(Outcome { report, exit_code })
        }
    }
}

fn analyze_joint(j: &BinaryJoint) -> falsecorr::Result<Value> {
    let n = j.n();
    let model = binary::fit_binary_chain(j)?;
    let prop = binary::binary_propagate(&model);
    let mut body = json!({
        "joint": to_value(j)?,
        "chain": to_value(&model)?,
        "rho_hat": prop.rho_hat,
        "rho_1n": j.corr(1, n),
        "consecutive_corr": (1..n).map(|k| j.corr(k, k + 1)).collect::<Vec<_>>(),
        "binary_bound": bounds::binary_bound(j.corr(1, n), n)?,
    });
    if n <= binary::BRUTEFORCE_LIMIT {
        body["rho_hat_bruteforce"] = json!(binary::binary_estimated_corr_bruteforce(j)?);
    }
    Ok(body)
}

/// Writes the report to `--output` or standard output. JSON is pretty-printed
/// with sorted keys.
pub fn emit_report(report: &Report, cfg: &RunConfig) -> falsecorr::Result<()> {
    let text = match report {
        Report::Json(v) => format!("{}\n", serde_json::to_string_pretty(v)?),
        Report::Csv(s) | Report::Text(s) => s.clone(),
    };
    match &cfg.output {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
