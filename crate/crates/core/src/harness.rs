//! Experiment runner: sweeps methods × subsample sizes × replications, scores
//! each fit and writes results, aggregates and plot inputs.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    gen_corrupted_split, gen_leverage_regime_split, load_airline_csv_with, AirlineOptions, CorruptionParams,
    LeverageRegime, RegressionProblem, SplitProblem,
};
use crate::diagnostics::{exact_diagnostics, histogram, histogram_l1_distance, pooled_range, DEFAULT_HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::estimators::{fit, EstimatorConfig, FitResult, Method};
use crate::matrix::{solve_ls, DenseMatrix, DenseVector};
use crate::rng::{derive_seed, tag};
use crate::sampling::SamplingScheme;

pub const RESULTS_HEADER: [&str; 8] = [
    "method",
    "n_subs",
    "replication",
    "seed",
    "est_error",
    "rmse",
    "wall_time_ms",
    "error",
];

/// Exact IWS-LS is skipped above this `n · p²`.
pub const EXACT_IWS_MAX_COST: f64 = 1e9;

const DEFAULT_GRID_MULTIPLES: [usize; 4] = [2, 4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Corrupted,
    Gaussian,
    T3,
    T1,
    Airline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Training rows (airline: rows taken from the file for training).
    pub n: usize,
    pub n_test: usize,
    /// Ignored for airline, where the encoding fixes `p`.
    pub p: usize,
    pub pi: f64,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub sigma_eps: f64,
    /// Evaluate test RMSE on the uncorrupted design.
    pub clean_test: bool,
    pub methods: Vec<Method>,
    /// Ascending; defaults to `{2, 4, 8, 16} · p`.
    pub n_subs_grid: Option<Vec<usize>>,
    pub replications: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    /// `None` keeps each method's default.
    pub sampling: Option<SamplingScheme>,
    pub reweight: bool,
    pub weight_floor_ratio: f64,
    pub train_csv: Option<PathBuf>,
    pub carrier: Option<String>,
    pub include_distance: bool,
    /// Leave wall times and timestamps out of every output file.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Corrupted,
            n: 20_000,
            n_test: 1_000,
            p: 50,
            pi: 0.3,
            sigma_x: 1.0,
            sigma_w: 0.4,
            sigma_eps: 0.1,
            clean_test: false,
            methods: vec![
                Method::Ols,
                Method::SrhtLs,
                Method::Uluru,
                Method::IwsLs,
                Method::AiwsLs,
                Method::ArwsLs,
            ],
            n_subs_grid: None,
            replications: 20,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            r1: None,
            r2: None,
            sampling: None,
            reweight: false,
            weight_floor_ratio: crate::estimators::DEFAULT_WEIGHT_FLOOR_RATIO,
            train_csv: None,
            carrier: None,
            include_distance: true,
            deterministic: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid_for(&self, p: usize) -> Vec<usize> {
        self.n_subs_grid
            .clone()
            .unwrap_or_else(|| DEFAULT_GRID_MULTIPLES.iter().map(|m| m * p).collect())
    }

    /// Checks everything that does not depend on loaded data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        let mut seen = HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return bad(format!("method {m} listed twice"));
        }
        if let Some(grid) = &self.n_subs_grid {
            if grid.is_empty() {
                return bad("n_subs_grid is empty".into());
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad("n_subs_grid must be strictly ascending".into());
            }
        }
        if self.scenario == Scenario::Airline {
            if self.train_csv.is_none() {
                return bad("airline scenario needs train_csv".into());
            }
        } else {
            self.check_grid(self.p)?;
            if self.n <= self.p {
                return bad(format!("n = {} must exceed p = {}", self.n, self.p));
            }
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return bad(format!("pi = {} outside [0, 1]", self.pi));
        }
        if [self.sigma_x, self.sigma_w, self.sigma_eps].iter().any(|s| s.is_nan() || *s < 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        Ok(())
    }

    fn check_grid(&self, p: usize) -> Result<()> {
        let grid = self.grid_for(p);
        if let Some(k) = grid.iter().find(|&&k| k < p) {
            return Err(Error::Config(format!("n_subs = {k} is below p = {p}")));
        }
        Ok(())
    }

    fn estimator(&self, method: Method, n_subs: usize, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            r1: self.r1,
            r2: self.r2,
            sampling: self.sampling,
            reweight: self.reweight,
            weight_floor_ratio: self.weight_floor_ratio,
            ..EstimatorConfig::new(method, n_subs, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub n_subs: usize,
    pub replication: usize,
    pub seed: u64,
    /// `‖β̂ − β‖₂`; absent without a known `β` or when the fit failed.
    pub est_error: Option<f64>,
    pub rmse: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub error: Option<String>,
}

/// Seed of one fit, mixing method, subsample size and replication.
pub fn child_seed(base_seed: u64, method: Method, n_subs: usize, replication: usize) -> u64 {
    derive_seed(base_seed, &[tag(method.name()), n_subs as u64, replication as u64])
}

pub fn data_seed(base_seed: u64, replication: usize) -> u64 {
    derive_seed(base_seed, &[tag("data"), replication as u64])
}

/// Root mean squared prediction error of `beta` on `(z, y)`.
pub fn rmse(z: &DenseMatrix<f64>, y: &DenseVector<f64>, beta: &DenseVector<f64>) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let r = y.sub(&z.matvec(beta)?);
    Ok(r.norm() / (y.len() as f64).sqrt())
}

/// Methods actually run: exact IWS-LS is dropped when `n · p²` is too large.
pub fn effective_methods(methods: &[Method], n: usize, p: usize) -> Vec<Method> {
    let cost = n as f64 * (p as f64).powi(2);
    methods
        .iter()
        .copied()
        .filter(|&m| {
            let keep = m != Method::IwsLs || cost <= EXACT_IWS_MAX_COST;
            if !keep {
                log::warn!("skipping {m}: n·p² = {cost:.3e} exceeds {EXACT_IWS_MAX_COST:.0e}");
            }
            keep
        })
        .collect()
}

fn load_data(cfg: &ExperimentConfig) -> Result<Option<SplitProblem<f64>>> {
    if cfg.scenario != Scenario::Airline {
        return Ok(None);
    }
    let path = cfg.train_csv.as_ref().expect("validated");
    let opts = AirlineOptions {
        carrier: cfg.carrier.clone(),
        include_distance: cfg.include_distance,
        ..AirlineOptions::new(cfg.n, cfg.n_test)
    };
    Ok(Some(load_airline_csv_with(path, &opts)?.split))
}

fn simulate(cfg: &ExperimentConfig, replication: usize) -> Result<SplitProblem<f64>> {
    let seed = data_seed(cfg.base_seed, replication);
    let regime = |r| gen_leverage_regime_split(cfg.n, cfg.n_test, cfg.p, r, seed);
    match cfg.scenario {
        Scenario::Corrupted => {
            let params = CorruptionParams {
                n: cfg.n,
                p: cfg.p,
                pi: cfg.pi,
                sigma_x: cfg.sigma_x,
                sigma_w: cfg.sigma_w,
                sigma_eps: cfg.sigma_eps,
            };
            gen_corrupted_split(&params, cfg.n_test, cfg.clean_test, seed)
        }
        Scenario::Gaussian => regime(LeverageRegime::Gaussian),
        Scenario::T3 => regime(LeverageRegime::T3),
        Scenario::T1 => regime(LeverageRegime::T1),
        Scenario::Airline => unreachable!("airline data is loaded once"),
    }
}

fn score(
    cfg: &ExperimentConfig,
    data: &SplitProblem<f64>,
    fitted: std::result::Result<&FitResult<f64>, String>,
    key: (Method, usize, usize, u64),
) -> ExperimentResult {
    let (method, n_subs, replication, seed) = key;
    let mut row = ExperimentResult {
        method,
        n_subs,
        replication,
        seed,
        est_error: None,
        rmse: None,
        wall_time_ms: None,
        error: None,
    };
    let scored = fitted.and_then(|f| {
        let beta = &f.coefficients;
        let est = data.train.truth.as_ref().map(|t| beta.sub(&t.beta).norm());
        let test_rmse = if data.test.n() > 0 {
            Some(rmse(&data.test.z, &data.test.y, beta).map_err(|e| e.to_string())?)
        } else {
            None
        };
        if !beta.is_finite() {
            return Err("non-finite coefficients".to_string());
        }
        Ok((est, test_rmse, f.wall_time.as_secs_f64() * 1e3))
    });
    match scored {
        Ok((est, r, ms)) => {
            row.est_error = est;
            row.rmse = r;
            if !cfg.deterministic {
                row.wall_time_ms = Some(ms);
            }
        }
        Err(msg) => row.error = Some(msg),
    }
    row
}

fn run_replication(
    cfg: &ExperimentConfig,
    methods: &[Method],
    grid: &[usize],
    shared: Option<&SplitProblem<f64>>,
    replication: usize,
) -> Result<Vec<ExperimentResult>> {
    let owned;
    let data = match shared {
        Some(d) => d,
        None => {
            owned = simulate(cfg, replication)?;
            &owned
        }
    };
    let problem: &RegressionProblem<f64> = &data.train;
    let mut rows = Vec::with_capacity(methods.len() * grid.len());
    for &method in methods {
        // OLS ignores n_subs: fit once and report it at every grid point.
        let mut ols = None;
        for &n_subs in grid {
            let seed = child_seed(cfg.base_seed, method, n_subs, replication);
            let run = || fit(problem, &cfg.estimator(method, n_subs, seed)).map_err(|e| e.to_string());
            let fresh;
            let fitted = if method == Method::Ols {
                ols.get_or_insert_with(run).as_ref().map_err(Clone::clone)
            } else {
                fresh = run();
                fresh.as_ref().map_err(Clone::clone)
            };
            rows.push(score(cfg, data, fitted, (method, n_subs, replication, seed)));
        }
    }
    Ok(rows)
}

/// Runs the full sweep. Rows are sorted by method, `n_subs`, replication.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let shared = load_data(cfg)?;
    let (n, p) = match &shared {
        Some(d) => (d.train.n(), d.train.p()),
        None => (cfg.n, cfg.p),
    };
    cfg.check_grid(p)?;
    let grid = cfg.grid_for(p);
    let methods = effective_methods(&cfg.methods, n, p);

    let mut seeds = HashSet::new();
    for &m in &methods {
        for &k in &grid {
            for rep in 0..cfg.replications {
                if !seeds.insert(child_seed(cfg.base_seed, m, k, rep)) {
                    return Err(Error::Config(format!("seed collision at ({m}, {k}, {rep})")));
                }
            }
        }
    }

    let per_rep: Vec<Result<Vec<ExperimentResult>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &methods, &grid, shared.as_ref(), rep))
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| (r.method, r.n_subs, r.replication));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub sd: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        Some(Self { mean, sd, median })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: Method,
    pub n_subs: usize,
    /// Rows that produced a fit.
    pub count: usize,
    /// Rows excluded because the fit failed.
    pub errors: usize,
    pub est_error: Option<Summary>,
    pub rmse: Option<Summary>,
    pub wall_time_ms: Option<Summary>,
}

/// Groups by `(method, n_subs)`; failed rows are counted, not averaged.
pub fn aggregate(results: &[ExperimentResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, usize), Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.method, r.n_subs)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, n_subs), rows)| {
            let ok: Vec<_> = rows.iter().filter(|r| r.error.is_none()).collect();
            let collect = |f: fn(&ExperimentResult) -> Option<f64>| {
                Summary::of(&ok.iter().filter_map(|r| f(r)).filter(|v| v.is_finite()).collect::<Vec<_>>())
            };
            AggregateRow {
                method,
                n_subs,
                count: ok.len(),
                errors: rows.len() - ok.len(),
                est_error: collect(|r| r.est_error),
                rmse: collect(|r| r.rmse),
                wall_time_ms: collect(|r| r.wall_time_ms),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv(results: &[ExperimentResult], mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.method.name().to_string(),
            r.n_subs.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            fmt_opt(r.est_error),
            fmt_opt(r.rmse),
            fmt_opt(r.wall_time_ms),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn write_aggregate_csv(rows: &[AggregateRow], mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec!["method".to_string(), "n_subs".into(), "count".into(), "errors".into()];
    for metric in ["est_error", "rmse", "wall_time_ms"] {
        for stat in ["mean", "sd", "median"] {
            header.push(format!("{metric}_{stat}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.method.name().to_string(),
            r.n_subs.to_string(),
            r.count.to_string(),
            r.errors.to_string(),
        ];
        for s in [r.est_error, r.rmse, r.wall_time_ms] {
            rec.push(fmt_opt(s.map(|s| s.mean)));
            rec.push(fmt_opt(s.map(|s| s.sd)));
            rec.push(fmt_opt(s.map(|s| s.median)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<aggregate>", e))?;
    Ok(())
}

/// Gnuplot script drawing mean ± sd of `metric` against `n_subs`.
pub fn gnuplot_script(rows: &[AggregateRow], metric: &str) -> String {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.dedup();
    // columns: mean, sd after method, n_subs, count, errors
    let base = match metric {
        "rmse" => 8,
        "wall_time_ms" => 11,
        _ => 5,
    };
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key outside right\n");
    s.push_str("set logscale x 2\n");
    s.push_str("set xlabel 'n_subs'\n");
    s.push_str(&format!("set ylabel '{metric} (mean, error bars = sd)'\n"));
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{metric}.png'\n"));
    let plots: Vec<String> = methods
        .iter()
        .map(|m| {
            format!(
                "'aggregate.csv' every ::1 using 2:(strcol(1) eq '{m}' ? ${} : 1/0):${} with yerrorlines title '{m}'",
                base,
                base + 1
            )
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Runs `cfg` and writes `results.csv`, `aggregate.csv`, `plot.gp` and
/// `manifest.json` under `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    let results = run_experiment(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_results_csv(&results, create(&dir.join("results.csv"))?)?;
    let agg = aggregate(&results);
    write_aggregate_csv(&agg, create(&dir.join("aggregate.csv"))?)?;
    fs::write(dir.join("plot.gp"), gnuplot_script(&agg, "est_error")).map_err(|e| Error::io(dir.join("plot.gp"), e))?;
    write_manifest(cfg, &dir.join("manifest.json"))?;
    Ok(results)
}

fn write_manifest(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    if !cfg.deterministic {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        manifest["created_unix"] = secs.into();
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Histograms of leverage and influence split by the corruption mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Data {
    pub bins: usize,
    pub leverage_range: (f64, f64),
    pub influence_range: (f64, f64),
    pub leverage_clean: Vec<f64>,
    pub leverage_corrupted: Vec<f64>,
    pub influence_clean: Vec<f64>,
    pub influence_corrupted: Vec<f64>,
    pub leverage_distance: f64,
    pub influence_distance: f64,
}

/// Exact leverage and influence of the full fit, histogrammed separately for
/// clean and corrupted rows, with the ℓ1 distance between the two groups.
pub fn fig1_data(problem: &RegressionProblem<f64>, bins: usize) -> Result<Fig1Data> {
    let truth = problem.truth.as_ref().ok_or(Error::MissingTruth)?;
    let mask = &truth.corruption_mask;
    if !mask.iter().any(|&c| c) {
        return Err(Error::MissingCorrupted);
    }
    if mask.iter().all(|&c| c) {
        return Err(Error::InvalidInput("no clean rows to compare against".into()));
    }
    let sol = solve_ls(&problem.z, &problem.y)?;
    let report = exact_diagnostics(&problem.z, &sol)?;
    let split = |v: &DenseVector<f64>| {
        let (mut clean, mut bad) = (Vec::new(), Vec::new());
        for (&x, &c) in v.iter().zip(mask) {
            if c { bad.push(x) } else { clean.push(x) }
        }
        (clean, bad)
    };
    let (lc, lb) = split(&report.leverages);
    let (ic, ib) = split(&report.influences);
    let lr = pooled_range(&lc, &lb)?;
    let ir = pooled_range(&ic, &ib)?;
    Ok(Fig1Data {
        bins,
        leverage_range: lr,
        influence_range: ir,
        leverage_clean: histogram(&lc, lr.0, lr.1, bins),
        leverage_corrupted: histogram(&lb, lr.0, lr.1, bins),
        influence_clean: histogram(&ic, ir.0, ir.1, bins),
        influence_corrupted: histogram(&ib, ir.0, ir.1, bins),
        leverage_distance: histogram_l1_distance(&lc, &lb, bins)?,
        influence_distance: histogram_l1_distance(&ic, &ib, bins)?,
    })
}

/// Writes `fig1_histograms.csv` (bin masses) and `fig1_distances.csv`.
pub fn emit_fig1_data(problem: &RegressionProblem<f64>, out_dir: &Path) -> Result<Fig1Data> {
    let data = fig1_data(problem, DEFAULT_HISTOGRAM_BINS)?;
    write_fig1(&data, out_dir)?;
    Ok(data)
}

pub fn write_fig1(data: &Fig1Data, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut w = csv::Writer::from_writer(create(&out_dir.join("fig1_histograms.csv"))?);
    w.write_record(["quantity", "group", "bin", "lo", "hi", "mass"])?;
    let series = [
        ("leverage", "clean", &data.leverage_clean, data.leverage_range),
        ("leverage", "corrupted", &data.leverage_corrupted, data.leverage_range),
        ("influence", "clean", &data.influence_clean, data.influence_range),
        ("influence", "corrupted", &data.influence_corrupted, data.influence_range),
    ];
    for (quantity, group, masses, (lo, hi)) in series {
        let width = (hi - lo) / data.bins as f64;
        for (k, m) in masses.iter().enumerate() {
            w.write_record([
                quantity.to_string(),
                group.to_string(),
                k.to_string(),
                (lo + k as f64 * width).to_string(),
                (lo + (k + 1) as f64 * width).to_string(),
                m.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(out_dir, e))?;

    let mut w = csv::Writer::from_writer(create(&out_dir.join("fig1_distances.csv"))?);
    w.write_record(["quantity", "l1_distance"])?;
    w.write_record(["leverage", &data.leverage_distance.to_string()])?;
    w.write_record(["influence", &data.influence_distance.to_string()])?;
    w.flush().map_err(|e| Error::io(out_dir, e))
}
