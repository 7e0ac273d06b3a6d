//! Regression problems: the corrupted observation model `Z = X + U W`,
//! `y = X β + ε`, the Gaussian / multivariate-t leverage regimes, and the
//! airline-delay CSV loader.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, DenseVector};
use crate::rng;
use crate::scalar::Real;

/// Generating components of a simulated problem.
#[derive(Debug, Clone)]
pub struct Truth<T> {
    pub x: DenseMatrix<T>,
    pub w: DenseMatrix<T>,
    pub beta: DenseVector<T>,
    pub noise: DenseVector<T>,
    /// `u_i`: whether row `i` of `Z` carries the corruption `w_i`.
    pub corruption_mask: Vec<bool>,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub sigma_eps: f64,
    pub pi: f64,
}

impl<T: Real> Truth<T> {
    /// Rebuilds `(Z, y)` from the stored components.
    pub fn regenerate(&self) -> Result<(DenseMatrix<T>, DenseVector<T>)> {
        let (n, p) = self.x.shape();
        let z = DenseMatrix::from_fn(n, p, |i, j| {
            if self.corruption_mask[i] {
                self.x[(i, j)] + self.w[(i, j)]
            } else {
                self.x[(i, j)]
            }
        });
        let y = self.x.matvec(&self.beta)?.add(&self.noise);
        Ok((z, y))
    }

    pub fn corrupted_count(&self) -> usize {
        self.corruption_mask.iter().filter(|&&u| u).count()
    }

    fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            x: self.x.slice_rows(start, end),
            w: self.w.slice_rows(start, end),
            beta: self.beta.clone(),
            noise: self.noise.slice(start, end),
            corruption_mask: self.corruption_mask[start..end].to_vec(),
            ..*self
        }
    }
}

/// Observed design and response, plus the generating truth for simulations.
#[derive(Debug, Clone)]
pub struct RegressionProblem<T> {
    pub z: DenseMatrix<T>,
    pub y: DenseVector<T>,
    pub truth: Option<Truth<T>>,
}

impl<T: Real> RegressionProblem<T> {
    pub fn new(z: DenseMatrix<T>, y: DenseVector<T>) -> Result<Self> {
        if z.rows() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "design has {} rows, response {}",
                z.rows(),
                y.len()
            )));
        }
        z.ensure_finite()?;
        y.ensure_finite()?;
        Ok(Self { z, y, truth: None })
    }

    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn p(&self) -> usize {
        self.z.cols()
    }

    fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            z: self.z.slice_rows(start, end),
            y: self.y.slice(start, end),
            truth: self.truth.as_ref().map(|t| t.slice_rows(start, end)),
        }
    }
}

/// Training and held-out rows sharing one coefficient vector.
#[derive(Debug, Clone)]
pub struct SplitProblem<T> {
    pub train: RegressionProblem<T>,
    pub test: RegressionProblem<T>,
}

/// Parameters of the corrupted observation model (isotropic covariances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    pub n: usize,
    pub p: usize,
    pub pi: f64,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub sigma_eps: f64,
}

impl CorruptionParams {
    /// `π = 0.3, σ_x = 1, σ_w = 0.4, σ_ε = 0.1`.
    pub fn reference(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            pi: 0.3,
            sigma_x: 1.0,
            sigma_w: 0.4,
            sigma_eps: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParams("n and p must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::InvalidParams(format!("pi = {} outside [0, 1]", self.pi)));
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma_x = {} must be positive", self.sigma_x)));
        }
        for (name, v) in [("sigma_w", self.sigma_w), ("sigma_eps", self.sigma_eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }
}

// Independent streams per component, so changing pi or sigma_w leaves X, beta
// and the noise untouched for a given seed.
const X_STREAM: u64 = 10;
const W_STREAM: u64 = 11;
const MASK_STREAM: u64 = 12;
const BETA_STREAM: u64 = 13;
const NOISE_STREAM: u64 = 14;
const SCALE_STREAM: u64 = 15;

fn gaussian_matrix<T: Real>(rows: usize, cols: usize, sd: f64, seed: u64, stream: u64) -> DenseMatrix<T> {
    let mut r = rng::stream(seed, stream);
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let g: f64 = StandardNormal.sample(&mut r);
        T::lit(sd * g)
    })
}

fn gaussian_vector<T: Real>(len: usize, sd: f64, seed: u64, stream: u64) -> DenseVector<T> {
    let mut r = rng::stream(seed, stream);
    (0..len)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut r);
            T::lit(sd * g)
        })
        .collect()
}

/// Draws a problem from the corrupted observation model: `X`, `W`, `β`, `ε`
/// i.i.d. Gaussian (per-entry standard deviations `σ_x`, `σ_w`, 1, `σ_ε`)
/// and a Bernoulli(`π`) row mask.
pub fn gen_corrupted<T: Real>(params: &CorruptionParams, seed: u64) -> Result<RegressionProblem<T>> {
    params.validate()?;
    let CorruptionParams { n, p, .. } = *params;
    let x = gaussian_matrix(n, p, params.sigma_x, seed, X_STREAM);
    let w = gaussian_matrix(n, p, params.sigma_w, seed, W_STREAM);
    let mut mask_rng = rng::stream(seed, MASK_STREAM);
    let corruption_mask = (0..n).map(|_| mask_rng.random::<f64>() < params.pi).collect();
    let beta = gaussian_vector(p, 1.0, seed, BETA_STREAM);
    let noise = gaussian_vector(n, params.sigma_eps, seed, NOISE_STREAM);
    let truth = Truth {
        x,
        w,
        beta,
        noise,
        corruption_mask,
        sigma_x: params.sigma_x,
        sigma_w: params.sigma_w,
        sigma_eps: params.sigma_eps,
        pi: params.pi,
    };
    let (z, y) = truth.regenerate()?;
    Ok(RegressionProblem {
        z,
        y,
        truth: Some(truth),
    })
}

/// Corrupted training rows plus `n_test` held-out rows with the same `β`.
///
/// With `clean_test` the held-out design is the uncorrupted `X`.
pub fn gen_corrupted_split<T: Real>(
    params: &CorruptionParams,
    n_test: usize,
    clean_test: bool,
    seed: u64,
) -> Result<SplitProblem<T>> {
    let all = gen_corrupted(
        &CorruptionParams {
            n: params.n + n_test,
            ..*params
        },
        seed,
    )?;
    Ok(split_simulated(all, params.n, clean_test))
}

fn split_simulated<T: Real>(all: RegressionProblem<T>, n_train: usize, clean_test: bool) -> SplitProblem<T> {
    let n = all.n();
    let train = all.slice_rows(0, n_train);
    let mut test = all.slice_rows(n_train, n);
    if clean_test {
        if let Some(t) = &test.truth {
            test.z = t.x.clone();
        }
    }
    SplitProblem { train, test }
}

/// Row distributions with increasingly non-uniform leverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverageRegime {
    /// Multivariate standard normal rows.
    Gaussian,
    /// Multivariate t, 3 degrees of freedom.
    T3,
    /// Multivariate t, 1 degree of freedom.
    T1,
}

impl LeverageRegime {
    fn degrees_of_freedom(self) -> Option<f64> {
        match self {
            LeverageRegime::Gaussian => None,
            LeverageRegime::T3 => Some(3.0),
            LeverageRegime::T1 => Some(1.0),
        }
    }
}

pub const REGIME_NOISE_SD: f64 = 0.1;

/// Uncorrupted problem with rows from `regime` (identity scale), standard
/// Gaussian `β` and `σ_ε = 0.1`.
pub fn gen_leverage_regime<T: Real>(n: usize, p: usize, regime: LeverageRegime, seed: u64) -> Result<RegressionProblem<T>> {
    if p == 0 || n <= p {
        return Err(Error::InvalidParams(format!("need n > p >= 1, got n = {n}, p = {p}")));
    }
    let mut x: DenseMatrix<T> = gaussian_matrix(n, p, 1.0, seed, X_STREAM);
    if let Some(df) = regime.degrees_of_freedom() {
        let chi = ChiSquared::new(df).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut r = rng::stream(seed, SCALE_STREAM);
        for i in 0..n {
            let s = T::lit((chi.sample(&mut r) / df).sqrt().recip());
            x.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
    }
    if !x.is_finite() {
        return Err(Error::InvalidParams("heavy-tailed draw overflowed".into()));
    }
    let beta = gaussian_vector(p, 1.0, seed, BETA_STREAM);
    let noise = gaussian_vector(n, REGIME_NOISE_SD, seed, NOISE_STREAM);
    let truth = Truth {
        w: DenseMatrix::zeros(n, p),
        x,
        beta,
        noise,
        corruption_mask: vec![false; n],
        sigma_x: 1.0,
        sigma_w: 0.0,
        sigma_eps: REGIME_NOISE_SD,
        pi: 0.0,
    };
    let (z, y) = truth.regenerate()?;
    Ok(RegressionProblem {
        z,
        y,
        truth: Some(truth),
    })
}

/// Leverage-regime training rows plus `n_test` held-out rows.
pub fn gen_leverage_regime_split<T: Real>(
    n: usize,
    n_test: usize,
    p: usize,
    regime: LeverageRegime,
    seed: u64,
) -> Result<SplitProblem<T>> {
    let all = gen_leverage_regime(n + n_test, p, regime, seed)?;
    Ok(split_simulated(all, n, false))
}

/// One-hot dictionary of origin-destination pairs, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdEncoder {
    pairs: Vec<(String, String)>,
    index: HashMap<(String, String), usize>,
}

impl OdEncoder {
    /// Adds the pair if unseen and returns its column.
    pub fn learn(&mut self, origin: &str, dest: &str) -> usize {
        let key = (origin.to_owned(), dest.to_owned());
        if let Some(&k) = self.index.get(&key) {
            return k;
        }
        let k = self.pairs.len();
        self.pairs.push(key.clone());
        self.index.insert(key, k);
        k
    }

    pub fn encode(&self, origin: &str, dest: &str) -> Option<usize> {
        self.index.get(&(origin.to_owned(), dest.to_owned())).copied()
    }

    pub fn decode(&self, column: usize) -> Option<(&str, &str)> {
        self.pairs.get(column).map(|(o, d)| (o.as_str(), d.as_str()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Loader settings for Data Expo 2009 style flight records.
#[derive(Debug, Clone, PartialEq)]
pub struct AirlineOptions {
    pub n_train: usize,
    pub n_test: usize,
    /// Keep only rows whose `UniqueCarrier` equals this code.
    pub carrier: Option<String>,
    /// Append the standardized distance column after the one-hot block.
    pub include_distance: bool,
}

impl AirlineOptions {
    pub fn new(n_train: usize, n_test: usize) -> Self {
        Self {
            n_train,
            n_test,
            carrier: None,
            include_distance: true,
        }
    }
}

/// Encoded airline problem and the encoding learned from its training rows.
#[derive(Debug, Clone)]
pub struct AirlineData<T> {
    pub split: SplitProblem<T>,
    pub encoder: OdEncoder,
    pub distance_mean: f64,
    pub distance_sd: f64,
}

pub const AIRLINE_REQUIRED_COLUMNS: [&str; 4] = ["Origin", "Dest", "Distance", "ArrDelay"];

struct Flight {
    origin: String,
    dest: String,
    distance: f64,
    delay: f64,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "NA"
}

/// Loads the first `n_train + n_test` usable flights in file order.
pub fn load_airline_csv<T: Real>(path: impl AsRef<Path>, n_train: usize, n_test: usize) -> Result<AirlineData<T>> {
    load_airline_csv_with(path, &AirlineOptions::new(n_train, n_test))
}

/// [`load_airline_csv`] with a carrier filter and distance toggle.
///
/// Rows with a missing `ArrDelay` are skipped. Features are a one-hot
/// origin-destination block learned from the training rows (unseen test
/// pairs encode as all zeros) followed by distance standardized with the
/// training mean and standard deviation.
pub fn load_airline_csv_with<T: Real>(path: impl AsRef<Path>, opts: &AirlineOptions) -> Result<AirlineData<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut required: Vec<&str> = AIRLINE_REQUIRED_COLUMNS.to_vec();
    if opts.carrier.is_some() {
        required.push("UniqueCarrier");
    }
    let missing: Vec<String> = required
        .iter()
        .filter(|c| column(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema {
            path: path.to_owned(),
            missing,
        });
    }
    let [origin_col, dest_col, dist_col, delay_col] = AIRLINE_REQUIRED_COLUMNS.map(|c| column(c).unwrap());
    let carrier_col = column("UniqueCarrier");

    let wanted = opts.n_train + opts.n_test;
    let mut flights = Vec::with_capacity(wanted);
    let mut record = csv::StringRecord::new();
    while flights.len() < wanted {
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(k).unwrap_or("");
        if let (Some(want), Some(c)) = (&opts.carrier, carrier_col) {
            if field(c).trim() != want {
                continue;
            }
        }
        if is_missing(field(delay_col)) {
            continue;
        }
        let parse = |k: usize, name: &str| -> Result<f64> {
            let raw = field(k).trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("{name}: cannot parse {raw:?} as a number"),
                })
        };
        flights.push(Flight {
            origin: field(origin_col).trim().to_owned(),
            dest: field(dest_col).trim().to_owned(),
            distance: parse(dist_col, "Distance")?,
            delay: parse(delay_col, "ArrDelay")?,
        });
    }
    if flights.len() < opts.n_train {
        return Err(Error::InvalidParams(format!(
            "{} usable rows, {} requested for training",
            flights.len(),
            opts.n_train
        )));
    }
    let split_at = opts.n_train;
    let (train_rows, test_rows) = flights.split_at(split_at);

    let mut encoder = OdEncoder::default();
    for f in train_rows {
        encoder.learn(&f.origin, &f.dest);
    }
    let n_tr = train_rows.len().max(1) as f64;
    let distance_mean = train_rows.iter().map(|f| f.distance).sum::<f64>() / n_tr;
    let var = train_rows.iter().map(|f| (f.distance - distance_mean).powi(2)).sum::<f64>() / (n_tr - 1.0).max(1.0);
    let distance_sd = if var > 0.0 { var.sqrt() } else { 1.0 };

    let p = encoder.len() + opts.include_distance as usize;
    let encode = |rows: &[Flight]| -> Result<RegressionProblem<T>> {
        let mut z = DenseMatrix::zeros(rows.len(), p);
        for (i, f) in rows.iter().enumerate() {
            if let Some(k) = encoder.encode(&f.origin, &f.dest) {
                z[(i, k)] = T::one();
            }
            if opts.include_distance {
                z[(i, p - 1)] = T::lit((f.distance - distance_mean) / distance_sd);
            }
        }
        let y = rows.iter().map(|f| T::lit(f.delay)).collect();
        RegressionProblem::new(z, y)
    };
    Ok(AirlineData {
        split: SplitProblem {
            train: encode(train_rows)?,
            test: encode(test_rows)?,
        },
        encoder,
        distance_mean,
        distance_sd,
    })
}
