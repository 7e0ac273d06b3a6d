//! The regression estimators behind one interface: full least squares,
//! sketch-and-solve (SRHT-LS), leverage sampling (LEV-LS), the two-step
//! ULURU correction, and the influence / residual weighted subsampling
//! family (IWS-LS, aIWS-LS, aRWS-LS).

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datagen::RegressionProblem;
use crate::diagnostics::{
    approx_leverage_with_sketch, default_r2, exact_diagnostics, DiagnosticsMode, DiagnosticsReport,
    RightProjection,
};
use crate::error::{Error, Result};
use crate::matrix::{apply_gram_inverse, solve_ls, DenseMatrix, DenseVector};
use crate::rng;
use crate::sampling::{draw_rows, inverse_weight_probabilities, proportional_probabilities, SamplingScheme};
use crate::scalar::Real;
use crate::srht::{build_sketch, SketchOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "SRHT_LS")]
    SrhtLs,
    #[serde(rename = "LEV_LS")]
    LevLs,
    #[serde(rename = "ULURU")]
    Uluru,
    #[serde(rename = "IWS_LS")]
    IwsLs,
    #[serde(rename = "AIWS_LS")]
    AiwsLs,
    #[serde(rename = "ARWS_LS")]
    ArwsLs,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ols,
        Method::SrhtLs,
        Method::LevLs,
        Method::Uluru,
        Method::IwsLs,
        Method::AiwsLs,
        Method::ArwsLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "OLS",
            Method::SrhtLs => "SRHT_LS",
            Method::LevLs => "LEV_LS",
            Method::Uluru => "ULURU",
            Method::IwsLs => "IWS_LS",
            Method::AiwsLs => "AIWS_LS",
            Method::ArwsLs => "ARWS_LS",
        }
    }

    /// Whether the fit uses only `n_subs` rows (or a sketch of that size).
    pub fn uses_subsample(self) -> bool {
        self != Method::Ols
    }

    /// Row sampling used when the config does not pick one: leverage
    /// sampling draws with replacement, the inverse-weight methods without.
    pub fn default_sampling(self) -> SamplingScheme {
        match self {
            Method::LevLs => SamplingScheme::WithReplacement,
            _ => SamplingScheme::WithoutReplacement,
        }
    }

    /// Whether the method draws rows from the data (rather than sketch rows).
    fn draws_rows(self) -> bool {
        matches!(self, Method::LevLs | Method::IwsLs | Method::AiwsLs | Method::ArwsLs)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        let key = match key.as_str() {
            "SRHT" => "SRHT_LS",
            "LEV" => "LEV_LS",
            "IWS" => "IWS_LS",
            "AIWS" => "AIWS_LS",
            "ARWS" => "ARWS_LS",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

pub const DEFAULT_WEIGHT_FLOOR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Rows drawn (or sketch rows) for every method except OLS.
    pub n_subs: usize,
    /// Rows of the leverage sketch in aIWS-LS. `None` reuses the `n_subs`-row
    /// sketch of the first SRHT-LS step.
    pub r1: Option<usize>,
    /// Width of the right projection in aIWS-LS; `None` means `⌈p/2⌉`.
    pub r2: Option<usize>,
    pub seed: u64,
    /// Scores are floored at this fraction of their maximum before inversion.
    pub weight_floor_ratio: f64,
    /// `None` uses [`Method::default_sampling`].
    pub sampling: Option<SamplingScheme>,
    /// Scale sampled rows by `1/√(n_subs · p_i)` before solving.
    pub reweight: bool,
    /// aIWS-LS only: use exact OLS residuals and leverages instead of the
    /// sketched ones. Reduces aIWS-LS to IWS-LS for a fixed seed.
    pub exact_diagnostics: bool,
}

impl EstimatorConfig {
    pub fn new(method: Method, n_subs: usize, seed: u64) -> Self {
        Self {
            method,
            n_subs,
            r1: None,
            r2: None,
            seed,
            weight_floor_ratio: DEFAULT_WEIGHT_FLOOR_RATIO,
            sampling: None,
            reweight: false,
            exact_diagnostics: false,
        }
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        if !self.method.uses_subsample() {
            return Ok(());
        }
        if self.n_subs < p {
            return Err(Error::InvalidCounts(format!(
                "n_subs = {} must be at least p = {p}",
                self.n_subs
            )));
        }
        if self.method.draws_rows() && self.n_subs > n {
            return Err(Error::InvalidCounts(format!(
                "n_subs = {} exceeds n = {n}",
                self.n_subs
            )));
        }
        if let Some(r1) = self.r1 {
            if r1 < p {
                return Err(Error::InvalidCounts(format!("r1 = {r1} must be at least p = {p}")));
            }
        }
        if let Some(r2) = self.r2 {
            if r2 == 0 || r2 > p {
                return Err(Error::InvalidCounts(format!("r2 = {r2} must lie in [1, {p}]")));
            }
        }
        if !(self.weight_floor_ratio >= 0.0 && self.weight_floor_ratio < 1.0) {
            return Err(Error::InvalidParams(format!(
                "weight_floor_ratio = {} outside [0, 1)",
                self.weight_floor_ratio
            )));
        }
        Ok(())
    }

    pub fn sampling_scheme(&self) -> SamplingScheme {
        self.sampling.unwrap_or_else(|| self.method.default_sampling())
    }

    fn stream_seed(&self, label: &str) -> u64 {
        rng::derive_seed(self.seed, &[rng::tag(label)])
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub method: Method,
    pub coefficients: DenseVector<T>,
    pub sampled_row_indices: Option<Vec<usize>>,
    /// Row sampling distribution; sums to one.
    pub sampling_probabilities: Option<Vec<f64>>,
    pub wall_time: Duration,
    pub diagnostics: Option<DiagnosticsReport<T>>,
    /// Every score was zero and rows were drawn uniformly instead.
    pub uniform_fallback: bool,
}

impl<T: Real> FitResult<T> {
    fn coefficients_only(method: Method, coefficients: DenseVector<T>) -> Self {
        Self {
            method,
            coefficients,
            sampled_row_indices: None,
            sampling_probabilities: None,
            wall_time: Duration::ZERO,
            diagnostics: None,
            uniform_fallback: false,
        }
    }
}

/// Fits `cfg.method` on the problem's observed design.
pub fn fit<T: Real>(problem: &RegressionProblem<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    let (z, y) = (&problem.z, &problem.y);
    match cfg.method {
        Method::Ols => fit_ols(z, y),
        Method::SrhtLs => fit_srht_ls(z, y, cfg),
        Method::LevLs => fit_lev_ls(z, y, cfg),
        Method::Uluru => fit_uluru(z, y, cfg),
        Method::IwsLs => fit_iws_ls(z, y, cfg),
        Method::AiwsLs => fit_aiws_ls(z, y, cfg),
        Method::ArwsLs => fit_arws_ls(z, y, cfg),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<FitResult<T>>) -> Result<FitResult<T>> {
    let start = Instant::now();
    let mut out = f()?;
    out.wall_time = start.elapsed();
    Ok(out)
}

fn check_shapes<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>) -> Result<()> {
    if z.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, response {}",
            z.rows(),
            y.len()
        )));
    }
    Ok(())
}

pub fn fit_ols<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>) -> Result<FitResult<T>> {
    check_shapes(z, y)?;
    timed(|| Ok(FitResult::coefficients_only(Method::Ols, solve_ls(z, y)?.coefficients)))
}

struct SketchedFit<T> {
    op: SketchOperator,
    sketched_design: DenseMatrix<T>,
    solution: crate::matrix::LeastSquaresSolution<T>,
}

fn sketch_and_solve<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<SketchedFit<T>> {
    check_shapes(z, y)?;
    cfg.validate(z.rows(), z.cols())?;
    let op = build_sketch(z.rows(), cfg.n_subs, cfg.stream_seed("sketch"))?;
    let sketched_design = op.apply(z)?;
    let sketched_response = op.apply_vector(y)?;
    let solution = solve_ls(&sketched_design, &sketched_response)?;
    Ok(SketchedFit {
        op,
        sketched_design,
        solution,
    })
}

/// `argmin ‖Π y − Π Z β‖` for one SRHT `Π` with `n_subs` rows.
pub fn fit_srht_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        let s = sketch_and_solve(z, y, cfg)?;
        Ok(FitResult::coefficients_only(Method::SrhtLs, s.solution.coefficients))
    })
}

/// Two-step sketched estimator: the SRHT-LS fit `β̂₁`, plus the correction
/// `((ΠZ)ᵀΠZ)⁻¹ Zᵀ (y − Z β̂₁)` that regresses the full residual using the
/// sketched Gram matrix (the step-one sketch is reused).
pub fn fit_uluru<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        let s = sketch_and_solve(z, y, cfg)?;
        let beta1 = &s.solution.coefficients;
        let residual = y.sub(&z.matvec(beta1)?);
        let correction = apply_gram_inverse(&s.solution, &z.tr_matvec(&residual)?)?;
        Ok(FitResult::coefficients_only(Method::Uluru, beta1.add(&correction)))
    })
}

/// Draws rows from `probabilities` and solves least squares on them.
///
/// Shared final step of every row-sampling estimator; with a constant score
/// vector it is plain uniform subsampling.
pub fn subsample_fit<T: Real>(
    z: &DenseMatrix<T>,
    y: &DenseVector<T>,
    probabilities: Vec<f64>,
    cfg: &EstimatorConfig,
) -> Result<FitResult<T>> {
    check_shapes(z, y)?;
    if probabilities.len() != z.rows() {
        return Err(Error::ShapeMismatch("one probability per row required".into()));
    }
    let mut rows_rng = rng::stream(cfg.stream_seed("rows"), 0);
    let indices = draw_rows(&probabilities, cfg.n_subs, cfg.sampling_scheme(), &mut rows_rng)?;
    let mut zs = z.select_rows(&indices);
    let mut ys = y.select(&indices);
    if cfg.reweight {
        for (r, &i) in indices.iter().enumerate() {
            let w = T::lit((cfg.n_subs as f64 * probabilities[i]).sqrt().recip());
            zs.row_mut(r).iter_mut().for_each(|v| *v *= w);
            ys[r] *= w;
        }
    }
    let coefficients = solve_ls(&zs, &ys)?.coefficients;
    Ok(FitResult {
        method: cfg.method,
        coefficients,
        sampled_row_indices: Some(indices),
        sampling_probabilities: Some(probabilities),
        wall_time: Duration::ZERO,
        diagnostics: None,
        uniform_fallback: false,
    })
}

fn to_f64<T: Real>(v: &DenseVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Samples rows with probability `l_i / p` (exact leverages), then solves.
pub fn fit_lev_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        check_shapes(z, y)?;
        cfg.validate(z.rows(), z.cols())?;
        let sol = solve_ls(z, y)?;
        let report = exact_diagnostics(z, &sol)?;
        let probs = proportional_probabilities(&to_f64(&report.leverages))?;
        let mut out = subsample_fit(z, y, probs, cfg)?;
        out.diagnostics = Some(report);
        Ok(out)
    })
}

fn inverse_weighted_fit<T: Real>(
    z: &DenseMatrix<T>,
    y: &DenseVector<T>,
    scores: &[f64],
    cfg: &EstimatorConfig,
) -> Result<FitResult<T>> {
    let (probs, fallback) = inverse_weight_probabilities(scores, cfg.weight_floor_ratio)?;
    if fallback {
        log::warn!("{}: every score is zero; sampling uniformly", cfg.method);
    }
    let mut out = subsample_fit(z, y, probs, cfg)?;
    out.uniform_fallback = fallback;
    Ok(out)
}

/// Influence weighted subsampling: exact residuals and leverages from a full
/// fit, rows drawn with probability `∝ 1/d_i`, least squares on the draw.
pub fn fit_iws_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        check_shapes(z, y)?;
        cfg.validate(z.rows(), z.cols())?;
        let sol = solve_ls(z, y)?;
        let report = exact_diagnostics(z, &sol)?;
        let mut out = inverse_weighted_fit(z, y, &to_f64(&report.influences), cfg)?;
        out.diagnostics = Some(report);
        Ok(out)
    })
}

/// Approximate influence weighted subsampling: residuals from the SRHT-LS
/// fit, leverages from the SVD of a sketch of `Z` and a sign projection,
/// rows drawn with probability `∝ 1/d̃_i`.
pub fn fit_aiws_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        let report = if cfg.exact_diagnostics {
            check_shapes(z, y)?;
            cfg.validate(z.rows(), z.cols())?;
            exact_diagnostics(z, &solve_ls(z, y)?)?
        } else {
            let s = sketch_and_solve(z, y, cfg)?;
            let residuals = y.sub(&z.matvec(&s.solution.coefficients)?);
            let r2 = cfg.r2.unwrap_or_else(|| default_r2(z.cols()));
            let projection = RightProjection::Signs { r2 };
            let lev_seed = cfg.stream_seed("projection");
            let leverages = match cfg.r1 {
                None => approx_leverage_with_sketch(z, &s.sketched_design, projection, lev_seed)?,
                Some(r1) if r1 == s.op.subsample_count => {
                    approx_leverage_with_sketch(z, &s.sketched_design, projection, lev_seed)?
                }
                Some(r1) => {
                    let op = build_sketch(z.rows(), r1, cfg.stream_seed("leverage-sketch"))?;
                    approx_leverage_with_sketch(z, &op.apply(z)?, projection, lev_seed)?
                }
            };
            DiagnosticsReport::new(residuals, leverages, DiagnosticsMode::Approximate)?
        };
        let mut out = inverse_weighted_fit(z, y, &to_f64(&report.influences), cfg)?;
        out.diagnostics = Some(report);
        Ok(out)
    })
}

/// Residual weighted subsampling: rows drawn with probability `∝ 1/ẽ_i²`
/// where `ẽ` are the residuals of the SRHT-LS fit.
pub fn fit_arws_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>, cfg: &EstimatorConfig) -> Result<FitResult<T>> {
    timed(|| {
        let s = sketch_and_solve(z, y, cfg)?;
        let residuals = y.sub(&z.matvec(&s.solution.coefficients)?);
        let scores: Vec<f64> = residuals.iter().map(|e| e.as_f64() * e.as_f64()).collect();
        inverse_weighted_fit(z, y, &scores, cfg)
    })
}
