//! Parametric models truncated to a rectangular support.
//!
//! A [`ModelSpec`] wraps an unnormalized log-density together with parameter
//! metadata. [`instantiate`] fixes the parameters, normalizes the density on
//! a [`Grid`] and caches the density and cdf fields. Scores are gradients of
//! the *normalized* log-density, so they include the derivative of the
//! truncation constant.

pub mod builtin;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{Grid, GridField};
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

pub use builtin::register_builtin_models;

/// A point in the (two-dimensional) sample space.
pub type Point = [f64; 2];

/// Closed axis-aligned rectangle `[lower, upper]` in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupportRect {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SupportRect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidSupport(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSupport(format!("axis {k}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Boundary points count as inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| v >= lo && v <= hi)
    }
}

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamDomain {
    pub lower: f64,
    pub upper: f64,
}

impl ParamDomain {
    pub const REAL: ParamDomain = ParamDomain { lower: f64::NEG_INFINITY, upper: f64::INFINITY };
    pub const POSITIVE: ParamDomain = ParamDomain { lower: 0.0, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v > self.lower && v < self.upper
    }

    /// Map a value of the domain onto the real line.
    pub fn to_unconstrained(&self, v: f64) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (false, false) => v,
            (true, false) => (v - self.lower).ln(),
            (false, true) => (self.upper - v).ln(),
            (true, true) => {
                let s = (v - self.lower) / (self.upper - self.lower);
                (s / (1.0 - s)).ln()
            }
        }
    }

    pub fn from_unconstrained(&self, z: f64) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (false, false) => z,
            (true, false) => self.lower + z.exp(),
            (false, true) => self.upper - z.exp(),
            (true, true) => self.lower + (self.upper - self.lower) / (1.0 + (-z).exp()),
        }
    }
}

/// Parameter values with their labels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ScoreMode {
    Analytic,
    FiniteDifference,
}

/// The unnormalized log-density of a parametric family.
///
/// Only `log_unnormalized` is required. Families that know the gradient
/// with respect to their parameters, or a sampler for the untruncated base
/// law, override the corresponding methods.
pub trait LogDensity: Send + Sync {
    fn log_unnormalized(&self, params: &[f64], x: &[f64]) -> f64;

    /// Writes `d/dparams log_unnormalized` into `out`; returns `false` when
    /// no analytic gradient exists.
    fn grad_log_unnormalized(&self, _params: &[f64], _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn has_base_sampler(&self) -> bool {
        false
    }

    /// One draw from the untruncated base law.
    fn sample_base(&self, _params: &[f64], _rng: &mut RngStream) -> Option<Point> {
        None
    }

    /// Data-driven starting point for maximum likelihood.
    fn initial_guess(&self, _data: &[Point]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    support: SupportRect,
    labels: Vec<String>,
    domains: Vec<ParamDomain>,
    initial_guess: Vec<f64>,
    score_mode: ScoreMode,
    density: Arc<dyn LogDensity>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("labels", &self.labels)
            .field("domains", &self.domains)
            .field("initial_guess", &self.initial_guess)
            .field("score_mode", &self.score_mode)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        support: SupportRect,
        params: Vec<(String, ParamDomain)>,
        initial_guess: Vec<f64>,
        density: Arc<dyn LogDensity>,
    ) -> Result<Self> {
        let name = name.into();
        if params.is_empty() {
            return Err(Error::InvalidParams { model: name, reason: "need at least one parameter".to_string() });
        }
        let (labels, domains): (Vec<_>, Vec<_>) = params.into_iter().unzip();
        let mut spec = Self {
            name,
            support,
            labels,
            domains,
            initial_guess,
            score_mode: ScoreMode::FiniteDifference,
            density,
        };
        spec.check_params(&spec.initial_guess)?;
        let mut probe = vec![0.0; spec.p()];
        if spec.density.grad_log_unnormalized(&spec.initial_guess, spec.support.lower(), &mut probe) {
            spec.score_mode = ScoreMode::Analytic;
        }
        Ok(spec)
    }

    /// Force a score mode; finite differences are always available.
    pub fn with_score_mode(mut self, mode: ScoreMode) -> Self {
        self.score_mode = mode;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> &SupportRect {
        &self.support
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn domains(&self) -> &[ParamDomain] {
        &self.domains
    }

    pub fn initial_guess(&self) -> &[f64] {
        &self.initial_guess
    }

    pub fn score_mode(&self) -> ScoreMode {
        self.score_mode
    }

    pub fn density(&self) -> &dyn LogDensity {
        &*self.density
    }

    pub fn param_vector(&self, values: Vec<f64>) -> ParamVector {
        ParamVector { labels: self.labels.clone(), values }
    }

    pub fn check_params(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.p() {
            return Err(Error::InvalidParams {
                model: self.name.clone(),
                reason: format!("expected {} parameters, got {}", self.p(), values.len()),
            });
        }
        for ((v, d), label) in values.iter().zip(&self.domains).zip(&self.labels) {
            if !d.contains(*v) {
                return Err(Error::InvalidParams {
                    model: self.name.clone(),
                    reason: format!("{label} = {v} outside ({}, {})", d.lower, d.upper),
                });
            }
        }
        Ok(())
    }

    /// Starting point for maximum likelihood on `data`, falling back to the
    /// static initial guess.
    pub fn initial_guess_for(&self, data: &[Point]) -> Vec<f64> {
        self.density
            .initial_guess(data)
            .filter(|g| self.check_params(g).is_ok())
            .unwrap_or_else(|| self.initial_guess.clone())
    }

    #[inline]
    pub fn log_unnormalized(&self, params: &[f64], x: &[f64]) -> f64 {
        self.density.log_unnormalized(params, x)
    }

    /// Gradient of the unnormalized log-density with respect to the
    /// parameters, analytic or by central differences with step
    /// `1e-5 * max(1, |param|)`.
    pub fn grad_log_unnormalized(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        if self.score_mode == ScoreMode::Analytic && self.density.grad_log_unnormalized(params, x, out) {
            return;
        }
        let mut work: Vec<f64> = params.to_vec();
        for j in 0..params.len() {
            let h = 1e-5 * params[j].abs().max(1.0);
            work[j] = params[j] + h;
            let up = self.density.log_unnormalized(&work, x);
            work[j] = params[j] - h;
            let down = self.density.log_unnormalized(&work, x);
            work[j] = params[j];
            out[j] = (up - down) / (2.0 * h);
        }
    }

    /// Log of the grid-quadrature normalizing constant, or an error when a
    /// node evaluation is not finite or the constant is below `1e-300`.
    pub fn log_norm_const(&self, params: &[f64], grid: &Grid) -> Result<f64> {
        // streaming log-sum-exp
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for x in grid.nodes() {
            let v = self.log_unnormalized(params, &x);
            if !v.is_finite() {
                return Err(Error::NonFiniteDensity { model: self.name.clone() });
            }
            if v > max {
                sum = sum * (max - v).exp() + 1.0;
                max = v;
            } else {
                sum += (v - max).exp();
            }
        }
        let log_norm = max + (sum * grid.cell_weight()).ln();
        if log_norm < MIN_LOG_NORM || !log_norm.is_finite() {
            return Err(Error::ZeroMass { model: self.name.clone() });
        }
        Ok(log_norm)
    }
}

/// A model with fixed parameters, normalized on a grid.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    spec: ModelSpec,
    params: ParamVector,
    grid: Grid,
    log_norm: f64,
    density: GridField,
    cdf: GridField,
    mean_grad: Vec<f64>,
}

/// Normalizes `spec` at `params` on `grid`.
pub fn instantiate(spec: &ModelSpec, params: &[f64], grid: &Grid) -> Result<ModelInstance> {
    spec.check_params(params)?;
    if !support_matches(spec.support(), grid) {
        return Err(Error::InvalidGrid(format!("grid does not cover the support of {}", spec.name())));
    }
    let mut logs: Vec<f64> = Vec::with_capacity(grid.len());
    let mut max = f64::NEG_INFINITY;
    for x in grid.nodes() {
        let v = spec.log_unnormalized(params, &x);
        if !v.is_finite() {
            return Err(Error::NonFiniteDensity { model: spec.name().to_string() });
        }
        max = max.max(v);
        logs.push(v);
    }
    let w = grid.cell_weight();
    let sum: f64 = logs.iter().map(|v| (v - max).exp()).sum::<f64>() * w;
    let log_norm = max + sum.ln();
    if log_norm < MIN_LOG_NORM || !log_norm.is_finite() {
        return Err(Error::ZeroMass { model: spec.name().to_string() });
    }
    let mut dens: Vec<f64> = logs.iter().map(|v| (v - log_norm).exp()).collect();
    // renormalize so that the Darboux sum is 1 to rounding
    let total: f64 = dens.iter().sum::<f64>() * w;
    dens.iter_mut().for_each(|d| *d /= total);
    let log_norm = log_norm + total.ln();

    let mut cdf: Vec<f64> = dens.iter().map(|d| d * w).collect();
    grid.prefix_sum_in_place(&mut cdf);

    let p = spec.p();
    let mut mean_grad = vec![0.0; p];
    let mut g = vec![0.0; p];
    for (k, x) in grid.nodes().enumerate() {
        spec.grad_log_unnormalized(params, &x, &mut g);
        let m = dens[k] * w;
        for j in 0..p {
            mean_grad[j] += g[j] * m;
        }
    }

    Ok(ModelInstance {
        spec: spec.clone(),
        params: spec.param_vector(params.to_vec()),
        grid: *grid,
        log_norm,
        density: GridField::new(grid, dens)?,
        cdf: GridField::new(grid, cdf)?,
        mean_grad,
    })
}

const MIN_LOG_NORM: f64 = -690.775_527_898_213_7; // ln(1e-300)

fn support_matches(rect: &SupportRect, grid: &Grid) -> bool {
    rect.dim() == 2
        && rect.lower()[0] == grid.lower()[0]
        && rect.lower()[1] == grid.lower()[1]
        && rect.upper()[0] == grid.upper()[0]
        && rect.upper()[1] == grid.upper()[1]
}

impl ModelInstance {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        self.spec.name()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn p(&self) -> usize {
        self.spec.p()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Grid normalizing constant of the unnormalized density.
    pub fn norm_const(&self) -> f64 {
        self.log_norm.exp()
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_norm
    }

    /// Normalized density at the grid nodes.
    pub fn density_field(&self) -> &GridField {
        &self.density
    }

    /// Model cdf at the grid nodes (prefix sum of cell masses).
    pub fn cdf_field(&self) -> &GridField {
        &self.cdf
    }

    /// Grid expectation of the unnormalized-log-density gradient, i.e. the
    /// derivative of the log normalizing constant.
    pub fn mean_grad(&self) -> &[f64] {
        &self.mean_grad
    }

    pub fn log_density(&self, x: &Point) -> f64 {
        self.spec.log_unnormalized(&self.params.values, x) - self.log_norm
    }

    pub fn density(&self, x: &Point) -> f64 {
        self.log_density(x).exp()
    }

    /// Score at `x` without the support check.
    pub fn score_into(&self, x: &Point, out: &mut [f64]) {
        self.spec.grad_log_unnormalized(&self.params.values, x, out);
        for (o, m) in out.iter_mut().zip(&self.mean_grad) {
            *o -= m;
        }
    }

    /// Score fields `u_j` at every grid node, one `Vec` per parameter.
    pub fn score_fields(&self) -> Vec<GridField> {
        let p = self.p();
        let n = self.grid.len();
        let mut cols: Vec<Vec<f64>> = (0..p).map(|_| vec![0.0; n]).collect();
        let mut g = vec![0.0; p];
        for (k, x) in self.grid.nodes().enumerate() {
            self.score_into(&x, &mut g);
            for j in 0..p {
                cols[j][k] = g[j];
            }
        }
        cols.into_iter().map(|v| GridField::new(&self.grid, v).expect("grid sized")).collect()
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        if self.spec.support().contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfSupport { x1: x[0], x2: x[1] })
        }
    }

    pub fn check_data(&self, data: &[Point]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        data.iter().try_for_each(|x| self.check_point(x))
    }
}

/// Gradient of the normalized log-density with respect to the parameters.
pub fn score(inst: &ModelInstance, x: &Point) -> Result<Vec<f64>> {
    inst.check_point(x)?;
    let mut out = vec![0.0; inst.p()];
    inst.score_into(x, &mut out);
    Ok(out)
}

const STALL_WINDOW: u64 = 1_000_000;
const STALL_RATE: f64 = 1e-4;

/// `n` i.i.d. draws from the truncated density.
///
/// Models with a base-law sampler use rejection against the support; other
/// models draw a cell from the grid masses and a uniform point inside it.
pub fn sample(inst: &ModelInstance, n: usize, rng: &mut RngStream) -> Result<Vec<Point>> {
    let mut out = Vec::with_capacity(n);
    sample_into(inst, n, rng, &mut out)?;
    Ok(out)
}

pub fn sample_into(inst: &ModelInstance, n: usize, rng: &mut RngStream, out: &mut Vec<Point>) -> Result<()> {
    out.clear();
    let spec = &inst.spec;
    if spec.density().has_base_sampler() {
        let rect = spec.support();
        let (mut window, mut accepted_in_window) = (0u64, 0u64);
        while out.len() < n {
            let x = spec.density().sample_base(&inst.params.values, rng);
            window += 1;
            if let Some(x) = x.filter(|x| rect.contains(x)) {
                out.push(x);
                accepted_in_window += 1;
            }
            if window == STALL_WINDOW {
                let rate = accepted_in_window as f64 / window as f64;
                if rate < STALL_RATE {
                    return Err(Error::RejectionStall { model: spec.name().to_string(), rate });
                }
                window = 0;
                accepted_in_window = 0;
            }
        }
    } else {
        let grid = &inst.grid;
        let w = grid.cell_weight();
        let mut cum: Vec<f64> = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        for d in inst.density.values() {
            acc += d * w;
            cum.push(acc);
        }
        let [h1, h2] = grid.cell_sides();
        let lo = grid.lower();
        let (_, n2) = grid.shape();
        while out.len() < n {
            let u = rng.uniform() * acc;
            let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let (i, j) = (k / n2, k % n2);
            out.push([lo[0] + (i as f64 + rng.uniform()) * h1, lo[1] + (j as f64 + rng.uniform()) * h2]);
        }
    }
    Ok(())
}
