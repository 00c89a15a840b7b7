//! Maximum likelihood, Fisher information and normalized scores.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::model::{ModelInstance, ModelSpec, ParamVector, Point};
use crate::quadrature::{inner_product, Grid, GridField};
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

/// Outcome of [`mle_fit`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub model: String,
    pub params: ParamVector,
    #[cfg_attr(feature = "serde", serde(rename = "loglik"))]
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn values(&self) -> &[f64] {
        &self.params.values
    }

    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { model: self.model })
        }
    }
}

pub const MIN_FIT_OBSERVATIONS: usize = 10;
const RESTARTS: usize = 4;
const MAX_EVALS_PER_START: usize = 2000;
const SIMPLEX_TOL: f64 = 1e-6;
const JITTER_SEED: u64 = 0x6a09_e667_f3bc_c908;

/// Log-likelihood of `data` under the grid-normalized density at `params`.
pub fn log_likelihood(spec: &ModelSpec, params: &[f64], data: &[Point], grid: &Grid) -> Result<f64> {
    spec.check_params(params)?;
    let log_z = spec.log_norm_const(params, grid)?;
    let sum: f64 = data.iter().map(|x| spec.log_unnormalized(params, x)).sum();
    Ok(sum - data.len() as f64 * log_z)
}

/// Maximizes the truncated likelihood by Nelder-Mead over unconstrained
/// coordinates, from the data-driven initial guess plus four jittered
/// restarts; the best optimum is kept. A non-converged result is returned
/// with `converged = false` rather than as an error.
pub fn mle_fit(spec: &ModelSpec, data: &[Point], grid: &Grid) -> Result<FitResult> {
    if data.len() < MIN_FIT_OBSERVATIONS {
        return Err(Error::TooFewObservations { needed: MIN_FIT_OBSERVATIONS, got: data.len() });
    }
    if let Some(x) = data.iter().find(|x| !spec.support().contains(&x[..])) {
        return Err(Error::OutOfSupport { x1: x[0], x2: x[1] });
    }
    let domains = spec.domains();
    let to_params = |z: &[f64]| -> Vec<f64> { z.iter().zip(domains).map(|(z, d)| d.from_unconstrained(*z)).collect() };
    let objective = |z: &[f64]| -> f64 {
        let theta = to_params(z);
        match log_likelihood(spec, &theta, data, grid) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    let start: Vec<f64> = spec.initial_guess_for(data).iter().zip(domains).map(|(v, d)| d.to_unconstrained(*v)).collect();
    let mut jitter = RngStream::new(JITTER_SEED, 0);
    let mut best: Option<NelderMeadResult> = None;
    let mut iterations = 0;
    for restart in 0..=RESTARTS {
        let z0: Vec<f64> = if restart == 0 {
            start.clone()
        } else {
            start.iter().map(|z| z + 0.5 * z.abs().max(1.0) * jitter.normal()).collect()
        };
        let res = nelder_mead(&objective, &z0, MAX_EVALS_PER_START, SIMPLEX_TOL);
        iterations += res.iterations;
        if best.as_ref().is_none_or(|b| res.value < b.value || (res.value == b.value && res.converged && !b.converged)) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    let params = to_params(&best.point);
    let log_likelihood = -best.value;
    let converged =
        best.converged && log_likelihood.is_finite() && gradient_norm(spec, &params, data, grid) < 1e-4 * data.len() as f64;
    Ok(FitResult {
        model: spec.name().to_string(),
        params: spec.param_vector(params),
        log_likelihood,
        converged,
        iterations,
    })
}

/// Euclidean norm of the central-difference log-likelihood gradient in the
/// model's own parameter coordinates.
pub fn gradient_norm(spec: &ModelSpec, params: &[f64], data: &[Point], grid: &Grid) -> f64 {
    let mut work = params.to_vec();
    let mut sq = 0.0;
    for j in 0..params.len() {
        let h = 1e-5 * params[j].abs().max(1.0);
        work[j] = params[j] + h;
        let up = log_likelihood(spec, &work, data, grid);
        work[j] = params[j] - h;
        let down = log_likelihood(spec, &work, data, grid);
        work[j] = params[j];
        match (up, down) {
            (Ok(u), Ok(d)) if u.is_finite() && d.is_finite() => sq += ((u - d) / (2.0 * h)).powi(2),
            _ => return f64::INFINITY,
        }
    }
    sq.sqrt()
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Derivative-free simplex minimization. Converges when every vertex lies
/// within `tol` (infinity norm) of the best one.
pub fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], max_evals: usize, tol: f64) -> NelderMeadResult {
    let n = x0.len();
    let evals = core::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += 0.1 * x0[i].abs().max(1.0);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    loop {
        // order vertices by value
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        if diameter < tol && values[0].is_finite() {
            converged = true;
            break;
        }
        if evals.get() >= max_evals {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = &simplex[n];
        for i in 0..n {
            trial[i] = centroid[i] + (centroid[i] - worst[i]);
        }
        let fr = eval(&trial);
        if fr < values[0] {
            for i in 0..n {
                trial2[i] = centroid[i] + 2.0 * (centroid[i] - worst[i]);
            }
            let fe = eval(&trial2);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        // contraction, outside or inside
        let outside = fr < values[n];
        for i in 0..n {
            trial2[i] = if outside {
                centroid[i] + 0.5 * (trial[i] - centroid[i])
            } else {
                centroid[i] + 0.5 * (worst[i] - centroid[i])
            };
        }
        let fc = eval(&trial2);
        if (outside && fc <= fr) || (!outside && fc < values[n]) {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for k in 1..=n {
            for i in 0..n {
                simplex[k][i] = best[i] + 0.5 * (simplex[k][i] - best[i]);
            }
            values[k] = eval(&simplex[k]);
        }
    }
    NelderMeadResult { point: simplex.swap_remove(0), value: values[0], converged, iterations, evaluations: evals.get() }
}

/// Fisher information `Γ_jk = <u_j, u_k>` under the model, with its
/// eigenvalues.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherMatrix {
    pub matrix: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl FisherMatrix {
    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = (self.eigenvalues[0], *self.eigenvalues.last().unwrap());
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = (self.eigenvalues[0], *self.eigenvalues.last().unwrap());
        if hi.is_nan() || hi <= 0.0 || lo < 1e-10 * hi {
            return Err(Error::SingularInformation { min: lo, max: hi });
        }
        Ok(())
    }
}

fn ensure_grid(inst: &ModelInstance, grid: &Grid) -> Result<()> {
    if inst.grid() != grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn fisher_information(inst: &ModelInstance, grid: &Grid) -> Result<FisherMatrix> {
    ensure_grid(inst, grid)?;
    fisher_from_fields(&inst.score_fields(), inst.density_field())
}

fn fisher_from_fields(u: &[GridField], density: &GridField) -> Result<FisherMatrix> {
    let p = u.len();
    let mut m = Matrix::zeros(p);
    for j in 0..p {
        for k in 0..=j {
            let v = inner_product(&u[j], &u[k], density)?;
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    let eigenvalues = symmetric_eigen(&m).values;
    let f = FisherMatrix { matrix: m, eigenvalues };
    f.check()?;
    Ok(f)
}

/// Symmetric inverse square root `S` with `S Γ S = I`, via the
/// eigendecomposition with eigenvalues clamped at `1e-12`.
pub fn inverse_sqrt(fisher: &FisherMatrix) -> Result<Matrix> {
    fisher.check()?;
    let eig = symmetric_eigen(&fisher.matrix);
    Ok(eig.map(|l| 1.0 / l.max(1e-12).sqrt()))
}

/// Normalized scores `b = Γ^{-1/2} u`, on the grid and at arbitrary points.
#[derive(Debug, Clone)]
pub struct NormalizedScores {
    inst: ModelInstance,
    fields: Vec<GridField>,
    fisher: FisherMatrix,
    inv_sqrt: Matrix,
}

pub fn normalized_scores(inst: &ModelInstance, grid: &Grid) -> Result<NormalizedScores> {
    ensure_grid(inst, grid)?;
    let u = inst.score_fields();
    let fisher = fisher_from_fields(&u, inst.density_field())?;
    let inv_sqrt = inverse_sqrt(&fisher)?;
    let p = u.len();
    let fields = (0..p)
        .map(|j| {
            let mut values = vec![0.0; grid.len()];
            for (k, u_k) in u.iter().enumerate() {
                let s = inv_sqrt[(j, k)];
                for (v, x) in values.iter_mut().zip(u_k.values()) {
                    *v += s * x;
                }
            }
            GridField::new(grid, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedScores { inst: inst.clone(), fields, fisher, inv_sqrt })
}

impl NormalizedScores {
    pub fn p(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn field(&self, j: usize) -> &GridField {
        &self.fields[j]
    }

    pub fn fisher(&self) -> &FisherMatrix {
        &self.fisher
    }

    pub fn inv_sqrt(&self) -> &Matrix {
        &self.inv_sqrt
    }

    pub fn instance(&self) -> &ModelInstance {
        &self.inst
    }

    /// `b(x)` at an arbitrary point; `scratch` and `out` have length `p`.
    pub fn eval_into(&self, x: &Point, scratch: &mut [f64], out: &mut [f64]) {
        self.inst.score_into(x, scratch);
        self.inv_sqrt.matvec(scratch, out);
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let p = self.p();
        let mut scratch = vec![0.0; p];
        let mut out = vec![0.0; p];
        self.eval_into(x, &mut scratch, &mut out);
        out
    }

    /// `sum_i b(x_i)` over a data set.
    pub fn sum_over(&self, data: &[Point]) -> Vec<f64> {
        let p = self.p();
        let mut scratch = vec![0.0; p];
        let mut total_u = vec![0.0; p];
        for x in data {
            self.inst.score_into(x, &mut scratch);
            for (t, s) in total_u.iter_mut().zip(&scratch) {
                *t += s;
            }
        }
        let mut out = vec![0.0; p];
        self.inv_sqrt.matvec(&total_u, &mut out);
        out
    }
}
