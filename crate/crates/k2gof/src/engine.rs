//! Parallel replication over shared read-only plans.
//!
//! Replicate `r` always draws from stream `(seed, r)` and results are
//! collected in index order, so every output is independent of the number
//! of worker threads.

use k2gof_core::fit::mle_fit;
use k2gof_core::model::{instantiate, sample, ModelInstance, ModelSpec, ParamVector, Point};
use k2gof_core::process::{build_projection_plan, projected_process};
use k2gof_core::quadrature::Grid;
use k2gof_core::rotation::{build_rotation_plan, rotated_process, RotationPlan};
use k2gof_core::sim::{
    check_replicates, critical_value, projected_replicate, rate_standard_error, refit_replicate, rotated_replicate,
    NullDistribution, NullMethod, StatKind,
};
use k2gof_core::{RngStream, StatTriple};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest tolerated fraction of failed replicates in a null simulation.
pub const NULL_FAILURE_LIMIT: f64 = 0.01;
/// Largest tolerated fraction of failed replicates in a power study.
pub const POWER_FAILURE_LIMIT: f64 = 0.02;

/// Stream id of the calibration sample of a power study.
pub const CALIBRATION_STREAM: u64 = u64::MAX;

/// Derives an independent seed for a named sub-simulation.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Engine {
    pool: rayon::ThreadPool,
}

impl Engine {
    /// `threads = None` uses every available core.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t.max(1));
        }
        let pool = builder.build().map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Maps `f` over replicate indices `0..r`, results in index order.
    pub fn run<T, F>(&self, r: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut Vec<Point>) -> T + Sync + Send,
    {
        self.pool.install(|| (0..r as u64).into_par_iter().map_init(Vec::new, |buf, i| f(i, buf)).collect())
    }
}

/// Null distributions of the three statistics from one simulation.
#[derive(Debug, Clone, Serialize)]
pub struct NullSet {
    pub d: NullDistribution,
    pub omega2: NullDistribution,
    pub a2: NullDistribution,
    pub excluded: usize,
}

impl NullSet {
    pub fn get(&self, kind: StatKind) -> &NullDistribution {
        match kind {
            StatKind::D => &self.d,
            StatKind::Omega2 => &self.omega2,
            StatKind::A2 => &self.a2,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NullDistribution> {
        [&self.d, &self.omega2, &self.a2].into_iter()
    }
}

/// Provenance shared by the three distributions of a [`NullSet`].
#[derive(Debug, Clone)]
pub struct NullMeta {
    pub n: usize,
    pub model: String,
    pub params: ParamVector,
    pub seed: u64,
    pub method: NullMethod,
}

fn assemble(
    what: &str,
    results: Vec<core::result::Result<StatTriple, k2gof_core::Error>>,
    meta: NullMeta,
) -> Result<NullSet> {
    let total = results.len();
    let mut triples = Vec::with_capacity(total);
    let mut first_error = None;
    for r in results {
        match r {
            Ok(t) => triples.push(t),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failed = total - triples.len();
    if failed as f64 > NULL_FAILURE_LIMIT * total as f64 {
        if let (Some(e), true) = (first_error, failed == total) {
            return Err(e.into());
        }
        return Err(Error::TooManyFailures {
            what: what.to_string(),
            failed,
            total,
            limit_pct: NULL_FAILURE_LIMIT * 100.0,
        });
    }
    let dist = |kind: StatKind| {
        NullDistribution::new(
            kind,
            triples.iter().map(|t| t.get(kind)).collect(),
            meta.n,
            meta.model.clone(),
            meta.params.clone(),
            meta.seed,
            meta.method,
        )
    };
    Ok(NullSet { d: dist(StatKind::D), omega2: dist(StatKind::Omega2), a2: dist(StatKind::A2), excluded: failed })
}

/// Parametric bootstrap of the projected process: one plan at `params`,
/// `r` samples of size `n` drawn from the same instance.
pub fn simulate_null_projected(
    engine: &Engine,
    spec: &ModelSpec,
    params: &[f64],
    grid: &Grid,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<NullSet> {
    check_replicates(r)?;
    let inst = instantiate(spec, params, grid)?;
    let plan = build_projection_plan(&inst, grid)?;
    let results = engine.run(r, |i, buf| projected_replicate(&plan, n, seed, i, buf));
    let meta = NullMeta {
        n,
        model: spec.name().to_string(),
        params: inst.params().clone(),
        seed,
        method: NullMethod::BootstrapProjected,
    };
    assemble("projected bootstrap", results, meta)
}

#[allow(clippy::too_many_arguments)]
fn simulate_refit(
    engine: &Engine,
    spec: &ModelSpec,
    params: &[f64],
    grid: &Grid,
    n: usize,
    r: usize,
    seed: u64,
    method: NullMethod,
) -> Result<NullSet> {
    check_replicates(r)?;
    let source = instantiate(spec, params, grid)?;
    let results = engine.run(r, |i, buf| refit_replicate(&source, spec, grid, n, seed, i, buf));
    let meta = NullMeta { n, model: spec.name().to_string(), params: source.params().clone(), seed, method };
    let what = match method {
        NullMethod::MonteCarlo => "monte-carlo",
        _ => "refit bootstrap",
    };
    assemble(what, results, meta)
}

/// Parametric bootstrap of the plug-in process, refitting every replicate.
pub fn simulate_null_refit(
    engine: &Engine,
    spec: &ModelSpec,
    params: &[f64],
    grid: &Grid,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<NullSet> {
    simulate_refit(engine, spec, params, grid, n, r, seed, NullMethod::BootstrapRefit)
}

/// Same as the refit bootstrap, but sampling from the true parameters.
pub fn simulate_null_mc(
    engine: &Engine,
    spec: &ModelSpec,
    params: &[f64],
    grid: &Grid,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<NullSet> {
    simulate_refit(engine, spec, params, grid, n, r, seed, NullMethod::MonteCarlo)
}

/// Null distributions of the rotated statistics with data drawn from the
/// plan's candidate instance.
pub fn simulate_null_rotated(engine: &Engine, plan: &RotationPlan, n: usize, r: usize, seed: u64) -> Result<NullSet> {
    check_replicates(r)?;
    let results = engine.run(r, |i, buf| rotated_replicate(plan, n, seed, i, buf));
    let f = plan.f_instance();
    let meta = NullMeta { n, model: f.name().to_string(), params: f.params().clone(), seed, method: NullMethod::Rotated };
    assemble("rotated", results, meta)
}

/// Statistics of the Q test and of the rotated test of every candidate on
/// one data set.
#[derive(Debug, Clone, Serialize)]
pub struct DataStatistics {
    pub reference: StatTriple,
    pub reference_fit: k2gof_core::FitResult,
    pub candidates: Vec<(String, StatTriple, k2gof_core::FitResult)>,
}

/// Fits the reference and each candidate on `data` and evaluates the
/// projected statistics of the reference and the rotated statistics of the
/// candidates. With `strict`, fits that do not converge are errors;
/// otherwise their best-so-far estimates are used and flagged in the
/// returned fit results.
pub fn data_statistics(
    data: &[Point],
    reference: &ModelSpec,
    candidates: &[ModelSpec],
    grid: &Grid,
    strict: bool,
) -> core::result::Result<(DataStatistics, ModelInstance, Vec<RotationPlan>), k2gof_core::Error> {
    let fit = |spec: &ModelSpec| {
        let f = mle_fit(spec, data, grid)?;
        if strict {
            f.into_result()
        } else {
            Ok(f)
        }
    };
    let q_fit = fit(reference)?;
    let q_inst = instantiate(reference, q_fit.values(), grid)?;
    let plan = build_projection_plan(&q_inst, grid)?;
    let v = projected_process(data, &plan)?;
    let reference_stats = StatTriple::compute(&v, q_inst.density_field(), q_inst.cdf_field())?;
    let mut rows = Vec::with_capacity(candidates.len());
    let mut plans = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let f_fit = fit(spec)?;
        let f_inst = instantiate(spec, f_fit.values(), grid)?;
        let rplan = build_rotation_plan(&q_inst, &f_inst, grid, &plan)?;
        let v = rotated_process(data, &rplan)?;
        let stats = StatTriple::compute(&v, q_inst.density_field(), q_inst.cdf_field())?;
        rows.push((spec.name().to_string(), stats, f_fit));
        plans.push(rplan);
    }
    Ok((DataStatistics { reference: reference_stats, reference_fit: q_fit, candidates: rows }, q_inst, plans))
}

#[derive(Debug, Clone)]
pub struct PowerConfig {
    pub n: usize,
    pub r_power: usize,
    pub r_null: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    /// Simulate a fresh reference null at every replicate's own estimate
    /// instead of sharing one calibrated at the calibration sample.
    pub recalibrate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub null_model: String,
    pub statistic: String,
    pub alpha: f64,
    pub power: f64,
    pub se: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
    pub calibration_params: ParamVector,
    pub replicates: usize,
    pub failed: usize,
    /// Replicates scored with at least one non-converged (boundary) fit.
    pub boundary_fits: usize,
}

impl PowerReport {
    pub fn find(&self, null_model: &str, statistic: &str, alpha: f64) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.null_model == null_model && r.statistic == statistic && (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Column label of a statistic in power reports: `D_hat` for the reference
/// test, `D_tilde` for a rotated test.
pub fn statistic_label(kind: StatKind, rotated: bool) -> String {
    format!("{}_{}", kind.as_str(), if rotated { "tilde" } else { "hat" })
}

/// Rejection rates of the reference test and the rotated candidate tests
/// for data drawn from `truth`.
///
/// Each replicate samples `n` points from `truth`, fits every model and
/// compares the statistics to the `(1 - α)` quantiles of the reference
/// null: by default one projected bootstrap null at the estimate of a
/// separate calibration sample, or with `recalibrate` a fresh null at
/// each replicate's own estimate.
pub fn power_study(
    engine: &Engine,
    truth: &ModelInstance,
    reference: &ModelSpec,
    candidates: &[ModelSpec],
    grid: &Grid,
    cfg: &PowerConfig,
) -> Result<PowerReport> {
    check_replicates(cfg.r_power)?;
    check_replicates(cfg.r_null)?;
    let mut rng = RngStream::new(cfg.seed, CALIBRATION_STREAM);
    let calib = sample(truth, cfg.n, &mut rng)?;
    let calib_fit = mle_fit(reference, &calib, grid)?.into_result()?;
    let null_seed = derive_seed(cfg.seed, 1);
    let shared = simulate_null_projected(engine, reference, calib_fit.values(), grid, cfg.n, cfg.r_null, null_seed)?;
    let shared_cv = critical_table(&shared, &cfg.alphas);

    let outcomes = engine.run(cfg.r_power, |i, buf| -> Option<(bool, Vec<Vec<bool>>)> {
        let mut rng = RngStream::new(cfg.seed, i);
        k2gof_core::model::sample_into(truth, cfg.n, &mut rng, buf).ok()?;
        let (stats, q_inst, _) = data_statistics(buf, reference, candidates, grid, false).ok()?;
        let boundary =
            !stats.reference_fit.converged || stats.candidates.iter().any(|(_, _, f)| !f.converged);
        let local_cv;
        let cv = if cfg.recalibrate {
            let seq = Engine::new(Some(1)).ok()?;
            let null = simulate_null_projected(
                &seq,
                reference,
                q_inst.params().values.as_slice(),
                grid,
                cfg.n,
                cfg.r_null,
                derive_seed(cfg.seed, 2 + i),
            )
            .ok()?;
            local_cv = critical_table(&null, &cfg.alphas);
            &local_cv
        } else {
            &shared_cv
        };
        let mut flags = Vec::with_capacity(1 + candidates.len());
        flags.push(reject_flags(&stats.reference, cv));
        for (_, t, _) in &stats.candidates {
            flags.push(reject_flags(t, cv));
        }
        Some((boundary, flags))
    });

    let total = outcomes.len();
    let ok: Vec<&Vec<Vec<bool>>> = outcomes.iter().flatten().map(|(_, f)| f).collect();
    let boundary_fits = outcomes.iter().flatten().filter(|(b, _)| *b).count();
    let failed = total - ok.len();
    if failed as f64 > POWER_FAILURE_LIMIT * total as f64 {
        return Err(Error::TooManyFailures {
            what: "power study".to_string(),
            failed,
            total,
            limit_pct: POWER_FAILURE_LIMIT * 100.0,
        });
    }
    let used = ok.len();
    let names: Vec<&str> = std::iter::once(reference.name()).chain(candidates.iter().map(|c| c.name())).collect();
    let mut rows = Vec::new();
    for (m, name) in names.iter().enumerate() {
        for (k, kind) in StatKind::ALL.iter().enumerate() {
            for (a, &alpha) in cfg.alphas.iter().enumerate() {
                let hits = ok.iter().filter(|f| f[m][k * cfg.alphas.len() + a]).count();
                let power = hits as f64 / used as f64;
                rows.push(PowerRow {
                    null_model: name.to_string(),
                    statistic: statistic_label(*kind, m > 0),
                    alpha,
                    power,
                    se: rate_standard_error(power, used),
                    replicates: used,
                });
            }
        }
    }
    Ok(PowerReport { rows, calibration_params: reference.param_vector(calib_fit.values().to_vec()), replicates: used, failed, boundary_fits })
}

/// Critical values indexed `[kind][alpha]`.
fn critical_table(null: &NullSet, alphas: &[f64]) -> Vec<Vec<f64>> {
    StatKind::ALL.iter().map(|&k| alphas.iter().map(|&a| critical_value(null.get(k), a)).collect()).collect()
}

fn reject_flags(t: &StatTriple, cv: &[Vec<f64>]) -> Vec<bool> {
    StatKind::ALL.iter().zip(cv).flat_map(|(&k, row)| row.iter().map(move |&c| t.get(k) > c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use k2gof_core::model::builtin;

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn projected_null_is_thread_independent() {
        let q = builtin::by_name("Q").unwrap();
        let grid = Grid::new(q.support(), 50, 40).unwrap();
        let one = simulate_null_projected(&Engine::new(Some(1)).unwrap(), &q, &[-1.0, 6.0, 22.0], &grid, 100, 100, 9).unwrap();
        let two = simulate_null_projected(&Engine::new(Some(3)).unwrap(), &q, &[-1.0, 6.0, 22.0], &grid, 100, 100, 9).unwrap();
        assert_eq!(one.d.values, two.d.values);
        assert_eq!(one.a2.values, two.a2.values);
        assert!(one.d.values[0] > 0.0);
    }

    #[test]
    fn too_few_replicates() {
        let q = builtin::by_name("Q").unwrap();
        let grid = Grid::new(q.support(), 50, 40).unwrap();
        let err = simulate_null_projected(&Engine::new(Some(1)).unwrap(), &q, &[-1.0, 6.0, 22.0], &grid, 100, 99, 9);
        assert!(matches!(err, Err(Error::Core(k2gof_core::Error::TooFewReplicates { .. }))));
    }
}
