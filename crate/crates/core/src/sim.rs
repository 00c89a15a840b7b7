//! Replicate kernels and the statistics of simulated null distributions.
//!
//! Each replicate draws from its own [`RngStream`] keyed by
//! `(seed, replicate index)`, so a kernel's output depends only on its
//! index. The `k2gof` crate maps these kernels over threads.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fit::mle_fit;
use crate::model::{instantiate, sample_into, ModelInstance, ModelSpec, ParamVector, Point};
use crate::process::{plugin_field, projected_process, ProcessField, ProcessKind, ProjectionPlan};
use crate::quadrature::Grid;
use crate::rng::RngStream;
use crate::rotation::{rotated_process, RotationPlan};
use crate::stats::StatTriple;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StatKind {
    D,
    #[cfg_attr(feature = "serde", serde(rename = "omega2"))]
    Omega2,
    A2,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::D, StatKind::Omega2, StatKind::A2];

    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::D => "D",
            StatKind::Omega2 => "omega2",
            StatKind::A2 => "A2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NullMethod {
    BootstrapProjected,
    BootstrapRefit,
    MonteCarlo,
    Rotated,
}

/// Sorted replicate values of one statistic, with provenance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NullDistribution {
    pub stat_kind: StatKind,
    pub values: Vec<f64>,
    pub replicates: usize,
    pub n: usize,
    pub model: String,
    pub params_at_build: ParamVector,
    pub seed: u64,
    pub method: NullMethod,
}

impl NullDistribution {
    /// Sorts `values` ascending; NaN values are not allowed.
    pub fn new(
        stat_kind: StatKind,
        mut values: Vec<f64>,
        n: usize,
        model: String,
        params_at_build: ParamVector,
        seed: u64,
        method: NullMethod,
    ) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
        Self { stat_kind, replicates: values.len(), values, n, model, params_at_build, seed, method }
    }
}

/// Right-tail p-value with the add-one convention:
/// `(1 + #{values >= observed}) / (R + 1)`.
pub fn p_value(dist: &NullDistribution, observed: f64) -> f64 {
    let r = dist.values.len();
    let below = dist.values.partition_point(|&v| v < observed);
    (1 + r - below) as f64 / (r + 1) as f64
}

/// Empirical `(1 - α)` quantile, `values[ceil((1 - α)(R + 1)) - 1]`
/// clamped to the sample range.
pub fn critical_value(dist: &NullDistribution, alpha: f64) -> f64 {
    let r = dist.values.len();
    let pos = ((1.0 - alpha) * (r + 1) as f64).ceil() as isize - 1;
    let idx = pos.clamp(0, r as isize - 1) as usize;
    dist.values[idx]
}

pub fn check_replicates(r: usize) -> Result<()> {
    if r < MIN_REPLICATES {
        return Err(Error::TooFewReplicates { min: MIN_REPLICATES, got: r });
    }
    Ok(())
}

pub const MIN_REPLICATES: usize = 100;

/// Statistics of the projected process for a sample drawn from the plan's
/// own instance (parametric bootstrap without refitting).
pub fn projected_replicate(plan: &ProjectionPlan, n: usize, seed: u64, r: u64, buf: &mut Vec<Point>) -> Result<StatTriple> {
    let inst = plan.instance();
    let mut rng = RngStream::new(seed, r);
    sample_into(inst, n, &mut rng, buf)?;
    let v = projected_process(buf, plan)?;
    StatTriple::compute(&v, inst.density_field(), inst.cdf_field())
}

/// Rotated statistics for a sample drawn from the candidate instance of
/// the plan, weighted by the reference model.
pub fn rotated_replicate(plan: &RotationPlan, n: usize, seed: u64, r: u64, buf: &mut Vec<Point>) -> Result<StatTriple> {
    let mut rng = RngStream::new(seed, r);
    sample_into(plan.f_instance(), n, &mut rng, buf)?;
    let v = rotated_process(buf, plan)?;
    let q = plan.q_instance();
    StatTriple::compute(&v, q.density_field(), q.cdf_field())
}

/// Draw from `source`, refit `spec` on the sample and evaluate the plug-in
/// process. A fit that stops without converging (typically at the edge of
/// the feasible region) is scored at its best estimate.
pub fn refit_replicate(
    source: &ModelInstance,
    spec: &ModelSpec,
    grid: &Grid,
    n: usize,
    seed: u64,
    r: u64,
    buf: &mut Vec<Point>,
) -> Result<StatTriple> {
    let mut rng = RngStream::new(seed, r);
    sample_into(source, n, &mut rng, buf)?;
    let fit = mle_fit(spec, buf, grid)?;
    let inst = instantiate(spec, fit.values(), grid)?;
    let field = plugin_field(buf, &inst)?;
    let v = ProcessField { field, n, kind: ProcessKind::PluginQ };
    StatTriple::compute(&v, inst.density_field(), inst.cdf_field())
}

/// Monte-Carlo standard error of a rejection rate.
pub fn rate_standard_error(rate: f64, replicates: usize) -> f64 {
    (rate * (1.0 - rate) / replicates as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn dist(values: Vec<f64>) -> NullDistribution {
        NullDistribution::new(
            StatKind::D,
            values,
            100,
            "Q".to_string(),
            ParamVector { labels: vec![], values: vec![] },
            1,
            NullMethod::BootstrapProjected,
        )
    }

    #[test]
    fn p_value_extremes() {
        let d = dist((1..=99).map(f64::from).collect());
        assert!((p_value(&d, 0.0) - 1.0).abs() < 1e-12);
        assert!((p_value(&d, 1000.0) - 1.0 / 100.0).abs() < 1e-12);
        assert!((p_value(&d, 50.0) - 0.51).abs() < 1e-12);
    }

    #[test]
    fn critical_value_median_and_tail() {
        let d = dist((1..=99).rev().map(f64::from).collect());
        assert_eq!(critical_value(&d, 0.5), 50.0);
        assert_eq!(critical_value(&d, 0.001), 99.0);
        let mut last = f64::INFINITY;
        for a in [0.001, 0.01, 0.05, 0.1, 0.5, 0.9] {
            let cv = critical_value(&d, a);
            assert!(cv <= last);
            last = cv;
        }
    }

    #[test]
    fn p_value_of_critical_value() {
        let d = dist((0..999).map(|k| ((k * 7919) % 1000) as f64 / 10.0).collect());
        for a in [0.01, 0.05, 0.1, 0.3] {
            let cv = critical_value(&d, a);
            assert!(p_value(&d, cv) <= a + 2.0 / 1000.0);
        }
    }
}
