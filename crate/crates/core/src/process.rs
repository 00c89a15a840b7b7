//! The projected empirical process and its plug-in counterpart.
//!
//! With `ψ_x(t) = 1{t <= x} - Q(x)` and normalized scores `b_j`, the
//! projected process at node `x` is
//! `n^{-1/2} Σ_i [ψ_x(t_i) - Σ_j b_j(t_i) <b_j, ψ_x>_Q]`.
//! The coefficients `<b_j, ψ_x>_Q` equal the partial integrals of `b_j q`
//! up to `x` because `b_j` has mean zero, so a plan stores them as prefix
//! sums and a replicate costs one histogram plus `p` score sums.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fit::{mle_fit, normalized_scores, FitResult, NormalizedScores};
use crate::model::{instantiate, ModelInstance, ModelSpec, Point};
use crate::quadrature::{partial_integral, Grid, GridField};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ProcessKind {
    ProjectedQ,
    PluginQ,
    RotatedF,
}

/// Process values at the grid nodes for a sample of size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessField {
    pub field: GridField,
    pub n: usize,
    pub kind: ProcessKind,
}

/// Everything a projected-process replicate needs, computed once at the
/// plug-in estimate.
#[derive(Debug, Clone)]
pub struct ProjectionPlan {
    scores: NormalizedScores,
    proj_coeff: Vec<GridField>,
}

pub fn build_projection_plan(inst: &ModelInstance, grid: &Grid) -> Result<ProjectionPlan> {
    let scores = normalized_scores(inst, grid)?;
    let proj_coeff = scores
        .fields()
        .iter()
        .map(|b| partial_integral(b, inst.density_field()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionPlan { scores, proj_coeff })
}

impl ProjectionPlan {
    pub fn instance(&self) -> &ModelInstance {
        self.scores.instance()
    }

    pub fn grid(&self) -> &Grid {
        self.instance().grid()
    }

    pub fn scores(&self) -> &NormalizedScores {
        &self.scores
    }

    /// `<b_j, ψ_x>_Q` at every node.
    pub fn proj_coeff(&self) -> &[GridField] {
        &self.proj_coeff
    }

    /// `Q(x)` at every node.
    pub fn cdf_field(&self) -> &GridField {
        self.instance().cdf_field()
    }

    pub fn p(&self) -> usize {
        self.proj_coeff.len()
    }

    /// `ψ̃_x` evaluated at every grid node `t`, for a fixed node `x`.
    pub fn psi_tilde_field(&self, x: usize) -> GridField {
        let grid = self.grid();
        let mut f = psi_field(grid, x, self.cdf_field().at(x));
        for (b, c) in self.scores.fields().iter().zip(&self.proj_coeff) {
            let cx = c.at(x);
            for (v, bt) in f.values_mut().iter_mut().zip(b.values()) {
                *v -= bt * cx;
            }
        }
        f
    }
}

/// `ψ(x, t) = 1{t <= x} - Q(x)` for node index `x` and any point `t`.
pub fn psi(x: usize, t: &Point, plan: &ProjectionPlan) -> f64 {
    indicator(plan.grid(), x, t) - plan.cdf_field().at(x)
}

/// `1{t <= x}` under the grid's cell convention.
#[inline]
pub fn indicator(grid: &Grid, x: usize, t: &Point) -> f64 {
    let (_, n2) = grid.shape();
    let (i, j) = (x / n2, x % n2);
    let (ti, tj) = grid.cell_of(t);
    if ti <= i && tj <= j {
        1.0
    } else {
        0.0
    }
}

/// `t ↦ ψ_x(t)` on the grid nodes, given `Q(x)`.
pub fn psi_field(grid: &Grid, x: usize, cdf_at_x: f64) -> GridField {
    let (_, n2) = grid.shape();
    let (i, j) = (x / n2, x % n2);
    let values = (0..grid.len())
        .map(|k| {
            let below = k / n2 <= i && k % n2 <= j;
            if below {
                1.0 - cdf_at_x
            } else {
                -cdf_at_x
            }
        })
        .collect();
    GridField::new(grid, values).expect("grid sized")
}

pub(crate) fn check_data(inst: &ModelInstance, data: &[Point]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    inst.check_data(data)
}

/// Projected process of `data` against a fixed plan.
pub fn projected_process(data: &[Point], plan: &ProjectionPlan) -> Result<ProcessField> {
    check_data(plan.instance(), data)?;
    let grid = plan.grid();
    let n = data.len() as f64;
    let mut values = grid.cumulative_counts(data, None);
    let b_sum = plan.scores.sum_over(data);
    let cdf = plan.cdf_field().values();
    let inv_sqrt_n = 1.0 / n.sqrt();
    for (k, v) in values.iter_mut().enumerate() {
        let mut s = *v - n * cdf[k];
        for (bj, cj) in b_sum.iter().zip(&plan.proj_coeff) {
            s -= bj * cj.at(k);
        }
        *v = s * inv_sqrt_n;
    }
    Ok(ProcessField { field: GridField::new(grid, values)?, n: data.len(), kind: ProcessKind::ProjectedQ })
}

/// Empirical process with parameters re-estimated on `data`:
/// `n^{-1/2} Σ_i [1{t_i <= x} - Q_θ̂(x)]`. Returns the fit and the fitted
/// instance alongside the process.
pub fn plugin_process(data: &[Point], spec: &ModelSpec, grid: &Grid) -> Result<(ProcessField, ModelInstance, FitResult)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let fit = mle_fit(spec, data, grid)?.into_result()?;
    let inst = instantiate(spec, fit.values(), grid)?;
    let field = plugin_field(data, &inst)?;
    Ok((ProcessField { field, n: data.len(), kind: ProcessKind::PluginQ }, inst, fit))
}

/// The unprojected empirical process of `data` under a fixed instance.
pub fn plugin_field(data: &[Point], inst: &ModelInstance) -> Result<GridField> {
    check_data(inst, data)?;
    let grid = inst.grid();
    let n = data.len() as f64;
    let mut values = grid.cumulative_counts(data, None);
    let inv_sqrt_n = 1.0 / n.sqrt();
    for (v, q) in values.iter_mut().zip(inst.cdf_field().values()) {
        *v = (*v - n * q) * inv_sqrt_n;
    }
    GridField::new(grid, values)
}
