//! K-2 rotation of the projected process of a reference model `Q` onto a
//! candidate model `F` with the same number of parameters.
//!
//! With `l = sqrt(q / f)`, the rotated functions are
//! `φ̃_x = U K (l ψ̃_x)`, where `K` maps `L²(F)` onto its zero-mean subspace
//! and `U` is the chain of reflections carrying each `K(l b_j)` onto the
//! normalized score `a_j` of `F`.
//!
//! Every field the chain produces lies in the span of
//! `{1, l, l b_1..l b_p, a_1..a_p}`. Plans keep each such field both as node
//! values and as coefficients over that basis, so the rotated process is
//! evaluated exactly at raw data points. Since `K` and every `U` are
//! rank-one updates, `U K (l ψ_x) = l ψ_x - Σ_m e_m γ_m(x)` for fixed
//! directions `e_m` and node fields `γ_m`, and a replicate costs one
//! weighted histogram plus a few basis sums.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fit::{normalized_scores, NormalizedScores};
use crate::model::{ModelInstance, Point};
use crate::process::{check_data, psi_field, ProcessField, ProcessKind, ProjectionPlan};
use crate::quadrature::{dot3, Grid, GridField};
#[allow(unused_imports)]
use num_traits::Float;

/// Squared F-norm below which `K` or a `U` pair collapses to the identity.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// A field in the span of the plan basis, with its node values.
#[derive(Debug, Clone)]
struct SpanField {
    coeffs: Vec<f64>,
    values: Vec<f64>,
}

impl SpanField {
    fn basis(dim: usize, idx: usize, values: Vec<f64>) -> Self {
        let mut coeffs = vec![0.0; dim];
        coeffs[idx] = 1.0;
        Self { coeffs, values }
    }

    /// `self + alpha * other`
    fn axpy(&self, alpha: f64, other: &SpanField) -> SpanField {
        SpanField {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect(),
        }
    }
}

/// One reflection `U_{a,c} h = h - (a - c) <a - c, h>_F / (1 - <a, c>_F)`.
#[derive(Debug, Clone)]
struct Reflection {
    diff: SpanField,
    scale: f64,
    active: bool,
}

/// Build-time residuals of the operator identities, all expected near zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanAudit {
    /// `|<l g, l h>_F - <g, h>_Q|`
    pub isometry: f64,
    /// `|<K g, K h>_F - <g, h>_F|`
    pub k_unitarity: f64,
    /// `max |<U g, U h>_F - <g, h>_F|` over the chain
    pub u_unitarity: f64,
    /// `max_j |<c_j, 1>_F|`
    pub c_mean: f64,
    /// `max_{k<j} |<c̃_j, a_k>_F|`
    pub ctilde_orthogonality: f64,
    /// `max_j max_x |U c_j - a_j|`
    pub u_chain: f64,
    /// `max |<b_j, ψ_x>_Q - <c_j, K l ψ_x>_F|, |<b_j, ψ_x>_Q - <a_j, φ_x>_F|`
    pub three_way: f64,
    /// `max |<φ̃_x, 1>_F|, |<φ̃_x, a_j>_F|`
    pub l_perp_f: f64,
    /// `max |<ψ̃_x, 1>_Q|, |<ψ̃_x, b_j>_Q|`
    pub l_perp_q: f64,
}

impl PlanAudit {
    pub fn max_residual(&self) -> f64 {
        [
            self.isometry,
            self.k_unitarity,
            self.u_unitarity,
            self.c_mean,
            self.ctilde_orthogonality,
            self.u_chain,
            self.three_way,
            self.l_perp_f,
            self.l_perp_q,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RotationPlan {
    proj: ProjectionPlan,
    f_scores: NormalizedScores,
    l: GridField,
    k_const: f64,
    k_scale: Option<f64>,
    kappa: SpanField,
    c: Vec<SpanField>,
    ctilde: Vec<SpanField>,
    reflections: Vec<Reflection>,
    /// `(e_m, s_m)` in application order: `K` first (when active), then the reflections.
    directions: Vec<(SpanField, f64)>,
    /// `γ_m(x)` per direction.
    gamma: Vec<GridField>,
}

/// Nodewise isometry `l = sqrt(q / f)`.
pub fn isometry_field(q_inst: &ModelInstance, f_inst: &ModelInstance, grid: &Grid) -> Result<GridField> {
    check_pair(q_inst, f_inst)?;
    if q_inst.grid() != grid || f_inst.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let mismatch = || Error::SupportMismatch { reference: q_inst.name().to_string(), candidate: f_inst.name().to_string() };
    let values = q_inst
        .density_field()
        .values()
        .iter()
        .zip(f_inst.density_field().values())
        .map(|(&q, &f)| {
            let l = (q / f).sqrt();
            if f > 0.0 && l.is_finite() && l > 0.0 {
                Ok(l)
            } else {
                Err(mismatch())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GridField::new(grid, values)
}

fn check_pair(q_inst: &ModelInstance, f_inst: &ModelInstance) -> Result<()> {
    if q_inst.p() != f_inst.p() {
        return Err(Error::DimensionMismatch {
            reference: q_inst.name().to_string(),
            candidate: f_inst.name().to_string(),
            p_ref: q_inst.p(),
            p_cand: f_inst.p(),
        });
    }
    if q_inst.spec().support() != f_inst.spec().support() {
        return Err(Error::SupportMismatch { reference: q_inst.name().to_string(), candidate: f_inst.name().to_string() });
    }
    Ok(())
}

/// Precomputes `l`, `K`, the `c_j` and `c̃_j`, the reflection chain `U`
/// and the node coefficients of the rotated process.
pub fn build_rotation_plan(
    q_inst: &ModelInstance,
    f_inst: &ModelInstance,
    grid: &Grid,
    proj_plan: &ProjectionPlan,
) -> Result<RotationPlan> {
    check_pair(q_inst, f_inst)?;
    if proj_plan.instance().grid() != grid || proj_plan.instance().params() != q_inst.params() {
        return Err(Error::InvalidParams {
            model: q_inst.name().to_string(),
            reason: "projection plan was built for a different instance".to_string(),
        });
    }
    let l = isometry_field(q_inst, f_inst, grid)?;
    let f_scores = normalized_scores(f_inst, grid)?;
    let p = q_inst.p();
    let dim = 2 + 2 * p;
    let n = grid.len();
    let w = grid.cell_weight();
    let f = f_inst.density_field().values();
    let ip = |x: &[f64], y: &[f64]| dot3(x, y, f) * w;

    let one = SpanField::basis(dim, 0, vec![1.0; n]);
    let l_span = SpanField::basis(dim, 1, l.values().to_vec());
    let kappa = one.axpy(-1.0, &l_span);
    let k_const = ip(l.values(), &one.values);
    let kappa_norm2 = ip(&kappa.values, &kappa.values);
    let k_scale = if kappa_norm2 < DEGENERACY_TOL {
        None
    } else {
        let denom = 1.0 - k_const;
        if denom.abs() < DEGENERACY_TOL {
            return Err(Error::DegenerateK(denom));
        }
        Some(1.0 / denom)
    };
    let apply_k = |h: &SpanField| match k_scale {
        Some(s) => h.axpy(-s * ip(&kappa.values, &h.values), &kappa),
        None => h.clone(),
    };

    let lb: Vec<SpanField> = proj_plan
        .scores()
        .fields()
        .iter()
        .enumerate()
        .map(|(j, b)| SpanField::basis(dim, 2 + j, b.values().iter().zip(l.values()).map(|(b, l)| b * l).collect()))
        .collect();
    let a: Vec<SpanField> =
        f_scores.fields().iter().enumerate().map(|(j, a)| SpanField::basis(dim, 2 + p + j, a.values().to_vec())).collect();
    let c: Vec<SpanField> = lb.iter().map(apply_k).collect();

    let reflect = |r: &Reflection, h: &SpanField| {
        if r.active {
            h.axpy(-r.scale * ip(&r.diff.values, &h.values), &r.diff)
        } else {
            h.clone()
        }
    };
    let mut reflections: Vec<Reflection> = Vec::with_capacity(p);
    let mut ctilde: Vec<SpanField> = Vec::with_capacity(p);
    for j in 0..p {
        let mut cj = c[j].clone();
        for r in &reflections {
            cj = reflect(r, &cj);
        }
        let diff = a[j].axpy(-1.0, &cj);
        let norm2 = ip(&diff.values, &diff.values);
        let active = norm2 >= DEGENERACY_TOL;
        let scale = if active { 1.0 / (1.0 - ip(&a[j].values, &cj.values)) } else { 0.0 };
        reflections.push(Reflection { diff, scale, active });
        ctilde.push(cj);
    }

    let mut directions: Vec<(SpanField, f64)> = Vec::new();
    if let Some(s) = k_scale {
        directions.push((kappa.clone(), s));
    }
    for r in reflections.iter().filter(|r| r.active) {
        directions.push((r.diff.clone(), r.scale));
    }

    // γ_m(x) = s_m [<e_m, l ψ_x>_F - Σ_{k<m} γ_k(x) <e_m, e_k>_F]
    let cdf = proj_plan.cdf_field().values();
    let m_count = directions.len();
    let mut gamma: Vec<Vec<f64>> = Vec::with_capacity(m_count);
    for (m, (e, s)) in directions.iter().enumerate() {
        let mut pi: Vec<f64> = e.values.iter().zip(l.values()).zip(f).map(|((e, l), f)| e * l * f * w).collect();
        grid.prefix_sum_in_place(&mut pi);
        let e_l = ip(&e.values, l.values());
        let gram: Vec<f64> = directions[..m].iter().map(|(ek, _)| ip(&e.values, &ek.values)).collect();
        let g: Vec<f64> = (0..n)
            .map(|x| {
                let mut r = pi[x] - cdf[x] * e_l;
                for (k, gk) in gram.iter().enumerate() {
                    r -= gamma[k][x] * gk;
                }
                s * r
            })
            .collect();
        gamma.push(g);
    }
    let gamma = gamma.into_iter().map(|g| GridField::new(grid, g)).collect::<Result<Vec<_>>>()?;

    Ok(RotationPlan {
        proj: proj_plan.clone(),
        f_scores,
        l,
        k_const,
        k_scale,
        kappa,
        c,
        ctilde,
        reflections,
        directions,
        gamma,
    })
}

impl RotationPlan {
    pub fn grid(&self) -> &Grid {
        self.proj.grid()
    }

    pub fn p(&self) -> usize {
        self.proj.p()
    }

    pub fn projection_plan(&self) -> &ProjectionPlan {
        &self.proj
    }

    pub fn q_instance(&self) -> &ModelInstance {
        self.proj.instance()
    }

    pub fn f_instance(&self) -> &ModelInstance {
        self.f_scores.instance()
    }

    pub fn f_scores(&self) -> &NormalizedScores {
        &self.f_scores
    }

    pub fn l_field(&self) -> &GridField {
        &self.l
    }

    /// `<l, 1>_F`
    pub fn k_const(&self) -> f64 {
        self.k_const
    }

    pub fn k_is_identity(&self) -> bool {
        self.k_scale.is_none()
    }

    /// Number of non-degenerate reflections in `U`.
    pub fn active_reflections(&self) -> usize {
        self.reflections.iter().filter(|r| r.active).count()
    }

    /// Residuals of the operator identities on probe fields and nodes.
    pub fn audit(&self) -> Result<PlanAudit> {
        self.compute_audit()
    }

    fn field(&self, values: &[f64]) -> GridField {
        GridField::new(self.grid(), values.to_vec()).expect("grid sized")
    }

    /// `c_j = K(l b_j)`
    pub fn c_field(&self, j: usize) -> GridField {
        self.field(&self.c[j].values)
    }

    /// `c̃_j`; `c̃_1 = c_1`.
    pub fn ctilde_field(&self, j: usize) -> GridField {
        self.field(&self.ctilde[j].values)
    }

    pub fn a_field(&self, j: usize) -> &GridField {
        self.f_scores.field(j)
    }

    fn f_density(&self) -> &GridField {
        self.f_instance().density_field()
    }

    /// Applies the full chain `U = U_p ··· U_1` to a node field.
    pub fn apply_u(&self, h: &GridField) -> Result<GridField> {
        let mut out = h.clone();
        for (j, r) in self.reflections.iter().enumerate() {
            if r.active {
                out = apply_u_pair(&out, self.a_field(j), &self.ctilde_field(j), self.f_density())?;
            }
        }
        Ok(out)
    }

    /// `x ↦ φ_x = U K (l ψ_x)` at every node `t`, from the plan's
    /// precomputed coefficients.
    pub fn phi_field(&self, x: usize) -> GridField {
        let psi = psi_field(self.grid(), x, self.proj.cdf_field().at(x));
        let mut values: Vec<f64> = psi.values().iter().zip(self.l.values()).map(|(p, l)| p * l).collect();
        for ((e, _), g) in self.directions.iter().zip(&self.gamma) {
            let gx = g.at(x);
            for (v, ev) in values.iter_mut().zip(&e.values) {
                *v -= ev * gx;
            }
        }
        self.field(&values)
    }

    /// `φ̃_x = φ_x - Σ_j a_j <b_j, ψ_x>_Q` at every node `t`.
    pub fn phi_tilde_field(&self, x: usize) -> GridField {
        let mut f = self.phi_field(x);
        for (j, coeff) in self.proj.proj_coeff().iter().enumerate() {
            let cx = coeff.at(x);
            for (v, a) in f.values_mut().iter_mut().zip(self.a_field(j).values()) {
                *v -= a * cx;
            }
        }
        f
    }

    /// Basis `{1, l, l b_j, a_j}` at an arbitrary point.
    fn basis_at(&self, t: &Point, scratch: &mut [f64], b: &mut [f64], out: &mut [f64]) {
        let p = self.p();
        let l = (0.5 * (self.q_instance().log_density(t) - self.f_instance().log_density(t))).exp();
        out[0] = 1.0;
        out[1] = l;
        self.proj.scores().eval_into(t, scratch, b);
        for j in 0..p {
            out[2 + j] = l * b[j];
        }
        self.f_scores.eval_into(t, scratch, b);
        out[2 + p..2 + 2 * p].copy_from_slice(b);
    }

    fn compute_audit(&self) -> Result<PlanAudit> {
        let grid = *self.grid();
        let p = self.p();
        let q = self.q_instance().density_field();
        let f = self.f_density();
        let one = grid.constant(1.0);
        let ipf = |g: &GridField, h: &GridField| crate::quadrature::inner_product(g, h, f);
        let ipq = |g: &GridField, h: &GridField| crate::quadrature::inner_product(g, h, q);
        let mut audit = PlanAudit::default();

        let probe_nodes = probe_nodes(&grid);
        let b = self.proj.scores().fields();
        let lift = |h: &GridField| h.zip_with(&self.l, |a, b| a * b);

        // isometry and unitarity on fixed probe fields
        let g1 = psi_field(&grid, probe_nodes[3], self.proj.cdf_field().at(probe_nodes[3]));
        let g2 = b[0].clone();
        let (lg1, lg2) = (lift(&g1)?, lift(&g2)?);
        audit.isometry = (ipf(&lg1, &lg2)? - ipq(&g1, &g2)?).abs().max((ipf(&lg1, &lg1)? - ipq(&g1, &g1)?).abs());
        let (kg1, kg2) = (apply_k(&lg1, self)?, apply_k(&lg2, self)?);
        audit.k_unitarity =
            (ipf(&kg1, &kg2)? - ipf(&lg1, &lg2)?).abs().max((ipf(&kg1, &kg1)? - ipf(&lg1, &lg1)?).abs());
        let (ug1, ug2) = (self.apply_u(&kg1)?, self.apply_u(&kg2)?);
        audit.u_unitarity =
            (ipf(&ug1, &ug2)? - ipf(&kg1, &kg2)?).abs().max((ipf(&ug1, &ug1)? - ipf(&kg1, &kg1)?).abs());

        for j in 0..p {
            let cj = self.c_field(j);
            audit.c_mean = audit.c_mean.max(ipf(&cj, &one)?.abs());
            let ct = self.ctilde_field(j);
            for k in 0..j {
                audit.ctilde_orthogonality = audit.ctilde_orthogonality.max(ipf(&ct, self.a_field(k))?.abs());
            }
            audit.u_chain = audit.u_chain.max(self.apply_u(&cj)?.max_abs_diff(self.a_field(j))?);
        }

        for &x in &probe_nodes {
            let psi = psi_field(&grid, x, self.proj.cdf_field().at(x));
            let klpsi = apply_k(&lift(&psi)?, self)?;
            let phi = self.apply_u(&klpsi)?;
            let phi_plan = self.phi_field(x);
            audit.three_way = audit.three_way.max(phi.max_abs_diff(&phi_plan)?);
            for j in 0..p {
                let coeff = self.proj.proj_coeff()[j].at(x);
                let via_c = ipf(&self.c_field(j), &klpsi)?;
                let via_a = ipf(self.a_field(j), &phi)?;
                audit.three_way = audit.three_way.max((coeff - via_c).abs()).max((coeff - via_a).abs());
            }
            let phit = self.phi_tilde_field(x);
            audit.l_perp_f = audit.l_perp_f.max(ipf(&phit, &one)?.abs());
            let psit = self.proj.psi_tilde_field(x);
            audit.l_perp_q = audit.l_perp_q.max(ipq(&psit, &one)?.abs());
            for (j, bj) in b.iter().enumerate() {
                audit.l_perp_f = audit.l_perp_f.max(ipf(&phit, self.a_field(j))?.abs());
                audit.l_perp_q = audit.l_perp_q.max(ipq(&psit, bj)?.abs());
            }
        }
        Ok(audit)
    }
}

/// Ten nodes spread over the grid, including both corners.
pub fn probe_nodes(grid: &Grid) -> Vec<usize> {
    let (n1, n2) = grid.shape();
    (0..10)
        .map(|k| {
            let i = (k * (n1 - 1)) / 9;
            let j = ((k * 7) % 10) * (n2 - 1) / 9;
            grid.index(i, if k == 0 { 0 } else if k == 9 { n2 - 1 } else { j })
        })
        .collect()
}

/// `K h = h - (1 - l) <1 - l, h>_F / (1 - <l, 1>_F)`; the identity when
/// `‖1 - l‖²_F` is negligible.
pub fn apply_k(h: &GridField, plan: &RotationPlan) -> Result<GridField> {
    if h.grid() != plan.grid() {
        return Err(Error::GridMismatch);
    }
    match plan.k_scale {
        None => Ok(h.clone()),
        Some(s) => {
            let kappa = plan.field(&plan.kappa.values);
            let coeff = crate::quadrature::inner_product(&kappa, h, plan.f_density())?;
            h.axpy(-s * coeff, &kappa)
        }
    }
}

/// `U_{a,c} h = h - (a - c) <a - c, h>_F / (1 - <a, c>_F)`; the identity
/// when `‖a - c‖²_F` is negligible.
pub fn apply_u_pair(h: &GridField, a: &GridField, c: &GridField, f_density: &GridField) -> Result<GridField> {
    let diff = a.axpy(-1.0, c)?;
    let norm2 = crate::quadrature::inner_product(&diff, &diff, f_density)?;
    if norm2 < DEGENERACY_TOL {
        return Ok(h.clone());
    }
    let denom = 1.0 - crate::quadrature::inner_product(a, c, f_density)?;
    let coeff = crate::quadrature::inner_product(&diff, h, f_density)? / denom;
    h.axpy(-coeff, &diff)
}

/// Rotated process `n^{-1/2} Σ_i φ̃_x(t_i)` at every node `x`.
pub fn rotated_process(data: &[Point], plan: &RotationPlan) -> Result<ProcessField> {
    check_data(plan.q_instance(), data)?;
    let grid = plan.grid();
    let p = plan.p();
    let dim = 2 + 2 * p;
    let mut scratch = vec![0.0; p];
    let mut b = vec![0.0; p];
    let mut basis = vec![0.0; dim];
    let mut sums = vec![0.0; dim];
    let mut l_weights = Vec::with_capacity(data.len());
    for t in data {
        plan.basis_at(t, &mut scratch, &mut b, &mut basis);
        if !basis.iter().all(|v| v.is_finite()) {
            return Err(Error::SupportMismatch {
                reference: plan.q_instance().name().to_string(),
                candidate: format!("{} at ({}, {})", plan.f_instance().name(), t[0], t[1]),
            });
        }
        l_weights.push(basis[1]);
        for (s, v) in sums.iter_mut().zip(&basis) {
            *s += v;
        }
    }
    let mut values = grid.cumulative_counts(data, Some(&l_weights));
    let e_sums: Vec<f64> =
        plan.directions.iter().map(|(e, _)| e.coeffs.iter().zip(&sums).map(|(c, s)| c * s).sum()).collect();
    let a_sums = &sums[2 + p..];
    let l_sum = sums[1];
    let cdf = plan.proj.cdf_field().values();
    let inv_sqrt_n = 1.0 / (data.len() as f64).sqrt();
    for (x, v) in values.iter_mut().enumerate() {
        let mut s = *v - cdf[x] * l_sum;
        for (e, g) in e_sums.iter().zip(&plan.gamma) {
            s -= e * g.at(x);
        }
        for (a, c) in a_sums.iter().zip(plan.proj.proj_coeff()) {
            s -= a * c.at(x);
        }
        *v = s * inv_sqrt_n;
    }
    Ok(ProcessField { field: GridField::new(grid, values)?, n: data.len(), kind: ProcessKind::RotatedF })
}
