//! The reference model `Q`, the data-generating model `P` and the three
//! candidate models `F1`, `F2`, `F3`, all truncated to `[1,20] x [1,25]`.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{LogDensity, ModelSpec, ParamDomain, Point, SupportRect};
use crate::error::Result;
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

/// The search region `[1, 20] x [1, 25]`.
pub fn default_region() -> SupportRect {
    SupportRect::new(vec![1.0, 1.0], vec![20.0, 25.0]).expect("valid rectangle")
}

pub const BUILTIN_NAMES: [&str; 5] = ["Q", "P", "F1", "F2", "F3"];

pub fn register_builtin_models() -> Vec<ModelSpec> {
    BUILTIN_NAMES.iter().map(|n| by_name(n).expect("builtin")).collect()
}

pub fn by_name(name: &str) -> Option<ModelSpec> {
    by_name_on(name, default_region())
}

/// Builtin model `name` truncated to `support` instead of the default region.
pub fn by_name_on(name: &str, support: SupportRect) -> Option<ModelSpec> {
    let spec = match name {
        "Q" => q(support),
        "P" => p(support),
        "F1" => f1(support),
        "F2" => f2(support),
        "F3" => f3(support),
        _ => return None,
    };
    Some(spec.expect("builtin specs are valid"))
}

fn params(list: &[(&str, ParamDomain)]) -> Vec<(String, ParamDomain)> {
    list.iter().map(|(n, d)| (n.to_string(), *d)).collect()
}

fn mean_var(data: &[Point], k: usize) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().map(|x| x[k]).sum::<f64>() / n;
    let var = data.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `Q`: independent bivariate normal with common variance,
/// `q ∝ exp(-[(x1-θ1)² + (x2-θ2)²] / (2 θ3))`, `θ3 > 0`.
pub fn q(support: SupportRect) -> Result<ModelSpec> {
    ModelSpec::new(
        "Q",
        support,
        params(&[("theta1", ParamDomain::REAL), ("theta2", ParamDomain::REAL), ("theta3", ParamDomain::POSITIVE)]),
        vec![5.0, 8.0, 25.0],
        Arc::new(IndependentNormal),
    )
}

pub struct IndependentNormal;

impl LogDensity for IndependentNormal {
    fn log_unnormalized(&self, th: &[f64], x: &[f64]) -> f64 {
        let s = (x[0] - th[0]).powi(2) + (x[1] - th[1]).powi(2);
        -s / (2.0 * th[2])
    }

    fn grad_log_unnormalized(&self, th: &[f64], x: &[f64], out: &mut [f64]) -> bool {
        let (d1, d2) = (x[0] - th[0], x[1] - th[1]);
        out[0] = d1 / th[2];
        out[1] = d2 / th[2];
        out[2] = (d1 * d1 + d2 * d2) / (2.0 * th[2] * th[2]);
        true
    }

    fn has_base_sampler(&self) -> bool {
        true
    }

    fn sample_base(&self, th: &[f64], rng: &mut RngStream) -> Option<Point> {
        let sd = th[2].sqrt();
        Some([th[0] + sd * rng.normal(), th[1] + sd * rng.normal()])
    }

    fn initial_guess(&self, data: &[Point]) -> Option<Vec<f64>> {
        if data.is_empty() {
            return None;
        }
        let (m1, v1) = mean_var(data, 0);
        let (m2, v2) = mean_var(data, 1);
        Some(vec![m1, m2, (0.5 * (v1 + v2)).max(1e-3)])
    }
}

/// `P`: bivariate Cauchy (Student t with one degree of freedom),
/// `p ∝ |Σ|^{-1/2} [1 + (x-μ)ᵀ Σ⁻¹ (x-μ)]^{-3/2}`.
///
/// Used as the data-generating truth with `μ = (0, 3)`, `σ11 = σ22 = 20`,
/// `σ12 = 10`; the five entries are exposed as parameters so the model can
/// also be fitted, but only the fixed values are exercised.
pub fn p(support: SupportRect) -> Result<ModelSpec> {
    ModelSpec::new(
        "P",
        support,
        params(&[
            ("mu1", ParamDomain::REAL),
            ("mu2", ParamDomain::REAL),
            ("sigma11", ParamDomain::POSITIVE),
            ("sigma22", ParamDomain::POSITIVE),
            ("sigma12", ParamDomain::REAL),
        ]),
        vec![0.0, 3.0, 20.0, 20.0, 10.0],
        Arc::new(BivariateCauchy),
    )
}

pub struct BivariateCauchy;

impl LogDensity for BivariateCauchy {
    fn log_unnormalized(&self, th: &[f64], x: &[f64]) -> f64 {
        let (s11, s22, s12) = (th[2], th[3], th[4]);
        let det = s11 * s22 - s12 * s12;
        if det <= 0.0 {
            return f64::NAN;
        }
        let (d1, d2) = (x[0] - th[0], x[1] - th[1]);
        let m = (s22 * d1 * d1 - 2.0 * s12 * d1 * d2 + s11 * d2 * d2) / det;
        -0.5 * det.ln() - 1.5 * (1.0 + m).ln()
    }

    fn has_base_sampler(&self) -> bool {
        true
    }

    fn sample_base(&self, th: &[f64], rng: &mut RngStream) -> Option<Point> {
        let l11 = th[2].sqrt();
        let l21 = th[4] / l11;
        let l22 = (th[3] - l21 * l21).sqrt();
        let (z1, z2) = (rng.normal(), rng.normal());
        let w = rng.normal().abs();
        Some([th[0] + l11 * z1 / w, th[1] + (l21 * z1 + l22 * z2) / w])
    }
}

/// `F1`: independent gamma components with a shared rate,
/// `f ∝ x1^{β1-1} x2^{β2-1} exp(-β3 (x1 + x2))`, all `β > 0`.
pub fn f1(support: SupportRect) -> Result<ModelSpec> {
    ModelSpec::new(
        "F1",
        support,
        params(&[("beta1", ParamDomain::POSITIVE), ("beta2", ParamDomain::POSITIVE), ("beta3", ParamDomain::POSITIVE)]),
        vec![1.0, 1.0, 0.1],
        Arc::new(IndependentGamma),
    )
}

pub struct IndependentGamma;

impl LogDensity for IndependentGamma {
    fn log_unnormalized(&self, b: &[f64], x: &[f64]) -> f64 {
        (b[0] - 1.0) * x[0].ln() + (b[1] - 1.0) * x[1].ln() - b[2] * (x[0] + x[1])
    }

    fn grad_log_unnormalized(&self, _b: &[f64], x: &[f64], out: &mut [f64]) -> bool {
        out[0] = x[0].ln();
        out[1] = x[1].ln();
        out[2] = -(x[0] + x[1]);
        true
    }

    fn has_base_sampler(&self) -> bool {
        true
    }

    fn sample_base(&self, b: &[f64], rng: &mut RngStream) -> Option<Point> {
        Some([rng.gamma(b[0], b[2])?, rng.gamma(b[1], b[2])?])
    }

    fn initial_guess(&self, data: &[Point]) -> Option<Vec<f64>> {
        if data.len() < 2 {
            return None;
        }
        let (m1, v1) = mean_var(data, 0);
        let (m2, v2) = mean_var(data, 1);
        if v1 <= 0.0 || v2 <= 0.0 {
            return None;
        }
        let rate = 0.5 * (m1 / v1 + m2 / v2);
        Some(vec![m1 * rate, m2 * rate, rate])
    }
}

/// `F2`: isotropic bivariate Cauchy,
/// `f ∝ (β3 / 2π) [(x1-β1)² + (x2-β2)² + β3]^{-3/2}`, `β3 > 0`.
pub fn f2(support: SupportRect) -> Result<ModelSpec> {
    ModelSpec::new(
        "F2",
        support,
        params(&[("beta1", ParamDomain::REAL), ("beta2", ParamDomain::REAL), ("beta3", ParamDomain::POSITIVE)]),
        vec![5.0, 8.0, 20.0],
        Arc::new(IsotropicCauchy),
    )
}

pub struct IsotropicCauchy;

impl LogDensity for IsotropicCauchy {
    fn log_unnormalized(&self, b: &[f64], x: &[f64]) -> f64 {
        let r = (x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2) + b[2];
        b[2].ln() - 1.5 * r.ln()
    }

    fn grad_log_unnormalized(&self, b: &[f64], x: &[f64], out: &mut [f64]) -> bool {
        let (d1, d2) = (x[0] - b[0], x[1] - b[1]);
        let r = d1 * d1 + d2 * d2 + b[2];
        out[0] = 3.0 * d1 / r;
        out[1] = 3.0 * d2 / r;
        out[2] = 1.0 / b[2] - 1.5 / r;
        true
    }

    fn has_base_sampler(&self) -> bool {
        true
    }

    fn sample_base(&self, b: &[f64], rng: &mut RngStream) -> Option<Point> {
        let s = b[2].sqrt();
        let (z1, z2) = (rng.normal(), rng.normal());
        let w = rng.normal().abs();
        Some([b[0] + s * z1 / w, b[1] + s * z2 / w])
    }

    fn initial_guess(&self, data: &[Point]) -> Option<Vec<f64>> {
        if data.is_empty() {
            return None;
        }
        let (m1, v1) = mean_var(data, 0);
        let (m2, v2) = mean_var(data, 1);
        Some(vec![m1, m2, (0.5 * (v1 + v2)).max(1e-3)])
    }
}

/// `F3`: correlated bivariate normal in relative coordinates
/// `u = x1/β1 - 1`, `v = x2/β2 - 1`:
/// `f ∝ exp(-[u² + v² - β3 u v] / 200)`, `β1, β2 > 0`, `|β3| < 2`.
pub fn f3(support: SupportRect) -> Result<ModelSpec> {
    ModelSpec::new(
        "F3",
        support,
        params(&[
            ("beta1", ParamDomain::POSITIVE),
            ("beta2", ParamDomain::POSITIVE),
            ("beta3", ParamDomain::new(-2.0, 2.0)),
        ]),
        vec![5.0, 8.0, 0.0],
        Arc::new(CorrelatedNormal),
    )
}

pub struct CorrelatedNormal;

impl LogDensity for CorrelatedNormal {
    fn log_unnormalized(&self, b: &[f64], x: &[f64]) -> f64 {
        let u = x[0] / b[0] - 1.0;
        let v = x[1] / b[1] - 1.0;
        -(u * u + v * v - b[2] * u * v) / 200.0
    }

    fn grad_log_unnormalized(&self, b: &[f64], x: &[f64], out: &mut [f64]) -> bool {
        let u = x[0] / b[0] - 1.0;
        let v = x[1] / b[1] - 1.0;
        out[0] = (2.0 * u - b[2] * v) * x[0] / (200.0 * b[0] * b[0]);
        out[1] = (2.0 * v - b[2] * u) * x[1] / (200.0 * b[1] * b[1]);
        out[2] = u * v / 200.0;
        true
    }

    fn has_base_sampler(&self) -> bool {
        true
    }

    fn sample_base(&self, b: &[f64], rng: &mut RngStream) -> Option<Point> {
        let rho = 0.5 * b[2];
        let sd = (100.0 / (1.0 - rho * rho)).sqrt();
        let (z1, z2) = (rng.normal(), rng.normal());
        let u = sd * z1;
        let v = sd * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        Some([b[0] * (1.0 + u), b[1] * (1.0 + v)])
    }

    fn initial_guess(&self, data: &[Point]) -> Option<Vec<f64>> {
        if data.is_empty() {
            return None;
        }
        let (m1, _) = mean_var(data, 0);
        let (m2, _) = mean_var(data, 1);
        Some(vec![m1.max(1e-3), m2.max(1e-3), 0.0])
    }
}
