//! Sup, Cramér-von Mises and Anderson-Darling functionals of a process.
//!
//! The same three functionals serve the projected process of `Q` and the
//! rotated process of a candidate `F`; both are weighted by the reference
//! density `q` and cdf `Q`.


use crate::error::{Error, Result};
use crate::process::{ProcessField, ProcessKind};
use crate::quadrature::GridField;

/// Boundary clamp for the Anderson-Darling weight.
pub const AD_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StatTriple {
    #[cfg_attr(feature = "serde", serde(rename = "D"))]
    pub d: f64,
    pub omega2: f64,
    #[cfg_attr(feature = "serde", serde(rename = "A2"))]
    pub a2: f64,
    pub kind: ProcessKind,
}

impl StatTriple {
    pub fn compute(v: &ProcessField, q_density: &GridField, q_cdf: &GridField) -> Result<Self> {
        Ok(Self {
            d: stat_sup(&v.field),
            omega2: stat_cvm(&v.field, q_density)?,
            a2: stat_ad(&v.field, q_density, q_cdf)?,
            kind: v.kind,
        })
    }

    pub fn get(&self, kind: crate::sim::StatKind) -> f64 {
        match kind {
            crate::sim::StatKind::D => self.d,
            crate::sim::StatKind::Omega2 => self.omega2,
            crate::sim::StatKind::A2 => self.a2,
        }
    }
}

/// `max_x |v(x)|` over the nodes.
pub fn stat_sup(v: &GridField) -> f64 {
    v.values().iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `∫ v² q`.
pub fn stat_cvm(v: &GridField, q_density: &GridField) -> Result<f64> {
    if v.grid() != q_density.grid() {
        return Err(Error::GridMismatch);
    }
    let s: f64 = v.values().iter().zip(q_density.values()).map(|(x, q)| x * x * q).sum();
    Ok(s * v.grid().cell_weight())
}

/// `∫ v² q / [Q (1 - Q)]` with `Q` clamped into `[ε, 1-ε]`, `ε = 1e-10`.
pub fn stat_ad(v: &GridField, q_density: &GridField, q_cdf: &GridField) -> Result<f64> {
    stat_ad_with_epsilon(v, q_density, q_cdf, AD_EPSILON)
}

/// Anderson-Darling functional with an explicit boundary clamp. Nodes where
/// the clamp binds and `v² < 1e-20` contribute nothing.
pub fn stat_ad_with_epsilon(v: &GridField, q_density: &GridField, q_cdf: &GridField, eps: f64) -> Result<f64> {
    if v.grid() != q_density.grid() || v.grid() != q_cdf.grid() {
        return Err(Error::GridMismatch);
    }
    let mut s = 0.0;
    for ((x, q), cdf) in v.values().iter().zip(q_density.values()).zip(q_cdf.values()) {
        let v2 = x * x;
        let clamped = cdf.clamp(eps, 1.0 - eps);
        if clamped != *cdf && v2 < 1e-20 {
            continue;
        }
        s += v2 * q / (clamped * (1.0 - clamped));
    }
    Ok(s * v.grid().cell_weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SupportRect;
    use crate::quadrature::Grid;
    use alloc::vec;

    fn grid(n: usize) -> Grid {
        Grid::new(&SupportRect::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), n, n).unwrap()
    }

    fn uniform_cdf(g: &Grid) -> GridField {
        let [h1, h2] = g.cell_sides();
        g.field_from_fn(|x| (x[0] + 0.5 * h1) * (x[1] + 0.5 * h2))
    }

    #[test]
    fn zero_process() {
        let g = grid(10);
        let zero = g.constant(0.0);
        let q = g.constant(1.0);
        assert_eq!(stat_sup(&zero), 0.0);
        assert_eq!(stat_cvm(&zero, &q).unwrap(), 0.0);
        assert_eq!(stat_ad(&zero, &q, &uniform_cdf(&g)).unwrap(), 0.0);
    }

    #[test]
    fn sup_takes_absolute_value() {
        let g = grid(10);
        let mut v = g.constant(0.0);
        v.values_mut()[37] = -3.2;
        assert_eq!(stat_sup(&v), 3.2);
    }

    #[test]
    fn cvm_constants() {
        let g = grid(10);
        let q = g.constant(1.0);
        assert!((stat_cvm(&g.constant(1.0), &q).unwrap() - 1.0).abs() < 1e-12);
        assert!((stat_cvm(&g.constant(2.0), &q).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ad_dominates_four_times_cvm() {
        let g = grid(25);
        let q = g.constant(1.0);
        let cdf = uniform_cdf(&g);
        let v = g.field_from_fn(|x| (5.0 * x[0]).sin() * x[1]);
        let ad = stat_ad(&v, &q, &cdf).unwrap();
        let cvm = stat_cvm(&v, &q).unwrap();
        assert!(ad >= 4.0 * cvm);
    }

    #[test]
    fn ad_boundary_clamp_finite() {
        let g = grid(10);
        let q = g.constant(1.0);
        let cdf = uniform_cdf(&g);
        let mut v = g.field_from_fn(|x| x[0] * (1.0 - x[0]));
        // the top node has Q = 1 exactly and v = 0 there
        v.values_mut()[g.max_node()] = 0.0;
        let ad = stat_ad(&v, &q, &cdf).unwrap();
        assert!(ad.is_finite());
    }

    #[test]
    fn mismatched_grids() {
        let (a, b) = (grid(10), grid(11));
        assert_eq!(stat_cvm(&a.constant(1.0), &b.constant(1.0)).unwrap_err(), Error::GridMismatch);
    }
}
