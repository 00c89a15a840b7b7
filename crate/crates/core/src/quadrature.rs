//! Tensor midpoint grid over a rectangle, Darboux sums and prefix integrals.
//!
//! Nodes are cell midpoints. Node `(i, j)` stores at flat index `i * n2 + j`,
//! `i` running along the first coordinate. A point `t` is "below" node `x`
//! when the cell containing `t` is componentwise at or below the cell of
//! `x`; cumulative quantities (model cdf, empirical counts, partial
//! integrals) all use that convention, so a node effectively evaluates
//! cumulative functions at the upper corner of its cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Point, SupportRect};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lower: [f64; 2],
    upper: [f64; 2],
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
}

impl Grid {
    /// Midpoint tensor grid with `n1 x n2` cells.
    pub fn new(rect: &SupportRect, n1: usize, n2: usize) -> Result<Self> {
        if rect.dim() != 2 {
            return Err(Error::InvalidGrid(alloc::format!(
                "grid requires a 2-dimensional support, got d = {}",
                rect.dim()
            )));
        }
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidGrid(alloc::format!("need at least 2 cells per axis, got {n1} x {n2}")));
        }
        let lower = [rect.lower()[0], rect.lower()[1]];
        let upper = [rect.upper()[0], rect.upper()[1]];
        Ok(Self {
            lower,
            upper,
            n1,
            n2,
            h1: (upper[0] - lower[0]) / n1 as f64,
            h2: (upper[1] - lower[1]) / n2 as f64,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lower
    }

    pub fn upper(&self) -> [f64; 2] {
        self.upper
    }

    pub fn cell_weight(&self) -> f64 {
        self.h1 * self.h2
    }

    pub fn cell_sides(&self) -> [f64; 2] {
        [self.h1, self.h2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    #[inline]
    pub fn node(&self, k: usize) -> Point {
        let (i, j) = (k / self.n2, k % self.n2);
        [
            self.lower[0] + (i as f64 + 0.5) * self.h1,
            self.lower[1] + (j as f64 + 0.5) * self.h2,
        ]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = Point> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }

    /// Index of the maximal node (upper-right cell).
    pub fn max_node(&self) -> usize {
        self.len() - 1
    }

    pub fn contains(&self, t: &Point) -> bool {
        t[0] >= self.lower[0] && t[0] <= self.upper[0] && t[1] >= self.lower[1] && t[1] <= self.upper[1]
    }

    /// Cell holding `t`, with closed upper cell edges: a point on the edge
    /// between two cells belongs to the lower one.
    #[inline]
    pub fn cell_of(&self, t: &Point) -> (usize, usize) {
        let axis = |x: f64, lo: f64, h: f64, n: usize| {
            let c = ((x - lo) / h).ceil() - 1.0;
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(n - 1)
            }
        };
        (axis(t[0], self.lower[0], self.h1, self.n1), axis(t[1], self.lower[1], self.h2, self.n2))
    }

    pub fn field_from_fn(&self, mut f: impl FnMut(&Point) -> f64) -> GridField {
        GridField { grid: *self, values: self.nodes().map(|x| f(&x)).collect() }
    }

    pub fn constant(&self, c: f64) -> GridField {
        GridField { grid: *self, values: vec![c; self.len()] }
    }

    /// In-place 2-D inclusive prefix sum of node values: rows first, then columns.
    pub fn prefix_sum_in_place(&self, values: &mut [f64]) {
        debug_assert_eq!(values.len(), self.len());
        for i in 0..self.n1 {
            let row = &mut values[i * self.n2..(i + 1) * self.n2];
            for j in 1..self.n2 {
                row[j] += row[j - 1];
            }
        }
        for i in 1..self.n1 {
            for j in 0..self.n2 {
                let below = values[(i - 1) * self.n2 + j];
                values[i * self.n2 + j] += below;
            }
        }
    }

    /// `out[x] = sum_i weight_i * 1{t_i <= x}` for every node `x`.
    pub fn cumulative_counts(&self, points: &[Point], weights: Option<&[f64]>) -> Vec<f64> {
        let mut hist = vec![0.0; self.len()];
        for (k, t) in points.iter().enumerate() {
            let (i, j) = self.cell_of(t);
            hist[self.index(i, j)] += weights.map_or(1.0, |w| w[k]);
        }
        self.prefix_sum_in_place(&mut hist);
        hist
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check(other)?;
        Ok(GridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn scale(&self, alpha: f64) -> GridField {
        self.map(|v| alpha * v)
    }

    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        self.check(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Darboux (midpoint) sum of `h` over the grid rectangle.
pub fn integrate(h: &GridField) -> f64 {
    h.values.iter().sum::<f64>() * h.grid.cell_weight()
}

/// `<g, h>` under `density`: the Darboux sum of `g * h * density`.
pub fn inner_product(g: &GridField, h: &GridField, density: &GridField) -> Result<f64> {
    g.check(h)?;
    g.check(density)?;
    Ok(dot3(&g.values, &h.values, &density.values) * g.grid.cell_weight())
}

#[inline]
pub(crate) fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

/// Cumulative integral of `h * density` over all nodes `t <= x`, evaluated
/// at every node `x` (the node's own cell included).
pub fn partial_integral(h: &GridField, density: &GridField) -> Result<GridField> {
    h.check(density)?;
    let w = h.grid.cell_weight();
    let mut values: Vec<f64> = h.values.iter().zip(&density.values).map(|(a, b)| a * b * w).collect();
    h.grid.prefix_sum_in_place(&mut values);
    Ok(GridField { grid: h.grid, values })
}
