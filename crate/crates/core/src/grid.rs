//! Uniform 1-D grids, sampled fields, quadrature, norms and finite differences.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A uniform grid `x_i = x_min + i * dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Grid {
    x_min: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    pub const MIN_NODES: usize = 5;

    pub fn new(x_min: f64, dx: f64, n: usize) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        if n < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes, got {n}",
                Self::MIN_NODES
            )));
        }
        let x_max = x_min + (n - 1) as f64 * dx;
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("non-finite extent".into()));
        }
        Ok(Self { x_min, dx, n })
    }

    /// Grid covering `[-half_width, half_width]` with spacing as close to `dx` as
    /// the node count allows (the spacing is adjusted so both endpoints are nodes).
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        Self::spanning(-half_width, half_width, dx)
    }

    pub fn spanning(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(x_max > x_min) || !(dx > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "bad interval [{x_min}, {x_max}] or spacing {dx}"
            )));
        }
        let cells = ((x_max - x_min) / dx).round().max(1.0) as usize;
        Self::new(x_min, (x_max - x_min) / cells as f64, cells + 1)
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of node `i`, computed from the index (no accumulated drift).
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Samples `f` at every node.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(self),
            values: self.nodes().map(f).collect(),
        }
    }

    pub fn zeros(self: &Arc<Self>) -> Field {
        Field {
            grid: Arc::clone(self),
            values: vec![0.0; self.n],
        }
    }
}

/// Samples of a scalar function on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Builds a field without the finiteness scan; for values produced by
    /// arithmetic on already valid fields.
    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.ensure_same_grid(other)?;
        Ok(Field::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Trapezoid rule over raw samples with uniform spacing.
#[inline]
pub(crate) fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..n - 1].iter().sum();
    dx * (interior + 0.5 * (values[0] + values[n - 1]))
}

/// Trapezoid rule applied to `f(i)` for every node index.
#[inline]
pub(crate) fn trapezoid_by(n: usize, dx: f64, f: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.5 * (f(0) + f(n - 1));
    for i in 1..n - 1 {
        acc += f(i);
    }
    dx * acc
}

pub fn trapezoid_integral(field: &Field) -> f64 {
    trapezoid(&field.values, field.grid.dx())
}

pub fn l2_norm(field: &Field) -> f64 {
    trapezoid_by(field.values.len(), field.grid.dx(), |i| {
        field.values[i] * field.values[i]
    })
    .sqrt()
}

/// `sqrt(∫ f² + (∂x f)²)` with `∂x` from [`derivative`].
pub fn h1_norm(field: &Field) -> f64 {
    h1_norm_sq(field).sqrt()
}

pub fn h1_norm_sq(field: &Field) -> f64 {
    let d = derivative(field);
    let l2 = l2_norm(field);
    let dl2 = l2_norm(&d);
    l2 * l2 + dl2 * dl2
}

pub fn linf_norm(field: &Field) -> f64 {
    field.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// First derivative: central differences inside, one-sided second-order
/// stencils at both end nodes.
pub fn derivative(field: &Field) -> Field {
    let mut out = vec![0.0; field.values.len()];
    derivative_into(&field.values, field.grid.dx(), &mut out);
    Field::from_raw(&field.grid, out)
}

pub(crate) fn derivative_into(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let h2 = 0.5 / dx;
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - u[i - 1]) * h2;
    }
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) * h2;
    out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) * h2;
}

/// Second derivative: 3-point stencil inside, one-sided 4-point stencils at
/// both end nodes.
pub fn second_derivative(field: &Field) -> Field {
    let mut out = vec![0.0; field.values.len()];
    second_derivative_into(&field.values, field.grid.dx(), &mut out);
    Field::from_raw(&field.grid, out)
}

pub(crate) fn second_derivative_into(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (dx * dx);
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv;
    }
    out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * inv;
    out[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) * inv;
}
