use serde::{Deserialize, Serialize};

use crate::field::Field;

/// Finite-difference derivatives at one grid point, for both `C` and `C²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivPoint {
    pub ix: usize,
    pub it: usize,
    pub x: f64,
    pub t: f64,
    pub c: f64,
    pub c_t: f64,
    pub c_x: f64,
    pub c_xx: f64,
    pub c_xxx: f64,
    pub c2_x: f64,
    pub c2_xx: f64,
    pub c2_xxx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeField {
    pub points: Vec<DerivPoint>,
    pub dx: f64,
    pub dt: f64,
}

impl DerivativeField {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct time indices, ascending.
    pub fn time_indices(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.points.iter().map(|p| p.it).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

/// True when the 3-point time stencil and 5-point space stencil centred on
/// `(ix, it)` lie inside the grid and touch only valid entries.
pub(crate) fn has_support(field: &Field, ix: usize, it: usize) -> bool {
    if it < 1 || it + 1 >= field.nt || ix < 2 || ix + 2 >= field.nx {
        return false;
    }
    field.is_valid(ix, it - 1)
        && field.is_valid(ix, it)
        && field.is_valid(ix, it + 1)
        && (ix - 2..=ix + 2).all(|j| field.is_valid(j, it))
}

/// Central differences: 2-point in time, 3-point for the first and second
/// space derivatives and the 5-point stencil for the third. Derivatives of
/// `C²` apply the same stencils to the squared samples.
pub fn compute_derivatives(field: &Field) -> DerivativeField {
    let (dx, dt) = (field.dx, field.dt);
    let mut points = Vec::new();
    for it in 0..field.nt {
        for ix in 0..field.nx {
            if !has_support(field, ix, it) {
                continue;
            }
            let u = |j: usize| field.get(j, it);
            let sq = |j: usize| u(j) * u(j);
            let (d1, d2, d3) = space_stencils(u, ix, dx);
            let (e1, e2, e3) = space_stencils(sq, ix, dx);
            points.push(DerivPoint {
                ix,
                it,
                x: field.x(ix),
                t: field.t(it),
                c: field.get(ix, it),
                c_t: (0.5 * field.get(ix, it + 1) - 0.5 * field.get(ix, it - 1)) / dt,
                c_x: d1,
                c_xx: d2,
                c_xxx: d3,
                c2_x: e1,
                c2_xx: e2,
                c2_xxx: e3,
            });
        }
    }
    DerivativeField { points, dx, dt }
}

fn space_stencils(u: impl Fn(usize) -> f64, i: usize, dx: f64) -> (f64, f64, f64) {
    let first = (0.5 * u(i + 1) - 0.5 * u(i - 1)) / dx;
    let second = (u(i + 1) - 2.0 * u(i) + u(i - 1)) / (dx * dx);
    let third = (0.5 * u(i + 2) - u(i + 1) + u(i - 1) - 0.5 * u(i - 2)) / (dx * dx * dx);
    (first, second, third)
}
