//! Bilinear finite elements on masked rectilinear grids, linear elements on
//! intervals, and the direct solver behind both.

mod assemble;
mod norms;
pub mod solver;
pub mod sparse;

use std::sync::Arc;

pub use assemble::{
    assemble_1d_operator, assemble_1d_v, assemble_helmholtz_2d, assemble_operator, AssemblyOptions,
    SourceTerm,
};
pub use norms::{norm, profile_norm, NormKind, Reference};
pub use solver::{solve_direct, solve_unchecked, solve_with, LdlFactorization, Solution};
pub use sparse::{SparseSystem, SymmetricMatrix, TripletBuilder};

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Two-point Gauss rule on `[0, 1]`: abscissae and (equal) weight.
pub(crate) const GAUSS_2: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];
pub(crate) const GAUSS_2_WEIGHT: f64 = 0.5;

/// A bilinear finite-element function: one coefficient per grid unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.unknown_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.unknown_count(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.unknown_count();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.unknown_count())
            .map(|u| {
                let [x1, x2] = grid.node_coords(u);
                f(x1, x2)
            })
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Value at line indices `(j1, j2)`, if that node is active.
    pub fn at_lines(&self, j1: usize, j2: usize) -> Option<f64> {
        self.grid.node(j1, j2).map(|u| self.values[u])
    }

    /// Restricts to a grid whose x1 lines coincide with ours and whose x2
    /// lines are a contiguous run of ours. Every target node must be active
    /// in the source.
    pub fn restrict_to(&self, target: &Arc<Grid>) -> Result<Field> {
        if target.x1_lines() != self.grid.x1_lines() {
            return Err(Error::GridMismatch);
        }
        let ours = self.grid.x2_lines();
        let theirs = target.x2_lines();
        let offset = ours
            .iter()
            .position(|&y| y == theirs[0])
            .ok_or(Error::GridMismatch)?;
        if offset + theirs.len() > ours.len() || ours[offset..offset + theirs.len()] != *theirs {
            return Err(Error::GridMismatch);
        }
        let values = (0..target.unknown_count())
            .map(|u| {
                let (j1, j2) = target.unknown_lines(u);
                self.at_lines(j1, j2 + offset).ok_or(Error::GridMismatch)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Field {
            grid: target.clone(),
            values,
        })
    }

    /// `(self - other) * scale`, nodewise on a shared grid.
    pub fn scaled_difference(&self, other: &Field, scale: f64) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| (u - v) * scale)
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Corner values of an active cell, in [`Grid::cell_nodes`] order.
    pub(crate) fn cell_values(&self, i1: usize, i2: usize) -> [f64; 4] {
        self.grid.cell_nodes(i1, i2).map(|u| self.values[u])
    }
}
