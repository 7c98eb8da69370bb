//! Unsigned distance sources: analytic fixtures, sampled grids and point clouds.

pub mod fixtures;
pub mod grid;
pub mod pointset;

use rayon::prelude::*;

pub use fixtures::{make_fixture, Fixture, FIXTURE_NAMES};
pub use grid::{GridField, GridSpec};
pub use pointset::PointSetField;

use crate::error::Result;
use crate::geom::{Aabb, Vec3};

/// An evaluable unsigned distance field. Immutable once built and safe to share
/// across threads.
#[derive(Debug)]
pub enum ScalarField {
    Analytic(Fixture),
    Grid(GridField),
    PointSet(PointSetField),
}

impl ScalarField {
    pub fn bbox(&self) -> Aabb {
        match self {
            ScalarField::Analytic(f) => f.bbox(),
            ScalarField::Grid(g) => g.spec().bbox,
            ScalarField::PointSet(p) => p.bbox(),
        }
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        match self {
            ScalarField::Analytic(f) => f.eval(p),
            ScalarField::Grid(g) => g.eval(p),
            ScalarField::PointSet(s) => s.eval(p),
        }
    }

    /// Gradient of the distance. Analytic fixtures return the exact gradient; the
    /// other kinds use central differences with step `h`.
    pub fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        match self {
            ScalarField::Analytic(f) => f.gradient(p),
            _ => self.fd_gradient(p, h),
        }
    }

    /// Central finite-difference gradient, regardless of field kind.
    pub fn fd_gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        debug_assert!(h > 0.0);
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut lo = *p;
            let mut hi = *p;
            lo[a] -= h;
            hi[a] += h;
            g[a] = (self.eval(&hi) - self.eval(&lo)) / (2.0 * h);
        }
        g
    }

    pub fn has_exact_gradient(&self) -> bool {
        matches!(self, ScalarField::Analytic(_))
    }

    pub fn as_fixture(&self) -> Option<&Fixture> {
        match self {
            ScalarField::Analytic(f) => Some(f),
            _ => None,
        }
    }
}

impl From<Fixture> for ScalarField {
    fn from(f: Fixture) -> Self {
        ScalarField::Analytic(f)
    }
}

impl From<GridField> for ScalarField {
    fn from(g: GridField) -> Self {
        ScalarField::Grid(g)
    }
}

/// Evaluate `field` at every voxel center of `spec`.
pub fn sample_grid(field: &ScalarField, spec: &GridSpec) -> Result<GridField> {
    let spec = GridSpec::new(spec.dims, spec.bbox)?;
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|idx| field.eval(&spec.center_of(idx)))
        .collect();
    GridField::new(spec, values)
}
