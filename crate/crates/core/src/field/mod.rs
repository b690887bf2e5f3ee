//! Three-dimensional fields with integer fluxes through spheres.

mod analytic;
mod dipole;
pub(crate) mod grid;
mod scan;

pub use analytic::{AnalyticField, PointCharge, SmoothTerm};
pub use dipole::{dipole_chain, DipoleChain};
pub use grid::{GridCharge, GridField, GridHeader};
pub use scan::{integer_flux_audit, property_p_scan, PScanPoint, PScanReport, FLUX_TOL};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sphere::{SphereMesh, TwoCochain, Vec3};

/// A charge closer than this fraction of the radius to a slicing sphere
/// makes the slice degenerate.
pub const SURFACE_BAND: f64 = 1e-2;

/// Anything that can be sliced by spheres.
pub trait VectorField: Sync {
    /// Pointwise value `X(y)`.
    fn eval(&self, y: &Vec3) -> Result<Vec3>;

    /// Face integrals of `r^2 X(x + r s) . s` over the reference sphere.
    fn slice(&self, x: &Vec3, r: f64, mesh: &Arc<SphereMesh>) -> Result<TwoCochain>;

    /// Flux through the sphere `∂B(x, r)`; by construction the degree of
    /// [`VectorField::slice`].
    fn flux(&self, x: &Vec3, r: f64, mesh: &Arc<SphereMesh>) -> Result<f64> {
        Ok(self.slice(x, r, mesh)?.degree())
    }
}

/// Shorthand used by the experiments.
pub fn restrict_to_sphere(
    field: &dyn VectorField,
    x: &Vec3,
    r: f64,
    mesh: &Arc<SphereMesh>,
) -> Result<TwoCochain> {
    field.slice(x, r, mesh)
}

pub fn flux(field: &dyn VectorField, x: &Vec3, r: f64, mesh: &Arc<SphereMesh>) -> Result<f64> {
    field.flux(x, r, mesh)
}

/// Closed ball in space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self { center: [center.x, center.y, center.z], radius }
    }

    pub fn unit() -> Self {
        Self { center: [0.0; 3], radius: 1.0 }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn contains(&self, y: &Vec3) -> bool {
        (y - self.center()).norm() < self.radius
    }
}
