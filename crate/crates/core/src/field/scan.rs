//! Flux integrality audits and the vanishing-flux scan.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ball, VectorField};
use crate::error::{domain, Error, Result};
use crate::report::{AuditReport, Check};
use crate::sphere::{SphereMesh, Vec3};

/// Default tolerance on a flux being an integer (or zero).
pub const FLUX_TOL: f64 = 1e-3;

/// Samples random spheres with centers in `region` and radii in
/// `[0.05, 1] * region.radius`, resampling degenerate ones, and records how
/// far each flux is from the nearest integer.
pub fn integer_flux_audit(
    field: &dyn VectorField,
    region: &Ball,
    n_spheres: usize,
    seed: u64,
    mesh: &Arc<SphereMesh>,
) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = region.center();
    let mut samples = Vec::with_capacity(n_spheres);
    let mut rejected = 0usize;
    while samples.len() < n_spheres {
        let x = loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() < 1.0 {
                break c + region.radius * v;
            }
        };
        let r = region.radius * rng.gen_range(0.05..1.0);
        match field.flux(&x, r, mesh) {
            Ok(_) => samples.push((x, r)),
            Err(Error::DegenerateSlice(_)) | Err(Error::Domain(_)) if rejected < 100 * n_spheres.max(1) => {
                rejected += 1
            }
            Err(e) => return Err(e),
        }
    }
    let fluxes: Vec<f64> = samples
        .par_iter()
        .map(|(x, r)| field.flux(x, *r, mesh))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for ((x, r), f) in samples.iter().zip(&fluxes) {
        let dev = (f - f.round()).abs();
        worst = worst.max(dev);
        if dev > FLUX_TOL {
            failures.push(serde_json::json!({ "center": [x.x, x.y, x.z], "radius": r, "flux": f }));
        }
    }
    let mut report = AuditReport::new("integer_flux");
    report.push(Check::at_most("max_integer_deviation", worst, FLUX_TOL));
    report.details = serde_json::json!({
        "spheres": n_spheres,
        "degenerate_resampled": rejected,
        "failures": failures,
    });
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PScanPoint {
    pub point: [f64; 3],
    /// Radii at which the flux vanishes.
    pub zero_radii: Vec<f64>,
    /// Radii skipped because the sphere grazes a charge.
    pub skipped_radii: Vec<f64>,
    /// No vanishing flux at any radius at or below the threshold.
    pub singular: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PScanReport {
    pub threshold: f64,
    pub points: Vec<PScanPoint>,
}

impl PScanReport {
    pub fn singular_points(&self) -> Vec<usize> {
        self.points.iter().enumerate().filter(|(_, p)| p.singular).map(|(i, _)| i).collect()
    }
}

/// For each sample point, lists the radii (from a strictly decreasing grid)
/// where the flux vanishes; a point with no such radius at or below
/// `threshold` is flagged singular.
pub fn property_p_scan(
    field: &dyn VectorField,
    points: &[Vec3],
    radii: &[f64],
    threshold: f64,
    mesh: &Arc<SphereMesh>,
) -> Result<PScanReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) || radii[radii.len() - 1] <= 0.0 {
        return Err(domain("radius grid must be positive and strictly decreasing"));
    }
    let scanned: Vec<PScanPoint> = points
        .par_iter()
        .map(|x| {
            let mut zero = Vec::new();
            let mut skipped = Vec::new();
            for &r in radii {
                match field.flux(x, r, mesh) {
                    Ok(f) if f.abs() <= FLUX_TOL => zero.push(r),
                    Ok(_) => {}
                    Err(Error::DegenerateSlice(_)) => skipped.push(r),
                    Err(e) => return Err(e),
                }
            }
            let singular = !zero.iter().any(|&r| r <= threshold);
            Ok(PScanPoint { point: [x.x, x.y, x.z], zero_radii: zero, skipped_radii: skipped, singular })
        })
        .collect::<Result<_>>()?;
    Ok(PScanReport { threshold, points: scanned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AnalyticField, SmoothTerm};

    fn mesh() -> Arc<SphereMesh> {
        Arc::new(SphereMesh::icosphere(2).unwrap())
    }

    #[test]
    fn integer_and_half_integer_audits() {
        let m = mesh();
        let f = AnalyticField::monopole(Vec3::new(0.1, 0.0, 0.0), 1)
            .unwrap()
            .with_charge(Vec3::new(-0.4, 0.3, 0.1), -2.0)
            .with_smooth(SmoothTerm::Uniform { b: [0.0, 0.3, 0.0] });
        let ok = integer_flux_audit(&f, &Ball::unit(), 60, 7, &m).unwrap();
        assert!(ok.passed(), "{:?}", ok.checks);
        let half = integer_flux_audit(&f.scaled(0.5), &Ball::unit(), 60, 7, &m).unwrap();
        assert!(!half.passed());
        assert!((half.checks[0].value - 0.5).abs() < 1e-6);
    }

    #[test]
    fn scan_flags_only_the_charge() {
        let m = mesh();
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let pts = [Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.0, -0.2, 0.1)];
        let radii: Vec<f64> = (0..12).map(|i| 0.5 * 0.7f64.powi(i)).collect();
        let rep = property_p_scan(&f, &pts, &radii, 0.25, &m).unwrap();
        assert_eq!(rep.singular_points(), vec![0]);
        assert!(rep.points[0].zero_radii.is_empty());

        let smooth = AnalyticField::smooth(SmoothTerm::Abc { amplitude: 1.0, wavenumber: 1.0 });
        let rep = property_p_scan(&smooth, &pts, &radii, 0.25, &m).unwrap();
        assert!(rep.points.iter().all(|p| p.zero_radii.len() == radii.len()));
        assert!(property_p_scan(&f, &pts, &[0.1, 0.2], 0.25, &m).is_err());
    }
}
