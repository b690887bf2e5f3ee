//! Smooth reference cochains: spherical-harmonic bands and pairing tests.

use std::sync::Arc;

use super::cochain::TwoCochain;
use super::mesh::{spherical_triangle_area, SphereMesh, Vec3};

/// Face integrals of a smooth function, one midpoint refinement per face
/// with the centroid rule on each of the four children.
pub fn integrate_faces(mesh: &Arc<SphereMesh>, f: impl Fn(&Vec3) -> f64) -> TwoCochain {
    let v = mesh.vertices();
    let values = mesh
        .faces()
        .iter()
        .map(|&[a, b, c]| {
            let (a, b, c) = (v[a], v[b], v[c]);
            let ab = (a + b).normalize();
            let bc = (b + c).normalize();
            let ca = (c + a).normalize();
            [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
                .iter()
                .map(|t| {
                    let area = spherical_triangle_area(&t[0], &t[1], &t[2]);
                    area * f(&(t[0] + t[1] + t[2]).normalize())
                })
                .sum()
        })
        .collect();
    TwoCochain::new(mesh.clone(), values).expect("face count matches")
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Degree-one band `axis · x`, normalized to unit `L^2` norm.
pub fn l1_band(mesh: &Arc<SphereMesh>, axis: Vec3) -> TwoCochain {
    let axis = axis.normalize();
    let h = integrate_faces(mesh, |x| axis.dot(x));
    let n = h.lp_norm(2.0).expect("p = 2");
    h.scaled(1.0 / n)
}

/// Zonal band `P_l(axis · x)` with its degree removed exactly and unit
/// `L^p` norm.
pub fn zonal_band(mesh: &Arc<SphereMesh>, l: usize, axis: Vec3, p: f64) -> TwoCochain {
    let axis = axis.normalize();
    let mut h = integrate_faces(mesh, |x| legendre(l, axis.dot(x)));
    let total = mesh.total_area();
    let deg = h.degree();
    h.values_mut()
        .iter_mut()
        .zip(mesh.face_areas())
        .for_each(|(v, a)| *v -= deg * a / total);
    let n = h.lp_norm(p).expect("valid exponent");
    h.scaled(1.0 / n)
}

/// A random smooth cochain of exact `degree`: the constant density
/// `degree/4π` plus `bumps` Gaussian-like caps of random centre, sign and
/// width, with their total removed.
pub fn random_smooth<R: rand::Rng>(mesh: &Arc<SphereMesh>, degree: i64, bumps: usize, rng: &mut R) -> TwoCochain {
    let caps: Vec<(Vec3, f64, f64)> = (0..bumps)
        .map(|_| {
            let c = loop {
                let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let n = v.norm();
                if n > 0.1 && n <= 1.0 {
                    break v / n;
                }
            };
            (c, rng.gen_range(-1.0..1.0), rng.gen_range(2.0..12.0))
        })
        .collect();
    let mut h = integrate_faces(mesh, |x| caps.iter().map(|(c, a, k)| a * (k * (c.dot(x) - 1.0)).exp()).sum());
    let total = mesh.total_area();
    let shift = h.degree() - degree as f64;
    h.values_mut()
        .iter_mut()
        .zip(mesh.face_areas())
        .for_each(|(v, a)| *v -= shift * a / total);
    h
}

/// The fixed smooth functions used as a finite proxy for weak convergence.
pub fn pairing_tests() -> Vec<(&'static str, fn(&Vec3) -> f64)> {
    vec![
        ("exp_z", |x| x.z.exp()),
        ("cos_x", |x| x.x.cos()),
        ("sin_2y", |x| (2.0 * x.y).sin()),
        ("xy", |x| x.x * x.y),
        ("x_plus_z_sq", |x| (x.x + x.z).powi(2)),
        ("yz_cubed", |x| x.y * x.z.powi(3)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert!((legendre(2, 0.5) - (3.0 * 0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((legendre(5, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn face_integration_accuracy() {
        let m = Arc::new(SphereMesh::icosphere(3).unwrap());
        // ∫ z^2 = 4π/3
        let h = integrate_faces(&m, |x| x.z * x.z);
        assert!((h.degree() - 4.0 * PI / 3.0).abs() < 1e-4);
    }

    #[test]
    fn zonal_band_is_normalized_and_balanced() {
        let m = Arc::new(SphereMesh::icosphere(3).unwrap());
        let h = zonal_band(&m, 4, Vec3::z(), 1.25);
        assert!(h.degree().abs() < 1e-12);
        assert!((h.lp_norm(1.25).unwrap() - 1.0).abs() < 1e-12);
    }
}
