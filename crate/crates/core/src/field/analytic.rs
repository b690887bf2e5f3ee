//! Point charges plus smooth divergence-free backgrounds.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{VectorField, SURFACE_BAND};
use crate::error::{domain, Error, Result};
use crate::linalg::gauss_legendre01;
use crate::sphere::mesh::geodesic;
use crate::sphere::{SphereMesh, TwoCochain, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    pub center: [f64; 3],
    /// Flux through any small sphere around the center.
    pub charge: f64,
}

impl PointCharge {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }
}

/// Divergence-free term given as the curl of an explicit vector potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothTerm {
    /// Constant field `b`, potential `b x y / 2`.
    Uniform { b: [f64; 3] },
    /// Curl of `a (sin ky, sin kz, sin kx)`.
    Abc { amplitude: f64, wavenumber: f64 },
}

impl SmoothTerm {
    pub fn eval(&self, y: &Vec3) -> Vec3 {
        match *self {
            SmoothTerm::Uniform { b } => Vec3::from(b),
            SmoothTerm::Abc { amplitude: a, wavenumber: k } => {
                -a * k * Vec3::new((k * y.z).cos(), (k * y.x).cos(), (k * y.y).cos())
            }
        }
    }

    pub fn potential(&self, y: &Vec3) -> Vec3 {
        match *self {
            SmoothTerm::Uniform { b } => 0.5 * Vec3::from(b).cross(y),
            SmoothTerm::Abc { amplitude: a, wavenumber: k } => {
                a * Vec3::new((k * y.y).sin(), (k * y.z).sin(), (k * y.x).sin())
            }
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match *self {
            SmoothTerm::Uniform { b } => SmoothTerm::Uniform { b: [s * b[0], s * b[1], s * b[2]] },
            SmoothTerm::Abc { amplitude, wavenumber } => {
                SmoothTerm::Abc { amplitude: s * amplitude, wavenumber }
            }
        }
    }
}

/// `X(y) = Σ k_i (y - p_i) / (4π |y - p_i|^3) + smooth terms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub charges: Vec<PointCharge>,
    #[serde(default)]
    pub smooth: Vec<SmoothTerm>,
}

impl AnalyticField {
    /// Unit-normalized monopole: flux `k` through every enclosing sphere.
    pub fn monopole(center: Vec3, k: i64) -> Result<Self> {
        if k == 0 {
            return Err(domain("monopole charge must be nonzero"));
        }
        Ok(Self::default().with_charge(center, k as f64))
    }

    pub fn smooth(term: SmoothTerm) -> Self {
        Self { charges: Vec::new(), smooth: vec![term] }
    }

    pub fn with_charge(mut self, center: Vec3, charge: f64) -> Self {
        self.charges.push(PointCharge { center: [center.x, center.y, center.z], charge });
        self
    }

    pub fn with_smooth(mut self, term: SmoothTerm) -> Self {
        self.smooth.push(term);
        self
    }

    /// Multiplies the field (charges included) by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            charges: self
                .charges
                .iter()
                .map(|c| PointCharge { center: c.center, charge: s * c.charge })
                .collect(),
            smooth: self.smooth.iter().map(|t| t.scaled(s)).collect(),
        }
    }

    /// True when every charge is an integer up to `tol`.
    pub fn has_integer_charges(&self, tol: f64) -> bool {
        self.charges.iter().all(|c| (c.charge - c.charge.round()).abs() <= tol)
    }

    /// Sum of the charges strictly inside `∂B(x, r)`.
    pub fn enclosed_charge(&self, x: &Vec3, r: f64) -> f64 {
        self.charges.iter().filter(|c| (c.center() - x).norm() < r).map(|c| c.charge).sum()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rejects spheres passing through the band around a charge.
    pub fn check_slice(&self, x: &Vec3, r: f64) -> Result<()> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(domain(format!("slice radius {r} must be positive")));
        }
        for c in &self.charges {
            let gap = ((c.center() - x).norm() - r).abs();
            if gap < SURFACE_BAND * r {
                return Err(Error::DegenerateSlice(format!(
                    "charge at {:?} lies {gap:.2e} from the sphere of radius {r}",
                    c.center
                )));
            }
        }
        Ok(())
    }

    /// Sum of the vector potentials, each monopole with its Dirac string
    /// running from the charge in direction `strings[i]`.
    fn potential(&self, y: &Vec3, strings: &[Vec3]) -> Vec3 {
        let mut a = Vec3::zeros();
        for (c, s) in self.charges.iter().zip(strings) {
            let d = y - c.center();
            let rho = d.norm();
            let u = d / rho;
            a += c.charge / (4.0 * PI) * u.cross(s) / (rho * (1.0 - s.dot(&u)));
        }
        for t in &self.smooth {
            a += t.potential(y);
        }
        a
    }
}

impl VectorField for AnalyticField {
    fn eval(&self, y: &Vec3) -> Result<Vec3> {
        let mut v = Vec3::zeros();
        for c in &self.charges {
            let d = y - c.center();
            let rho = d.norm();
            if rho <= 1e-14 * (1.0 + y.norm()) {
                return Err(Error::Singular(format!("evaluation at the charge {:?}", c.center)));
            }
            v += c.charge / (4.0 * PI) * d / rho.powi(3);
        }
        for t in &self.smooth {
            v += t.eval(y);
        }
        Ok(v)
    }

    /// Face fluxes via Stokes: each face integral is the line integral of a
    /// vector potential around its boundary, computed once per edge, plus the
    /// full charge on the face crossed by that charge's Dirac string. Shared
    /// edges cancel exactly, so the degree is the enclosed charge to
    /// round-off and face values converge with the arc quadrature.
    fn slice(&self, x: &Vec3, r: f64, mesh: &Arc<SphereMesh>) -> Result<TwoCochain> {
        self.check_slice(x, r)?;
        let mut strings = Vec::with_capacity(self.charges.len());
        let mut pierced = Vec::new();
        for c in &self.charges {
            let d = c.center() - x;
            if d.norm() < r {
                let (s, face, point) = choose_string(mesh, &d, r);
                strings.push(s);
                pierced.push((face, c.charge, x + r * point));
            } else {
                strings.push(d.normalize());
            }
        }
        let mut hot: Vec<Vec3> = self.charges.iter().map(|c| c.center()).collect();
        hot.extend(pierced.iter().map(|p| p.2));

        let gl = gauss_legendre01(8);
        let verts = mesh.vertices();
        let edge_int: Vec<f64> = mesh
            .edges()
            .iter()
            .map(|&[i, j]| {
                arc_integral(&verts[i], &verts[j], x, r, &hot, &gl, |y| self.potential(y, &strings))
            })
            .collect();
        let mut values: Vec<f64> = mesh
            .face_edges()
            .iter()
            .map(|fe| fe.iter().map(|&(e, s)| s * edge_int[e]).sum())
            .collect();
        for (f, k, _) in pierced {
            values[f] += k;
        }
        TwoCochain::new(mesh.clone(), values)
    }
}

/// Line integral of `potential` along the great-circle arc `a -> b` of the
/// sphere `∂B(x, r)`, subdivided according to the distance to `hot` points.
fn arc_integral(
    a: &Vec3,
    b: &Vec3,
    x: &Vec3,
    r: f64,
    hot: &[Vec3],
    gl: &[(f64, f64)],
    potential: impl Fn(&Vec3) -> Vec3,
) -> f64 {
    let theta = geodesic(a, b);
    if theta == 0.0 {
        return 0.0;
    }
    let w = (b - a * a.dot(b)).normalize();
    let point = |t: f64| a * (t * theta).cos() + w * (t * theta).sin();
    let mut near = f64::INFINITY;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = x + r * point(t);
        for h in hot {
            near = near.min((y - h).norm());
        }
    }
    let n = ((2.0 * r * theta / near).ceil() as usize).clamp(1, 4096);
    let mut total = 0.0;
    for m in 0..n {
        for &(t, wt) in gl {
            let t = (m as f64 + t) / n as f64;
            let s = point(t);
            let tangent = (w * (t * theta).cos() - a * (t * theta).sin()) * (r * theta);
            total += wt / n as f64 * potential(&(x + r * s)).dot(&tangent);
        }
    }
    total
}

/// Picks a string direction for a charge at offset `d` inside the sphere
/// whose exit point sits well inside a face, away from every edge.
fn choose_string(mesh: &SphereMesh, d: &Vec3, r: f64) -> (Vec3, usize, Vec3) {
    let base = if d.norm() > 1e-9 * r {
        d.normalize()
    } else {
        Vec3::new(0.267, 0.534, 0.802).normalize()
    };
    let mut best: Option<(f64, Vec3, usize, Vec3)> = None;
    let kicks = [
        Vec3::zeros(),
        Vec3::new(0.11, 0.07, 0.0),
        Vec3::new(-0.05, 0.12, 0.03),
        Vec3::new(0.02, -0.09, 0.1),
        Vec3::new(-0.1, -0.04, -0.08),
    ];
    for kick in kicks {
        let s = (base + kick).normalize();
        let ds = d.dot(&s);
        let t = -ds + (ds * ds - d.norm_squared() + r * r).sqrt();
        let exit = ((d + t * s) / r).normalize();
        let (margin, face) = containing_face(mesh, &exit);
        if best.as_ref().is_none_or(|b| margin > b.0) {
            best = Some((margin, s, face, exit));
        }
    }
    let (_, s, face, exit) = best.expect("at least one candidate");
    (s, face, exit)
}

/// Face containing `p` and the distance from `p` to its nearest edge
/// relative to the face size.
fn containing_face(mesh: &SphereMesh, p: &Vec3) -> (f64, usize) {
    let v = mesh.vertices();
    let mut best = (f64::NEG_INFINITY, 0);
    for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
        let cen = mesh.centroids()[f];
        if cen.dot(p) < 0.5 {
            continue;
        }
        let m = [(a, b), (b, c), (c, a)]
            .iter()
            .map(|&(i, j)| p.dot(&v[i].cross(&v[j]).normalize()))
            .fold(f64::INFINITY, f64::min)
            / mesh.face_areas()[f].sqrt();
        if m > best.0 {
            best = (m, f);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::mesh::solid_angle;

    fn mesh(level: u32) -> Arc<SphereMesh> {
        Arc::new(SphereMesh::icosphere(level).unwrap())
    }

    #[test]
    fn centered_monopole_gives_area_fractions() {
        let m = mesh(2);
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let s = f.slice(&Vec3::zeros(), 0.7, &m).unwrap();
        for (v, a) in s.values().iter().zip(m.face_areas()) {
            assert!((v - a / (4.0 * PI)).abs() < 1e-10, "{v} vs {}", a / (4.0 * PI));
        }
        assert!((s.degree() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_center_faces_match_flat_solid_angles_when_refined() {
        // oracle: flux of a point charge through a patch is the solid angle
        // it subtends; a 4^3-fold flat subdivision approximates the patch
        let m = mesh(1);
        let c = Vec3::new(0.2, -0.3, 0.35);
        let f = AnalyticField::monopole(c, 1).unwrap();
        let s = f.slice(&Vec3::zeros(), 1.0, &m).unwrap();
        let v = m.vertices();
        for (fi, &[a, b, cc]) in m.faces().iter().enumerate() {
            let mut tris = vec![[v[a], v[b], v[cc]]];
            for _ in 0..5 {
                tris = tris
                    .into_iter()
                    .flat_map(|[p, q, r]| {
                        let (pq, qr, rp) =
                            ((p + q).normalize(), (q + r).normalize(), (r + p).normalize());
                        [[p, pq, rp], [pq, q, qr], [rp, qr, r], [pq, qr, rp]]
                    })
                    .collect();
            }
            let omega: f64 = tris.iter().map(|[p, q, r]| solid_angle(&(p - c), &(q - c), &(r - c))).sum();
            assert!((s.values()[fi] - omega / (4.0 * PI)).abs() < 2e-4, "face {fi}");
        }
    }

    #[test]
    fn gauss_consistency_for_mixed_field() {
        let m = mesh(3);
        let f = AnalyticField::default()
            .with_charge(Vec3::new(0.1, 0.2, 0.0), 1.0)
            .with_charge(Vec3::new(-0.3, 0.0, 0.25), -1.0)
            .with_charge(Vec3::new(0.9, 0.9, 0.9), 3.0)
            .with_smooth(SmoothTerm::Abc { amplitude: 0.3, wavenumber: 2.0 })
            .with_smooth(SmoothTerm::Uniform { b: [0.1, -0.2, 0.4] });
        for (x, r, want) in [
            (Vec3::zeros(), 0.5, 0.0),
            (Vec3::new(0.1, 0.2, 0.0), 0.2, 1.0),
            (Vec3::new(-0.3, 0.0, 0.25), 0.1, -1.0),
            (Vec3::new(0.5, 0.5, 0.5), 1.0, 3.0),
            (Vec3::zeros(), 2.0, 3.0),
        ] {
            let s = f.slice(&x, r, &m).unwrap();
            assert!((s.degree() - want).abs() < 1e-9, "{x:?} {r}: {}", s.degree());
            assert!((s.degree() - f.flux(&x, r, &m).unwrap()).abs() < 1e-12);
        }
        // enclosed dipole: zero degree but a nonconstant slice
        let s = f.slice(&Vec3::zeros(), 0.6, &m).unwrap();
        assert!(s.degree().abs() < 1e-9);
        let d = s.densities();
        assert!(d.iter().cloned().fold(f64::MIN, f64::max) > 0.05);
    }

    #[test]
    fn smooth_slice_matches_surface_quadrature() {
        // oracle: centroid-rule surface integral of X.n on a fine mesh
        let term = SmoothTerm::Abc { amplitude: 0.5, wavenumber: 1.5 };
        let f = AnalyticField::smooth(term);
        let (coarse, fine) = (mesh(1), mesh(5));
        let x = Vec3::new(0.1, 0.0, -0.2);
        let s = f.slice(&x, 0.8, &coarse).unwrap();
        let mut want = vec![0.0; coarse.n_faces()];
        let loc = crate::sphere::FaceLocator::new(coarse.clone());
        for (c, a) in fine.centroids().iter().zip(fine.face_areas()) {
            let y = x + 0.8 * c;
            want[loc.locate(c)] += a * 0.64 * term.eval(&y).dot(c);
        }
        for (v, w) in s.values().iter().zip(&want) {
            assert!((v - w).abs() < 2e-3 * 0.64, "{v} vs {w}");
        }
    }

    #[test]
    fn degenerate_and_singular_cases() {
        let m = mesh(1);
        let f = AnalyticField::monopole(Vec3::zeros(), 2).unwrap();
        assert!(matches!(f.eval(&Vec3::zeros()), Err(Error::Singular(_))));
        assert!(matches!(
            f.slice(&Vec3::new(1.0, 0.0, 0.0), 1.005, &m),
            Err(Error::DegenerateSlice(_))
        ));
        assert!(AnalyticField::monopole(Vec3::zeros(), 0).is_err());
        let half = f.scaled(0.25);
        assert!(!half.has_integer_charges(1e-9));
        assert!((half.flux(&Vec3::zeros(), 1.0, &m).unwrap() - 0.5).abs() < 1e-12);
        let json = f.to_json().unwrap();
        assert_eq!(AnalyticField::from_json(&json).unwrap(), f);
    }
}
