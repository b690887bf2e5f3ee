//! Bilipschitz vertex maps between sphere meshes of equal combinatorics.

use std::sync::Arc;

use super::cochain::TwoCochain;
use super::mesh::{SphereMesh, Vec3};
use crate::error::{domain, Result};

/// A piecewise map `source -> target` given by vertex images.
///
/// `lipschitz` bounds the stretching of the map and `lipschitz_inv` that of
/// its inverse. Both are estimated from per-edge length ratios; the inverse
/// constant also covers the square root of the per-face area ratio so that
/// the area distortion of the simplicial map is bounded by `lipschitz_inv^2`.
#[derive(Debug, Clone)]
pub struct VertexMap {
    source: Arc<SphereMesh>,
    target: Arc<SphereMesh>,
    lipschitz: f64,
    lipschitz_inv: f64,
}

impl VertexMap {
    pub fn new(source: Arc<SphereMesh>, target: Arc<SphereMesh>) -> Result<Self> {
        if source.faces() != target.faces() {
            return Err(domain("vertex map requires meshes with identical combinatorics"));
        }
        let mut lip = 0.0f64;
        let mut lip_inv = 0.0f64;
        for (ls, lt) in source.edge_lengths().iter().zip(target.edge_lengths()) {
            lip = lip.max(lt / ls);
            lip_inv = lip_inv.max(ls / lt);
        }
        for (a_s, a_t) in source.face_areas().iter().zip(target.face_areas()) {
            lip = lip.max((a_t / a_s).sqrt());
            lip_inv = lip_inv.max((a_s / a_t).sqrt());
        }
        Ok(Self { source, target, lipschitz: lip, lipschitz_inv: lip_inv })
    }

    pub fn identity(mesh: Arc<SphereMesh>) -> Self {
        Self { source: mesh.clone(), target: mesh, lipschitz: 1.0, lipschitz_inv: 1.0 }
    }

    /// Radial projection of the ellipsoid with semi-axes `axes`:
    /// `x -> A x / |A x|`.
    pub fn ellipsoid(source: Arc<SphereMesh>, axes: Vec3) -> Result<Self> {
        let verts = source
            .vertices()
            .iter()
            .map(|v| v.component_mul(&axes).normalize())
            .collect();
        let target = Arc::new(source.with_vertices(verts)?);
        Self::new(source, target)
    }

    pub fn source(&self) -> &Arc<SphereMesh> {
        &self.source
    }
    pub fn target(&self) -> &Arc<SphereMesh> {
        &self.target
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn lipschitz_inv(&self) -> f64 {
        self.lipschitz_inv
    }

    /// Equivalence constant `L * L_inv^(2/p)` between the distance on the
    /// target and its pullback.
    pub fn equivalence_constant(&self, p: f64) -> f64 {
        self.lipschitz * self.lipschitz_inv.powf(2.0 / p)
    }

    /// Pulls a 2-cochain on the target back to the source. Face integrals are
    /// carried through the combinatorial identification unchanged.
    pub fn pullback(&self, c: &TwoCochain) -> Result<TwoCochain> {
        if !c.mesh().same_as(&self.target) {
            return Err(domain("cochain does not live on the target mesh of the map"));
        }
        TwoCochain::new(self.source.clone(), c.values().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pullback() {
        let m = Arc::new(SphereMesh::icosphere(2).unwrap());
        let psi = VertexMap::identity(m.clone());
        let c = TwoCochain::from_density(m, |x| x.x + 2.0 * x.z);
        assert_eq!(psi.pullback(&c).unwrap().values(), c.values());
    }

    #[test]
    fn ellipsoid_constant_norm_ratio() {
        let m = Arc::new(SphereMesh::icosphere(3).unwrap());
        let psi = VertexMap::ellipsoid(m, Vec3::new(1.5, 1.0, 1.0)).unwrap();
        let p = 1.25;
        let c = TwoCochain::constant(psi.target().clone(), 1.0);
        let back = psi.pullback(&c).unwrap();
        assert!((back.degree() - c.degree()).abs() < 1e-12);
        let ratio = back.lp_norm(p).unwrap() / c.lp_norm(p).unwrap();
        // per-face oracle: the density scales by the area ratio
        let k = psi.equivalence_constant(p);
        assert!(ratio <= k && ratio >= 1.0 / k, "{ratio} vs {k}");
        assert!(psi.lipschitz() > 1.0 && psi.lipschitz_inv() > 1.0);
    }

    #[test]
    fn mismatched_mesh_rejected() {
        let m = Arc::new(SphereMesh::icosphere(2).unwrap());
        let psi = VertexMap::ellipsoid(m.clone(), Vec3::new(1.5, 1.0, 1.0)).unwrap();
        let c = TwoCochain::constant(m, 1.0);
        assert!(psi.pullback(&c).is_err());
    }
}
