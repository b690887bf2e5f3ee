//! Discrete 2-forms (face integrals) and 1-forms (edge fluxes) on a sphere mesh.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::mesh::SphereMesh;
use crate::error::{domain, Error, Result};

/// Mean of `|cos θ|^p` over the circle.
///
/// An edge flux only sees the normal component of the underlying tangent
/// field, so the diamond quadrature of `|α_e / l_e|^p` must be divided by
/// this factor to reproduce the full `L^p` norm of an isotropically sampled
/// smooth 1-form. At `p = 2` it equals 1/2 and the edge weight becomes the
/// DEC Hodge star `l_e * dual_length_e`.
pub fn direction_factor(p: f64) -> f64 {
    gamma((p + 1.0) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(p / 2.0 + 1.0))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(domain(format!("exponent p = {p} must exceed 1")));
    }
    Ok(())
}

/// A 2-form on the sphere, stored as its integral over each face.
#[derive(Debug, Clone)]
pub struct TwoCochain {
    mesh: Arc<SphereMesh>,
    values: Vec<f64>,
}

impl TwoCochain {
    pub fn new(mesh: Arc<SphereMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_faces() {
            return Err(domain(format!(
                "{} face values for a mesh with {} faces",
                values.len(),
                mesh.n_faces()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<SphereMesh>) -> Self {
        let n = mesh.n_faces();
        Self { mesh, values: vec![0.0; n] }
    }

    /// Face integrals of a density given pointwise, sampled at the centroid.
    pub fn from_density(mesh: Arc<SphereMesh>, density: impl Fn(&super::Vec3) -> f64) -> Self {
        let values = mesh
            .centroids()
            .iter()
            .zip(mesh.face_areas())
            .map(|(c, a)| density(c) * a)
            .collect();
        Self { mesh, values }
    }

    /// Constant density `degree / 4π`.
    pub fn constant(mesh: Arc<SphereMesh>, degree: f64) -> Self {
        let total = mesh.total_area();
        let values = mesh.face_areas().iter().map(|a| degree * a / total).collect();
        Self { mesh, values }
    }

    /// Unit charge concentrated on a single face.
    pub fn spike(mesh: Arc<SphereMesh>, face: usize, weight: f64) -> Self {
        let mut c = Self::zeros(mesh);
        c.values[face] = weight;
        c
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
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

    /// Total integral.
    pub fn degree(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn density(&self, face: usize) -> f64 {
        self.values[face] / self.mesh.face_areas()[face]
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.values.len()).map(|f| self.density(f)).collect()
    }

    /// `(Σ_f |v_f / A_f|^p A_f)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        Ok(self.lp_power(p).powf(1.0 / p))
    }

    /// `Σ_f |v_f / A_f|^p A_f`, optionally restricted to a face subset.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(self.mesh.face_areas())
            .map(|(v, a)| (v / a).abs().powf(p) * a)
            .sum()
    }

    /// `∫ h φ` with `φ` sampled at face centroids.
    pub fn pair(&self, test: impl Fn(&super::Vec3) -> f64) -> f64 {
        self.values
            .iter()
            .zip(self.mesh.centroids())
            .map(|(v, c)| v * test(c))
            .sum()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if !self.mesh.same_as(&other.mesh) {
            return Err(domain("cochains live on different meshes"));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mesh: self.mesh.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// Writes `face_id,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "face_id,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mesh: Arc<SphereMesh>, r: R) -> Result<Self> {
        let mut values = vec![f64::NAN; mesh.n_faces()];
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("face_id")) {
                continue;
            }
            let (id, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected face_id,value", n + 1)))?;
            let id: usize = id.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            let v: f64 = v.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            if id >= values.len() {
                return Err(Error::Parse(format!("face id {id} out of range")));
            }
            values[id] = v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse(format!("missing value for face {i}")));
        }
        Self::new(mesh, values)
    }

    pub fn sidecar(&self, p: Option<f64>) -> CochainSidecar {
        CochainSidecar {
            mesh_hash: self.mesh.hash().to_owned(),
            level: self.mesh.level(),
            n_faces: self.values.len(),
            p,
            degree: self.degree(),
        }
    }

    /// Writes `<path>` as CSV and `<path>.json` as the sidecar.
    pub fn save(&self, path: impl AsRef<Path>, p: Option<f64>) -> Result<()> {
        let path = path.as_ref();
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        let side = sidecar_path(path);
        std::fs::write(side, serde_json::to_string_pretty(&self.sidecar(p))?)?;
        Ok(())
    }

    /// Loads a CSV cochain; when a sidecar exists its mesh hash must match.
    pub fn load(mesh: Arc<SphereMesh>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        if side.exists() {
            let meta: CochainSidecar = serde_json::from_str(&std::fs::read_to_string(&side)?)?;
            if meta.mesh_hash != mesh.hash() {
                return Err(domain(format!("{} was written for a different mesh", path.display())));
            }
        }
        Self::read_csv(mesh, std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Metadata written next to a cochain CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CochainSidecar {
    pub mesh_hash: String,
    pub level: u32,
    pub n_faces: usize,
    pub p: Option<f64>,
    pub degree: f64,
}

/// A 1-form stored as the flux across each edge, i.e. a flow on the dual
/// graph from the left face to the right face of the edge.
#[derive(Debug, Clone)]
pub struct OneFormCochain {
    mesh: Arc<SphereMesh>,
    values: Vec<f64>,
}

impl OneFormCochain {
    pub fn new(mesh: Arc<SphereMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_edges() {
            return Err(domain("edge value count does not match the mesh"));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<SphereMesh>) -> Self {
        let n = mesh.n_edges();
        Self { mesh, values: vec![0.0; n] }
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Net outflow of the flow from each face.
    pub fn codifferential(&self) -> TwoCochain {
        TwoCochain { mesh: self.mesh.clone(), values: self.mesh.dual().divergence(&self.values) }
    }

    /// `(Σ_e |α_e / l_e|^p A_e / c_p)^{1/p}` with diamond areas `A_e` and
    /// the direction factor `c_p`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let w = edge_weights(&self.mesh, p);
        let s: f64 = self
            .values
            .iter()
            .zip(self.mesh.edge_lengths())
            .zip(&w)
            .map(|((a, l), w)| (a / l).abs().powf(p) * w)
            .sum();
        Ok(s.powf(1.0 / p))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mesh: self.mesh.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "edge_id,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Quadrature weights `A_e / c_p` of the edge `L^p` rule.
pub fn edge_weights(mesh: &SphereMesh, p: f64) -> Vec<f64> {
    let c = direction_factor(p);
    mesh.diamond_areas().iter().map(|a| a / c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mesh(level: u32) -> Arc<SphereMesh> {
        Arc::new(SphereMesh::icosphere(level).unwrap())
    }

    #[test]
    fn direction_factor_values() {
        assert!((direction_factor(2.0) - 0.5).abs() < 1e-14);
        // mean of |cos| is 2/π
        assert!((direction_factor(1.0) - 2.0 / PI).abs() < 1e-14);
        // trapezoid oracle on the periodic integrand
        let n = 200_000;
        let avg: f64 = (0..n)
            .map(|i| ((i as f64 + 0.5) * 2.0 * PI / n as f64).cos().abs().powf(1.25))
            .sum::<f64>()
            / n as f64;
        assert!((direction_factor(1.25) - avg).abs() < 1e-8);
    }

    #[test]
    fn constant_density_norm() {
        let m = mesh(3);
        let h = TwoCochain::constant(m, 1.0);
        let p = 1.25;
        let expected = (4.0 * PI).powf(1.0 - p).powf(1.0 / p);
        assert!((h.lp_norm(p).unwrap() - expected).abs() < 1e-12);
        // (4π)^{-1/5}
        assert!((h.lp_norm(p).unwrap() - 0.6025).abs() < 1e-3);
        assert!(((4.0 * PI).powf(1.0 - p) - 0.5312).abs() < 1e-4);
    }

    #[test]
    fn zero_and_homogeneity() {
        let m = mesh(2);
        let z = TwoCochain::zeros(m.clone());
        assert_eq!(z.lp_norm(1.5).unwrap(), 0.0);
        let h = TwoCochain::from_density(m.clone(), |x| x.z + 0.3 * x.x * x.y);
        let n = h.lp_norm(1.3).unwrap();
        assert!((h.scaled(-2.5).lp_norm(1.3).unwrap() - 2.5 * n).abs() < 1e-12 * n);
        assert!(matches!(h.lp_norm(1.0), Err(Error::Domain(_))));
        let a = OneFormCochain::zeros(m);
        assert_eq!(a.lp_norm(1.2).unwrap(), 0.0);
    }

    #[test]
    fn codifferential_has_zero_degree() {
        let m = mesh(3);
        let vals: Vec<f64> = (0..m.n_edges()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let a = OneFormCochain::new(m, vals).unwrap();
        assert!(a.codifferential().degree().abs() <= 1e-14 * a.values().len() as f64);
    }

    #[test]
    fn csv_round_trip_with_sidecar() {
        let m = mesh(1);
        let h = TwoCochain::from_density(m.clone(), |x| x.x);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        h.save(&path, Some(1.25)).unwrap();
        let back = TwoCochain::load(m, &path).unwrap();
        assert_eq!(back.values(), h.values());
        let other = mesh(2);
        assert!(TwoCochain::load(other, &path).is_err());
    }
}
