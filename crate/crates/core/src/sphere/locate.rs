//! Point location on a sphere mesh.

use std::sync::Arc;

use super::mesh::{SphereMesh, Vec3};

/// Bucketed face lookup over a longitude/latitude grid.
#[derive(Debug, Clone)]
pub struct FaceLocator {
    mesh: Arc<SphereMesh>,
    n_lat: usize,
    n_lon: usize,
    buckets: Vec<Vec<u32>>,
}

impl FaceLocator {
    pub fn new(mesh: Arc<SphereMesh>) -> Self {
        let n_lat = ((mesh.n_faces() as f64).sqrt() / 2.0).ceil().max(4.0) as usize;
        let n_lon = 2 * n_lat;
        let mut buckets = vec![Vec::new(); n_lat * n_lon];
        let verts = mesh.vertices();
        for (f, tri) in mesh.faces().iter().enumerate() {
            // register the face in every bucket touched by its vertices or centroid
            let mut cells: Vec<usize> = tri
                .iter()
                .map(|&v| bucket(&verts[v], n_lat, n_lon))
                .chain(std::iter::once(bucket(&mesh.centroids()[f], n_lat, n_lon)))
                .collect();
            cells.sort_unstable();
            cells.dedup();
            for c in cells {
                buckets[c].push(f as u32);
            }
        }
        Self { mesh, n_lat, n_lon, buckets }
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }

    /// Face containing the direction `x` (need not be normalized).
    pub fn locate(&self, x: &Vec3) -> usize {
        let x = x.normalize();
        let (i, j) = lat_lon(&x, self.n_lat, self.n_lon);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for di in -1i64..=1 {
            let ii = i as i64 + di;
            if ii < 0 || ii >= self.n_lat as i64 {
                continue;
            }
            for dj in -1i64..=1 {
                let jj = (j as i64 + dj).rem_euclid(self.n_lon as i64) as usize;
                for &f in &self.buckets[ii as usize * self.n_lon + jj] {
                    let m = self.inside_margin(f as usize, &x);
                    if m >= 0.0 {
                        return f as usize;
                    }
                    if m > best.0 {
                        best = (m, f as usize);
                    }
                }
            }
        }
        // polar caps and bucket seams: fall back to the exhaustive search
        let mut best_all = best;
        for f in 0..self.mesh.n_faces() {
            let m = self.inside_margin(f, &x);
            if m >= 0.0 {
                return f;
            }
            if m > best_all.0 {
                best_all = (m, f);
            }
        }
        best_all.1
    }

    fn inside_margin(&self, f: usize, x: &Vec3) -> f64 {
        let v = self.mesh.vertices();
        let [a, b, c] = self.mesh.faces()[f];
        let (a, b, c) = (v[a], v[b], v[c]);
        if x.dot(&(a + b + c)) <= 0.0 {
            return f64::NEG_INFINITY;
        }
        a.cross(&b).dot(x).min(b.cross(&c).dot(x)).min(c.cross(&a).dot(x))
    }
}

fn lat_lon(x: &Vec3, n_lat: usize, n_lon: usize) -> (usize, usize) {
    let theta = x.z.clamp(-1.0, 1.0).acos();
    let phi = x.y.atan2(x.x) + std::f64::consts::PI;
    let i = ((theta / std::f64::consts::PI) * n_lat as f64).floor() as usize;
    let j = ((phi / (2.0 * std::f64::consts::PI)) * n_lon as f64).floor() as usize;
    (i.min(n_lat - 1), j % n_lon)
}

fn bucket(x: &Vec3, n_lat: usize, n_lon: usize) -> usize {
    let (i, j) = lat_lon(x, n_lat, n_lon);
    i * n_lon + j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroids_locate_to_their_faces() {
        let m = Arc::new(SphereMesh::icosphere(3).unwrap());
        let loc = FaceLocator::new(m.clone());
        for (f, c) in m.centroids().iter().enumerate() {
            assert_eq!(loc.locate(c), f);
        }
    }
}
