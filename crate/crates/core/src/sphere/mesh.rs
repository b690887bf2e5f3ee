//! Triangulated unit sphere with the geometric data needed by the discrete
//! exterior calculus: spherical face areas, geodesic edge lengths, diamond
//! areas and the oriented dual graph.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::linalg::Network;

pub type Vec3 = Vector3<f64>;

/// Largest subdivision level accepted by [`SphereMesh::icosphere`].
pub const MAX_LEVEL: u32 = 8;

#[derive(Debug, Clone)]
pub struct SphereMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    /// Canonical edges `(i, j)` with `i < j`.
    edges: Vec<[usize; 2]>,
    /// For each face, its three edges and the sign (+1 when the face boundary
    /// runs along the canonical orientation).
    face_edges: Vec<[(usize, f64); 3]>,
    /// `[left, right]` faces of each edge; the left face traverses it `i -> j`.
    edge_faces: Vec<[usize; 2]>,
    face_areas: Vec<f64>,
    edge_lengths: Vec<f64>,
    diamond_areas: Vec<f64>,
    centroids: Vec<Vec3>,
    dual: Network,
    level: u32,
    hash: String,
}

impl SphereMesh {
    /// Icosahedron subdivided `level` times, vertices projected to the sphere.
    pub fn icosphere(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::ResourceLimit(format!(
                "icosphere level {level} exceeds the limit {MAX_LEVEL}"
            )));
        }
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, vs: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    vs.push((vs[a] + vs[b]).normalize());
                    vs.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for &[a, b, c] in &faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        Self::from_parts(vertices, faces, level)
    }

    /// Builds a mesh from unit vertices and outward-oriented faces.
    pub fn from_parts(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, level: u32) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(domain(format!("vertex {i} is not on the unit sphere")));
            }
        }
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            let mut fe = [(0usize, 0.0f64); 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    left.push(usize::MAX);
                    right.push(usize::MAX);
                    edges.len() - 1
                });
                let sign = if a < b { 1.0 } else { -1.0 };
                let slot = if sign > 0.0 { &mut left[e] } else { &mut right[e] };
                if *slot != usize::MAX {
                    return Err(domain(format!("edge ({a}, {b}) is not manifold")));
                }
                *slot = fi;
                fe[k] = (e, sign);
            }
            face_edges.push(fe);
        }
        if left.iter().chain(&right).any(|&f| f == usize::MAX) {
            return Err(domain("mesh has boundary edges"));
        }
        let edge_faces: Vec<[usize; 2]> = left.iter().zip(&right).map(|(&l, &r)| [l, r]).collect();

        let face_areas: Vec<f64> = faces
            .iter()
            .map(|&[a, b, c]| spherical_triangle_area(&vertices[a], &vertices[b], &vertices[c]))
            .collect();
        if let Some(i) = face_areas.iter().position(|&a| a <= 0.0) {
            return Err(domain(format!("face {i} is degenerate or inverted")));
        }
        let edge_lengths = edges
            .iter()
            .map(|&[a, b]| geodesic(&vertices[a], &vertices[b]))
            .collect();
        let diamond_areas = edge_faces
            .iter()
            .map(|&[l, r]| (face_areas[l] + face_areas[r]) / 3.0)
            .collect();
        let centroids = faces
            .iter()
            .map(|&[a, b, c]| (vertices[a] + vertices[b] + vertices[c]).normalize())
            .collect();
        let arcs: Vec<(usize, usize)> = edge_faces.iter().map(|&[l, r]| (l, r)).collect();
        let dual = Network::new(faces.len(), &arcs);
        let hash = mesh_hash(&vertices, &faces);
        Ok(Self {
            vertices,
            faces,
            edges,
            face_edges,
            edge_faces,
            face_areas,
            edge_lengths,
            diamond_areas,
            centroids,
            dual,
            level,
            hash,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn face_edges(&self) -> &[[(usize, f64); 3]] {
        &self.face_edges
    }
    pub fn edge_faces(&self) -> &[[usize; 2]] {
        &self.edge_faces
    }
    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }
    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }
    pub fn diamond_areas(&self) -> &[f64] {
        &self.diamond_areas
    }
    /// Face centroids projected to the sphere.
    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }
    /// Dual graph: one node per face, one arc per edge (left face to right face).
    pub fn dual(&self) -> &Network {
        &self.dual
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    /// Hex SHA-256 of the vertex coordinates and face indices.
    pub fn hash(&self) -> &str {
        &self.hash
    }
    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
    pub fn mean_edge_length(&self) -> f64 {
        self.edge_lengths.iter().sum::<f64>() / self.edges.len() as f64
    }

    /// Dual edge length `2 A_e / l_e`, the Hodge ratio paired with the
    /// diamond area of edge `e`.
    pub fn dual_length(&self, e: usize) -> f64 {
        2.0 * self.diamond_areas[e] / self.edge_lengths[e]
    }

    /// Same combinatorics, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(domain("vertex count mismatch"));
        }
        Self::from_parts(vertices, self.faces.clone(), self.level)
    }

    pub fn same_as(&self, other: &SphereMesh) -> bool {
        std::ptr::eq(self, other) || self.hash == other.hash
    }

    /// Writes the mesh in OFF format.
    pub fn write_off<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} {}", self.vertices.len(), self.faces.len(), self.edges.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }

    pub fn save_off(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_off(std::io::BufWriter::new(f))
    }

    /// Reads an OFF mesh. Vertices are renormalized to the unit sphere when
    /// they are within 1e-9 of it (text round-off).
    pub fn read_off<R: BufRead>(r: R, level: u32) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| it.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
        if next("header")? != "OFF" {
            return Err(Error::Parse("expected OFF header".into()));
        }
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let parse_f64 = |s: String| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let nv = parse_usize(next("vertex count")?)?;
        let nf = parse_usize(next("face count")?)?;
        let _ne = next("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let v = Vec3::new(
                parse_f64(next("x")?)?,
                parse_f64(next("y")?)?,
                parse_f64(next("z")?)?,
            );
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(domain("OFF vertex is not on the unit sphere"));
            }
            vertices.push(v.normalize());
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            if parse_usize(next("face arity")?)? != 3 {
                return Err(Error::Parse("only triangular faces are supported".into()));
            }
            let f = [
                parse_usize(next("index")?)?,
                parse_usize(next("index")?)?,
                parse_usize(next("index")?)?,
            ];
            if f.iter().any(|&i| i >= nv) {
                return Err(Error::Parse("face index out of range".into()));
            }
            faces.push(f);
        }
        Self::from_parts(vertices, faces, level)
    }

    pub fn load_off(path: impl AsRef<Path>, level: u32) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_off(std::io::BufReader::new(f), level)
    }
}

/// Area of the spherical triangle `abc` (positive for counterclockwise
/// orientation seen from outside).
pub fn spherical_triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    solid_angle(a, b, c)
}

/// Signed solid angle of the flat triangle `abc` seen from the origin
/// (Van Oosterom–Strackee).
pub fn solid_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    2.0 * num.atan2(den)
}

pub fn geodesic(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn mesh_hash(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut h = Sha256::new();
    for v in vertices {
        for c in v.iter() {
            h.update(c.to_le_bytes());
        }
    }
    for f in faces {
        for &i in f {
            h.update((i as u64).to_le_bytes());
        }
    }
    let mut s = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn icosahedron_counts() {
        let m = SphereMesh::icosphere(0).unwrap();
        assert_eq!((m.vertices().len(), m.n_edges(), m.n_faces()), (12, 30, 20));
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn level_two_area() {
        let m = SphereMesh::icosphere(2).unwrap();
        assert_eq!(m.n_faces(), 320);
        // independent oracle: l'Huilier's theorem per face
        let lhuilier: f64 = m
            .faces()
            .iter()
            .map(|&[a, b, c]| {
                let v = m.vertices();
                let (x, y, z) = (geodesic(&v[b], &v[c]), geodesic(&v[c], &v[a]), geodesic(&v[a], &v[b]));
                let s = (x + y + z) / 2.0;
                let t = ((s / 2.0).tan()
                    * ((s - x) / 2.0).tan()
                    * ((s - y) / 2.0).tan()
                    * ((s - z) / 2.0).tan())
                .sqrt();
                4.0 * t.atan()
            })
            .sum();
        assert!((lhuilier - 4.0 * PI).abs() < 1e-3);
        assert!((m.total_area() - 4.0 * PI).abs() < 1e-3);
        assert!((m.total_area() - lhuilier).abs() < 1e-9);
    }

    #[test]
    fn level_four_invariants() {
        let m = SphereMesh::icosphere(4).unwrap();
        assert_eq!(m.n_faces(), 5120);
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.total_area() - 4.0 * PI).abs() < 1e-6);
        assert!(m.dual().is_connected());
        assert!(m.vertices().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let diamonds: f64 = m.diamond_areas().iter().sum();
        assert!((diamonds - 4.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn level_guard() {
        assert!(matches!(SphereMesh::icosphere(9), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn off_round_trip() {
        let m = SphereMesh::icosphere(1).unwrap();
        let mut buf = Vec::new();
        m.write_off(&mut buf).unwrap();
        let back = SphereMesh::read_off(std::io::Cursor::new(buf), 1).unwrap();
        assert_eq!(back.faces(), m.faces());
        assert!((back.total_area() - m.total_area()).abs() < 1e-12);
    }

    #[test]
    fn edge_orientation_is_consistent() {
        let m = SphereMesh::icosphere(2).unwrap();
        for (e, &[l, r]) in m.edge_faces().iter().enumerate() {
            let sl = m.face_edges()[l].iter().find(|x| x.0 == e).unwrap().1;
            let sr = m.face_edges()[r].iter().find(|x| x.0 == e).unwrap().1;
            assert_eq!((sl, sr), (1.0, -1.0));
        }
    }
}
