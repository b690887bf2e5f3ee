//! Staggered-grid fields: one flux per cell face.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AnalyticField, Ball, VectorField};
use crate::error::{domain, Error, Result};
use crate::linalg::gauss_legendre01;
use crate::sphere::mesh::{solid_angle, spherical_triangle_area};
use crate::sphere::{SphereMesh, TwoCochain, Vec3};

/// Largest number of cells we agree to allocate.
pub const MAX_CELLS: usize = 256 * 256 * 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCharge {
    pub cell: [usize; 3],
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dims: [usize; 3],
    pub spacing: f64,
    /// Lower corner of the box.
    pub origin: [f64; 3],
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub charges: Vec<GridCharge>,
    #[serde(default)]
    pub provenance: String,
}

/// Cubic staggered grid. `fx[i, j, k]` is the flux in the `+x` direction
/// through the face `x = origin.x + i h` of cell `(i, j, k)`, and similarly
/// for `fy`, `fz`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    header: GridHeader,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fz: Vec<f64>,
}

impl GridField {
    pub fn zeros(dims: [usize; 3], spacing: f64, origin: Vec3) -> Result<Self> {
        let cells = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        match cells {
            Some(0) => return Err(domain("grid needs at least one cell per axis")),
            Some(n) if n <= MAX_CELLS => {}
            _ => return Err(Error::ResourceLimit(format!("grid {dims:?} exceeds {MAX_CELLS} cells"))),
        }
        if !(spacing > 0.0) {
            return Err(domain("grid spacing must be positive"));
        }
        let [nx, ny, nz] = dims;
        Ok(Self {
            header: GridHeader {
                dims,
                spacing,
                origin: [origin.x, origin.y, origin.z],
                p: None,
                charges: Vec::new(),
                provenance: String::new(),
            },
            fx: vec![0.0; (nx + 1) * ny * nz],
            fy: vec![0.0; nx * (ny + 1) * nz],
            fz: vec![0.0; nx * ny * (nz + 1)],
        })
    }

    /// `n^3` cells of size `h` centered so that the origin is a cell center
    /// (odd `n`) or a vertex (even `n`).
    pub fn centered_cube(n: usize, h: f64) -> Result<Self> {
        let o = -0.5 * n as f64 * h;
        Self::zeros([n; 3], h, Vec3::new(o, o, o))
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }
    pub fn dims(&self) -> [usize; 3] {
        self.header.dims
    }
    pub fn spacing(&self) -> f64 {
        self.header.spacing
    }
    pub fn origin(&self) -> Vec3 {
        Vec3::from(self.header.origin)
    }
    pub fn charges(&self) -> &[GridCharge] {
        &self.header.charges
    }
    pub fn set_charges(&mut self, charges: Vec<GridCharge>) {
        self.header.charges = charges;
    }
    pub fn set_p(&mut self, p: Option<f64>) {
        self.header.p = p;
    }
    pub fn set_provenance(&mut self, s: impl Into<String>) {
        self.header.provenance = s.into();
    }
    pub fn fluxes(&self) -> [&[f64]; 3] {
        [&self.fx, &self.fy, &self.fz]
    }
    pub fn fluxes_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.fx, &mut self.fy, &mut self.fz]
    }

    pub fn ix(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.header.dims;
        i + (nx + 1) * (j + ny * k)
    }
    pub fn iy(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.header.dims;
        i + nx * (j + (ny + 1) * k)
    }
    pub fn iz(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.header.dims;
        i + nx * (j + ny * k)
    }
    pub fn cell_index(&self, [i, j, k]: [usize; 3]) -> usize {
        let [nx, ny, _] = self.header.dims;
        i + nx * (j + ny * k)
    }
    pub fn n_cells(&self) -> usize {
        self.header.dims.iter().product()
    }

    pub fn cell_center(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        self.origin() + self.header.spacing * Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5)
    }

    /// Cell containing `y`, if inside the box.
    pub fn cell_of(&self, y: &Vec3) -> Option<[usize; 3]> {
        let t = (y - self.origin()) / self.header.spacing;
        let mut c = [0usize; 3];
        for a in 0..3 {
            if !(t[a] >= 0.0) || t[a] >= self.header.dims[a] as f64 {
                return None;
            }
            c[a] = t[a] as usize;
        }
        Some(c)
    }

    pub fn contains_ball(&self, x: &Vec3, r: f64) -> bool {
        let lo = self.origin();
        (0..3).all(|a| {
            x[a] - r >= lo[a] && x[a] + r <= lo[a] + self.header.dims[a] as f64 * self.header.spacing
        })
    }

    /// Net outflow of cell `(i, j, k)`.
    pub fn divergence(&self, [i, j, k]: [usize; 3]) -> f64 {
        self.fx[self.ix(i + 1, j, k)] - self.fx[self.ix(i, j, k)] + self.fy[self.iy(i, j + 1, k)]
            - self.fy[self.iy(i, j, k)]
            + self.fz[self.iz(i, j, k + 1)]
            - self.fz[self.iz(i, j, k)]
    }

    /// Stored charge per cell, flattened with [`GridField::cell_index`].
    pub fn charge_density(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.n_cells()];
        for c in &self.header.charges {
            q[self.cell_index(c.cell)] += c.charge;
        }
        q
    }

    /// Largest `|div - charge|` over all cells.
    pub fn divergence_defect(&self) -> f64 {
        let q = self.charge_density();
        let [nx, ny, nz] = self.header.dims;
        let mut worst = 0.0f64;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = [i, j, k];
                    worst = worst.max((self.divergence(c) - q[self.cell_index(c)]).abs());
                }
            }
        }
        worst
    }

    /// Outward flux through the boundary of the cell box `lo <= c < hi`.
    pub fn box_flux(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<f64> {
        let d = self.header.dims;
        if (0..3).any(|a| lo[a] >= hi[a] || hi[a] > d[a]) {
            return Err(domain(format!("invalid cell box {lo:?}..{hi:?}")));
        }
        let mut s = 0.0;
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                s += self.fx[self.ix(hi[0], j, k)] - self.fx[self.ix(lo[0], j, k)];
            }
        }
        for k in lo[2]..hi[2] {
            for i in lo[0]..hi[0] {
                s += self.fy[self.iy(i, hi[1], k)] - self.fy[self.iy(i, lo[1], k)];
            }
        }
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                s += self.fz[self.iz(i, j, hi[2])] - self.fz[self.iz(i, j, lo[2])];
            }
        }
        Ok(s)
    }

    /// Stored charge in the cell box `lo <= c < hi`.
    pub fn box_charge(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        self.header
            .charges
            .iter()
            .filter(|c| (0..3).all(|a| c.cell[a] >= lo[a] && c.cell[a] < hi[a]))
            .map(|c| c.charge)
            .sum()
    }

    /// Exact face fluxes of an analytic field: monopoles through solid
    /// angles, smooth terms through edge integrals of their potentials.
    /// Both are exactly conservative, so the discrete divergence equals the
    /// enclosed charge to round-off.
    pub fn rasterize(field: &AnalyticField, dims: [usize; 3], spacing: f64, origin: Vec3) -> Result<Self> {
        let mut g = Self::zeros(dims, spacing, origin)?;
        let h = spacing;
        let mut charges: Vec<GridCharge> = Vec::new();
        for c in &field.charges {
            let t = (c.center() - origin) / h;
            if (0..3).any(|a| (t[a] - t[a].round()).abs() < 1e-9) {
                return Err(Error::DegenerateSlice(format!(
                    "charge at {:?} lies on a cell face",
                    c.center
                )));
            }
            if let Some(cell) = g.cell_of(&c.center()) {
                match charges.iter_mut().find(|q| q.cell == cell) {
                    Some(q) => q.charge += c.charge,
                    None => charges.push(GridCharge { cell, charge: c.charge }),
                }
            }
        }
        g.header.charges = charges;
        let [nx, ny, nz] = dims;
        let corner = |i: usize, j: usize, k: usize| origin + h * Vec3::new(i as f64, j as f64, k as f64);
        let square = |q: [Vec3; 4]| -> f64 {
            field
                .charges
                .iter()
                .map(|c| {
                    let p = c.center();
                    let (a, b, cc, d) = (q[0] - p, q[1] - p, q[2] - p, q[3] - p);
                    c.charge / (4.0 * PI) * (solid_angle(&a, &b, &cc) + solid_angle(&a, &cc, &d))
                })
                .sum()
        };
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..=nx {
                    let q = [corner(i, j, k), corner(i, j + 1, k), corner(i, j + 1, k + 1), corner(i, j, k + 1)];
                    let idx = g.ix(i, j, k);
                    g.fx[idx] = square(q);
                }
            }
        }
        for k in 0..nz {
            for j in 0..=ny {
                for i in 0..nx {
                    let q = [corner(i, j, k), corner(i, j, k + 1), corner(i + 1, j, k + 1), corner(i + 1, j, k)];
                    let idx = g.iy(i, j, k);
                    g.fy[idx] = square(q);
                }
            }
        }
        for k in 0..=nz {
            for j in 0..ny {
                for i in 0..nx {
                    let q = [corner(i, j, k), corner(i + 1, j, k), corner(i + 1, j + 1, k), corner(i, j + 1, k)];
                    let idx = g.iz(i, j, k);
                    g.fz[idx] = square(q);
                }
            }
        }
        if !field.smooth.is_empty() {
            g.add_smooth_fluxes(field, &corner);
        }
        g.header.provenance = "rasterized analytic field".into();
        Ok(g)
    }

    fn add_smooth_fluxes(&mut self, field: &AnalyticField, corner: &dyn Fn(usize, usize, usize) -> Vec3) {
        let [nx, ny, nz] = self.header.dims;
        let h = self.header.spacing;
        let gl = gauss_legendre01(8);
        let line = |a: Vec3, axis: usize| -> f64 {
            gl.iter()
                .map(|&(t, w)| {
                    let mut y = a;
                    y[axis] += t * h;
                    w * h * field.smooth.iter().map(|s| s.potential(&y)[axis]).sum::<f64>()
                })
                .sum()
        };
        // edge integrals along +x, +y, +z from each grid vertex
        let ex_idx = |i: usize, j: usize, k: usize| i + nx * (j + (ny + 1) * k);
        let ey_idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + ny * k);
        let ez_idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
        let mut ex = vec![0.0; nx * (ny + 1) * (nz + 1)];
        let mut ey = vec![0.0; (nx + 1) * ny * (nz + 1)];
        let mut ez = vec![0.0; (nx + 1) * (ny + 1) * nz];
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    let a = corner(i, j, k);
                    if i < nx {
                        ex[ex_idx(i, j, k)] = line(a, 0);
                    }
                    if j < ny {
                        ey[ey_idx(i, j, k)] = line(a, 1);
                    }
                    if k < nz {
                        ez[ez_idx(i, j, k)] = line(a, 2);
                    }
                }
            }
        }
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..=nx {
                    let idx = self.ix(i, j, k);
                    self.fx[idx] += ey[ey_idx(i, j, k)] + ez[ez_idx(i, j + 1, k)]
                        - ey[ey_idx(i, j, k + 1)]
                        - ez[ez_idx(i, j, k)];
                }
            }
        }
        for k in 0..nz {
            for j in 0..=ny {
                for i in 0..nx {
                    let idx = self.iy(i, j, k);
                    self.fy[idx] += ez[ez_idx(i, j, k)] + ex[ex_idx(i, j, k + 1)]
                        - ez[ez_idx(i + 1, j, k)]
                        - ex[ex_idx(i, j, k)];
                }
            }
        }
        for k in 0..=nz {
            for j in 0..ny {
                for i in 0..nx {
                    let idx = self.iz(i, j, k);
                    self.fz[idx] += ex[ex_idx(i, j, k)] + ey[ey_idx(i + 1, j, k)]
                        - ex[ex_idx(i, j + 1, k)]
                        - ey[ey_idx(i, j, k)];
                }
            }
        }
    }

    /// Corner-averaged `∫|X|^p` over one cell: the eight corner vectors
    /// combine one face flux per axis.
    pub fn cell_energy(&self, [i, j, k]: [usize; 3], p: f64) -> f64 {
        let h = self.header.spacing;
        let xs = [self.fx[self.ix(i, j, k)], self.fx[self.ix(i + 1, j, k)]];
        let ys = [self.fy[self.iy(i, j, k)], self.fy[self.iy(i, j + 1, k)]];
        let zs = [self.fz[self.iz(i, j, k)], self.fz[self.iz(i, j, k + 1)]];
        corner_energy(xs, ys, zs, h, p)
    }

    /// `∫_ball |X|^p` over the cells whose centers lie in `ball`. Charge
    /// cells get the exact energy of a point charge in a ball of the cell's
    /// volume in place of the corner quadrature of its symmetric flux.
    pub fn lp_energy(&self, ball: &Ball, p: f64) -> Result<f64> {
        if !(p > 1.0) {
            return Err(domain(format!("exponent p = {p} must exceed 1")));
        }
        let [nx, ny, nz] = self.header.dims;
        let mut e = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if ball.contains(&self.cell_center([i, j, k])) {
                        e += self.cell_energy([i, j, k], p);
                    }
                }
            }
        }
        for c in &self.header.charges {
            if ball.contains(&self.cell_center(c.cell)) {
                e += core_correction(c.charge, self.header.spacing, p);
            }
        }
        Ok(e)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * (self.fx.len() + self.fy.len() + self.fz.len()));
        for v in self.fx.iter().chain(&self.fy).chain(&self.fz) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: GridHeader = serde_json::from_str(line.trim_end())?;
        let o = Vec3::from(header.origin);
        let mut g = Self::zeros(header.dims, header.spacing, o)?;
        let n = g.fx.len() + g.fy.len() + g.fz.len();
        let mut bytes = Vec::with_capacity(8 * n);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * n {
            return Err(Error::Parse(format!("expected {} flux bytes, found {}", 8 * n, bytes.len())));
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for v in g.fx.iter_mut().chain(g.fy.iter_mut()).chain(g.fz.iter_mut()) {
            *v = vals.next().expect("length checked");
        }
        g.header = header;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

/// Corner quadrature of `|X|^p` over a cell of side `h` from its six face
/// fluxes (low, high per axis).
pub(crate) fn corner_energy(xs: [f64; 2], ys: [f64; 2], zs: [f64; 2], h: f64, p: f64) -> f64 {
    let mut s = 0.0;
    for x in xs {
        for y in ys {
            for z in zs {
                s += (x * x + y * y + z * z).powf(0.5 * p);
            }
        }
    }
    s * h.powf(3.0 - 2.0 * p) / 8.0
}

/// Exact energy of a charge `k` in the ball with the volume of a cell,
/// minus what the corner quadrature assigns to its symmetric cell fluxes.
pub(crate) fn core_correction(k: f64, h: f64, p: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if p >= 1.5 {
        return f64::INFINITY;
    }
    let rc = h * (3.0 / (4.0 * PI)).cbrt();
    let cap = (k.abs() / (4.0 * PI)).powf(p) * 4.0 * PI * rc.powf(3.0 - 2.0 * p) / (3.0 - 2.0 * p);
    let f = k / 6.0;
    cap - corner_energy([-f, f], [-f, f], [-f, f], h, p)
}

impl VectorField for GridField {
    /// Lowest-order Raviart-Thomas reconstruction: each component varies
    /// linearly between the two faces normal to it.
    fn eval(&self, y: &Vec3) -> Result<Vec3> {
        let h = self.header.spacing;
        let c = self.cell_of(y).ok_or_else(|| domain(format!("point {y:?} outside the grid")))?;
        let t = (y - self.cell_center(c)) / h + Vec3::new(0.5, 0.5, 0.5);
        let [i, j, k] = c;
        let lerp = |a: f64, b: f64, s: f64| (1.0 - s) * a + s * b;
        Ok(Vec3::new(
            lerp(self.fx[self.ix(i, j, k)], self.fx[self.ix(i + 1, j, k)], t.x),
            lerp(self.fy[self.iy(i, j, k)], self.fy[self.iy(i, j + 1, k)], t.y),
            lerp(self.fz[self.iz(i, j, k)], self.fz[self.iz(i, j, k + 1)], t.z),
        ) / (h * h))
    }

    /// Centroid rule on the four midpoint children of each face.
    fn slice(&self, x: &Vec3, r: f64, mesh: &Arc<SphereMesh>) -> Result<TwoCochain> {
        if !(r > 0.0) || !self.contains_ball(x, r) {
            return Err(domain(format!("sphere ({x:?}, {r}) leaves the grid box")));
        }
        let v = mesh.vertices();
        let mut values = Vec::with_capacity(mesh.n_faces());
        for &[a, b, c] in mesh.faces() {
            let (a, b, c) = (v[a], v[b], v[c]);
            let (ab, bc, ca) = ((a + b).normalize(), (b + c).normalize(), (c + a).normalize());
            let mut s = 0.0;
            for [p, q, w] in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                let cen = (p + q + w).normalize();
                let area = spherical_triangle_area(&p, &q, &w);
                s += area * r * r * self.eval(&(x + r * cen))?.dot(&cen);
            }
            values.push(s);
        }
        TwoCochain::new(mesh.clone(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monopole_grid(n: usize, h: f64) -> GridField {
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let o = -0.5 * n as f64 * h;
        GridField::rasterize(&f, [n; 3], h, Vec3::new(o, o, o)).unwrap()
    }

    #[test]
    fn rasterized_monopole_is_conservative() {
        let g = monopole_grid(9, 0.25);
        assert_eq!(g.charges(), &[GridCharge { cell: [4, 4, 4], charge: 1.0 }]);
        assert!(g.divergence_defect() < 1e-12);
        // symmetric charge cell: one sixth through each face
        assert!((g.fx[g.ix(5, 4, 4)] - 1.0 / 6.0).abs() < 1e-12);
        assert!((g.box_flux([0, 0, 0], [9, 9, 9]).unwrap() - 1.0).abs() < 1e-12);
        assert!(g.box_flux([0, 0, 0], [4, 9, 9]).unwrap().abs() < 1e-12);
        assert!((g.box_flux([2, 3, 4], [5, 5, 6]).unwrap() - g.box_charge([2, 3, 4], [5, 5, 6])).abs() < 1e-12);
    }

    #[test]
    fn smooth_rasterization_is_divergence_free() {
        let f = AnalyticField::smooth(super::super::SmoothTerm::Abc { amplitude: 0.7, wavenumber: 2.0 })
            .with_charge(Vec3::new(0.13, -0.21, 0.05), -2.0);
        let g = GridField::rasterize(&f, [6, 7, 5], 0.2, Vec3::new(-0.6, -0.7, -0.5)).unwrap();
        assert!(g.divergence_defect() < 1e-12);
        // face flux against a direct face quadrature of the smooth part
        let h = 0.2;
        let c = Vec3::new(-0.6 + 3.0 * h, -0.7 + 1.0 * h, -0.5 + 2.0 * h);
        let gl = gauss_legendre01(10);
        let mut q = 0.0;
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                let y = c + Vec3::new(0.0, s * h, t * h);
                q += ws * wt * h * h * f.eval(&y).unwrap().x;
            }
        }
        assert!((g.fx[g.ix(3, 1, 2)] - q).abs() < 1e-9);
    }

    #[test]
    fn monopole_energy_close_to_closed_form() {
        let p = 1.25;
        let g = monopole_grid(49, 1.0 / 23.5);
        let e = g.lp_energy(&Ball::unit(), p).unwrap();
        let exact = (4.0 * PI).powf(1.0 - p) / (3.0 - 2.0 * p);
        assert!((e / exact - 1.0).abs() < 0.05, "{e} vs {exact}");
    }

    #[test]
    fn file_round_trip_and_slice() {
        let mut g = monopole_grid(9, 0.25);
        g.set_p(Some(1.2));
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        let back = GridField::read(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        let mesh = Arc::new(SphereMesh::icosphere(2).unwrap());
        let d = g.flux(&Vec3::zeros(), 0.9, &mesh).unwrap();
        assert!((d - 1.0).abs() < 0.02, "{d}");
        assert!(g.flux(&Vec3::zeros(), 1.2, &mesh).is_err());
        assert!(matches!(
            GridField::zeros([1024, 1024, 1024], 1.0, Vec3::zeros()),
            Err(Error::ResourceLimit(_))
        ));
    }
}
