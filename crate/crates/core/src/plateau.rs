//! Boundary-constrained `L^p` minimization on the unit ball.
//!
//! The ball is voxelized on an `n³` grid over `[-1, 1]³`; the cells whose
//! centers lie in the open unit ball form the domain. Unknowns are the
//! staggered face fluxes of the domain cells. Faces between a domain cell and
//! an outside cell carry the normal trace of the boundary datum `φ`, obtained
//! by integrating `φ` over the radial projection of the face onto the sphere.
//! The inner problem is the convex flow
//!
//! `min Σ_cells E_cell(x)  s.t.  div x = charges,  boundary fluxes = φ`
//!
//! solved by the majorize-minimize flow solver of [`crate::flow`]; the outer
//! problem searches over integer charge configurations.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::grid::core_correction;
use crate::field::{restrict_to_sphere, AnalyticField, Ball, GridCharge, GridField, VectorField};
use crate::flow::{FlowEnergy, FlowOptions, FlowProblem, GapMeasure};
use crate::linalg::{linear_fit, Network};
use crate::metric::{integer_degree, slice_distance, DistanceOptions};
use crate::sphere::mesh::solid_angle;
use crate::sphere::{FaceLocator, SphereMesh, TwoCochain, Vec3};

const NONE: u32 = u32::MAX;

/// Boundary datum `φ` on the unit sphere.
#[derive(Debug, Clone)]
pub enum BoundaryData {
    /// Constant density `degree / 4π`.
    Constant(f64),
    /// Density `(3/2π) z²`, of degree 2.
    TwoLobe,
    /// A cochain on a slicing mesh, read as a piecewise constant density.
    Sampled(TwoCochain),
}

impl BoundaryData {
    pub fn degree(&self) -> f64 {
        match self {
            Self::Constant(k) => *k,
            Self::TwoLobe => 2.0,
            Self::Sampled(c) => c.degree(),
        }
    }

    /// Face integrals on `mesh`.
    pub fn to_cochain(&self, mesh: &Arc<SphereMesh>) -> Result<TwoCochain> {
        match self {
            Self::Constant(k) => Ok(TwoCochain::constant(mesh.clone(), *k)),
            Self::TwoLobe => Ok(crate::sphere::harmonics::integrate_faces(mesh, two_lobe)),
            Self::Sampled(c) => {
                if !c.mesh().same_as(mesh) {
                    return Err(domain("boundary cochain lives on a different mesh"));
                }
                Ok(c.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant(k) => format!("constant-{k}"),
            Self::TwoLobe => "two-lobe".into(),
            Self::Sampled(c) => format!("cochain:{}", c.mesh().hash()),
        }
    }
}

fn two_lobe(u: &Vec3) -> f64 {
    let z = u.z / u.norm();
    3.0 / (2.0 * std::f64::consts::PI) * z * z
}

/// Integer charges attached to grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChargeConfig3 {
    entries: Vec<([usize; 3], i64)>,
}

impl ChargeConfig3 {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Builds a configuration, merging entries on the same cell and dropping
    /// zero charges.
    pub fn from_cells(cells: &[([usize; 3], i64)]) -> Self {
        let mut c = Self::empty();
        for &(cell, q) in cells {
            c.add(cell, q);
        }
        c
    }

    pub fn add(&mut self, cell: [usize; 3], q: i64) {
        match self.entries.binary_search_by(|e| e.0.cmp(&cell)) {
            Ok(i) => {
                self.entries[i].1 += q;
                if self.entries[i].1 == 0 {
                    self.entries.remove(i);
                }
            }
            Err(i) if q != 0 => self.entries.insert(i, (cell, q)),
            Err(_) => {}
        }
    }

    pub fn entries(&self) -> &[([usize; 3], i64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> i64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn charge_at(&self, cell: [usize; 3]) -> i64 {
        self.entries.binary_search_by(|e| e.0.cmp(&cell)).map_or(0, |i| self.entries[i].1)
    }

    /// Cell centers and charges on an `n³` grid over `[-1, 1]³`.
    pub fn positions(&self, n: usize) -> Vec<(Vec3, i64)> {
        self.entries.iter().map(|&(c, q)| (cell_center(c, n), q)).collect()
    }
}

fn cell_center([i, j, k]: [usize; 3], n: usize) -> Vec3 {
    let h = 2.0 / n as f64;
    Vec3::new(-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h, -1.0 + (k as f64 + 0.5) * h)
}

/// Grid cell containing `y` on an `n³` grid over `[-1, 1]³`.
pub fn snap_to_cell(y: &Vec3, n: usize) -> Option<[usize; 3]> {
    let h = 2.0 / n as f64;
    let idx = |t: f64| {
        let s = ((t + 1.0) / h).floor();
        (s >= 0.0 && s < n as f64).then_some(s as usize)
    };
    Some([idx(y.x)?, idx(y.y)?, idx(y.z)?])
}

/// Corner-quadrature energy on the domain cells, with every face flux a
/// flow variable. Each cell contributes `h^{3-2p}/8 Σ_corners |(x_a, y_b, z_c)|^p`.
#[derive(Debug, Clone)]
struct CornerEnergy {
    p: f64,
    h: f64,
    corners: Vec<[u32; 3]>,
    n_arcs: usize,
    volume: f64,
}

impl CornerEnergy {
    fn coef(&self) -> f64 {
        self.h.powf(3.0 - 2.0 * self.p) / 8.0
    }

    fn corner(&self, x: &[f64], c: &[u32; 3]) -> [f64; 3] {
        [x[c[0] as usize], x[c[1] as usize], x[c[2] as usize]]
    }
}

impl FlowEnergy for CornerEnergy {
    fn p(&self) -> f64 {
        self.p
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let p = self.p;
        let s: f64 = self
            .corners
            .iter()
            .map(|c| {
                let [a, b, d] = self.corner(x, c);
                (a * a + b * b + d * d).powf(0.5 * p)
            })
            .sum();
        s * self.coef()
    }

    fn smoothed(&self, x: &[f64], eps: f64, grad: &mut [f64], metric: &mut [f64]) -> f64 {
        let p = self.p;
        let w = self.h.powi(3) / 8.0;
        let s = self.h.powi(-2);
        let e2 = eps * eps;
        grad.iter_mut().for_each(|g| *g = 0.0);
        metric.iter_mut().for_each(|m| *m = 0.0);
        let mut total = 0.0;
        for c in &self.corners {
            let v = self.corner(x, c);
            let q = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * s * s + e2;
            let qp = q.powf(0.5 * p - 1.0);
            total += w * q * qp;
            // |v|^p is concave in |v|², so its tangent in |v|² majorizes
            let m = w * p * qp * s * s;
            for (slot, val) in c.iter().zip(v) {
                grad[*slot as usize] += m * val;
                metric[*slot as usize] += m;
            }
        }
        total
    }

    fn majorizes(&self) -> bool {
        true
    }

    fn density_scale(&self, x: &[f64]) -> f64 {
        (self.energy(x) / self.volume).powf(1.0 / self.p)
    }

    /// Splits `v` among the corner terms in proportion to their share of the
    /// gradient at `hint`; the bound is tight when `v` is parallel to that
    /// gradient.
    fn conjugate_terms(&self, v: &[f64], hint: &[f64]) -> (f64, f64) {
        let p = self.p;
        let q = p / (p - 1.0);
        let c = self.coef();
        let mut signed = vec![0.0; self.n_arcs];
        let mut abs = vec![0.0; self.n_arcs];
        let mut count = vec![0u32; self.n_arcs];
        let grad_of = |u: [f64; 3]| {
            let n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
            let f = if n2 > 0.0 { n2.powf(0.5 * p - 1.0) } else { 0.0 };
            [u[0] * f, u[1] * f, u[2] * f]
        };
        for cn in &self.corners {
            let g = grad_of(self.corner(hint, cn));
            for (slot, gv) in cn.iter().zip(g) {
                signed[*slot as usize] += gv;
                abs[*slot as usize] += gv.abs();
                count[*slot as usize] += 1;
            }
        }
        let mut a = 0.0;
        for cn in &self.corners {
            let g = grad_of(self.corner(hint, cn));
            let mut y2 = 0.0;
            for (slot, gv) in cn.iter().zip(g) {
                let s = *slot as usize;
                let share =
                    if signed[s].abs() > 1e-3 * abs[s] && abs[s] > 0.0 { gv / signed[s] } else { 1.0 / count[s] as f64 };
                let y = v[s] * share;
                y2 += y * y;
            }
            a += (p - 1.0) * c * (y2.sqrt() / (p * c)).powf(q);
        }
        (a, 0.0)
    }
}

/// A boundary face: its flow arc and the dummy node pinning its flux.
#[derive(Debug, Clone)]
struct BoundaryFace {
    arc: usize,
    node: usize,
    dummy_is_tail: bool,
    /// +1 when the outward normal is the positive axis direction.
    outward: f64,
    axis: usize,
    corner: Vec3,
}

/// Outcome of one inner solve.
#[derive(Debug, Clone)]
pub struct PlateauSolve {
    /// Flux on every arc, in the positive axis direction.
    pub x: Vec<f64>,
    /// Multipliers of the cell constraints.
    pub mu: Vec<f64>,
    /// Corner energy plus the core corrections of the charge cells.
    pub energy: f64,
    /// Relative duality gap of the convex part.
    pub gap: f64,
    /// Largest per-cell divergence violation.
    pub divergence_residual: f64,
    /// Largest boundary flux violation.
    pub boundary_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The discretized minimization problem for one datum, exponent and grid.
#[derive(Debug, Clone)]
pub struct Plateau {
    n: usize,
    h: f64,
    p: f64,
    degree: i64,
    label: String,
    cell_node: Vec<u32>,
    cells: Vec<[usize; 3]>,
    net: Network,
    arc_face: Vec<(usize, usize)>,
    boundary: Vec<BoundaryFace>,
    /// Prescribed flux in the positive axis direction, per boundary face.
    target: Vec<f64>,
    energy: CornerEnergy,
}

impl Plateau {
    /// Builds the domain and the boundary fluxes. The datum must have an
    /// integer degree within `integrality_tol`.
    pub fn new(phi: &BoundaryData, p: f64, n: usize, integrality_tol: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 1.5) {
            return Err(domain(format!("exponent p = {p} must lie in (1, 1.5]")));
        }
        if !(4..=256).contains(&n) {
            return Err(domain(format!("grid size {n} outside [4, 256]")));
        }
        let degree = integer_degree(phi.degree(), integrality_tol)?;
        let h = 2.0 / n as f64;
        let unit = Ball::unit();
        let cid = |i: usize, j: usize, k: usize| i + n * (j + n * k);
        let mut cell_node = vec![NONE; n * n * n];
        let mut cells = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if unit.contains(&cell_center([i, j, k], n)) {
                        cell_node[cid(i, j, k)] = cells.len() as u32;
                        cells.push([i, j, k]);
                    }
                }
            }
        }
        let n_cells = cells.len();
        let node_at = |c: [i64; 3]| -> Option<usize> {
            if c.iter().any(|&v| v < 0 || v >= n as i64) {
                return None;
            }
            let v = cell_node[cid(c[0] as usize, c[1] as usize, c[2] as usize)];
            (v != NONE).then_some(v as usize)
        };

        // faces indexed as in GridField: axis a, position along a in 0..=n
        let face_index = |axis: usize, c: [usize; 3]| -> usize {
            let [i, j, k] = c;
            match axis {
                0 => i + (n + 1) * (j + n * k),
                1 => i + n * (j + (n + 1) * k),
                _ => i + n * (j + n * k),
            }
        };
        let n_faces = (n + 1) * n * n;
        let mut face_arc = vec![vec![NONE; n_faces]; 3];
        let mut arcs = Vec::new();
        let mut arc_face = Vec::new();
        let mut boundary = Vec::new();
        let mut n_nodes = n_cells;
        for axis in 0..3 {
            for &cell in &cells {
                for side in [0usize, 1] {
                    let mut fc = cell;
                    fc[axis] += side;
                    let fi = face_index(axis, fc);
                    if face_arc[axis][fi] != NONE {
                        continue;
                    }
                    let mut lower = [fc[0] as i64, fc[1] as i64, fc[2] as i64];
                    lower[axis] -= 1;
                    let upper = [fc[0] as i64, fc[1] as i64, fc[2] as i64];
                    let (lo, hi) = (node_at(lower), node_at(upper));
                    let a = arcs.len();
                    match (lo, hi) {
                        (Some(l), Some(u)) => arcs.push((l, u)),
                        (Some(l), None) | (None, Some(l)) => {
                            let dummy = n_nodes;
                            n_nodes += 1;
                            let dummy_is_tail = lo.is_none();
                            arcs.push(if dummy_is_tail { (dummy, l) } else { (l, dummy) });
                            let corner = Vec3::new(
                                -1.0 + fc[0] as f64 * h,
                                -1.0 + fc[1] as f64 * h,
                                -1.0 + fc[2] as f64 * h,
                            );
                            boundary.push(BoundaryFace {
                                arc: a,
                                node: dummy,
                                dummy_is_tail,
                                outward: if dummy_is_tail { -1.0 } else { 1.0 },
                                axis,
                                corner,
                            });
                        }
                        (None, None) => unreachable!("face of a domain cell"),
                    }
                    face_arc[axis][fi] = a as u32;
                    arc_face.push((axis, fi));
                }
            }
        }
        let mut corners = Vec::with_capacity(8 * n_cells);
        for &[i, j, k] in &cells {
            let xs = [face_arc[0][face_index(0, [i, j, k])], face_arc[0][face_index(0, [i + 1, j, k])]];
            let ys = [face_arc[1][face_index(1, [i, j, k])], face_arc[1][face_index(1, [i, j + 1, k])]];
            let zs = [face_arc[2][face_index(2, [i, j, k])], face_arc[2][face_index(2, [i, j, k + 1])]];
            for a in xs {
                for b in ys {
                    for c in zs {
                        corners.push([a, b, c]);
                    }
                }
            }
        }
        let net = Network::new(n_nodes, &arcs);
        let energy = CornerEnergy { p, h, corners, n_arcs: arcs.len(), volume: n_cells as f64 * h.powi(3) };
        let mut out = Self {
            n,
            h,
            p,
            degree,
            label: phi.label(),
            cell_node,
            cells,
            net,
            arc_face,
            boundary,
            target: Vec::new(),
            energy,
        };
        out.target = out.boundary_fluxes(phi, degree as f64);
        Ok(out)
    }

    /// Flux of `φ` through the radial projection of each boundary face, in
    /// the positive axis direction. A solid-angle weighted correction makes
    /// the outward fluxes sum to `degree` to round-off.
    fn boundary_fluxes(&self, phi: &BoundaryData, degree: f64) -> Vec<f64> {
        const SUB: usize = 4;
        let h = self.h;
        let locator = match phi {
            BoundaryData::Sampled(c) => Some((FaceLocator::new(c.mesh().clone()), c.densities())),
            _ => None,
        };
        let density = |u: &Vec3| -> f64 {
            match phi {
                BoundaryData::Constant(k) => k / (4.0 * std::f64::consts::PI),
                BoundaryData::TwoLobe => two_lobe(u),
                BoundaryData::Sampled(_) => {
                    let (loc, dens) = locator.as_ref().expect("locator for sampled data");
                    dens[loc.locate(u)]
                }
            }
        };
        let mut flux = Vec::with_capacity(self.boundary.len());
        let mut omega = Vec::with_capacity(self.boundary.len());
        for b in &self.boundary {
            let (eb, ec) = (unit((b.axis + 1) % 3), unit((b.axis + 2) % 3));
            let d = h / SUB as f64;
            let (mut f, mut w) = (0.0, 0.0);
            for s in 0..SUB {
                for t in 0..SUB {
                    let p00 = b.corner + eb * (s as f64 * d) + ec * (t as f64 * d);
                    let (p10, p01, p11) = (p00 + eb * d, p00 + ec * d, p00 + eb * d + ec * d);
                    let om = solid_angle(&p00, &p10, &p11) + solid_angle(&p00, &p11, &p01);
                    let mid = p00 + (eb + ec) * (0.5 * d);
                    f += om * density(&mid);
                    w += om;
                }
            }
            flux.push(f);
            omega.push(w);
        }
        let out_total: f64 = self.boundary.iter().zip(&flux).map(|(b, f)| b.outward * f).sum();
        let out_omega: f64 = self.boundary.iter().zip(&omega).map(|(b, w)| b.outward * w).sum();
        let shift = (degree - out_total) / out_omega;
        flux.iter().zip(&omega).map(|(f, w)| f + shift * w).collect()
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_domain_cell(&self, c: [usize; 3]) -> bool {
        let n = self.n;
        c.iter().all(|&v| v < n) && self.cell_node[c[0] + n * (c[1] + n * c[2])] != NONE
    }

    fn node_of(&self, c: [usize; 3]) -> Option<usize> {
        self.is_domain_cell(c).then(|| self.cell_node[c[0] + self.n * (c[1] + self.n * c[2])] as usize)
    }

    /// Sum of the prescribed outward boundary fluxes.
    pub fn boundary_total(&self) -> f64 {
        self.boundary.iter().zip(&self.target).map(|(b, t)| b.outward * t).sum()
    }

    /// Checks a configuration against the domain and the degree.
    pub fn validate(&self, charges: &ChargeConfig3) -> Result<()> {
        for &(c, _) in charges.entries() {
            if !self.is_domain_cell(c) {
                return Err(domain(format!("charge cell {c:?} is outside the domain")));
            }
        }
        if charges.total() != self.degree {
            return Err(Error::Infeasible(format!(
                "total charge {} differs from the boundary degree {}",
                charges.total(),
                self.degree
            )));
        }
        Ok(())
    }

    fn rhs(&self, charges: &ChargeConfig3) -> Vec<f64> {
        let mut b = vec![0.0; self.net.n_nodes()];
        for &(c, q) in charges.entries() {
            b[self.node_of(c).expect("validated")] = q as f64;
        }
        for (bf, t) in self.boundary.iter().zip(&self.target) {
            b[bf.node] = if bf.dummy_is_tail { *t } else { -*t };
        }
        b
    }

    fn core_energy(&self, charges: &ChargeConfig3) -> f64 {
        charges.entries().iter().map(|&(_, q)| core_correction(q as f64, self.h, self.p)).sum()
    }

    /// Minimizes the energy at fixed charges to relative gap `tol`, warm
    /// started from `warm` when given. Check `converged` on the result.
    pub fn solve(&self, charges: &ChargeConfig3, tol: f64, warm: Option<&[f64]>) -> Result<PlateauSolve> {
        self.validate(charges)?;
        let rhs = self.rhs(charges);
        let prob = FlowProblem { net: &self.net, active: None, rhs: &rhs, energy: &self.energy };
        let x0 = match warm {
            Some(w) if w.len() == self.net.n_arcs() => w.to_vec(),
            _ => vec![0.0; self.net.n_arcs()],
        };
        let opts = FlowOptions { tol, measure: GapMeasure::Energy, fallback_iter: 0, ..Default::default() };
        let sol = prob.solve(&x0, &opts);
        let mut x = sol.x;
        for (bf, t) in self.boundary.iter().zip(&self.target) {
            x[bf.arc] = *t;
        }
        let res = prob.residual(&x);
        let n_cells = self.cells.len();
        let divergence_residual = res[..n_cells].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let boundary_residual = res[n_cells..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(PlateauSolve {
            energy: self.energy.energy(&x) + self.core_energy(charges),
            mu: sol.mu[..n_cells].to_vec(),
            x,
            gap: sol.gap,
            divergence_residual,
            boundary_residual,
            iterations: sol.iterations,
            converged: sol.converged,
        })
    }

    /// Writes a solution into a staggered grid over `[-1, 1]³`. Faces outside
    /// the domain carry zero flux.
    pub fn to_field(&self, sol: &PlateauSolve, charges: &ChargeConfig3) -> Result<GridField> {
        let n = self.n;
        let mut g = GridField::zeros([n, n, n], self.h, Vec3::new(-1.0, -1.0, -1.0))?;
        {
            let f = g.fluxes_mut();
            for (a, &(axis, fi)) in self.arc_face.iter().enumerate() {
                f[axis][fi] = sol.x[a];
            }
        }
        g.set_charges(charges.entries().iter().map(|&(cell, q)| GridCharge { cell, charge: q as f64 }).collect());
        g.set_p(Some(self.p));
        g.set_provenance(format!("plateau {} p={} n={}", self.label, self.p, n));
        Ok(g)
    }

    /// Corner energy of the domain cells of `field` plus core corrections;
    /// equals the solver's energy for its own output.
    pub fn field_energy(&self, field: &GridField) -> f64 {
        let e: f64 = self.cells.iter().map(|&c| field.cell_energy(c, self.p)).sum();
        e + field.charges().iter().map(|c| core_correction(c.charge, self.h, self.p)).sum::<f64>()
    }

    /// Flux-weighted centroid of the boundary datum, `Σ|φ_f| m_f / Σ|φ_f|`
    /// over the boundary faces with midpoints `m_f`.
    pub fn flux_centroid(&self) -> Vec3 {
        let h = self.h;
        let (mut s, mut w) = (Vec3::zeros(), 0.0);
        for (b, t) in self.boundary.iter().zip(&self.target) {
            let mid = b.corner + (unit((b.axis + 1) % 3) + unit((b.axis + 2) % 3)) * (0.5 * h);
            s += mid * t.abs();
            w += t.abs();
        }
        if w > 0.0 {
            s / w
        } else {
            Vec3::zeros()
        }
    }

    /// `|degree|` unit charges on the domain cells nearest to `y`.
    pub fn unit_charges_near(&self, y: &Vec3) -> ChargeConfig3 {
        let d = self.degree;
        if d == 0 {
            return ChargeConfig3::empty();
        }
        let mut order: Vec<(f64, [usize; 3])> =
            self.cells.iter().map(|&c| ((cell_center(c, self.n) - y).norm_squared(), c)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let s = d.signum();
        ChargeConfig3::from_cells(&order.iter().take(d.unsigned_abs() as usize).map(|&(_, c)| (c, s)).collect::<Vec<_>>())
    }

    fn neighbors(&self, c: [usize; 3]) -> Vec<[usize; 3]> {
        let mut out = Vec::with_capacity(6);
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let v = c[axis] as i64 + step;
                if v < 0 || v >= self.n as i64 {
                    continue;
                }
                let mut m = c;
                m[axis] = v as usize;
                if self.is_domain_cell(m) {
                    out.push(m);
                }
            }
        }
        out
    }

    /// Candidate configurations one move away from `c`: relocation to a
    /// neighbor cell, unit transfer between sites, annihilation of an
    /// opposite pair, and creation of the ±1 pair favored by the
    /// multipliers `mu`.
    fn moves(&self, c: &ChargeConfig3, mu: &[f64]) -> Vec<(String, ChargeConfig3)> {
        let mut out = Vec::new();
        let e = c.entries();
        for &(cell, q) in e {
            for nb in self.neighbors(cell) {
                if c.charge_at(nb) == 0 {
                    let mut m = c.clone();
                    m.add(cell, -q);
                    m.add(nb, q);
                    out.push(("relocate".to_string(), m));
                    if q.abs() >= 2 {
                        // split one unit off onto the empty neighbor
                        let mut m = c.clone();
                        m.add(cell, -q.signum());
                        m.add(nb, q.signum());
                        out.push(("transfer".to_string(), m));
                    }
                }
            }
        }
        for (i, &(ci, qi)) in e.iter().enumerate() {
            for (j, &(cj, qj)) in e.iter().enumerate() {
                if i == j {
                    continue;
                }
                if qi.signum() == qj.signum() {
                    let mut m = c.clone();
                    m.add(ci, -qi.signum());
                    m.add(cj, qi.signum());
                    out.push(("transfer".to_string(), m));
                } else if i < j {
                    let mut m = c.clone();
                    m.add(ci, -qi.signum());
                    m.add(cj, -qj.signum());
                    out.push(("annihilate".to_string(), m));
                }
            }
        }
        // first-order change of the optimal energy is Σ q_i μ_i up to a
        // positive factor: +1 where μ is smallest, -1 where it is largest
        if !mu.is_empty() {
            let (mut lo, mut hi) = (0usize, 0usize);
            for i in 0..mu.len() {
                if mu[i] < mu[lo] {
                    lo = i;
                }
                if mu[i] > mu[hi] {
                    hi = i;
                }
            }
            if lo != hi {
                let mut m = c.clone();
                m.add(self.cells[lo], 1);
                m.add(self.cells[hi], -1);
                out.push(("create".to_string(), m));
            }
        }
        out
    }
}

fn unit(axis: usize) -> Vec3 {
    let mut v = Vec3::zeros();
    v[axis] = 1.0;
    v
}

/// Solves the inner problem for one configuration and returns the field.
pub fn inner_solve(
    charges: &ChargeConfig3,
    phi: &BoundaryData,
    p: f64,
    n: usize,
    tol: f64,
) -> Result<(GridField, PlateauSolve)> {
    let plateau = Plateau::new(phi, p, n, 1e-3)?;
    let sol = plateau.solve(charges, tol, None)?;
    Ok((plateau.to_field(&sol, charges)?, sol))
}

/// Settings of [`outer_search`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauOptions {
    /// Relative duality gap of the final solve.
    pub tol: f64,
    /// Gap used while comparing candidate moves.
    pub screen_tol: f64,
    /// Seeded restarts in addition to the deterministic start.
    pub restarts: usize,
    pub seed: u64,
    /// Largest cell offset of a restart's initial charges.
    pub restart_spread: usize,
    pub max_rounds: usize,
    pub integrality_tol: f64,
}

impl Default for PlateauOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            screen_tol: 1e-4,
            restarts: 4,
            seed: 0,
            restart_spread: 2,
            max_rounds: 40,
            integrality_tol: 1e-3,
        }
    }
}

/// One accepted move of the outer search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterMove {
    pub restart: usize,
    pub kind: String,
    pub energy: f64,
    pub charges: ChargeConfig3,
}

/// Minimizer found by [`outer_search`] with its certificates.
#[derive(Debug, Clone)]
pub struct PlateauResult {
    pub field: GridField,
    pub charges: ChargeConfig3,
    pub energy: f64,
    pub gap: f64,
    pub divergence_residual: f64,
    pub boundary_residual: f64,
    pub trace: Vec<OuterMove>,
    /// Every configuration evaluated, with its energy.
    pub explored: Vec<(ChargeConfig3, f64)>,
    /// Filled by the caller with [`trace_profile`] when requested.
    pub boundary_trace: Option<TraceProfile>,
    pub wall_time: f64,
}

impl PlateauResult {
    pub fn summary(&self) -> serde_json::Value {
        let h = self.field.spacing();
        let n = self.field.dims()[0];
        let charges: Vec<serde_json::Value> = self
            .charges
            .positions(n)
            .iter()
            .zip(self.charges.entries())
            .map(|((y, q), (c, _))| serde_json::json!({"cell": c, "position": [y.x, y.y, y.z], "charge": q}))
            .collect();
        serde_json::json!({
            "energy": self.energy,
            "gap": self.gap,
            "divergence_residual": self.divergence_residual,
            "boundary_residual": self.boundary_residual,
            "spacing": h,
            "grid": n,
            "charges": charges,
            "total_charge": self.charges.total(),
            "trace": self.trace,
            "explored": self.explored.len(),
            "boundary_trace": self.boundary_trace,
            "wall_time_s": self.wall_time,
        })
    }
}

/// Searches integer charge configurations for the least energy. Each
/// restart runs a greedy descent over [`Plateau::moves`]; the best
/// configuration is re-solved to `opts.tol`.
pub fn outer_search(phi: &BoundaryData, p: f64, n: usize, opts: &PlateauOptions) -> Result<PlateauResult> {
    let t0 = std::time::Instant::now();
    let plateau = Plateau::new(phi, p, n, opts.integrality_tol)?;
    let mut cache: HashMap<ChargeConfig3, f64> = HashMap::new();
    let mut trace = Vec::new();
    let mut best: Option<(ChargeConfig3, PlateauSolve)> = None;
    let start0 = plateau.unit_charges_near(&plateau.flux_centroid());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    for restart in 0..=opts.restarts {
        let start = if restart == 0 { start0.clone() } else { perturbed(&plateau, &start0, opts.restart_spread, &mut rng) };
        let mut cur = start.clone();
        let mut sol = plateau.solve(&cur, opts.screen_tol, best.as_ref().map(|b| b.1.x.as_slice()))?;
        cache.insert(cur.clone(), sol.energy);
        trace.push(OuterMove { restart, kind: "start".into(), energy: sol.energy, charges: cur.clone() });
        for _ in 0..opts.max_rounds {
            let cands: Vec<(String, ChargeConfig3)> =
                plateau.moves(&cur, &sol.mu).into_iter().filter(|(_, c)| !cache.contains_key(c)).collect();
            let evaluated: Vec<(String, ChargeConfig3, Result<PlateauSolve>)> = cands
                .into_par_iter()
                .map(|(kind, c)| {
                    let s = plateau.solve(&c, opts.screen_tol, Some(&sol.x));
                    (kind, c, s)
                })
                .collect();
            let mut improved: Option<(String, ChargeConfig3, PlateauSolve)> = None;
            for (kind, c, s) in evaluated {
                let s = s?;
                cache.insert(c.clone(), s.energy);
                let bar = improved.as_ref().map_or(sol.energy, |b| b.2.energy);
                if s.energy < bar - 1e-9 * bar.abs() {
                    improved = Some((kind, c, s));
                }
            }
            match improved {
                Some((kind, c, s)) => {
                    trace.push(OuterMove { restart, kind, energy: s.energy, charges: c.clone() });
                    cur = c;
                    sol = s;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|b| sol.energy < b.1.energy) {
            best = Some((cur, sol));
        }
    }
    let (charges, screened) = best.expect("at least one restart");
    let sol = if opts.tol < screened.gap { plateau.solve(&charges, opts.tol, Some(&screened.x))? } else { screened };
    let mut explored: Vec<(ChargeConfig3, f64)> = cache.into_iter().collect();
    explored.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(PlateauResult {
        field: plateau.to_field(&sol, &charges)?,
        charges,
        energy: sol.energy,
        gap: sol.gap,
        divergence_residual: sol.divergence_residual,
        boundary_residual: sol.boundary_residual,
        trace,
        explored,
        boundary_trace: None,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

fn perturbed(plateau: &Plateau, c: &ChargeConfig3, spread: usize, rng: &mut ChaCha8Rng) -> ChargeConfig3 {
    let s = spread as i64;
    let mut out = ChargeConfig3::empty();
    for &(cell, q) in c.entries() {
        let mut placed = cell;
        for _ in 0..20 {
            let mut m = cell;
            for v in m.iter_mut() {
                *v = (*v as i64 + rng.gen_range(-s..=s)).max(0) as usize;
            }
            if plateau.is_domain_cell(m) && out.charge_at(m) == 0 {
                placed = m;
                break;
            }
        }
        out.add(placed, q);
    }
    out
}

/// Settings of [`trace_profile`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceOptions {
    pub p: f64,
    /// Allowed deviation of a slice degree from the degree of `φ`.
    pub degree_tol: f64,
    /// Membership requires the extrapolated distance at `ρ = 0` to be at
    /// most this fraction of the largest measured distance.
    pub extrapolation_tol: f64,
    /// Distances below this count as zero.
    pub zero_tol: f64,
    pub distance: DistanceOptions,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            p: 1.25,
            degree_tol: 0.05,
            extrapolation_tol: 0.25,
            zero_tol: 1e-6,
            distance: DistanceOptions { restarts: 0, ..Default::default() },
        }
    }
}

/// Slice distances `d(F(·+ρ), φ)` of concentric spheres of radius `1 − ρ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceProfile {
    pub rho: Vec<f64>,
    pub distances: Vec<f64>,
    pub degrees: Vec<f64>,
    /// Exponent `γ` of the fit `d ≈ C ρ^γ`.
    pub decay_exponent: f64,
    /// Intercept of the linear fit `d ≈ a + b ρ`.
    pub extrapolated: f64,
    pub member: bool,
    pub reason: String,
}

/// Boundary trace profile of `field` against `phi`. Slice degrees are
/// compared to `deg φ` first; a mismatch is an immediate non-membership
/// verdict. Slices are shifted by a uniform density to the exact integer
/// degree (removing quadrature error of the flux) before measuring.
pub fn trace_profile(field: &dyn VectorField, phi: &TwoCochain, rho: &[f64], opts: &TraceOptions) -> Result<TraceProfile> {
    if rho.len() < 2 || rho.windows(2).any(|w| w[1] >= w[0]) || rho.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(domain("trace radii must be strictly decreasing in (0, 1)"));
    }
    let mesh = phi.mesh();
    let deg = integer_degree(phi.degree(), opts.distance.integrality_tol)?;
    let slices: Vec<TwoCochain> =
        rho.iter().map(|&r| restrict_to_sphere(field, &Vec3::zeros(), 1.0 - r, mesh)).collect::<Result<_>>()?;
    let degrees: Vec<f64> = slices.iter().map(|s| s.degree()).collect();
    let mut profile = TraceProfile {
        rho: rho.to_vec(),
        distances: Vec::new(),
        degrees: degrees.clone(),
        decay_exponent: f64::NAN,
        extrapolated: f64::NAN,
        member: false,
        reason: String::new(),
    };
    if let Some(d) = degrees.iter().find(|d| (*d - deg as f64).abs() > opts.degree_tol) {
        profile.reason = format!("slice degree {d:.4} differs from the boundary degree {deg}");
        return Ok(profile);
    }
    let total = mesh.total_area();
    let distances: Vec<f64> = slices
        .par_iter()
        .map(|s| {
            let shift = (deg as f64 - s.degree()) / total;
            let vals = s.values().iter().zip(mesh.face_areas()).map(|(v, a)| v + shift * a).collect();
            let s = TwoCochain::new(mesh.clone(), vals)?;
            Ok(slice_distance(&s, phi, opts.p, &opts.distance)?.value)
        })
        .collect::<Result<_>>()?;
    let dmax = distances.iter().fold(0.0f64, |a, &b| a.max(b));
    let (slope, _, _) = {
        let lr: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
        let ld: Vec<f64> = distances.iter().map(|d| d.max(1e-300).ln()).collect();
        linear_fit(&lr, &ld)
    };
    let (_, intercept, _) = linear_fit(rho, &distances);
    profile.distances = distances;
    profile.decay_exponent = slope;
    profile.extrapolated = intercept.max(0.0);
    if dmax <= opts.zero_tol {
        profile.member = true;
        profile.reason = "all slice distances vanish".into();
    } else if profile.extrapolated <= opts.extrapolation_tol * dmax {
        profile.member = true;
        profile.reason = format!("extrapolated distance {:.3e} at rho = 0", profile.extrapolated);
    } else {
        profile.reason = format!(
            "extrapolated distance {:.3e} exceeds {} of the largest distance {:.3e}",
            profile.extrapolated, opts.extrapolation_tol, dmax
        );
    }
    Ok(profile)
}

/// Default radii of [`membership_check`].
pub const TRACE_RHO: [f64; 5] = [0.4, 0.3, 0.22, 0.16, 0.12];

/// Membership of `field` in the class with boundary trace `phi`, decided by
/// [`trace_profile`] on [`TRACE_RHO`] with extrapolation tolerance `tol`.
pub fn membership_check(field: &dyn VectorField, phi: &TwoCochain, tol: f64) -> Result<TraceProfile> {
    let opts = TraceOptions { extrapolation_tol: tol, ..Default::default() };
    trace_profile(field, phi, &TRACE_RHO, &opts)
}

/// One member of the converging-charge sequence.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureMember {
    pub n: usize,
    pub charge_position: [f64; 3],
    pub energy: f64,
    pub gap: f64,
    pub profile: TraceProfile,
}

/// Trace preservation along fields whose single charge approaches the
/// center, with common constant boundary datum.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureExperiment {
    pub members: Vec<ClosureMember>,
    /// The centered unit monopole, the limit of the sequence.
    pub limit: TraceProfile,
    pub limit_energy: f64,
    /// An off-center monopole whose own trace differs from `φ`.
    pub mismatched: TraceProfile,
    /// A field of degree 2 against the degree-1 datum.
    pub wrong_degree: TraceProfile,
}

impl ClosureExperiment {
    pub fn passed(&self) -> bool {
        self.members.iter().all(|m| m.profile.member)
            && self.limit.member
            && !self.mismatched.member
            && !self.wrong_degree.member
    }
}

/// Members with a unit charge at distance `1/k` from the center for `k` in
/// `ks`, solved on an `n³` grid against `φ ≡ 1/4π`.
pub fn closure_experiment(ks: &[usize], p: f64, n: usize, mesh: &Arc<SphereMesh>, tol: f64) -> Result<ClosureExperiment> {
    let datum = BoundaryData::Constant(1.0);
    let phi = datum.to_cochain(mesh)?;
    let plateau = Plateau::new(&datum, p, n, 1e-3)?;
    let opts = TraceOptions { p, ..Default::default() };
    let mut members = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &k in ks {
        if k == 0 {
            return Err(domain("sequence index must be positive"));
        }
        let y = Vec3::new(1.0 / k as f64, 0.0, 0.0);
        let cell = snap_to_cell(&y, n).ok_or_else(|| domain("charge outside the grid"))?;
        let charges = ChargeConfig3::from_cells(&[(cell, 1)]);
        let sol = plateau.solve(&charges, tol, warm.as_deref())?;
        let field = plateau.to_field(&sol, &charges)?;
        let profile = trace_profile(&field, &phi, &TRACE_RHO, &opts)?;
        let c = cell_center(cell, n);
        members.push(ClosureMember { n: k, charge_position: [c.x, c.y, c.z], energy: sol.energy, gap: sol.gap, profile });
        warm = Some(sol.x);
    }
    let limit_field = AnalyticField::monopole(Vec3::zeros(), 1)?;
    let limit = trace_profile(&limit_field, &phi, &TRACE_RHO, &opts)?;
    let limit_energy = crate::energy::lp_energy(&limit_field, &Ball::unit(), p)?;
    let off = AnalyticField::monopole(Vec3::new(0.5, 0.0, 0.0), 1)?;
    let mismatched = trace_profile(&off, &phi, &TRACE_RHO, &opts)?;
    let double = AnalyticField::monopole(Vec3::zeros(), 2)?;
    let wrong_degree = trace_profile(&double, &phi, &TRACE_RHO, &opts)?;
    Ok(ClosureExperiment { members, limit, limit_energy, mismatched, wrong_degree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::jensen_constant;

    #[test]
    fn zero_datum_gives_zero_field() {
        let pl = Plateau::new(&BoundaryData::Constant(0.0), 1.25, 12, 1e-3).unwrap();
        let s = pl.solve(&ChargeConfig3::empty(), 1e-5, None).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
        assert_eq!(s.energy, 0.0);
    }

    #[test]
    fn boundary_fluxes_sum_to_degree() {
        for datum in [BoundaryData::Constant(1.0), BoundaryData::TwoLobe] {
            let pl = Plateau::new(&datum, 1.25, 16, 1e-3).unwrap();
            assert!((pl.boundary_total() - datum.degree()).abs() < 1e-12);
        }
        // constant data need no correction: total solid angle is 4π
        let pl = Plateau::new(&BoundaryData::Constant(1.0), 1.25, 16, 1e-3).unwrap();
        let raw: f64 = pl.boundary.iter().zip(&pl.target).map(|(b, t)| b.outward * t).sum();
        assert!((raw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_charge_is_infeasible() {
        let pl = Plateau::new(&BoundaryData::Constant(1.0), 1.25, 12, 1e-3).unwrap();
        let err = pl.solve(&ChargeConfig3::empty(), 1e-5, None).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert!(Plateau::new(&BoundaryData::Constant(0.5), 1.25, 12, 1e-3).is_err());
    }

    #[test]
    fn centered_charge_near_closed_form_and_off_center_costs_more() {
        let n = 24;
        let pl = Plateau::new(&BoundaryData::Constant(1.0), 1.25, n, 1e-3).unwrap();
        let center = ChargeConfig3::from_cells(&[([12, 12, 12], 1)]);
        let s = pl.solve(&center, 1e-5, None).unwrap();
        assert!(s.converged, "gap {}", s.gap);
        assert!(s.divergence_residual < 1e-12 && s.boundary_residual < 1e-12);
        let c = jensen_constant(1.25);
        assert!((s.energy - c).abs() < 0.1 * c, "energy {} vs {c}", s.energy);
        let field = pl.to_field(&s, &center).unwrap();
        assert!((pl.field_energy(&field) - s.energy).abs() < 1e-12 * s.energy);
        let off = ChargeConfig3::from_cells(&[([17, 12, 12], 1)]);
        let s2 = pl.solve(&off, 1e-5, Some(&s.x)).unwrap();
        assert!(s2.energy > s.energy);
    }

    #[test]
    fn charge_config_merges_and_drops_zeros() {
        let mut c = ChargeConfig3::from_cells(&[([1, 2, 3], 1), ([1, 2, 3], 1), ([0, 0, 0], -1)]);
        assert_eq!(c.charge_at([1, 2, 3]), 2);
        assert_eq!(c.total(), 1);
        c.add([0, 0, 0], 1);
        assert_eq!(c.len(), 1);
    }
}
