//! `L^p` energies of analytic fields, rescaled energy profiles, the
//! monotonicity identity and the small-energy experiment.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::{property_p_scan, AnalyticField, Ball, PScanReport, VectorField};
use crate::linalg::gauss_legendre01;
use crate::report::{AuditReport, Check};
use crate::sphere::{SphereMesh, Vec3};

/// `(4π)^{1-p} / (3-2p)`: the rescaled energy of a unit charge at the
/// center of any ball, and the Jensen lower bound for a ball whose every
/// concentric sphere has flux at least one.
pub fn jensen_constant(p: f64) -> f64 {
    (4.0 * PI).powf(1.0 - p) / (3.0 - 2.0 * p)
}

/// Quadrature resolution for energies and surface terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Quadrature {
    pub radial: usize,
    pub polar: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { radial: 48, polar: 48 }
    }
}

/// `∫_{B(x0, R)} |k (y-c) / (4π |y-c|^3)|^p dy` for a charge at distance
/// `a` from the center: spheres around the charge meet the ball in caps of
/// known area, leaving a one-dimensional integral.
pub fn monopole_ball_energy(k: f64, a: f64, radius: f64, p: f64) -> f64 {
    let amp = (k.abs() / (4.0 * PI)).powf(p);
    let mut e = 0.0;
    let (lo, hi) = ((a - radius).abs(), a + radius);
    if a < radius {
        e += 4.0 * PI * (radius - a).powf(3.0 - 2.0 * p) / (3.0 - 2.0 * p);
    }
    if a > 0.0 {
        // cap area 2π s^2 (1 + τ), τ = (R^2 - a^2 - s^2) / (2 a s)
        let gl = gauss_legendre01(48);
        let len = hi - lo;
        for &(t, w) in &gl {
            let s = lo + t * len;
            let tau = ((radius * radius - a * a - s * s) / (2.0 * a * s)).clamp(-1.0, 1.0);
            e += w * len * 2.0 * PI * s.powf(2.0 - 2.0 * p) * (1.0 + tau);
        }
    }
    amp * e
}

/// Points and weights of a product rule on the unit sphere with its pole
/// along `pole`.
fn sphere_rule(pole: &Vec3, n: usize) -> Vec<(Vec3, f64)> {
    let z = pole.normalize();
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let xa = z.cross(&helper).normalize();
    let ya = z.cross(&xa);
    let gl = gauss_legendre01(n);
    let nphi = 2 * n;
    let mut out = Vec::with_capacity(n * nphi);
    for &(t, w) in &gl {
        let ct = 2.0 * t - 1.0;
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for j in 0..nphi {
            let phi = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
            let u = z * ct + (xa * phi.cos() + ya * phi.sin()) * st;
            out.push((u, 2.0 * w * 2.0 * PI / nphi as f64));
        }
    }
    out
}

fn check_p(field: &AnalyticField, p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(domain(format!("exponent p = {p} must exceed 1")));
    }
    if p >= 1.5 && !field.charges.is_empty() {
        return Err(domain(format!("point charges have infinite L^p energy for p = {p} >= 3/2")));
    }
    Ok(())
}

/// `∫_ball |X|^p`. Each charge contributes its exact single-charge energy;
/// the cross terms `|X|^p - Σ|X_i|^p`, which are only weakly singular, are
/// integrated numerically.
pub fn lp_energy(field: &AnalyticField, ball: &Ball, p: f64) -> Result<f64> {
    lp_energy_with(field, ball, p, Quadrature::default())
}

pub fn lp_energy_with(field: &AnalyticField, ball: &Ball, p: f64, q: Quadrature) -> Result<f64> {
    check_p(field, p)?;
    let x0 = ball.center();
    let mut e: f64 = field
        .charges
        .iter()
        .map(|c| monopole_ball_energy(c.charge, (c.center() - x0).norm(), ball.radius, p))
        .sum();
    if field.charges.len() == 1 && field.smooth.is_empty() || field.charges.is_empty() && field.smooth.is_empty() {
        return Ok(e);
    }
    let rule = sphere_rule(&Vec3::z(), q.polar);
    let gl = gauss_legendre01(q.radial);
    for &(t, wr) in &gl {
        let s = t * ball.radius;
        for (u, wu) in &rule {
            let y = x0 + s * u;
            let total = match field.eval(&y) {
                Ok(v) => v.norm().powf(p),
                Err(Error::Singular(_)) => continue,
                Err(e) => return Err(e),
            };
            let singles: f64 = field
                .charges
                .iter()
                .map(|c| {
                    let d = y - c.center();
                    (c.charge.abs() / (4.0 * PI * d.norm_squared())).powf(p)
                })
                .sum();
            e += wr * ball.radius * s * s * wu * (total - singles);
        }
    }
    Ok(e)
}

/// Surface integrals `(∫|X|^p, ∫|X|^{p-2}|X_tan|^2)` over `∂B(x, r)`, with
/// the quadrature pole aimed at the nearest charge.
pub fn surface_terms(field: &AnalyticField, x: &Vec3, r: f64, p: f64, n: usize) -> Result<(f64, f64)> {
    field.check_slice(x, r)?;
    let pole = field
        .charges
        .iter()
        .map(|c| c.center() - x)
        .filter(|d| d.norm() > 1e-12)
        .min_by(|a, b| (a.norm() - r).abs().total_cmp(&(b.norm() - r).abs()))
        .unwrap_or_else(Vec3::z);
    let (mut full, mut tan) = (0.0, 0.0);
    for (u, w) in sphere_rule(&pole, n) {
        let v = field.eval(&(x + r * u))?;
        let m = v.norm();
        if m == 0.0 {
            continue;
        }
        let vt = v - u * v.dot(&u);
        full += w * r * r * m.powf(p);
        tan += w * r * r * m.powf(p - 2.0) * vt.norm_squared();
    }
    Ok((full, tan))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub energy: f64,
    /// `r^{2p-3} ∫_{B_r} |X|^p`.
    pub rescaled: f64,
    /// `d/dr` of `rescaled`, from the energy and `∫_{∂B_r} |X|^p`.
    pub derivative: f64,
    /// `p r^{2p-3} ∫_{∂B_r} |X|^{p-2} |X_tan|^2`.
    pub surface: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub center: [f64; 3],
    pub p: f64,
    pub rows: Vec<ProfileRow>,
}

impl EnergyProfile {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,E,E_rescaled,dE_rescaled,surface_term")?;
        for row in &self.rows {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                row.r, row.energy, row.rescaled, row.derivative, row.surface
            )?;
        }
        Ok(())
    }

    /// Ratio spread `std / mean` of the rescaled energies.
    pub fn rescaled_spread(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.rescaled).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if mean == 0.0 {
            0.0
        } else {
            var.sqrt() / mean.abs()
        }
    }
}

pub fn rescaled_energy_profile(field: &AnalyticField, x: &Vec3, radii: &[f64], p: f64) -> Result<EnergyProfile> {
    check_p(field, p)?;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r > 0.0) {
            return Err(domain("radii must be positive"));
        }
        let energy = lp_energy(field, &Ball::new(*x, r), p)?;
        let scale = r.powf(2.0 * p - 3.0);
        let (full, tan) = surface_terms(field, x, r, p, 64)?;
        let derivative = (2.0 * p - 3.0) * scale / r * energy + scale * full;
        rows.push(ProfileRow { r, energy, rescaled: scale * energy, derivative, surface: p * scale * tan });
    }
    Ok(EnergyProfile { center: [x.x, x.y, x.z], p, rows })
}

/// Compares the radial derivative of the rescaled energy with the surface
/// term at every radius, and checks that the rescaled energy never drops.
pub fn monotonicity_audit(field: &AnalyticField, x: &Vec3, radii: &[f64], p: f64) -> Result<AuditReport> {
    if radii.len() < 8 {
        return Err(domain(format!("monotonicity needs at least 8 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("radii must be strictly increasing"));
    }
    let prof = rescaled_energy_profile(field, x, radii, p)?;
    let e: Vec<f64> = prof.rows.iter().map(|r| r.rescaled).collect();
    let scale = e.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let (mut rel, mut null_abs, mut decrease) = (0.0f64, 0.0f64, 0.0f64);
    let mut table = Vec::new();
    for row in &prof.rows {
        let (lhs, rhs) = (row.derivative, row.surface);
        let size = lhs.abs().max(rhs.abs());
        // a derivative below 1e-6 of the energy per unit radius is zero
        if size * row.r > 1e-6 * scale {
            rel = rel.max((lhs - rhs).abs() / size);
        } else {
            null_abs = null_abs.max((lhs - rhs).abs());
        }
        table.push(serde_json::json!({ "r": row.r, "lhs": lhs, "rhs": rhs }));
    }
    for w in e.windows(2) {
        decrease = decrease.max((w[0] - w[1]) / scale);
    }
    let mut rep = AuditReport::new("monotonicity");
    rep.push(Check::at_most("max_relative_residual", rel, 0.05));
    rep.push(Check::at_most("max_null_residual", null_abs, 1e-6));
    rep.push(Check::at_most("max_relative_decrease", decrease, 0.01));
    rep.details = serde_json::json!({ "rows": table, "profile": prof });
    Ok(rep)
}

/// Settings for [`eps_regularity_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsRegularityConfig {
    /// Small-energy threshold under test; not a universal constant.
    pub eps0: f64,
    /// Cells per axis of the scan grid over the cube around `B_{3/4}`.
    pub scan_cells: usize,
    /// Largest scanned radius; points need a zero flux at or below it.
    pub threshold: f64,
    /// Geometric ratio and floor of the decreasing radius grid.
    pub ratio: f64,
    pub floor: f64,
    pub mesh_level: u32,
}

impl Default for EpsRegularityConfig {
    fn default() -> Self {
        Self { eps0: 0.5, scan_cells: 9, threshold: 0.25, ratio: 0.8, floor: 0.02, mesh_level: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsRegularityReport {
    pub p: f64,
    pub energy_b1: f64,
    pub jensen_constant: f64,
    /// `E_1 / C(p)`: one in the equality case.
    pub equality_ratio: f64,
    /// Scan cells flagged as violating the vanishing-flux property.
    pub violating_cells: Vec<[usize; 3]>,
    /// Rescaled energy at the threshold radius around each violating cell.
    pub violating_energies: Vec<f64>,
    /// Cells holding a charge.
    pub charge_cells: Vec<[usize; 3]>,
    /// `E_1 <= eps0` implies no violating cell.
    pub implication_holds: bool,
    pub scan: PScanReport,
}

/// Measures the energy in `B_1`, scans the cells of `B_{3/4}` for points
/// where the flux never vanishes at small radii, and checks that each such
/// point carries at least the Jensen energy.
pub fn eps_regularity_experiment(
    field: &AnalyticField,
    p: f64,
    cfg: &EpsRegularityConfig,
) -> Result<EpsRegularityReport> {
    if !field.has_integer_charges(1e-9) {
        return Err(domain("field has non-integer fluxes"));
    }
    if cfg.scan_cells == 0 || !(cfg.ratio > 0.0 && cfg.ratio < 1.0) || !(cfg.floor > 0.0) {
        return Err(domain("invalid scan configuration"));
    }
    let e1 = lp_energy(field, &Ball::unit(), p)?;
    let c = jensen_constant(p);
    let n = cfg.scan_cells;
    let h = 1.5 / n as f64;
    let cell_center = |i: usize| -0.75 + h * (i as f64 + 0.5);
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let y = Vec3::new(cell_center(i), cell_center(j), cell_center(k));
                if y.norm() < 0.75 {
                    cells.push([i, j, k]);
                    points.push(y);
                }
            }
        }
    }
    let mut radii = Vec::new();
    let mut r = cfg.threshold;
    while r >= cfg.floor {
        radii.push(r);
        r *= cfg.ratio;
    }
    let mesh = Arc::new(SphereMesh::icosphere(cfg.mesh_level)?);
    let scan = property_p_scan(field, &points, &radii, cfg.threshold, &mesh)?;
    let violating: Vec<usize> = scan.singular_points();
    let violating_energies = violating
        .iter()
        .map(|&i| {
            let e = lp_energy(field, &Ball::new(points[i], cfg.threshold), p)?;
            Ok(cfg.threshold.powf(2.0 * p - 3.0) * e)
        })
        .collect::<Result<Vec<_>>>()?;
    let charge_cells = field
        .charges
        .iter()
        .filter_map(|q| {
            let t = (q.center() + Vec3::new(0.75, 0.75, 0.75)) / h;
            (0..3).all(|a| t[a] >= 0.0 && t[a] < n as f64).then(|| [t.x as usize, t.y as usize, t.z as usize])
        })
        .filter(|c| cells.contains(c))
        .collect();
    let implication_holds = e1 > cfg.eps0 || violating.is_empty();
    Ok(EpsRegularityReport {
        p,
        energy_b1: e1,
        jensen_constant: c,
        equality_ratio: e1 / c,
        violating_cells: violating.iter().map(|&i| cells[i]).collect(),
        violating_energies,
        charge_cells,
        implication_holds,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SmoothTerm;

    #[test]
    fn centered_monopole_energy_is_closed_form() {
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let e = lp_energy(&f, &Ball::unit(), 1.25).unwrap();
        assert!((e - jensen_constant(1.25)).abs() < 1e-12);
        assert!((e - 1.0620).abs() < 1e-3);
        // oracle: radial quadrature of (4π)^{1-p} s^{2-2p} after s = t^2
        let q: f64 = gauss_legendre01(40)
            .iter()
            .map(|&(t, w)| w * 2.0 * t * (4.0 * PI).powf(-0.25) * (t * t).powf(-0.5))
            .sum();
        assert!((e - q).abs() < 1e-10);
        assert_eq!(lp_energy(&AnalyticField::default(), &Ball::unit(), 1.25).unwrap(), 0.0);
        assert!(lp_energy(&f, &Ball::unit(), 1.5).is_err());
    }

    #[test]
    fn off_center_formula_matches_brute_force() {
        // oracle: brute-force spherical quadrature of |X|^p around the charge,
        // clipped to the ball
        let (a, r, p) = (0.4, 1.0, 1.2);
        let exact = monopole_ball_energy(1.0, a, r, p);
        let c = Vec3::new(a, 0.0, 0.0);
        let rule = sphere_rule(&Vec3::x(), 200);
        let gl = gauss_legendre01(400);
        let mut q = 0.0;
        for &(t, w) in &gl {
            let s = t * (r + a);
            for (u, wu) in &rule {
                if (c + s * u).norm() < r {
                    q += w * (r + a) * wu * s * s * (1.0 / (4.0 * PI * s * s)).powf(p);
                }
            }
        }
        assert!((q / exact - 1.0).abs() < 2e-3, "{q} vs {exact}");
        // charge outside the ball
        let out = monopole_ball_energy(1.0, 2.0, 0.5, p);
        let direct = (4.0 * PI / 3.0) * 0.125 * (1.0 / (4.0 * PI * 4.0)).powf(p);
        assert!((out / direct - 1.0).abs() < 0.05);
    }

    #[test]
    fn separated_charges_add_up() {
        let c1 = Vec3::new(-3.0, 0.0, 0.0);
        let c2 = Vec3::new(3.0, 0.0, 0.0);
        let f = AnalyticField::default().with_charge(c1, 1.0).with_charge(c2, 1.0);
        let p = 1.25;
        let e = lp_energy(&f, &Ball::new(c1, 1.0), p).unwrap() + lp_energy(&f, &Ball::new(c2, 1.0), p).unwrap();
        let single = 2.0 * jensen_constant(p);
        assert!((e / single - 1.0).abs() < 0.02, "{e} vs {single}");
    }

    #[test]
    fn monotonicity_identity_holds() {
        let p = 1.25;
        let radii: Vec<f64> = (0..16).map(|i| 0.5 * 1.05f64.powi(i)).collect();
        let centered = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let rep = monotonicity_audit(&centered, &Vec3::zeros(), &radii, p).unwrap();
        assert!(rep.passed(), "{:?}", rep.checks);
        let off = AnalyticField::monopole(Vec3::new(0.3, 0.0, 0.0), 1).unwrap();
        let rep = monotonicity_audit(&off, &Vec3::zeros(), &radii, p).unwrap();
        assert!(rep.passed(), "{:?}", rep.checks);
        assert!(monotonicity_audit(&off, &Vec3::zeros(), &radii[..5], p).is_err());
    }

    #[test]
    fn blow_up_is_exact_for_monopoles() {
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        for s in [0.5, 0.1, 0.01] {
            let y = Vec3::new(0.3, -0.2, 0.7);
            let scaled = s * s * f.eval(&(s * y)).unwrap();
            assert!((scaled - f.eval(&y).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn eps_regularity_on_monopole_and_smooth_field() {
        let p = 1.25;
        let cfg = EpsRegularityConfig::default();
        let f = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
        let rep = eps_regularity_experiment(&f, p, &cfg).unwrap();
        assert!((rep.equality_ratio - 1.0).abs() < 1e-9);
        assert_eq!(rep.violating_cells, vec![[4, 4, 4]]);
        assert_eq!(rep.charge_cells, rep.violating_cells);
        assert!(rep.violating_energies[0] >= jensen_constant(p) * (1.0 - 1e-9));
        assert!(eps_regularity_experiment(&f.scaled(0.5), p, &cfg).is_err());
        let smooth = AnalyticField::smooth(SmoothTerm::Abc { amplitude: 0.2, wavenumber: 1.0 });
        let rep = eps_regularity_experiment(&smooth, p, &cfg).unwrap();
        assert!(rep.energy_b1 < jensen_constant(p));
        assert!(rep.violating_cells.is_empty() && rep.implication_holds);
    }
}
