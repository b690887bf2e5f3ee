//! A chain of shrinking dipoles with finite total length and divergent
//! energy lower bound.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AnalyticField, VectorField};
use crate::error::{domain, Error, Result};
use crate::linalg::gauss_legendre01;
use crate::sphere::{SphereMesh, Vec3};

/// Balls `B_i` of radius `a_i = c i^{-1/(3-2p)}` laid end to end along the
/// x axis from `x = -1`, each holding a `+1` charge at `center + a_i/2` and
/// a `-1` charge at `center - a_i/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DipoleChain {
    pub p: f64,
    pub c: f64,
    pub radii: Vec<f64>,
    pub centers: Vec<f64>,
}

/// The chain with the largest constant that keeps `Σ a_i <= 1`.
pub fn dipole_chain(p: f64, n: usize) -> Result<DipoleChain> {
    check(p, n)?;
    let e = 1.0 / (3.0 - 2.0 * p);
    let s: f64 = (1..=n).map(|i| (i as f64).powf(-e)).sum();
    DipoleChain::with_constant(p, n, 1.0 / s)
}

fn check(p: f64, n: usize) -> Result<()> {
    if !(p > 1.0 && p < 1.5) {
        return Err(domain(format!("dipole chains need p in (1, 1.5), got {p}")));
    }
    if n == 0 || n > 10_000 {
        return Err(domain(format!("chain length {n} outside 1..=10000")));
    }
    Ok(())
}

impl DipoleChain {
    pub fn with_constant(p: f64, n: usize, c: f64) -> Result<Self> {
        check(p, n)?;
        if !(c > 0.0) {
            return Err(domain("chain constant must be positive"));
        }
        let e = 1.0 / (3.0 - 2.0 * p);
        let radii: Vec<f64> = (1..=n).map(|i| c * (i as f64).powf(-e)).collect();
        let total: f64 = radii.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(domain(format!("balls overflow the unit segment: Σ a_i = {total:.6}")));
        }
        let mut centers = Vec::with_capacity(n);
        let mut left = -1.0;
        for a in &radii {
            centers.push(left + a);
            left += 2.0 * a;
        }
        Ok(Self { p, c, radii, centers })
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Positions of the `+1` and `-1` charges of ball `i`.
    pub fn poles(&self, i: usize) -> (Vec3, Vec3) {
        let (x, a) = (self.centers[i], self.radii[i]);
        (Vec3::new(x + 0.5 * a, 0.0, 0.0), Vec3::new(x - 0.5 * a, 0.0, 0.0))
    }

    pub fn field(&self) -> AnalyticField {
        (0..self.len()).fold(AnalyticField::default(), |f, i| {
            let (plus, minus) = self.poles(i);
            f.with_charge(plus, 1.0).with_charge(minus, -1.0)
        })
    }

    /// `Σ_{i<=m} a_i^{3-2p}` for `m = 1..=N`.
    pub fn partial_sums(&self) -> Vec<f64> {
        let q = 3.0 - 2.0 * self.p;
        self.radii
            .iter()
            .scan(0.0, |s, a| {
                *s += a.powf(q);
                Some(*s)
            })
            .collect()
    }

    /// Constant `K(p)` with `K a^{3-2p}` the energy forced into a ball of
    /// radius `a` by a dipole of length `a`: two disjoint balls of radius
    /// `a/2`, one per pole, each sliced by spheres of flux one.
    pub fn ball_constant(p: f64) -> f64 {
        2.0 * (4.0 * PI).powf(1.0 - p) * 0.5f64.powf(3.0 - 2.0 * p) / (3.0 - 2.0 * p)
    }

    /// Per-ball lower bounds from Jensen on each sphere around a pole:
    /// `∫_{B(pole, a/2)} |X|^p >= ∫ (4π s^2)^{1-p} |flux(s)|^p ds`, with the
    /// fluxes measured on slices of the whole chain.
    pub fn jensen_bounds(&self, mesh: &Arc<SphereMesh>, nodes: usize) -> Result<Vec<f64>> {
        let field = self.field();
        let p = self.p;
        let q = 3.0 - 2.0 * p;
        let gl = gauss_legendre01(nodes);
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let half = 0.5 * self.radii[i];
            let (plus, minus) = self.poles(i);
            let mut bound = 0.0;
            for pole in [plus, minus] {
                // s = half t^{1/q} turns s^{2-2p} ds into a constant times dt
                for &(t, w) in &gl {
                    let s = half * t.powf(1.0 / q);
                    let f = match field.flux(&pole, s, mesh) {
                        Ok(f) => f,
                        Err(Error::DegenerateSlice(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    bound += w * (4.0 * PI).powf(1.0 - p) * half.powf(q) / q * f.abs().powf(p);
                }
            }
            out.push(bound);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_partial_sums() {
        let ch = dipole_chain(1.25, 100).unwrap();
        let total: f64 = ch.radii.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // balls are disjoint and end at x = 1
        for i in 1..ch.len() {
            assert!(ch.centers[i] - ch.radii[i] >= ch.centers[i - 1] + ch.radii[i - 1] - 1e-12);
        }
        let h100: f64 = (1..=100).map(|i| 1.0 / i as f64).sum();
        let s = ch.partial_sums();
        assert!((s[99] - ch.c.sqrt() * h100).abs() < 1e-12);
        assert!((h100 - 5.187).abs() < 1e-3);
        assert!(DipoleChain::with_constant(1.25, 100, 0.7).is_err());
        assert!(dipole_chain(1.6, 10).is_err());
    }

    #[test]
    fn dipole_fluxes_and_bounds() {
        let ch = dipole_chain(1.25, 6).unwrap();
        let mesh = Arc::new(SphereMesh::icosphere(1).unwrap());
        let f = ch.field();
        for i in 0..ch.len() {
            let x = Vec3::new(ch.centers[i], 0.0, 0.0);
            assert!(f.flux(&x, 0.9 * ch.radii[i], &mesh).unwrap().abs() < 1e-9);
            let (plus, _) = ch.poles(i);
            assert!((f.flux(&plus, 0.3 * ch.radii[i], &mesh).unwrap() - 1.0).abs() < 1e-9);
        }
        let b = ch.jensen_bounds(&mesh, 4).unwrap();
        let k = DipoleChain::ball_constant(1.25);
        for (bi, a) in b.iter().zip(&ch.radii) {
            assert!((bi / (k * a.sqrt()) - 1.0).abs() < 1e-9);
        }
    }
}
