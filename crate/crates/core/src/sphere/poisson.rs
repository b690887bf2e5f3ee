//! Poisson problem on the dual graph of a sphere mesh.

use std::sync::Arc;

use super::cochain::{OneFormCochain, TwoCochain};
use super::mesh::SphereMesh;
use crate::error::{Error, Result};
use crate::linalg::solve_laplacian;

/// Degree tolerance below which a right-hand side counts as compatible.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Face-centred potential `g` of a Poisson solve together with its flow
/// `α = G g`, `G` the weighted dual-graph gradient.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub potential: Vec<f64>,
    pub flow: OneFormCochain,
    pub relative_residual: f64,
}

/// Dual-graph conductances `l_e / d_e` with `d_e` the dual edge length.
pub fn conductances(mesh: &SphereMesh) -> Vec<f64> {
    (0..mesh.n_edges()).map(|e| mesh.edge_lengths()[e] / mesh.dual_length(e)).collect()
}

/// Applies the weighted gradient: `(G g)_e = (l_e/d_e)(g_left - g_right)`.
pub fn gradient(mesh: &Arc<SphereMesh>, g: &[f64]) -> OneFormCochain {
    let k = conductances(mesh);
    let mut vals = mesh.dual().gradient(g);
    vals.iter_mut().zip(&k).for_each(|(v, k)| *v *= k);
    OneFormCochain::new(mesh.clone(), vals).expect("edge count matches")
}

/// Solves `codifferential(G g) = f` for a mean-zero face potential `g`.
///
/// `f` must have zero degree: on the closed sphere the codifferential of any
/// 1-form integrates to zero.
pub fn solve_poisson(f: &TwoCochain) -> Result<PoissonSolution> {
    let deg = f.degree();
    if deg.abs() >= COMPATIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "Poisson right-hand side has degree {deg:.3e}; it must vanish on the sphere"
        )));
    }
    let mesh = f.mesh().clone();
    let n = mesh.n_faces();
    // remove the admissible round-off so the grounded system is consistent
    let shift = deg / n as f64;
    let rhs: Vec<f64> = f.values().iter().map(|v| v - shift).collect();
    let k = conductances(&mesh);
    let mut g = vec![0.0; n];
    solve_laplacian(mesh.dual(), &k, None, &rhs, &mut g, 1e-13, 20 * n);
    let mean = g.iter().sum::<f64>() / n as f64;
    g.iter_mut().for_each(|x| *x -= mean);
    let flow = gradient(&mesh, &g);
    let res = flow.codifferential();
    let rnorm = res
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let fnorm = f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let relative_residual = if fnorm > 0.0 { rnorm / fnorm } else { 0.0 };
    Ok(PoissonSolution { potential: g, flow, relative_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::harmonics::l1_band;

    #[test]
    fn zero_rhs() {
        let m = Arc::new(SphereMesh::icosphere(2).unwrap());
        let s = solve_poisson(&TwoCochain::zeros(m)).unwrap();
        assert!(s.potential.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn nonzero_degree_rejected() {
        let m = Arc::new(SphereMesh::icosphere(2).unwrap());
        let f = TwoCochain::constant(m, 1.0);
        assert!(matches!(solve_poisson(&f), Err(Error::Infeasible(_))));
    }

    #[test]
    fn codifferential_of_gradient_is_laplacian() {
        // oracle: assemble the dense incidence and conductance matrices and
        // compose them directly
        let m = Arc::new(SphereMesh::icosphere(1).unwrap());
        let (nf, ne) = (m.n_faces(), m.n_edges());
        let mut d = vec![vec![0.0; ne]; nf];
        for (e, &[l, r]) in m.edge_faces().iter().enumerate() {
            d[l][e] = 1.0;
            d[r][e] = -1.0;
        }
        let k = conductances(&m);
        let g: Vec<f64> = (0..nf).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let mut lap_g = vec![0.0; nf];
        for i in 0..nf {
            for j in 0..nf {
                let lij: f64 = (0..ne).map(|e| d[i][e] * k[e] * d[j][e]).sum();
                lap_g[i] += lij * g[j];
            }
        }
        let got = gradient(&m, &g).codifferential();
        for (a, b) in got.values().iter().zip(&lap_g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_band_spectral_oracle() {
        // -Δ Y = 2 Y for degree-one harmonics, so |∇g|_2 = |f|_2 / sqrt(2)
        let m = Arc::new(SphereMesh::icosphere(4).unwrap());
        let f = l1_band(&m, nalgebra::Vector3::z());
        assert!((f.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-12);
        let s = solve_poisson(&f).unwrap();
        assert!(s.relative_residual < 1e-10);
        let v = s.flow.lp_norm(2.0).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 0.02 * 0.5f64.sqrt(), "{v}");
    }

    #[test]
    fn random_degree_zero_residual() {
        use rand::{Rng, SeedableRng};
        let m = Arc::new(SphereMesh::icosphere(3).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..m.n_faces()).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..m.n_faces()).map(|_| rng.gen::<f64>()).collect();
        let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
        let n = m.n_faces() as f64;
        let vals: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - sa / n) - (y - sb / n)).collect();
        let f = TwoCochain::new(m, vals).unwrap();
        let s = solve_poisson(&f).unwrap();
        assert!(s.relative_residual <= 1e-10, "{}", s.relative_residual);
    }
}
