use std::sync::Arc;

use proptest::prelude::*;
use wbundle::energy::monopole_ball_energy;
use wbundle::field::{flux, AnalyticField, GridField, SmoothTerm, VectorField};
use wbundle::sphere::{SphereMesh, Vec3};

fn coord() -> impl Strategy<Value = f64> {
    // keep charges off the cell faces of a spacing-0.1 grid
    (-6i32..6).prop_map(|i| 0.1 * i as f64 + 0.037)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Discrete Gauss law on every box of the rasterized grid.
    #[test]
    fn rasterized_boxes_conserve_charge(
        charges in prop::collection::vec((coord(), coord(), coord(), -2i64..=2), 1..4),
        lo in [0usize..8, 0usize..8, 0usize..8],
        ext in [1usize..8, 1usize..8, 1usize..8],
    ) {
        let mut f = AnalyticField::default();
        for &(x, y, z, q) in &charges {
            f = f.with_charge(Vec3::new(x, y, z), q as f64);
        }
        let g = GridField::rasterize(&f, [16, 16, 16], 0.1, Vec3::new(-0.8, -0.8, -0.8)).unwrap();
        prop_assert!(g.divergence_defect() < 1e-9);
        let hi = [(lo[0] + ext[0]).min(16), (lo[1] + ext[1]).min(16), (lo[2] + ext[2]).min(16)];
        let q = g.box_charge(lo, hi);
        prop_assert!((g.box_flux(lo, hi).unwrap() - q).abs() < 1e-9);
        prop_assert!((q - q.round()).abs() < 1e-12);
    }
}

#[test]
fn sphere_flux_counts_enclosed_charge() {
    let mesh = Arc::new(SphereMesh::icosphere(3).unwrap());
    let f = AnalyticField::monopole(Vec3::new(0.2, 0.0, 0.0), 1)
        .unwrap()
        .with_charge(Vec3::new(-0.5, 0.1, 0.0), -2.0);
    let centers = [(Vec3::zeros(), 0.3, 1.0), (Vec3::zeros(), 0.8, -1.0), (Vec3::new(-0.5, 0.0, 0.0), 0.2, -2.0)];
    for (x, r, want) in centers {
        assert!((flux(&f, &x, r, &mesh).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn monopole_energy_matches_closed_form() {
    // centered unit monopole: 4π ∫ (1/4πr²)^p r² dr over (0, R)
    for p in [1.1, 1.25, 1.4] {
        let r: f64 = 0.7;
        let want = (4.0 * std::f64::consts::PI).powf(1.0 - p) * r.powf(3.0 - 2.0 * p) / (3.0 - 2.0 * p);
        let got = monopole_ball_energy(1.0, 0.0, r, p);
        assert!((got - want).abs() <= 1e-10 * want, "p = {p}: {got} vs {want}");
    }
}

#[test]
fn grid_round_trips_through_disk() {
    let f = AnalyticField::monopole(Vec3::new(0.03, 0.01, -0.02), 1).unwrap();
    let g = GridField::rasterize(&f, [6, 5, 4], 0.25, Vec3::new(-0.75, -0.625, -0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    g.save(&path).unwrap();
    let back = GridField::load(&path).unwrap();
    assert_eq!(back.dims(), g.dims());
    for a in 0..3 {
        assert_eq!(back.fluxes()[a], g.fluxes()[a]);
    }
    assert!(back.divergence_defect() < 1e-12);
}

#[test]
fn analytic_field_survives_json() {
    let f = AnalyticField::monopole(Vec3::new(0.1, 0.2, 0.3), -1)
        .unwrap()
        .with_smooth(SmoothTerm::Uniform { b: [0.0, 0.0, 1.0] });
    let back = AnalyticField::from_json(&f.to_json().unwrap()).unwrap();
    let y = Vec3::new(0.5, -0.2, 0.1);
    assert!((back.eval(&y).unwrap() - f.eval(&y).unwrap()).norm() < 1e-15);
}
