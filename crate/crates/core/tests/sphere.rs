use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use wbundle::sphere::{solve_poisson, SphereMesh, TwoCochain, Vec3};

#[test]
fn icospheres_are_closed_surfaces() {
    for level in 0..5 {
        let m = SphereMesh::icosphere(level).unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.n_faces(), 20 * 4usize.pow(level));
        assert!((m.total_area() - 4.0 * PI).abs() < 1e-10);
    }
}

#[test]
fn mesh_hash_is_stable_and_distinguishing() {
    let a = SphereMesh::icosphere(2).unwrap();
    let b = SphereMesh::icosphere(2).unwrap();
    let c = SphereMesh::icosphere(3).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(vals in prop::collection::vec(-10.0f64..10.0, 80)) {
        let m = Arc::new(SphereMesh::icosphere(1).unwrap());
        let c = TwoCochain::new(m.clone(), vals).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = TwoCochain::read_csv(m, &buf[..]).unwrap();
        for (a, b) in c.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    // The Poisson gradient carries exactly the prescribed mismatch.
    #[test]
    fn poisson_gradient_has_the_right_codifferential(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0) {
        let m = Arc::new(SphereMesh::icosphere(2).unwrap());
        let axis = Vec3::new(ax, ay, az);
        let f = TwoCochain::from_density(m.clone(), |x| x.dot(&axis));
        let sol = solve_poisson(&f).unwrap();
        let div = sol.flow.codifferential();
        let scale = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
        for (a, b) in div.values().iter().zip(f.values()) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }
}
