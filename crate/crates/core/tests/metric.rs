use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wbundle::metric::{convex_flow_min, slice_distance, DistanceOptions};
use wbundle::sphere::harmonics::random_smooth;
use wbundle::sphere::{SphereMesh, TwoCochain};

fn mesh() -> Arc<SphereMesh> {
    Arc::new(SphereMesh::icosphere(1).unwrap())
}

fn opts() -> DistanceOptions {
    DistanceOptions { restarts: 0, ..Default::default() }
}

fn sample(m: &Arc<SphereMesh>, degree: i64, seed: u64) -> TwoCochain {
    random_smooth(m, degree, 3, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn distance_is_symmetric(degree in 0i64..3, s1 in 0u64..1000, s2 in 0u64..1000, p in 1.1f64..2.0) {
        let m = mesh();
        let (a, b) = (sample(&m, degree, s1), sample(&m, degree, s2));
        let dab = slice_distance(&a, &b, p, &opts()).unwrap().value;
        let dba = slice_distance(&b, &a, p, &opts()).unwrap().value;
        prop_assert!((dab - dba).abs() <= 1e-6 * (1.0 + dab));
        prop_assert!(dab >= 0.0);
    }

    // Only the difference matters.
    #[test]
    fn distance_is_translation_invariant(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
        let m = mesh();
        let (a, b, g) = (sample(&m, 1, s1), sample(&m, 1, s2), sample(&m, 0, s3));
        let d = slice_distance(&a, &b, 1.5, &opts()).unwrap().value;
        let shifted = slice_distance(&a.try_add(&g).unwrap(), &b.try_add(&g).unwrap(), 1.5, &opts()).unwrap().value;
        prop_assert!((d - shifted).abs() <= 1e-6 * (1.0 + d));
    }

    #[test]
    fn distance_to_self_vanishes(degree in 0i64..3, s in 0u64..1000) {
        let m = mesh();
        let a = sample(&m, degree, s);
        prop_assert!(slice_distance(&a, &a, 1.5, &opts()).unwrap().value <= 1e-10);
    }
}

// A small mismatch cannot pay for an integer charge, so the distance is the
// pure flow norm, homogeneous in the amplitude.
#[test]
fn small_mismatch_is_the_flow_norm() {
    let m = mesh();
    let a = sample(&m, 1, 7);
    let g = sample(&m, 0, 8);
    for eps in [1e-3, 1e-2] {
        let b = a.try_add(&g.scaled(eps)).unwrap();
        let d = slice_distance(&a, &b, 1.5, &opts()).unwrap();
        let (_, norm) = convex_flow_min(&g.scaled(eps), 1.5, 1e-9).unwrap();
        assert!(d.charges.is_empty());
        assert!((d.value - norm).abs() <= 1e-5 * norm, "{} vs {}", d.value, norm);
    }
}

#[test]
fn charges_carry_the_degree_difference() {
    let m = mesh();
    let d = slice_distance(&sample(&m, 1, 1), &sample(&m, 2, 2), 1.5, &opts()).unwrap();
    assert_eq!(d.charges.total(), 1);
    assert!(d.residual < 1e-9);
}
