use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use wbundle::field::AnalyticField;
use wbundle::plateau::{membership_check, snap_to_cell, BoundaryData, ChargeConfig3, Plateau};
use wbundle::sphere::{SphereMesh, Vec3};
use wbundle::Error;

fn cell() -> impl Strategy<Value = [usize; 3]> {
    [0usize..6, 0usize..6, 0usize..6]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The sorted sparse form agrees with a dense tally.
    #[test]
    fn charge_config_matches_tally(items in prop::collection::vec((cell(), -3i64..=3), 0..24)) {
        let c = ChargeConfig3::from_cells(&items);
        let mut tally: BTreeMap<[usize; 3], i64> = BTreeMap::new();
        for &(k, q) in &items {
            *tally.entry(k).or_default() += q;
        }
        tally.retain(|_, q| *q != 0);
        let want: Vec<_> = tally.into_iter().collect();
        prop_assert_eq!(c.entries(), &want[..]);
        prop_assert_eq!(c.total(), items.iter().map(|e| e.1).sum::<i64>());
    }

    #[test]
    fn adding_the_negation_empties(items in prop::collection::vec((cell(), -3i64..=3), 0..16)) {
        let mut c = ChargeConfig3::from_cells(&items);
        for &(k, q) in &items {
            c.add(k, -q);
        }
        prop_assert!(c.is_empty());
    }

    #[test]
    fn snapped_cell_contains_point(x in -0.99f64..0.99, y in -0.99f64..0.99, z in -0.99f64..0.99, n in 2usize..40) {
        let p = Vec3::new(x, y, z);
        let c = snap_to_cell(&p, n).unwrap();
        let h = 2.0 / n as f64;
        for a in 0..3 {
            let lo = -1.0 + c[a] as f64 * h;
            prop_assert!(lo <= p[a] + 1e-12 && p[a] < lo + h + 1e-12);
        }
    }
}

#[test]
fn boundary_fluxes_sum_to_degree() {
    for datum in [BoundaryData::Constant(1.0), BoundaryData::Constant(2.0), BoundaryData::TwoLobe] {
        let pl = Plateau::new(&datum, 1.25, 12, 1e-3).unwrap();
        assert!((pl.boundary_total() - datum.degree()).abs() < 1e-10, "{}", datum.label());
    }
}

#[test]
fn mismatched_charge_is_infeasible() {
    let pl = Plateau::new(&BoundaryData::Constant(1.0), 1.25, 8, 1e-3).unwrap();
    let empty = ChargeConfig3::empty();
    assert!(matches!(pl.validate(&empty), Err(Error::Infeasible(_))));
    let one = ChargeConfig3::from_cells(&[([4, 4, 4], 1)]);
    assert!(pl.validate(&one).is_ok());
}

#[test]
fn solved_field_is_conservative() {
    let pl = Plateau::new(&BoundaryData::Constant(1.0), 1.25, 10, 1e-3).unwrap();
    let charges = ChargeConfig3::from_cells(&[([5, 5, 5], 1)]);
    let sol = pl.solve(&charges, 1e-5, None).unwrap();
    assert!(sol.converged);
    assert!(sol.divergence_residual < 1e-9);
    assert!(sol.boundary_residual < 1e-9);
    let field = pl.to_field(&sol, &charges).unwrap();
    let q = field.charge_density();
    let n = pl.grid_size();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = [i, j, k];
                if pl.is_domain_cell(c) {
                    assert!((field.divergence(c) - q[field.cell_index(c)]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn trace_membership_separates_candidates() {
    let mesh = Arc::new(SphereMesh::icosphere(2).unwrap());
    let phi = BoundaryData::Constant(1.0).to_cochain(&mesh).unwrap();
    let own = AnalyticField::monopole(Vec3::zeros(), 1).unwrap();
    assert!(membership_check(&own, &phi, 0.25).unwrap().member);
    let double = AnalyticField::monopole(Vec3::zeros(), 2).unwrap();
    let prof = membership_check(&double, &phi, 0.25).unwrap();
    assert!(!prof.member);
    assert!(prof.distances.is_empty());
}
