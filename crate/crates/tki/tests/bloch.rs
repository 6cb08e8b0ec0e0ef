use std::collections::BTreeMap;

use proptest::prelude::*;
use tki::bloch::{
    berry_connection, diagonalize_grid, plane_chern, quaternionic_average, quaternionic_residual, sewing_field_with_limit,
    smooth_gauge, su_reduce, BZGrid, BlochError,
};
use tki::linalg::{CMatrix, C64, ZERO};
use tki::models::{make_model, BlochModel, Domain, TimeReversalOperator};

proptest! {
    #[test]
    fn grid_involution_negates_momenta(half in prop::collection::vec(1usize..6, 1..4)) {
        let sizes: Vec<usize> = half.iter().map(|h| 2 * h).collect();
        let g = BZGrid::torus(&sizes).unwrap();
        for n in 0..g.n_nodes() {
            prop_assert_eq!(g.index(&g.coords(n)), n);
            let m = g.involution(n);
            prop_assert_eq!(g.involution(m), n);
            for (a, b) in g.k_point(n).iter().zip(g.k_point(m)) {
                let s = (a + b).rem_euclid(std::f64::consts::TAU);
                prop_assert!(s < 1e-12 || (std::f64::consts::TAU - s) < 1e-12);
            }
        }
        let trims = g.trims();
        prop_assert_eq!(trims.len(), 1 << sizes.len());
        prop_assert!(trims.iter().all(|&t| g.involution(t) == t));
        let fixed = (0..g.n_nodes()).filter(|&n| g.involution(n) == n).count();
        prop_assert_eq!(fixed, trims.len());
    }
}

fn fkm(n: usize) -> (BlochModel, BZGrid) {
    (make_model("fkm3d", &BTreeMap::new()).unwrap(), BZGrid::cubic(3, n).unwrap())
}

#[test]
fn sewing_matrix_is_gauge_covariant() {
    let (m, g) = fkm(8);
    let frames = smooth_gauge(&diagonalize_grid(&m, &g).unwrap()).unwrap();
    let w = sewing_field_with_limit(&frames, &m.theta, f64::INFINITY).unwrap();
    // A smooth U(2) gauge change a(k) = exp(i φ(k) σ_z).
    let a: Vec<CMatrix> = (0..g.n_nodes())
        .map(|n| {
            let k = g.k_point(n);
            let phi = 0.3 * k[0].sin() + 0.2 * (k[1] + k[2]).cos();
            CMatrix::from_vec(2, 2, vec![C64::from_polar(1.0, phi), ZERO, ZERO, C64::from_polar(1.0, -phi)])
        })
        .collect();
    let w2 = sewing_field_with_limit(&frames.gauge_transform(&a), &m.theta, f64::INFINITY).unwrap();
    for n in 0..g.n_nodes() {
        let expect = &(&a[g.involution(n)].adjoint() * &w.w[n]) * &a[n].conj();
        assert!((&expect - &w2.w[n]).max_abs() < 1e-12);
    }
}

#[test]
fn sewing_field_relations() {
    let (m, g) = fkm(12);
    let frames = smooth_gauge(&diagonalize_grid(&m, &g).unwrap()).unwrap();
    let loose = || sewing_field_with_limit(&frames, &m.theta, f64::INFINITY).unwrap();
    for w in [loose(), su_reduce(&loose()).unwrap()] {
        assert!(w.unitarity_residual() < 1e-10);
        assert!(w.involution_residual() < 1e-10);
        assert!(w.trim_skew_residual() < 1e-10);
    }
}

#[test]
fn averaged_connection_is_quaternionic() {
    let (m, g) = fkm(8);
    let frames = smooth_gauge(&diagonalize_grid(&m, &g).unwrap()).unwrap();
    let w = sewing_field_with_limit(&frames, &m.theta, f64::INFINITY).unwrap();
    let a = berry_connection(&frames).unwrap();
    let avg = quaternionic_average(&a, &w).unwrap();
    assert!(quaternionic_residual(&avg, &w) < 1e-12);
    assert!(avg.quaternionic_residual < 1e-12);
}

/// Two-band Chern insulator without time reversal; the Θ passed along is
/// only there to satisfy the constructor.
fn chern_insulator(mass: f64) -> BlochModel {
    BlochModel::from_fn("chern", Domain::Torus(2), 1, TimeReversalOperator::standard(2), move |k| {
        let (dx, dy, dz) = (k[0].sin(), k[1].sin(), mass - k[0].cos() - k[1].cos());
        CMatrix::from_vec(2, 2, vec![C64::new(dz, 0.0), C64::new(dx, -dy), C64::new(dx, dy), C64::new(-dz, 0.0)])
    })
}

#[test]
fn chern_number_obstructs_a_smooth_gauge() {
    let g = BZGrid::cubic(2, 16).unwrap();
    let raw = diagonalize_grid(&chern_insulator(1.0), &g).unwrap();
    let c = plane_chern(&raw, (0, 1), 0);
    assert!((c.abs() - 1.0).abs() < 1e-9, "chern {c}");
    match smooth_gauge(&raw) {
        Err(BlochError::ChernObstruction { chern, .. }) => assert_eq!(chern.abs(), 1),
        other => panic!("expected an obstruction, got {:?}", other.map(|f| f.smoothness)),
    }
    let trivial = diagonalize_grid(&chern_insulator(3.0), &g).unwrap();
    assert!(plane_chern(&trivial, (0, 1), 0).abs() < 1e-9);
    assert!(smooth_gauge(&trivial).is_ok());
}

#[test]
fn gapless_node_is_reported() {
    let g = BZGrid::cubic(2, 8).unwrap();
    assert!(matches!(diagonalize_grid(&chern_insulator(2.0), &g), Err(BlochError::GaplessAt { .. })));
}
