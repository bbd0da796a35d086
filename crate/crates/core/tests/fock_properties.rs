use std::sync::Arc;

use proptest::prelude::*;

use sescc::fockspace::{dense_matrix, Determinant, LadderOp, SecondQuantizedOp, SectorBasis};
use sescc::model::{build_siam, SiamParams};

fn det(bits: u64) -> Determinant {
    let occ: Vec<usize> = (0..6).filter(|p| bits >> p & 1 == 1).collect();
    Determinant::new(6, &occ).unwrap()
}

fn amplitude(d: &Determinant, ops: &[LadderOp], target: &Determinant) -> f64 {
    match d.apply_string(ops) {
        Some((r, s)) if r == *target => s,
        _ => 0.0,
    }
}

#[test]
fn excitation_sign_on_reference() {
    let d = Determinant::parse("100110").unwrap();
    let (r, s) = d.apply_string(&[LadderOp::create(5), LadderOp::annihilate(3)]).unwrap();
    assert_eq!(r.to_string(), "100011");
    assert_eq!(s, -1.0);
}

proptest! {
    #[test]
    fn ladder_operators_anticommute(bits in 0u64..64, p in 0usize..6, q in 0usize..6) {
        let d = det(bits);
        let (a, ad) = (LadderOp::annihilate(p), LadderOp::create(q));
        // {a_p, a_q†} maps d to δ_pq d; every other output determinant has zero weight
        for t in 0u64..64 {
            let target = det(t);
            let v = amplitude(&d, &[a, ad], &target) + amplitude(&d, &[ad, a], &target);
            let expect = if p == q && target == d { 1.0 } else { 0.0 };
            prop_assert_eq!(v, expect);
        }
        let same = amplitude(&d, &[LadderOp::create(p), LadderOp::create(q)], &det(bits | 1 << p | 1 << q))
            + amplitude(&d, &[LadderOp::create(q), LadderOp::create(p)], &det(bits | 1 << p | 1 << q));
        prop_assert_eq!(same, 0.0);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_number(
        eps_c in -2.0f64..2.0,
        u in 0.0f64..6.0,
        e1 in -2.0f64..2.0,
        e2 in -2.0f64..2.0,
        v1 in -1.5f64..1.5,
        v2 in -1.5f64..1.5,
        n in 0usize..=6,
    ) {
        let h = build_siam(&SiamParams { eps_c, mu: 0.0, u, eps_d: vec![e1, e2], v: vec![v1, v2] }).unwrap();
        prop_assert_eq!(h.particle_change(), Some(0));
        let sector = Arc::new(SectorBasis::new(6, n).unwrap());
        let m = dense_matrix(&h, &sector, &sector).unwrap();
        prop_assert!((&m - m.transpose()).amax() < 1e-14);
        // commutes with the total number operator
        let num = SecondQuantizedOp::number_operator(6);
        let nm = dense_matrix(&num, &sector, &sector).unwrap();
        prop_assert!((&m * &nm - &nm * &m).amax() < 1e-12);
        for i in 0..sector.len() {
            prop_assert_eq!(nm[(i, i)], n as f64);
        }
    }
}
