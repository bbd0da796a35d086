use sescc::ccgf::{
    gf_effective, gf_element, gf_matrix, gf_multicenter, gf_poles, gf_split, spectral_function, CcgfContext,
    EmbeddingAmplitudes, FrequencyGrid,
};
use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::cluster::{split, ActiveSpace, AmplitudeSet};
use sescc::fockspace::SecondQuantizedOp;
use sescc::model::{Composite, CompositeSpec, Siam, SiamParams};

fn tight() -> SolverConfig {
    SolverConfig { tol: 1e-13, ..SolverConfig::default() }
}

struct Solved {
    problem: CcProblem,
    energy: f64,
    t: AmplitudeSet,
    lambda: AmplitudeSet,
}

fn solve(h: &SecondQuantizedOp, reference: &sescc::fockspace::Determinant) -> Solved {
    let problem = CcProblem::new(h, reference, None).unwrap();
    let sol = problem.solve_t(&tight()).unwrap();
    let lambda = problem.solve_lambda(&sol, &tight()).unwrap();
    Solved { energy: sol.energy, t: sol.t, lambda, problem }
}

fn context(h: &SecondQuantizedOp, s: &Solved) -> CcgfContext {
    CcgfContext::new(h, &s.problem, &s.t, &s.lambda, s.energy).unwrap()
}

fn decoupled() -> (Composite, Solved, ActiveSpace) {
    let c = CompositeSpec::nsl(0.0).build().unwrap();
    let s = solve(&c.hamiltonian, &c.reference);
    let occ: Vec<usize> = c.reference.occupied().into_iter().filter(|p| c.a_orbitals.contains(p)).collect();
    let vir: Vec<usize> = c.reference.unoccupied().into_iter().filter(|p| c.a_orbitals.contains(p)).collect();
    let active = ActiveSpace::new(&c.reference, &occ, &vir).unwrap();
    (c, s, active)
}

#[test]
fn peak_height_scales_inversely_with_broadening() {
    let h = Siam::new(SiamParams::three_site()).unwrap().hamiltonian();
    let s = solve(&h, &Siam::three_site_reference());
    let ctx = context(&h, &s);
    let (ip, ea) = gf_poles(&ctx, 1, 1).unwrap();
    let mut at: Vec<f64> = ip.iter().chain(&ea).filter(|p| p.residue.abs() > 0.05).map(|p| p.position).collect();
    at.sort_by(f64::total_cmp);
    assert!(at.len() >= 2);
    let height = |eta: f64| {
        let grid = FrequencyGrid::new(at.clone(), eta).unwrap();
        spectral_function(&gf_matrix(&ctx, &[1], &grid).unwrap()).values[0].clone()
    };
    let (narrow, wide) = (height(0.002), height(0.004));
    for (n, w) in narrow.iter().zip(&wide) {
        let ratio = n / w;
        assert!((ratio - 2.0).abs() < 0.02, "height ratio {ratio}");
    }
}

#[test]
fn frequencies_are_independent() {
    let h = Siam::new(SiamParams::three_site()).unwrap().hamiltonian();
    let s = solve(&h, &Siam::three_site_reference());
    let ctx = context(&h, &s);
    let omegas = vec![-3.0, -1.25, 0.0, 0.4, 2.5];
    let all = gf_matrix(&ctx, &[1, 4], &FrequencyGrid::new(omegas.clone(), 0.05).unwrap()).unwrap();
    for (i, &w) in omegas.iter().enumerate() {
        let one = gf_matrix(&ctx, &[1, 4], &FrequencyGrid::new(vec![w], 0.05).unwrap()).unwrap();
        assert_eq!(one.total(0), all.total(i));
    }
    let element = gf_element(&ctx, 1, 1, &FrequencyGrid::new(omegas, 0.05).unwrap()).unwrap();
    for (i, g) in element.iter().enumerate() {
        assert!((g - all.total(i)[(0, 0)]).norm() < 1e-12);
    }
}

#[test]
fn decoupled_subsystem_has_no_external_contribution() {
    let (c, s, active) = decoupled();
    let ctx = context(&c.hamiltonian, &s);
    let amps = EmbeddingAmplitudes::from_ground_state(&s.problem, &s.t, &s.lambda, &active, &tight()).unwrap();
    let (lambda_int, _) = split(&s.lambda, &active);
    let grid = FrequencyGrid::new(vec![-2.0, -0.3, 0.9], 0.05).unwrap();
    for &k in &c.a_orbitals {
        for part in gf_split(&ctx, k, k, &active, &lambda_int, &amps.s_ext, &grid).unwrap() {
            assert!(part.external.norm() < 1e-9, "G_ext = {}", part.external);
            assert!((part.internal - part.total).norm() < 1e-9);
        }
    }
}

#[test]
fn active_space_gf_of_decoupled_subsystem_matches_isolated() {
    let (c, s, active) = decoupled();
    let amps = EmbeddingAmplitudes::from_ground_state(&s.problem, &s.t, &s.lambda, &active, &tight()).unwrap();
    let iso = solve(&c.h_a, &c.reference_a);
    let iso_ctx = context(&c.h_a, &iso);
    let grid = FrequencyGrid::new(vec![-2.0, -0.3, 0.9, 1.7], 0.05).unwrap();
    for (local, &k) in c.a_orbitals.iter().enumerate() {
        let eff = gf_effective(&c.hamiltonian, &s.problem, &amps, s.energy, k, k, &grid).unwrap();
        let reference = gf_element(&iso_ctx, local, local, &grid).unwrap();
        for (a, b) in eff.iter().zip(&reference) {
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn multicenter_blocks_are_labelled_and_decouple() {
    let (c, s, _) = decoupled();
    let ctx = context(&c.hamiltonian, &s);
    let grid = FrequencyGrid::new(vec![-1.0, 0.5], 0.05).unwrap();
    let centers = vec![c.a_orbitals.clone(), c.b_orbitals.clone()];
    let g = gf_multicenter(&ctx, &centers, &[], &grid).unwrap();
    let layout = g.blocks.as_ref().unwrap();
    let (a0, b0) = (g.probe_position(c.a_orbitals[0]).unwrap(), g.probe_position(c.b_orbitals[0]).unwrap());
    assert_eq!(layout.label(a0, a0), "emb(1)");
    assert_eq!(layout.label(b0, b0), "emb(2)");
    assert_eq!(layout.label(a0, b0), "env");
    assert!(g.max_abs_where(|l| l == "env") < 1e-9);
    assert!(g.max_abs_where(|l| l.starts_with("emb")) > 0.1);

    let shared = gf_multicenter(&ctx, &[vec![0, 1], vec![1, 2]], &[3], &grid).unwrap();
    assert_eq!(shared.probes, vec![0, 1, 2, 3]);
    assert!(gf_multicenter(&ctx, &[vec![0, 1]], &[1], &grid).is_err());
}
