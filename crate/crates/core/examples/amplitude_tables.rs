// t, λ and s amplitudes of the converged ground state, and the Λ ↔ S maps.

use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::ccgf::EmbeddingAmplitudes;
use sescc::cluster::{lambda_from_s, ActiveSpace, AmplitudeSet};
use sescc::model::{Siam, SiamParams};

pub fn run_example() -> sescc::Result<[AmplitudeSet; 3]> {
    let cfg = SolverConfig::default();
    let h = Siam::new(SiamParams::three_site())?.hamiltonian();
    let problem = CcProblem::new(&h, &Siam::three_site_reference(), None)?;
    let sol = problem.solve_t(&cfg)?;
    let lambda = problem.solve_lambda(&sol, &cfg)?;
    // with an empty active space every signature is external, so S_ext is the full S
    let s = EmbeddingAmplitudes::from_ground_state(&problem, &sol.t, &lambda, &ActiveSpace::empty(), &cfg)?.s_ext;

    println!("{:<12} {:>12} {:>12} {:>12}", "excitation", "t", "lambda", "s");
    for (e, t) in sol.t.iter() {
        println!("{:<12} {:>12.6} {:>12.6} {:>12.6}", e.to_string(), t, lambda.get(e), s.get(e));
    }
    println!("max |Λ(S) - Λ| = {:.2e}", lambda_from_s(&s)?.max_abs_diff(&lambda));
    Ok([sol.t, lambda, s])
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
