// Subsystem flow: the embedded pair plus one external subsystem per
// maximal double excitation, iterated to a common fixed point.

use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::cluster::{ActiveSpace, SubsystemSpec};
use sescc::model::{exact_diagonalize, Siam, SiamParams};
use sescc::sesflow::{flow_iterate_in, incremental_subsystems};

pub fn run_example() -> sescc::Result<f64> {
    let h = Siam::new(SiamParams::three_site())?.hamiltonian();
    let reference = Siam::three_site_reference();
    let problem = CcProblem::new(&h, &reference, None)?;
    let emb = SubsystemSpec::new("emb", ActiveSpace::new(&reference, &[0], &[1])?);
    let mut subsystems = vec![emb.clone()];
    subsystems.extend(incremental_subsystems(&problem, &emb.active));

    let state = flow_iterate_in(&problem, &subsystems, &SolverConfig::default())?;
    let exact = exact_diagonalize(&h, problem.sector())?.ground_energy();
    for (s, e) in state.subsystems.iter().zip(&state.energies) {
        println!("{:<16} {:.9}", s.label, e);
    }
    println!("iterations {}  spread {:.2e}  |E - E_exact| {:.2e}", state.iteration, state.spread, (state.energy() - exact).abs());
    Ok(state.energy())
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
