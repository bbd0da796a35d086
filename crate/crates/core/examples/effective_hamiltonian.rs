// Active-space effective Hamiltonians (bar, doublebar, tilde) for the
// embedded pair of orbitals {0} -> {1}.

use sescc::ccgf::EmbeddingAmplitudes;
use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::cluster::ActiveSpace;
use sescc::model::{Siam, SiamParams};
use sescc::sesflow::{build_heff_in, diagonalize_heff, Flavor, HeffExtras};

pub fn run_example() -> sescc::Result<Vec<f64>> {
    let cfg = SolverConfig::default();
    let h = Siam::new(SiamParams::three_site())?.hamiltonian();
    let reference = Siam::three_site_reference();
    let problem = CcProblem::new(&h, &reference, None)?;
    let sol = problem.solve_t(&cfg)?;
    let lambda = problem.solve_lambda(&sol, &cfg)?;
    let active = ActiveSpace::new(&reference, &[0], &[1])?;
    let amps = EmbeddingAmplitudes::from_ground_state(&problem, &sol.t, &lambda, &active, &cfg)?;
    let extras = HeffExtras { s_ext: Some(amps.s_ext.clone()), t_int: Some(amps.t_int.clone()) };

    let mut energies = Vec::new();
    for flavor in [Flavor::Bar, Flavor::DoubleBar, Flavor::Tilde] {
        let heff = build_heff_in(flavor, &problem, &active, &amps.t_ext, &extras)?;
        let pair = diagonalize_heff(&heff)?;
        println!("{flavor:?}: basis {:?}", heff.basis.iter().map(|d| d.to_string()).collect::<Vec<_>>());
        println!("{:.8}", heff.matrix);
        println!("  lowest eigenvalue {:.9}", pair.energy);
        println!("  right {:.8?}  left {:.8?}", pair.right.as_slice(), pair.left.as_slice());
        energies.push(pair.energy);
    }
    println!("CC energy {:.9}", sol.energy);
    Ok(energies)
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
