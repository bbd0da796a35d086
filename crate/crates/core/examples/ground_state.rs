// Coupled-cluster ground state of the three-site impurity model, checked
// against exact diagonalization.

use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::model::{exact_diagonalize, Siam, SiamParams};

pub fn run_example() -> sescc::Result<f64> {
    let siam = Siam::new(SiamParams::three_site())?;
    let h = siam.hamiltonian();
    let problem = CcProblem::new(&h, &Siam::three_site_reference(), None)?;
    let sol = problem.solve_t(&SolverConfig::default())?;
    let exact = exact_diagonalize(&h, problem.sector())?.ground_energy();
    println!("sector dimension   {}", problem.sector().len());
    println!("reference energy   {:.9}", problem.reference_energy());
    println!("CC energy          {:.9}  ({} iterations)", sol.energy, sol.iterations);
    println!("exact energy       {:.9}", exact);
    Ok(sol.energy)
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
