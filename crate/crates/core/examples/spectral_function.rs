// Impurity spectral function from the coupled-cluster Green's function next
// to the exact Lehmann sum.

use sescc::ccgf::{find_peaks, gf_matrix, spectral_function, CcgfContext, FrequencyGrid};
use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::fockspace::{SectorBasis, Spin};
use sescc::model::{exact_diagonalize, lehmann_gf, Siam, SiamParams};
use std::sync::Arc;

pub fn run_example() -> sescc::Result<Vec<f64>> {
    let cfg = SolverConfig::default();
    let siam = Siam::new(SiamParams::symmetric(2.0))?;
    let h = siam.hamiltonian();
    let problem = CcProblem::new(&h, &Siam::three_site_reference(), None)?;
    let sol = problem.solve_t(&cfg)?;
    let lambda = problem.solve_lambda(&sol, &cfg)?;
    let ctx = CcgfContext::new(&h, &problem, &sol.t, &lambda, sol.energy)?;

    let grid = FrequencyGrid::uniform(-5.0, 5.0, 0.01, 0.05)?;
    let probes = [siam.impurity(Spin::Up), siam.impurity(Spin::Down)];
    let cc = spectral_function(&gf_matrix(&ctx, &probes, &grid)?);

    let ed = |n: usize| -> sescc::Result<_> { exact_diagonalize(&h, &Arc::new(SectorBasis::new(6, n)?)) };
    let exact = spectral_function(&lehmann_gf(&exact_diagonalize(&h, problem.sector())?, &ed(2)?, &ed(4)?, &probes, &grid)?);

    println!("spin up, CC    {:.4?}", cc.peaks(0, 1e-3));
    println!("spin up, exact {:.4?}", exact.peaks(0, 1e-3));
    println!("spin-up weight on grid {:.4}", cc.integral(0));
    // the doublet ground state breaks the symmetry of each spin channel, not of the sum
    let peaks = find_peaks(&cc.omegas, &cc.sum_over(&probes), 1e-3);
    println!("spin-summed peaks {:.4?}", peaks);
    Ok(peaks)
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
