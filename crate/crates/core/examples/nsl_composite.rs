// Two impurity models joined by a hopping of strength λ. At λ = 0 the
// Green's function splits into the blocks of the isolated systems.

use sescc::ccgf::{gf_block_matrix, CcgfContext, FrequencyGrid};
use sescc::ccsolver::{CcProblem, SolverConfig};
use sescc::model::CompositeSpec;

pub fn run_example() -> sescc::Result<Vec<f64>> {
    let cfg = SolverConfig::default();
    let grid = FrequencyGrid::new(vec![-2.0, -0.5, 0.5, 2.0], 0.05)?;
    let mut off_blocks = Vec::new();
    for lambda in [0.0, 0.1, 0.3] {
        let c = CompositeSpec::nsl(lambda).build()?;
        let problem = CcProblem::new(&c.hamiltonian, &c.reference, None)?;
        let sol = problem.solve_t(&cfg)?;
        let l = problem.solve_lambda(&sol, &cfg)?;
        let ctx = CcgfContext::new(&c.hamiltonian, &problem, &sol.t, &l, sol.energy)?;
        let g = gf_block_matrix(&ctx, &c.a_orbitals, &c.b_orbitals, &grid)?;
        let off = g.max_abs_where(|label| label == "env1" || label == "env2");
        println!("lambda {lambda:.1}: E = {:.9}, max |G_AB| = {off:.3e}", sol.energy);
        off_blocks.push(off);
    }
    Ok(off_blocks)
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
