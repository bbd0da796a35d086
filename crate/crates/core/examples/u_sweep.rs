// Energy error and impurity double occupancy as external subsystems are
// added to the flow, for several interaction strengths.

use sescc::cli::{sweep_rows, SweepRow};
use sescc::config::RunConfig;

pub fn run_example() -> sescc::Result<Vec<SweepRow>> {
    let mut cfg = RunConfig::three_site();
    cfg.sweep.u_values = vec![0.5, 1.0, 2.0, 4.0];
    cfg.sweep.symmetric = true;
    let rows = sweep_rows(&cfg)?;
    println!("{:>5} {:>4} {:>12} {:>12} {:>10}", "U", "ext", "|E-E_ex|", "docc", "docc_ex");
    for r in &rows {
        println!(
            "{:>5.1} {:>4} {:>12.3e} {:>12.6} {:>10.6}",
            r.u, r.n_external, r.deviation, r.double_occupancy, r.exact_double_occupancy
        );
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> sescc::Result<()> {
    run_example().map(|_| ())
}
