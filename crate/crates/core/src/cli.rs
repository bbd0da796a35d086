//! Command-line front end: `solve`, `flow`, `spectral`, `sweep`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 convergence failure,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::ccgf::{
    gf_block_matrix, gf_matrix, gf_poles, spectral_function, CcgfContext, EffectiveGf, EmbeddingAmplitudes,
    GreenFunctionResult, SpectralFunction,
};
use crate::ccsolver::{CCSolution, CcProblem, SolverConfig};
use crate::cluster::{lambda_from_s, ActiveSpace, AmplitudeSet, CcSpace, SubsystemSpec};
use crate::config::{Format, ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::fockspace::{Determinant, SecondQuantizedOp, SectorBasis, Spin, SpinOrbital};
use crate::io::{self, fmt9, sig9, AmplitudeDump, GfDump, HeffDump, Provenance};
use crate::linalg::Pole;
use crate::model::{exact_diagonalize, lehmann_gf, lehmann_poles, EDResult};
use crate::sesflow::{
    build_heff_in, diagonalize_heff, double_occupancy, flow_iterate_in, incremental_subsystems, Flavor, FlowState,
    HeffExtras,
};

#[derive(Debug, Parser)]
#[command(name = "sescc", version, about = "Subsystem-embedding coupled cluster for impurity models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config `output.dir`, else the working directory)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Broadening, overrides the config grid
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Use the built-in three-site configuration
    #[arg(long, global = true)]
    pub seed_paper: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ground-state amplitudes, left amplitudes and energy report
    Solve,
    /// Subsystem flow with per-iteration trace and effective Hamiltonians
    Flow,
    /// Spectral functions from the full, active-space and exact Green's functions
    Spectral,
    /// Flow energies and double occupancies over the configured interaction values
    Sweep,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::NotConverged { .. } | Error::Diverged { .. } => 3,
        _ => 1,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            use std::io::Write;
            // a closed pipe (`| head`) is not a failure; artifacts are already written
            let _ = writeln!(std::io::stdout().lock(), "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NotConverged { trace, .. } = &e {
                let tail: Vec<String> = trace.iter().rev().take(5).rev().map(|r| fmt9(*r)).collect();
                eprintln!("last residuals: {}", tail.join(" "));
            }
            exit_code(&e)
        }
    }
}

/// Effective configuration after applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.seed_paper) {
        (Some(_), true) => return Err(Error::Config("--config and --seed-paper are exclusive".into())),
        (Some(p), false) => RunConfig::load(p)?,
        (None, true) => RunConfig::three_site(),
        (None, false) => return Err(Error::Config("either --config or --seed-paper is required".into())),
    };
    if let Some(eta) = cli.eta {
        cfg.grid.eta = eta;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = Some(o.to_string_lossy().into_owned());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the printed summary.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    let out = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| ".".into()));
    let text = match cli.command {
        Command::Solve => serde_json::to_string_pretty(&cmd_solve(&cfg, Some(&out))?)?,
        Command::Flow => serde_json::to_string_pretty(&cmd_flow(&cfg, Some(&out))?)?,
        Command::Spectral => serde_json::to_string_pretty(&cmd_spectral(&cfg, Some(&out))?)?,
        Command::Sweep => serde_json::to_string_pretty(&cmd_sweep(&cfg, Some(&out))?)?,
    };
    Ok(text)
}

/// Spin layout of the model's spin-orbitals.
fn layout(model: &ModelConfig) -> Result<Vec<Spin>> {
    Ok(match model {
        ModelConfig::Siam(p) => SpinOrbital::block_layout(2 * (p.n_bath() + 1)),
        ModelConfig::Composite(c) => {
            let mut l = SpinOrbital::block_layout(2 * (c.a.n_bath() + 1));
            l.extend(SpinOrbital::block_layout(2 * (c.b.n_bath() + 1)));
            l
        }
    })
}

/// Converged ground state shared by every command.
pub struct GroundState {
    pub h: SecondQuantizedOp,
    pub reference: Determinant,
    pub problem: CcProblem,
    pub solution: CCSolution,
    pub lambda: AmplitudeSet,
}

impl GroundState {
    pub fn solve(cfg: &RunConfig) -> Result<Self> {
        let h = cfg.model.hamiltonian()?;
        let reference = cfg.reference()?;
        let problem = CcProblem::new(&h, &reference, cfg.rank_max)?;
        let solution = problem.solve_t(&cfg.solver)?;
        let lambda = problem.solve_lambda(&solution, &cfg.solver)?;
        Ok(Self { h, reference, problem, solution, lambda })
    }

    pub fn ed(&self) -> Result<EDResult> {
        exact_diagonalize(&self.h, self.problem.sector())
    }

    /// Exact states of the `N` working sector and the full `N±1` sectors.
    pub fn ed_triplet(&self) -> Result<(EDResult, EDResult, EDResult)> {
        let m = self.reference.n_orbitals();
        let n = self.reference.n_electrons();
        let nm1 = Arc::new(SectorBasis::new(m, n - 1)?);
        let np1 = Arc::new(SectorBasis::new(m, n + 1)?);
        Ok((self.ed()?, exact_diagonalize(&self.h, &nm1)?, exact_diagonalize(&self.h, &np1)?))
    }

    /// Full de-excitation amplitudes `S` (every signature external to an empty active space).
    pub fn s(&self, cfg: &SolverConfig) -> Result<AmplitudeSet> {
        let amps = EmbeddingAmplitudes::from_ground_state(
            &self.problem,
            &self.solution.t,
            &self.lambda,
            &ActiveSpace::empty(),
            cfg,
        )?;
        Ok(amps.s_ext)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub provenance: Provenance,
    pub energy: String,
    pub reference_energy: String,
    pub exact_energy: String,
    /// `exact` when every excitation rank of the sector is included.
    pub energy_label: String,
    pub deviation_from_exact: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub n_amplitudes: usize,
    /// Signatures of the spin sector whose amplitudes vanish identically or numerically.
    pub zero_amplitudes: Vec<String>,
    /// Largest mismatch of `Λ` rebuilt from the solved `S`.
    pub lambda_from_s_mismatch: f64,
    pub files: Vec<String>,
}

fn write(out: Option<&Path>, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    if let Some(dir) = out {
        let p = dir.join(name);
        io::write_text(&p, text)?;
        files.push(p.to_string_lossy().into_owned());
    }
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig, out: Option<&Path>) -> Result<SolveReport> {
    let prov = Provenance::new(cfg.hash()?);
    let gs = GroundState::solve(cfg)?;
    let s = gs.s(&cfg.solver)?;
    let mismatch = lambda_from_s(&s)?.max_abs_diff(&gs.lambda);
    let exact = gs.ed()?.ground_energy();
    let full_rank = gs.problem.space.max_rank();
    let sector_rank = CcSpace::new(gs.problem.sector().clone(), gs.reference, None)?.max_rank();
    let label = if full_rank >= sector_rank { "exact" } else { "truncated" };

    let spin_sector = Arc::new(SectorBasis::of_reference(&layout(&cfg.model)?, &gs.reference)?);
    let all = CcSpace::new(spin_sector, gs.reference, cfg.rank_max)?;
    let zero_amplitudes = all
        .excitations
        .iter()
        .filter(|e| gs.solution.t.get(e).abs() < 1e-12)
        .map(|e| e.to_string())
        .collect();

    let mut files = Vec::new();
    write(out, "t_amplitudes.json", &io::to_json(&prov, &AmplitudeDump::from_set(&gs.solution.t))?, &mut files)?;
    write(out, "lambda_amplitudes.json", &io::to_json(&prov, &AmplitudeDump::from_set(&gs.lambda))?, &mut files)?;
    write(out, "s_amplitudes.json", &io::to_json(&prov, &AmplitudeDump::from_set(&s))?, &mut files)?;
    let report = SolveReport {
        provenance: prov.clone(),
        energy: fmt9(gs.solution.energy),
        reference_energy: fmt9(gs.problem.reference_energy()),
        exact_energy: fmt9(exact),
        energy_label: label.into(),
        deviation_from_exact: sig9((gs.solution.energy - exact).abs()),
        iterations: gs.solution.iterations,
        residual_norm: sig9(gs.solution.residual_norm),
        n_amplitudes: gs.solution.t.len(),
        zero_amplitudes,
        lambda_from_s_mismatch: sig9(mismatch),
        files: files.clone(),
    };
    write(out, "report.json", &serde_json::to_string_pretty(&report)?, &mut files)?;
    Ok(SolveReport { files, ..report })
}

/// Configured subsystems, extended with the incremental external ones when
/// requested; a single full-space subsystem when none are configured.
pub fn flow_subsystems(cfg: &RunConfig, problem: &CcProblem) -> Result<Vec<SubsystemSpec>> {
    let mut subs = cfg.subsystems()?;
    if subs.is_empty() {
        return Ok(vec![SubsystemSpec::new("full", ActiveSpace::full(&problem.space.reference))]);
    }
    if cfg.flow.incremental {
        let extra = incremental_subsystems(problem, &subs[0].active);
        subs.extend(extra.into_iter().filter(|e| !subs.iter().any(|s| s.active == e.active)).collect::<Vec<_>>());
    }
    Ok(subs)
}

/// `Λ` for the flow amplitudes, on the covered signatures.
pub fn flow_lambda(problem: &CcProblem, state: &FlowState, cfg: &SolverConfig) -> Result<AmplitudeSet> {
    let covered = problem.space.excitations.iter().filter(|e| !state.uncovered.contains(e)).cloned().collect();
    let sub = problem.with_signatures(covered)?;
    let hbar = sub.hbar(&state.t)?;
    let sol = CCSolution { t: state.t.clone(), energy: state.energy(), residual_norm: 0.0, iterations: state.iteration, hbar };
    sub.solve_lambda(&sol, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub provenance: Provenance,
    pub subsystems: Vec<String>,
    pub energy: String,
    pub exact_energy: String,
    pub deviation_from_exact: f64,
    pub spread: f64,
    pub iterations: usize,
    pub subsystem_energies: Vec<String>,
    pub uncovered: Vec<String>,
    pub double_occupancy: String,
    pub files: Vec<String>,
}

pub fn cmd_flow(cfg: &RunConfig, out: Option<&Path>) -> Result<FlowReport> {
    let prov = Provenance::new(cfg.hash()?);
    let h = cfg.model.hamiltonian()?;
    let reference = cfg.reference()?;
    let problem = CcProblem::new(&h, &reference, cfg.rank_max)?;
    let subs = flow_subsystems(cfg, &problem)?;
    let state = flow_iterate_in(&problem, &subs, &cfg.solver)?;
    let exact = exact_diagonalize(&h, problem.sector())?.ground_energy();
    let lambda = flow_lambda(&problem, &state, &cfg.solver)?;
    let (up, down) = cfg.model.impurity_orbitals()?;
    let docc = double_occupancy(&state.t, &lambda, problem.sector(), up, down)?;

    let mut files = Vec::new();
    write(out, "flow_trace.jsonl", &io::flow_jsonl(&prov, &state.trace)?, &mut files)?;
    write(out, "flow_t_amplitudes.json", &io::to_json(&prov, &AmplitudeDump::from_set(&state.t))?, &mut files)?;
    for (s, heff) in state.subsystems.iter().zip(&state.heff) {
        let name = format!("heff_{}.json", s.label.replace("->", "_to_").replace([':', ',', '/'], "_"));
        write(out, &name, &io::to_json(&prov, &HeffDump::new(&s.label, heff))?, &mut files)?;
    }
    Ok(FlowReport {
        provenance: prov,
        subsystems: state.subsystems.iter().map(|s| s.label.clone()).collect(),
        energy: fmt9(state.energy()),
        exact_energy: fmt9(exact),
        deviation_from_exact: sig9((state.energy() - exact).abs()),
        spread: sig9(state.spread),
        iterations: state.iteration,
        subsystem_energies: state.energies.iter().map(|&e| fmt9(e)).collect(),
        uncovered: state.uncovered.iter().map(|e| e.to_string()).collect(),
        double_occupancy: fmt9(docc),
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub u: f64,
    pub n_external: usize,
    pub energy: f64,
    pub exact_energy: f64,
    pub deviation: f64,
    pub double_occupancy: f64,
    pub exact_double_occupancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub provenance: Provenance,
    pub rows: Vec<SweepRow>,
    pub files: Vec<String>,
}

/// Flow energies for the embedded subsystem plus the first `k` incremental
/// external subsystems, for every `k` and every interaction value.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let reference = cfg.reference()?;
    for &u in &cfg.sweep.u_values {
        let model = cfg.model.with_u(u, cfg.sweep.symmetric);
        let h = model.hamiltonian()?;
        let problem = CcProblem::new(&h, &reference, cfg.rank_max)?;
        let ed = exact_diagonalize(&h, problem.sector())?;
        let (up, down) = model.impurity_orbitals()?;
        let nn = SecondQuantizedOp::number(up).product(&SecondQuantizedOp::number(down));
        let exact_docc = ed.expectation(&nn, 0)?;
        let embedded = match cfg.subsystems()?.into_iter().next() {
            Some(s) => s,
            None => return Err(Error::Config("sweep needs an embedded subsystem in `active`".into())),
        };
        let externals = incremental_subsystems(&problem, &embedded.active);
        for k in 0..=externals.len() {
            let mut subs = vec![embedded.clone()];
            subs.extend(externals[..k].iter().cloned());
            let state = flow_iterate_in(&problem, &subs, &cfg.solver)?;
            let lambda = flow_lambda(&problem, &state, &cfg.solver)?;
            let docc = double_occupancy(&state.t, &lambda, problem.sector(), up, down)?;
            rows.push(SweepRow {
                u,
                n_external: k,
                energy: state.energy(),
                exact_energy: ed.ground_energy(),
                deviation: (state.energy() - ed.ground_energy()).abs(),
                double_occupancy: docc,
                exact_double_occupancy: exact_docc,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<SweepReport> {
    let prov = Provenance::new(cfg.hash()?);
    let rows = sweep_rows(cfg)?;
    let mut files = Vec::new();
    match cfg.output.format {
        Format::Csv => {
            let header =
                ["U", "n_external", "energy", "exact_energy", "deviation", "double_occupancy", "exact_double_occupancy"];
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt9(r.u),
                        r.n_external.to_string(),
                        fmt9(r.energy),
                        fmt9(r.exact_energy),
                        fmt9(r.deviation),
                        fmt9(r.double_occupancy),
                        fmt9(r.exact_double_occupancy),
                    ]
                })
                .collect();
            write(out, "sweep.csv", &io::table_csv(&prov, &header, &body), &mut files)?;
        }
        Format::Json => write(out, "sweep.json", &io::to_json(&prov, &rows)?, &mut files)?,
    }
    Ok(SweepReport { provenance: prov, rows, files })
}

#[derive(Debug, Clone, Serialize)]
pub struct PoleSummary {
    pub method: String,
    pub probe: usize,
    pub ionization: Vec<[f64; 2]>,
    pub attachment: Vec<[f64; 2]>,
}

impl PoleSummary {
    fn new(method: &str, probe: usize, (ip, ea): (Vec<Pole>, Vec<Pole>)) -> Self {
        let conv = |ps: Vec<Pole>| ps.into_iter().filter(|p| p.residue.abs() > 1e-10).map(|p| [sig9(p.position), sig9(p.residue)]).collect();
        Self { method: method.into(), probe, ionization: conv(ip), attachment: conv(ea) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub provenance: Provenance,
    pub eta: f64,
    pub methods: Vec<String>,
    /// `[method][probe]` integrated spectral weight over the grid
    pub sum_rules: Vec<Vec<f64>>,
    /// `[method][probe]` refined peak positions
    pub peaks: Vec<Vec<Vec<f64>>>,
    pub poles: Vec<PoleSummary>,
    pub files: Vec<String>,
}

/// All three Green's functions with their spectra.
pub struct SpectralData {
    pub full: (GreenFunctionResult, SpectralFunction),
    pub embedded: Option<(GreenFunctionResult, SpectralFunction)>,
    pub exact: (GreenFunctionResult, SpectralFunction),
    pub poles: Vec<PoleSummary>,
}

pub fn spectral_data(cfg: &RunConfig) -> Result<SpectralData> {
    let gs = GroundState::solve(cfg)?;
    let grid = cfg.grid.grid()?;
    let m = gs.reference.n_orbitals();
    let ctx = CcgfContext::new(&gs.h, &gs.problem, &gs.solution.t, &gs.lambda, gs.solution.energy)?;
    let subs = cfg.subsystems()?;
    let probes: Vec<usize> = (0..m).collect();
    let full = match (subs.first(), cfg.active.first()) {
        (Some(_), Some(c)) if !c.probes.is_empty() => {
            let inactive: Vec<usize> = probes.iter().copied().filter(|p| !c.probes.contains(p)).collect();
            gf_block_matrix(&ctx, &c.probes, &inactive, &grid)?
        }
        _ => gf_matrix(&ctx, &probes, &grid)?,
    };
    let (ed_n, ed_nm1, ed_np1) = gs.ed_triplet()?;
    let exact = lehmann_gf(&ed_n, &ed_nm1, &ed_np1, &full.probes, &grid)?;
    let mut poles = Vec::new();
    for &p in &full.probes {
        poles.push(PoleSummary::new("ccgf", p, gf_poles(&ctx, p, p)?));
        let lp = lehmann_poles(&ed_n, &ed_nm1, &ed_np1, p, p)?;
        poles.push(PoleSummary::new("ed", p, (lp.ionization, lp.attachment)));
    }
    let embedded = match (subs.first(), cfg.active.first()) {
        (Some(s), Some(c)) if !c.probes.is_empty() => {
            let amps = EmbeddingAmplitudes::from_ground_state(&gs.problem, &gs.solution.t, &gs.lambda, &s.active, &cfg.solver)?;
            let pairs: Vec<(usize, usize)> = c.probes.iter().flat_map(|&k| c.probes.iter().map(move |&l| (k, l))).collect();
            let eff = EffectiveGf::new(&gs.h, &gs.problem, &amps, gs.solution.energy, &pairs)?;
            let np = c.probes.len();
            let mut ion = vec![nalgebra::DMatrix::zeros(np, np); grid.len()];
            let mut att = ion.clone();
            for (i, &k) in c.probes.iter().enumerate() {
                for (j, &l) in c.probes.iter().enumerate() {
                    let [ip, ea] = eff.terms(k, l)?;
                    let vals: Vec<_> = grid
                        .omegas
                        .iter()
                        .map(|&w| Ok((ip.eval(w, grid.eta)?, ea.eval(w, grid.eta)?)))
                        .collect::<Result<_>>()?;
                    for (g, (a, b)) in vals.into_iter().enumerate() {
                        ion[g][(i, j)] = a;
                        att[g][(i, j)] = b;
                    }
                }
                poles.push(PoleSummary::new("ses", k, eff.poles(k, k)?));
            }
            let g = GreenFunctionResult::new(grid.clone(), c.probes.clone(), ion, att);
            let a = spectral_function(&g);
            Some((g, a))
        }
        _ => None,
    };
    let full_a = spectral_function(&full);
    let exact_a = spectral_function(&exact);
    Ok(SpectralData { full: (full, full_a), embedded, exact: (exact, exact_a), poles })
}

pub fn cmd_spectral(cfg: &RunConfig, out: Option<&Path>) -> Result<SpectralReport> {
    let prov = Provenance::new(cfg.hash()?);
    let data = spectral_data(cfg)?;
    let mut methods: Vec<(&str, &GreenFunctionResult, &SpectralFunction)> = vec![("ccgf", &data.full.0, &data.full.1)];
    if let Some((g, a)) = &data.embedded {
        methods.push(("ses", g, a));
    }
    methods.push(("ed", &data.exact.0, &data.exact.1));
    let min_height = 1e-3;
    let sum_rules = methods
        .iter()
        .map(|(_, _, a)| (0..a.probes.len()).map(|k| sig9(a.integral(k))).collect())
        .collect();
    let peaks = methods
        .iter()
        .map(|(_, _, a)| (0..a.probes.len()).map(|k| a.peaks(k, min_height).into_iter().map(sig9).collect()).collect())
        .collect();
    let mut files = Vec::new();
    match cfg.output.format {
        Format::Csv => write(out, "spectral.csv", &io::gf_csv(&prov, &methods)?, &mut files)?,
        Format::Json => {
            let dumps: Vec<GfDump> = methods.iter().map(|(n, g, a)| GfDump::new(n, g, a)).collect();
            write(out, "spectral.json", &io::to_json(&prov, &dumps)?, &mut files)?;
        }
    }
    write(out, "poles.json", &io::to_json(&prov, &data.poles)?, &mut files)?;
    Ok(SpectralReport {
        provenance: prov,
        eta: cfg.grid.eta,
        methods: methods.iter().map(|(n, _, _)| n.to_string()).collect(),
        sum_rules,
        peaks,
        poles: data.poles.clone(),
        files,
    })
}

/// Bar, doublebar and tilde effective Hamiltonians of one active space at the
/// converged ground state.
pub fn heff_flavors(gs: &GroundState, active: &ActiveSpace, cfg: &SolverConfig) -> Result<Vec<(Flavor, f64, HeffDump)>> {
    let amps = EmbeddingAmplitudes::from_ground_state(&gs.problem, &gs.solution.t, &gs.lambda, active, cfg)?;
    let extras = HeffExtras { s_ext: Some(amps.s_ext.clone()), t_int: Some(amps.t_int.clone()) };
    [Flavor::Bar, Flavor::DoubleBar, Flavor::Tilde]
        .into_iter()
        .map(|f| {
            let heff = build_heff_in(f, &gs.problem, active, &amps.t_ext, &extras)?;
            let pair = diagonalize_heff(&heff)?;
            Ok((f, pair.energy, HeffDump::new(format!("{f:?}").to_lowercase(), &heff)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("sescc").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn argument_parsing() {
        let c = cli(&["solve", "--seed-paper", "--eta", "0.1", "--format", "json"]);
        assert_eq!(c.command, Command::Solve);
        let cfg = resolve_config(&c).unwrap();
        assert_eq!(cfg.grid.eta, 0.1);
        assert_eq!(cfg.output.format, Format::Json);
    }

    #[test]
    fn missing_config_is_a_config_error() {
        assert_eq!(main_with_args(["sescc", "solve"]), 2);
        assert_eq!(main_with_args(["sescc", "solve", "--config", "/nonexistent/run.toml"]), 2);
        assert_eq!(main_with_args(["sescc", "frobnicate"]), 2);
        assert_eq!(main_with_args(["sescc", "solve", "--seed-paper", "--eta=-1"]), 2);
    }

    #[test]
    fn nonconvergence_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::three_site();
        cfg.solver.max_iter = 2;
        cfg.solver.acceleration = crate::ccsolver::Acceleration::None;
        let path = dir.path().join("run.toml");
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        let code = main_with_args(["sescc", "solve", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 3);
    }

    #[test]
    fn solve_writes_amplitudes() {
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_solve(&RunConfig::three_site(), Some(dir.path())).unwrap();
        assert!(r.energy.starts_with("-3.7572543"));
        assert_eq!(r.energy_label, "exact");
        assert!(r.zero_amplitudes.is_empty());
        let text = std::fs::read_to_string(dir.path().join("t_amplitudes.json")).unwrap();
        let (prov, dump): (Provenance, AmplitudeDump) = io::from_json(&text).unwrap();
        assert_eq!(prov.config_hash, RunConfig::three_site().hash().unwrap());
        assert_eq!(dump.entries.len(), 8);
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn decoupled_bath_flags_zero_amplitudes() {
        let mut cfg = RunConfig::three_site();
        if let ModelConfig::Siam(p) = &mut cfg.model {
            p.v = vec![0.0, 0.0];
        }
        let r = cmd_solve(&cfg, None).unwrap();
        assert_eq!(r.zero_amplitudes.len(), 8);
        assert!(r.deviation_from_exact < 1e-12);
    }

    #[test]
    fn truncated_rank_is_labelled() {
        let mut cfg = RunConfig::three_site();
        cfg.rank_max = Some(1);
        let r = cmd_solve(&cfg, None).unwrap();
        assert_eq!(r.energy_label, "truncated");
        assert!(r.deviation_from_exact > 1e-6);
    }

    #[test]
    fn full_space_flow_is_exact() {
        let mut cfg = RunConfig::three_site();
        cfg.active.clear();
        let r = cmd_flow(&cfg, None).unwrap();
        assert!(r.deviation_from_exact < 1e-8);
        assert_eq!(r.subsystems, vec!["full"]);
    }
}
