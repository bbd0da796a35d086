//! Active-space effective Hamiltonians and the multi-subsystem flow.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccsolver::{CcProblem, SolverConfig};
use crate::cluster::{
    amplitudes_from_components, exp_dense, s_from_lambda, split, t_from_ket, ActiveSpace, AmplitudeKind,
    AmplitudeSet, Excitation, SubsystemSpec,
};
use crate::error::{domain, Error, Result};
use crate::fockspace::{dense_matrix, Determinant, SecondQuantizedOp, SectorBasis};
use crate::linalg::lowest_eigenpair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// `P e^{-T_ext} H e^{T_ext} P`
    Bar,
    /// `P e^{S_ext} H̄ e^{-S_ext} P` with the full `T` in `H̄`
    DoubleBar,
    /// `P W H̄_ext P` with `W = e^{T_int} e^{S_ext} e^{-T_int}`
    Tilde,
}

/// Amplitudes beyond `T_ext` needed by the doublebar and tilde flavors.
#[derive(Debug, Clone, Default)]
pub struct HeffExtras {
    pub s_ext: Option<AmplitudeSet>,
    pub t_int: Option<AmplitudeSet>,
}

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub flavor: Flavor,
    pub active: ActiveSpace,
    pub reference: Determinant,
    /// Reference first, then the internal excited determinants in sector order.
    pub basis: Vec<Determinant>,
    pub matrix: DMatrix<f64>,
    pub(crate) positions: Vec<usize>,
    pub(crate) sector: std::sync::Arc<SectorBasis>,
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn sector(&self) -> &std::sync::Arc<SectorBasis> {
        &self.sector
    }

    /// Embeds a vector over `basis` into the full working sector.
    pub(crate) fn embed(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.sector.len());
        for (k, &p) in self.positions.iter().enumerate() {
            out[p] = v[k];
        }
        out
    }
}

fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Builds one flavor of the effective Hamiltonian on `problem`'s sector.
pub fn build_heff_in(
    flavor: Flavor,
    problem: &CcProblem,
    active: &ActiveSpace,
    t_ext: &AmplitudeSet,
    extras: &HeffExtras,
) -> Result<EffectiveHamiltonian> {
    if let Some(e) = t_ext.signatures().find(|e| active.contains(e)) {
        return domain(format!("T_ext contains the internal signature {e}"));
    }
    let sector = problem.sector();
    let require = |x: &Option<AmplitudeSet>, what: &str| -> Result<AmplitudeSet> {
        x.clone().ok_or_else(|| Error::Domain(format!("{flavor:?} flavor needs {what}")))
    };
    let hbar_ext = problem.hbar(t_ext)?;
    let full = match flavor {
        Flavor::Bar => hbar_ext,
        Flavor::DoubleBar => {
            let s_ext = require(&extras.s_ext, "S_ext")?;
            let t_int = require(&extras.t_int, "T_int")?;
            let hbar = problem.hbar(&t_int.merged(t_ext))?;
            exp_dense(&s_ext, sector, 1.0)? * hbar * exp_dense(&s_ext, sector, -1.0)?
        }
        Flavor::Tilde => {
            let s_ext = require(&extras.s_ext, "S_ext")?;
            let t_int = require(&extras.t_int, "T_int")?;
            let w = exp_dense(&t_int, sector, 1.0)? * exp_dense(&s_ext, sector, 1.0)? * exp_dense(&t_int, sector, -1.0)?;
            w * hbar_ext
        }
    };
    let positions = problem.space.internal_basis(active);
    Ok(EffectiveHamiltonian {
        flavor,
        active: active.clone(),
        reference: problem.space.reference,
        basis: positions.iter().map(|&p| sector.determinants()[p]).collect(),
        matrix: restrict(&full, &positions),
        positions,
        sector: sector.clone(),
    })
}

/// [`build_heff_in`] on the sector reachable from `t_ext`'s reference under `h`.
pub fn build_heff(
    flavor: Flavor,
    h: &SecondQuantizedOp,
    active: &ActiveSpace,
    t_ext: &AmplitudeSet,
    extras: &HeffExtras,
) -> Result<EffectiveHamiltonian> {
    let problem = CcProblem::new(h, &t_ext.reference, None)?;
    build_heff_in(flavor, &problem, active, t_ext, extras)
}

/// Lowest eigenpair of an effective Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalEigenpair {
    pub energy: f64,
    pub right: DVector<f64>,
    pub left: DVector<f64>,
    /// `⟨left|right⟩` of the unit-norm eigenvectors before rescaling.
    pub unit_overlap: f64,
}

impl InternalEigenpair {
    pub fn overlap(&self) -> f64 {
        self.left.dot(&self.right)
    }
}

/// Left and right vectors share the scale `1/sqrt(⟨l|r⟩)` of the unit
/// eigenvectors, so that `⟨left|right⟩ = 1`; the right vector has a positive
/// reference component.
pub fn diagonalize_heff(heff: &EffectiveHamiltonian) -> Result<InternalEigenpair> {
    let (energy, mut right, mut left) = lowest_eigenpair(&heff.matrix)?;
    if right[0] < 0.0 {
        right.neg_mut();
    }
    let mut overlap = left.dot(&right);
    if overlap < 0.0 {
        left.neg_mut();
        overlap = -overlap;
    }
    if overlap < 1e-12 {
        return domain("left and right eigenvectors are orthogonal");
    }
    let scale = overlap.sqrt().recip();
    Ok(InternalEigenpair { energy, right: right * scale, left: left * scale, unit_overlap: overlap })
}

/// Internal amplitudes encoded in an eigenpair. Bar yields `T_int`, doublebar
/// yields `S_int`, tilde yields both.
pub fn extract_internal(
    pair: &InternalEigenpair,
    heff: &EffectiveHamiltonian,
) -> Result<(Option<AmplitudeSet>, Option<AmplitudeSet>)> {
    let sector = heff.sector();
    let reference = &heff.reference;
    let t_of_right = || -> Result<AmplitudeSet> {
        let c0 = pair.right[0];
        if c0.abs() < 1e-12 {
            return Err(Error::VanishingReference(c0.abs()));
        }
        t_from_ket(reference, sector, &heff.embed(&(&pair.right / c0)))
    };
    let s_of_bra = |bra: DVector<f64>| -> Result<AmplitudeSet> {
        let r = heff.positions[0];
        if bra[r].abs() < 1e-12 {
            return Err(Error::VanishingReference(bra[r].abs()));
        }
        let l = amplitudes_from_components(AmplitudeKind::Lambda, reference, sector, &(&bra / bra[r]), false);
        s_from_lambda(&l)
    };
    match heff.flavor {
        Flavor::Bar => Ok((Some(t_of_right()?), None)),
        Flavor::DoubleBar => Ok((None, Some(s_of_bra(heff.embed(&pair.left))?))),
        Flavor::Tilde => {
            let t_int = t_of_right()?;
            // ⟨Φ|e^{S_int} = ⟨Ψ_int| e^{T_int}
            let bra = exp_dense(&t_int, sector, 1.0)?.tr_mul(&heff.embed(&pair.left));
            Ok((Some(t_int), Some(s_of_bra(bra)?)))
        }
    }
}

/// One line of the flow trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iteration: usize,
    pub subsystem: String,
    pub energy: f64,
    /// Largest change of this subsystem's internal amplitudes in the step.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub subsystems: Vec<SubsystemSpec>,
    pub t: AmplitudeSet,
    pub energies: Vec<f64>,
    pub iteration: usize,
    pub spread: f64,
    /// Signatures internal to no subsystem; frozen at zero.
    pub uncovered: Vec<Excitation>,
    pub trace: Vec<FlowRecord>,
    /// Bar-flavor effective Hamiltonians of the final sweep.
    pub heff: Vec<EffectiveHamiltonian>,
}

impl FlowState {
    pub fn energy(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Sweeps over the subsystems until their energies agree and the shared
/// amplitudes stop moving.
///
/// Every subsystem in a sweep sees the same amplitude snapshot, so the
/// per-subsystem work runs in parallel; proposals for signatures shared by
/// several subsystems are averaged in list order. A damped residual step
/// over all covered signatures follows each merge.
pub fn flow_iterate_in(problem: &CcProblem, subsystems: &[SubsystemSpec], cfg: &SolverConfig) -> Result<FlowState> {
    cfg.validate()?;
    if subsystems.is_empty() {
        return domain("flow needs at least one subsystem");
    }
    let mut labels: Vec<&str> = subsystems.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return domain("subsystem labels must be unique");
    }
    let all = &problem.space.excitations;
    let (covered, uncovered): (Vec<Excitation>, Vec<Excitation>) =
        all.iter().cloned().partition(|e| subsystems.iter().any(|s| s.active.contains(e)));
    let selected = problem.with_signatures(covered.clone())?;
    let reference = problem.space.reference;
    let mut t = AmplitudeSet::from_entries(AmplitudeKind::T, reference, covered.iter().map(|e| (e.clone(), 0.0)))?;
    let mut trace = Vec::new();
    let mut spreads = Vec::new();

    for iteration in 0..cfg.max_iter {
        let results: Vec<Result<(EffectiveHamiltonian, f64, AmplitudeSet)>> = subsystems
            .par_iter()
            .map(|s| {
                let (_, t_ext) = split(&t, &s.active);
                let heff = build_heff_in(Flavor::Bar, problem, &s.active, &t_ext, &HeffExtras::default())?;
                let pair = diagonalize_heff(&heff)?;
                let (t_int, _) = extract_internal(&pair, &heff)?;
                Ok((heff, pair.energy, t_int.expect("bar flavor yields T_int")))
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        let mut proposals: BTreeMap<Excitation, Vec<f64>> = BTreeMap::new();
        let mut energies = Vec::with_capacity(results.len());
        for ((heff, energy, t_int), spec) in results.iter().zip(subsystems) {
            let mut change: f64 = 0.0;
            for e in covered.iter().filter(|e| spec.active.contains(e)) {
                let v = t_int.get(e);
                change = change.max((v - t.get(e)).abs());
                proposals.entry(e.clone()).or_default().push(v);
            }
            energies.push(*energy);
            trace.push(FlowRecord { iteration, subsystem: spec.label.clone(), energy: *energy, residual: change });
            debug_assert_eq!(heff.active, spec.active);
        }
        let mut merged = t.clone();
        for (e, vs) in &proposals {
            merged.insert(e.clone(), vs.iter().sum::<f64>() / vs.len() as f64)?;
        }
        // residual step on the covered signatures
        let hbar = selected.hbar(&merged)?;
        let r = selected.space.reference_index;
        let res = selected.space.project(&hbar.column(r).into_owned());
        let mut stepped = merged.clone();
        for (k, e) in selected.space.excitations.iter().enumerate() {
            let p = selected.space.position(k);
            let d = hbar[(p, p)] - hbar[(r, r)];
            let step = if d.abs() < 1e-8 { res[k] } else { res[k] / d };
            stepped.insert(e.clone(), merged.get(e) - cfg.mixing * step)?;
        }
        let change = stepped.max_abs_diff(&t);
        let spread = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - energies.iter().cloned().fold(f64::INFINITY, f64::min);
        spreads.push(spread);
        if !change.is_finite() || change > 1e3 {
            return Err(Error::Diverged { iteration, residual: change });
        }
        t = stepped;
        if spread < cfg.tol && change < cfg.tol {
            return Ok(FlowState {
                subsystems: subsystems.to_vec(),
                t,
                energies,
                iteration,
                spread,
                uncovered,
                trace,
                heff: results.into_iter().map(|(h, _, _)| h).collect(),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual: spreads.last().copied().unwrap_or(f64::NAN),
        trace: spreads,
    })
}

pub fn flow_iterate(h: &SecondQuantizedOp, reference: &Determinant, subsystems: &[SubsystemSpec], cfg: &SolverConfig) -> Result<FlowState> {
    flow_iterate_in(&CcProblem::new(h, reference, None)?, subsystems, cfg)
}

/// External subsystems for incremental flows: one per external signature not
/// contained in the active space of another, ordered by rank, then holes,
/// then particles.
pub fn incremental_subsystems(problem: &CcProblem, embedded: &ActiveSpace) -> Vec<SubsystemSpec> {
    let external: Vec<&Excitation> = problem.space.excitations.iter().filter(|e| !embedded.contains(e)).collect();
    let mut maximal: Vec<&Excitation> = external
        .iter()
        .copied()
        .filter(|e| {
            let own = ActiveSpace::of_excitation(e);
            !external.iter().any(|f| f != e && own.is_subset(&ActiveSpace::of_excitation(f)))
        })
        .collect();
    maximal.sort();
    maximal
        .into_iter()
        .map(|e| SubsystemSpec::new(format!("ext:{e}"), ActiveSpace::of_excitation(e)))
        .collect()
}

/// `⟨Φ|(1+Λ) e^{-T} n_up n_down e^{T}|Φ⟩`.
pub fn double_occupancy(
    t: &AmplitudeSet,
    lambda: &AmplitudeSet,
    sector: &std::sync::Arc<SectorBasis>,
    up: usize,
    down: usize,
) -> Result<f64> {
    let n = SecondQuantizedOp::number(up).product(&SecondQuantizedOp::number(down));
    let nn = dense_matrix(&n, sector, sector)?;
    let reference = &t.reference;
    let Some(r) = sector.position(reference) else {
        return domain("reference is not in the sector");
    };
    let transformed = exp_dense(t, sector, -1.0)? * nn * exp_dense(t, sector, 1.0)?;
    let l = crate::cluster::excitation_dense(lambda, sector)?;
    let mut bra = l.row(r).transpose();
    bra[r] += 1.0;
    Ok(bra.dot(&transformed.column(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccsolver::solve_s_ext;
    use crate::fockspace::OperatorMatrix;
    use crate::model::{exact_diagonalize, Siam, SiamParams};
    use approx::assert_relative_eq;

    fn setup() -> (CcProblem, AmplitudeSet, AmplitudeSet) {
        let siam = Siam::new(SiamParams::three_site()).unwrap();
        let p = CcProblem::new(&siam.hamiltonian(), &Siam::three_site_reference(), None).unwrap();
        let sol = p.solve_t(&SolverConfig::default()).unwrap();
        let lambda = p.solve_lambda(&sol, &SolverConfig::default()).unwrap();
        (p, sol.t, lambda)
    }

    fn embedded() -> ActiveSpace {
        ActiveSpace::new(&Siam::three_site_reference(), &[0], &[1]).unwrap()
    }

    #[test]
    fn full_space_bar_heff_is_h() {
        let (p, _, _) = setup();
        let full = ActiveSpace::full(&p.space.reference);
        let zero = AmplitudeSet::new(AmplitudeKind::T, p.space.reference);
        let heff = build_heff_in(Flavor::Bar, &p, &full, &zero, &HeffExtras::default()).unwrap();
        assert_eq!(heff.dim(), 9);
        let mut idx: Vec<usize> = heff.positions.clone();
        idx.sort();
        assert_eq!(heff.matrix.sum(), restrict(&p.h, &heff.positions).sum());
        assert_eq!(idx, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn missing_extras_are_rejected() {
        let (p, t, _) = setup();
        let (_, t_ext) = split(&t, &embedded());
        assert!(build_heff_in(Flavor::Tilde, &p, &embedded(), &t_ext, &HeffExtras::default()).is_err());
        assert!(build_heff_in(Flavor::Bar, &p, &embedded(), &t, &HeffExtras::default()).is_err());
    }

    #[test]
    fn diagonal_heff_has_axis_eigenvectors() {
        let (p, _, _) = setup();
        let zero = AmplitudeSet::new(AmplitudeKind::T, p.space.reference);
        let mut heff = build_heff_in(Flavor::Bar, &p, &embedded(), &zero, &HeffExtras::default()).unwrap();
        heff.matrix = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1.0]));
        let pair = diagonalize_heff(&heff).unwrap();
        assert_relative_eq!(pair.right, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(pair.left, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-14);
        let (t_int, _) = extract_internal(&pair, &heff).unwrap();
        assert!(t_int.unwrap().is_empty());
    }

    #[test]
    fn flavors_share_the_ground_energy() {
        let (p, t, lambda) = setup();
        let h = embedded();
        let (t_int, t_ext) = split(&t, &h);
        let (lambda_int, _) = split(&lambda, &h);
        let hbar = OperatorMatrix::from_dense(&p.hbar(&t).unwrap(), p.sector().clone(), p.sector().clone()).unwrap();
        let s_ext = solve_s_ext(&hbar, &h, &lambda_int, &SolverConfig::default()).unwrap();
        let extras = HeffExtras { s_ext: Some(s_ext), t_int: Some(t_int.clone()) };
        let mut energies = Vec::new();
        for flavor in [Flavor::Bar, Flavor::DoubleBar, Flavor::Tilde] {
            let heff = build_heff_in(flavor, &p, &h, &t_ext, &extras).unwrap();
            let pair = diagonalize_heff(&heff).unwrap();
            energies.push(pair.energy);
            let (ti, si) = extract_internal(&pair, &heff).unwrap();
            if let Some(ti) = ti {
                assert!(ti.max_abs_diff(&t_int) < 1e-9);
            }
            if let Some(si) = si {
                assert_relative_eq!(si.get(&Excitation::single(0, 1)), -0.442227, epsilon = 1e-5);
            }
            if flavor == Flavor::Tilde {
                assert_relative_eq!(pair.overlap(), 1.0, epsilon = 1e-12);
            }
        }
        for e in &energies {
            assert_relative_eq!(*e, -3.7572543, epsilon = 1e-6);
            assert_relative_eq!(*e, energies[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn single_full_subsystem_flow_is_fci() {
        let (p, t, _) = setup();
        let full = vec![SubsystemSpec::new("all", ActiveSpace::full(&p.space.reference))];
        let state = flow_iterate_in(&p, &full, &SolverConfig::default()).unwrap();
        let ed = exact_diagonalize(&Siam::new(SiamParams::three_site()).unwrap().hamiltonian(), p.sector()).unwrap();
        assert_relative_eq!(state.energy(), ed.ground_energy(), epsilon = 1e-10);
        assert!(state.t.max_abs_diff(&t) < 1e-9);
        assert!(state.uncovered.is_empty());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let (p, _, _) = setup();
        let s = SubsystemSpec::new("a", embedded());
        assert!(flow_iterate_in(&p, &[s.clone(), s], &SolverConfig::default()).is_err());
    }

    #[test]
    fn incremental_order() {
        let (p, _, _) = setup();
        let subs = incremental_subsystems(&p, &embedded());
        let labels: Vec<&str> = subs.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, vec!["ext:0,3->1,5", "ext:0,3->2,5", "ext:0,4->1,5", "ext:0,4->2,5"]);
    }

    #[test]
    fn double_occupancy_matches_ed() {
        let (p, t, lambda) = setup();
        let siam = Siam::new(SiamParams::three_site()).unwrap();
        let ed = exact_diagonalize(&siam.hamiltonian(), p.sector()).unwrap();
        let n = SecondQuantizedOp::number(1).product(&SecondQuantizedOp::number(4));
        let d = double_occupancy(&t, &lambda, p.sector(), 1, 4).unwrap();
        assert_relative_eq!(d, ed.expectation(&n, 0).unwrap(), epsilon = 1e-10);
    }
}
