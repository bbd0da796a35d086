//! Coupled-cluster Green's function.
//!
//! Every matrix element is a sum of two resolvent terms
//! `⟨l| (z − A)^{-1} |r⟩`: the removal branch with `z = ω − iη`, `A = −H̄_N`
//! on the `N−1` sector, and the addition branch with `z = ω + iη`, `A = H̄_N`
//! on the `N+1` sector. `H̄_N = e^{-T} H e^{T} − E_CC`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccsolver::CcProblem;
use crate::cluster::{excitation_dense, exp_dense, ActiveSpace, AmplitudeKind, AmplitudeSet};
use crate::error::{domain, Error, Result};
use crate::fockspace::{dense_matrix, Determinant, SecondQuantizedOp, SectorBasis, StateVector};
use crate::linalg::{resolvent_poles, solve_complex, to_complex, to_complex_vec, trapezoid, Pole};
use crate::sesflow::{build_heff_in, diagonalize_heff, Flavor, HeffExtras};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    pub eta: f64,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return domain(format!("broadening must be positive and finite, got {eta}"));
        }
        if omegas.is_empty() {
            return domain("frequency grid is empty");
        }
        if omegas.iter().any(|w| !w.is_finite()) || omegas.windows(2).any(|w| w[1] < w[0]) {
            return domain("frequencies must be finite and ascending");
        }
        Ok(Self { omegas, eta })
    }

    /// `start, start + step, …` up to and including `stop` (within rounding).
    pub fn uniform(start: f64, stop: f64, step: f64, eta: f64) -> Result<Self> {
        if !start.is_finite() || !stop.is_finite() || step.is_nan() || step <= 0.0 || stop < start {
            return domain("uniform grid needs step > 0 and stop >= start");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::new((0..n).map(|i| start + i as f64 * step).collect(), eta)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.omegas.clone(), eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `X`, electron removal, `N−1` sector
    Ionization,
    /// `Y`, electron addition, `N+1` sector
    Attachment,
}

impl Branch {
    fn z(self, omega: f64, eta: f64) -> Complex64 {
        match self {
            Branch::Ionization => Complex64::new(omega, -eta),
            Branch::Attachment => Complex64::new(omega, eta),
        }
    }
}

/// `⟨left| (z − a)^{-1} |right⟩`.
#[derive(Debug, Clone)]
pub struct ResolventTerm {
    pub branch: Branch,
    pub a: DMatrix<f64>,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

impl ResolventTerm {
    pub fn solve(&self, omega: f64, eta: f64) -> Result<DVector<Complex64>> {
        let n = self.a.nrows();
        let z = self.branch.z(omega, eta);
        let m = DMatrix::<Complex64>::identity(n, n) * z - to_complex(&self.a);
        solve_complex(&m, &to_complex_vec(&self.right), omega)
    }

    pub fn eval(&self, omega: f64, eta: f64) -> Result<Complex64> {
        Ok(to_complex_vec(&self.left).dot(&self.solve(omega, eta)?))
    }

    /// Poles with `|residue| > cutoff`.
    pub fn poles(&self, cutoff: f64) -> Result<Vec<Pole>> {
        let poles = resolvent_poles(&self.a, &to_complex_vec(&self.left), &to_complex_vec(&self.right), 1e-9)?;
        Ok(poles.into_iter().filter(|p| p.residue.abs() > cutoff).collect())
    }
}

/// `e^{-T} a_p^{(†)} e^{T}` from `from` to `to`.
pub fn abar(
    t: &AmplitudeSet,
    probe: usize,
    dagger: bool,
    from: &Arc<SectorBasis>,
    to: &Arc<SectorBasis>,
) -> Result<DMatrix<f64>> {
    let op = if dagger { SecondQuantizedOp::creation(probe) } else { SecondQuantizedOp::annihilation(probe) };
    let a = dense_matrix(&op, from, to)?;
    Ok(exp_dense(t, to, -1.0)? * a * exp_dense(t, from, 1.0)?)
}

/// `a + [a, T]` from `from` to `to`; equal to [`abar`] as the series terminates.
pub fn abar_commutator(
    t: &AmplitudeSet,
    probe: usize,
    dagger: bool,
    from: &Arc<SectorBasis>,
    to: &Arc<SectorBasis>,
) -> Result<DMatrix<f64>> {
    let op = if dagger { SecondQuantizedOp::creation(probe) } else { SecondQuantizedOp::annihilation(probe) };
    let a = dense_matrix(&op, from, to)?;
    let commutator = &a * excitation_dense(t, from)? - excitation_dense(t, to)? * &a;
    Ok(a + commutator)
}

/// Converged ground state together with the `N±1` sector matrices.
#[derive(Debug, Clone)]
pub struct CcgfContext {
    pub reference: Determinant,
    pub energy: f64,
    pub t: AmplitudeSet,
    pub lambda: AmplitudeSet,
    pub n: Arc<SectorBasis>,
    pub nm1: Arc<SectorBasis>,
    pub np1: Arc<SectorBasis>,
    h_nm1: DMatrix<f64>,
    h_np1: DMatrix<f64>,
    /// `H̄_N` on `N−1` and `N+1`
    hbar_nm1: DMatrix<f64>,
    hbar_np1: DMatrix<f64>,
    /// `⟨Φ|(1+Λ)` over the `N` sector
    bra: DVector<f64>,
}

impl CcgfContext {
    /// `T`, `Λ` and `E_CC` must come from `problem`. The `N±1` sectors are
    /// the full particle-number sectors.
    pub fn new(h: &SecondQuantizedOp, problem: &CcProblem, t: &AmplitudeSet, lambda: &AmplitudeSet, energy: f64) -> Result<Self> {
        let n = problem.sector().clone();
        let (m, ne) = (n.n_orbitals(), n.n_electrons());
        if ne == 0 || ne == m {
            return domain("removal and addition sectors need 0 < N < M");
        }
        let nm1 = Arc::new(SectorBasis::new(m, ne - 1)?);
        let np1 = Arc::new(SectorBasis::new(m, ne + 1)?);
        let h_nm1 = dense_matrix(h, &nm1, &nm1)?;
        let h_np1 = dense_matrix(h, &np1, &np1)?;
        let shift = |hbar: DMatrix<f64>| {
            let k = hbar.nrows();
            hbar - DMatrix::identity(k, k) * energy
        };
        let hbar_nm1 = shift(crate::cluster::similarity_dense(&h_nm1, t, &nm1)?);
        let hbar_np1 = shift(crate::cluster::similarity_dense(&h_np1, t, &np1)?);
        let r = problem.space.reference_index;
        let mut bra = excitation_dense(lambda, &n)?.row(r).transpose();
        bra[r] += 1.0;
        Ok(Self {
            reference: problem.space.reference,
            energy,
            t: t.clone(),
            lambda: lambda.clone(),
            n,
            nm1,
            np1,
            h_nm1,
            h_np1,
            hbar_nm1,
            hbar_np1,
            bra,
        })
    }

    fn reference_index(&self) -> usize {
        self.n.position(&self.reference).expect("reference in N sector")
    }

    pub fn hbar_n(&self, branch: Branch) -> &DMatrix<f64> {
        match branch {
            Branch::Ionization => &self.hbar_nm1,
            Branch::Attachment => &self.hbar_np1,
        }
    }

    pub fn sector(&self, branch: Branch) -> &Arc<SectorBasis> {
        match branch {
            Branch::Ionization => &self.nm1,
            Branch::Attachment => &self.np1,
        }
    }

    /// `ā_K|Φ⟩` (removal) or `ā_L†|Φ⟩` (addition).
    pub fn probe_ket(&self, branch: Branch, probe: usize) -> Result<DVector<f64>> {
        let dagger = branch == Branch::Attachment;
        let ab = abar(&self.t, probe, dagger, &self.n, self.sector(branch))?;
        Ok(ab.column(self.reference_index()).into_owned())
    }

    /// `⟨Φ|(1+Λ) ā_L†` (removal) or `⟨Φ|(1+Λ) ā_K` (addition), as a column.
    pub fn probe_bra(&self, branch: Branch, probe: usize, bra: &DVector<f64>) -> Result<DVector<f64>> {
        // ā_L† maps N−1 → N for the removal branch; ā_K maps N+1 → N for addition
        let dagger = branch == Branch::Ionization;
        let ab = abar(&self.t, probe, dagger, self.sector(branch), &self.n)?;
        Ok(ab.tr_mul(bra))
    }

    fn resolvent_matrix(&self, branch: Branch) -> DMatrix<f64> {
        match branch {
            Branch::Ionization => -&self.hbar_nm1,
            Branch::Attachment => self.hbar_np1.clone(),
        }
    }

    /// Removal term (index 0) and addition term (index 1) of `G_KL`.
    pub fn element_terms(&self, k: usize, l: usize) -> Result<[ResolventTerm; 2]> {
        Ok([
            ResolventTerm {
                branch: Branch::Ionization,
                a: self.resolvent_matrix(Branch::Ionization),
                left: self.probe_bra(Branch::Ionization, l, &self.bra)?,
                right: self.probe_ket(Branch::Ionization, k)?,
            },
            ResolventTerm {
                branch: Branch::Attachment,
                a: self.resolvent_matrix(Branch::Attachment),
                left: self.probe_bra(Branch::Attachment, k, &self.bra)?,
                right: self.probe_ket(Branch::Attachment, l)?,
            },
        ])
    }

    /// Bare Hamiltonian on the `N∓1` sector.
    pub fn h_sector(&self, branch: Branch) -> &DMatrix<f64> {
        match branch {
            Branch::Ionization => &self.h_nm1,
            Branch::Attachment => &self.h_np1,
        }
    }
}

/// One `X_K(ω)|Φ⟩` or `Y_L(ω)|Φ⟩` vector.
#[derive(Debug, Clone)]
pub struct XYSolution {
    pub orbital: usize,
    pub omega: f64,
    pub branch: Branch,
    pub vector: StateVector,
    /// Whether each basis determinant lies in the active space, when one was given.
    pub internal: Option<Vec<bool>>,
}

impl XYSolution {
    /// Internal and external parts of the vector.
    pub fn split(&self) -> Option<(DVector<Complex64>, DVector<Complex64>)> {
        let mask = self.internal.as_ref()?;
        let v = &self.vector.coefficients;
        let int = DVector::from_iterator(v.len(), v.iter().zip(mask).map(|(&c, &m)| if m { c } else { Complex64::default() }));
        let ext = v - &int;
        Some((int, ext))
    }
}

fn internal_mask(sector: &SectorBasis, reference: &Determinant, active: &ActiveSpace) -> Vec<bool> {
    sector.determinants().iter().map(|d| active.is_internal(reference, d)).collect()
}

/// Solves the removal (`X`) or addition (`Y`) equation for one probe on every grid point.
pub fn solve_xy(
    ctx: &CcgfContext,
    probe: usize,
    branch: Branch,
    grid: &FrequencyGrid,
    active: Option<&ActiveSpace>,
) -> Result<Vec<XYSolution>> {
    let term = ResolventTerm {
        branch,
        a: ctx.resolvent_matrix(branch),
        left: DVector::zeros(0),
        right: ctx.probe_ket(branch, probe)?,
    };
    let sector = ctx.sector(branch).clone();
    let mask = active.map(|h| internal_mask(&sector, &ctx.reference, h));
    grid.omegas
        .par_iter()
        .map(|&w| {
            let x = term.solve(w, grid.eta)?;
            Ok(XYSolution {
                orbital: probe,
                omega: w,
                branch,
                vector: StateVector { sector: sector.clone(), coefficients: x },
                internal: mask.clone(),
            })
        })
        .collect()
}

/// `G_KL(ω)` on the grid.
pub fn gf_element(ctx: &CcgfContext, k: usize, l: usize, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    let terms = ctx.element_terms(k, l)?;
    grid.omegas
        .par_iter()
        .map(|&w| Ok(terms[0].eval(w, grid.eta)? + terms[1].eval(w, grid.eta)?))
        .collect()
}

/// Removal and addition poles of `G_KL` with non-negligible residue.
pub fn gf_poles(ctx: &CcgfContext, k: usize, l: usize) -> Result<(Vec<Pole>, Vec<Pole>)> {
    let [ip, ea] = ctx.element_terms(k, l)?;
    Ok((ip.poles(1e-10)?, ea.poles(1e-10)?))
}

/// Pointwise internal/external parts of one element.
#[derive(Debug, Clone)]
pub struct SplitElement {
    pub omega: f64,
    pub total: Complex64,
    pub internal: Complex64,
    pub external: Complex64,
}

/// `G_KL = G_int + G_ext` for active space `h`.
///
/// `G_int` pairs `⟨Φ|(1+Λ_int)` with the internal parts of `X_K`, `Y_L`.
/// `G_ext` collects the `(e^{S_ext} − 1)` terms and the coupling of
/// `⟨Φ|(1+Λ_int)` to the external parts.
pub fn gf_split(
    ctx: &CcgfContext,
    k: usize,
    l: usize,
    h: &ActiveSpace,
    lambda_int: &AmplitudeSet,
    s_ext: &AmplitudeSet,
    grid: &FrequencyGrid,
) -> Result<Vec<SplitElement>> {
    let r = ctx.reference_index();
    let mut bra_int = excitation_dense(lambda_int, &ctx.n)?.row(r).transpose();
    bra_int[r] += 1.0;
    // ⟨Φ|(1+Λ_int)(e^{S_ext} − 1)
    let e_s = exp_dense(s_ext, &ctx.n, 1.0)?;
    let bra_dressed = e_s.tr_mul(&bra_int) - &bra_int;
    let terms = ctx.element_terms(k, l)?;
    let lefts_int = [
        ctx.probe_bra(Branch::Ionization, l, &bra_int)?,
        ctx.probe_bra(Branch::Attachment, k, &bra_int)?,
    ];
    let lefts_dressed = [
        ctx.probe_bra(Branch::Ionization, l, &bra_dressed)?,
        ctx.probe_bra(Branch::Attachment, k, &bra_dressed)?,
    ];
    let masks = [
        internal_mask(&ctx.nm1, &ctx.reference, h),
        internal_mask(&ctx.np1, &ctx.reference, h),
    ];
    grid.omegas
        .par_iter()
        .map(|&w| {
            let mut out = SplitElement { omega: w, total: 0.0.into(), internal: 0.0.into(), external: 0.0.into() };
            for b in 0..2 {
                let x = terms[b].solve(w, grid.eta)?;
                let (mut xi, mut xe) = (x.clone(), x.clone());
                for (i, &m) in masks[b].iter().enumerate() {
                    if m {
                        xe[i] = Complex64::default();
                    } else {
                        xi[i] = Complex64::default();
                    }
                }
                let li = to_complex_vec(&lefts_int[b]);
                out.total += to_complex_vec(&terms[b].left).dot(&x);
                out.internal += li.dot(&xi);
                out.external += to_complex_vec(&lefts_dressed[b]).dot(&x) + li.dot(&xe);
            }
            Ok(out)
        })
        .collect()
}

/// Amplitudes defining the active-space form of the Green's function.
#[derive(Debug, Clone)]
pub struct EmbeddingAmplitudes {
    pub active: ActiveSpace,
    pub t_int: AmplitudeSet,
    pub t_ext: AmplitudeSet,
    pub s_ext: AmplitudeSet,
}

impl EmbeddingAmplitudes {
    /// Splits converged `T` and `Λ` for active space `h` and solves for `S_ext`.
    pub fn from_ground_state(
        problem: &CcProblem,
        t: &AmplitudeSet,
        lambda: &AmplitudeSet,
        h: &ActiveSpace,
        cfg: &crate::ccsolver::SolverConfig,
    ) -> Result<Self> {
        let (t_int, t_ext) = crate::cluster::split(t, h);
        let (lambda_int, _) = crate::cluster::split(lambda, h);
        let external = problem.space.excitations.iter().filter(|e| !h.contains(e)).cloned().collect();
        let space = crate::cluster::CcSpace::with_excitations(problem.sector().clone(), problem.space.reference, external)?;
        let s_ext = crate::ccsolver::solve_s_ext_in(&space, &problem.hbar(t)?, &lambda_int, cfg)?;
        Ok(Self { active: h.clone(), t_int, t_ext, s_ext })
    }
}

/// Active-space form of `G_KL` built from the tilde-flavor internal eigenvectors:
/// `⟨Ψ_int|P W ā_{L,ext}† Q_int R Q_int ā_{K,ext} P|Ψ_int⟩` plus the addition analogue,
/// with `R = (ω − iη + H̄_{N,ext})^{-1}` on the full `N−1` sector (and its `N+1`
/// counterpart) and `⟨H̄_ext⟩ = E_CC`.
pub struct EffectiveGf {
    terms: Vec<(usize, usize, [ResolventTerm; 2])>,
}

impl EffectiveGf {
    pub fn new(
        h: &SecondQuantizedOp,
        problem: &CcProblem,
        amps: &EmbeddingAmplitudes,
        energy: f64,
        probes: &[(usize, usize)],
    ) -> Result<Self> {
        let n = problem.sector().clone();
        let (m, ne) = (n.n_orbitals(), n.n_electrons());
        if ne == 0 || ne == m {
            return domain("removal and addition sectors need 0 < N < M");
        }
        let extras = HeffExtras { s_ext: Some(amps.s_ext.clone()), t_int: Some(amps.t_int.clone()) };
        let heff = build_heff_in(Flavor::Tilde, problem, &amps.active, &amps.t_ext, &extras)?;
        let pair = diagonalize_heff(&heff)?;
        let right = heff.embed(&pair.right);
        let w = exp_dense(&amps.t_int, &n, 1.0)? * exp_dense(&amps.s_ext, &n, 1.0)? * exp_dense(&amps.t_int, &n, -1.0)?;
        let left = w.tr_mul(&heff.embed(&pair.left));
        let reference = problem.space.reference;

        let mut sectors = Vec::new();
        for (branch, ne2) in [(Branch::Ionization, ne - 1), (Branch::Attachment, ne + 1)] {
            let s = Arc::new(SectorBasis::new(m, ne2)?);
            let mask = internal_mask(&s, &reference, &amps.active);
            if !mask.iter().any(|&b| b) {
                return domain(format!("active space supports no internal {branch:?} determinants"));
            }
            let hs = dense_matrix(h, &s, &s)?;
            let hbar = crate::cluster::similarity_dense(&hs, &amps.t_ext, &s)? - DMatrix::identity(s.len(), s.len()) * energy;
            let a = match branch {
                Branch::Ionization => -hbar,
                Branch::Attachment => hbar,
            };
            sectors.push((branch, s, mask, a));
        }
        let project = |v: DVector<f64>, mask: &[bool]| {
            DVector::from_iterator(v.len(), v.iter().zip(mask).map(|(&x, &b)| if b { x } else { 0.0 }))
        };
        let mut terms = Vec::new();
        for &(k, l) in probes {
            let mut pair_terms = Vec::new();
            for (branch, s, mask, a) in &sectors {
                // removal: ket ā_K, bra ā_L†; addition: ket ā_L†, bra ā_K
                let (ket_probe, bra_probe) = match branch {
                    Branch::Ionization => (k, l),
                    Branch::Attachment => (l, k),
                };
                let ket_dagger = *branch == Branch::Attachment;
                let ket = abar(&amps.t_ext, ket_probe, ket_dagger, &n, s)? * &right;
                let bra = abar(&amps.t_ext, bra_probe, !ket_dagger, s, &n)?.tr_mul(&left);
                pair_terms.push(ResolventTerm { branch: *branch, a: a.clone(), left: project(bra, mask), right: project(ket, mask) });
            }
            let [ip, ea]: [ResolventTerm; 2] = pair_terms.try_into().expect("two branches");
            terms.push((k, l, [ip, ea]));
        }
        Ok(Self { terms })
    }

    fn find(&self, k: usize, l: usize) -> Result<&[ResolventTerm; 2]> {
        self.terms
            .iter()
            .find(|(a, b, _)| *a == k && *b == l)
            .map(|(_, _, t)| t)
            .ok_or_else(|| Error::Domain(format!("element ({k},{l}) was not prepared")))
    }

    pub fn element(&self, k: usize, l: usize, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
        let terms = self.find(k, l)?;
        grid.omegas
            .par_iter()
            .map(|&w| Ok(terms[0].eval(w, grid.eta)? + terms[1].eval(w, grid.eta)?))
            .collect()
    }

    pub fn poles(&self, k: usize, l: usize) -> Result<(Vec<Pole>, Vec<Pole>)> {
        let [ip, ea] = self.find(k, l)?;
        Ok((ip.poles(1e-10)?, ea.poles(1e-10)?))
    }

    /// `[removal, addition]` terms of one prepared element.
    pub fn terms(&self, k: usize, l: usize) -> Result<&[ResolventTerm; 2]> {
        self.find(k, l)
    }
}

/// `G_KL(ω)` in the active-space form on the grid.
pub fn gf_effective(
    h: &SecondQuantizedOp,
    problem: &CcProblem,
    amps: &EmbeddingAmplitudes,
    energy: f64,
    k: usize,
    l: usize,
    grid: &FrequencyGrid,
) -> Result<Vec<Complex64>> {
    EffectiveGf::new(h, problem, amps, energy, &[(k, l)])?.element(k, l, grid)
}

/// Block labels of a probe-ordered Green's function matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    /// Probe positions of each embedded center.
    pub centers: Vec<Vec<usize>>,
}

impl BlockLayout {
    fn center_of(&self, i: usize) -> Option<usize> {
        self.centers.iter().position(|c| c.contains(&i))
    }

    /// `emb`, `env1` (embedded row, inactive column), `env2`, `env3` for one
    /// center; `emb(n)` and `env` with several.
    pub fn label(&self, i: usize, j: usize) -> String {
        let (ci, cj) = (self.center_of(i), self.center_of(j));
        if self.centers.len() == 1 {
            return match (ci, cj) {
                (Some(_), Some(_)) => "emb",
                (Some(_), None) => "env1",
                (None, Some(_)) => "env2",
                (None, None) => "env3",
            }
            .to_string();
        }
        match (ci, cj) {
            (Some(a), Some(b)) if a == b => format!("emb({})", a + 1),
            _ => "env".to_string(),
        }
    }
}

/// Green's function matrices over a probe list on a frequency grid.
#[derive(Debug, Clone)]
pub struct GreenFunctionResult {
    pub grid: FrequencyGrid,
    pub probes: Vec<usize>,
    pub ionization: Vec<DMatrix<Complex64>>,
    pub attachment: Vec<DMatrix<Complex64>>,
    pub blocks: Option<BlockLayout>,
}

impl GreenFunctionResult {
    pub fn new(
        grid: FrequencyGrid,
        probes: Vec<usize>,
        ionization: Vec<DMatrix<Complex64>>,
        attachment: Vec<DMatrix<Complex64>>,
    ) -> Self {
        Self { grid, probes, ionization, attachment, blocks: None }
    }

    pub fn total(&self, i: usize) -> DMatrix<Complex64> {
        &self.ionization[i] + &self.attachment[i]
    }

    pub fn element(&self, k: usize, l: usize) -> Vec<Complex64> {
        (0..self.grid.len()).map(|i| self.ionization[i][(k, l)] + self.attachment[i][(k, l)]).collect()
    }

    pub fn probe_position(&self, orbital: usize) -> Option<usize> {
        self.probes.iter().position(|&p| p == orbital)
    }

    /// Largest `|G_ij|` over the grid among pairs whose label satisfies `keep`.
    pub fn max_abs_where(&self, keep: impl Fn(&str) -> bool) -> f64 {
        let Some(layout) = &self.blocks else { return 0.0 };
        let n = self.probes.len();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if keep(&layout.label(i, j)) {
                    for g in 0..self.grid.len() {
                        best = best.max((self.ionization[g][(i, j)] + self.attachment[g][(i, j)]).norm());
                    }
                }
            }
        }
        best
    }
}

/// Full CCGF matrix for `probes` on the grid.
pub fn gf_matrix(ctx: &CcgfContext, probes: &[usize], grid: &FrequencyGrid) -> Result<GreenFunctionResult> {
    let np = probes.len();
    let mut kets = Vec::new();
    let mut bras = Vec::new();
    for branch in [Branch::Ionization, Branch::Attachment] {
        let dim = ctx.sector(branch).len();
        let mut kmat = DMatrix::zeros(dim, np);
        let mut bmat = DMatrix::zeros(dim, np);
        for (i, &p) in probes.iter().enumerate() {
            kmat.set_column(i, &ctx.probe_ket(branch, p)?);
            bmat.set_column(i, &ctx.probe_bra(branch, p, &ctx.bra)?);
        }
        kets.push(to_complex(&kmat));
        bras.push(to_complex(&bmat));
    }
    let a = [ctx.resolvent_matrix(Branch::Ionization), ctx.resolvent_matrix(Branch::Attachment)].map(|m| to_complex(&m));
    let per_omega: Vec<(DMatrix<Complex64>, DMatrix<Complex64>)> = grid
        .omegas
        .par_iter()
        .map(|&w| {
            let mut out = Vec::with_capacity(2);
            for (b, branch) in [Branch::Ionization, Branch::Attachment].into_iter().enumerate() {
                let n = a[b].nrows();
                let m = DMatrix::<Complex64>::identity(n, n) * branch.z(w, grid.eta) - &a[b];
                let x = m.clone().lu().solve(&kets[b]).ok_or(Error::Singular(w))?;
                let res = (&m * &x - &kets[b]).norm();
                if !res.is_finite() || res > 1e-10 * kets[b].norm().max(1.0) {
                    return Err(Error::Singular(w));
                }
                // removal: G[K,L] = bra_L · x_K; addition: G[K,L] = bra_K · y_L
                let g = bras[b].transpose() * x;
                out.push(match branch {
                    Branch::Ionization => g.transpose(),
                    Branch::Attachment => g,
                });
            }
            let ea = out.pop().expect("two branches");
            let ip = out.pop().expect("two branches");
            Ok((ip, ea))
        })
        .collect::<Result<_>>()?;
    let (ionization, attachment) = per_omega.into_iter().unzip();
    Ok(GreenFunctionResult::new(grid.clone(), probes.to_vec(), ionization, attachment))
}

/// Labeled matrix over `active ++ inactive` probes (single center).
pub fn gf_block_matrix(ctx: &CcgfContext, active: &[usize], inactive: &[usize], grid: &FrequencyGrid) -> Result<GreenFunctionResult> {
    if let Some(p) = active.iter().find(|p| inactive.contains(p)) {
        return domain(format!("probe {p} is both active and inactive"));
    }
    gf_multicenter(ctx, &[active.to_vec()], inactive, grid)
}

/// Labeled matrix over the probes of several centers followed by `inactive`.
/// A probe shared by two centers is listed once, under the first.
pub fn gf_multicenter(ctx: &CcgfContext, centers: &[Vec<usize>], inactive: &[usize], grid: &FrequencyGrid) -> Result<GreenFunctionResult> {
    let mut probes: Vec<usize> = Vec::new();
    let mut layout = BlockLayout { centers: Vec::new() };
    for c in centers {
        let mut idx = Vec::new();
        for &p in c {
            match probes.iter().position(|&q| q == p) {
                Some(i) => idx.push(i),
                None => {
                    probes.push(p);
                    idx.push(probes.len() - 1);
                }
            }
        }
        layout.centers.push(idx);
    }
    for &p in inactive {
        if probes.contains(&p) {
            return domain(format!("inactive probe {p} also belongs to a center"));
        }
        probes.push(p);
    }
    let mut g = gf_matrix(ctx, &probes, grid)?;
    g.blocks = Some(layout);
    Ok(g)
}

/// Active-space Green's function of each center, one result per center.
pub fn gf_center_blocks(
    h: &SecondQuantizedOp,
    problem: &CcProblem,
    centers: &[(EmbeddingAmplitudes, Vec<usize>)],
    energy: f64,
    grid: &FrequencyGrid,
) -> Result<Vec<GreenFunctionResult>> {
    centers
        .iter()
        .map(|(amps, probes)| {
            let pairs: Vec<(usize, usize)> = probes.iter().flat_map(|&k| probes.iter().map(move |&l| (k, l))).collect();
            let eff = EffectiveGf::new(h, problem, amps, energy, &pairs)?;
            let np = probes.len();
            let mut ion = vec![DMatrix::zeros(np, np); grid.len()];
            let mut att = vec![DMatrix::zeros(np, np); grid.len()];
            for (i, &k) in probes.iter().enumerate() {
                for (j, &l) in probes.iter().enumerate() {
                    let [ip, ea] = eff.terms(k, l)?;
                    for (g, &w) in grid.omegas.iter().enumerate() {
                        ion[g][(i, j)] = ip.eval(w, grid.eta)?;
                        att[g][(i, j)] = ea.eval(w, grid.eta)?;
                    }
                }
            }
            let mut out = GreenFunctionResult::new(grid.clone(), probes.clone(), ion, att);
            out.blocks = Some(BlockLayout { centers: vec![(0..np).collect()] });
            Ok(out)
        })
        .collect()
}

/// Per-probe spectral functions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    pub omegas: Vec<f64>,
    pub probes: Vec<usize>,
    /// `values[k][i]` is `A_K(ω_i)`
    pub values: Vec<Vec<f64>>,
    pub ionization: Vec<Vec<f64>>,
    pub attachment: Vec<Vec<f64>>,
}

impl SpectralFunction {
    /// Sum of `A_K` over the given probe orbitals (e.g. one spin channel).
    pub fn sum_over(&self, orbitals: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.omegas.len()];
        for (k, &p) in self.probes.iter().enumerate() {
            if orbitals.contains(&p) {
                for (o, v) in out.iter_mut().zip(&self.values[k]) {
                    *o += v;
                }
            }
        }
        out
    }

    pub fn integral(&self, k: usize) -> f64 {
        trapezoid(&self.omegas, &self.values[k])
    }

    pub fn peaks(&self, k: usize, min_height: f64) -> Vec<f64> {
        find_peaks(&self.omegas, &self.values[k], min_height)
    }
}

/// `A_K = (Im G^X_KK − Im G^Y_KK)/π`, nonnegative for both branches.
pub fn spectral_function(g: &GreenFunctionResult) -> SpectralFunction {
    let n = g.probes.len();
    let pick = |mats: &Vec<DMatrix<Complex64>>, k: usize, sign: f64| -> Vec<f64> {
        mats.iter().map(|m| sign * m[(k, k)].im / std::f64::consts::PI).collect()
    };
    let ionization: Vec<Vec<f64>> = (0..n).map(|k| pick(&g.ionization, k, 1.0)).collect();
    let attachment: Vec<Vec<f64>> = (0..n).map(|k| pick(&g.attachment, k, -1.0)).collect();
    let values = ionization.iter().zip(&attachment).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    SpectralFunction { omegas: g.grid.omegas.clone(), probes: g.probes.clone(), values, ionization, attachment }
}

/// Local maxima above `min_height`, refined by a parabola through the
/// neighbouring samples.
pub fn find_peaks(x: &[f64], y: &[f64], min_height: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > min_height {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            let denom = a - 2.0 * b + c;
            let h = x[i + 1] - x[i];
            let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            out.push(x[i] + shift.clamp(-1.0, 1.0) * h);
        }
    }
    out
}

/// `G` of a single orbital with energy `e` in the empty (`occupied=false`) or
/// filled state: one pole of unit weight.
pub fn free_orbital_gf(e: f64, occupied: bool, grid: &FrequencyGrid) -> Vec<Complex64> {
    grid.omegas
        .iter()
        .map(|&w| {
            let z = if occupied { Complex64::new(w - e, -grid.eta) } else { Complex64::new(w - e, grid.eta) };
            z.inv()
        })
        .collect()
}

/// Zero `Λ` on the signatures of `t`.
pub fn zero_lambda(t: &AmplitudeSet) -> AmplitudeSet {
    AmplitudeSet::new(AmplitudeKind::Lambda, t.reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccsolver::SolverConfig;
    use crate::fockspace::LadderOp;
    use crate::model::{Siam, SiamParams};
    use approx::assert_relative_eq;

    fn three_site_ctx() -> (SecondQuantizedOp, CcProblem, CcgfContext) {
        let h = Siam::new(SiamParams::three_site()).unwrap().hamiltonian();
        let p = CcProblem::new(&h, &Siam::three_site_reference(), None).unwrap();
        let sol = p.solve_t(&SolverConfig::default()).unwrap();
        let lambda = p.solve_lambda(&sol, &SolverConfig::default()).unwrap();
        let ctx = CcgfContext::new(&h, &p, &sol.t, &lambda, sol.energy).unwrap();
        (h, p, ctx)
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::new(vec![], 0.1).is_err());
        assert!(FrequencyGrid::new(vec![0.0], 0.0).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 0.0], 0.1).is_err());
        let g = FrequencyGrid::uniform(-1.0, 1.0, 0.01, 0.05).unwrap();
        assert_eq!(g.len(), 201);
        assert_relative_eq!(g.omegas[200], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn abar_series_terminates() {
        let (_, _, ctx) = three_site_ctx();
        for p in 0..6 {
            let full = abar(&ctx.t, p, false, &ctx.n, &ctx.nm1).unwrap();
            let comm = abar_commutator(&ctx.t, p, false, &ctx.n, &ctx.nm1).unwrap();
            assert_relative_eq!(full, comm, epsilon = 1e-12);
            let full = abar(&ctx.t, p, true, &ctx.n, &ctx.np1).unwrap();
            let comm = abar_commutator(&ctx.t, p, true, &ctx.n, &ctx.np1).unwrap();
            assert_relative_eq!(full, comm, epsilon = 1e-12);
        }
    }

    #[test]
    fn abar_with_zero_t_is_bare() {
        let (_, _, ctx) = three_site_ctx();
        let zero = AmplitudeSet::new(AmplitudeKind::T, ctx.reference);
        let a = abar(&zero, 0, false, &ctx.n, &ctx.nm1).unwrap();
        let bare = dense_matrix(&SecondQuantizedOp::annihilation(0), &ctx.n, &ctx.nm1).unwrap();
        assert_eq!(a, bare);
    }

    #[test]
    fn xy_match_dense_inverse() {
        let (_, _, ctx) = three_site_ctx();
        let grid = FrequencyGrid::new(vec![-2.0, 0.3, 1.7], 0.05).unwrap();
        for branch in [Branch::Ionization, Branch::Attachment] {
            let sols = solve_xy(&ctx, 1, branch, &grid, None).unwrap();
            let rhs = to_complex_vec(&ctx.probe_ket(branch, 1).unwrap());
            for s in sols {
                let n = ctx.sector(branch).len();
                let m = DMatrix::<Complex64>::identity(n, n) * branch.z(s.omega, grid.eta)
                    - to_complex(&ctx.resolvent_matrix(branch));
                let inv = m.try_inverse().unwrap();
                let oracle = inv * &rhs;
                assert!((&s.vector.coefficients - oracle).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn far_frequency_decay() {
        let (_, _, ctx) = three_site_ctx();
        let grid = FrequencyGrid::new(vec![-1e4, -1e3], 0.05).unwrap();
        let sols = solve_xy(&ctx, 1, Branch::Ionization, &grid, None).unwrap();
        let ratio = sols[0].vector.coefficients.norm() / sols[1].vector.coefficients.norm();
        assert_relative_eq!(ratio, 0.1, epsilon = 1e-3);
    }

    #[test]
    fn free_particle_limit() {
        // single level e with T = Λ = 0: an empty level only has an addition pole
        let e = 0.7;
        let h = SecondQuantizedOp::from_term(e, vec![LadderOp::create(1), LadderOp::annihilate(1)])
            + SecondQuantizedOp::from_term(-1.0, vec![LadderOp::create(0), LadderOp::annihilate(0)]);
        let reference = Determinant::parse("10").unwrap();
        let p = CcProblem::new(&h, &reference, None).unwrap();
        let sol = p.solve_t(&SolverConfig::default()).unwrap();
        assert!(sol.t.is_empty());
        let ctx = CcgfContext::new(&h, &p, &sol.t, &zero_lambda(&sol.t), sol.energy).unwrap();
        let grid = FrequencyGrid::uniform(-2.0, 2.0, 0.5, 0.1).unwrap();
        let g = gf_element(&ctx, 1, 1, &grid).unwrap();
        let oracle = free_orbital_gf(e, false, &grid);
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
        let g = gf_element(&ctx, 0, 0, &grid).unwrap();
        let oracle = free_orbital_gf(-1.0, true, &grid);
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_pole_lorentzian_height() {
        let grid = FrequencyGrid::new(vec![0.5], 0.05).unwrap();
        let g = GreenFunctionResult::new(
            grid.clone(),
            vec![0],
            vec![DMatrix::from_element(1, 1, free_orbital_gf(0.5, true, &grid)[0] * 0.4)],
            vec![DMatrix::zeros(1, 1)],
        );
        let a = spectral_function(&g);
        assert_relative_eq!(a.values[0][0], 0.4 / (std::f64::consts::PI * 0.05), epsilon = 1e-12);
    }

    #[test]
    fn matrix_agrees_with_elements() {
        let (_, _, ctx) = three_site_ctx();
        let grid = FrequencyGrid::new(vec![-1.0, 0.25], 0.05).unwrap();
        let g = gf_matrix(&ctx, &[0, 1, 4], &grid).unwrap();
        for (i, &k) in [0, 1, 4].iter().enumerate() {
            for (j, &l) in [0, 1, 4].iter().enumerate() {
                let e = gf_element(&ctx, k, l, &grid).unwrap();
                for (w, ew) in e.iter().enumerate() {
                    assert!((g.total(w)[(i, j)] - ew).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn block_labels() {
        let layout = BlockLayout { centers: vec![vec![0, 1]] };
        assert_eq!(layout.label(0, 1), "emb");
        assert_eq!(layout.label(0, 3), "env1");
        assert_eq!(layout.label(4, 1), "env2");
        assert_eq!(layout.label(2, 5), "env3");
        let layout = BlockLayout { centers: vec![vec![0], vec![1]] };
        assert_eq!(layout.label(1, 1), "emb(2)");
        assert_eq!(layout.label(0, 1), "env");
    }

    #[test]
    fn overlapping_single_center_probes_rejected() {
        let (_, _, ctx) = three_site_ctx();
        let grid = FrequencyGrid::new(vec![0.0], 0.05).unwrap();
        assert!(gf_block_matrix(&ctx, &[0, 1], &[1, 2], &grid).is_err());
        let g = gf_block_matrix(&ctx, &[0, 1, 3, 4], &[2, 5], &grid).unwrap();
        assert_eq!(g.probes, vec![0, 1, 3, 4, 2, 5]);
    }

    #[test]
    fn peak_refinement_on_parabola() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - (v - 0.43) * (v - 0.43)).collect();
        let p = find_peaks(&x, &y, 0.0);
        assert_eq!(p.len(), 1);
        assert_relative_eq!(p[0], 0.43, epsilon = 1e-12);
    }

    #[test]
    fn full_active_space_effective_gf_is_exact() {
        let (h, p, ctx) = three_site_ctx();
        let full = ActiveSpace::full(&ctx.reference);
        let amps = EmbeddingAmplitudes {
            active: full,
            t_int: ctx.t.clone(),
            t_ext: AmplitudeSet::new(AmplitudeKind::T, ctx.reference),
            s_ext: AmplitudeSet::new(AmplitudeKind::S, ctx.reference),
        };
        let grid = FrequencyGrid::new(vec![-1.3, 0.2, 2.1], 0.05).unwrap();
        let eff = gf_effective(&h, &p, &amps, ctx.energy, 1, 1, &grid).unwrap();
        let exact = gf_element(&ctx, 1, 1, &grid).unwrap();
        for (a, b) in eff.iter().zip(&exact) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }
}
