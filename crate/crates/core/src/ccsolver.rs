//! Amplitude equations for `T`, `Λ` and `S_ext`, plus the FCI cluster-analysis oracle.
//!
//! All three solvers share one damped Jacobi iteration with optional DIIS
//! extrapolation. Residuals are evaluated with exact dense matrices on the
//! working sector, so truncation enters only through the chosen signatures.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::{
    excitation_dense, exp_dense, split, t_from_ket, ActiveSpace, AmplitudeKind, AmplitudeSet, CcSpace,
    Excitation,
};
use crate::error::{domain, Error, Result};
use crate::fockspace::{dense_matrix, Determinant, OperatorMatrix, SecondQuantizedOp, SectorBasis, StateVector};

const DIVERGENCE_LIMIT: f64 = 1e3;
const SMALL_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "depth")]
pub enum Acceleration {
    None,
    Diis(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub mixing: f64,
    pub acceleration: Acceleration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-10, mixing: 1.0, acceleration: Acceleration::Diis(6) }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return domain("solver tolerance must be positive");
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return domain("mixing must lie in (0, 1]");
        }
        if self.acceleration == Acceleration::Diis(0) {
            return domain("DIIS depth must be at least 1");
        }
        if self.max_iter == 0 {
            return domain("max_iter must be positive");
        }
        Ok(())
    }
}

/// Residual and diagonal denominators at the current amplitudes.
pub(crate) struct Evaluation {
    pub residual: DVector<f64>,
    pub denominators: DVector<f64>,
}

pub(crate) struct Converged {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

struct Diis {
    depth: usize,
    xs: VecDeque<DVector<f64>>,
    errs: VecDeque<DVector<f64>>,
}

impl Diis {
    fn new(depth: usize) -> Self {
        Self { depth, xs: VecDeque::new(), errs: VecDeque::new() }
    }

    fn extrapolate(&mut self, x: DVector<f64>, err: DVector<f64>) -> DVector<f64> {
        self.xs.push_back(x.clone());
        self.errs.push_back(err);
        if self.xs.len() > self.depth {
            self.xs.pop_front();
            self.errs.pop_front();
        }
        let n = self.xs.len();
        if n < 2 {
            return x;
        }
        let mut b = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = self.errs[i].dot(&self.errs[j]);
            }
            b[(i, n)] = -1.0;
            b[(n, i)] = -1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = -1.0;
        match b.lu().solve(&rhs) {
            Some(c) if c.iter().all(|v| v.is_finite()) => {
                let mut out = DVector::zeros(x.len());
                for i in 0..n {
                    out += &self.xs[i] * c[i];
                }
                out
            }
            _ => {
                // ill-conditioned subspace: restart from the newest point
                self.xs.drain(..n - 1);
                self.errs.drain(..n - 1);
                x
            }
        }
    }
}

/// Damped Jacobi iteration `x ← x − mixing·R/d` with optional DIIS.
pub(crate) fn iterate(
    x0: DVector<f64>,
    cfg: &SolverConfig,
    mut eval: impl FnMut(&DVector<f64>) -> Result<Evaluation>,
) -> Result<Converged> {
    cfg.validate()?;
    let mut x = x0;
    let mut diis = match cfg.acceleration {
        Acceleration::Diis(depth) => Some(Diis::new(depth)),
        Acceleration::None => None,
    };
    let mut trace = Vec::new();
    for it in 0..cfg.max_iter {
        let Evaluation { residual, denominators } = eval(&x)?;
        let norm = residual.amax();
        trace.push(norm);
        if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { iteration: it, residual: norm });
        }
        if norm < cfg.tol {
            return Ok(Converged { x, residual: norm, iterations: it });
        }
        let step = DVector::from_iterator(
            x.len(),
            residual.iter().zip(denominators.iter()).map(|(&r, &d)| {
                if d.abs() < SMALL_DENOMINATOR {
                    r
                } else {
                    r / d
                }
            }),
        ) * cfg.mixing;
        let next = &x - &step;
        x = match diis.as_mut() {
            Some(d) => d.extrapolate(next, step),
            None => next,
        };
    }
    let residual = trace.last().copied().unwrap_or(f64::NAN);
    Err(Error::NotConverged { iterations: cfg.max_iter, residual, trace })
}

/// Dense Hamiltonian on the sector of a [`CcSpace`].
#[derive(Debug, Clone)]
pub struct CcProblem {
    pub space: CcSpace,
    pub h: DMatrix<f64>,
}

impl CcProblem {
    /// Working sector: the determinants reachable from `reference` under `h`.
    /// `rank_max` limits the excitation rank of the amplitudes.
    pub fn new(h: &SecondQuantizedOp, reference: &Determinant, rank_max: Option<usize>) -> Result<Self> {
        let sector = Arc::new(SectorBasis::reachable(&[h], [*reference])?);
        let space = CcSpace::new(sector.clone(), *reference, rank_max)?;
        if let Some(k) = rank_max {
            if k > reference.n_electrons() {
                return domain(format!("rank_max {k} exceeds the electron count"));
            }
        }
        let h = dense_matrix(h, &sector, &sector)?;
        Ok(Self { space, h })
    }

    /// Same Hamiltonian restricted to a subset of signatures.
    pub fn with_signatures(&self, signatures: Vec<Excitation>) -> Result<Self> {
        let space = CcSpace::with_excitations(self.space.sector.clone(), self.space.reference, signatures)?;
        Ok(Self { space, h: self.h.clone() })
    }

    pub fn sector(&self) -> &Arc<SectorBasis> {
        &self.space.sector
    }

    pub fn hbar(&self, t: &AmplitudeSet) -> Result<DMatrix<f64>> {
        crate::cluster::similarity_dense(&self.h, t, self.sector())
    }

    fn denominators(&self, hbar: &DMatrix<f64>) -> DVector<f64> {
        let r = self.space.reference_index;
        DVector::from_iterator(
            self.space.len(),
            (0..self.space.len()).map(|k| {
                let p = self.space.position(k);
                hbar[(p, p)] - hbar[(r, r)]
            }),
        )
    }

    pub fn reference_energy(&self) -> f64 {
        let r = self.space.reference_index;
        self.h[(r, r)]
    }

    /// Solves the projected amplitude equations.
    pub fn solve_t(&self, cfg: &SolverConfig) -> Result<CCSolution> {
        self.solve_t_from(&AmplitudeSet::new(AmplitudeKind::T, self.space.reference), cfg)
    }

    pub fn solve_t_from(&self, guess: &AmplitudeSet, cfg: &SolverConfig) -> Result<CCSolution> {
        let space = &self.space;
        let conv = iterate(space.vector(guess), cfg, |x| {
            let t = space.amplitudes(AmplitudeKind::T, x);
            let hbar = self.hbar(&t)?;
            let col = hbar.column(space.reference_index).into_owned();
            Ok(Evaluation { residual: space.project(&col), denominators: self.denominators(&hbar) })
        })?;
        let t = space.amplitudes(AmplitudeKind::T, &conv.x);
        let hbar = self.hbar(&t)?;
        let r = space.reference_index;
        Ok(CCSolution {
            energy: hbar[(r, r)],
            t,
            residual_norm: conv.residual,
            iterations: conv.iterations,
            hbar,
        })
    }

    /// Left amplitudes `Λ` on the same signatures as `sol.t`.
    pub fn solve_lambda(&self, sol: &CCSolution, cfg: &SolverConfig) -> Result<AmplitudeSet> {
        lambda_iteration(&self.space, &sol.hbar, cfg)
    }
}

/// Converged ground-state amplitudes with the transformed Hamiltonian.
#[derive(Debug, Clone)]
pub struct CCSolution {
    pub t: AmplitudeSet,
    pub energy: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `e^{-T} H e^{T}` on the working sector.
    pub hbar: DMatrix<f64>,
}

/// Ground-state CC with excitations up to `rank_max` (all ranks if `None`).
pub fn solve_t(
    h: &SecondQuantizedOp,
    reference: &Determinant,
    rank_max: Option<usize>,
    cfg: &SolverConfig,
) -> Result<CCSolution> {
    CcProblem::new(h, reference, rank_max)?.solve_t(cfg)
}

fn lambda_iteration(space: &CcSpace, hbar: &DMatrix<f64>, cfg: &SolverConfig) -> Result<AmplitudeSet> {
    let r = space.reference_index;
    let e = hbar[(r, r)];
    let shifted = hbar - DMatrix::identity(hbar.nrows(), hbar.ncols()) * e;
    let d = DVector::from_iterator(space.len(), (0..space.len()).map(|k| {
        let p = space.position(k);
        hbar[(p, p)] - e
    }));
    let conv = iterate(DVector::zeros(space.len()), cfg, |x| {
        let mut bra = DVector::zeros(space.sector.len());
        bra[r] = 1.0;
        for k in 0..space.len() {
            bra[space.position(k)] += x[k] * space.sign(k);
        }
        let row = shifted.tr_mul(&bra);
        Ok(Evaluation { residual: space.project(&row), denominators: d.clone() })
    })?;
    Ok(space.amplitudes(AmplitudeKind::Lambda, &conv.x))
}

/// `⟨Φ|(1+Λ)(H̄ − E) Q = 0` for the signatures of `t`.
pub fn solve_lambda(hbar: &OperatorMatrix, t: &AmplitudeSet, cfg: &SolverConfig) -> Result<AmplitudeSet> {
    let space = CcSpace::with_excitations(hbar.domain.clone(), t.reference, t.signatures().cloned().collect())?;
    lambda_iteration(&space, &hbar.to_dense(), cfg)
}

/// External de-excitation amplitudes from `⟨Φ|(1+Λ_int) e^{S_ext} H̄ e^{-S_ext} Q_ext = 0`.
pub fn solve_s_ext(
    hbar: &OperatorMatrix,
    h: &ActiveSpace,
    lambda_int: &AmplitudeSet,
    cfg: &SolverConfig,
) -> Result<AmplitudeSet> {
    let sector = hbar.domain.clone();
    let all = CcSpace::new(sector.clone(), lambda_int.reference, None)?;
    let external: Vec<Excitation> = all.excitations.iter().filter(|e| !h.contains(e)).cloned().collect();
    let space = CcSpace::with_excitations(sector.clone(), lambda_int.reference, external)?;
    solve_s_ext_in(&space, &hbar.to_dense(), lambda_int, cfg)
}

pub(crate) fn solve_s_ext_in(
    space: &CcSpace,
    hbar: &DMatrix<f64>,
    lambda_int: &AmplitudeSet,
    cfg: &SolverConfig,
) -> Result<AmplitudeSet> {
    let sector = &space.sector;
    let r = space.reference_index;
    if space.is_empty() {
        return Ok(AmplitudeSet::new(AmplitudeKind::S, space.reference));
    }
    let bra = {
        let l = excitation_dense(lambda_int, sector)?;
        let mut b = l.row(r).transpose();
        b[r] += 1.0;
        b
    };
    let d = DVector::from_iterator(space.len(), (0..space.len()).map(|k| {
        let p = space.position(k);
        hbar[(p, p)] - hbar[(r, r)]
    }));
    let conv = iterate(DVector::zeros(space.len()), cfg, |x| {
        let s = space.amplitudes(AmplitudeKind::S, x);
        let plus = exp_dense(&s, sector, 1.0)?;
        let minus = exp_dense(&s, sector, -1.0)?;
        let row = (minus.transpose() * (hbar.transpose() * (plus.transpose() * &bra))).into_owned();
        Ok(Evaluation { residual: space.project(&row), denominators: d.clone() })
    })?;
    Ok(space.amplitudes(AmplitudeKind::S, &conv.x))
}

/// `T = ln(C)` for `C|Φ⟩ = ψ/⟨Φ|ψ⟩`.
pub fn cluster_analyze_fci(ground: &StateVector, reference: &Determinant) -> Result<AmplitudeSet> {
    let c0 = ground.coefficient(reference);
    if c0.norm() < 1e-12 * ground.coefficients.norm().max(1.0) {
        return Err(Error::VanishingReference(c0.norm()));
    }
    let scaled = ground.coefficients.map(|c| c / c0);
    if let Some(bad) = scaled.iter().find(|c| c.im.abs() > 1e-10) {
        return domain(format!("state is not real up to a global phase (imaginary part {:.3e})", bad.im));
    }
    let ket = scaled.map(|c| c.re);
    t_from_ket(reference, &ground.sector, &ket)
}

/// `(Λ_int, S_int, S_ext)` from a full `Λ`, with `S = ln(1+Λ)`.
pub fn lambda_int_and_s(lambda: &AmplitudeSet, h: &ActiveSpace) -> Result<(AmplitudeSet, AmplitudeSet, AmplitudeSet)> {
    let s = crate::cluster::s_from_lambda(lambda)?;
    let (s_int, s_ext) = split(&s, h);
    let (lambda_int, _) = split(lambda, h);
    Ok((lambda_int, s_int, s_ext))
}
