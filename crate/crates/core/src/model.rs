//! Model Hamiltonians and the exact-diagonalization oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ccgf::{FrequencyGrid, GreenFunctionResult};
use crate::error::{domain, Error, Result};
use crate::fockspace::{
    dense_matrix, Determinant, LadderOp, Locality, SecondQuantizedOp, SectorBasis, Spin, SpinOrbital,
    StateVector,
};
use crate::linalg::Pole;

/// Parameters of the single-impurity Anderson model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiamParams {
    pub eps_c: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub eps_d: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
}

impl SiamParams {
    /// Three-site model with a symmetric two-level bath.
    pub fn three_site() -> Self {
        Self { eps_c: -0.5, mu: 0.0, u: 1.0, eps_d: vec![-1.0, 1.0], v: vec![1.0, 1.0] }
    }

    /// Particle-hole symmetric impurity level `eps_c = -U/2` with the default bath.
    pub fn symmetric(u: f64) -> Self {
        Self { eps_c: -u / 2.0, ..Self::three_site_with_u(u) }
    }

    fn three_site_with_u(u: f64) -> Self {
        Self { u, ..Self::three_site() }
    }

    pub fn n_bath(&self) -> usize {
        self.eps_d.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_d.len() != self.v.len() {
            return domain(format!(
                "{} bath energies but {} hybridizations",
                self.eps_d.len(),
                self.v.len()
            ));
        }
        let all = [self.eps_c, self.mu, self.u].into_iter().chain(self.eps_d.iter().copied()).chain(self.v.iter().copied());
        if all.into_iter().any(|x| !x.is_finite()) {
            return domain("model parameters must be finite");
        }
        Ok(())
    }
}

/// Orbital layout of a SIAM.
///
/// Spatial sites are ordered `[bath 1, impurity, bath 2, …, bath N]`
/// (impurity first when there is no bath). Spin-orbital `p < n_sites` is the
/// up-spin orbital of site `p`; `p + n_sites` is its down-spin partner. For the
/// three-site model this gives up orbitals 0,1,2 and down orbitals 3,4,5 with
/// the impurity at 1 and 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Siam {
    pub params: SiamParams,
}

impl Siam {
    pub fn new(params: SiamParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn n_sites(&self) -> usize {
        self.params.n_bath() + 1
    }

    pub fn n_orbitals(&self) -> usize {
        2 * self.n_sites()
    }

    pub fn impurity_site(&self) -> usize {
        usize::from(self.params.n_bath() > 0)
    }

    /// Site index of bath level `i` (1-based).
    pub fn bath_site(&self, i: usize) -> usize {
        if i == 1 {
            0
        } else {
            i
        }
    }

    pub fn orbital(&self, site: usize, spin: Spin) -> usize {
        match spin {
            Spin::Up => site,
            Spin::Down => site + self.n_sites(),
        }
    }

    pub fn impurity(&self, spin: Spin) -> usize {
        self.orbital(self.impurity_site(), spin)
    }

    pub fn layout(&self) -> Vec<Spin> {
        SpinOrbital::block_layout(self.n_orbitals())
    }

    pub fn spin_orbitals(&self) -> Vec<SpinOrbital> {
        let n = self.n_sites();
        (0..self.n_orbitals())
            .map(|p| {
                let site = p % n;
                let locality = if site == self.impurity_site() {
                    Locality::Impurity
                } else if site == 0 {
                    Locality::Bath(1)
                } else {
                    Locality::Bath(site)
                };
                SpinOrbital { index: p, spin: if p < n { Spin::Up } else { Spin::Down }, locality }
            })
            .collect()
    }

    pub fn hamiltonian(&self) -> SecondQuantizedOp {
        let p = &self.params;
        let mut h = SecondQuantizedOp::new();
        let (cu, cd) = (self.impurity(Spin::Up), self.impurity(Spin::Down));
        for c in [cu, cd] {
            h.push(p.eps_c - p.mu, vec![LadderOp::create(c), LadderOp::annihilate(c)]);
        }
        h.push(
            p.u,
            vec![LadderOp::create(cu), LadderOp::annihilate(cu), LadderOp::create(cd), LadderOp::annihilate(cd)],
        );
        for i in 1..=p.n_bath() {
            let site = self.bath_site(i);
            for spin in [Spin::Up, Spin::Down] {
                let d = self.orbital(site, spin);
                h.push(p.eps_d[i - 1], vec![LadderOp::create(d), LadderOp::annihilate(d)]);
            }
        }
        for i in 1..=p.n_bath() {
            let site = self.bath_site(i);
            for spin in [Spin::Up, Spin::Down] {
                let (c, d) = (self.impurity(spin), self.orbital(site, spin));
                h.push(p.v[i - 1], vec![LadderOp::create(c), LadderOp::annihilate(d)]);
                h.push(p.v[i - 1], vec![LadderOp::create(d), LadderOp::annihilate(c)]);
            }
        }
        h
    }

    /// Reference determinant of the three-site model: bath level below the impurity filled for both spins, impurity spin down.
    pub fn three_site_reference() -> Determinant {
        Determinant::parse("100110").expect("valid literal")
    }
}

/// `H = H_imp + H_bath + H_hyb` for the given parameters.
pub fn build_siam(p: &SiamParams) -> Result<SecondQuantizedOp> {
    Ok(Siam::new(p.clone())?.hamiltonian())
}

/// `H = H_A + H_B + λ·coupling`; `H_A` and `H_B` must act on disjoint orbitals.
pub fn build_composite(
    ha: &SecondQuantizedOp,
    hb: &SecondQuantizedOp,
    coupling: &SecondQuantizedOp,
    lambda: f64,
) -> Result<SecondQuantizedOp> {
    let (sa, sb) = (ha.support(), hb.support());
    if let Some(p) = sa.intersection(&sb).next() {
        return domain(format!("subsystem Hamiltonians overlap on orbital {p}"));
    }
    Ok(ha.clone() + hb.clone() + coupling.scaled(lambda))
}

/// Two SIAMs `A` and `B` joined by a hopping between the last bath site of `A`
/// and the impurity of `B` (both spins). `B` orbitals follow those of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSpec {
    pub a: SiamParams,
    pub b: SiamParams,
    pub reference_a: String,
    pub reference_b: String,
    pub lambda: f64,
}

impl CompositeSpec {
    /// Three-site `A` coupled to a two-site `B` whose
    /// reference puts one electron on the impurity and one on the bath.
    pub fn nsl(lambda: f64) -> Self {
        Self {
            a: SiamParams::three_site(),
            b: SiamParams { eps_c: -1.0, mu: 0.0, u: 2.0, eps_d: vec![-0.5], v: vec![1.0] },
            reference_a: "100110".into(),
            reference_b: "0110".into(),
            lambda,
        }
    }

    pub fn build(&self) -> Result<Composite> {
        let (sa, sb) = (Siam::new(self.a.clone())?, Siam::new(self.b.clone())?);
        let ra = Determinant::parse(&self.reference_a)?;
        let rb = Determinant::parse(&self.reference_b)?;
        if ra.n_orbitals() != sa.n_orbitals() || rb.n_orbitals() != sb.n_orbitals() {
            return domain("subsystem reference length does not match its orbital count");
        }
        if sa.params.n_bath() == 0 {
            return domain("subsystem A needs a bath site to couple through");
        }
        let off = sa.n_orbitals();
        let hb = sb.hamiltonian().shifted(off);
        let mut coupling = SecondQuantizedOp::new();
        for spin in [Spin::Up, Spin::Down] {
            let p = sa.orbital(sa.bath_site(sa.params.n_bath()), spin);
            let q = sb.impurity(spin) + off;
            coupling.push(1.0, vec![LadderOp::create(p), LadderOp::annihilate(q)]);
            coupling.push(1.0, vec![LadderOp::create(q), LadderOp::annihilate(p)]);
        }
        let hamiltonian = build_composite(&sa.hamiltonian(), &hb, &coupling, self.lambda)?;
        let reference = Determinant::parse(&format!("{}{}", self.reference_a, self.reference_b))?;
        Ok(Composite {
            hamiltonian,
            reference,
            a_orbitals: (0..off).collect(),
            b_orbitals: (off..off + sb.n_orbitals()).collect(),
            reference_a: ra,
            reference_b: rb,
            h_a: sa.hamiltonian(),
            h_b: sb.hamiltonian(),
        })
    }
}

/// Assembled composite system.
#[derive(Debug, Clone)]
pub struct Composite {
    pub hamiltonian: SecondQuantizedOp,
    pub reference: Determinant,
    pub a_orbitals: Vec<usize>,
    pub b_orbitals: Vec<usize>,
    pub reference_a: Determinant,
    pub reference_b: Determinant,
    /// Isolated subsystem Hamiltonians in their own orbital numbering.
    pub h_a: SecondQuantizedOp,
    pub h_b: SecondQuantizedOp,
}

/// Full spectrum of a particle-conserving Hamiltonian within one sector.
#[derive(Debug, Clone)]
pub struct EDResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
    pub sector: Arc<SectorBasis>,
}

impl EDResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &StateVector {
        &self.eigenvectors[0]
    }

    /// `⟨k|op|k⟩` for eigenstate `k`.
    pub fn expectation(&self, op: &SecondQuantizedOp, k: usize) -> Result<f64> {
        let m = dense_matrix(op, &self.sector, &self.sector)?;
        let v = self.eigenvectors[k].real_part();
        Ok(v.dot(&(m * &v)))
    }

    fn vectors(&self) -> DMatrix<f64> {
        let n = self.sector.len();
        DMatrix::from_fn(n, self.eigenvalues.len(), |i, j| self.eigenvectors[j].coefficients[i].re)
    }
}

pub fn exact_diagonalize(h: &SecondQuantizedOp, sector: &Arc<SectorBasis>) -> Result<EDResult> {
    if h.particle_change().unwrap_or(1) != 0 {
        return domain("Hamiltonian does not conserve particle number");
    }
    let m = dense_matrix(h, sector, sector)?;
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-12 {
        return domain(format!("Hamiltonian matrix is not Hermitian (max asymmetry {asym:.3e})"));
    }
    if sector.is_empty() {
        return Ok(EDResult { eigenvalues: Vec::new(), eigenvectors: Vec::new(), sector: sector.clone() });
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(order.len());
    let mut eigenvectors = Vec::with_capacity(order.len());
    for k in order {
        let e = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k).into_owned();
        let res = (&m * &v - &v * e).norm();
        if res > 1e-10 * e.abs().max(1.0) {
            return Err(Error::Domain(format!("eigen-solver residual {res:.3e} too large")));
        }
        eigenvalues.push(e);
        eigenvectors.push(StateVector::from_real(sector.clone(), &v)?);
    }
    Ok(EDResult { eigenvalues, eigenvectors, sector: sector.clone() })
}

/// Exact ionization and attachment poles of `G_KL`.
#[derive(Debug, Clone)]
pub struct LehmannPoles {
    pub ionization: Vec<Pole>,
    pub attachment: Vec<Pole>,
}

const DEGENERACY_TOL: f64 = 1e-8;

fn check_nondegenerate(ed: &EDResult) -> Result<()> {
    if ed.eigenvalues.is_empty() {
        return domain("empty N-electron sector");
    }
    if ed.eigenvalues.len() > 1 {
        let gap = ed.eigenvalues[1] - ed.eigenvalues[0];
        if gap < DEGENERACY_TOL {
            return Err(Error::DegenerateGroundState { gap });
        }
    }
    Ok(())
}

struct LehmannAmplitudes {
    /// `⟨m|a_K|0⟩` per probe (rows) and N−1 eigenstate (cols)
    remove: DMatrix<f64>,
    /// `⟨m|a†_K|0⟩` per probe and N+1 eigenstate
    add: DMatrix<f64>,
}

fn lehmann_amplitudes(ed_n: &EDResult, ed_nm1: &EDResult, ed_np1: &EDResult, orbitals: &[usize]) -> Result<LehmannAmplitudes> {
    check_nondegenerate(ed_n)?;
    if ed_nm1.sector.n_electrons() + 1 != ed_n.sector.n_electrons()
        || ed_np1.sector.n_electrons() != ed_n.sector.n_electrons() + 1
    {
        return domain("sectors must hold N-1, N and N+1 electrons");
    }
    let ground = ed_n.ground_state().real_part();
    let (um, up) = (ed_nm1.vectors(), ed_np1.vectors());
    let mut remove = DMatrix::zeros(orbitals.len(), um.ncols());
    let mut add = DMatrix::zeros(orbitals.len(), up.ncols());
    for (k, &p) in orbitals.iter().enumerate() {
        let a = dense_matrix(&SecondQuantizedOp::annihilation(p), &ed_n.sector, &ed_nm1.sector)?;
        let ad = dense_matrix(&SecondQuantizedOp::creation(p), &ed_n.sector, &ed_np1.sector)?;
        remove.row_mut(k).copy_from(&(um.transpose() * (a * &ground)).transpose());
        add.row_mut(k).copy_from(&(up.transpose() * (ad * &ground)).transpose());
    }
    Ok(LehmannAmplitudes { remove, add })
}

/// Pole positions and weights of the exact `G_KL(ω)`.
pub fn lehmann_poles(ed_n: &EDResult, ed_nm1: &EDResult, ed_np1: &EDResult, k: usize, l: usize) -> Result<LehmannPoles> {
    let amps = lehmann_amplitudes(ed_n, ed_nm1, ed_np1, &[k, l])?;
    let e0 = ed_n.ground_energy();
    let ionization = ed_nm1
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(m, &em)| Pole { position: e0 - em, residue: amps.remove[(1, m)] * amps.remove[(0, m)] })
        .collect();
    let attachment = ed_np1
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(m, &em)| Pole { position: em - e0, residue: amps.add[(0, m)] * amps.add[(1, m)] })
        .collect();
    Ok(LehmannPoles { ionization, attachment })
}

/// Lehmann-representation Green's function on `grid` for the given probes.
///
/// The removal branch carries `ω − (E_0 − E_m) − iη` and the addition branch
/// `ω − (E_m − E_0) + iη`, matching the coupled-cluster X/Y conventions.
pub fn lehmann_gf(
    ed_n: &EDResult,
    ed_nm1: &EDResult,
    ed_np1: &EDResult,
    orbitals: &[usize],
    grid: &FrequencyGrid,
) -> Result<GreenFunctionResult> {
    let amps = lehmann_amplitudes(ed_n, ed_nm1, ed_np1, orbitals)?;
    let e0 = ed_n.ground_energy();
    let np = orbitals.len();
    let eta = grid.eta;
    let mut ionization = Vec::with_capacity(grid.len());
    let mut attachment = Vec::with_capacity(grid.len());
    for &w in &grid.omegas {
        let mut gi = DMatrix::<Complex64>::zeros(np, np);
        let mut ga = DMatrix::<Complex64>::zeros(np, np);
        for (m, &em) in ed_nm1.eigenvalues.iter().enumerate() {
            let d = Complex64::new(w - (e0 - em), -eta).inv();
            for k in 0..np {
                for l in 0..np {
                    gi[(k, l)] += d * (amps.remove[(l, m)] * amps.remove[(k, m)]);
                }
            }
        }
        for (m, &em) in ed_np1.eigenvalues.iter().enumerate() {
            let d = Complex64::new(w - (em - e0), eta).inv();
            for k in 0..np {
                for l in 0..np {
                    ga[(k, l)] += d * (amps.add[(k, m)] * amps.add[(l, m)]);
                }
            }
        }
        ionization.push(gi);
        attachment.push(ga);
    }
    Ok(GreenFunctionResult::new(grid.clone(), orbitals.to_vec(), ionization, attachment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_site_sector(siam: &Siam) -> Arc<SectorBasis> {
        Arc::new(SectorBasis::of_reference(&siam.layout(), &Siam::three_site_reference()).unwrap())
    }

    #[test]
    fn siam_term_count() {
        let h = build_siam(&SiamParams::three_site()).unwrap();
        // two impurity levels, one U term, 2 per bath level, 4 hopping strings per bath level
        assert_eq!(h.len(), 2 + 1 + 2 * 2 + 4 * 2);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SiamParams::three_site();
        p.v.pop();
        assert!(build_siam(&p).is_err());
        let mut p = SiamParams::three_site();
        p.u = f64::NAN;
        assert!(build_siam(&p).is_err());
    }

    #[test]
    fn three_site_ground_energy() {
        let siam = Siam::new(SiamParams::three_site()).unwrap();
        let full = Arc::new(SectorBasis::new(6, 3).unwrap());
        let ed = exact_diagonalize(&siam.hamiltonian(), &full).unwrap();
        assert_relative_eq!(ed.ground_energy(), -3.7572543, epsilon = 1e-6);
        let ed = exact_diagonalize(&siam.hamiltonian(), &three_site_sector(&siam)).unwrap();
        assert_relative_eq!(ed.ground_energy(), -3.7572543, epsilon = 1e-6);
    }

    #[test]
    fn diagonal_hamiltonian_eigenvalues() {
        let mut h = SecondQuantizedOp::new();
        for (p, e) in [(0, 0.3), (1, -1.0), (2, 2.0)] {
            h.push(e, vec![LadderOp::create(p), LadderOp::annihilate(p)]);
        }
        let s = Arc::new(SectorBasis::new(3, 1).unwrap());
        let ed = exact_diagonalize(&h, &s).unwrap();
        assert_eq!(ed.eigenvalues, vec![-1.0, 0.3, 2.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let h = SecondQuantizedOp::from_term(1.0, vec![LadderOp::create(0), LadderOp::annihilate(1)]);
        let s = Arc::new(SectorBasis::new(2, 1).unwrap());
        assert!(exact_diagonalize(&h, &s).is_err());
    }

    #[test]
    fn decoupled_noninteracting_limit() {
        let p = SiamParams { u: 0.0, v: vec![0.0, 0.0], ..SiamParams::three_site() };
        let siam = Siam::new(p).unwrap();
        let ed = exact_diagonalize(&siam.hamiltonian(), &three_site_sector(&siam)).unwrap();
        // one up electron and two down electrons in levels {-1, -0.5, 1}
        assert_relative_eq!(ed.ground_energy(), -1.0 + (-1.0 - 0.5), epsilon = 1e-12);
    }

    #[test]
    fn composite_rejects_overlap() {
        let a = SecondQuantizedOp::number(0);
        let b = SecondQuantizedOp::number(0);
        assert!(build_composite(&a, &b, &SecondQuantizedOp::new(), 0.0).is_err());
    }

    #[test]
    fn decoupled_composite_energy_is_additive() {
        let c = CompositeSpec::nsl(0.0).build().unwrap();
        let ground = |h: &SecondQuantizedOp, r: &Determinant| {
            let s = Arc::new(SectorBasis::reachable(&[h], [*r]).unwrap());
            exact_diagonalize(h, &s).unwrap().ground_energy()
        };
        let e = ground(&c.hamiltonian, &c.reference);
        let ea = ground(&c.h_a, &c.reference_a);
        let eb = ground(&c.h_b, &c.reference_b);
        assert_relative_eq!(e, ea + eb, epsilon = 1e-10);
        assert_eq!(c.reference.to_string(), "1001100110");
        let coupled = CompositeSpec::nsl(0.3).build().unwrap();
        assert!(ground(&coupled.hamiltonian, &coupled.reference) < e);
    }

    #[test]
    fn degenerate_ground_state_is_an_error() {
        let siam = Siam::new(SiamParams::three_site()).unwrap();
        let h = siam.hamiltonian();
        // the full N=3 sector holds both spin projections of the doublet
        let n = Arc::new(SectorBasis::new(6, 3).unwrap());
        let nm = Arc::new(SectorBasis::new(6, 2).unwrap());
        let np = Arc::new(SectorBasis::new(6, 4).unwrap());
        let (a, b, c) = (
            exact_diagonalize(&h, &n).unwrap(),
            exact_diagonalize(&h, &nm).unwrap(),
            exact_diagonalize(&h, &np).unwrap(),
        );
        let grid = FrequencyGrid::new(vec![0.0], 0.05).unwrap();
        assert!(matches!(lehmann_gf(&a, &b, &c, &[1], &grid), Err(Error::DegenerateGroundState { .. })));
    }
}
