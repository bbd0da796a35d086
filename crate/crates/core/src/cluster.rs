//! Excitation signatures, amplitude sets and the exact matrix maps built on them.
//!
//! An excitation `(i_1..i_k → a_1..a_k)` is represented by the operator string
//! `a†_{a_1} … a†_{a_k} a_{i_k} … a_{i_1}` with both index lists increasing.
//! `T` amplitudes multiply these strings; `Λ` and `S` amplitudes multiply
//! their adjoints (de-excitations).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fockspace::{
    dense_matrix, Determinant, LadderOp, OperatorMatrix, SecondQuantizedOp, SectorBasis,
};
use crate::linalg::{exp_nilpotent, log_unipotent};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Excitation {
    pub holes: Vec<usize>,
    pub particles: Vec<usize>,
}

impl Excitation {
    pub fn new(mut holes: Vec<usize>, mut particles: Vec<usize>) -> Result<Self> {
        holes.sort_unstable();
        particles.sort_unstable();
        let strictly_increasing = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if holes.is_empty() || holes.len() != particles.len() {
            return domain("an excitation needs equally many (>= 1) holes and particles");
        }
        if !strictly_increasing(&holes) || !strictly_increasing(&particles) {
            return domain("repeated orbital in excitation");
        }
        if holes.iter().any(|h| particles.contains(h)) {
            return domain("orbital is both hole and particle");
        }
        Ok(Self { holes, particles })
    }

    pub fn single(i: usize, a: usize) -> Self {
        Self { holes: vec![i], particles: vec![a] }
    }

    pub fn double(i: usize, j: usize, a: usize, b: usize) -> Self {
        Self::new(vec![i, j], vec![a, b]).expect("valid double excitation")
    }

    /// Excitation turning `reference` into `det`; `None` if they coincide or
    /// differ in electron number.
    pub fn between(reference: &Determinant, det: &Determinant) -> Option<Self> {
        if reference.n_electrons() != det.n_electrons() || reference == det {
            return None;
        }
        let holes = (0..reference.n_orbitals())
            .filter(|&p| reference.is_occupied(p) && !det.is_occupied(p))
            .collect();
        let particles = (0..reference.n_orbitals())
            .filter(|&p| !reference.is_occupied(p) && det.is_occupied(p))
            .collect();
        Some(Self { holes, particles })
    }

    pub fn rank(&self) -> usize {
        self.holes.len()
    }

    pub fn operator_string(&self) -> Vec<LadderOp> {
        self.particles
            .iter()
            .map(|&a| LadderOp::create(a))
            .chain(self.holes.iter().rev().map(|&i| LadderOp::annihilate(i)))
            .collect()
    }

    /// `E_μ|reference⟩ = sign·|det⟩`.
    pub fn apply_to(&self, reference: &Determinant) -> Option<(Determinant, f64)> {
        reference.apply_string(&self.operator_string())
    }

    pub fn is_valid_for(&self, reference: &Determinant) -> bool {
        self.holes.iter().all(|&i| reference.is_occupied(i))
            && self.particles.iter().all(|&a| a < reference.n_orbitals() && !reference.is_occupied(a))
    }

    pub fn orbitals(&self) -> impl Iterator<Item = usize> + '_ {
        self.holes.iter().chain(self.particles.iter()).copied()
    }
}

impl Ord for Excitation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank()
            .cmp(&other.rank())
            .then_with(|| self.holes.cmp(&other.holes))
            .then_with(|| self.particles.cmp(&other.particles))
    }
}

impl PartialOrd for Excitation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Excitation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{}->{}", join(&self.holes), join(&self.particles))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AmplitudeKind {
    T,
    Lambda,
    S,
}

impl AmplitudeKind {
    pub fn is_excitation(self) -> bool {
        self == AmplitudeKind::T
    }
}

/// Sparse map from excitation signatures to real amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    pub kind: AmplitudeKind,
    pub reference: Determinant,
    amplitudes: BTreeMap<Excitation, f64>,
}

impl AmplitudeSet {
    pub fn new(kind: AmplitudeKind, reference: Determinant) -> Self {
        Self { kind, reference, amplitudes: BTreeMap::new() }
    }

    pub fn from_entries(
        kind: AmplitudeKind,
        reference: Determinant,
        entries: impl IntoIterator<Item = (Excitation, f64)>,
    ) -> Result<Self> {
        let mut set = Self::new(kind, reference);
        for (e, v) in entries {
            set.insert(e, v)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, exc: Excitation, value: f64) -> Result<()> {
        if !exc.is_valid_for(&self.reference) {
            return domain(format!("excitation {exc} is not defined on {:?}", self.reference));
        }
        self.amplitudes.insert(exc, value);
        Ok(())
    }

    pub fn get(&self, exc: &Excitation) -> f64 {
        self.amplitudes.get(exc).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, exc: &Excitation) -> bool {
        self.amplitudes.contains_key(exc)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Excitation, f64)> {
        self.amplitudes.iter().map(|(e, &v)| (e, v))
    }

    pub fn signatures(&self) -> impl Iterator<Item = &Excitation> {
        self.amplitudes.keys()
    }

    pub fn with_kind(&self, kind: AmplitudeKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind,
            reference: self.reference,
            amplitudes: self.amplitudes.iter().map(|(e, v)| (e.clone(), v * factor)).collect(),
        }
    }

    /// Union of two sets; values on shared signatures are added.
    pub fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, v) in other.iter() {
            *out.amplitudes.entry(e.clone()).or_insert(0.0) += v;
        }
        out
    }

    /// Largest absolute entrywise difference over the union of signatures.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.signatures()
            .chain(other.signatures())
            .map(|e| (self.get(e) - other.get(e)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.values().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Operator `Σ t_μ E_μ` (T kind) or `Σ λ_μ E_μ†` (Λ, S kinds).
    pub fn operator(&self) -> SecondQuantizedOp {
        let mut op = SecondQuantizedOp::new();
        for (e, v) in self.iter() {
            let ops = e.operator_string();
            let ops = if self.kind.is_excitation() {
                ops
            } else {
                ops.iter().rev().map(|o| o.adjoint()).collect()
            };
            op.push(v, ops);
        }
        op
    }
}

/// Active occupied (`R`) and virtual (`S`) spin-orbitals of an embedding subalgebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveSpace {
    pub occupied: BTreeSet<usize>,
    pub virtuals: BTreeSet<usize>,
}

impl ActiveSpace {
    pub fn new(reference: &Determinant, occupied: &[usize], virtuals: &[usize]) -> Result<Self> {
        if let Some(&i) = occupied.iter().find(|&&i| !reference.is_occupied(i)) {
            return domain(format!("active orbital {i} is not occupied in {reference:?}"));
        }
        if let Some(&a) = virtuals.iter().find(|&&a| a >= reference.n_orbitals() || reference.is_occupied(a)) {
            return domain(format!("active orbital {a} is not virtual in {reference:?}"));
        }
        Ok(Self { occupied: occupied.iter().copied().collect(), virtuals: virtuals.iter().copied().collect() })
    }

    pub fn empty() -> Self {
        Self { occupied: BTreeSet::new(), virtuals: BTreeSet::new() }
    }

    pub fn full(reference: &Determinant) -> Self {
        Self { occupied: reference.occupied().into_iter().collect(), virtuals: reference.unoccupied().into_iter().collect() }
    }

    /// Active space generated by one excitation's indices.
    pub fn of_excitation(e: &Excitation) -> Self {
        Self { occupied: e.holes.iter().copied().collect(), virtuals: e.particles.iter().copied().collect() }
    }

    pub fn contains(&self, e: &Excitation) -> bool {
        e.holes.iter().all(|i| self.occupied.contains(i)) && e.particles.iter().all(|a| self.virtuals.contains(a))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.occupied.is_subset(&other.occupied) && self.virtuals.is_subset(&other.virtuals)
    }

    pub fn orbitals(&self) -> BTreeSet<usize> {
        self.occupied.union(&self.virtuals).copied().collect()
    }

    /// Whether a determinant of any electron count lies in the active space
    /// relative to `reference`: its holes are in `R` and its particles in `S`.
    pub fn is_internal(&self, reference: &Determinant, det: &Determinant) -> bool {
        (0..reference.n_orbitals()).all(|p| match (reference.is_occupied(p), det.is_occupied(p)) {
            (true, false) => self.occupied.contains(&p),
            (false, true) => self.virtuals.contains(&p),
            _ => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub label: String,
    pub active: ActiveSpace,
}

impl SubsystemSpec {
    pub fn new(label: impl Into<String>, active: ActiveSpace) -> Self {
        Self { label: label.into(), active }
    }
}

/// Splits `amps` into the part inside `h` and the rest.
pub fn split(amps: &AmplitudeSet, h: &ActiveSpace) -> (AmplitudeSet, AmplitudeSet) {
    let mut internal = AmplitudeSet::new(amps.kind, amps.reference);
    let mut external = AmplitudeSet::new(amps.kind, amps.reference);
    for (e, v) in amps.iter() {
        let target = if h.contains(e) { &mut internal } else { &mut external };
        target.amplitudes.insert(e.clone(), v);
    }
    (internal, external)
}

/// Dense matrix of the amplitude operator on `sector`.
pub fn excitation_dense(amps: &AmplitudeSet, sector: &Arc<SectorBasis>) -> Result<DMatrix<f64>> {
    dense_matrix(&amps.operator(), sector, sector)
}

pub fn excitation_matrix(amps: &AmplitudeSet, sector: &Arc<SectorBasis>) -> Result<OperatorMatrix> {
    crate::fockspace::to_matrix(&amps.operator(), sector, sector)
}

/// Dense `exp(±X)` for a T or S amplitude set.
pub fn exp_dense(amps: &AmplitudeSet, sector: &Arc<SectorBasis>, sign: f64) -> Result<DMatrix<f64>> {
    if amps.kind == AmplitudeKind::Lambda {
        return domain("Λ amplitudes parametrize the bra linearly and have no exponential map");
    }
    exp_nilpotent(&(excitation_dense(amps, sector)? * sign))
}

/// `exp(X)` as an exact operator matrix.
pub fn exp_map(amps: &AmplitudeSet, sector: &Arc<SectorBasis>) -> Result<OperatorMatrix> {
    OperatorMatrix::from_dense(&exp_dense(amps, sector, 1.0)?, sector.clone(), sector.clone())
}

/// `e^{-X} H e^{X}` on `h`'s sector.
pub fn similarity_dense(h: &DMatrix<f64>, amps: &AmplitudeSet, sector: &Arc<SectorBasis>) -> Result<DMatrix<f64>> {
    Ok(exp_dense(amps, sector, -1.0)? * h * exp_dense(amps, sector, 1.0)?)
}

pub fn similarity_transform(h: &OperatorMatrix, amps: &AmplitudeSet) -> Result<OperatorMatrix> {
    if *h.domain != *h.codomain {
        return domain("similarity transform needs a square operator on one sector");
    }
    let sector = h.domain.clone();
    let m = similarity_dense(&h.to_dense(), amps, &sector)?;
    OperatorMatrix::from_dense(&m, sector.clone(), sector)
}

/// Smallest sector containing every determinant reachable from `reference`
/// by products of excitations drawn from `signatures`.
pub fn closure_sector<'a>(
    reference: &Determinant,
    signatures: impl IntoIterator<Item = &'a Excitation>,
) -> Result<Arc<SectorBasis>> {
    let mut holes = BTreeSet::new();
    let mut particles = BTreeSet::new();
    for e in signatures {
        holes.extend(e.holes.iter().copied());
        particles.extend(e.particles.iter().copied());
    }
    let holes: Vec<usize> = holes.into_iter().collect();
    let particles: Vec<usize> = particles.into_iter().collect();
    let m = reference.n_orbitals();
    let mut dets = Vec::new();
    for hmask in 0u64..(1 << holes.len()) {
        for pmask in 0u64..(1 << particles.len()) {
            if hmask.count_ones() != pmask.count_ones() {
                continue;
            }
            let mut bits = reference.bits();
            for (k, &i) in holes.iter().enumerate() {
                if hmask & (1 << k) != 0 {
                    bits &= !(1 << i);
                }
            }
            for (k, &a) in particles.iter().enumerate() {
                if pmask & (1 << k) != 0 {
                    bits |= 1 << a;
                }
            }
            dets.push(Determinant::from_bits(m, bits));
        }
    }
    Ok(Arc::new(SectorBasis::from_determinants(m, dets)?))
}

/// Reads amplitudes off a vector indexed by `sector`: the coefficient on
/// `E_μ|Φ⟩` (ket) or `⟨Φ|E_μ†` (bra) for every non-reference determinant.
pub(crate) fn amplitudes_from_components(
    kind: AmplitudeKind,
    reference: &Determinant,
    sector: &SectorBasis,
    components: &DVector<f64>,
    keep_zeros: bool,
) -> AmplitudeSet {
    let mut set = AmplitudeSet::new(kind, *reference);
    for (i, det) in sector.determinants().iter().enumerate() {
        let Some(exc) = Excitation::between(reference, det) else { continue };
        let (_, sign) = exc.apply_to(reference).expect("excitation of the reference");
        let v = components[i] * sign;
        if keep_zeros || v != 0.0 {
            set.amplitudes.insert(exc, v);
        }
    }
    set
}

/// `⟨Φ|(1+Λ) = ⟨Φ|e^{S}` solved for `Λ`.
pub fn lambda_from_s(s: &AmplitudeSet) -> Result<AmplitudeSet> {
    if s.kind != AmplitudeKind::S {
        return domain("expected S amplitudes");
    }
    let sector = closure_sector(&s.reference, s.signatures())?;
    let r = sector.position(&s.reference).expect("reference in closure");
    let e = exp_dense(s, &sector, 1.0)?;
    let row = e.row(r).transpose();
    Ok(amplitudes_from_components(AmplitudeKind::Lambda, &s.reference, &sector, &row, false))
}

/// Inverse of [`lambda_from_s`]: `S = ln(1+Λ)` within the de-excitation algebra.
pub fn s_from_lambda(l: &AmplitudeSet) -> Result<AmplitudeSet> {
    if l.kind != AmplitudeKind::Lambda {
        return domain("expected Λ amplitudes");
    }
    let sector = closure_sector(&l.reference, l.signatures())?;
    let r = sector.position(&l.reference).expect("reference in closure");
    let log = log_unipotent(&excitation_dense(l, &sector)?)?;
    let row = log.row(r).transpose();
    Ok(amplitudes_from_components(AmplitudeKind::S, &l.reference, &sector, &row, false))
}

/// `T = ln(C)` for an intermediately normalized ket `C|Φ⟩` given on `sector`.
pub fn t_from_ket(reference: &Determinant, sector: &Arc<SectorBasis>, ket: &DVector<f64>) -> Result<AmplitudeSet> {
    let c = amplitudes_from_components(AmplitudeKind::T, reference, sector, ket, false);
    let closure = closure_sector(reference, c.signatures())?;
    let mut c_full = AmplitudeSet::new(AmplitudeKind::T, *reference);
    for (e, v) in c.iter() {
        c_full.amplitudes.insert(e.clone(), v);
    }
    let log = log_unipotent(&excitation_dense(&c_full, &closure)?)?;
    let r = closure.position(reference).expect("reference in closure");
    let col = log.column(r).into_owned();
    Ok(amplitudes_from_components(AmplitudeKind::T, reference, &closure, &col, false))
}

/// Same as [`t_from_ket`] for a bra `⟨Φ|C` (de-excitation kind `kind`).
pub fn s_from_bra(reference: &Determinant, sector: &Arc<SectorBasis>, bra: &DVector<f64>) -> Result<AmplitudeSet> {
    let l = amplitudes_from_components(AmplitudeKind::Lambda, reference, sector, bra, false);
    s_from_lambda(&l)
}

/// Excitation signatures and their positions in a working sector.
#[derive(Debug, Clone)]
pub struct CcSpace {
    pub sector: Arc<SectorBasis>,
    pub reference: Determinant,
    pub reference_index: usize,
    pub excitations: Vec<Excitation>,
    positions: Vec<usize>,
    signs: Vec<f64>,
}

impl CcSpace {
    /// All excitations of `reference` inside `sector`, up to `rank_max` if given.
    pub fn new(sector: Arc<SectorBasis>, reference: Determinant, rank_max: Option<usize>) -> Result<Self> {
        let excitations: Vec<Excitation> = sector
            .determinants()
            .iter()
            .filter_map(|d| Excitation::between(&reference, d))
            .filter(|e| rank_max.is_none_or(|k| e.rank() <= k))
            .collect();
        Self::with_excitations(sector, reference, excitations)
    }

    pub fn with_excitations(sector: Arc<SectorBasis>, reference: Determinant, mut excitations: Vec<Excitation>) -> Result<Self> {
        let Some(reference_index) = sector.position(&reference) else {
            return domain(format!("reference {reference:?} is not in the sector"));
        };
        excitations.sort();
        excitations.dedup();
        let mut positions = Vec::with_capacity(excitations.len());
        let mut signs = Vec::with_capacity(excitations.len());
        for e in &excitations {
            let Some((det, sign)) = e.apply_to(&reference) else {
                return domain(format!("excitation {e} does not act on the reference"));
            };
            let Some(pos) = sector.position(&det) else {
                return domain(format!("excitation {e} leaves the sector"));
            };
            positions.push(pos);
            signs.push(sign);
        }
        Ok(Self { sector, reference, reference_index, excitations, positions, signs })
    }

    pub fn len(&self) -> usize {
        self.excitations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excitations.is_empty()
    }

    pub fn max_rank(&self) -> usize {
        self.excitations.iter().map(Excitation::rank).max().unwrap_or(0)
    }

    pub fn position(&self, k: usize) -> usize {
        self.positions[k]
    }

    pub fn sign(&self, k: usize) -> f64 {
        self.signs[k]
    }

    pub fn index_of(&self, e: &Excitation) -> Option<usize> {
        self.excitations.binary_search(e).ok()
    }

    pub fn vector(&self, amps: &AmplitudeSet) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.excitations.iter().map(|e| amps.get(e)))
    }

    pub fn amplitudes(&self, kind: AmplitudeKind, values: &DVector<f64>) -> AmplitudeSet {
        let mut set = AmplitudeSet::new(kind, self.reference);
        for (e, &v) in self.excitations.iter().zip(values.iter()) {
            set.amplitudes.insert(e.clone(), v);
        }
        set
    }

    /// Amplitude-space projection of a sector vector: `sign_μ · v[μ]`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), (0..self.len()).map(|k| self.signs[k] * v[self.positions[k]]))
    }

    pub fn reference_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.sector.len());
        v[self.reference_index] = 1.0;
        v
    }

    /// Determinants of the reference plus every internal excitation of `h`.
    pub fn internal_basis(&self, h: &ActiveSpace) -> Vec<usize> {
        let mut basis = vec![self.reference_index];
        for (i, d) in self.sector.determinants().iter().enumerate() {
            if i != self.reference_index && h.is_internal(&self.reference, d) {
                basis.push(i);
            }
        }
        basis
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::SpinOrbital;
    use approx::assert_relative_eq;

    fn reference() -> Determinant {
        Determinant::parse("100110").unwrap()
    }

    fn sample_t() -> AmplitudeSet {
        AmplitudeSet::from_entries(
            AmplitudeKind::T,
            reference(),
            [
                (Excitation::single(0, 1), -0.628627),
                (Excitation::single(0, 2), 0.244428),
                (Excitation::single(3, 5), -0.244428),
                (Excitation::single(4, 5), -0.628627),
                (Excitation::double(0, 3, 1, 5), 0.013884),
                (Excitation::double(0, 4, 1, 5), 0.093685),
                (Excitation::double(0, 3, 2, 5), -0.003991),
                (Excitation::double(0, 4, 2, 5), -0.013884),
            ],
        )
        .unwrap()
    }

    fn sector() -> Arc<SectorBasis> {
        Arc::new(SectorBasis::of_reference(&SpinOrbital::block_layout(6), &reference()).unwrap())
    }

    #[test]
    fn excitation_validation() {
        assert!(Excitation::new(vec![], vec![]).is_err());
        assert!(Excitation::new(vec![0, 0], vec![1, 2]).is_err());
        assert!(Excitation::new(vec![0], vec![0]).is_err());
        let e = Excitation::new(vec![3, 0], vec![5, 1]).unwrap();
        assert_eq!(e.holes, vec![0, 3]);
        assert_eq!(e.to_string(), "0,3->1,5");
    }

    #[test]
    fn split_partitions() {
        let t = sample_t();
        let h = ActiveSpace::new(&reference(), &[0], &[1]).unwrap();
        let (int, ext) = split(&t, &h);
        assert_eq!(int.len(), 1);
        assert_eq!(ext.len(), 7);
        assert_eq!(int.get(&Excitation::single(0, 1)), -0.628627);
        let (int, ext) = split(&t, &ActiveSpace::empty());
        assert!(int.is_empty() && ext.len() == 8);
        let (int, ext) = split(&t, &ActiveSpace::full(&reference()));
        assert!(ext.is_empty() && int.len() == 8);
    }

    #[test]
    fn active_space_validation() {
        assert!(ActiveSpace::new(&reference(), &[1], &[2]).is_err());
        assert!(ActiveSpace::new(&reference(), &[0], &[3]).is_err());
    }

    #[test]
    fn t_matrix_nilpotent_and_exp_inverse() {
        let s = sector();
        let t = sample_t();
        let tm = excitation_dense(&t, &s).unwrap();
        let t3 = &tm * &tm * &tm;
        assert!(t3.iter().all(|&x| x == 0.0));
        assert!((&tm * &tm).iter().any(|&x| x != 0.0));
        let e = exp_dense(&t, &s, 1.0).unwrap() * exp_dense(&t, &s, -1.0).unwrap();
        assert_relative_eq!(e, DMatrix::identity(9, 9), epsilon = 1e-14);
    }

    #[test]
    fn internal_and_external_commute() {
        let s = sector();
        let t = sample_t();
        let (int, ext) = split(&t, &ActiveSpace::new(&reference(), &[0, 3], &[1, 5]).unwrap());
        let a = excitation_dense(&int, &s).unwrap();
        let b = excitation_dense(&ext, &s).unwrap();
        assert_relative_eq!(&a * &b, &b * &a, epsilon = 1e-15);
        let prod = exp_dense(&int, &s, 1.0).unwrap() * exp_dense(&ext, &s, 1.0).unwrap();
        assert_relative_eq!(prod, exp_dense(&t, &s, 1.0).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn lambda_has_no_exponential() {
        let l = sample_t().with_kind(AmplitudeKind::Lambda);
        assert!(exp_map(&l, &sector()).is_err());
    }

    #[test]
    fn zero_s_gives_zero_lambda() {
        let s = AmplitudeSet::new(AmplitudeKind::S, reference());
        assert!(lambda_from_s(&s).unwrap().is_empty());
    }

    #[test]
    fn singles_only_s_matches_hierarchy() {
        let s = AmplitudeSet::from_entries(
            AmplitudeKind::S,
            reference(),
            [(Excitation::single(0, 1), 0.3), (Excitation::single(4, 5), -0.2)],
        )
        .unwrap();
        let l = lambda_from_s(&s).unwrap();
        assert_relative_eq!(l.get(&Excitation::single(0, 1)), 0.3, epsilon = 1e-15);
        assert_relative_eq!(l.get(&Excitation::single(4, 5)), -0.2, epsilon = 1e-15);
        // Λ_2 = S_2 + ½ S_1²; the cross term of two commuting singles is s·s'
        assert_relative_eq!(l.get(&Excitation::double(0, 4, 1, 5)), 0.3 * -0.2, epsilon = 1e-15);
    }

    #[test]
    fn internal_determinant_classification() {
        let h = ActiveSpace::new(&reference(), &[0], &[1]).unwrap();
        let r = reference();
        assert!(h.is_internal(&r, &Determinant::parse("000110").unwrap()));
        assert!(h.is_internal(&r, &Determinant::parse("110110").unwrap()));
        assert!(!h.is_internal(&r, &Determinant::parse("100010").unwrap()));
    }
}
