//! Occupation-number bases and second-quantized operators.
//!
//! Spin-orbitals are numbered `0..M`. A [`Determinant`] is an occupation
//! bitstring written with orbital 0 first, so the conventional label
//! `|100110⟩` has orbitals 0, 3 and 4 occupied. Fermionic signs follow the
//! ordering `a†_0 a†_1 … |vac⟩`: acting with `a_p` or `a†_p` picks up
//! `(-1)^k` where `k` counts occupied orbitals with index below `p`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub const MAX_ORBITALS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

/// Model metadata attached to a spin-orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locality {
    Impurity,
    /// Bath level, 1-based as in the model definition.
    Bath(usize),
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinOrbital {
    pub index: usize,
    pub spin: Spin,
    pub locality: Locality,
}

impl SpinOrbital {
    /// Default layout: the first `m/2` orbitals are spin-up, the rest spin-down.
    pub fn block_layout(m: usize) -> Vec<Spin> {
        (0..m)
            .map(|p| if p < m / 2 { Spin::Up } else { Spin::Down })
            .collect()
    }
}

/// Occupation bitstring over `n_orbitals` spin-orbitals.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Determinant {
    bits: u64,
    n_orbitals: u8,
}

impl Determinant {
    pub fn new(n_orbitals: usize, occupied: &[usize]) -> Result<Self> {
        if n_orbitals > MAX_ORBITALS {
            return domain(format!("at most {MAX_ORBITALS} spin-orbitals are supported"));
        }
        let mut bits = 0u64;
        for &p in occupied {
            if p >= n_orbitals {
                return domain(format!("orbital {p} out of range 0..{n_orbitals}"));
            }
            if bits & (1 << p) != 0 {
                return domain(format!("orbital {p} listed twice"));
            }
            bits |= 1 << p;
        }
        Ok(Self { bits, n_orbitals: n_orbitals as u8 })
    }

    pub(crate) fn from_bits(n_orbitals: usize, bits: u64) -> Self {
        debug_assert!(n_orbitals <= MAX_ORBITALS);
        Self { bits, n_orbitals: n_orbitals as u8 }
    }

    /// Parses a bitstring such as `"100110"` (orbital 0 first).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('|').trim_end_matches('⟩').trim_end_matches('>');
        if s.is_empty() || s.len() > MAX_ORBITALS {
            return domain(format!("invalid occupation string '{s}'"));
        }
        let mut bits = 0u64;
        for (p, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << p,
                '0' => {}
                _ => return domain(format!("invalid occupation character '{c}' in '{s}'")),
            }
        }
        Ok(Self { bits, n_orbitals: s.len() as u8 })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals as usize
    }

    pub fn n_electrons(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_occupied(&self, p: usize) -> bool {
        p < self.n_orbitals() && self.bits & (1 << p) != 0
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..self.n_orbitals()).filter(|&p| self.is_occupied(p)).collect()
    }

    pub fn unoccupied(&self) -> Vec<usize> {
        (0..self.n_orbitals()).filter(|&p| !self.is_occupied(p)).collect()
    }

    pub fn count_spin(&self, layout: &[Spin], spin: Spin) -> usize {
        self.occupied().into_iter().filter(|&p| layout[p] == spin).count()
    }

    fn parity_below(&self, p: usize) -> f64 {
        let mask = (1u64 << p) - 1;
        if (self.bits & mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Applies a single ladder operator; `None` when the result vanishes.
    pub fn apply_ladder(&self, op: LadderOp) -> Option<(Determinant, f64)> {
        let p = op.orbital;
        if p >= self.n_orbitals() {
            return None;
        }
        let occupied = self.is_occupied(p);
        if occupied == op.dagger {
            return None;
        }
        let sign = self.parity_below(p);
        Some((Determinant { bits: self.bits ^ (1 << p), n_orbitals: self.n_orbitals }, sign))
    }

    /// Applies an operator string right to left (the last operator acts first).
    pub fn apply_string(&self, ops: &[LadderOp]) -> Option<(Determinant, f64)> {
        let mut det = *self;
        let mut sign = 1.0;
        for &op in ops.iter().rev() {
            let (next, s) = det.apply_ladder(op)?;
            det = next;
            sign *= s;
        }
        Some((det, sign))
    }
}

impl Ord for Determinant {
    fn cmp(&self, other: &Self) -> Ordering {
        // lexicographic on the printed bitstring: orbital 0 is the leading character
        self.n_orbitals
            .cmp(&other.n_orbitals)
            .then_with(|| self.bits.reverse_bits().cmp(&other.bits.reverse_bits()))
    }
}

impl PartialOrd for Determinant {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Determinant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in 0..self.n_orbitals() {
            f.write_str(if self.is_occupied(p) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Determinant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{self}⟩")
    }
}

impl Serialize for Determinant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Determinant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Determinant::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Ordered determinant basis of a fixed-particle-number sector (optionally
/// further restricted, e.g. by spin projection).
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n_orbitals: usize,
    n_electrons: usize,
    determinants: Vec<Determinant>,
    index: HashMap<Determinant, usize>,
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_orbitals == other.n_orbitals && self.determinants == other.determinants
    }
}

fn combinations(m: usize, n: usize) -> Vec<u64> {
    if n == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    // Gosper's hack over all m-bit words with n set bits
    let limit = 1u128 << m;
    let mut v: u64 = (1u64 << n) - 1;
    while (v as u128) < limit {
        out.push(v);
        let c = v & v.wrapping_neg();
        let r = v + c;
        if r == 0 {
            break;
        }
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

impl SectorBasis {
    /// All `C(m, n)` determinants with `n` electrons, in canonical order.
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m > MAX_ORBITALS || m > 30 {
            return domain(format!("{m} orbitals is beyond dense-sector scale"));
        }
        if n > m {
            return domain(format!("electron count {n} exceeds orbital count {m}"));
        }
        let dets = combinations(m, n).into_iter().map(|b| Determinant::from_bits(m, b));
        Ok(Self::build(m, n, dets.collect()))
    }

    /// Determinants with fixed numbers of up- and down-spin electrons.
    pub fn spin_resolved(layout: &[Spin], n_up: usize, n_down: usize) -> Result<Self> {
        let m = layout.len();
        let full = Self::new(m, n_up + n_down)?;
        let dets = full
            .determinants
            .into_iter()
            .filter(|d| d.count_spin(layout, Spin::Up) == n_up)
            .collect();
        Ok(Self::build(m, n_up + n_down, dets))
    }

    /// The spin-resolved sector containing `reference`.
    pub fn of_reference(layout: &[Spin], reference: &Determinant) -> Result<Self> {
        if layout.len() != reference.n_orbitals() {
            return domain("spin layout length does not match the reference");
        }
        Self::spin_resolved(
            layout,
            reference.count_spin(layout, Spin::Up),
            reference.count_spin(layout, Spin::Down),
        )
    }

    pub fn from_determinants(m: usize, dets: impl IntoIterator<Item = Determinant>) -> Result<Self> {
        let mut list: Vec<Determinant> = dets.into_iter().collect();
        list.sort();
        list.dedup();
        let n = list.first().map(|d| d.n_electrons()).unwrap_or(0);
        if list.iter().any(|d| d.n_orbitals() != m || d.n_electrons() != n) {
            return domain("determinants must share orbital and electron counts");
        }
        Ok(Self::build(m, n, list))
    }

    /// Smallest set of determinants containing `seeds` and closed under every
    /// term of `ops`. Connectivity is structural: a term links two
    /// determinants even when its coefficient is zero, so switching a coupling
    /// off does not shrink the basis.
    pub fn reachable(ops: &[&SecondQuantizedOp], seeds: impl IntoIterator<Item = Determinant>) -> Result<Self> {
        let mut seen: BTreeSet<Determinant> = BTreeSet::new();
        let mut queue: Vec<Determinant> = Vec::new();
        for d in seeds {
            if seen.insert(d) {
                queue.push(d);
            }
        }
        let Some(first) = seen.iter().next().copied() else {
            return domain("reachable sector needs at least one seed");
        };
        if ops.iter().any(|op| op.particle_change() != Some(0)) {
            return domain("closure operators must conserve particle number");
        }
        while let Some(d) = queue.pop() {
            for op in ops {
                for term in &op.terms {
                    if let Some((next, _)) = d.apply_string(&term.ops) {
                        if seen.insert(next) {
                            queue.push(next);
                        }
                    }
                }
            }
        }
        Self::from_determinants(first.n_orbitals(), seen)
    }

    fn build(m: usize, n: usize, mut determinants: Vec<Determinant>) -> Self {
        determinants.sort();
        let index = determinants.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        Self { n_orbitals: m, n_electrons: n, determinants, index }
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    pub fn len(&self) -> usize {
        self.determinants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.determinants.is_empty()
    }

    pub fn determinants(&self) -> &[Determinant] {
        &self.determinants
    }

    pub fn position(&self, det: &Determinant) -> Option<usize> {
        self.index.get(det).copied()
    }

    pub fn contains(&self, det: &Determinant) -> bool {
        self.index.contains_key(det)
    }
}

#[derive(Debug, Clone)]
pub struct StateVector {
    pub sector: Arc<SectorBasis>,
    pub coefficients: DVector<Complex64>,
}

impl StateVector {
    pub fn zeros(sector: Arc<SectorBasis>) -> Self {
        let n = sector.len();
        Self { sector, coefficients: DVector::zeros(n) }
    }

    pub fn basis(sector: Arc<SectorBasis>, det: &Determinant) -> Result<Self> {
        let Some(i) = sector.position(det) else {
            return domain(format!("{det:?} is not in the sector"));
        };
        let mut v = Self::zeros(sector);
        v.coefficients[i] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_real(sector: Arc<SectorBasis>, values: &DVector<f64>) -> Result<Self> {
        if values.len() != sector.len() {
            return domain("vector length does not match the sector");
        }
        Ok(Self { sector, coefficients: values.map(|x| Complex64::new(x, 0.0)) })
    }

    pub fn coefficient(&self, det: &Determinant) -> Complex64 {
        self.sector
            .position(det)
            .map(|i| self.coefficients[i])
            .unwrap_or_default()
    }

    pub fn real_part(&self) -> DVector<f64> {
        self.coefficients.map(|c| c.re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LadderOp {
    pub orbital: usize,
    pub dagger: bool,
}

impl LadderOp {
    pub fn create(orbital: usize) -> Self {
        Self { orbital, dagger: true }
    }

    pub fn annihilate(orbital: usize) -> Self {
        Self { orbital, dagger: false }
    }

    pub fn adjoint(self) -> Self {
        Self { orbital: self.orbital, dagger: !self.dagger }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub ops: Vec<LadderOp>,
}

impl Term {
    pub fn particle_change(&self) -> i64 {
        self.ops.iter().map(|o| if o.dagger { 1 } else { -1 }).sum()
    }
}

/// Linear combination of ladder-operator strings with real coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SecondQuantizedOp {
    pub terms: Vec<Term>,
}

impl SecondQuantizedOp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self { terms: vec![Term { coeff: 1.0, ops: Vec::new() }] }
    }

    pub fn from_term(coeff: f64, ops: Vec<LadderOp>) -> Self {
        Self { terms: vec![Term { coeff, ops }] }
    }

    pub fn creation(p: usize) -> Self {
        Self::from_term(1.0, vec![LadderOp::create(p)])
    }

    pub fn annihilation(p: usize) -> Self {
        Self::from_term(1.0, vec![LadderOp::annihilate(p)])
    }

    /// `a†_p a_p`
    pub fn number(p: usize) -> Self {
        Self::from_term(1.0, vec![LadderOp::create(p), LadderOp::annihilate(p)])
    }

    /// Total number operator over `m` orbitals.
    pub fn number_operator(m: usize) -> Self {
        (0..m).fold(Self::new(), |acc, p| acc + Self::number(p))
    }

    pub fn push(&mut self, coeff: f64, ops: Vec<LadderOp>) {
        self.terms.push(Term { coeff, ops });
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coeff: t.coeff * factor, ops: t.ops.clone() })
                .collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff,
                    ops: t.ops.iter().rev().map(|o| o.adjoint()).collect(),
                })
                .collect(),
        }
    }

    /// Operator product `self · other` (other acts first).
    pub fn product(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut ops = a.ops.clone();
                ops.extend_from_slice(&b.ops);
                out.push(a.coeff * b.coeff, ops);
            }
        }
        out
    }

    /// Common particle-number change of all terms; `None` if terms disagree.
    pub fn particle_change(&self) -> Option<i64> {
        let mut it = self.terms.iter().map(Term::particle_change);
        let first = it.next().unwrap_or(0);
        it.all(|d| d == first).then_some(first)
    }

    /// Orbitals touched by any term.
    pub fn support(&self) -> BTreeSet<usize> {
        self.terms
            .iter()
            .flat_map(|t| t.ops.iter().map(|o| o.orbital))
            .collect()
    }

    /// Relabels every orbital `p` as `p + offset`.
    pub fn shifted(&self, offset: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff,
                    ops: t
                        .ops
                        .iter()
                        .map(|o| LadderOp { orbital: o.orbital + offset, dagger: o.dagger })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Applies the operator to `v`, keeping only components inside `target`.
    pub fn apply(&self, v: &StateVector, target: Arc<SectorBasis>) -> StateVector {
        let mut out = StateVector::zeros(target);
        for (j, det) in v.sector.determinants().iter().enumerate() {
            let c = v.coefficients[j];
            if c == Complex64::default() {
                continue;
            }
            for term in &self.terms {
                if let Some((d, s)) = det.apply_string(&term.ops) {
                    if let Some(i) = out.sector.position(&d) {
                        out.coefficients[i] += c * (term.coeff * s);
                    }
                }
            }
        }
        out
    }
}

impl std::ops::Add for SecondQuantizedOp {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.terms.extend(rhs.terms);
        self
    }
}

impl std::ops::Sub for SecondQuantizedOp {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scaled(-1.0)
    }
}

/// Sparse real matrix between two sectors. Entries are kept exactly as
/// accumulated; only entries that sum to exactly zero are omitted.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub domain: Arc<SectorBasis>,
    pub codomain: Arc<SectorBasis>,
    /// `(row, col) -> value`, iterated in column-major order.
    entries: BTreeMap<(usize, usize), f64>,
}

impl OperatorMatrix {
    pub fn identity(sector: Arc<SectorBasis>) -> Self {
        let entries = (0..sector.len()).map(|i| ((i, i), 1.0)).collect();
        Self { domain: sector.clone(), codomain: sector, entries }
    }

    pub fn from_dense(m: &DMatrix<f64>, domain: Arc<SectorBasis>, codomain: Arc<SectorBasis>) -> Result<Self> {
        if m.nrows() != codomain.len() || m.ncols() != domain.len() {
            return crate::error::domain("matrix shape does not match the sectors");
        }
        let mut entries = BTreeMap::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    entries.insert((i, j), m[(i, j)]);
                }
            }
        }
        Ok(Self { domain, codomain, entries })
    }

    pub fn nrows(&self) -> usize {
        self.codomain.len()
    }

    pub fn ncols(&self) -> usize {
        self.domain.len()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries.get(&(row, col)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if *v.sector != *self.domain {
            return crate::error::domain("state vector is not in the operator's domain");
        }
        let mut out = StateVector::zeros(self.codomain.clone());
        for (&(i, j), &x) in &self.entries {
            out.coefficients[i] += v.coefficients[j] * x;
        }
        Ok(out)
    }
}

/// Exact matrix of `op` from sector `from` to sector `to`: column `j` holds
/// `op` applied to the `j`-th basis determinant of `from`.
pub fn to_matrix(op: &SecondQuantizedOp, from: &Arc<SectorBasis>, to: &Arc<SectorBasis>) -> Result<OperatorMatrix> {
    if from.n_orbitals() != to.n_orbitals() {
        return domain("sectors have different orbital counts");
    }
    let expected = to.n_electrons() as i64 - from.n_electrons() as i64;
    if let Some(bad) = op.terms.iter().find(|t| t.particle_change() != expected) {
        return domain(format!(
            "term changes particle number by {} but sectors differ by {expected}",
            bad.particle_change()
        ));
    }
    if let Some(&p) = op.support().iter().next_back() {
        if p >= from.n_orbitals() {
            return domain(format!("operator acts on orbital {p} outside the sector"));
        }
    }
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (j, det) in from.determinants().iter().enumerate() {
        for term in &op.terms {
            if let Some((d, s)) = det.apply_string(&term.ops) {
                if let Some(i) = to.position(&d) {
                    *entries.entry((i, j)).or_insert(0.0) += term.coeff * s;
                }
            }
        }
    }
    entries.retain(|_, v| *v != 0.0);
    Ok(OperatorMatrix { domain: from.clone(), codomain: to.clone(), entries })
}

/// Dense shortcut for [`to_matrix`].
pub fn dense_matrix(op: &SecondQuantizedOp, from: &Arc<SectorBasis>, to: &Arc<SectorBasis>) -> Result<DMatrix<f64>> {
    to_matrix(op, from, to).map(|m| m.to_dense())
}

/// Diagonal 0/1 projector onto the span of `subset`.
pub fn projector(subset: &[Determinant], sector: &Arc<SectorBasis>) -> Result<OperatorMatrix> {
    let mut entries = BTreeMap::new();
    for det in subset {
        let Some(i) = sector.position(det) else {
            return domain(format!("{det:?} is not in the sector"));
        };
        entries.insert((i, i), 1.0);
    }
    Ok(OperatorMatrix { domain: sector.clone(), codomain: sector.clone(), entries })
}
