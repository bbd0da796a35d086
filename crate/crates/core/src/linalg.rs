//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `exp(a)` for nilpotent `a`, summed exactly until the powers vanish.
pub fn exp_nilpotent(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    for k in 1..=n + 1 {
        power = &power * a / k as f64;
        if power.iter().all(|&x| x == 0.0) {
            return Ok(result);
        }
        result += &power;
    }
    domain("matrix is not nilpotent")
}

/// `ln(1 + x)` for nilpotent `x`, via the terminating Mercator series.
pub fn log_unipotent(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let mut result = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for k in 1..=n + 1 {
        power = &power * x;
        if power.iter().all(|&v| v == 0.0) {
            return Ok(result);
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        result += &power * (sign / k as f64);
    }
    domain("matrix is not nilpotent")
}

/// Eigenvalues of a general real matrix, sorted by real part.
pub fn eigenvalues_general(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    ev
}

/// Unit vector spanning the (numerical) null space of `m`.
pub fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    let mut v: DVector<f64> = v_t.row(imin).transpose();
    // fix the overall sign: largest component positive
    let (imax, _) = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Lowest-real-part eigenvalue with its right and left eigenvectors (unit norm).
pub fn lowest_eigenpair(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let ev = eigenvalues_general(a);
    let Some(&lowest) = ev.first() else {
        return domain("empty matrix");
    };
    if lowest.im.abs() > 1e-10 {
        return Err(Error::ComplexEigenvalue(lowest.im));
    }
    let n = a.nrows();
    let shift = DMatrix::identity(n, n) * lowest.re;
    let right = null_vector(&(a - &shift));
    let left = null_vector(&(a.transpose() - shift));
    Ok((lowest.re, right, left))
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Dense complex solve `a x = b`, rejecting singular or inaccurate solutions.
pub fn solve_complex(a: &DMatrix<Complex64>, b: &DVector<Complex64>, omega: f64) -> Result<DVector<Complex64>> {
    let x = a.clone().lu().solve(b).ok_or(Error::Singular(omega))?;
    let res = (a * &x - b).norm();
    if !res.is_finite() || res > 1e-10 * b.norm().max(1.0) {
        return Err(Error::Singular(omega));
    }
    Ok(x)
}

/// A simple pole `residue / (z - position)` of a resolvent expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub position: f64,
    pub residue: f64,
}

/// Poles of `f(z) = l · (z - a)^{-1} · r` for a real matrix `a` with real
/// spectrum. Eigenvalues closer than `merge_tol` are treated as one pole;
/// residues come from a symmetric finite difference along the imaginary axis.
pub fn resolvent_poles(
    a: &DMatrix<f64>,
    l: &DVector<Complex64>,
    r: &DVector<Complex64>,
    merge_tol: f64,
) -> Result<Vec<Pole>> {
    let n = a.nrows();
    let ev = eigenvalues_general(a);
    if let Some(bad) = ev.iter().find(|e| e.im.abs() > 1e-8) {
        return Err(Error::ComplexEigenvalue(bad.im));
    }
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for e in ev.iter().map(|e| e.re) {
        match groups.last_mut() {
            Some(g) if (e - g[g.len() - 1]).abs() < merge_tol => g.push(e),
            _ => groups.push(vec![e]),
        }
    }
    let ac = to_complex(a);
    let eval = |z: Complex64| -> Result<Complex64> {
        let m = DMatrix::<Complex64>::identity(n, n) * z - &ac;
        let x = m.lu().solve(r).ok_or(Error::Singular(z.re))?;
        Ok(l.dot(&x))
    };
    let delta = 1e-6;
    let mut poles = Vec::with_capacity(groups.len());
    for g in groups {
        let p = g.iter().sum::<f64>() / g.len() as f64;
        let up = eval(Complex64::new(p, delta))?;
        let down = eval(Complex64::new(p, -delta))?;
        // f(p + iδ) - f(p - iδ) = -2i R / δ + O(δ)
        let residue = (up - down) * Complex64::new(0.0, delta / 2.0);
        poles.push(Pole { position: p, residue: residue.re });
    }
    Ok(poles)
}

/// Trapezoidal integral of samples `y` on abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
