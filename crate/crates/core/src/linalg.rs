//! Dense complex matrices, Hermitian eigendecomposition and Haar sampling.
//!
//! Everything here targets the desk-scale regime of the crate (a few dozen
//! rows at most). Matrices are stored row-major in a flat `Vec`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Determinant by LU factorization with partial pivoting.
    pub fn det(&self) -> Complex64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = ONE;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r1, &r2| {
                    a[r1 * n + col]
                        .norm()
                        .partial_cmp(&a[r2 * n + col].norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if a[pivot * n + col] == ZERO {
                return ZERO;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f == ZERO {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
        det
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor
    /// series. The argument is scaled to 1-norm at most 1/2 before the
    /// series, which puts the truncation error far below `f64` resolution.
    pub fn expm(&self) -> CMatrix {
        let norm = self.one_norm();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(Complex64::new(0.5f64.powi(squarings as i32), 0.0));
        let mut result = CMatrix::identity(self.n);
        let mut term = CMatrix::identity(self.n);
        for k in 1..=24 {
            term = term.matmul(&scaled).scale(Complex64::new(1.0 / k as f64, 0.0));
            result = result.add(&term);
        }
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        result
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// An N×N Hermitian matrix. The lower triangle is always the exact complex
/// conjugate of the upper triangle and the diagonal is exactly real.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    inner: CMatrix,
}

impl HermitianMatrix {
    /// Builds a matrix from the upper triangle (`i <= j`). Diagonal imaginary
    /// parts are dropped.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(f(i, i).re, 0.0);
            for j in i + 1..n {
                let z = f(i, j);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Self { inner: m }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: CMatrix::zeros(n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        Self::from_diagonal(&vec![c; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_upper(d.len(), |i, j| if i == j { Complex64::new(d[i], 0.0) } else { ZERO })
    }

    /// Hermitian part `(M + M†)/2` of an arbitrary square matrix.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        Self::from_upper(m.dim(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
    }

    /// Accepts `m` if it is Hermitian within `tol` (max-abs), then
    /// symmetrizes it exactly.
    pub fn try_from_cmatrix(m: &CMatrix, tol: f64) -> Result<Self> {
        let err = m.max_abs_diff(&m.adjoint());
        if !(err <= tol) {
            return Err(Error::InputDomain(format!("matrix deviates from Hermitian by {err:e}")));
        }
        Ok(Self::hermitian_part(m))
    }

    /// Row-major entries; `entries[a][b]` is `entry(a, b)`.
    pub fn from_rows(rows: &[Vec<Complex64>], tol: f64) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InputDomain("rows must form a square matrix".into()));
        }
        let m = CMatrix::from_fn(n, |i, j| rows[i][j]);
        Self::try_from_cmatrix(&m, tol)
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        self.inner[(a, b)]
    }

    pub fn as_cmatrix(&self) -> &CMatrix {
        &self.inner
    }

    pub fn entries(&self) -> &[Complex64] {
        self.inner.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.inner
            .as_slice()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.inner[(i, j)] == ZERO))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    /// `Tr(self · other)`, which is real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        let n = self.dim();
        assert_eq!(n, other.dim());
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let z = self.inner[(i, j)] * other.inner[(j, i)];
                acc += z.re;
            }
        }
        acc
    }

    pub fn scale(&self, c: f64) -> HermitianMatrix {
        Self::from_upper(self.dim(), |i, j| self.inner[(i, j)] * c)
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim(), other.dim());
        Self::from_upper(self.dim(), |i, j| self.inner[(i, j)] + other.inner[(i, j)])
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        self.add(&other.scale(-1.0))
    }

    /// `self + c·I`.
    pub fn shift_identity(&self, c: f64) -> HermitianMatrix {
        Self::from_upper(self.dim(), |i, j| {
            if i == j {
                self.inner[(i, i)] + c
            } else {
                self.inner[(i, j)]
            }
        })
    }

    /// `U · self · U†`, symmetrized from the computed upper triangle.
    pub fn conjugate_by(&self, u: &UnitaryMatrix) -> HermitianMatrix {
        let m = u.as_cmatrix().matmul(&self.inner).matmul(&u.as_cmatrix().adjoint());
        Self::from_upper(self.dim(), |i, j| m[(i, j)])
    }

    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }
}

/// A unitary matrix (`U U† = I` to rounding).
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    inner: CMatrix,
}

impl UnitaryMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            inner: CMatrix::identity(n),
        }
    }

    /// Wraps `m` after checking unitarity to `1e-12` max-abs.
    pub fn try_new(m: CMatrix) -> Result<Self> {
        let u = Self { inner: m };
        let err = u.unitarity_error();
        if err > 1e-12 {
            return Err(Error::InputDomain(format!(
                "matrix is not unitary (max |UU^dag - I| = {err:e})"
            )));
        }
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        self.inner[(a, b)]
    }

    pub fn as_cmatrix(&self) -> &CMatrix {
        &self.inner
    }

    pub fn matmul(&self, other: &UnitaryMatrix) -> UnitaryMatrix {
        UnitaryMatrix {
            inner: self.inner.matmul(&other.inner),
        }
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix {
            inner: self.inner.adjoint(),
        }
    }

    pub fn unitarity_error(&self) -> f64 {
        self.inner
            .matmul(&self.inner.adjoint())
            .max_abs_diff(&CMatrix::identity(self.dim()))
    }
}

/// Eigenvalues in ascending order together with the matching eigenvectors
/// (as columns of `vectors`).
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub vectors: UnitaryMatrix,
}

impl EigenSystem {
    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        HermitianMatrix::from_diagonal(&self.eigenvalues).conjugate_by(&self.vectors)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

fn jacobi(h: &HermitianMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<CMatrix>)> {
    if !h.is_finite() {
        return Err(Error::InputDomain("matrix has non-finite entries".into()));
    }
    let n = h.dim();
    let mut a = h.as_cmatrix().clone();
    let mut v = want_vectors.then(|| CMatrix::identity(n));
    let tol = 1e-13 * h.frobenius_norm();

    let max_off = |a: &CMatrix| {
        let mut m: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                m = m.max(a[(p, q)].norm());
            }
        }
        m
    };

    let mut sweeps = 0;
    while max_off(&a) >= tol && tol > 0.0 {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Conditioning(format!(
                "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary acting on (p, q): phase-rotate then a real Givens rotation.
                let vpp = phase * c;
                let vpq = phase * s;
                let vqp = Complex64::new(-s, 0.0);
                let vqq = Complex64::new(c, 0.0);

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * vpp + vkq * vqp;
                        v[(k, q)] = vkp * vpq + vkq * vqq;
                    }
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.map(|v| CMatrix::from_fn(n, |r, c| v[(r, order[c])]));
    Ok((eigenvalues, vectors))
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Sweeps continue until the largest off-diagonal modulus drops
/// below `1e-13 · ‖H‖_F`. Ties among eigenvalues come back in a stable but
/// otherwise arbitrary order.
pub fn hermitian_eigh(h: &HermitianMatrix) -> Result<EigenSystem> {
    let (eigenvalues, vectors) = jacobi(h, true)?;
    Ok(EigenSystem {
        eigenvalues,
        vectors: UnitaryMatrix {
            inner: vectors.expect("vectors requested"),
        },
    })
}

/// Ascending eigenvalues only; same iteration as [`hermitian_eigh`].
pub fn hermitian_eigvals(h: &HermitianMatrix) -> Result<Vec<f64>> {
    jacobi(h, false).map(|(e, _)| e)
}

/// Standard complex Gaussian: real and imaginary parts iid `N(0, 1/2)`.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Householder QR of a square complex matrix. Returns `Q` and the diagonal
/// of `R`; the diagonal carries whatever phases the reflections produce.
pub fn householder_qr(m: &CMatrix) -> (CMatrix, Vec<Complex64>) {
    let n = m.dim();
    let mut r = m.clone();
    let mut q = CMatrix::identity(n);
    for k in 0..n {
        let norm_x = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * norm_x;
        let mut v: Vec<Complex64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // R <- (I - 2 v v†) R on rows k..n
        for j in 0..n {
            let dot: Complex64 = (k..n).map(|i| v[i - k].conj() * r[(i, j)]).sum();
            for i in k..n {
                r[(i, j)] -= 2.0 * v[i - k] * dot;
            }
        }
        // Q <- Q (I - 2 v v†) on columns k..n
        for i in 0..n {
            let dot: Complex64 = (k..n).map(|j| q[(i, j)] * v[j - k]).sum();
            for j in k..n {
                q[(i, j)] -= 2.0 * dot * v[j - k].conj();
            }
        }
    }
    let diag = (0..n).map(|i| r[(i, i)]).collect();
    (q, diag)
}

/// Haar-distributed unitary matrix.
///
/// A Ginibre matrix (iid standard complex Gaussians) is QR-factorized and
/// each column of `Q` is multiplied by the phase of the matching diagonal
/// entry of `R`. The phase correction is what makes the result Haar: without
/// it the column phases inherit the arbitrary convention of the QR routine.
pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryMatrix {
    assert!(n >= 1, "dimension must be positive");
    let g = CMatrix::from_fn(n, |_, _| standard_complex_normal(rng));
    let (q, rdiag) = householder_qr(&g);
    let phases: Vec<Complex64> = rdiag
        .iter()
        .map(|&z| if z.norm() > 0.0 { z / z.norm() } else { ONE })
        .collect();
    UnitaryMatrix {
        inner: CMatrix::from_fn(n, |i, j| q[(i, j)] * phases[j]),
    }
}

/// GUE draw with density proportional to `exp(-Tr H²/2)`: diagonal entries
/// iid `N(0,1)`, off-diagonal real and imaginary parts iid `N(0,1/2)`.
pub fn sample_gue<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianMatrix {
    assert!(n >= 1, "dimension must be positive");
    HermitianMatrix::from_upper(n, |i, j| {
        if i == j {
            Complex64::new(rng.sample(StandardNormal), 0.0)
        } else {
            standard_complex_normal(rng)
        }
    })
}

pub fn frobenius_norm(h: &HermitianMatrix) -> f64 {
    h.frobenius_norm()
}

/// Splits `H = (Tr H / N)·I + H₀` and returns `(Tr H, H₀)`.
pub fn trace_split(h: &HermitianMatrix) -> (f64, HermitianMatrix) {
    let tr = h.trace();
    (tr, h.shift_identity(-tr / h.dim() as f64))
}

/// Vandermonde product `∏_{a<b} (x_b − x_a)`; 1 for fewer than two entries.
pub fn vandermonde(x: &[f64]) -> f64 {
    let mut p = 1.0;
    for b in 0..x.len() {
        for a in 0..b {
            p *= x[b] - x[a];
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_identity() {
        let e = hermitian_eigh(&HermitianMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        assert!(e.vectors.as_cmatrix().max_abs_diff(&CMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn eigh_sorts_diagonal() {
        let e = hermitian_eigh(&HermitianMatrix::from_diagonal(&[3.0, -1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![-1.0, 3.0]);
    }

    #[test]
    fn eigh_two_by_two_closed_form() {
        // (tr ± sqrt(tr² − 4 det))/2 with tr = 0, det = −1
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(0.0, 0.0) } else { c(1.0, 0.0) });
        let e = hermitian_eigh(&h).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_complex_two_by_two() {
        // [[1, i],[−i, 1]]: tr 2, det 0 → eigenvalues 0 and 2
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 1.0) });
        let e = hermitian_eigh(&h).unwrap();
        assert!(e.eigenvalues[0].abs() < 1e-14);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!(e.reconstruct().max_abs_diff(&h) < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_finite() {
        let h = HermitianMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(hermitian_eigh(&h), Err(Error::InputDomain(_))));
    }

    #[test]
    fn eigh_zero_matrix() {
        let e = hermitian_eigh(&HermitianMatrix::zeros(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0; 3]);
    }

    #[test]
    fn reconstruction_on_random_inputs() {
        for i in 0..1000u64 {
            let mut rng = substream(11, "eigh-recon", i);
            let n = 1 + (i as usize % 8);
            let h = sample_gue(n, &mut rng).scale(1.0 + (i % 5) as f64);
            let e = hermitian_eigh(&h).unwrap();
            let rel = e.reconstruct().sub(&h).frobenius_norm() / h.frobenius_norm();
            assert!(rel <= 1e-10, "n={n} rel={rel}");
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            assert!(e.vectors.unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn degenerate_spectrum_reconstructs() {
        let mut rng = substream(3, "degenerate", 0);
        let u = sample_haar_unitary(4, &mut rng);
        let h = HermitianMatrix::from_diagonal(&[2.0, 2.0, -1.0, 2.0]).conjugate_by(&u);
        let e = hermitian_eigh(&h).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12);
        for &l in &e.eigenvalues[1..] {
            assert!((l - 2.0).abs() < 1e-12);
        }
        assert!(e.reconstruct().max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn haar_n1_is_a_phase() {
        let mut rng = substream(5, "haar1", 0);
        for _ in 0..100 {
            let u = sample_haar_unitary(1, &mut rng);
            assert!((u.entry(0, 0).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = substream(5, "haar-unitary", 0);
        for n in 1..10 {
            assert!(sample_haar_unitary(n, &mut rng).unitarity_error() < 1e-12);
        }
    }

    // |u11|² ~ Beta(1, N−1) under Haar: mean 1/N, variance (N−1)/(N²(N+1)).
    fn check_u11_mean(n: usize, seed: u64) {
        let draws = 100_000;
        let mut rng = substream(seed, "haar-u11", n as u64);
        let xs: Vec<f64> = (0..draws)
            .map(|_| sample_haar_unitary(n, &mut rng).entry(0, 0).norm_sqr())
            .collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 1.0 / n as f64).abs() <= 3.0 * se, "n={n} mean={mean} se={se}");
        let nf = n as f64;
        let beta_var = (nf - 1.0) / (nf * nf * (nf + 1.0));
        assert!((var - beta_var).abs() < 0.05 * beta_var, "var={var} vs {beta_var}");
    }

    #[test]
    fn haar_u11_moment_n2() {
        check_u11_mean(2, 1);
    }

    #[test]
    fn haar_u11_moment_n3() {
        check_u11_mean(3, 2);
    }

    #[test]
    fn gue_n1_is_standard_normal() {
        let mut rng = substream(9, "gue1", 0);
        let xs: Vec<f64> = (0..50_000).map(|_| sample_gue(1, &mut rng).trace()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }

    #[test]
    fn gue_projection_variance_and_cf() {
        let n = 100_000;
        let mut rng = substream(21, "gue-var", 0);
        let s1 = HermitianMatrix::from_diagonal(&[1.0, 0.0]);
        let s2 = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        let mut proj = Vec::with_capacity(n);
        let mut cf = Vec::with_capacity(n);
        for _ in 0..n {
            let h = sample_gue(2, &mut rng);
            proj.push(h.trace_product(&s1));
            cf.push(Complex64::from_polar(1.0, h.trace_product(&s2)));
        }
        // Var(Tr H S) = Tr S² = 1 for S = diag(1, 0); stderr of the sample
        // variance for a normal is sqrt(2/n)·σ².
        let mean = proj.iter().sum::<f64>() / n as f64;
        let var = proj.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_var = (2.0 / n as f64).sqrt();
        assert!((var - 1.0).abs() <= 3.0 * se_var, "var={var}");

        // E exp(i Tr H S) = exp(−Tr S²/2) = e^{−1} for S = diag(1, −1)
        let m: Complex64 = cf.iter().sum::<Complex64>() / n as f64;
        let v = cf.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        let se = (v / n as f64).sqrt();
        assert!((m - Complex64::new((-1.0f64).exp(), 0.0)).norm() <= 3.0 * se, "cf={m}");
    }

    #[test]
    fn trace_split_cases() {
        let (t, h0) = trace_split(&HermitianMatrix::identity(3));
        assert_eq!(t, 3.0);
        assert!(h0.frobenius_norm() < 1e-15);

        let d = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        let (t, h0) = trace_split(&d);
        assert_eq!(t, 0.0);
        assert_eq!(h0, d);
    }

    #[test]
    fn frobenius_of_complex_example() {
        let h = HermitianMatrix::from_upper(2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 1.0) });
        assert!((frobenius_norm(&h) - 2.0).abs() < 1e-15);
        assert_eq!(h.entry(1, 0), c(0.0, -1.0));
    }

    #[test]
    fn vandermonde_examples() {
        assert_eq!(vandermonde(&[0.0, 1.0]), 1.0);
        assert_eq!(vandermonde(&[1.0, 1.0, 2.0]), 0.0);
        assert_eq!(vandermonde(&[0.0, 1.0, 3.0]), 6.0);
        assert_eq!(vandermonde(&[]), 1.0);
        assert_eq!(vandermonde(&[4.0]), 1.0);
    }

    #[test]
    fn det_and_expm_small_cases() {
        let m = CMatrix::from_fn(2, |i, j| c((i + 2 * j) as f64, (i * j) as f64));
        // [[0, 2],[1, 3+i]] → det = −2
        assert!((m.det() - c(-2.0, 0.0)).norm() < 1e-14);
        let d = CMatrix::from_fn(2, |i, j| if i == j { c(0.0, (i + 1) as f64) } else { c(0.0, 0.0) });
        let e = d.expm();
        assert!((e[(0, 0)] - Complex64::from_polar(1.0, 1.0)).norm() < 1e-13);
        assert!((e[(1, 1)] - Complex64::from_polar(1.0, 2.0)).norm() < 1e-13);
        // nilpotent: exp([[0,0],[1,0]]) = [[1,0],[1,1]]
        let z = CMatrix::from_fn(2, |i, j| if i == 1 && j == 0 { ONE } else { ZERO });
        let e = z.expm();
        assert!((e[(1, 0)] - ONE).norm() < 1e-14 && (e[(0, 1)]).norm() < 1e-14);
    }

    #[test]
    fn try_from_cmatrix_rejects_non_hermitian() {
        let m = CMatrix::from_fn(2, |i, j| c(i as f64, j as f64));
        assert!(HermitianMatrix::try_from_cmatrix(&m, 1e-12).is_err());
    }

    proptest! {
        #[test]
        fn trace_split_reconstructs(seed in 0u64..10_000, n in 1usize..6) {
            let mut rng = substream(seed, "prop-split", 0);
            let h = sample_gue(n, &mut rng);
            let (t, h0) = trace_split(&h);
            prop_assert!(h0.trace().abs() <= 1e-12);
            let back = h0.shift_identity(t / n as f64);
            prop_assert!(back.max_abs_diff(&h) <= 1e-14);
        }

        #[test]
        fn conjugation_preserves_spectrum(seed in 0u64..10_000, n in 1usize..6) {
            let mut rng = substream(seed, "prop-conj", 0);
            let h = sample_gue(n, &mut rng);
            let u = sample_haar_unitary(n, &mut rng);
            let a = hermitian_eigvals(&h).unwrap();
            let b = hermitian_eigvals(&h.conjugate_by(&u)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + h.frobenius_norm()));
            }
        }
    }
}
