//! Dense singular value decomposition and pseudo-inverse.
//!
//! One-sided (Hestenes) Jacobi orthogonalisation, generic over real and
//! complex entries. It converges to high relative accuracy even when singular
//! values are clustered, which the bidiagonal QR SVD shipped with nalgebra
//! does not reliably do.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, Scalar as NaScalar};
use num_complex::Complex64;

use crate::math;

pub type CMatrix = DMatrix<Complex64>;

/// Entry type accepted by [`svd`].
pub trait Field:
    NaScalar + Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn scale(self, k: f64) -> Self;
    /// Unit-modulus factor `u` with `self * conj(u)` real and non-negative.
    fn unit_phase(self) -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn conj(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn unit_phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn unit_phase(self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            self / n
        }
    }
}

/// Thin SVD `A = U diag(s) V^H` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd<T: Field> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on the columns of `a` (requires `rows >= cols`).
fn jacobi_tall<T: Field>(mut a: DMatrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    let mut v = DMatrix::<T>::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() });
    let tol = 1e-15;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut alpha, mut beta) = (0.0, 0.0);
                let mut gamma = T::zero();
                for k in 0..m {
                    let ap = a[(k, p)];
                    let aq = a[(k, q)];
                    alpha += ap.abs2();
                    beta += aq.abs2();
                    gamma = gamma + ap.conj() * aq;
                }
                let g = math::sqrt(gamma.abs2());
                if g == 0.0 || g <= tol * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                // Rotate column q onto a real inner product with column p.
                let phase = gamma.unit_phase().conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + math::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + math::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for k in 0..m {
                    let ap = a[(k, p)];
                    let aq = a[(k, q)] * phase;
                    a[(k, p)] = ap.scale(c) - aq.scale(s);
                    a[(k, q)] = ap.scale(s) + aq.scale(c);
                }
                for k in 0..n {
                    let vp = v[(k, p)];
                    let vq = v[(k, q)] * phase;
                    v[(k, p)] = vp.scale(c) - vq.scale(s);
                    v[(k, q)] = vp.scale(s) + vq.scale(c);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| math::sqrt((0..m).map(|k| a[(k, j)].abs2()).sum()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::<T>::from_fn(m, n, |_, _| T::zero());
    let mut vs = DMatrix::<T>::from_fn(n, n, |_, _| T::zero());
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        if sigma > 0.0 {
            for k in 0..m {
                u[(k, dst)] = a[(k, src)].scale(1.0 / sigma);
            }
        }
        for k in 0..n {
            vs[(k, dst)] = v[(k, src)];
        }
    }
    Svd { u, s, v: vs }
}

fn adjoint<T: Field>(a: &DMatrix<T>) -> DMatrix<T> {
    DMatrix::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn svd<T: Field>(a: &DMatrix<T>) -> Svd<T> {
    if a.nrows() >= a.ncols() {
        jacobi_tall(a.clone())
    } else {
        let t = jacobi_tall(adjoint(a));
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

/// Moore-Penrose pseudo-inverse with singular values at or below
/// `rel_tol * sigma_max` treated as zero.
pub struct PseudoInverse {
    pub matrix: CMatrix,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

pub fn pseudo_inverse(a: &CMatrix, rel_tol: f64) -> PseudoInverse {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse {
            matrix: CMatrix::zeros(cols, rows),
            rank: 0,
            singular_values: Vec::new(),
        };
    }
    let d = svd(a);
    let sigma_max = d.s.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * sigma_max;
    let mut out = CMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in d.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / s;
        for c in 0..rows {
            let uc = d.u[(c, k)].conj() * inv;
            for r in 0..cols {
                out[(r, c)] += d.v[(r, k)] * uc;
            }
        }
    }
    PseudoInverse {
        matrix: out,
        rank,
        singular_values: d.s,
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd(a).s
}
