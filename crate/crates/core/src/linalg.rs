//! Small dense complex linear algebra used by the simulator and the models.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::{Real, C};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<R>>,
}

impl<R: Real> CMatrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<R>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data; panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C<R>>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_columns(columns: &[Vec<C<R>>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |r, c| columns[c][r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C<R>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C<R>] {
        &mut self.data
    }

    pub fn column(&self, c: usize) -> Vec<C<R>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn row(&self, r: usize) -> &[C<R>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] = out.data[r * other.cols + c] + a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<R>]) -> Vec<C<R>> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).fold(Complex::zero(), |acc, (a, b)| acc + *a * *b))
            .collect()
    }

    /// Kronecker product `self ⊗ low`. With little-endian qubit indexing, `low`
    /// acts on the lower-numbered qubits.
    pub fn kron(&self, low: &Self) -> Self {
        Self::from_fn(self.rows * low.rows, self.cols * low.cols, |r, c| {
            self[(r / low.rows, c / low.cols)] * low[(r % low.rows, c % low.cols)]
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm().value())
            .fold(0.0, f64::max)
    }

    /// `max |U†U − I|` for a square matrix.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.cols))
    }

    pub fn map<S: Real>(&self, f: impl Fn(C<R>) -> C<S>) -> CMatrix<S> {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| f(*z)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<R> Index<(usize, usize)> for CMatrix<R> {
    type Output = Complex<R>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<R> {
        &self.data[r * self.cols + c]
    }
}

impl<R> IndexMut<(usize, usize)> for CMatrix<R> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<R> {
        &mut self.data[r * self.cols + c]
    }
}

/// Hermitian inner product `⟨a|b⟩ = Σ conj(a_k) b_k`.
pub fn vdot<R: Real>(a: &[C<R>], b: &[C<R>]) -> C<R> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm_sqr<R: Real>(v: &[C<R>]) -> R {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn scale<R: Real>(v: &[C<R>], s: C<R>) -> Vec<C<R>> {
    v.iter().map(|z| *z * s).collect()
}

/// `y += a·x`
pub fn axpy<R: Real>(y: &mut [C<R>], a: C<R>, x: &[C<R>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

/// Unitary whose first column is `first` (assumed unit norm), completed by
/// Gram–Schmidt over the standard basis. At each step the basis vector with
/// the largest residual is taken, which keeps the completion well conditioned.
pub fn complete_unitary<R: Real>(first: &[C<R>]) -> CMatrix<R> {
    let n = first.len();
    let mut columns: Vec<Vec<C<R>>> = Vec::with_capacity(n);
    columns.push(first.to_vec());
    let mut used = vec![false; n];
    while columns.len() < n {
        let mut best: Option<(usize, Vec<C<R>>, f64)> = None;
        for k in (0..n).filter(|&k| !used[k]) {
            let mut v = vec![Complex::zero(); n];
            v[k] = Complex::one();
            // Two passes of classical Gram–Schmidt.
            for _ in 0..2 {
                for q in &columns {
                    let p = vdot(q, &v);
                    axpy(&mut v, -p, q);
                }
            }
            let nrm = norm_sqr(&v).value();
            if best.as_ref().is_none_or(|(_, _, b)| nrm > *b) {
                best = Some((k, v, nrm));
            }
        }
        let (k, v, _) = best.expect("standard basis spans the space");
        used[k] = true;
        let inv = R::one() / norm_sqr(&v).sqrt();
        columns.push(v.into_iter().map(|z| z * inv).collect());
    }
    CMatrix::from_columns(&columns)
}
