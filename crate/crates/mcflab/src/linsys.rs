//! Banded LU with partial pivoting for stencil Jacobians.
//!
//! The Newton systems assembled on masked structured grids are banded: with
//! unknowns numbered row-major along the fast axis, a 3x3 stencil couples
//! indices at most `bandwidth` apart, where `bandwidth` is one more than the
//! widest run of unknowns along a grid line. Storage follows the LAPACK band
//! layout (column slabs of `2*kl + ku + 1` diagonals, the top `kl` reserved as
//! fill space for row interchanges), so the elimination inner loop is a
//! contiguous axpy per column.

use crate::error::Error;
use crate::Result;

/// Square banded matrix with `kl` sub- and `ku` superdiagonals.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `data[j * rows + d]` holds A(i, j) with `d = i - j + kl + ku`.
    data: Vec<f64>,
    rows: usize,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0);
        let rows = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, data: vec![0.0; rows * n], rows }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `v` to A(i, j). The entry must lie within the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            j <= i + self.ku && i <= j + self.kl,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let d = i + self.kl + self.ku - j;
        self.data[j * self.rows + d] += v;
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    /// y = A x with the unfactored matrix (assembly-time entries only).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let ilo = j.saturating_sub(self.ku);
            let ihi = (j + self.kl).min(self.n - 1);
            for i in ilo..=ihi {
                y[i] += self.data[j * self.rows + (i + self.kl + self.ku - j)] * xj;
            }
        }
        y
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + (i + self.kl + self.ku - j)]
    }

    /// In-place LU factorization with partial pivoting. Returns the pivot
    /// vector (`piv[k]` = global row swapped into position k), or an error on
    /// a numerically singular column.
    pub fn factor(&mut self) -> Result<Vec<usize>> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let rows = self.rows;
        let diag = kl + ku; // offset of A(k, k) inside column k's slab
        let mut piv = vec![0usize; n];
        let mut mult = vec![0.0f64; kl + 1];

        for k in 0..n {
            let reach = kl.min(n - 1 - k);
            let cmax = (k + kl + ku).min(n - 1);
            // pivot search in column k among local rows 0..=reach (contiguous)
            let col_k = k * rows + diag;
            let mut p = 0usize;
            let mut pmax = 0.0f64;
            for r in 0..=reach {
                let v = self.data[col_k + r].abs();
                if v > pmax {
                    pmax = v;
                    p = r;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::Numeric(format!(
                    "banded LU: singular or non-finite pivot at column {k}"
                )));
            }
            piv[k] = k + p;
            if p != 0 {
                for j in k..=cmax {
                    let base = j * rows + (k + diag - j);
                    self.data.swap(base, base + p);
                }
            }
            // multipliers (contiguous in column k)
            let inv = 1.0 / self.data[col_k];
            for r in 1..=reach {
                let m = self.data[col_k + r] * inv;
                self.data[col_k + r] = m;
                mult[r] = m;
            }
            // rank-1 update: column j gets axpy of the multiplier vector
            if reach > 0 {
                let mv = &mult[1..=reach];
                for j in (k + 1)..=cmax {
                    let base = j * rows + (k + diag - j);
                    let a = self.data[base];
                    if a != 0.0 {
                        let seg = &mut self.data[base + 1..=base + reach];
                        for (s, m) in seg.iter_mut().zip(mv) {
                            *s -= m * a;
                        }
                    }
                }
            }
        }
        Ok(piv)
    }

    /// Solves `A x = b` given the factorization from `factor`. `b` is
    /// overwritten with the solution.
    pub fn solve_factored(&self, piv: &[usize], b: &mut [f64]) -> Result<()> {
        let n = self.n;
        if b.len() != n || piv.len() != n {
            return Err(Error::GridMismatch);
        }
        let kl = self.kl;
        let ku = self.ku;
        let rows = self.rows;
        let diag = kl + ku;
        // forward: pivots and L
        for k in 0..n {
            let p = piv[k];
            if p != k {
                b.swap(k, p);
            }
            let reach = kl.min(n - 1 - k);
            let bk = b[k];
            if bk != 0.0 && reach > 0 {
                let col_k = k * rows + diag;
                for r in 1..=reach {
                    b[k + r] -= self.data[col_k + r] * bk;
                }
            }
        }
        // backward: U
        for k in (0..n).rev() {
            let cmax = (k + kl + ku).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=cmax {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.data[k * rows + diag];
        }
        Ok(())
    }

    /// Convenience: factor and solve in one call.
    pub fn solve(mut self, b: &mut [f64]) -> Result<()> {
        let piv = self.factor()?;
        self.solve_factored(&piv, b)
    }
}
