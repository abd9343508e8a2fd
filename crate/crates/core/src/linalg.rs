//! Dense complex matrices and the small amount of linear algebra the
//! simulator needs: products, adjoints, rank-1 accumulation, quadratic
//! forms, LU solves and a cyclic Jacobi eigensolver for Hermitian
//! matrices. Every matrix in the system model is at most 10x10, so dense
//! row-major storage is used throughout.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            entries: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    /// Build from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, entries }
    }

    /// Build from row-major entries; `entries.len()` must equal `rows * cols`.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "entry count {} does not match {}x{}",
                entries.len(),
                rows,
                cols
            )));
        }
        Ok(ComplexMatrix { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matrix product");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self[(i, p)];
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(p, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch in matvec");
        let mut out = vec![Complex64::ZERO; self.rows];
        for i in 0..self.rows {
            let mut acc = Complex64::ZERO;
            for j in 0..self.cols {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a + b)
            .collect();
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a - b)
            .collect();
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// `self + s * I` for a real shift `s`.
    pub fn shifted(&self, s: f64) -> Self {
        assert_eq!(self.rows, self.cols, "shift requires a square matrix");
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += Complex64::new(s, 0.0);
        }
        out
    }

    /// Rank-1 accumulation `self += w * x * x^H` for real weight `w`.
    pub fn acc_outer(&mut self, w: f64, x: &[Complex64]) {
        assert_eq!(self.rows, x.len());
        assert_eq!(self.cols, x.len());
        for i in 0..self.rows {
            let xi = w * x[i];
            for j in 0..self.cols {
                self[(i, j)] += xi * x[j].conj();
            }
        }
    }

    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, x: &[Complex64]) {
        assert_eq!(self.rows, x.len());
        for i in 0..self.rows {
            self[(i, j)] = x[i];
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in i..self.cols {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)].conj())
        })
    }

    /// Raw quadratic form `u^H A u`.
    pub fn quad_form(&self, u: &[Complex64]) -> Complex64 {
        let au = self.matvec(u);
        vdot(u, &au)
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        assert_eq!(self.rows, self.cols, "solve requires a square matrix");
        assert_eq!(self.rows, b.len());
        let n = self.rows;
        let mut a = self.entries.clone();
        let mut x = b.to_vec();
        let scale = self
            .entries
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);

        for col in 0..n {
            let mut piv = col;
            let mut piv_mag = a[col * n + col].norm_sqr();
            for r in col + 1..n {
                let mag = a[r * n + col].norm_sqr();
                if mag > piv_mag {
                    piv_mag = mag;
                    piv = r;
                }
            }
            if piv_mag.sqrt() <= 1e-14 * scale {
                return Err(Error::NumericFailure(format!(
                    "singular system (pivot {:.3e} at column {col})",
                    piv_mag.sqrt()
                )));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let inv = Complex64::ONE / a[col * n + col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col] * inv;
                if factor == Complex64::ZERO {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= factor * v;
                }
                let xc = x[col];
                x[r] -= factor * xc;
            }
        }
        for i in 0..n {
            x[i] /= a[i * n + i];
        }
        Ok(x)
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the matching unit
    /// eigenvectors as columns. The input is symmetrized first, so small
    /// Hermitian defects from accumulation are tolerated.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        assert_eq!(self.rows, self.cols, "eigen requires a square matrix");
        let n = self.rows;
        let mut a = self.hermitian_part();
        let mut v = ComplexMatrix::identity(n);
        let norm = a.frobenius_norm().max(f64::MIN_POSITIVE);
        let tol = 1e-14 * norm;

        for _sweep in 0..80 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if (2.0 * off).sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    let mag = apq.norm();
                    if mag <= tol * 1e-2 {
                        continue;
                    }
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let w = apq / mag; // e^{i phase}
                    let tau = (app - aqq) / (2.0 * mag);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;

                    // A <- U^H A U with U = [[c, -w s], [conj(w) s, c]]
                    // acting on columns/rows p and q.
                    for r in 0..n {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        a[(r, p)] = c * arp + w.conj() * s * arq;
                        a[(r, q)] = -w * s * arp + c * arq;
                    }
                    for r in 0..n {
                        let apr = a[(p, r)];
                        let aqr = a[(q, r)];
                        a[(p, r)] = c * apr + w * s * aqr;
                        a[(q, r)] = -w.conj() * s * apr + c * aqr;
                    }
                    a[(p, q)] = Complex64::ZERO;
                    a[(q, p)] = Complex64::ZERO;
                    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = c * vrp + w.conj() * s * vrq;
                        v[(r, q)] = -w * s * vrp + c * vrq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        let vals: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
        order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure(
                "non-finite eigenvalue in Jacobi iteration".into(),
            ));
        }
        let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let mut vecs = ComplexMatrix::zeros(n, n);
        for (new_j, &old_j) in order.iter().enumerate() {
            for r in 0..n {
                vecs[(r, new_j)] = v[(r, old_j)];
            }
        }
        Ok((sorted_vals, vecs))
    }

    /// Eigenvalues only, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        self.hermitian_eigen().map(|(vals, _)| vals)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.entries[i * self.cols + j]
    }
}

/// Inner product `sum conj(a_i) b_i`.
pub fn vdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit-normalized copy; errors on (near-)zero input.
pub fn vnormalize(a: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = vnorm(a);
    if n < 1e-150 {
        return Err(Error::NumericFailure("cannot normalize zero vector".into()));
    }
    Ok(a.iter().map(|z| z / n).collect())
}

/// Real value of a Hermitian quadratic form `u^H A u`.
///
/// The form is symmetrized explicitly; an imaginary residue above
/// `1e-10 * max(1, |re|)` signals a non-Hermitian input and raises a
/// numeric failure.
pub fn real_quad_form(a: &ComplexMatrix, u: &[Complex64]) -> Result<f64> {
    let q = a.hermitian_part().quad_form(u);
    if q.im.abs() > 1e-10 * q.re.abs().max(1.0) {
        return Err(Error::NumericFailure(format!(
            "quadratic form has imaginary residue {:.3e}",
            q.im
        )));
    }
    Ok(q.re)
}
