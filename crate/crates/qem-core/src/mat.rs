//! Small dense matrix helpers.
//!
//! The simulator stores everything as flat row-major `Vec<f64>` buffers so the
//! hot loops stay simple and cache-friendly. nalgebra is only pulled in at the
//! boundaries that need factorizations (solve, rank, eigenvalues).

use num_complex::Complex64;

/// Square real matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    dim: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        Mat { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds from a flat row-major buffer. Panics if the length is not `dim*dim`.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "flat buffer length must be dim^2");
        Mat { dim, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "rows must form a square matrix");
            data.extend_from_slice(r);
        }
        Mat { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for r in 0..self.dim {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            out[r] = acc;
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * d..(k + 1) * d];
                let out_row = &mut out.data[i * d..(i + 1) * d];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let d = self.dim;
        let mut out = Mat::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Replaces the matrix with `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for r in 0..d {
            for c in (r + 1)..d {
                let avg = 0.5 * (self.data[r * d + c] + self.data[c * d + r]);
                self.data[r * d + c] = avg;
                self.data[c * d + r] = avg;
            }
        }
    }

    fn to_na(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Smallest eigenvalue, assuming the matrix is (numerically) symmetric.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let mut s = self.clone();
        s.symmetrize();
        let eig = nalgebra::SymmetricEigen::new(s.to_na());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest singular value.
    pub fn max_singular_value(&self) -> f64 {
        self.to_na()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
    }

    /// Numerical rank at relative tolerance `rel_tol * sigma_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let svals = self.to_na().singular_values();
        let smax = svals.iter().copied().fold(0.0f64, f64::max);
        if smax == 0.0 {
            return 0;
        }
        svals.iter().filter(|&&s| s > rel_tol * smax).count()
    }

    /// Solves `self * x = rhs` via LU. Returns `None` when singular.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(rhs.len(), self.dim);
        let lu = self.to_na().lu();
        let b = nalgebra::DVector::from_column_slice(rhs);
        lu.solve(&b).map(|x| x.iter().copied().collect())
    }

    /// Matrix inverse via LU. Returns `None` when singular.
    pub fn inverse(&self) -> Option<Mat> {
        self.to_na().try_inverse().map(|inv| {
            let mut out = Mat::zeros(self.dim);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    out.data[r * self.dim + c] = inv[(r, c)];
                }
            }
            out
        })
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_flat(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "flat buffer length must be dim^2");
        CMat { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let da = self.dim;
        let db = other.dim;
        let d = da * db;
        let mut out = CMat::zeros(d);
        for ra in 0..da {
            for ca in 0..da {
                let a = self.data[ra * da + ca];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        out.data[(ra * db + rb) * d + (ca * db + cb)] =
                            a * other.data[rb * db + cb];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `max_ij |(A^dagger A - I)_ij|`.
    pub fn unitarity_residual(&self) -> f64 {
        let prod = self.adjoint().matmul(self);
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let expect = if r == c { 1.0 } else { 0.0 };
                let d = prod.get(r, c) - Complex64::new(expect, 0.0);
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let d = self.get(r, c) - self.get(c, r).conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Eigenvalue range of a Hermitian matrix.
    ///
    /// Uses the real embedding [[Re, -Im], [Im, Re]], which is symmetric when
    /// the input is Hermitian and carries each eigenvalue twice.
    pub fn hermitian_eigen_range(&self) -> (f64, f64) {
        let d = self.dim;
        let mut emb = nalgebra::DMatrix::<f64>::zeros(2 * d, 2 * d);
        for r in 0..d {
            for c in 0..d {
                let z = self.get(r, c);
                emb[(r, c)] = z.re;
                emb[(r + d, c + d)] = z.re;
                emb[(r, c + d)] = -z.im;
                emb[(r + d, c)] = z.im;
            }
        }
        // Guard against tiny asymmetry from rounding.
        let emb = (&emb + emb.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(emb);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_and_transpose() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Mat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab, Mat::from_rows(&[&[2.0, 1.0], &[4.0, 3.0]]));
        assert_eq!(a.transpose().get(0, 1), 3.0);
    }

    #[test]
    fn solve_roundtrip() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let x = a.solve(&[5.0, 10.0]).unwrap();
        let back = a.matvec(&x);
        assert!((back[0] - 5.0).abs() < 1e-12);
        assert!((back[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let full = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let defic = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(full.rank(1e-9), 2);
        assert_eq!(defic.rank(1e-9), 1);
    }

    #[test]
    fn hermitian_range_of_pauli_y() {
        let i = Complex64::new(0.0, 1.0);
        let mut y = CMat::zeros(2);
        y.set(0, 1, -i);
        y.set(1, 0, i);
        let (lo, hi) = y.hermitian_eigen_range();
        assert!((lo + 1.0).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }
}
