//! Dense complex linear algebra used by the training and estimation code.
//!
//! Matrices are small (at most a few hundred entries per side), so everything
//! is stored row-major in a flat `Vec` and factorized with a Householder QR
//! using column pivoting. The pivoted QR backs the pseudo-inverse, the
//! numerical rank and the `Tr[(AᴴA)⁻¹]` computation.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexVector = Vec<Complex64>;

/// Relative rank tolerance used when no explicit one is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: bad.len(),
            });
        }
        let m = Self::from_fn(rows, cols, |i, j| columns[j][i]);
        Self::new(m.rows, m.cols, m.data)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<ComplexVector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for i in 0..self.cols {
            for j in i..self.cols {
                let s: Complex64 = (0..self.rows)
                    .map(|k| self[(k, i)].conj() * self[(k, j)])
                    .sum();
                g[(i, j)] = s;
                g[(j, i)] = s.conj();
            }
        }
        g
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}j ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `n×n` DFT matrix with entry `(m, k) = exp(-j 2π m k / n)` (0-indexed).
///
/// The exponent is reduced modulo `n` before evaluation, which keeps large
/// orders as accurate as small ones.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    assert!(n >= 1, "dft order must be positive");
    ComplexMatrix::from_fn(n, n, |m, k| {
        let e = (m * k) % n;
        Complex64::from_polar(1.0, -2.0 * PI * e as f64 / n as f64)
    })
}

/// Sylvester-type Hadamard matrix of order `n`.
pub fn hadamard_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::UnsupportedOrder(n));
    }
    // H[i][j] = (-1)^{popcount(i & j)} is the closed form of the doubling recursion.
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(sign, 0.0)
    }))
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Upper trapezoidal factor, `min(rows, cols) × cols`, row-major.
    r: ComplexMatrix,
    /// Unit-norm Householder vectors; `reflectors[k]` acts on rows `k..rows`.
    reflectors: Vec<Option<ComplexVector>>,
    /// `perm[k]` is the original index of the column moved to position `k`.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(a: &ComplexMatrix) -> Self {
        let (m, n) = a.shape();
        let steps = m.min(n);
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(steps);

        for k in 0..steps {
            // Remaining column norms are recomputed each step; matrices are small
            // and this avoids the usual downdating cancellation.
            let (pivot, _) = (k..n)
                .map(|j| (j, (k..m).map(|i| w[(i, j)].norm_sqr()).sum::<f64>()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot != k {
                for i in 0..m {
                    let tmp = w[(i, k)];
                    w[(i, k)] = w[(i, pivot)];
                    w[(i, pivot)] = tmp;
                }
                perm.swap(k, pivot);
            }

            let norm_x = (k..m).map(|i| w[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            if norm_x == 0.0 {
                reflectors.push(None);
                continue;
            }
            let x0 = w[(k, k)];
            let phase = if x0.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let alpha = -phase * norm_x;
            let mut v: ComplexVector = (k..m).map(|i| w[(i, k)]).collect();
            v[0] -= alpha;
            let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if v_norm == 0.0 {
                reflectors.push(None);
                continue;
            }
            v.iter_mut().for_each(|z| *z /= v_norm);

            for j in k..n {
                let s: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(t, vi)| vi.conj() * w[(k + t, j)])
                    .sum();
                for (t, vi) in v.iter().enumerate() {
                    w[(k + t, j)] -= 2.0 * s * vi;
                }
            }
            for i in (k + 1)..m {
                w[(i, k)] = Complex64::new(0.0, 0.0);
            }
            reflectors.push(Some(v));
        }

        let r = ComplexMatrix::from_fn(steps, n, |i, j| if j >= i { w[(i, j)] } else { Complex64::new(0.0, 0.0) });
        Self {
            rows: m,
            cols: n,
            r,
            reflectors,
            perm,
        }
    }

    pub fn r(&self) -> &ComplexMatrix {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Magnitudes of the diagonal of `R`, in pivot order.
    pub fn pivot_magnitudes(&self) -> Vec<f64> {
        (0..self.r.rows()).map(|k| self.r[(k, k)].norm()).collect()
    }

    pub fn rank(&self, tol: f64) -> usize {
        let pivots = self.pivot_magnitudes();
        let largest = pivots.iter().copied().fold(0.0, f64::max);
        if largest == 0.0 {
            return 0;
        }
        pivots.iter().filter(|&&d| d > tol * largest).count()
    }

    fn require_full_column_rank(&self) -> Result<()> {
        let rank = self.rank(DEFAULT_RANK_TOL);
        if self.rows < self.cols || rank < self.cols {
            return Err(Error::Singular {
                rank,
                cols: self.cols,
            });
        }
        Ok(())
    }

    /// Inverse of the leading `cols × cols` block of `R` by back substitution.
    fn r_inverse(&self) -> ComplexMatrix {
        let n = self.cols;
        let mut inv = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            // Solve R x = e_j.
            for i in (0..=j).rev() {
                let mut s = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                for k in (i + 1)..=j {
                    s -= self.r[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = s / self.r[(i, i)];
            }
        }
        inv
    }

    /// Thin `Q`, `rows × cols`.
    fn thin_q(&self) -> ComplexMatrix {
        let (m, n) = (self.rows, self.cols);
        let mut q = ComplexMatrix::from_fn(m, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let Some(v) = v else { continue };
            for j in 0..n {
                let s: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(t, vi)| vi.conj() * q[(k + t, j)])
                    .sum();
                for (t, vi) in v.iter().enumerate() {
                    q[(k + t, j)] -= 2.0 * s * vi;
                }
            }
        }
        q
    }

    pub fn pseudo_inverse(&self) -> Result<ComplexMatrix> {
        self.require_full_column_rank()?;
        // A = Q R Pᵀ  =>  A† = P R⁻¹ Qᴴ
        let rq = self.r_inverse().matmul(&self.thin_q().adjoint())?;
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for (k, &orig) in self.perm.iter().enumerate() {
            for j in 0..self.rows {
                out[(orig, j)] = rq[(k, j)];
            }
        }
        Ok(out)
    }

    /// Diagonal of `(AᴴA)⁻¹` in the original column order.
    pub fn inverse_gram_diagonal(&self) -> Result<Vec<f64>> {
        self.require_full_column_rank()?;
        // (AᴴA)⁻¹ = P R⁻¹ R⁻ᴴ Pᵀ, so each diagonal entry is a row norm of R⁻¹.
        let rinv = self.r_inverse();
        let mut diag = vec![0.0; self.cols];
        for (k, &orig) in self.perm.iter().enumerate() {
            diag[orig] = rinv.row(k).iter().map(|z| z.norm_sqr()).sum();
        }
        Ok(diag)
    }
}

pub fn pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    PivotedQr::new(a).pseudo_inverse()
}

/// `Tr[(AᴴA)⁻¹]`.
pub fn trace_inverse_gram(a: &ComplexMatrix) -> Result<f64> {
    Ok(PivotedQr::new(a).inverse_gram_diagonal()?.iter().sum())
}

pub fn inverse_gram_diagonal(a: &ComplexMatrix) -> Result<Vec<f64>> {
    PivotedQr::new(a).inverse_gram_diagonal()
}

pub fn numerical_rank(a: &ComplexMatrix, tol: f64) -> usize {
    PivotedQr::new(a).rank(tol)
}

/// Largest normalized inner product between two distinct columns.
///
/// Zero for a matrix with mutually orthogonal columns, one when two columns
/// are parallel.
pub fn gram_orthogonality_defect(a: &ComplexMatrix) -> Result<f64> {
    let g = a.gram();
    let norms: Vec<f64> = (0..a.cols()).map(|j| g[(j, j)].re.sqrt()).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Degenerate(format!("column {j} is zero")));
    }
    let mut worst: f64 = 0.0;
    for i in 0..a.cols() {
        for j in (i + 1)..a.cols() {
            worst = worst.max(g[(i, j)].norm() / (norms[i] * norms[j]));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// Gauss-Jordan on the normal equations, `(AᴴA)⁻¹ Aᴴ`. Test oracle only.
    fn normal_equation_pinv(a: &ComplexMatrix) -> ComplexMatrix {
        let n = a.cols();
        let mut g = a.gram();
        let mut inv = ComplexMatrix::identity(n);
        for col in 0..n {
            let p = (col..n)
                .max_by(|&x, &y| g[(x, col)].norm().total_cmp(&g[(y, col)].norm()))
                .unwrap();
            for j in 0..n {
                let t = g[(col, j)];
                g[(col, j)] = g[(p, j)];
                g[(p, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(p, j)];
                inv[(p, j)] = t;
            }
            let d = g[(col, col)];
            for j in 0..n {
                g[(col, j)] /= d;
                inv[(col, j)] /= d;
            }
            for i in 0..n {
                if i != col {
                    let f = g[(i, col)];
                    for j in 0..n {
                        let gv = g[(col, j)];
                        let iv = inv[(col, j)];
                        g[(i, j)] -= f * gv;
                        inv[(i, j)] -= f * iv;
                    }
                }
            }
        }
        inv.matmul(&a.adjoint()).unwrap()
    }

    #[test]
    fn dft_small_orders() {
        assert_eq!(dft_matrix(1).as_slice(), &[c(1.0, 0.0)]);
        let d2 = dft_matrix(2);
        let expect = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert!(d2.max_abs_diff(&expect) < 1e-15);

        let row = dft_matrix(4).row(1).to_vec();
        let expect = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn dft_gram_is_scaled_identity() {
        for n in 1..=64 {
            let g = dft_matrix(n).gram();
            let target = ComplexMatrix::identity(n).scale(c(n as f64, 0.0));
            assert!(g.max_abs_diff(&target) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn hadamard_sylvester() {
        let h2 = hadamard_matrix(2).unwrap();
        let expect = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert_eq!(h2, expect);

        // H4 = [[H2, H2], [H2, -H2]]
        let h4 = hadamard_matrix(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let sign = if i >= 2 && j >= 2 { -1.0 } else { 1.0 };
                assert_eq!(h4[(i, j)], h2[(i % 2, j % 2)] * sign);
            }
        }
        for n in [1, 8, 16, 64] {
            let h = hadamard_matrix(n).unwrap();
            let target = ComplexMatrix::identity(n).scale(c(n as f64, 0.0));
            assert_eq!(h.gram().max_abs_diff(&target), 0.0);
        }
        assert_eq!(hadamard_matrix(6), Err(Error::UnsupportedOrder(6)));
        assert_eq!(hadamard_matrix(0), Err(Error::UnsupportedOrder(0)));
    }

    #[test]
    fn pinv_identity_and_dft() {
        let i3 = ComplexMatrix::identity(3);
        assert!(pseudo_inverse(&i3).unwrap().max_abs_diff(&i3) < 1e-15);

        for n in [2, 5, 8, 21] {
            let d = dft_matrix(n);
            let expect = d.adjoint().scale(c(1.0 / n as f64, 0.0));
            assert!(pseudo_inverse(&d).unwrap().max_abs_diff(&expect) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn pinv_random_tall_matches_normal_equations() {
        let a = random_matrix(8, 4, 7);
        let pinv = pseudo_inverse(&a).unwrap();
        let residual = pinv.matmul(&a).unwrap().max_abs_diff(&ComplexMatrix::identity(4));
        assert!(residual <= 1e-9, "residual {residual}");
        let oracle = normal_equation_pinv(&a);
        assert!(pinv.max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn pinv_rejects_rank_deficient() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]).unwrap();
        assert!(matches!(pseudo_inverse(&a), Err(Error::Singular { rank: 1, cols: 2 })));
        let wide = random_matrix(2, 3, 1);
        assert!(matches!(pseudo_inverse(&wide), Err(Error::Singular { .. })));
        assert!(matches!(trace_inverse_gram(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn trace_inverse_gram_examples() {
        for n in [1, 4, 13, 42] {
            assert_abs_diff_eq!(trace_inverse_gram(&dft_matrix(n)).unwrap(), 1.0, epsilon = 1e-12);
        }
        let two_i = ComplexMatrix::identity(2).scale(c(2.0, 0.0));
        assert_abs_diff_eq!(trace_inverse_gram(&two_i).unwrap(), 0.5, epsilon = 1e-15);

        // Orthogonal columns with squared norms 4, 2, 4, 2.
        let d = dft_matrix(4);
        let s = 0.5f64.sqrt();
        let a = ComplexMatrix::from_fn(4, 4, |i, j| if j % 2 == 1 { d[(i, j)] * s } else { d[(i, j)] });
        assert_abs_diff_eq!(trace_inverse_gram(&a).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn orthogonality_defect_examples() {
        assert!(gram_orthogonality_defect(&dft_matrix(4)).unwrap() <= 1e-12);
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(gram_orthogonality_defect(&a).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        let z = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[1.0, 0.0]]).unwrap();
        assert!(matches!(gram_orthogonality_defect(&z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&ComplexMatrix::identity(5), 1e-9), 5);
        let mut a = random_matrix(6, 4, 3);
        for i in 0..6 {
            a[(i, 3)] = a[(i, 1)];
        }
        assert_eq!(numerical_rank(&a, 1e-9), 3);
        assert_eq!(numerical_rank(&ComplexMatrix::zeros(3, 3), 1e-9), 0);
        assert_eq!(numerical_rank(&random_matrix(3, 7, 9), 1e-9), 3);
    }

    #[test]
    fn inverse_gram_diagonal_matches_oracle() {
        let a = random_matrix(10, 6, 11);
        let oracle = normal_equation_pinv(&a);
        // (AᴴA)⁻¹ = A† A†ᴴ
        let inv_gram = oracle.matmul(&oracle.adjoint()).unwrap();
        let diag = inverse_gram_diagonal(&a).unwrap();
        for (k, d) in diag.iter().enumerate() {
            assert_abs_diff_eq!(*d, inv_gram[(k, k)].re, epsilon = 1e-9);
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(ComplexMatrix::new(2, 2, vec![c(0.0, 0.0); 3]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(ComplexMatrix::new(0, 1, vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, any, ProptestConfig};

        fn unitary(n: usize, seed: u64) -> ComplexMatrix {
            let qr = PivotedQr::new(&random_matrix(n, n, seed));
            qr.thin_q()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn moore_penrose_consistency(rows in 2usize..12, extra in 0usize..6, seed in any::<u64>()) {
                let cols = rows.saturating_sub(extra).max(1);
                let a = random_matrix(rows, cols, seed);
                let pinv = pseudo_inverse(&a).unwrap();
                let back = a.matmul(&pinv).unwrap().matmul(&a).unwrap();
                prop_assert!(back.max_abs_diff(&a) <= 1e-8);
            }

            #[test]
            fn trace_invariant_under_unitary(n in 2usize..8, cols in 1usize..8, seed in any::<u64>()) {
                let cols = cols.min(n);
                let a = random_matrix(n, cols, seed);
                let u = unitary(n, seed ^ 0x5555);
                let t0 = trace_inverse_gram(&a).unwrap();
                let t1 = trace_inverse_gram(&u.matmul(&a).unwrap()).unwrap();
                prop_assert!((t0 - t1).abs() <= 1e-8 * t0.max(1.0));
            }

            #[test]
            fn orthogonal_columns_trace_is_sum_of_inverse_norms(n in 2usize..20, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = dft_matrix(n);
                let scales: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
                let a = ComplexMatrix::from_fn(n, n, |i, j| d[(i, j)] * scales[j]);
                prop_assert!(gram_orthogonality_defect(&a).unwrap() <= 1e-12);
                let expect: f64 = (0..n).map(|j| 1.0 / (n as f64 * scales[j] * scales[j])).sum();
                let got = trace_inverse_gram(&a).unwrap();
                prop_assert!((got - expect).abs() <= 1e-10 * expect);
            }
        }
    }
}
