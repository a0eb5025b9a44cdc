//! Compressed sparse row matrices, sparse LU solves and 2-norm condition
//! estimates.

use std::io::{self, Write};

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinAlgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("condition estimate did not converge within {0} iterations")]
    NoConvergence(usize),
}

/// Square sparse matrix in CSR form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; explicit zeros are kept.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `r` as `(column, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&c).map_or(0.0, |k| self.values[self.row_ptr[r] + k])
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            for (c, v) in t.row(r) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst
    }

    /// `P A Pᵀ` with `perm[i]` the new index of row/column `i`.
    pub fn permuted(&self, perm: &[usize]) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (perm[r], perm[c], v)).collect();
        Self::from_triplets(self.n, &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            a[(r, c)] = v;
        }
        a
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinAlgError> {
        let t: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.n, a.n, &t)
            .map_err(|e| LinAlgError::Shape(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|_| LinAlgError::Singular)?;
        Ok(SparseLu { n: a.n, lu })
    }

    fn run(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>, LinAlgError> {
        if b.len() != self.n {
            return Err(LinAlgError::Shape(format!("rhs of length {} for n = {}", b.len(), self.n)));
        }
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_transpose_in_place_with_conj(Conj::No, x.as_mut());
        } else {
            self.lu.solve_in_place_with_conj(Conj::No, x.as_mut());
        }
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinAlgError::Singular)
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
        self.run(b, false)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
        self.run(b, true)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `A x = b` by sparse LU; fails with `Singular` when the relative
/// residual is not small.
pub fn solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
    let x = SparseLu::new(a)?.solve(b)?;
    let r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| ax - bi).collect();
    let bn = norm(b);
    if bn > 0.0 && norm(&r) > 1e-6 * bn {
        return Err(LinAlgError::Singular);
    }
    Ok(x)
}

/// Largest eigenvalue of a symmetric positive semi-definite operator by
/// Lanczos with full reorthogonalization.
fn lanczos_max(n: usize, op: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>, LinAlgError>, seed: u64) -> Result<f64, LinAlgError> {
    let max_iter = n.min(400);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for k in 0..max_iter {
        let mut w = op(&basis[k])?;
        let alpha: f64 = w.iter().zip(&basis[k]).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = norm(&w);
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j || j + 1 == i {
                betas[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imax, &tmax) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        theta = tmax;
        let resid = beta * eig.eigenvectors[(m - 1, imax)].abs();
        if resid <= 1e-10 * theta.abs() || beta <= 1e-14 * theta.abs() || m == n {
            return Ok(theta);
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    if max_iter == 0 {
        return Ok(theta);
    }
    Err(LinAlgError::NoConvergence(max_iter))
}

/// `σ_max(A) / σ_min(A)` from the extreme eigenvalues of `AᵀA` and
/// `(AᵀA)^{-1}`.
pub fn cond2_estimate(a: &CsrMatrix) -> Result<f64, LinAlgError> {
    let n = a.n();
    if n == 0 {
        return Err(LinAlgError::Shape("empty matrix".into()));
    }
    let at = a.transpose();
    let lu = SparseLu::new(a)?;
    let smax2 = lanczos_max(n, &mut |x| Ok(at.matvec(&a.matvec(x))), 11)?;
    let inv_smin2 = lanczos_max(n, &mut |x| lu.solve(&lu.solve_transpose(x)?), 13)?;
    if !(inv_smin2.is_finite() && inv_smin2 > 0.0) {
        return Err(LinAlgError::Singular);
    }
    Ok((smax2 * inv_smin2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_sparse(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
            for _ in 0..3 {
                t.push((i, rng.random_range(0..n), rng.random_range(-1.0..1.0)));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in (k + 1)..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn csr_structure() {
        let a = CsrMatrix::from_triplets(3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (2, 1, -1.0)]);
        assert_eq!(a.row_ptr(), &[0, 2, 2, 3]);
        assert_eq!(a.col_idx(), &[0, 2, 1]);
        assert_eq!(a.get(0, 2), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn solve_examples() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve(&CsrMatrix::identity(3), &b).unwrap(), b);
        let d = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 4.0)]);
        let x = solve(&d, &[1.0, 2.0, 4.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_matches_dense_oracle() {
        let a = random_sparse(50, 3);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = solve(&a, &b).unwrap();
        let dense: Vec<Vec<f64>> = (0..50).map(|r| (0..50).map(|c| a.get(r, c)).collect()).collect();
        let y = dense_solve(dense, b);
        let err = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-10 * norm(&y));
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(solve(&a, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cond_examples() {
        assert!((cond2_estimate(&CsrMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-12);
        let d = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 10.0)]);
        assert!((cond2_estimate(&d).unwrap() - 10.0).abs() < 1e-9);
        assert!((cond2_estimate(&CsrMatrix::identity(1)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cond_matches_dense_svd() {
        let a = random_sparse(30, 5);
        let sv = a.to_dense().singular_values();
        let exact = sv.max() / sv.min();
        let est = cond2_estimate(&a).unwrap();
        assert!((est - exact).abs() <= 0.05 * exact, "{est} vs {exact}");
    }

    #[test]
    fn matrix_market_export() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.5), (1, 0, -2.0)]);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2 2 2");
        assert!(lines[2].starts_with("1 1 1.5"));
        assert!(lines[3].starts_with("2 1 -2"));
    }

    proptest! {
        #[test]
        fn solve_inverts_matvec(seed in 0u64..1000) {
            let a = random_sparse(40, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = solve(&a, &a.matvec(&x)).unwrap();
            let err = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(err <= 1e-9 * norm(&x));
        }

        #[test]
        fn cond_is_permutation_invariant(seed in 0u64..200) {
            let a = random_sparse(25, seed);
            let mut perm: Vec<usize> = (0..25).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..25).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let c1 = cond2_estimate(&a).unwrap();
            let c2 = cond2_estimate(&a.permuted(&perm)).unwrap();
            prop_assert!((c1 - c2).abs() <= 1e-6 * c1);
        }
    }
}
