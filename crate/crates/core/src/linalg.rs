//! Small numerical kernels: complex CSR matrices, hermitian eigensolvers
//! (dense LAPACK and Lanczos), matrix norms, Gauss-Legendre rules.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::C64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: vec![], data: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![ONE; n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Duplicates are summed; exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Self {
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); nrows];
        for (r, c, v) in triplets {
            *rows[r].entry(c).or_insert(ZERO) += v;
        }
        Self::from_rows(nrows, ncols, rows)
    }

    fn from_rows(nrows: usize, ncols: usize, rows: Vec<BTreeMap<usize, C64>>) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v != ZERO {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.data[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|(cc, _)| *cc == c).map(|(_, v)| v).unwrap_or(ZERO)
    }

    pub fn matvec(&self, x: ArrayView1<C64>) -> Array1<C64> {
        let mut y = Array1::zeros(self.nrows);
        self.matvec_into(x, y.view_mut());
        y
    }

    pub fn matvec_into(&self, x: ArrayView1<C64>, mut y: ndarray::ArrayViewMut1<C64>) {
        for r in 0..self.nrows {
            let mut acc = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            m[[r, c]] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn add(&self, other: &Self, b: C64) -> Self {
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().chain(other.iter().map(|(r, c, v)| (r, c, v * b))),
        )
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut rows = Vec::with_capacity(self.nrows);
        for r in 0..self.nrows {
            let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    *acc.entry(c).or_insert(ZERO) += a * b;
                }
            }
            rows.push(acc);
        }
        Self::from_rows(self.nrows, other.ncols, rows)
    }

    /// `self · dense`.
    pub fn mul_dense(&self, dense: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.nrows, dense.ncols()));
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                let src = dense.row(k);
                let mut dst = out.row_mut(r);
                dst.scaled_add(a, &src);
            }
        }
        out
    }

    /// `dense · self`.
    pub fn left_mul_dense(&self, dense: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((dense.nrows(), self.ncols));
        for k in 0..self.nrows {
            for (c, b) in self.row(k) {
                let src = dense.column(k);
                let mut dst = out.column_mut(c);
                dst.scaled_add(b, &src);
            }
        }
        out
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_pos = vec![usize::MAX; self.ncols];
        for (j, &c) in cols.iter().enumerate() {
            col_pos[c] = j;
        }
        let triplets = rows.iter().enumerate().flat_map(|(i, &r)| {
            let col_pos = &col_pos;
            self.row(r)
                .filter(move |(c, _)| col_pos[*c] != usize::MAX)
                .map(move |(c, v)| (i, col_pos[c], v))
        });
        Self::from_triplets(rows.len(), cols.len(), triplets)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖A‖₂ ≤ √(‖A‖₁ ‖A‖_∞)`.
    pub fn norm_upper(&self) -> f64 {
        let mut col = vec![0.0; self.ncols];
        let mut row_max: f64 = 0.0;
        for r in 0..self.nrows {
            let mut s = 0.0;
            for (c, v) in self.row(r) {
                s += v.norm();
                col[c] += v.norm();
            }
            row_max = row_max.max(s);
        }
        let col_max = col.into_iter().fold(0.0, f64::max);
        (row_max * col_max).sqrt().min(self.frobenius())
    }
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|v| v.conj())
}

pub fn dense_frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dense_max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Spectral norm: exact through the Gram matrix for small sizes, otherwise
/// Lanczos on `A†A`.
pub fn dense_op_norm(m: &Array2<C64>) -> f64 {
    let (nr, nc) = m.dim();
    if nr == 0 || nc == 0 || dense_max_abs(m) == 0.0 {
        return 0.0;
    }
    if nr.min(nc) <= 400 {
        let g = if nr <= nc { m.dot(&dagger(m)) } else { dagger(m).dot(m) };
        return hermitian_eigenvalues(&g)
            .map(|e| e.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt())
            .unwrap_or_else(|_| dense_frobenius(m));
    }
    let adj = dagger(m);
    gram_top_eigenvalue(|v| adj.dot(&m.dot(&v)).mapv(|x| -x), nc).sqrt()
}

/// Largest eigenvalue of a positive operator given as `v ↦ −Gv`.
pub(crate) fn gram_top_eigenvalue<F>(neg_apply: F, dim: usize) -> f64
where
    F: Fn(ArrayView1<C64>) -> Array1<C64>,
{
    // Ritz values converge quadratically in the residual, so 1e-8 gives near machine precision.
    if let Ok(r) = lanczos_lowest(&neg_apply, dim, 1, 1e-8, 0x5eed) {
        return (-r.eigenvalues[0]).max(0.0);
    }
    let mut v = Array1::from_shape_fn(dim, |i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1));
    let mut est = 0.0;
    for _ in 0..5000 {
        let n = vec_norm(v.view());
        if n == 0.0 {
            return 0.0;
        }
        v.mapv_inplace(|x| x / n);
        let w = neg_apply(v.view());
        let new_est = vec_norm(w.view());
        let done = (new_est - est).abs() <= 1e-13 * new_est;
        est = new_est;
        v = w;
        if done {
            break;
        }
    }
    est
}

pub fn vec_norm(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a hermitian matrix.
pub fn hermitian_eigh(m: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    if m.nrows() == 0 {
        return Ok((vec![], Array2::zeros((0, 0))));
    }
    let sym = (m + &dagger(m)).mapv(|v| v * 0.5);
    // LAPACK sees a row-major complex matrix as its conjugate; hand it column-major data.
    let mut fortran = Array2::zeros(sym.dim().f());
    fortran.assign(&sym);
    let (e, v) = fortran.eigh(UPLO::Lower)?;
    Ok((e.to_vec(), v))
}

pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Result<Vec<f64>> {
    hermitian_eigh(m).map(|(e, _)| e)
}

pub fn real_symmetric_eigh(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (e, v) = m.eigh(UPLO::Lower)?;
    Ok((e.to_vec(), v))
}

/// `exp(-i · scale · M)` for hermitian `M`.
pub fn expm_hermitian(m: &Array2<C64>, scale: f64) -> Result<Array2<C64>> {
    let (e, v) = hermitian_eigh(m)?;
    let phases: Vec<C64> = e.iter().map(|&x| C64::from_polar(1.0, -scale * x)).collect();
    let mut scaled = v.clone();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|x| x * phases[j]);
    }
    Ok(scaled.dot(&dagger(&v)))
}

pub struct LanczosResult {
    pub eigenvalues: Vec<f64>,
    /// Columns are normalized eigenvectors.
    pub eigenvectors: Array2<C64>,
    pub residuals: Vec<f64>,
    pub norm_estimate: f64,
}

/// Lowest `k` eigenpairs of a hermitian operator given by its action.
///
/// Lanczos with full reorthogonalization, restarted from the leading Ritz
/// vectors until every residual `‖Hv − θv‖` is below `tol · ‖H‖`. Exactly
/// degenerate eigenvalues are resolved only up to the Krylov limitation
/// (one vector per eigenspace from a single start vector).
pub fn lanczos_lowest<F>(apply: F, dim: usize, k: usize, tol: f64, seed: u64) -> Result<LanczosResult>
where
    F: Fn(ArrayView1<C64>) -> Array1<C64>,
{
    let k = k.min(dim).max(1);
    let max_basis = dim.min((4 * k + 80).max(150));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start: Array1<C64> =
        Array1::from_shape_fn(dim, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let mut last_residual = f64::INFINITY;
    for _restart in 0..40 {
        let mut basis: Vec<Array1<C64>> = Vec::with_capacity(max_basis);
        let n0 = vec_norm(start.view());
        basis.push(start.mapv(|x| x / n0));
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        while basis.len() <= max_basis {
            let j = basis.len() - 1;
            let mut w = apply(basis[j].view());
            let a = inner(basis[j].view(), w.view()).re;
            alpha.push(a);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for q in &basis {
                    let c = inner(q.view(), w.view());
                    w.scaled_add(-c, q);
                }
            }
            let b = vec_norm(w.view());
            if basis.len() == max_basis || b < 1e-13 * (a.abs() + 1.0) {
                break;
            }
            beta.push(b);
            basis.push(w.mapv(|x| x / b));
        }
        let m = alpha.len();
        let mut t = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            t[[i, i]] = alpha[i];
            if i + 1 < m {
                t[[i, i + 1]] = beta[i];
                t[[i + 1, i]] = beta[i];
            }
        }
        let (theta, s) = real_symmetric_eigh(&t)?;
        let norm_est = theta.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        let kk = k.min(m);
        let mut vecs = Array2::<C64>::zeros((dim, kk));
        let mut residuals = Vec::with_capacity(kk);
        for i in 0..kk {
            let mut v = Array1::<C64>::zeros(dim);
            for (j, q) in basis.iter().take(m).enumerate() {
                v.scaled_add(C64::new(s[[j, i]], 0.0), q);
            }
            let nv = vec_norm(v.view());
            v.mapv_inplace(|x| x / nv);
            let hv = apply(v.view());
            let r = &hv - &v.mapv(|x| x * theta[i]);
            residuals.push(vec_norm(r.view()));
            vecs.column_mut(i).assign(&v);
        }
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        last_residual = worst / norm_est;
        if worst <= tol * norm_est || m == dim {
            return Ok(LanczosResult {
                eigenvalues: theta[..kk].to_vec(),
                eigenvectors: vecs,
                residuals,
                norm_estimate: norm_est,
            });
        }
        start = vecs.sum_axis(Axis(1));
        let extra = vecs.slice(s![.., 0]).to_owned();
        start.scaled_add(ONE, &extra);
    }
    Err(Error::IterationDivergence { residual: last_residual })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.into_iter().zip(w).map(|(x, w)| (mid + half * x, half * w)).collect()
}

/// One fourth-order Magnus step for `i dU/ds = G(s) U` over `[s, s + h]`,
/// from `G` at the two Gauss points `s + (1/2 ∓ √3/6) h`. Returns `exp(−iΩ)`.
pub fn magnus4_step(g1: &Array2<C64>, g2: &Array2<C64>, h: f64) -> Result<Array2<C64>> {
    let comm = g2.dot(g1) - g1.dot(g2);
    let c = 3f64.sqrt() * h * h / 12.0;
    let m = (g1 + g2).mapv(|x| x * (0.5 * h)) - comm.mapv(|x| x * I * c);
    expm_hermitian(&m, 1.0)
}

/// Gauss points of [`magnus4_step`] on `[s, s + h]`.
pub fn magnus4_nodes(s: f64, h: f64) -> (f64, f64) {
    let d = 3f64.sqrt() / 6.0;
    (s + (0.5 - d) * h, s + (0.5 + d) * h)
}

/// `‖U*U − 1‖_max`.
pub fn unitarity_defect(u: &Array2<C64>) -> f64 {
    let g = dagger(u).dot(u) - Array2::<C64>::eye(u.ncols());
    dense_max_abs(&g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn evolve_linear_drive(steps: usize) -> Array2<C64> {
        let a = ndarray::array![[ONE, C64::new(0.3, 0.2)], [C64::new(0.3, -0.2), -ONE]];
        let b = ndarray::array![[C64::new(0.5, 0.0), I], [-I, C64::new(-0.2, 0.0)]];
        let g = |s: f64| &a + &b.mapv(|x| x * (3.0 * s));
        let h = 1.0 / steps as f64;
        let mut u = Array2::<C64>::eye(2);
        for n in 0..steps {
            let (s1, s2) = magnus4_nodes(n as f64 * h, h);
            u = magnus4_step(&g(s1), &g(s2), h).unwrap().dot(&u);
        }
        u
    }

    #[test]
    fn magnus_step_is_fourth_order_and_unitary() {
        let reference = evolve_linear_drive(2048);
        let e1 = dense_max_abs(&(evolve_linear_drive(8) - &reference));
        let e2 = dense_max_abs(&(evolve_linear_drive(16) - &reference));
        let order = (e1 / e2).log2();
        assert!(order > 3.6, "observed order {order}");
        assert!(unitarity_defect(&reference) < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16] {
            let rule = gauss_legendre_on(n, 0.0, 2.0);
            for deg in 0..(2 * n) {
                let q: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-12 * exact.max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn csr_products_match_dense() {
        let a = CsrMatrix::from_triplets(3, 3, [(0, 1, ONE), (1, 2, I), (2, 0, C64::new(2.0, 0.0)), (0, 1, ONE)]);
        let b = CsrMatrix::from_triplets(3, 3, [(1, 1, C64::new(0.5, 1.0)), (2, 2, ONE), (0, 2, I)]);
        let dense = a.to_dense().dot(&b.to_dense());
        assert!(dense_max_abs(&(&a.matmul(&b).to_dense() - &dense)) < 1e-15);
        assert!(dense_max_abs(&(&a.mul_dense(&b.to_dense()) - &dense)) < 1e-15);
        assert!(dense_max_abs(&(&b.left_mul_dense(&a.to_dense()) - &dense)) < 1e-15);
        assert_eq!(a.get(0, 1), C64::new(2.0, 0.0));
        assert!(dense_max_abs(&(&a.adjoint().to_dense() - &dagger(&a.to_dense()))) < 1e-15);
    }

    #[test]
    fn lanczos_finds_lowest_of_chain() {
        let n = 200;
        let trip = (0..n).flat_map(|i| {
            let j = (i + 1) % n;
            [(i, j, -ONE), (j, i, -ONE)]
        });
        let h = CsrMatrix::from_triplets(n, n, trip);
        let res = lanczos_lowest(|v| h.matvec(v), n, 1, 1e-10, 1).unwrap();
        assert!((res.eigenvalues[0] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn op_norm_of_diagonal() {
        let m = Array2::from_diag(&Array1::from(vec![C64::new(1.0, 0.0), C64::new(-3.0, 0.0), I]));
        assert!((dense_op_norm(&m) - 3.0).abs() < 1e-9);
        let big = Array2::from_shape_fn((20, 20), |(i, j)| if i == j { C64::new(i as f64, 0.0) } else { ZERO });
        assert!((dense_op_norm(&big) - 19.0).abs() < 1e-6);
    }

    #[test]
    fn complex_eigenvectors_satisfy_eigen_equation() {
        let m = Array2::from_shape_fn((5, 5), |(i, j)| C64::new((i * j) as f64 * 0.1, i as f64 - j as f64));
        let (e, v) = hermitian_eigh(&m).unwrap();
        let h = (&m + &dagger(&m)).mapv(|x| x * 0.5);
        for k in 0..5 {
            let r = h.dot(&v.column(k)) - v.column(k).mapv(|x| x * e[k]);
            assert!(vec_norm(r.view()) < 1e-12);
        }
    }

    #[test]
    fn hermitian_exponential_is_unitary() {
        let m = Array2::from_shape_fn((4, 4), |(i, j)| C64::new((i + j) as f64, i as f64 - j as f64));
        let u = expm_hermitian(&m, 0.7).unwrap();
        let id = Array2::<C64>::eye(4);
        assert!(dense_max_abs(&(&dagger(&u).dot(&u) - &id)) < 1e-12);
    }
}
