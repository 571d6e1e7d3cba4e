//! Small dense linear algebra kernels: a row-major matrix type, fixed-order
//! pairwise reductions, and symmetric eigensolvers (implicit-shift QL on
//! tridiagonal matrices, Householder reduction for dense ones).
//!
//! Everything here is deterministic: summations use a fixed-order pairwise
//! reduction so results do not depend on thread count or chunk scheduling.

use crate::error::{Error, Result};

const PAIRWISE_BASE: usize = 64;

/// Sum of a slice by fixed-order pairwise (cascade) reduction.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        xs.iter().sum()
    } else {
        let (lo, hi) = xs.split_at(xs.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Dot product with the same pairwise reduction order as [`pairwise_sum`].
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pairwise_dot length mismatch");
    if a.len() <= PAIRWISE_BASE {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        let mid = a.len() / 2;
        let (a0, a1) = a.split_at(mid);
        let (b0, b1) = b.split_at(mid);
        pairwise_dot(a0, b0) + pairwise_dot(a1, b1)
    }
}

/// Pairwise reduction of `f(start..end)` without materializing the terms.
pub fn pairwise_map_sum<F: Fn(usize) -> f64>(start: usize, end: usize, f: &F) -> f64 {
    let n = end - start;
    if n <= PAIRWISE_BASE {
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        acc
    } else {
        let mid = start + n / 2;
        pairwise_map_sum(start, mid, f) + pairwise_map_sum(mid, end, f)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    /// `self += c * v vᵀ` for a square matrix.
    pub fn add_scaled_outer(&mut self, v: &[f64], c: f64) {
        assert_eq!(self.rows, v.len());
        assert_eq!(self.cols, v.len());
        for i in 0..self.rows {
            let ci = c * v[i];
            for j in 0..self.cols {
                self[(i, j)] += ci * v[j];
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Mat {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= c;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        pairwise_map_sum(0, self.data.len(), &|i| self.data[i] * self.data[i]).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn symmetrized(&self) -> Mat {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix: `values[j]` pairs with column
/// `j` of `vectors`, eigenvalues sorted ascending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// Eigendecomposition of a symmetric tridiagonal matrix by implicit-shift QL
/// with full eigenvector accumulation.
///
/// `offdiag[i]` couples `diag[i]` and `diag[i + 1]`. Exact eigenvalue ties in
/// the output are rejected: for the Jacobi matrices this solver is used on,
/// positive off-diagonal entries make ties impossible in exact arithmetic, so
/// a tie signals a broken factorization upstream.
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> Result<SymmetricEigen> {
    let n = diag.len();
    assert_eq!(
        offdiag.len(),
        n.saturating_sub(1),
        "offdiag must have n-1 entries"
    );
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    let eig = ql_implicit(diag.to_vec(), e, Mat::identity(n))?;
    for i in 1..n {
        if eig.values[i] == eig.values[i - 1] {
            return Err(Error::EigenvalueTie {
                index: i,
                value: eig.values[i],
            });
        }
    }
    Ok(eig)
}

/// Eigendecomposition of a dense symmetric matrix: Householder reduction to
/// tridiagonal form followed by the implicit-shift QL iteration. Repeated
/// eigenvalues are allowed here.
pub fn symmetric_eigen(a: &Mat) -> Result<SymmetricEigen> {
    assert_eq!(a.rows(), a.cols(), "symmetric_eigen needs a square matrix");
    let (d, e, z) = householder_tridiagonalize(a);
    ql_implicit(d, e, z)
}

/// Implicit-shift QL on tridiagonal (d, e) with accumulation into `z`.
/// `e[i]` couples `d[i]` and `d[i+1]`; `e[n-1]` is scratch. The total
/// iteration budget is 50 per matrix row.
fn ql_implicit(mut d: Vec<f64>, mut e: Vec<f64>, mut z: Mat) -> Result<SymmetricEigen> {
    let n = d.len();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: d,
            vectors: z,
        });
    }
    e[n - 1] = 0.0;

    let budget = 50 * n;
    let mut iterations = 0usize;
    let eps = f64::EPSILON;
    let mut f_acc = 0.0;
    let mut tst1 = 0.0_f64;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        loop {
            let mut m = l;
            while m < n - 1 {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > budget {
                return Err(Error::EigenNonConvergence { iterations });
            }

            // Wilkinson shift, applied implicitly.
            let g = d[l];
            let mut p = (d[l + 1] - g) / (2.0 * e[l]);
            let mut r = p.hypot(1.0);
            if p < 0.0 {
                r = -r;
            }
            d[l] = e[l] / (p + r);
            d[l + 1] = e[l] * (p + r);
            let dl1 = d[l + 1];
            let mut h = g - d[l];
            for item in d.iter_mut().take(n).skip(l + 2) {
                *item -= h;
            }
            f_acc += h;

            // Implicit QL sweep from m down to l.
            p = d[m];
            let mut c = 1.0;
            let mut c2 = c;
            let mut c3 = c;
            let el1 = e[l + 1];
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in (l..m).rev() {
                c3 = c2;
                c2 = c;
                s2 = s;
                let gg = c * e[i];
                h = c * p;
                r = p.hypot(e[i]);
                e[i + 1] = s * r;
                s = e[i] / r;
                c = p / r;
                p = c * d[i] - s * gg;
                d[i + 1] = h + s * (c * gg + s * d[i]);

                for k in 0..n {
                    h = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * h;
                    z[(k, i)] = c * z[(k, i)] - s * h;
                }
            }
            p = -s * s2 * c3 * el1 * e[l] / dl1;
            e[l] = s * p;
            d[l] = c * p;

            if e[l].abs() <= eps * tst1 {
                break;
            }
        }
        d[l] += f_acc;
        e[l] = 0.0;
    }

    // Sort eigenpairs ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("NaN eigenvalue"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (jn, &jo) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, jn)] = z[(i, jo)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Householder reduction of a dense symmetric matrix to tridiagonal form,
/// accumulating the orthogonal transformation. Returns `(d, e, v)` with
/// `e[i]` coupling `d[i]` and `d[i+1]` and `a = v * tridiag(d, e) * vᵀ`.
fn householder_tridiagonalize(a: &Mat) -> (Vec<f64>, Vec<f64>, Mat) {
    let n = a.rows();
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let fj = d[j];
                let gj = e[j];
                for k in j..i {
                    v[(k, j)] -= fj * e[k] + gj * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the Householder transformations.
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;

    // Shift the subdiagonal to couple (i, i+1).
    let mut e_out = vec![0.0; n];
    e_out[..n - 1].copy_from_slice(&e[1..n]);
    (d, e_out, v)
}
