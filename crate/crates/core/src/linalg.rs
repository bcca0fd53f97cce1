//! Small dense linear algebra: row-major matrices and Householder QR with
//! column pivoting.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| {
                let mut acc = T::zero();
                for (&a, &b) in row.iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `A P = Q R` with `|R₀₀| ≥ |R₁₁| ≥ …`.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    rows: usize,
    cols: usize,
    // column-major copy of R in the upper triangle
    r: Vec<Vec<T>>,
    reflectors: Vec<(Vec<T>, T)>,
    perm: Vec<usize>,
}

impl<T: Real> PivotedQr<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::new();
        let steps = m.min(n);
        for k in 0..steps {
            // pivot: largest trailing column norm
            let norm_sq = |c: &Vec<T>| c[k..].iter().fold(T::zero(), |s, &v| s + v * v);
            let mut best = k;
            let mut best_norm = norm_sq(&cols[k]);
            for (j, c) in cols.iter().enumerate().skip(k + 1) {
                let nj = norm_sq(c);
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            cols.swap(k, best);
            perm.swap(k, best);

            let norm = best_norm.sqrt();
            if norm == T::zero() {
                reflectors.push((vec![T::zero(); m - k], T::zero()));
                continue;
            }
            let x0 = cols[k][k];
            let alpha = if x0 >= T::zero() { -norm } else { norm };
            let mut v: Vec<T> = cols[k][k..].to_vec();
            v[0] -= alpha;
            let vtv = v.iter().fold(T::zero(), |s, &x| s + x * x);
            let tau = if vtv == T::zero() { T::zero() } else { T::lit(2.0) / vtv };
            for c in cols.iter_mut().skip(k) {
                let dot = v.iter().zip(&c[k..]).fold(T::zero(), |s, (&a, &b)| s + a * b);
                let f = tau * dot;
                for (ci, &vi) in c[k..].iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            }
            // exact zeros below the diagonal
            cols[k][k] = alpha;
            for ci in cols[k][k + 1..].iter_mut() {
                *ci = T::zero();
            }
            reflectors.push((v, tau));
        }
        Self {
            rows: m,
            cols: n,
            r: cols,
            reflectors,
            perm,
        }
    }

    /// Absolute values of the diagonal of `R`, non-increasing.
    pub fn r_diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|k| self.r[k][k].abs()).collect()
    }

    /// Number of diagonal entries of `R` above `rtol · |R₀₀|`.
    pub fn rank(&self, rtol: T) -> usize {
        let d = self.r_diagonal();
        match d.first() {
            None => 0,
            Some(&d0) if d0 == T::zero() => 0,
            Some(&d0) => d.iter().take_while(|&&v| v > rtol * d0).count(),
        }
    }

    pub fn apply_qt(&self, b: &[T]) -> Vec<T> {
        let mut y = b.to_vec();
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            let dot = v.iter().zip(&y[k..]).fold(T::zero(), |s, (&a, &b)| s + a * b);
            let f = *tau * dot;
            for (yi, &vi) in y[k..].iter_mut().zip(v) {
                *yi -= f * vi;
            }
        }
        y
    }

    /// Basic least-squares solution using the leading `rank` columns; the
    /// remaining (pivoted) unknowns are set to zero.
    pub fn solve(&self, b: &[T], rank: usize) -> Vec<T> {
        let y = self.apply_qt(b);
        let mut z = vec![T::zero(); self.cols];
        for i in (0..rank).rev() {
            let mut s = y[i];
            for j in i + 1..rank {
                s -= self.r[j][i] * z[j];
            }
            z[i] = s / self.r[i][i];
        }
        let mut x = vec![T::zero(); self.cols];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}
