//! Symmetric sparse storage and the linear solves of the Galerkin step.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric matrix in compressed-row form holding both triangles.
///
/// The pattern is fixed at construction and always contains the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix whose pattern couples every pair inside each group.
    pub fn from_groups<I, G>(n: usize, groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = G>,
        G: AsRef<[usize]>,
    {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for g in groups {
            let g = g.as_ref();
            for &i in g {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
                rows[i].extend_from_slice(g);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Ok(SymMatrix { n, row_ptr, cols, vals })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        let n = a.nrows();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
                    cols.push(j);
                    vals.push(a[(i, j)]);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SymMatrix { n, row_ptr, cols, vals })
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n {
            return 0.0;
        }
        self.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Adds `v` to entry `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: self.n });
        }
        match self.position(i, j) {
            Some(k) => {
                self.vals[k] += v;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("entry ({i}, {j}) is outside the sparsity pattern"))),
        }
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    /// `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Zeroes row and column `i` and puts 1 on the diagonal.
    pub fn constrain(&mut self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        for k in lo..hi {
            let j = self.cols[k];
            self.vals[k] = if j == i { 1.0 } else { 0.0 };
            if j != i {
                if let Some(kk) = self.position(j, i) {
                    self.vals[kk] = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Leading principal block of size `k`.
    pub fn leading(&self, k: usize) -> SymMatrix {
        let k = k.min(self.n);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..k {
            for (j, v) in self.row(i) {
                if j < k {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SymMatrix { n: k, row_ptr, cols, vals }
    }

    /// Dense block `A[rows, cols]` for index ranges.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(rows.len(), cols.len());
        for (r, i) in rows.clone().enumerate() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    b[(r, j - cols.start)] = v;
                }
            }
        }
        b
    }

    /// Reverse Cuthill-McKee ordering of the pattern; `perm[new] = old`.
    pub fn rcm_ordering(&self) -> Vec<usize> {
        let degree: Vec<usize> = (0..self.n).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect();
        let mut seen = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        let mut by_degree: Vec<usize> = (0..self.n).collect();
        by_degree.sort_by_key(|&i| (degree[i], i));
        for &start in &by_degree {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                order.push(i);
                let mut next: Vec<usize> = self.row(i).map(|(j, _)| j).filter(|&j| !seen[j]).collect();
                next.sort_by_key(|&j| (degree[j], j));
                for j in next {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }
}

/// Largest dimension factored densely.
pub const DENSE_LIMIT: usize = 600;

/// How `solve_linear` obtained its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Zero,
    DenseCholesky,
    SkylineCholesky,
    PseudoInverse,
}

/// Solves `A c = B`: Cholesky when every pivot clears `tau * max diag`,
/// otherwise an eigenvalue pseudo-inverse with relative cutoff `tau`.
pub fn solve_linear(a: &SymMatrix, b: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    Ok(solve_linear_with_path(a, b, tau)?.0)
}

pub fn solve_linear_with_path(a: &SymMatrix, b: &DVector<f64>, tau: f64) -> Result<(DVector<f64>, SolvePath)> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.len() });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("regularisation must be finite and >= 0, got {tau}")));
    }
    if a.max_abs() == 0.0 {
        if b.amax() != 0.0 {
            return Err(Error::NoSolution("matrix is zero but right-hand side is not".into()));
        }
        return Ok((DVector::zeros(b.len()), SolvePath::Zero));
    }
    let floor = tau * a.max_diagonal();
    if a.dim() <= DENSE_LIMIT {
        let dense = a.to_dense();
        if let Some(l) = dense_cholesky(&dense, floor) {
            let solve = |r: &DVector<f64>| {
                let y = l.solve_lower_triangular(r).expect("nonzero pivots");
                l.tr_solve_lower_triangular(&y).expect("nonzero pivots")
            };
            let mut c = solve(b);
            let r = b - &dense * &c;
            c += solve(&r);
            return Ok((c, SolvePath::DenseCholesky));
        }
        return Ok((pseudo_inverse_solve(dense, b, tau), SolvePath::PseudoInverse));
    }
    if let Some(sky) = Skyline::factor(a, floor) {
        let mut c = sky.solve(b);
        let r = b - a.mul_vec(&c);
        c += sky.solve(&r);
        return Ok((c, SolvePath::SkylineCholesky));
    }
    Ok((pseudo_inverse_solve(a.to_dense(), b, tau), SolvePath::PseudoInverse))
}

fn dense_cholesky(a: &DMatrix<f64>, floor: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn pseudo_inverse_solve(a: DMatrix<f64>, b: &DVector<f64>, tau: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.amax();
    let mut c = DVector::zeros(b.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > tau * top {
            let v = eig.eigenvectors.column(k);
            c += v * (v.dot(b) / lambda);
        }
    }
    c
}

/// Variable-band Cholesky factor after a bandwidth-reducing permutation.
struct Skyline {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
}

impl Skyline {
    fn factor(a: &SymMatrix, floor: f64) -> Option<Skyline> {
        let n = a.dim();
        let perm = a.rcm_ordering();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first: Vec<usize> = (0..n)
            .map(|i| a.row(perm[i]).map(|(j, _)| inv[j]).min().unwrap_or(i).min(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut l = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv[j];
                if jj <= i {
                    l[start[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            for j in first[i]..=i {
                let k0 = first[i].max(first[j]);
                let ri = start[i] + k0 - first[i];
                let rj = start[j] + k0 - first[j];
                let len = j - k0;
                let dot: f64 = l[ri..ri + len].iter().zip(&l[rj..rj + len]).map(|(x, y)| x * y).sum();
                let idx = start[i] + j - first[i];
                let s = l[idx] - dot;
                if j < i {
                    l[idx] = s / l[start[j + 1] - 1];
                } else {
                    if !(s > floor) || s <= 0.0 {
                        return None;
                    }
                    l[idx] = s.sqrt();
                }
            }
        }
        Some(Skyline { perm, first, start, l })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let row = &self.l[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            let s: f64 = row[..i - f].iter().zip(&y[f..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - f];
        }
        for i in (0..n).rev() {
            let row = &self.l[self.start[i]..self.start[i + 1]];
            let f = self.first[i];
            y[i] /= row[i - f];
            let yi = y[i];
            for (k, a) in row[..i - f].iter().enumerate() {
                y[f + k] -= a * yi;
            }
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
