//! Sparse symmetric linear algebra for the P1 solver: triplet assembly into
//! CSR, reverse Cuthill-McKee ordering, and an envelope (skyline) Cholesky
//! factorization that is built once and reused across many right-hand sides.

use crate::error::{Error, Result};

/// Compressed sparse row matrix (general storage, symmetric content).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets, summing duplicates.  Entries are sorted by
    /// (row, col), so construction is deterministic.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CsrMatrix {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_counts = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_counts[i + 1] += row_counts[i];
        }
        CsrMatrix {
            n,
            row_ptr: row_counts,
            col_idx,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_order(n: usize, neighbors: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |i: usize| neighbors[i].len();
    loop {
        // lowest-degree unvisited node as the component seed
        let seed = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree(i)) {
            Some(s) => s,
            None => break,
        };
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(seed);
        visited[seed] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = neighbors[u]
                .iter()
                .copied()
                .filter(|&v| !visited[v])
                .collect();
            nb.sort_unstable_by_key(|&v| (degree(v), v));
            for v in nb {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factorization of a symmetric positive
/// definite matrix.
pub struct EnvelopeChol {
    n: usize,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Start of each row's slice in `data`.
    start: Vec<usize>,
    /// Row-major envelope entries, columns `first[i]..=i`.
    data: Vec<f64>,
}

impl EnvelopeChol {
    /// Factor a CSR matrix (full symmetric storage).
    pub fn factor(a: &CsrMatrix) -> Result<EnvelopeChol> {
        let n = a.n;
        let mut first = vec![0usize; n];
        for i in 0..n {
            let mut f = i;
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j < f {
                    f = j;
                }
            }
            first[i] = f;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0f64; start[n]];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    data[start[i] + (j - first[i])] = a.values[k];
                }
            }
        }
        // Row-oriented envelope Cholesky.
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                // L[i][j] = (A[i][j] - sum_k L[i][k] L[j][k]) / L[j][j]
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + (j - fi)];
                let (head, tail) = data.split_at(start[i]);
                let row_j = &head[start[j] + (lo - fj)..start[j] + (j - fj)];
                let row_i = &tail[(lo - fi)..(j - fi)];
                for (x, y) in row_i.iter().zip(row_j.iter()) {
                    s -= x * y;
                }
                let djj = head[start[j] + (j - fj)];
                data[start[i] + (j - fi)] = s / djj;
            }
            let mut d = data[start[i] + (i - fi)];
            for k in fi..i {
                let v = data[start[i] + (k - fi)];
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "Cholesky breakdown at row {i}: pivot {d}"
                )));
            }
            data[start[i] + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeChol {
            n,
            first,
            start,
            data,
        })
    }

    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let mut s = b[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            for (k, &l) in row.iter().enumerate().take(i - fi) {
                s -= l * b[fi + k];
            }
            b[i] = s / row[i - fi];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (k, &l) in row.iter().enumerate().take(i - fi) {
                b[fi + k] -= l * xi;
            }
        }
    }
}
