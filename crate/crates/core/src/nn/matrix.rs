//! Row-major `f64` matrix with the handful of operations the trainer needs.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows * cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: n, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copies the given rows into a new matrix, in the order supplied.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// `self (n×m) · other (m×p)`.
    ///
    /// Rows of `self` are processed four at a time so each streamed row of
    /// `other` feeds four accumulator rows.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(n, p);
        let mut i = 0;
        while i + 4 <= n {
            let (a0, a1, a2, a3) =
                (self.row(i), self.row(i + 1), self.row(i + 2), self.row(i + 3));
            let (head, rest) = out.data[i * p..].split_at_mut(p);
            let (r1, rest) = rest.split_at_mut(p);
            let (r2, rest) = rest.split_at_mut(p);
            let r3 = &mut rest[..p];
            for k in 0..m {
                let b_row = &other.data[k * p..(k + 1) * p];
                let (c0, c1, c2, c3) = (a0[k], a1[k], a2[k], a3[k]);
                for j in 0..p {
                    let b = b_row[j];
                    head[j] += c0 * b;
                    r1[j] += c1 * b;
                    r2[j] += c2 * b;
                    r3[j] += c3 * b;
                }
            }
            i += 4;
        }
        while i < n {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * p..(i + 1) * p];
            for (k, &aik) in a_row.iter().enumerate().take(m) {
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += aik * b;
                }
            }
            i += 1;
        }
        out
    }

    /// `self (n×m) · otherᵀ` where `other` is `p×m`.
    ///
    /// Four dot products per pass over a row of `self`, so `other` rows are
    /// reused from cache.
    pub fn matmul_transpose_b(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose_b shape mismatch");
        let (n, m, p) = (self.rows, self.cols, other.rows);
        let mut out = Matrix::zeros(n, p);
        for i in 0..n {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * p..(i + 1) * p];
            let mut j = 0;
            while j + 4 <= p {
                let (b0, b1, b2, b3) =
                    (other.row(j), other.row(j + 1), other.row(j + 2), other.row(j + 3));
                let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
                for k in 0..m {
                    let a = a_row[k];
                    s0 += a * b0[k];
                    s1 += a * b1[k];
                    s2 += a * b2[k];
                    s3 += a * b3[k];
                }
                out_row[j] = s0;
                out_row[j + 1] = s1;
                out_row[j + 2] = s2;
                out_row[j + 3] = s3;
                j += 4;
            }
            while j < p {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out_row[j] = acc;
                j += 1;
            }
        }
        out
    }

    /// `selfᵀ · other` where `self` is `m×n` and `other` is `m×p`.
    ///
    /// Accumulates four `other` rows per pass to cut accumulator traffic.
    pub fn matmul_transpose_a(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_transpose_a shape mismatch");
        let (m, n, p) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(n, p);
        let mut k = 0;
        while k + 4 <= m {
            let (a0, a1, a2, a3) =
                (self.row(k), self.row(k + 1), self.row(k + 2), self.row(k + 3));
            let b0 = &other.data[k * p..(k + 1) * p];
            let b1 = &other.data[(k + 1) * p..(k + 2) * p];
            let b2 = &other.data[(k + 2) * p..(k + 3) * p];
            let b3 = &other.data[(k + 3) * p..(k + 4) * p];
            for i in 0..n {
                let (c0, c1, c2, c3) = (a0[i], a1[i], a2[i], a3[i]);
                let out_row = &mut out.data[i * p..(i + 1) * p];
                for j in 0..p {
                    out_row[j] += c0 * b0[j] + c1 * b1[j] + c2 * b2[j] + c3 * b3[j];
                }
            }
            k += 4;
        }
        while k < m {
            let a_row = self.row(k);
            let b_row = &other.data[k * p..(k + 1) * p];
            for (i, &aki) in a_row.iter().enumerate().take(n) {
                let out_row = &mut out.data[i * p..(i + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += aki * b;
                }
            }
            k += 1;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Squared Euclidean distance between a row of this matrix and a slice.
    pub fn row_distance_sq(&self, i: usize, other: &[f64]) -> f64 {
        self.row(i)
            .iter()
            .zip(other)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }
}
