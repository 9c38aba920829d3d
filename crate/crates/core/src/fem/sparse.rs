use std::io::Write;

/// Symmetric sparse matrix, upper triangle stored in compressed columns.
///
/// Column `j` holds rows `i <= j` in increasing order. Only one copy of
/// each off-diagonal pair is stored, so the matrix is symmetric exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn identity(n: usize) -> Self {
        SymmetricMatrix {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)` of the full matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(pos) => self.values[self.col_ptr[c] + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x` with the full symmetric matrix.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "matvec dimension");
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                if i == j {
                    acc += v * xj;
                } else {
                    y[i] += v * xj;
                    acc += v * x[i];
                }
            }
            y[j] += acc;
        }
        y
    }

    /// `alpha * self + beta * other`; both must share a dimension.
    pub fn linear_combination(&self, alpha: f64, other: &SymmetricMatrix, beta: f64) -> Self {
        assert_eq!(self.n, other.n, "matrix dimension");
        let mut builder = TripletBuilder::new(self.n);
        for (m, s) in [(self, alpha), (other, beta)] {
            for j in 0..m.n {
                for p in m.col_ptr[j]..m.col_ptr[j + 1] {
                    builder.push(m.row_idx[p], j, s * m.values[p]);
                }
            }
        }
        builder.build()
    }

    /// Coordinate-format dump, one `i j value` line per stored (upper) entry.
    pub fn write_coordinates<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                writeln!(out, "{} {} {:?}", self.row_idx[p], j, self.values[p])?;
            }
        }
        Ok(())
    }
}

/// Accumulates `(i, j, value)` contributions into a [`SymmetricMatrix`].
///
/// Duplicates are summed in insertion order, so assembly is deterministic.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Adds `value` to entry `(i, j)` (and, implicitly, `(j, i)`).
    pub fn push(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((c, r, value));
    }

    pub fn build(mut self) -> SymmetricMatrix {
        self.entries.sort_by_key(|&(c, r, _)| (c, r));
        let mut col_ptr = vec![0usize; self.n + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in self.entries {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((c, r));
            }
        }
        for j in 0..self.n {
            col_ptr[j + 1] += col_ptr[j];
        }
        SymmetricMatrix {
            n: self.n,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// An assembled linear system `A x = b` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: SymmetricMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn dimension(&self) -> usize {
        self.matrix.dimension()
    }

    /// `||A x - b|| / ||b||`, or `||A x||` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: f64 = ax
            .iter()
            .zip(&self.rhs)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        let b = norm2(&self.rhs);
        if b > 0.0 {
            r / b
        } else {
            r
        }
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
