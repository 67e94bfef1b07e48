//! Minimal dense linear algebra: row-major matrices and a Cholesky solver.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn select_columns(&self, columns: &[usize]) -> DenseMatrix {
        let data = self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .flat_map(|r| columns.iter().map(move |&j| r[j]))
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: columns.len(),
            data,
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: DenseMatrix,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.cols,
            });
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let diag = a[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {j} = {diag:e})"
                )));
            }
            let d = diag.sqrt();
            l.data[j * n + j] = d;
            for i in (j + 1)..n {
                let dot: f64 = {
                    let li = &l.data[i * n..i * n + j];
                    let lj = &l.data[j * n..j * n + j];
                    li.iter().zip(lj).map(|(x, y)| x * y).sum()
                };
                l.data[i * n + j] = (a[(i, j)] - dot) / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn from_lower(lower: DenseMatrix) -> Result<Self> {
        if lower.rows != lower.cols {
            return Err(Error::DimensionMismatch {
                expected: lower.rows,
                got: lower.cols,
            });
        }
        // Written to also reject NaN.
        if (0..lower.rows)
            .any(|i| lower[(i, i)].partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Numerical(
                "Cholesky factor has a non-positive diagonal".into(),
            ));
        }
        Ok(Self { lower })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = l.row(i);
            let s: f64 = row[..i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }
}
