use crate::{Error, Result};

/// Dense row-major array of f64, rank <= 2.
///
/// Scalars are 1x1, vectors are n x 1. A matrix with `cols > 1` is used both
/// for weight matrices and for "stacks" of column vectors processed together.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                detail: format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Value of a 1x1 tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::Shape {
                op: "scalar_value",
                detail: format!("expected 1x1, got {}x{}", self.rows, self.cols),
            });
        }
        Ok(self.data[0])
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Copies column `c` into a fresh vector tensor.
    pub fn col_vector(&self, c: usize) -> Tensor {
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = self.data[r * self.cols + c];
        }
        Tensor::vector(out)
    }

    /// New matrix whose columns are `self`'s columns at `idxs`, in order.
    pub fn gather_cols(&self, idxs: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(self.rows, idxs.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (j, &c) in idxs.iter().enumerate() {
                dst[j] = src[c];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squared entries (squared Frobenius norm).
    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other` (shapes must match).
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &Tensor, c: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self * other` for row-major operands.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            (self.cols as isize, 1),
            &other.data,
            (other.cols as isize, 1),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self * other^T`; `other` is n x k, result is m x n.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_nt",
                detail: format!(
                    "{}x{} * ({}x{})^T",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            &self.data,
            (self.cols as isize, 1),
            &other.data,
            (1, other.cols as isize),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self^T * other`; `self` is m x k, result is k x n.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "matmul_tn",
                detail: format!(
                    "({}x{})^T * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Tensor::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            &self.data,
            (1, self.cols as isize),
            &other.data,
            (other.cols as isize, 1),
            &mut out.data,
        );
        Ok(out)
    }
}

/// C = A * B with explicit (row, col) strides for A and B; C is row-major.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: strides describe in-bounds layouts of `a` (m x k) and `b`
    // (k x n); `c` has exactly m*n elements and does not alias a or b.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
