use crate::error::{Error, Result};

/// Dense row-major f32 matrix; rows are tokens (or pixels), columns features.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// `self · wᵀ + b` where `w` is `out × in`.
    pub fn linear(&self, w: &Mat, b: &[f32]) -> Result<Mat> {
        if w.cols != self.cols || b.len() != w.rows {
            return Err(Error::invalid(format!(
                "linear layer {}x{} (bias {}) cannot consume width {}",
                w.rows,
                w.cols,
                b.len(),
                self.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, w.rows);
        for r in 0..self.rows {
            let x = self.row(r);
            let o = out.row_mut(r);
            for (j, oj) in o.iter_mut().enumerate() {
                let wr = w.row(j);
                let mut acc = 0.0f32;
                for (a, bb) in x.iter().zip(wr) {
                    acc += a * bb;
                }
                *oj = acc + b[j];
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn check_same(&self, other: &Mat) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Mat {
        Mat {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn vstack(parts: &[&Mat]) -> Result<Mat> {
        let cols = parts.first().map(|m| m.cols).unwrap_or(0);
        if parts.iter().any(|m| m.cols != cols) {
            return Err(Error::invalid("cannot stack matrices of different widths"));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn mean_rows(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.cols];
        for r in 0..self.rows {
            for (a, v) in acc.iter_mut().zip(self.row(r)) {
                *a += *v as f64;
            }
        }
        acc.iter().map(|a| (*a / self.rows.max(1) as f64) as f32).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn gelu(x: f32) -> f32 {
    // tanh approximation
    const C: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn relu(x: f32) -> f32 {
    x.max(0.0)
}

pub fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place numerically stable softmax.
pub fn softmax(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
