use serde::{Deserialize, Serialize};

use crate::error::TensorError;

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a matrix from row slices. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::Shape {
                    op: "from_rows",
                    left: vec![rows.len(), cols],
                    right: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as a matrix: rank-1 tensors are a single row,
    /// higher ranks fold trailing dimensions into the column count.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[0], self.shape[1..].iter().product()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, cols) = self.matrix_dims();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out += x0·r0 + x1·r1 + x2·r2 + x3·r3`, four rows fused per pass.
#[inline]
fn axpy4(out: &mut [f64], x: [f64; 4], r: [&[f64]; 4]) {
    for ((((o, &b0), &b1), &b2), &b3) in out.iter_mut().zip(r[0]).zip(r[1]).zip(r[2]).zip(r[3]) {
        *o += x[0] * b0 + x[1] * b1 + x[2] * b2 + x[3] * b3;
    }
}

#[inline]
fn axpy(out: &mut [f64], x: f64, r: &[f64]) {
    for (o, &b) in out.iter_mut().zip(r) {
        *o += x * b;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ac = a.chunks_exact(4);
    let bc = b.chunks_exact(4);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[m×n] = a[m×k] · b[k×n]`, accumulating into `out`.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let row = |p: usize| &b[p * n..(p + 1) * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut p = 0;
        while p + 4 <= k {
            let x = [a_row[p], a_row[p + 1], a_row[p + 2], a_row[p + 3]];
            axpy4(out_row, x, [row(p), row(p + 1), row(p + 2), row(p + 3)]);
            p += 4;
        }
        for q in p..k {
            axpy(out_row, a_row[q], row(q));
        }
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`, accumulating into `out`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut j = 0;
        while j + 4 <= n {
            let r = |q: usize| &b[(j + q) * k..(j + q + 1) * k];
            let (r0, r1, r2, r3) = (r(0), r(1), r(2), r(3));
            let mut acc = [0.0f64; 4];
            for p in 0..k {
                let x = a_row[p];
                acc[0] += x * r0[p];
                acc[1] += x * r1[p];
                acc[2] += x * r2[p];
                acc[3] += x * r3[p];
            }
            for q in 0..4 {
                out_row[j + q] += acc[q];
            }
            j += 4;
        }
        for q in j..n {
            out_row[q] += dot(a_row, &b[q * k..(q + 1) * k]);
        }
    }
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`, accumulating into `out`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let row = |i: usize| &b[i * n..(i + 1) * n];
    let mut i = 0;
    while i + 4 <= m {
        let r = [row(i), row(i + 1), row(i + 2), row(i + 3)];
        for p in 0..k {
            let x = [a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]];
            axpy4(&mut out[p * n..(p + 1) * n], x, r);
        }
        i += 4;
    }
    for q in i..m {
        for p in 0..k {
            axpy(&mut out[p * n..(p + 1) * n], a[q * k + p], row(q));
        }
    }
}
