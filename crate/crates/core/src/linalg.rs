//! Dense row-major matrices and the handful of vector kernels the rest of
//! the crate is built on.
//!
//! The only performance-critical kernel is the matrix-vector product (and
//! its transpose); both walk the weight matrix row by row over contiguous
//! memory and allocate nothing.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a flat row-major buffer. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(out.len(), self.rows, "matvec output length");
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out = Aᵀ v`, accumulated row by row so memory access stays contiguous.
    pub fn matvec_t(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.rows, "matvec_t input length");
        assert_eq!(out.len(), self.cols, "matvec_t output length");
        out.fill(0.0);
        for (r, &s) in v.iter().enumerate() {
            axpy(s, self.row(r), out);
        }
    }
}

/// Dot product with four independent accumulators so the compiler can keep
/// the loop in vector registers.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Conjugate gradient on a symmetric positive-definite system `M x = b`,
/// where `apply` computes `out = M v`.
///
/// Converges when `‖b − M x‖ ≤ rel_tol · ‖b‖`; errors out with the final
/// residual if `max_iters` matvecs are not enough.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<CgSolution>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }

    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "warm start length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];

    for iter in 0..max_iters {
        if rr.sqrt() <= rel_tol * b_norm {
            return Ok(CgSolution {
                x,
                iterations: iter,
                rel_residual: rr.sqrt() / b_norm,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::numeric(format!(
                "conjugate gradient: curvature pᵀMp = {pap} is not positive"
            )));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }

    let rel = rr.sqrt() / b_norm;
    if rel <= rel_tol {
        return Ok(CgSolution {
            x,
            iterations: max_iters,
            rel_residual: rel,
        });
    }
    Err(Error::numeric(format!(
        "conjugate gradient stalled: relative residual {rel:.3e} > {rel_tol:.1e} after {max_iters} iterations"
    )))
}
