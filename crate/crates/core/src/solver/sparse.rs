//! Compressed sparse row storage and Jacobi-preconditioned conjugate
//! gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sorted column pattern per row.
    pub fn from_pattern(pattern: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(pattern.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in pattern {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            nrows: pattern.len(),
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Panics if `(i, j)` is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `b − A x` with each row accumulated in twice the working precision
    /// (error-free products and sums), so the result is accurate even when
    /// it is far below `‖A‖‖x‖`.
    pub fn residual_compensated(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                let (mut s, mut err) = (b[i], 0.0);
                for (j, a) in self.row(i) {
                    let p = -a * x[j];
                    let p_err = (-a).mul_add(x[j], -p);
                    let t = s + p;
                    let z = t - s;
                    err += (s - (t - z)) + (p - z) + p_err;
                    s = t;
                }
                s + err
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// Linear combination `a·self + b·other`; both must share a pattern.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.col_idx, other.col_idx, "sparsity patterns differ");
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o = a * *o + b * v;
        }
        out
    }

    /// Principal submatrix on `keep` (sorted indices).
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.nrows];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative true residual `‖b − Ax‖ / ‖b‖` at exit.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`, stopping at
/// relative residual `tol`. The recursive residual drives the iteration; on
/// apparent convergence the true residual is recomputed and the iteration is
/// restarted from the current iterate if it has drifted above `tol`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.nrows();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut ap = vec![0.0; n];

    loop {
        // (Re)start from the true residual.
        a.mul_vec_into(&x, &mut ap);
        let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
        let true_res = norm2(&r) / b_norm;
        if true_res <= tol {
            return Ok(CgOutcome {
                x,
                iterations,
                residual: true_res,
            });
        }
        if iterations >= max_iter {
            history.push(true_res);
            return Err(Error::NumericalFailure {
                message: format!("conjugate gradients did not converge in {max_iter} iterations"),
                final_residual: true_res,
                residuals: history,
            });
        }

        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            let res = norm2(&r) / b_norm;
            history.push(res);
            if res <= tol {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}
