use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dot products and norms reduce fixed-size chunks in order, so results do
/// not depend on the rayon thread count.
const CHUNK: usize = 4096;
const ROW_BLOCK: usize = 512;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn row_dot(&self, i: usize, x: &[T]) -> T {
        let (cols, vals) = self.row(i);
        let mut acc = T::zero();
        for (c, v) in cols.iter().zip(vals) {
            acc += *v * x[*c as usize];
        }
        acc
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        y.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(blk, out)| {
            let base = blk * ROW_BLOCK;
            for (k, yi) in out.iter_mut().enumerate() {
                *yi = self.row_dot(base + k, x);
            }
        });
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .position(|&c| c as usize == i)
                    .map_or(T::zero(), |p| vals[p])
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.iter()
            .position(|&c| c as usize == j)
            .map_or(T::zero(), |p| vals[p])
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let partial: Vec<T> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| {
            let mut acc = T::zero();
            for (p, q) in x.iter().zip(y) {
                acc += *p * *q;
            }
            acc
        })
        .collect();
    partial.into_iter().fold(T::zero(), |s, v| s + v)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on the free DOFs.
///
/// `x0` carries the prescribed values at fixed DOFs (and the initial guess
/// elsewhere); fixed DOFs never change. Converges when
/// `‖r‖ ≤ tol · ‖r₀‖` with `r₀` the residual of the initial guess.
pub fn pcg<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    fixed: &[bool],
    x0: Vec<T>,
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome<T>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    assert_eq!(fixed.len(), n);
    let mut x = x0;

    let mut r = vec![T::zero(); n];
    a.mul_vec_into(&x, &mut r);
    r.par_iter_mut()
        .zip(b.par_iter())
        .zip(fixed.par_iter())
        .for_each(|((ri, bi), &f)| *ri = if f { T::zero() } else { *bi - *ri });

    let norm0 = norm(&r).as_f64();
    if norm0 == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    if !norm0.is_finite() {
        return Err(Error::Solver {
            iterations: 0,
            residual: f64::NAN,
            reason: "non-finite right-hand side".into(),
        });
    }

    let diag = a.diagonal();
    let mut inv_diag = vec![T::zero(); n];
    for i in 0..n {
        if !fixed[i] {
            if !(diag[i] > T::zero()) {
                return Err(Error::Solver {
                    iterations: 0,
                    residual: 1.0,
                    reason: format!("non-positive diagonal at DOF {i}"),
                });
            }
            inv_diag[i] = T::one() / diag[i];
        }
    }

    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(ri, di)| *ri * *di).collect();
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;

    for it in 1..=max_iters {
        a.mul_vec_into(&p, &mut q);
        q.par_iter_mut()
            .zip(fixed.par_iter())
            .for_each(|(qi, &f)| {
                if f {
                    *qi = T::zero()
                }
            });
        let pq = dot(&p, &q);
        if !(pq > T::zero()) || !pq.is_finite() {
            return Err(Error::Solver {
                iterations: it,
                residual: rel,
                reason: "search direction has non-positive curvature (singular or indefinite system)".into(),
            });
        }
        let alpha = rz / pq;
        x.par_iter_mut()
            .zip(p.par_iter())
            .for_each(|(xi, pi)| *xi += alpha * *pi);
        r.par_iter_mut()
            .zip(q.par_iter())
            .for_each(|(ri, qi)| *ri -= alpha * *qi);

        rel = norm(&r).as_f64() / norm0;
        if !rel.is_finite() {
            return Err(Error::Solver {
                iterations: it,
                residual: rel,
                reason: "residual became non-finite".into(),
            });
        }
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }

        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = *ri * *di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(pi, zi)| *pi = *zi + beta * *pi);
    }
    Err(Error::Solver {
        iterations: max_iters,
        residual: rel,
        reason: "iteration limit reached".into(),
    })
}
