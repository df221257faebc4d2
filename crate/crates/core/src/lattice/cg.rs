//! Matrix-free conjugate gradients for symmetric positive definite field maps.

use super::field::{dot, ScalarField};
use super::grid::Grid;
use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradient settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateGradient {
    pub tol: f64,
    pub max_iter: usize,
}

impl ConjugateGradient {
    /// Iteration cap defaults to `10 * N^n`.
    pub fn for_grid(grid: &Grid, tol: f64) -> Self {
        Self {
            tol,
            max_iter: 10 * grid.len(),
        }
    }

    /// Solves `op(x) = rhs`, starting from `guess` when given. `op` writes its
    /// result into the second argument.
    pub fn solve<A>(
        &self,
        op: A,
        rhs: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, CgReport)>
    where
        A: Fn(&[f64], &mut [f64]),
    {
        let n = rhs.len();
        let b_norm = dot(rhs, rhs).sqrt();
        if b_norm == 0.0 {
            return Ok((
                vec![0.0; n],
                CgReport {
                    iterations: 0,
                    relative_residual: 0.0,
                },
            ));
        }
        let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut ax = vec![0.0; n];
        let mut r = rhs.to_vec();
        if guess.is_some() {
            op(&x, &mut ax);
            for (ri, ai) in r.iter_mut().zip(&ax) {
                *ri -= ai;
            }
        }
        let mut rr = dot(&r, &r);
        let target = self.tol * b_norm;
        if rr.sqrt() <= target {
            return Ok((
                x,
                CgReport {
                    iterations: 0,
                    relative_residual: rr.sqrt() / b_norm,
                },
            ));
        }
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        for it in 1..=self.max_iter {
            op(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "operator not positive definite (p.Ap = {pap:e}) at CG iteration {it}"
                )));
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= target {
                return Ok((
                    x,
                    CgReport {
                        iterations: it,
                        relative_residual: rr_new.sqrt() / b_norm,
                    },
                ));
            }
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        Err(Error::CgNotConverged {
            iterations: self.max_iter,
            residual: rr.sqrt() / b_norm,
        })
    }
}

/// Solves `op(x) = rhs` to relative residual `tol` with the default iteration cap.
pub fn cg_solve<A>(grid: &Grid, op: A, rhs: &ScalarField, tol: f64) -> Result<ScalarField>
where
    A: Fn(&[f64], &mut [f64]),
{
    check_finite(rhs.values(), "cg_solve rhs")?;
    let (x, _) = ConjugateGradient::for_grid(grid, tol).solve(op, rhs.values(), None)?;
    Ok(ScalarField::from_vec_unchecked(x))
}
