//! Output least squares with Tikhonov penalty for linear maps from interior
//! unknowns to `w2` observation frames.

use super::optim::{NormalCg, OptimReport};
use crate::error::Result;
use crate::lattice::{dot, time_weights, Grid, RegionMask};

/// Linear map from unknown coordinates to observation frames. Only the `w2`
/// entries of a frame are observed.
pub(crate) trait LinearModel: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<Vec<f64>>>;
    /// Transpose for the Euclidean pairing of `w2` entries.
    fn transpose(&self, lambda: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// `J(x) = ||G x - d||^2_W + alpha ||x - x_c||^2`, where `W` carries trapezoid
/// and cell weights per frame and the penalty is the cell-weighted `L^2` norm.
pub(crate) struct Tikhonov<'a, M: LinearModel> {
    model: &'a M,
    w2: &'a [usize],
    frame_weights: Vec<f64>,
    observed: Vec<Vec<f64>>,
    cell: f64,
}

impl<'a, M: LinearModel> Tikhonov<'a, M> {
    /// `observed` holds `experiments * levels` frames, experiment-major.
    pub fn new(model: &'a M, grid: &Grid, mask: &'a RegionMask, observed: Vec<Vec<f64>>) -> Self {
        let cell = grid.cell_volume();
        let tw = time_weights(grid);
        let frame_weights = (0..observed.len()).map(|j| tw[j % tw.len()] * cell).collect();
        Self {
            model,
            w2: mask.w2_nodes(),
            frame_weights,
            observed,
            cell,
        }
    }

    pub fn observed_norm(&self) -> f64 {
        self.weighted_sq(&self.observed).sqrt()
    }

    fn weighted_sq(&self, frames: &[Vec<f64>]) -> f64 {
        frames
            .iter()
            .zip(&self.frame_weights)
            .map(|(f, w)| w * self.w2.iter().map(|&i| f[i] * f[i]).sum::<f64>())
            .sum()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut pred = self.model.apply(x)?;
        for (p, d) in pred.iter_mut().zip(&self.observed) {
            for &i in self.w2 {
                p[i] -= d[i];
            }
        }
        Ok(pred)
    }

    /// Applies `W` on `w2` entries and zeroes the rest.
    fn weigh(&self, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
        frames
            .iter()
            .zip(&self.frame_weights)
            .map(|(f, w)| {
                let mut out = vec![0.0; f.len()];
                for &i in self.w2 {
                    out[i] = w * f[i];
                }
                out
            })
            .collect()
    }

    /// `||G x - d||_W`.
    pub fn misfit(&self, x: &[f64]) -> Result<f64> {
        Ok(self.weighted_sq(&self.residual(x)?).sqrt())
    }

    pub fn objective(&self, x: &[f64], alpha: f64, center: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let r = self.residual(x)?;
        let mut value = self.weighted_sq(&r);
        let mut grad: Vec<f64> = self.model.transpose(&self.weigh(&r))?.iter().map(|g| 2.0 * g).collect();
        for (k, g) in grad.iter_mut().enumerate() {
            let dx = x[k] - center.map_or(0.0, |c| c[k]);
            value += alpha * self.cell * dx * dx;
            *g += 2.0 * alpha * self.cell * dx;
        }
        Ok((value, grad))
    }

    fn normal(&self, x: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let gx = self.model.apply(x)?;
        let mut out = self.model.transpose(&self.weigh(&gx))?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += alpha * self.cell * xi;
        }
        Ok(out)
    }

    /// Largest eigenvalue of `G^T W G` in the cell-weighted metric, by power
    /// iteration from a fixed start.
    pub fn gram_scale(&self, iterations: usize) -> Result<f64> {
        let n = self.model.dim();
        let mut x: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * ((k as f64) * 0.7).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let nrm = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
            let y = self.normal(&x, 0.0)?;
            lambda = dot(&x, &y) / self.cell;
            x = y;
            if dot(&x, &x) == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(lambda)
    }

    pub fn solve(&self, alpha: f64, center: Option<&[f64]>, x0: Option<&[f64]>, cg: &NormalCg) -> Result<OptimReport> {
        let mut rhs = self.model.transpose(&self.weigh(&self.observed))?;
        if let Some(c) = center {
            for (r, ci) in rhs.iter_mut().zip(c) {
                *r += alpha * self.cell * ci;
            }
        }
        cg.solve(|x| self.normal(x, alpha), &rhs, x0)
    }
}
