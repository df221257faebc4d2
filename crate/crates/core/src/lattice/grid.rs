use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::ScalarField;
use crate::error::{check_finite, check_len, Error, Result};

/// Construction parameters for a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    /// Spatial dimension, 1 or 2.
    pub dim: usize,
    /// Points per axis, a power of two no smaller than 8.
    pub points: usize,
    /// Period length of the box along every axis.
    pub box_length: f64,
    /// Fractional order `s`, positive and not an integer.
    pub order: f64,
    pub dt: f64,
    /// Number of time steps; the horizon is `steps * dt`.
    pub steps: usize,
}

/// Periodic lattice on `[-L/2, L/2)^n` together with the time discretization and
/// the spectral machinery for the fractional Laplacian.
///
/// The grid owns the symbol `|xi|^2` of `-Delta` on every Fourier mode; every
/// fractional power is obtained from it by exponentiation. Immutable after
/// construction and cheap to share (`Clone` copies the FFT plans by reference).
#[derive(Clone)]
pub struct Grid {
    params: GridParams,
    len: usize,
    symbol: Arc<Vec<f64>>,
    half_order: Arc<Vec<f64>>,
    full_order: Arc<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("params", &self.params)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-12
}

impl Grid {
    pub fn new(params: GridParams) -> Result<Self> {
        let GridParams {
            dim,
            points,
            box_length,
            order,
            dt,
            steps,
        } = params;
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {points}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        if !(order.is_finite() && order > 0.0) || is_integer(order) {
            return Err(Error::InvalidGrid(format!(
                "fractional order must be positive and non-integer, got {order}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 time steps, got {steps}"
            )));
        }

        let len = points.pow(dim as u32);
        let base = 2.0 * std::f64::consts::PI / box_length;
        let wavenumber = |i: usize| -> f64 {
            let k = if i <= points / 2 {
                i as f64
            } else {
                i as f64 - points as f64
            };
            base * k
        };
        let symbol: Vec<f64> = match dim {
            1 => (0..points).map(|i| wavenumber(i).powi(2)).collect(),
            _ => (0..len)
                .map(|idx| {
                    let (i, j) = (idx / points, idx % points);
                    wavenumber(i).powi(2) + wavenumber(j).powi(2)
                })
                .collect(),
        };
        let power = |p: f64| -> Vec<f64> { symbol.iter().map(|&m| symbol_power(m, p)).collect() };
        let half_order = power(order / 2.0);
        let full_order = power(order);

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);

        Ok(Self {
            params,
            len,
            symbol: Arc::new(symbol),
            half_order: Arc::new(half_order),
            full_order: Arc::new(full_order),
            forward,
            inverse,
        })
    }

    /// Same geometry and order with a different time discretization.
    pub fn with_time(&self, dt: f64, steps: usize) -> Result<Self> {
        Self::new(GridParams {
            dt,
            steps,
            ..self.params
        })
    }

    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn points(&self) -> usize {
        self.params.points
    }

    /// Number of nodes, `N^n`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn box_length(&self) -> f64 {
        self.params.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.params.box_length / self.params.points as f64
    }

    /// Quadrature weight of one node, `(L/N)^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.params.dim as i32)
    }

    /// Fractional order `s`.
    pub fn order(&self) -> f64 {
        self.params.order
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn steps(&self) -> usize {
        self.params.steps
    }

    /// Number of time levels, `steps + 1`.
    pub fn levels(&self) -> usize {
        self.params.steps + 1
    }

    pub fn final_time(&self) -> f64 {
        self.params.steps as f64 * self.params.dt
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.params.dt
    }

    /// Physical coordinate of index `j` along one axis.
    pub fn axis_coordinate(&self, j: usize) -> f64 {
        -0.5 * self.params.box_length + j as f64 * self.spacing()
    }

    /// Coordinates of a flattened node index (second entry is 0 in 1D).
    pub fn node_coordinates(&self, idx: usize) -> [f64; 2] {
        match self.params.dim {
            1 => [self.axis_coordinate(idx), 0.0],
            _ => {
                let n = self.params.points;
                [self.axis_coordinate(idx / n), self.axis_coordinate(idx % n)]
            }
        }
    }

    /// Per-axis indices of a flattened node index.
    pub fn node_indices(&self, idx: usize) -> [usize; 2] {
        match self.params.dim {
            1 => [idx, 0],
            _ => [idx / self.params.points, idx % self.params.points],
        }
    }

    /// Symbol `|xi|^2` of `-Delta` in FFT ordering.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Multiplier `|xi|^(2*order)` in FFT ordering; zero mode is 0 unless `order == 0`.
    pub fn multiplier(&self, order: f64) -> Cow<'_, [f64]> {
        let s = self.params.order;
        if order == s {
            Cow::Borrowed(&self.full_order)
        } else if order == s / 2.0 {
            Cow::Borrowed(&self.half_order)
        } else {
            Cow::Owned(
                self.symbol
                    .iter()
                    .map(|&m| symbol_power(m, order))
                    .collect(),
            )
        }
    }

    /// Forward DFT (unnormalized).
    pub fn forward_transform(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_in_place(&mut buf, &self.forward);
        buf
    }

    /// Inverse DFT, normalized so that it inverts [`Grid::forward_transform`]; returns real parts.
    pub fn inverse_transform(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform_in_place(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.len as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    fn transform_in_place(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.params.points;
        plan.process(buf);
        if self.params.dim == 2 {
            transpose_square(buf, n);
            plan.process(buf);
            transpose_square(buf, n);
        }
    }

    /// Writes `F^{-1}(weights * F(input))` into `out`. No validation; for hot loops.
    pub(crate) fn apply_weights(&self, input: &[f64], weights: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_in_place(&mut buf, &self.forward);
        for (c, &w) in buf.iter_mut().zip(weights) {
            *c *= w;
        }
        self.transform_in_place(&mut buf, &self.inverse);
        let scale = 1.0 / self.len as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }

    /// `(-Delta)^order` applied to raw values, unchecked.
    pub(crate) fn frac_into(&self, input: &[f64], order: f64, out: &mut [f64]) {
        let m = self.multiplier(order);
        self.apply_weights(input, &m, out);
    }

    pub(crate) fn frac_vec(&self, input: &[f64], order: f64) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        self.frac_into(input, order, &mut out);
        out
    }

    /// Fractional Laplacian `(-Delta)^order u` as a Fourier multiplier.
    pub fn frac_laplacian(&self, u: &ScalarField, order: f64) -> Result<ScalarField> {
        if !(order.is_finite() && order >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fractional Laplacian order must be >= 0, got {order}"
            )));
        }
        check_len(u.len(), self.len, "frac_laplacian input")?;
        check_finite(u.values(), "frac_laplacian input")?;
        Ok(ScalarField::from_vec_unchecked(
            self.frac_vec(u.values(), order),
        ))
    }

    /// Spectral low-pass keeping modes with `|k| <= N/8` along every axis
    /// (the lowest `N/4` modes per axis).
    pub fn lowpass(&self, input: &[f64]) -> Vec<f64> {
        let n = self.params.points;
        let cutoff = n / 8;
        let keep = |i: usize| -> bool {
            let k = if i <= n / 2 { i } else { n - i };
            k <= cutoff
        };
        let weights: Vec<f64> = (0..self.len)
            .map(|idx| {
                let [i, j] = self.node_indices(idx);
                let ok = match self.params.dim {
                    1 => keep(i),
                    _ => keep(i) && keep(j),
                };
                if ok {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut out = vec![0.0; input.len()];
        self.apply_weights(input, &weights, &mut out);
        out
    }

    /// Spectral interpolation of `values` given on `source` onto this grid.
    /// Both grids must share dimension and box; modes with `|k| < min(N)/2`
    /// along every axis are carried over, the rest are dropped.
    pub fn resample(&self, source: &Grid, values: &[f64]) -> Result<Vec<f64>> {
        let (ps, pt) = (source.params, self.params);
        if ps.dim != pt.dim || ps.box_length != pt.box_length {
            return Err(Error::InvalidGrid("resampling needs matching dimension and box".into()));
        }
        check_len(values.len(), source.len, "resample input")?;
        let (ns, nt) = (ps.points, pt.points);
        let limit = (ns.min(nt) / 2) as i64;
        let signed = |i: usize, n: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        let spectrum = source.forward_transform(values);
        let scale = self.len as f64 / source.len as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        for (idx, c) in spectrum.iter().enumerate() {
            let [i, j] = source.node_indices(idx);
            let (ki, kj) = (signed(i, ns), signed(j, ns));
            if ki.abs() >= limit || (pt.dim == 2 && kj.abs() >= limit) {
                continue;
            }
            let wrap = |k: i64| -> usize { k.rem_euclid(nt as i64) as usize };
            let target = match pt.dim {
                1 => wrap(ki),
                _ => wrap(ki) * nt + wrap(kj),
            };
            out[target] = c * scale;
        }
        Ok(self.inverse_transform(out))
    }
}

fn symbol_power(m: f64, order: f64) -> f64 {
    if order == 0.0 {
        1.0
    } else if m == 0.0 {
        0.0
    } else {
        m.powf(order)
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dim: usize) -> Grid {
        Grid::new(GridParams {
            dim,
            points: 32,
            box_length: 4.0,
            order: 0.75,
            dt: 0.01,
            steps: 10,
        })
        .unwrap()
    }

    #[test]
    fn resampling_is_exact_for_resolved_modes() {
        for dim in [1, 2] {
            let coarse = grid(dim);
            let fine = Grid::new(GridParams { points: 64, ..coarse.params() }).unwrap();
            let f = |g: &Grid| -> Vec<f64> {
                let w = 2.0 * std::f64::consts::PI / 4.0;
                (0..g.len())
                    .map(|i| {
                        let x = g.node_coordinates(i);
                        (3.0 * w * x[0]).cos() + 0.5 * (5.0 * w * x[1] + 0.3).sin() - 0.2
                    })
                    .collect()
            };
            let up = fine.resample(&coarse, &f(&coarse)).unwrap();
            let down = coarse.resample(&fine, &f(&fine)).unwrap();
            for (a, b) in up.iter().zip(f(&fine)) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in down.iter().zip(f(&coarse)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let other = Grid::new(GridParams { box_length: 2.0, ..grid(1).params() }).unwrap();
        assert!(grid(1).resample(&other, &vec![0.0; 32]).is_err());
    }

    #[test]
    fn rejects_integer_order_and_bad_sizes() {
        let base = grid(1).params();
        assert!(Grid::new(GridParams { order: 1.0, ..base }).is_err());
        assert!(Grid::new(GridParams {
            order: -0.5,
            ..base
        })
        .is_err());
        assert!(Grid::new(GridParams { points: 12, ..base }).is_err());
        assert!(Grid::new(GridParams { points: 4, ..base }).is_err());
        assert!(Grid::new(GridParams { steps: 1, ..base }).is_err());
        assert!(Grid::new(GridParams { dt: 0.0, ..base }).is_err());
        assert!(Grid::new(GridParams { dim: 3, ..base }).is_err());
    }

    #[test]
    fn horizon_is_exact_product() {
        let g = grid(1);
        assert_eq!(g.final_time(), 10.0 * 0.01);
        assert_eq!(g.levels(), 11);
    }

    #[test]
    fn multiplier_vanishes_only_at_zero_mode() {
        for dim in [1, 2] {
            let g = grid(dim);
            let m = g.multiplier(g.order());
            assert_eq!(m[0], 0.0);
            assert!(m[1..].iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn round_trip_2d() {
        let g = grid(2);
        let values: Vec<f64> = (0..g.len())
            .map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5)
            .collect();
        let back = g.inverse_transform(g.forward_transform(&values));
        let err = values
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = values.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 1e-12);
    }

    #[test]
    fn two_dimensional_mode_is_eigenfunction() {
        let g = grid(2);
        let two_pi_l = 2.0 * std::f64::consts::PI / g.box_length();
        let u = ScalarField::from_fn(&g, |x| {
            (two_pi_l * x[0]).cos() * (2.0 * two_pi_l * x[1]).sin()
        });
        let lu = g.frac_laplacian(&u, g.order()).unwrap();
        let eig = (5.0 * two_pi_l * two_pi_l).powf(g.order());
        for (a, b) in lu.values().iter().zip(u.values()) {
            assert!((a - eig * b).abs() < 1e-11);
        }
    }
}
