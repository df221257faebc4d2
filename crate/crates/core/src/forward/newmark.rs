//! Average-acceleration Newmark stepping for `u'' + C u' + K_n u = F_n` on the
//! interior nodes, with `K_n = P A P + q_n` and `C = eps * K`, plus the exact
//! transpose of the discrete map used by every gradient computation.
//!
//! All state vectors have full lattice length and vanish off the interior.

use crate::error::Result;
use crate::lattice::{stiffness_into, ConjugateGradient, Grid, RegionMask};

/// Potential term of the stiffness.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Potential<'a> {
    None,
    Static(&'a [f64]),
    /// One potential per time level.
    Levels(&'a [Vec<f64>]),
}

impl<'a> Potential<'a> {
    /// `Static`, collapsing an identically zero field to `None` so that the zero
    /// potential reproduces the unperturbed arithmetic exactly.
    pub fn from_values(q: &'a [f64]) -> Self {
        if q.iter().all(|&v| v == 0.0) {
            Potential::None
        } else {
            Potential::Static(q)
        }
    }

    fn at(&self, level: usize) -> Option<&'a [f64]> {
        match *self {
            Potential::None => None,
            Potential::Static(q) => Some(q),
            Potential::Levels(qs) => Some(&qs[level]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

/// Sensitivities returned by [`Engine::adjoint`].
#[derive(Debug, Clone)]
pub(crate) struct Adjoint {
    /// Gradient with respect to the load at every level.
    pub forces: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

pub(crate) struct Engine<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    potential: Potential<'a>,
    viscosity: f64,
    cg: ConjugateGradient,
}

impl<'a> Engine<'a> {
    pub fn new(
        grid: &'a Grid,
        mask: &'a RegionMask,
        potential: Potential<'a>,
        viscosity: f64,
        cg_tol: f64,
    ) -> Self {
        debug_assert!(viscosity == 0.0 || !matches!(potential, Potential::Levels(_)));
        Self {
            grid,
            mask,
            potential,
            viscosity,
            cg: ConjugateGradient::for_grid(grid, cg_tol),
        }
    }

    #[cfg(test)]
    pub fn grid(&self) -> &Grid {
        self.grid
    }

    #[cfg(test)]
    pub fn mask(&self) -> &RegionMask {
        self.mask
    }

    fn newmark_c(&self) -> f64 {
        0.25 * self.grid.dt() * self.grid.dt()
    }

    /// `out = K_level x`.
    pub fn stiffness(&self, level: usize, x: &[f64], out: &mut [f64]) {
        stiffness_into(self.grid, self.mask, x, out);
        if let Some(q) = self.potential.at(level) {
            for &i in self.mask.omega_nodes() {
                out[i] += q[i] * x[i];
            }
        }
    }

    /// `out = x + gamma K_level x` on the interior, identity elsewhere.
    fn implicit_op(&self, level: usize, gamma: f64, x: &[f64], out: &mut [f64]) {
        self.stiffness(level, x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + gamma * *o;
        }
    }

    fn implicit_gamma(&self) -> f64 {
        self.newmark_c() + 0.5 * self.grid.dt() * self.viscosity
    }

    fn implicit_solve(&self, level: usize, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.implicit_gamma();
        let (x, _) = self.cg.solve(
            |x, out| self.implicit_op(level, gamma, x, out),
            rhs,
            Some(guess),
        )?;
        Ok(x)
    }

    /// Consistent start: `a0 = F0 - C v0 - K_0 u0`.
    pub fn initial(&self, u0: &[f64], v0: &[f64], f0: &[f64]) -> State {
        let n = self.grid.len();
        let mut ku = vec![0.0; n];
        self.stiffness(0, u0, &mut ku);
        let mut a = vec![0.0; n];
        if self.viscosity != 0.0 {
            let mut kv = vec![0.0; n];
            self.stiffness(0, v0, &mut kv);
            for &i in self.mask.omega_nodes() {
                a[i] = f0[i] - self.viscosity * kv[i] - ku[i];
            }
        } else {
            for &i in self.mask.omega_nodes() {
                a[i] = f0[i] - ku[i];
            }
        }
        State {
            u: u0.to_vec(),
            v: v0.to_vec(),
            a,
        }
    }

    /// Advances `prev` (at level `next - 1`) to level `next` under load `f_next`.
    pub fn step(&self, prev: &State, next: usize, f_next: &[f64]) -> Result<State> {
        let n = self.grid.len();
        let dt = self.grid.dt();
        let c = self.newmark_c();
        let mut u_pred = vec![0.0; n];
        let mut v_pred = vec![0.0; n];
        for &i in self.mask.omega_nodes() {
            u_pred[i] = prev.u[i] + dt * prev.v[i] + c * prev.a[i];
            v_pred[i] = prev.v[i] + 0.5 * dt * prev.a[i];
        }
        let mut rhs = vec![0.0; n];
        self.stiffness(next, &u_pred, &mut rhs);
        if self.viscosity != 0.0 {
            let mut kv = vec![0.0; n];
            self.stiffness(next, &v_pred, &mut kv);
            for &i in self.mask.omega_nodes() {
                rhs[i] = f_next[i] - self.viscosity * kv[i] - rhs[i];
            }
        } else {
            for &i in self.mask.omega_nodes() {
                rhs[i] = f_next[i] - rhs[i];
            }
        }
        let a = self.implicit_solve(next, &rhs, &prev.a)?;
        let mut u = u_pred;
        let mut v = v_pred;
        for &i in self.mask.omega_nodes() {
            u[i] += c * a[i];
            v[i] += 0.5 * dt * a[i];
        }
        Ok(State { u, v, a })
    }

    /// States at levels `start + 1 ..= start + loads.len()`.
    pub fn march_from(&self, from: &State, start: usize, loads: &[Vec<f64>]) -> Result<Vec<State>> {
        let mut out: Vec<State> = Vec::with_capacity(loads.len());
        for (j, f) in loads.iter().enumerate() {
            let next = self.step(out.last().unwrap_or(from), start + j + 1, f)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Full march over all levels; `loads[n]` is the load at level `n`.
    pub fn march(&self, u0: &[f64], v0: &[f64], loads: &[Vec<f64>]) -> Result<Vec<State>> {
        let first = self.initial(u0, v0, &loads[0]);
        let rest = self.march_from(&first, 0, &loads[1..])?;
        let mut states = Vec::with_capacity(loads.len());
        states.push(first);
        states.extend(rest);
        Ok(states)
    }

    /// Transpose of the full march for the linear functional
    /// `sum_n <load_u[n], u_n> + <load_v[n], v_n>` (plain Euclidean pairings).
    /// Empty load vectors stand for zero.
    pub fn adjoint(&self, load_u: &[Vec<f64>], load_v: &[Vec<f64>]) -> Result<Adjoint> {
        let n = self.grid.len();
        let levels = self.grid.levels();
        let dt = self.grid.dt();
        let c = self.newmark_c();
        let eps = self.viscosity;
        let interior = self.mask.omega_nodes();
        let add_load = |target: &mut [f64], loads: &[Vec<f64>], level: usize| {
            if let Some(l) = loads.get(level).filter(|l| !l.is_empty()) {
                for &i in interior {
                    target[i] += l[i];
                }
            }
        };

        let mut forces = vec![Vec::new(); levels];
        let mut bu = vec![0.0; n];
        let mut bv = vec![0.0; n];
        let mut ba = vec![0.0; n];
        add_load(&mut bu, load_u, levels - 1);
        add_load(&mut bv, load_v, levels - 1);
        let mut guess = vec![0.0; n];
        let mut kz = vec![0.0; n];
        for next in (1..levels).rev() {
            // u' = u_pred + c a',  v' = v_pred + dt/2 a'
            let mut ba_total = ba.clone();
            for &i in interior {
                ba_total[i] += c * bu[i] + 0.5 * dt * bv[i];
            }
            // a' = S^{-1} (F' - C v_pred - K u_pred)
            let z = self.implicit_solve(next, &ba_total, &guess)?;
            self.stiffness(next, &z, &mut kz);
            let mut bu_pred = bu.clone();
            let mut bv_pred = bv.clone();
            for &i in interior {
                bu_pred[i] -= kz[i];
                bv_pred[i] -= eps * kz[i];
            }
            // v_pred = v + dt/2 a,  u_pred = u + dt v + c a
            for &i in interior {
                bu[i] = bu_pred[i];
                bv[i] = bv_pred[i] + dt * bu_pred[i];
                ba[i] = 0.5 * dt * bv_pred[i] + c * bu_pred[i];
            }
            guess.clone_from(&z);
            forces[next] = z;
            add_load(&mut bu, load_u, next - 1);
            add_load(&mut bv, load_v, next - 1);
        }
        // a0 = F0 - C v0 - K_0 u0
        self.stiffness(0, &ba, &mut kz);
        for &i in interior {
            bu[i] -= kz[i];
            bv[i] -= eps * kz[i];
        }
        forces[0] = ba;
        Ok(Adjoint {
            forces,
            u0: bu,
            v0: bv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dot, AxisBox, GridParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Grid, RegionMask) {
        let g = Grid::new(GridParams {
            dim: 1,
            points: 32,
            box_length: 4.0,
            order: 0.6,
            dt: 0.05,
            steps: 12,
        })
        .unwrap();
        let m = RegionMask::from_boxes(
            &g,
            &[AxisBox::interval(-0.5, 0.5)],
            &[AxisBox::interval(-1.25, -0.7)],
            &[AxisBox::interval(0.7, 1.25)],
        )
        .unwrap();
        (g, m)
    }

    fn random_interior(rng: &mut ChaCha8Rng, m: &RegionMask, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &i in m.omega_nodes() {
            v[i] = rng.random_range(-1.0..1.0);
        }
        v
    }

    /// The adjoint is checked against the definition `<J x, y> = <x, J^T y>`
    /// with the forward map linear in (loads, u0, v0).
    fn transpose_identity(engine: &Engine<'_>, seed: u64) {
        let g = engine.grid();
        let m = engine.mask();
        let n = g.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loads: Vec<Vec<f64>> = (0..g.levels())
            .map(|_| random_interior(&mut rng, m, n))
            .collect();
        let u0 = random_interior(&mut rng, m, n);
        let v0 = random_interior(&mut rng, m, n);
        let wu: Vec<Vec<f64>> = (0..g.levels())
            .map(|_| random_interior(&mut rng, m, n))
            .collect();
        let wv: Vec<Vec<f64>> = (0..g.levels())
            .map(|_| random_interior(&mut rng, m, n))
            .collect();

        let states = engine.march(&u0, &v0, &loads).unwrap();
        let lhs: f64 = states
            .iter()
            .enumerate()
            .map(|(k, s)| dot(&wu[k], &s.u) + dot(&wv[k], &s.v))
            .sum();
        let adj = engine.adjoint(&wu, &wv).unwrap();
        let rhs: f64 = loads
            .iter()
            .zip(&adj.forces)
            .map(|(f, z)| dot(f, z))
            .sum::<f64>()
            + dot(&u0, &adj.u0)
            + dot(&v0, &adj.v0);
        assert!(
            (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn adjoint_is_transpose_plain() {
        let (g, m) = setup();
        transpose_identity(&Engine::new(&g, &m, Potential::None, 0.0, 1e-14), 1);
    }

    #[test]
    fn adjoint_is_transpose_viscous_with_potential() {
        let (g, m) = setup();
        let q: Vec<f64> = (0..g.len()).map(|i| 0.5 + 0.1 * (i as f64).sin()).collect();
        transpose_identity(&Engine::new(&g, &m, Potential::Static(&q), 0.05, 1e-14), 2);
    }

    #[test]
    fn adjoint_is_transpose_time_varying_potential() {
        let (g, m) = setup();
        let qs: Vec<Vec<f64>> = (0..g.levels())
            .map(|k| {
                (0..g.len())
                    .map(|i| 1.0 + 0.3 * ((i + k) as f64).cos())
                    .collect()
            })
            .collect();
        transpose_identity(&Engine::new(&g, &m, Potential::Levels(&qs), 0.0, 1e-14), 3);
    }

    #[test]
    fn states_satisfy_equation_of_motion() {
        let (g, m) = setup();
        let q: Vec<f64> = vec![0.7; g.len()];
        let engine = Engine::new(&g, &m, Potential::Static(&q), 0.02, 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let loads: Vec<Vec<f64>> = (0..g.levels())
            .map(|_| random_interior(&mut rng, &m, g.len()))
            .collect();
        let u0 = random_interior(&mut rng, &m, g.len());
        let states = engine.march(&u0, &vec![0.0; g.len()], &loads).unwrap();
        let mut ku = vec![0.0; g.len()];
        let mut kv = vec![0.0; g.len()];
        for (k, s) in states.iter().enumerate() {
            engine.stiffness(k, &s.u, &mut ku);
            engine.stiffness(k, &s.v, &mut kv);
            for &i in m.omega_nodes() {
                let res = s.a[i] + 0.02 * kv[i] + ku[i] - loads[k][i];
                assert!(res.abs() < 1e-10, "level {k} node {i}: {res}");
            }
        }
    }
}
