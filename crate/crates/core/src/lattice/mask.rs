use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::field::ScalarField;
use super::grid::Grid;
use crate::error::{check_len, Error, Result};

/// Axis-aligned closed box `[lo, hi]` in physical coordinates. In 1D only the
/// first component is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl AxisBox {
    pub fn interval(a: f64, b: f64) -> Self {
        Self {
            lo: [a, 0.0],
            hi: [b, 0.0],
        }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, x: [f64; 2], dim: usize) -> bool {
        const SLACK: f64 = 1e-12;
        (0..dim).all(|d| x[d] >= self.lo[d] - SLACK && x[d] <= self.hi[d] + SLACK)
    }
}

/// Selects the nodes a norm or projection acts on.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    Nodes(&'a [bool]),
}

impl Region<'_> {
    pub fn contains(&self, idx: usize) -> bool {
        match self {
            Region::All => true,
            Region::Nodes(ind) => ind[idx],
        }
    }
}

/// Interior domain and the two exterior measurement windows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    omega: Vec<bool>,
    w1: Vec<bool>,
    w2: Vec<bool>,
    omega_nodes: Vec<usize>,
    w1_nodes: Vec<usize>,
    w2_nodes: Vec<usize>,
    full_torus: bool,
}

fn nodes_of(ind: &[bool]) -> Vec<usize> {
    ind.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect()
}

fn rasterize(grid: &Grid, boxes: &[AxisBox]) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            let x = grid.node_coordinates(i);
            boxes.iter().any(|b| b.contains(x, grid.dim()))
        })
        .collect()
}

impl RegionMask {
    /// Builds and validates a measurement geometry from indicator arrays.
    pub fn from_indicators(
        grid: &Grid,
        omega: Vec<bool>,
        w1: Vec<bool>,
        w2: Vec<bool>,
    ) -> Result<Self> {
        check_len(omega.len(), grid.len(), "omega indicator")?;
        check_len(w1.len(), grid.len(), "w1 indicator")?;
        check_len(w2.len(), grid.len(), "w2 indicator")?;
        let mask = Self {
            omega_nodes: nodes_of(&omega),
            w1_nodes: nodes_of(&w1),
            w2_nodes: nodes_of(&w2),
            omega,
            w1,
            w2,
            full_torus: false,
        };
        mask.validate(grid)?;
        Ok(mask)
    }

    /// Rasterizes unions of boxes onto the grid (a node belongs to a box when its
    /// coordinate lies in the closed box).
    pub fn from_boxes(
        grid: &Grid,
        omega: &[AxisBox],
        w1: &[AxisBox],
        w2: &[AxisBox],
    ) -> Result<Self> {
        Self::from_indicators(
            grid,
            rasterize(grid, omega),
            rasterize(grid, w1),
            rasterize(grid, w2),
        )
    }

    /// Interior covering every node, no exterior and no windows. Only meaningful
    /// for free-space checks on the torus; measurement operations reject it.
    pub fn full_torus(grid: &Grid) -> Self {
        let omega = vec![true; grid.len()];
        Self {
            omega_nodes: (0..grid.len()).collect(),
            w1: vec![false; grid.len()],
            w2: vec![false; grid.len()],
            w1_nodes: Vec::new(),
            w2_nodes: Vec::new(),
            omega,
            full_torus: true,
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, ind) in [("omega", &self.omega), ("w1", &self.w1), ("w2", &self.w2)] {
            if !ind.iter().any(|&b| b) {
                return Err(Error::InvalidMask(format!("{name} is empty")));
            }
            for axis in 0..grid.dim() {
                if !has_adjacent_pair(grid, ind, axis) {
                    return Err(Error::InvalidMask(format!(
                        "{name} has no two contiguous nodes along axis {axis}"
                    )));
                }
            }
        }
        for i in 0..grid.len() {
            let count = self.omega[i] as u8 + self.w1[i] as u8 + self.w2[i] as u8;
            if count > 1 {
                return Err(Error::InvalidMask(format!("regions overlap at node {i}")));
            }
        }
        let union: Vec<bool> = (0..grid.len())
            .map(|i| self.omega[i] || self.w1[i] || self.w2[i])
            .collect();
        let required = grid.points() / 16;
        for axis in 0..grid.dim() {
            let gap = largest_circular_gap(grid, &union, axis);
            if gap < required {
                return Err(Error::InvalidMask(format!(
                    "buffer along axis {axis} is {gap} nodes, need at least {required}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_full_torus(&self) -> bool {
        self.full_torus
    }

    /// Errors unless this is a validated measurement geometry.
    pub fn require_windows(&self) -> Result<()> {
        if self.full_torus {
            return Err(Error::InvalidMask(
                "operation needs exterior windows; full-torus mask has none".into(),
            ));
        }
        Ok(())
    }

    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn w1(&self) -> &[bool] {
        &self.w1
    }

    pub fn w2(&self) -> &[bool] {
        &self.w2
    }

    pub fn omega_nodes(&self) -> &[usize] {
        &self.omega_nodes
    }

    pub fn w1_nodes(&self) -> &[usize] {
        &self.w1_nodes
    }

    pub fn w2_nodes(&self) -> &[usize] {
        &self.w2_nodes
    }

    pub fn exterior(&self) -> Vec<bool> {
        self.omega.iter().map(|&b| !b).collect()
    }

    pub fn omega_region(&self) -> Region<'_> {
        Region::Nodes(&self.omega)
    }

    pub fn w1_region(&self) -> Region<'_> {
        Region::Nodes(&self.w1)
    }

    pub fn w2_region(&self) -> Region<'_> {
        Region::Nodes(&self.w2)
    }

    /// `P_Omega u`: zeroes values off the interior.
    pub fn project_omega(&self, u: &ScalarField) -> ScalarField {
        u.restricted(&self.omega)
    }

    pub(crate) fn project_omega_in_place(&self, u: &mut [f64]) {
        for (v, &keep) in u.iter_mut().zip(&self.omega) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    /// Short content hash of the three indicators.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for ind in [&self.omega, &self.w1, &self.w2] {
            let bytes: Vec<u8> = ind.iter().map(|&b| b as u8).collect();
            hasher.update(&bytes);
            hasher.update([0xff]);
        }
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn has_adjacent_pair(grid: &Grid, ind: &[bool], axis: usize) -> bool {
    let n = grid.points();
    (0..grid.len()).any(|i| {
        if !ind[i] {
            return false;
        }
        let [a, b] = grid.node_indices(i);
        let next = match (grid.dim(), axis) {
            (1, _) if a + 1 < n => Some(a + 1),
            (2, 0) if a + 1 < n => Some((a + 1) * n + b),
            (2, 1) if b + 1 < n => Some(a * n + b + 1),
            _ => None,
        };
        next.is_some_and(|j| ind[j])
    })
}

/// Longest run of axis indices (cyclically) on which the projected set is empty.
fn largest_circular_gap(grid: &Grid, ind: &[bool], axis: usize) -> usize {
    let n = grid.points();
    let mut occupied = vec![false; n];
    for (i, &b) in ind.iter().enumerate() {
        if b {
            occupied[grid.node_indices(i)[axis]] = true;
        }
    }
    if !occupied.iter().any(|&b| b) {
        return n;
    }
    let start = occupied.iter().position(|&b| b).unwrap_or(0);
    let (mut best, mut run) = (0, 0);
    for k in 1..=n {
        if occupied[(start + k) % n] {
            best = best.max(run);
            run = 0;
        } else {
            run += 1;
        }
    }
    best.max(run)
}
