use super::grid::Grid;
use crate::error::{check_finite, check_len, Error, Result};

/// One spatial snapshot: `N^n` real values in row-major order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            values: vec![value; grid.len()],
        }
    }

    /// Wraps values after checking length and finiteness.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(values.len(), grid.len(), "scalar field")?;
        check_finite(&values, "scalar field")?;
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Samples `f` at node coordinates (`x[1]` is 0 in 1D).
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: (0..grid.len())
                .map(|i| f(grid.node_coordinates(i)))
                .collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &ScalarField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Unweighted Euclidean inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes every entry whose indicator is false.
    pub fn restricted(&self, indicator: &[bool]) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(indicator)
                .map(|(&v, &keep)| if keep { v } else { 0.0 })
                .collect(),
        }
    }
}

/// Full trajectory: one [`ScalarField`] per time level `0..=steps`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpaceTimeField {
    frames: Vec<ScalarField>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            frames: vec![ScalarField::zeros(grid); grid.levels()],
        }
    }

    pub fn from_frames(grid: &Grid, frames: Vec<ScalarField>) -> Result<Self> {
        if frames.len() != grid.levels() {
            return Err(Error::Shape {
                context: "space-time frames".into(),
                expected: grid.levels(),
                actual: frames.len(),
            });
        }
        for f in &frames {
            check_len(f.len(), grid.len(), "space-time frame")?;
            check_finite(f.values(), "space-time frame")?;
        }
        Ok(Self { frames })
    }

    pub(crate) fn from_frames_unchecked(frames: Vec<ScalarField>) -> Self {
        Self { frames }
    }

    /// Samples `f(x, t)` on every node and level.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let frames = (0..grid.levels())
            .map(|n| {
                let t = grid.time(n);
                ScalarField::from_fn(grid, |x| f(x, t))
            })
            .collect();
        Self { frames }
    }

    /// `profile(t) * shape(x)`.
    pub fn separable(grid: &Grid, shape: &ScalarField, profile: impl Fn(f64) -> f64) -> Self {
        let frames = (0..grid.levels())
            .map(|n| shape.scaled(profile(grid.time(n))))
            .collect();
        Self { frames }
    }

    pub fn frames(&self) -> &[ScalarField] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [ScalarField] {
        &mut self.frames
    }

    pub fn frame(&self, level: usize) -> &ScalarField {
        &self.frames[level]
    }

    pub fn levels(&self) -> usize {
        self.frames.len()
    }

    pub fn into_frames(self) -> Vec<ScalarField> {
        self.frames
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(ScalarField::is_finite)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            frames: self.frames.iter().map(|f| f.scaled(factor)).collect(),
        }
    }

    pub fn add(&self, other: &SpaceTimeField) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, factor: f64, other: &SpaceTimeField) {
        for (a, b) in self.frames.iter_mut().zip(&other.frames) {
            a.axpy(factor, b);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self {
            frames: self.frames.iter().map(|fr| fr.map(f)).collect(),
        }
    }

    pub fn restricted(&self, indicator: &[bool]) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| f.restricted(indicator))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.frames.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }

    /// All values, time-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|f| f.values().iter().copied())
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
