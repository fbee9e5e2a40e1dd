//! Grids, scalar fields, and field time series.
//!
//! Axis convention: axis 0 = x, axis 1 = y, axis 2 = z, stored row-major
//! with axis 0 slowest (`flat = (x * ny + y) * nz + z`). For 3-D fields the
//! top surface is the last z layer.

use crate::error::{Error, Result};

/// Uniform grid: extents per axis, physical lengths, solver timestep, and
/// the number of stored frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub extents: Vec<usize>,
    pub lengths: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(extents: Vec<usize>, lengths: Vec<f64>, dt: f64, steps: usize) -> Result<Self> {
        let d = extents.len();
        if !(2..=3).contains(&d) {
            return Err(Error::invalid(format!("grid must be 2-D or 3-D, got {d} axes")));
        }
        if lengths.len() != d {
            return Err(Error::invalid("lengths must match grid dimensionality"));
        }
        if extents.iter().any(|&e| e < 4) {
            return Err(Error::invalid("every grid extent must be >= 4"));
        }
        if lengths.iter().any(|&l| l <= 0.0) {
            return Err(Error::invalid("physical lengths must be positive"));
        }
        if dt <= 0.0 {
            return Err(Error::invalid("timestep must be positive"));
        }
        if steps < 2 {
            return Err(Error::invalid("step count must be >= 2"));
        }
        Ok(GridSpec {
            extents,
            lengths,
            dt,
            steps,
        })
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn cells(&self) -> usize {
        self.extents.iter().product()
    }

    /// Cell spacing per axis.
    pub fn spacing(&self) -> Vec<f64> {
        self.extents
            .iter()
            .zip(&self.lengths)
            .map(|(&e, &l)| l / e as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Solution,
    Condition,
}

impl FieldRole {
    pub fn name(&self) -> &'static str {
        match self {
            FieldRole::Solution => "solution",
            FieldRole::Condition => "condition",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "solution" => Ok(FieldRole::Solution),
            "condition" => Ok(FieldRole::Condition),
            other => Err(Error::format(format!("unknown field role `{other}`"))),
        }
    }
}

/// One scalar field at one timestep, in f64 working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub extents: Vec<usize>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(name: impl Into<String>, extents: Vec<usize>, values: Vec<f64>) -> Self {
        let n: usize = extents.iter().product();
        assert_eq!(n, values.len(), "field values do not match extents");
        Field {
            name: name.into(),
            extents,
            values,
        }
    }

    pub fn zeros(name: impl Into<String>, extents: Vec<usize>) -> Self {
        let n: usize = extents.iter().product();
        Field::new(name, extents, vec![0.0; n])
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }
}

/// A time series of one field on a grid; storage is 32-bit per the
/// container format, solvers work in f64 and cast frames on store.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub name: String,
    pub role: FieldRole,
    pub grid: GridSpec,
    pub units: String,
    pub values: Vec<f32>, // steps x cells
}

impl FieldSeries {
    pub fn new(
        name: impl Into<String>,
        role: FieldRole,
        grid: GridSpec,
        units: impl Into<String>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let series = FieldSeries {
            name: name.into(),
            role,
            grid,
            units: units.into(),
            values,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.grid.steps * self.grid.cells();
        if self.values.len() != expect {
            return Err(Error::ShapeMismatch {
                context: format!("field series `{}`", self.name),
                expected: vec![self.grid.steps, self.grid.cells()],
                actual: vec![self.values.len()],
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("field series `{}`", self.name),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let cells = self.grid.cells();
        &self.values[t * cells..(t + 1) * cells]
    }

    /// Frame `t` as an f64 working field.
    pub fn field(&self, t: usize) -> Field {
        Field::new(
            self.name.clone(),
            self.grid.extents.clone(),
            self.frame(t).iter().map(|&v| v as f64).collect(),
        )
    }

    /// Truncate to the first `steps` frames.
    pub fn truncated(&self, steps: usize) -> FieldSeries {
        assert!(steps >= 2 && steps <= self.grid.steps);
        let cells = self.grid.cells();
        let mut grid = self.grid.clone();
        grid.steps = steps;
        FieldSeries {
            name: self.name.clone(),
            role: self.role,
            grid,
            units: self.units.clone(),
            values: self.values[..steps * cells].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_rejects_bad_inputs() {
        assert!(GridSpec::new(vec![3, 8], vec![1.0, 1.0], 0.1, 10).is_err());
        assert!(GridSpec::new(vec![8, 8], vec![1.0], 0.1, 10).is_err());
        assert!(GridSpec::new(vec![8, 8], vec![1.0, 1.0], 0.0, 10).is_err());
        assert!(GridSpec::new(vec![8, 8], vec![1.0, 1.0], 0.1, 1).is_err());
        assert!(GridSpec::new(vec![8, 8, 8, 8], vec![1.0; 4], 0.1, 10).is_err());
    }

    #[test]
    fn series_rejects_non_finite_values() {
        let grid = GridSpec::new(vec![4, 4], vec![1.0, 1.0], 0.1, 2).unwrap();
        let mut values = vec![0.0f32; 32];
        values[5] = f32::NAN;
        assert!(FieldSeries::new("u", FieldRole::Solution, grid, "1", values).is_err());
    }

    #[test]
    fn frame_access_is_row_major_by_timestep() {
        let grid = GridSpec::new(vec![4, 4], vec![1.0, 1.0], 0.1, 3).unwrap();
        let values: Vec<f32> = (0..48).map(|i| i as f32).collect();
        let s = FieldSeries::new("u", FieldRole::Solution, grid, "1", values).unwrap();
        assert_eq!(s.frame(1)[0], 16.0);
        assert_eq!(s.field(2).values[15], 47.0);
    }
}
