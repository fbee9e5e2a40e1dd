//! Geometric data augmentation: two reflections (across the x-z and y-z
//! planes) and one 90-degree rotation about the z axis. All ops are exact
//! cell permutations, so involution and rotation-order-4 relations hold
//! bit-for-bit. Condition fields transform with the same permutation, so
//! source imprints (e.g. a laser track) move with the geometry.

use crate::error::{Error, Result};
use crate::field::FieldSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    /// Mirror across the x-z plane: flips the y axis.
    ReflectXz,
    /// Mirror across the y-z plane: flips the x axis.
    ReflectYz,
    /// Rotate 90 degrees about the z axis; requires n_x == n_y.
    Rotate90Z,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 3] = [AugmentOp::ReflectXz, AugmentOp::ReflectYz, AugmentOp::Rotate90Z];

    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::ReflectXz => "reflect_xz",
            AugmentOp::ReflectYz => "reflect_yz",
            AugmentOp::Rotate90Z => "rotate90_z",
        }
    }
}

/// Apply `op` to every series in the set.
pub fn augment(series: &[FieldSeries], op: AugmentOp) -> Result<Vec<FieldSeries>> {
    series.iter().map(|s| augment_series(s, op)).collect()
}

pub fn augment_series(s: &FieldSeries, op: AugmentOp) -> Result<FieldSeries> {
    let ext = &s.grid.extents;
    let (nx, ny) = (ext[0], ext[1]);
    let nz = if ext.len() == 3 { ext[2] } else { 1 };
    if op == AugmentOp::Rotate90Z && nx != ny {
        return Err(Error::invalid(format!(
            "rotate90_z needs a square horizontal extent, got {nx} x {ny}"
        )));
    }

    let mut grid = s.grid.clone();
    if op == AugmentOp::Rotate90Z {
        grid.extents.swap(0, 1);
        grid.lengths.swap(0, 1);
    }

    let cells = s.grid.cells();
    let mut values = vec![0.0f32; s.values.len()];
    for t in 0..s.grid.steps {
        let src = &s.values[t * cells..(t + 1) * cells];
        let dst = &mut values[t * cells..(t + 1) * cells];
        for x in 0..nx {
            for y in 0..ny {
                let src_xy = match op {
                    AugmentOp::ReflectXz => (x, ny - 1 - y),
                    AugmentOp::ReflectYz => (nx - 1 - x, y),
                    // out(x, y) = in(y, n - 1 - x)
                    AugmentOp::Rotate90Z => (y, nx - 1 - x),
                };
                for z in 0..nz {
                    dst[(x * ny + y) * nz + z] = src[(src_xy.0 * ny + src_xy.1) * nz + z];
                }
            }
        }
    }
    FieldSeries::new(s.name.clone(), s.role, grid, s.units.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldRole, GridSpec};

    fn sample_series(nx: usize, ny: usize) -> FieldSeries {
        let grid = GridSpec::new(vec![nx, ny], vec![1.0, 1.0], 0.1, 2).unwrap();
        let values: Vec<f32> = (0..2 * nx * ny).map(|i| i as f32).collect();
        FieldSeries::new("u", FieldRole::Solution, grid, "1", values).unwrap()
    }

    #[test]
    fn reflections_are_involutions() {
        let s = sample_series(6, 4);
        for op in [AugmentOp::ReflectXz, AugmentOp::ReflectYz] {
            let once = augment_series(&s, op).unwrap();
            assert_ne!(once.values, s.values);
            let twice = augment_series(&once, op).unwrap();
            assert_eq!(twice, s);
        }
    }

    #[test]
    fn rotation_has_order_four() {
        let s = sample_series(5, 5);
        let mut r = s.clone();
        for _ in 0..4 {
            r = augment_series(&r, AugmentOp::Rotate90Z).unwrap();
        }
        assert_eq!(r, s);
        let once = augment_series(&s, AugmentOp::Rotate90Z).unwrap();
        assert_ne!(once.values, s.values);
    }

    #[test]
    fn rotation_rejects_non_square_extents() {
        let s = sample_series(6, 4);
        assert!(augment_series(&s, AugmentOp::Rotate90Z).is_err());
    }

    #[test]
    fn reflect_moves_cells_across_the_plane() {
        let s = sample_series(4, 4);
        let r = augment_series(&s, AugmentOp::ReflectYz).unwrap();
        // cell (0, 1) of the image holds cell (3, 1) of the original
        assert_eq!(r.frame(0)[1], s.frame(0)[3 * 4 + 1]);
    }

    #[test]
    fn base_simulations_times_four_variants() {
        // identity + 3 augmentations turn 12 base samples into 48
        let base: Vec<FieldSeries> = (0..12).map(|_| sample_series(4, 4)).collect();
        let mut total = base.len();
        for op in AugmentOp::ALL {
            total += base.len();
            for s in &base {
                augment_series(s, op).unwrap();
            }
        }
        assert_eq!(total, 48);
    }

    #[test]
    fn three_d_rotation_keeps_z_slices_together() {
        let grid = GridSpec::new(vec![4, 4, 4], vec![1.0, 1.0, 0.5], 0.1, 2).unwrap();
        let values: Vec<f32> = (0..128).map(|i| i as f32).collect();
        let s = FieldSeries::new("t", FieldRole::Solution, grid, "1", values).unwrap();
        let mut r = s.clone();
        for _ in 0..4 {
            r = augment_series(&r, AugmentOp::Rotate90Z).unwrap();
        }
        assert_eq!(r, s);
    }
}
