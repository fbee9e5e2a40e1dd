//! Decomposition of global fields into uniform subdomain patches, neighbor
//! topology, and per-field normalization.
//!
//! Lattice coordinates follow the field axis convention (axis 0 slowest in
//! the flat index). Patch extents divide grid extents exactly; the union of
//! the patches reproduces the global field bit-for-bit.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::field::{Field, FieldSeries};
use crate::nn::NeighborTable;

/// A field split into patches of extent `patch` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainLattice {
    pub patch: usize,
    pub dims: usize,
    /// Lattice extents per axis (grid extent / patch extent).
    pub lattice: Vec<usize>,
    pub field: String,
    pub timestep: usize,
    /// Row-major over lattice coordinates; each patch row-major of len patch^dims.
    pub patches: Vec<Vec<f64>>,
}

impl SubdomainLattice {
    pub fn patch_count(&self) -> usize {
        self.lattice.iter().product()
    }

    pub fn patch_len(&self) -> usize {
        self.patch.pow(self.dims as u32)
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        lattice_flat(&self.lattice, coords)
    }
}

pub fn lattice_flat(lattice: &[usize], coords: &[usize]) -> usize {
    debug_assert_eq!(lattice.len(), coords.len());
    let mut flat = 0;
    for (c, e) in coords.iter().zip(lattice) {
        debug_assert!(c < e);
        flat = flat * e + c;
    }
    flat
}

pub fn lattice_coords(lattice: &[usize], mut flat: usize) -> Vec<usize> {
    let mut coords = vec![0; lattice.len()];
    for a in (0..lattice.len()).rev() {
        coords[a] = flat % lattice[a];
        flat /= lattice[a];
    }
    coords
}

/// Split `field` into patches of extent `p` per axis.
pub fn decompose(field: &Field, p: usize) -> Result<SubdomainLattice> {
    assert!(p >= 1);
    let dims = field.dims();
    let mut lattice = Vec::with_capacity(dims);
    for &e in &field.extents {
        if e % p != 0 {
            return Err(Error::NotDivisible {
                extent: e,
                patch: p,
                remainder: e % p,
            });
        }
        lattice.push(e / p);
    }
    let count: usize = lattice.iter().product();
    let plen = p.pow(dims as u32);
    let mut patches = vec![vec![0.0; plen]; count];

    // strides of the global field
    let gstr = strides(&field.extents);
    let pstr = strides(&vec![p; dims]);
    for (flat, patch) in patches.iter_mut().enumerate() {
        let lc = lattice_coords(&lattice, flat);
        for (pi, v) in patch.iter_mut().enumerate() {
            let pc = lattice_coords(&vec![p; dims], pi);
            let mut g = 0;
            for a in 0..dims {
                g += (lc[a] * p + pc[a]) * gstr[a];
            }
            debug_assert_eq!(pi, pc.iter().zip(&pstr).map(|(c, s)| c * s).sum::<usize>());
            *v = field.values[g];
        }
    }
    Ok(SubdomainLattice {
        patch: p,
        dims,
        lattice,
        field: field.name.clone(),
        timestep: 0,
        patches,
    })
}

/// Put the patches back into the global field. Exact inverse of
/// [`decompose`]: the round trip is bit-identical.
pub fn reassemble(lat: &SubdomainLattice) -> Result<Field> {
    let extents: Vec<usize> = lat.lattice.iter().map(|&n| n * lat.patch).collect();
    let plen = lat.patch_len();
    if lat.patches.len() != lat.patch_count() {
        return Err(Error::MissingPatch {
            coords: lattice_coords(&lat.lattice, lat.patches.len().min(lat.patch_count() - 1)),
        });
    }
    let mut values = vec![0.0; extents.iter().product()];
    let gstr = strides(&extents);
    for (flat, patch) in lat.patches.iter().enumerate() {
        if patch.len() != plen {
            return Err(Error::MissingPatch {
                coords: lattice_coords(&lat.lattice, flat),
            });
        }
        let lc = lattice_coords(&lat.lattice, flat);
        for (pi, &v) in patch.iter().enumerate() {
            let pc = lattice_coords(&vec![lat.patch; lat.dims], pi);
            let mut g = 0;
            for a in 0..lat.dims {
                g += (lc[a] * lat.patch + pc[a]) * gstr[a];
            }
            values[g] = v;
        }
    }
    Ok(Field::new(lat.field.clone(), extents, values))
}

fn strides(extents: &[usize]) -> Vec<usize> {
    let mut s = vec![1; extents.len()];
    for a in (0..extents.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * extents[a + 1];
    }
    s
}

/// How a missing neighbor beyond the lattice edge is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisPolicy {
    /// Feed the all-zero sentinel latent.
    Zero,
    /// Reuse the center subdomain's own latent.
    Replicate,
    /// Wrap around to the opposite edge.
    Periodic,
}

impl AxisPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AxisPolicy::Zero => "zero",
            AxisPolicy::Replicate => "replicate",
            AxisPolicy::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(AxisPolicy::Zero),
            "replicate" => Ok(AxisPolicy::Replicate),
            "periodic" => Ok(AxisPolicy::Periodic),
            other => Err(Error::invalid(format!("unknown neighbor policy `{other}`"))),
        }
    }
}

/// One resolution mode per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborPolicy {
    pub modes: Vec<AxisPolicy>,
}

impl NeighborPolicy {
    pub fn uniform(mode: AxisPolicy, dims: usize) -> Self {
        NeighborPolicy {
            modes: vec![mode; dims],
        }
    }

    pub fn encode(&self) -> String {
        self.modes
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let modes = s
            .split(',')
            .map(AxisPolicy::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(NeighborPolicy { modes })
    }
}

/// A face neighbor: either a real lattice entry or the zero-latent sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborRef {
    Patch(usize),
    ZeroLatent,
}

/// Face neighbors of `coords` in fixed order [-x, +x, -y, +y (, -z, +z)],
/// plus the center's flat id. Out-of-range neighbors are resolved by the
/// per-axis policy.
pub fn neighbor_ids(
    lattice: &[usize],
    coords: &[usize],
    policy: &NeighborPolicy,
) -> (usize, Vec<NeighborRef>) {
    debug_assert_eq!(lattice.len(), coords.len());
    debug_assert_eq!(policy.modes.len(), lattice.len());
    let center = lattice_flat(lattice, coords);
    let mut out = Vec::with_capacity(2 * lattice.len());
    for a in 0..lattice.len() {
        for dir in [-1isize, 1] {
            let c = coords[a] as isize + dir;
            let n = lattice[a] as isize;
            let resolved = if c >= 0 && c < n {
                let mut nc = coords.to_vec();
                nc[a] = c as usize;
                NeighborRef::Patch(lattice_flat(lattice, &nc))
            } else {
                match policy.modes[a] {
                    AxisPolicy::Zero => NeighborRef::ZeroLatent,
                    AxisPolicy::Replicate => NeighborRef::Patch(center),
                    AxisPolicy::Periodic => {
                        let mut nc = coords.to_vec();
                        nc[a] = c.rem_euclid(n) as usize;
                        NeighborRef::Patch(lattice_flat(lattice, &nc))
                    }
                }
            };
            out.push(resolved);
        }
    }
    (center, out)
}

/// Fusion gather table over the whole lattice: one row per subdomain, with
/// members ordered [center, -x, +x, -y, +y (, -z, +z)].
pub fn fusion_table(lattice: &[usize], policy: &NeighborPolicy) -> Rc<NeighborTable> {
    let n: usize = lattice.iter().product();
    let members = 2 * lattice.len() + 1;
    let mut rows = Vec::with_capacity(n);
    for flat in 0..n {
        let coords = lattice_coords(lattice, flat);
        let (center, neighbors) = neighbor_ids(lattice, &coords, policy);
        let mut row = Vec::with_capacity(members);
        row.push(Some(center));
        row.extend(neighbors.iter().map(|r| match r {
            NeighborRef::Patch(i) => Some(*i),
            NeighborRef::ZeroLatent => None,
        }));
        rows.push(row);
    }
    Rc::new(NeighborTable { members, rows })
}

/// Per-field z-score statistics computed over the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// Set when the field was constant and std was clamped to 1.
    pub clamped: bool,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: 0.0,
            std: 1.0,
            clamped: false,
        }
    }

    /// Two-pass mean/std over every cell of every frame of every series.
    pub fn compute(series: &[&FieldSeries]) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        for s in series {
            for &v in &s.values {
                sum += v as f64;
                n += 1;
            }
        }
        assert!(n > 0, "cannot compute stats over an empty series set");
        let mean = sum / n as f64;
        let mut var = 0.0f64;
        for s in series {
            for &v in &s.values {
                let d = v as f64 - mean;
                var += d * d;
            }
        }
        let std = (var / n as f64).sqrt();
        if std < 1e-12 {
            NormStats {
                mean,
                std: 1.0,
                clamped: true,
            }
        } else {
            NormStats {
                mean,
                std,
                clamped: false,
            }
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn normalize_field(&self, f: &Field) -> Field {
        Field::new(
            f.name.clone(),
            f.extents.clone(),
            f.values.iter().map(|&v| self.normalize(v)).collect(),
        )
    }

    pub fn denormalize_field(&self, f: &Field) -> Field {
        Field::new(
            f.name.clone(),
            f.extents.clone(),
            f.values.iter().map(|&v| self.denormalize(v)).collect(),
        )
    }
}
