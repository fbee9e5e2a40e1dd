//! Explicit reference solvers. All state is f64; generators cast to f32
//! only when storing frames. Boundary handling is chosen so the discrete
//! conservation audits hold to rounding: reflective walls give exactly zero
//! wall mass flux in the shallow-water scheme, and mirrored ghosts make the
//! heat/diffusion Laplacian telescoping.

use crate::error::{Error, Result};

/// Two-field reaction-diffusion stepper (explicit Euler, 5-point Laplacian,
/// no-flux boundaries). Reactions: R_u = u - u^3 - k - v, R_v = u - v.
#[derive(Debug, Clone)]
pub struct DiffReactSolver {
    pub ext: [usize; 2],
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub du: f64,
    pub dv: f64,
    pub k: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl DiffReactSolver {
    pub fn new(
        ext: [usize; 2],
        spacing: [f64; 2],
        dt: f64,
        du: f64,
        dv: f64,
        k: f64,
        u0: Vec<f64>,
        v0: Vec<f64>,
    ) -> Result<Self> {
        let cells = ext[0] * ext[1];
        assert_eq!(u0.len(), cells);
        assert_eq!(v0.len(), cells);
        let [dx, dy] = spacing;
        let cfl = du.max(dv) * dt * (1.0 / (dx * dx) + 1.0 / (dy * dy));
        if cfl > 0.25 {
            return Err(Error::Stability {
                scheme: "diffusion-reaction explicit Euler",
                cfl,
                limit: 0.25,
            });
        }
        Ok(DiffReactSolver {
            ext,
            dx,
            dy,
            dt,
            du,
            dv,
            k,
            u: u0,
            v: v0,
        })
    }

    pub fn step(&mut self) {
        let [nx, ny] = self.ext;
        let (rx, ry) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        let mut un = vec![0.0; nx * ny];
        let mut vn = vec![0.0; nx * ny];
        let at = |f: &[f64], i: isize, j: isize| -> f64 {
            // no-flux: mirror ghost cells
            let i = i.clamp(0, nx as isize - 1) as usize;
            let j = j.clamp(0, ny as isize - 1) as usize;
            f[i * ny + j]
        };
        for i in 0..nx {
            for j in 0..ny {
                let (ii, jj) = (i as isize, j as isize);
                let uc = self.u[i * ny + j];
                let vc = self.v[i * ny + j];
                let lap_u = (at(&self.u, ii - 1, jj) - 2.0 * uc + at(&self.u, ii + 1, jj)) * rx
                    + (at(&self.u, ii, jj - 1) - 2.0 * uc + at(&self.u, ii, jj + 1)) * ry;
                let lap_v = (at(&self.v, ii - 1, jj) - 2.0 * vc + at(&self.v, ii + 1, jj)) * rx
                    + (at(&self.v, ii, jj - 1) - 2.0 * vc + at(&self.v, ii, jj + 1)) * ry;
                let ru = uc - uc * uc * uc - self.k - vc;
                let rv = uc - vc;
                un[i * ny + j] = uc + self.dt * (self.du * lap_u + ru);
                vn[i * ny + j] = vc + self.dt * (self.dv * lap_v + rv);
            }
        }
        self.u = un;
        self.v = vn;
    }
}

/// 2-D shallow-water stepper: local Lax-Friedrichs (Rusanov) finite-volume
/// fluxes on (h, hu, hv), reflective walls, conservative in h to rounding.
#[derive(Debug, Clone)]
pub struct SweSolver {
    pub ext: [usize; 2],
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub g: f64,
    pub h: Vec<f64>,
    pub hu: Vec<f64>,
    pub hv: Vec<f64>,
}

#[derive(Clone, Copy)]
struct SweState {
    h: f64,
    hu: f64,
    hv: f64,
}

impl SweSolver {
    pub fn new(
        ext: [usize; 2],
        spacing: [f64; 2],
        dt: f64,
        g: f64,
        h0: Vec<f64>,
    ) -> Result<Self> {
        let cells = ext[0] * ext[1];
        assert_eq!(h0.len(), cells);
        let s = SweSolver {
            ext,
            dx: spacing[0],
            dy: spacing[1],
            dt,
            g,
            h: h0,
            hu: vec![0.0; cells],
            hv: vec![0.0; cells],
        };
        s.check_cfl()?;
        Ok(s)
    }

    fn check_cfl(&self) -> Result<()> {
        let mut a_max: f64 = 0.0;
        for idx in 0..self.h.len() {
            let h = self.h[idx];
            if h <= 0.0 || !h.is_finite() {
                return Err(Error::NonFinite {
                    context: "shallow-water depth".into(),
                });
            }
            let c = (self.g * h).sqrt();
            let speed = (self.hu[idx] / h).abs().max((self.hv[idx] / h).abs()) + c;
            a_max = a_max.max(speed);
        }
        let cfl = a_max * self.dt / self.dx.min(self.dy);
        if cfl > 1.0 {
            return Err(Error::Stability {
                scheme: "shallow-water Lax-Friedrichs",
                cfl,
                limit: 1.0,
            });
        }
        Ok(())
    }

    fn state(&self, i: isize, j: isize) -> SweState {
        let [nx, ny] = self.ext;
        // reflective walls: mirror cell with the normal momentum negated
        let (ci, sx) = if i < 0 {
            (0usize, -1.0)
        } else if i >= nx as isize {
            (nx - 1, -1.0)
        } else {
            (i as usize, 1.0)
        };
        let (cj, sy) = if j < 0 {
            (0usize, -1.0)
        } else if j >= ny as isize {
            (ny - 1, -1.0)
        } else {
            (j as usize, 1.0)
        };
        let idx = ci * ny + cj;
        SweState {
            h: self.h[idx],
            hu: sx * self.hu[idx],
            hv: sy * self.hv[idx],
        }
    }

    fn flux_x(l: SweState, r: SweState, g: f64) -> [f64; 3] {
        let (ul, ur) = (l.hu / l.h, r.hu / r.h);
        let a = (ul.abs() + (g * l.h).sqrt()).max(ur.abs() + (g * r.h).sqrt());
        let fl = [
            l.hu,
            l.hu * ul + 0.5 * g * l.h * l.h,
            l.hv * ul,
        ];
        let fr = [
            r.hu,
            r.hu * ur + 0.5 * g * r.h * r.h,
            r.hv * ur,
        ];
        [
            0.5 * (fl[0] + fr[0]) - 0.5 * a * (r.h - l.h),
            0.5 * (fl[1] + fr[1]) - 0.5 * a * (r.hu - l.hu),
            0.5 * (fl[2] + fr[2]) - 0.5 * a * (r.hv - l.hv),
        ]
    }

    fn flux_y(l: SweState, r: SweState, g: f64) -> [f64; 3] {
        let (vl, vr) = (l.hv / l.h, r.hv / r.h);
        let a = (vl.abs() + (g * l.h).sqrt()).max(vr.abs() + (g * r.h).sqrt());
        let fl = [
            l.hv,
            l.hu * vl,
            l.hv * vl + 0.5 * g * l.h * l.h,
        ];
        let fr = [
            r.hv,
            r.hu * vr,
            r.hv * vr + 0.5 * g * r.h * r.h,
        ];
        [
            0.5 * (fl[0] + fr[0]) - 0.5 * a * (r.h - l.h),
            0.5 * (fl[1] + fr[1]) - 0.5 * a * (r.hu - l.hu),
            0.5 * (fl[2] + fr[2]) - 0.5 * a * (r.hv - l.hv),
        ]
    }

    pub fn step(&mut self) -> Result<()> {
        self.check_cfl()?;
        let [nx, ny] = self.ext;
        // interface fluxes computed once so cell updates telescope exactly
        let mut fx = vec![[0.0; 3]; (nx + 1) * ny];
        for fi in 0..=nx {
            for j in 0..ny {
                let l = self.state(fi as isize - 1, j as isize);
                let r = self.state(fi as isize, j as isize);
                fx[fi * ny + j] = Self::flux_x(l, r, self.g);
            }
        }
        let mut fy = vec![[0.0; 3]; nx * (ny + 1)];
        for i in 0..nx {
            for fj in 0..=ny {
                let l = self.state(i as isize, fj as isize - 1);
                let r = self.state(i as isize, fj as isize);
                fy[i * (ny + 1) + fj] = Self::flux_y(l, r, self.g);
            }
        }
        let (cx, cy) = (self.dt / self.dx, self.dt / self.dy);
        for i in 0..nx {
            for j in 0..ny {
                let idx = i * ny + j;
                let dfx = |c: usize| fx[(i + 1) * ny + j][c] - fx[i * ny + j][c];
                let dfy = |c: usize| fy[i * (ny + 1) + j + 1][c] - fy[i * (ny + 1) + j][c];
                self.h[idx] -= cx * dfx(0) + cy * dfy(0);
                self.hu[idx] -= cx * dfx(1) + cy * dfy(1);
                self.hv[idx] -= cx * dfx(2) + cy * dfy(2);
            }
        }
        Ok(())
    }

    /// Discrete mass: sum of h * dx * dy.
    pub fn mass(&self) -> f64 {
        self.h.iter().sum::<f64>() * self.dx * self.dy
    }
}

/// 3-D heat stepper with a volumetric source: explicit FTCS, adiabatic
/// (mirrored) boundaries.
#[derive(Debug, Clone)]
pub struct HeatSolver {
    pub ext: [usize; 3],
    pub spacing: [f64; 3],
    pub dt: f64,
    pub alpha: f64,
    pub rho_c: f64,
    pub temp: Vec<f64>,
}

impl HeatSolver {
    pub fn new(
        ext: [usize; 3],
        spacing: [f64; 3],
        dt: f64,
        alpha: f64,
        rho_c: f64,
        t0: Vec<f64>,
    ) -> Result<Self> {
        assert_eq!(t0.len(), ext[0] * ext[1] * ext[2]);
        let inv: f64 = spacing.iter().map(|s| 1.0 / (s * s)).sum();
        let cfl = alpha * dt * inv;
        if cfl > 0.5 {
            return Err(Error::Stability {
                scheme: "heat explicit FTCS",
                cfl,
                limit: 0.5,
            });
        }
        Ok(HeatSolver {
            ext,
            spacing,
            dt,
            alpha,
            rho_c,
            temp: t0,
        })
    }

    /// One explicit step with the given volumetric source (may be empty for
    /// no source).
    pub fn step(&mut self, source: &[f64]) {
        let [nx, ny, nz] = self.ext;
        debug_assert!(source.is_empty() || source.len() == self.temp.len());
        let r: Vec<f64> = self.spacing.iter().map(|s| 1.0 / (s * s)).collect();
        let mut tn = vec![0.0; self.temp.len()];
        let at = |f: &[f64], i: isize, j: isize, k: isize| -> f64 {
            let i = i.clamp(0, nx as isize - 1) as usize;
            let j = j.clamp(0, ny as isize - 1) as usize;
            let k = k.clamp(0, nz as isize - 1) as usize;
            f[(i * ny + j) * nz + k]
        };
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let idx = (i * ny + j) * nz + k;
                    let c = self.temp[idx];
                    let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                    let lap = (at(&self.temp, ii - 1, jj, kk) - 2.0 * c
                        + at(&self.temp, ii + 1, jj, kk))
                        * r[0]
                        + (at(&self.temp, ii, jj - 1, kk) - 2.0 * c
                            + at(&self.temp, ii, jj + 1, kk))
                            * r[1]
                        + (at(&self.temp, ii, jj, kk - 1) - 2.0 * c
                            + at(&self.temp, ii, jj, kk + 1))
                            * r[2];
                    let q = if source.is_empty() { 0.0 } else { source[idx] };
                    tn[idx] = c + self.dt * (self.alpha * lap + q / self.rho_c);
                }
            }
        }
        self.temp = tn;
    }

    /// Discrete thermal energy: sum of T * cell volume.
    pub fn energy(&self) -> f64 {
        self.temp.iter().sum::<f64>() * self.spacing.iter().product::<f64>()
    }
}

/// Raster motion of a laser spot: time-ordered way-segments interpolated
/// linearly in the solver step index, plus spot and material constants.
#[derive(Debug, Clone)]
pub struct LaserPath {
    /// (solver step index, x, y) in domain coordinates [0, L).
    pub waypoints: Vec<(usize, f64, f64)>,
    pub q0: f64,
    pub sigma: f64,
    pub conductivity: f64,
    pub density: f64,
    pub heat_capacity: f64,
}

impl LaserPath {
    pub fn alpha(&self) -> f64 {
        self.conductivity / (self.density * self.heat_capacity)
    }

    pub fn validate(&self, lengths: &[f64]) -> Result<()> {
        // zero power is allowed as the degenerate no-source case
        if self.q0 < 0.0 {
            return Err(Error::invalid("laser power amplitude must be non-negative"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid("laser spot radius must be positive"));
        }
        if self.waypoints.is_empty() {
            return Err(Error::invalid("laser path needs at least one way-segment"));
        }
        let mut last_t = 0;
        for (seg, &(t, x, y)) in self.waypoints.iter().enumerate() {
            if seg > 0 && t <= last_t {
                return Err(Error::invalid(format!(
                    "laser path way-segments must be time-ordered (segment {seg})"
                )));
            }
            last_t = t;
            if x < 0.0 || x > lengths[0] || y < 0.0 || y > lengths[1] {
                return Err(Error::PathOutOfDomain { segment: seg, x, y });
            }
        }
        Ok(())
    }

    /// Spot center at a solver step; clamped to the first/last waypoint
    /// outside the listed range.
    pub fn position(&self, step: usize) -> (f64, f64) {
        let wp = &self.waypoints;
        if step <= wp[0].0 {
            return (wp[0].1, wp[0].2);
        }
        for w in wp.windows(2) {
            let (t0, x0, y0) = w[0];
            let (t1, x1, y1) = w[1];
            if step <= t1 {
                let f = (step - t0) as f64 / (t1 - t0) as f64;
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            }
        }
        let last = wp[wp.len() - 1];
        (last.1, last.2)
    }

    /// Gaussian spot deposited on the top z layer at the given position.
    pub fn source_at(&self, ext: &[usize], spacing: &[f64], pos: (f64, f64)) -> Vec<f64> {
        let (nx, ny, nz) = (ext[0], ext[1], ext[2]);
        let mut q = vec![0.0; nx * ny * nz];
        let top = nz - 1;
        let two_s2 = 2.0 * self.sigma * self.sigma;
        for i in 0..nx {
            let x = (i as f64 + 0.5) * spacing[0];
            for j in 0..ny {
                let y = (j as f64 + 0.5) * spacing[1];
                let r2 = (x - pos.0) * (x - pos.0) + (y - pos.1) * (y - pos.1);
                q[(i * ny + j) * nz + top] = self.q0 * (-r2 / two_s2).exp();
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fields_advance_by_minus_k_dt() {
        // with u = v = 0 everywhere: R_u = -k, R_v = 0
        let k = 5e-3;
        let dt = 0.1;
        let mut s = DiffReactSolver::new(
            [4, 4],
            [1.0, 1.0],
            dt,
            0.0,
            0.0,
            k,
            vec![0.0; 16],
            vec![0.0; 16],
        )
        .unwrap();
        s.step();
        assert!(s.u.iter().all(|&u| u == -k * dt));
        assert!(s.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interior_step_matches_brute_force_oracle() {
        // independent 9-cell hand update with mirrored ghosts
        let (du, dv, k, dt, dx, dy) = (1e-3, 5e-3, 5e-3, 0.05, 0.5, 0.5);
        let u0: Vec<f64> = (0..9).map(|i| (i as f64) * 0.1 - 0.4).collect();
        let v0: Vec<f64> = (0..9).map(|i| ((i * 7 % 5) as f64) * 0.2 - 0.3).collect();
        let mut s =
            DiffReactSolver::new([3, 3], [dx, dy], dt, du, dv, k, u0.clone(), v0.clone()).unwrap();
        s.step();

        let g = |f: &[f64], i: isize, j: isize| -> f64 {
            let i = i.clamp(0, 2) as usize;
            let j = j.clamp(0, 2) as usize;
            f[i * 3 + j]
        };
        for i in 0..3isize {
            for j in 0..3isize {
                let uc = g(&u0, i, j);
                let vc = g(&v0, i, j);
                let lap_u = (g(&u0, i - 1, j) - 2.0 * uc + g(&u0, i + 1, j)) / (dx * dx)
                    + (g(&u0, i, j - 1) - 2.0 * uc + g(&u0, i, j + 1)) / (dy * dy);
                let lap_v = (g(&v0, i - 1, j) - 2.0 * vc + g(&v0, i + 1, j)) / (dx * dx)
                    + (g(&v0, i, j - 1) - 2.0 * vc + g(&v0, i, j + 1)) / (dy * dy);
                let eu = uc + dt * (du * lap_u + (uc - uc.powi(3) - k - vc));
                let ev = vc + dt * (dv * lap_v + (uc - vc));
                let idx = (i * 3 + j) as usize;
                assert!((s.u[idx] - eu).abs() < 1e-12, "u at {idx}");
                assert!((s.v[idx] - ev).abs() < 1e-12, "v at {idx}");
            }
        }
    }

    #[test]
    fn diffusion_stability_violation_reports_cfl() {
        let err = DiffReactSolver::new(
            [4, 4],
            [0.1, 0.1],
            1.0,
            1e-2,
            1e-2,
            5e-3,
            vec![0.0; 16],
            vec![0.0; 16],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("CFL number 2.0"), "got: {msg}");
    }

    #[test]
    fn uniform_rest_state_is_a_fixed_point() {
        let mut s = SweSolver::new([8, 8], [0.125, 0.125], 0.01, 1.0, vec![1.0; 64]).unwrap();
        for _ in 0..10 {
            s.step().unwrap();
        }
        assert!(s.h.iter().all(|&h| h == 1.0));
        assert!(s.hu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn dam_break_conserves_mass() {
        let n = 16;
        let dx = 1.0 / n as f64;
        let mut h0 = vec![1.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) * dx - 0.5;
                let y = (j as f64 + 0.5) * dx - 0.5;
                if (x * x + y * y).sqrt() < 0.25 {
                    h0[i * n + j] = 2.0;
                }
            }
        }
        let mut s = SweSolver::new([n, n], [dx, dx], 0.05 * dx, 1.0, h0).unwrap();
        let m0 = s.mass();
        for _ in 0..50 {
            s.step().unwrap();
        }
        let drift = ((s.mass() - m0) / m0).abs();
        assert!(drift < 1e-12, "mass drift {drift}");
    }

    #[test]
    fn swe_cfl_violation_is_refused() {
        let err = SweSolver::new([4, 4], [0.01, 0.01], 1.0, 1.0, vec![1.0; 16]).unwrap_err();
        assert!(matches!(err, Error::Stability { .. }));
    }

    #[test]
    fn heat_without_source_conserves_energy() {
        let ext = [6, 5, 4];
        let n = 6 * 5 * 4;
        let t0: Vec<f64> = (0..n).map(|i| ((i * 31 % 17) as f64) * 0.3).collect();
        let mut s = HeatSolver::new(ext, [0.2, 0.2, 0.2], 1e-3, 1.0, 1.0, t0).unwrap();
        let e0 = s.energy();
        for _ in 0..100 {
            s.step(&[]);
        }
        let drift = ((s.energy() - e0) / e0).abs();
        assert!(drift < 1e-12, "energy drift {drift}");
    }

    #[test]
    fn point_source_step_matches_brute_force_oracle() {
        // 3x3x3 block, unit point source at the center, one explicit step
        let (dt, dx, alpha, rho_c) = (1e-3, 0.5, 0.8, 2.0);
        let t0: Vec<f64> = (0..27).map(|i| ((i * 11 % 7) as f64) * 0.25).collect();
        let mut q = vec![0.0; 27];
        q[13] = 1.0;
        let mut s = HeatSolver::new([3, 3, 3], [dx, dx, dx], dt, alpha, rho_c, t0.clone()).unwrap();
        s.step(&q);

        let g = |i: isize, j: isize, k: isize| -> f64 {
            let i = i.clamp(0, 2) as usize;
            let j = j.clamp(0, 2) as usize;
            let k = k.clamp(0, 2) as usize;
            t0[(i * 3 + j) * 3 + k]
        };
        for i in 0..3isize {
            for j in 0..3isize {
                for k in 0..3isize {
                    let c = g(i, j, k);
                    let lap = (g(i - 1, j, k) - 2.0 * c + g(i + 1, j, k)
                        + g(i, j - 1, k)
                        + g(i, j + 1, k)
                        - 2.0 * c
                        + g(i, j, k - 1)
                        - 2.0 * c
                        + g(i, j, k + 1))
                        / (dx * dx);
                    let idx = ((i * 3 + j) * 3 + k) as usize;
                    let expect = c + dt * (alpha * lap + q[idx] / rho_c);
                    assert!((s.temp[idx] - expect).abs() < 1e-12, "cell {idx}");
                }
            }
        }
    }

    #[test]
    fn heat_stability_violation_is_refused() {
        assert!(HeatSolver::new([4, 4, 4], [0.1, 0.1, 0.1], 1.0, 1.0, 1.0, vec![0.0; 64]).is_err());
    }

    #[test]
    fn path_position_interpolates_between_waypoints() {
        let path = LaserPath {
            waypoints: vec![(0, 0.0, 0.0), (10, 1.0, 0.5)],
            q0: 1.0,
            sigma: 0.1,
            conductivity: 1.0,
            density: 1.0,
            heat_capacity: 1.0,
        };
        assert_eq!(path.position(0), (0.0, 0.0));
        assert_eq!(path.position(5), (0.5, 0.25));
        assert_eq!(path.position(10), (1.0, 0.5));
        assert_eq!(path.position(99), (1.0, 0.5));
    }

    #[test]
    fn path_leaving_domain_names_the_segment() {
        let path = LaserPath {
            waypoints: vec![(0, 0.5, 0.5), (5, 2.0, 0.5)],
            q0: 1.0,
            sigma: 0.1,
            conductivity: 1.0,
            density: 1.0,
            heat_capacity: 1.0,
        };
        let err = path.validate(&[1.0, 1.0, 0.5]).unwrap_err();
        assert!(matches!(err, Error::PathOutOfDomain { segment: 1, .. }));
    }
}
