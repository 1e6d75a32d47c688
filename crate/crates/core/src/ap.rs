//! Asymptotic-preserving reference solver.
//!
//! The transport equation is rewritten in even/odd parities
//! `r = [f(v) + f(-v)]/2`, `j = [f(v) - f(-v)]/(2 eps)` on the half velocity
//! range, then advanced by operator splitting: an implicit relaxation step
//! (explicitly solvable because the density is invariant under it, with the
//! stiff `v dr/dx` term folded in) followed by an explicit centered transport
//! step. As eps -> 0 the scheme relaxes onto `j = -(v/sigma) dr/dx` and the
//! density obeys the limiting diffusion equation, which the companion
//! [`diffusion_solve`] integrates directly.

use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use crate::physics::{BoundaryCondition, ProblemSpec};
use crate::quadrature::{VelocityQuadrature, VelocityRange};

#[derive(Debug, Error)]
pub enum ApError {
    #[error("time step {dt} violates the parabolic constraint dt <= {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("diffusion step {dt} violates the explicit stability bound {limit}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("velocity {0} does not match any quadrature node")]
    NonNodeVelocity(f64),
}

/// Discretization of one AP run: uniform cell-centered x grid, half-range
/// velocity rule, boundary closure inherited from the problem.
#[derive(Clone)]
pub struct ApConfig {
    pub dx: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub sigma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub boundary: BoundaryCondition,
    pub quad: VelocityQuadrature,
    xs: Vec<f64>,
    sigma_at_centers: Vec<f64>,
}

impl ApConfig {
    pub fn new(
        spec: &ProblemSpec,
        dx: f64,
        dt: f64,
        quad: VelocityQuadrature,
    ) -> Result<Self, ApError> {
        assert_eq!(quad.range(), VelocityRange::Half, "AP solver needs a half-range rule");
        let limit = 0.5 * dx * dx;
        if dt > limit * (1.0 + 1e-12) {
            return Err(ApError::CflViolation { dt, limit });
        }
        let nx = (1.0 / dx).round() as usize;
        let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let sigma_at_centers: Vec<f64> = xs.iter().map(|&x| (spec.sigma)(x)).collect();
        assert!(
            sigma_at_centers.iter().all(|&s| s > 0.0),
            "sigma must be positive on the domain"
        );
        Ok(ApConfig {
            dx,
            dt,
            epsilon: spec.epsilon,
            sigma: spec.sigma.clone(),
            boundary: spec.boundary.clone(),
            quad,
            xs,
            sigma_at_centers,
        })
    }

    /// The benchmark reference mesh: dx = 1/40, dt = dx^2/2, 16 half-range
    /// Gauss nodes.
    pub fn reference(spec: &ProblemSpec) -> Self {
        let dx = 1.0 / 40.0;
        Self::new(spec, dx, 0.5 * dx * dx, VelocityQuadrature::gauss_legendre_half(16))
            .expect("reference mesh satisfies its own CFL")
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
}

/// Even/odd parity state on the (v_k, x_i) grid.
#[derive(Clone, Debug)]
pub struct ParityField {
    pub r: Array2<f64>,
    pub j: Array2<f64>,
    pub time: f64,
}

/// Density `rho_i = sum_k w_k r(x_i, v_k)` over the half-range rule.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub rho: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    /// Total mass `sum_i rho_i dx`.
    pub fn mass(&self, dx: f64) -> f64 {
        self.rho.iter().sum::<f64>() * dx
    }
}

/// Parity decomposition of the initial data at the grid points.
pub fn init_parity(spec: &ProblemSpec, config: &ApConfig) -> ParityField {
    let nv = config.quad.len();
    let nx = config.nx();
    let mut r = Array2::zeros((nv, nx));
    let mut j = Array2::zeros((nv, nx));
    let half_inv_eps = 1.0 / (2.0 * spec.epsilon);
    for (k, &v) in config.quad.nodes().iter().enumerate() {
        for (i, &x) in config.xs.iter().enumerate() {
            let plus = (spec.initial_condition)(x, v);
            let minus = (spec.initial_condition)(x, -v);
            r[(k, i)] = 0.5 * (plus + minus);
            j[(k, i)] = half_inv_eps * (plus - minus);
        }
    }
    ParityField { r, j, time: 0.0 }
}

/// Ghost (r, j) just outside each wall for one velocity node, built from the
/// prescribed incoming data and a first-order extrapolation of the outgoing
/// part. Periodic grids never call this.
fn wall_ghosts(
    r_first: f64,
    j_first: f64,
    r_last: f64,
    j_last: f64,
    v: f64,
    eps: f64,
    time: f64,
    boundary: &BoundaryCondition,
) -> ((f64, f64), (f64, f64)) {
    match boundary {
        BoundaryCondition::Periodic => unreachable!("periodic uses wraparound"),
        BoundaryCondition::Inflow { left, right } => {
            // left wall: f(+v) = g_left, f(-v) extrapolated from cell 0
            let g_l = left(time, v);
            let f_out_l = r_first - eps * j_first;
            let left_ghost = (0.5 * (g_l + f_out_l), (g_l - f_out_l) / (2.0 * eps));
            // right wall: f(-v) = g_right, f(+v) extrapolated from the last cell
            let g_r = right(time, -v);
            let f_out_r = r_last + eps * j_last;
            let right_ghost = (0.5 * (f_out_r + g_r), (f_out_r - g_r) / (2.0 * eps));
            (left_ghost, right_ghost)
        }
        BoundaryCondition::Specular => ((r_first, -j_first), (r_last, -j_last)),
    }
}

/// Centered difference of `row` at every cell, honoring the boundary closure.
fn centered_diff(
    row: &[f64],
    ghost_left: f64,
    ghost_right: f64,
    periodic: bool,
    dx: f64,
    out: &mut [f64],
) {
    let n = row.len();
    let inv = 1.0 / (2.0 * dx);
    for i in 0..n {
        let lo = if i == 0 {
            if periodic { row[n - 1] } else { ghost_left }
        } else {
            row[i - 1]
        };
        let hi = if i == n - 1 {
            if periodic { row[0] } else { ghost_right }
        } else {
            row[i + 1]
        };
        out[i] = (hi - lo) * inv;
    }
}

fn relaxation_step_dt(state: &mut ParityField, config: &ApConfig, dt: f64) {
    let nv = config.quad.len();
    let nx = config.nx();
    let eps2 = config.epsilon * config.epsilon;
    let periodic = matches!(config.boundary, BoundaryCondition::Periodic);

    // rho is invariant under this step, so the implicit update is explicit.
    let mut rho = vec![0.0; nx];
    for (k, &w) in config.quad.weights().iter().enumerate() {
        for i in 0..nx {
            rho[i] += w * state.r[(k, i)];
        }
    }
    let q: Vec<f64> = config.sigma_at_centers.iter().map(|&s| dt * s / eps2).collect();
    for k in 0..nv {
        for i in 0..nx {
            state.r[(k, i)] = (state.r[(k, i)] + q[i] * rho[i]) / (1.0 + q[i]);
        }
    }

    // j <- (j - (dt v / eps^2) D_c r*) / (1 + q), which relaxes onto the
    // diffusive flux -(v/sigma) dr/dx as eps -> 0.
    let mut diff = vec![0.0; nx];
    for (k, &v) in config.quad.nodes().iter().enumerate() {
        let r_row: Vec<f64> = (0..nx).map(|i| state.r[(k, i)]).collect();
        let (ghost_l, ghost_r) = if periodic {
            (0.0, 0.0)
        } else {
            let ((rl, _), (rr, _)) = wall_ghosts(
                r_row[0],
                state.j[(k, 0)],
                r_row[nx - 1],
                state.j[(k, nx - 1)],
                v,
                config.epsilon,
                state.time,
                &config.boundary,
            );
            (rl, rr)
        };
        centered_diff(&r_row, ghost_l, ghost_r, periodic, config.dx, &mut diff);
        let coeff = dt * v / eps2;
        for i in 0..nx {
            state.j[(k, i)] = (state.j[(k, i)] - coeff * diff[i]) / (1.0 + q[i]);
        }
    }
}

fn transport_step_dt(state: &mut ParityField, config: &ApConfig, dt: f64) -> Result<(), ApError> {
    let limit = 0.5 * config.dx * config.dx;
    if dt > limit * (1.0 + 1e-12) {
        return Err(ApError::CflViolation { dt, limit });
    }
    let nx = config.nx();
    let periodic = matches!(config.boundary, BoundaryCondition::Periodic);
    let mut diff = vec![0.0; nx];
    for (k, &v) in config.quad.nodes().iter().enumerate() {
        let j_row: Vec<f64> = (0..nx).map(|i| state.j[(k, i)]).collect();
        let (ghost_l, ghost_r) = if periodic {
            (0.0, 0.0)
        } else {
            let ((_, jl), (_, jr)) = wall_ghosts(
                state.r[(k, 0)],
                j_row[0],
                state.r[(k, nx - 1)],
                j_row[nx - 1],
                v,
                config.epsilon,
                state.time,
                &config.boundary,
            );
            (jl, jr)
        };
        centered_diff(&j_row, ghost_l, ghost_r, periodic, config.dx, &mut diff);
        for i in 0..nx {
            state.r[(k, i)] -= dt * v * diff[i];
        }
    }
    Ok(())
}

/// Relaxation substep at the configured dt.
pub fn relaxation_step(state: &mut ParityField, config: &ApConfig) {
    relaxation_step_dt(state, config, config.dt);
}

/// Transport substep at the configured dt.
pub fn transport_step(state: &mut ParityField, config: &ApConfig) -> Result<(), ApError> {
    transport_step_dt(state, config, config.dt)
}

/// One full step: relaxation, then transport; advances `state.time` by dt.
pub fn step(state: &mut ParityField, config: &ApConfig) -> Result<(), ApError> {
    step_dt(state, config, config.dt)
}

fn step_dt(state: &mut ParityField, config: &ApConfig, dt: f64) -> Result<(), ApError> {
    relaxation_step_dt(state, config, dt);
    transport_step_dt(state, config, dt)?;
    state.time += dt;
    Ok(())
}

/// Advance to exactly `t_target`, shortening the final step if needed.
pub fn run_until(state: &mut ParityField, config: &ApConfig, t_target: f64) -> Result<(), ApError> {
    while state.time < t_target - 1e-14 {
        let dt = config.dt.min(t_target - state.time);
        step_dt(state, config, dt)?;
    }
    state.time = t_target;
    Ok(())
}

/// `rho_i = sum_k w_k r(x_i, v_k)`; half of the full-range velocity integral
/// of f.
pub fn density(state: &ParityField, config: &ApConfig) -> DensityField {
    let nx = config.nx();
    let mut rho = vec![0.0; nx];
    for (k, &w) in config.quad.weights().iter().enumerate() {
        for i in 0..nx {
            rho[i] += w * state.r[(k, i)];
        }
    }
    DensityField { rho, time: state.time }
}

/// Recover f(x_i, v) from the parities: `r + eps j` for v > 0, `r - eps j`
/// for v < 0. `|v|` must match a quadrature node.
pub fn reconstruct_f(state: &ParityField, config: &ApConfig, v: f64) -> Result<Vec<f64>, ApError> {
    let speed = v.abs();
    let k = config
        .quad
        .nodes()
        .iter()
        .position(|&n| (n - speed).abs() < 1e-12)
        .ok_or(ApError::NonNodeVelocity(v))?;
    let nx = config.nx();
    let sign = if v >= 0.0 { 1.0 } else { -1.0 };
    Ok((0..nx)
        .map(|i| state.r[(k, i)] + sign * config.epsilon * state.j[(k, i)])
        .collect())
}

/// Explicit conservative solver for the limiting diffusion equation
/// `d rho / dt = d/dx ( (1/(3 sigma)) d rho / dx )`, with the initial density
/// taken from the problem's kinetic initial data. Returns the trajectory at
/// every step, initial state included.
pub fn diffusion_solve(
    spec: &ProblemSpec,
    dx: f64,
    dt: f64,
    t_final: f64,
) -> Result<Vec<DensityField>, ApError> {
    let nx = (1.0 / dx).round() as usize;
    let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
    let sigma_mid: Vec<f64> = (0..=nx)
        .map(|i| (spec.sigma)(i as f64 * dx))
        .collect();
    let min_sigma = sigma_mid.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = dx * dx * 3.0 * min_sigma / 2.0;
    if dt > limit * (1.0 + 1e-12) {
        return Err(ApError::StabilityViolation { dt, limit });
    }

    // initial density from the parity integral of f0
    let quad = VelocityQuadrature::gauss_legendre_half(64);
    let mut rho: Vec<f64> = xs
        .iter()
        .map(|&x| {
            quad.nodes()
                .iter()
                .zip(quad.weights())
                .map(|(&v, &w)| {
                    w * 0.5 * ((spec.initial_condition)(x, v) + (spec.initial_condition)(x, -v))
                })
                .sum()
        })
        .collect();

    let periodic = matches!(spec.boundary, BoundaryCondition::Periodic);
    // Dirichlet wall densities in the inflow case: the isotropic mean of the
    // incoming data (exact for v-independent data, first order otherwise).
    let wall_values = |t: f64| -> (f64, f64) {
        match &spec.boundary {
            BoundaryCondition::Inflow { left, right } => {
                let mean = |g: &Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, s: f64| {
                    quad.nodes()
                        .iter()
                        .zip(quad.weights())
                        .map(|(&v, &w)| w * g(t, s * v))
                        .sum::<f64>()
                };
                (mean(left, 1.0), mean(right, -1.0))
            }
            _ => (0.0, 0.0),
        }
    };

    let steps = (t_final / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(DensityField { rho: rho.clone(), time: 0.0 });
    let mut time = 0.0;
    let mut flux = vec![0.0; nx + 1];
    while time < t_final - 1e-14 {
        let step_dt = dt.min(t_final - time);
        // fluxes at the nx+1 faces
        for i in 1..nx {
            flux[i] = (rho[i] - rho[i - 1]) / (dx * 3.0 * sigma_mid[i]);
        }
        if periodic {
            let wrap = (rho[0] - rho[nx - 1]) / (dx * 3.0 * sigma_mid[0]);
            flux[0] = wrap;
            flux[nx] = wrap;
        } else {
            match &spec.boundary {
                BoundaryCondition::Inflow { .. } => {
                    let (gl, gr) = wall_values(time);
                    // ghost by linear extrapolation through the wall value
                    let ghost_l = 2.0 * gl - rho[0];
                    let ghost_r = 2.0 * gr - rho[nx - 1];
                    flux[0] = (rho[0] - ghost_l) / (dx * 3.0 * sigma_mid[0]);
                    flux[nx] = (ghost_r - rho[nx - 1]) / (dx * 3.0 * sigma_mid[nx]);
                }
                // zero-flux walls
                _ => {
                    flux[0] = 0.0;
                    flux[nx] = 0.0;
                }
            }
        }
        for i in 0..nx {
            rho[i] += step_dt / dx * (flux[i + 1] - flux[i]);
        }
        time = if t_final - time <= dt * (1.0 + 1e-12) { t_final } else { time + step_dt };
        out.push(DensityField { rho: rho.clone(), time });
    }
    Ok(out)
}
