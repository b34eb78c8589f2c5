//! One-dimensional advection–dispersion transport with nonlinear equilibrium
//! sorption, used as the data source for identification.
//!
//! The solver is a vertex-centred finite-volume scheme: central fluxes for
//! advection and dispersion, backward Euler in time, and a mass-conservative
//! Picard linearization of the storage term
//! `M(C) = C + (ρ_b/θ) C*(C)`. Each sweep is one tridiagonal solve.
//! The inlet is a flux (Robin) boundary `−θ D ∂C/∂x + q C = f(t)` and the
//! outlet has zero dispersive flux.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::isotherm::SorptionModel;
use crate::tridiag;

/// Picard convergence tolerance on concentration (mg/l, max norm).
pub const PICARD_TOL: f64 = 1e-10;
/// Maximum Picard sweeps per time step.
pub const PICARD_MAX_SWEEPS: usize = 50;
/// Grid Péclet number above which central advection is rejected.
pub const MAX_GRID_PECLET: f64 = 2.0;

/// Lower clamp for the concentration at which the storage slope is evaluated.
/// Keeps the Freundlich slope finite at the leading edge of the plume.
const SLOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Average linear velocity, cm/s.
    pub v_x: f64,
    /// Longitudinal dispersivity, cm.
    pub alpha_l: f64,
    pub theta: f64,
    /// Bulk density, g/cm³.
    pub rho_b: f64,
    /// Source pulse duration, s.
    pub t0: f64,
    /// Source concentration, mg/l.
    pub c0: f64,
    pub sorption: SorptionModel,
    pub sim_domain_length: f64,
    pub sim_dx: f64,
    pub sim_dt: f64,
    pub meas_x_count: usize,
    pub meas_dx: f64,
    pub meas_t_start: f64,
    pub meas_t_end: f64,
    pub meas_dt: f64,
    pub conc_floor: f64,
}

impl ScenarioConfig {
    /// Longitudinal dispersion coefficient `D_L = α_L v_x`, cm²/s.
    pub fn dispersion(&self) -> f64 {
        self.alpha_l * self.v_x
    }

    /// Ratio `ρ_b / θ`.
    pub fn sorption_ratio(&self) -> f64 {
        self.rho_b / self.theta
    }

    /// Darcy flux `q = v_x θ`.
    pub fn darcy_flux(&self) -> f64 {
        self.v_x * self.theta
    }

    /// Inlet mass flux `f0 = q C0`.
    pub fn source_flux(&self) -> f64 {
        self.darcy_flux() * self.c0
    }

    pub fn sim_node_count(&self) -> usize {
        (self.sim_domain_length / self.sim_dx).round() as usize + 1
    }

    pub fn meas_t_count(&self) -> usize {
        ((self.meas_t_end - self.meas_t_start) / self.meas_dt).round() as usize + 1
    }

    pub fn grid_peclet(&self) -> f64 {
        self.v_x * self.sim_dx / self.dispersion()
    }

    /// Checks every structural invariant and the grid Péclet bound.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let positive = [
            ("v_x", self.v_x),
            ("alpha_l", self.alpha_l),
            ("theta", self.theta),
            ("rho_b", self.rho_b),
            ("t0", self.t0),
            ("sim_domain_length", self.sim_domain_length),
            ("sim_dx", self.sim_dx),
            ("sim_dt", self.sim_dt),
            ("meas_dx", self.meas_dx),
            ("meas_dt", self.meas_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive (got {v})"));
            }
        }
        if !(self.c0 >= 0.0) {
            bad.push(format!("c0 must be non-negative (got {})", self.c0));
        }
        if !(self.conc_floor >= 0.0) {
            bad.push(format!("conc_floor must be non-negative (got {})", self.conc_floor));
        }
        if !(self.theta <= 1.0) {
            bad.push(format!("theta must not exceed 1 (got {})", self.theta));
        }
        if self.meas_x_count < 2 {
            bad.push("meas_x_count must be at least 2".into());
        }
        if !(self.meas_t_start >= 0.0 && self.meas_t_start < self.meas_t_end) {
            bad.push(format!("measurement window [{}, {}] is empty or negative", self.meas_t_start, self.meas_t_end));
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        if self.sim_dx > self.meas_dx {
            bad.push(format!("sim_dx {} exceeds meas_dx {}", self.sim_dx, self.meas_dx));
        }
        let span = (self.meas_x_count - 1) as f64 * self.meas_dx;
        if self.sim_domain_length < 2.0 * span - 1e-9 {
            bad.push(format!(
                "sim_domain_length {} is shorter than twice the measurement span {}",
                self.sim_domain_length, span
            ));
        }
        if self.grid_peclet() > MAX_GRID_PECLET {
            bad.push(format!("grid Peclet number {} exceeds {}", self.grid_peclet(), MAX_GRID_PECLET));
        }
        if let Err(e) = self.sorption.validate() {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Result of a transport simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Concentration on the simulation nodes at every output time
    /// (`0, meas_dt, 2 meas_dt, …` up to `meas_t_end`).
    pub field: Field,
    /// Cumulative mass leaving through the outlet at each output time
    /// (per unit cross-section, same units as `f0 · t`).
    pub outflow: Vec<f64>,
    /// Largest number of Picard sweeps used by any time step.
    pub max_sweeps: usize,
}

/// Solves the transport problem from `t = 0` to `meas_t_end`.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate()?;

    let n = config.sim_node_count();
    let dx = config.sim_domain_length / (n - 1) as f64;
    let dt = config.sim_dt;
    let v = config.v_x;
    let d = config.dispersion();
    let ratio = config.sorption_ratio();
    let iso = config.sorption;

    let steps_per_output = (config.meas_dt / dt).round() as usize;
    if steps_per_output == 0 || ((steps_per_output as f64) * dt - config.meas_dt).abs() > 1e-9 * config.meas_dt {
        return Err(Error::Config(format!("meas_dt {} is not an integer multiple of sim_dt {}", config.meas_dt, dt)));
    }
    let n_out = (config.meas_t_end / config.meas_dt).round() as usize + 1;
    let total_steps = (n_out - 1) * steps_per_output;

    let storage = |c: f64| c + ratio * iso.value_unchecked(c.max(0.0));
    let storage_slope = |c: f64| 1.0 + ratio * iso.slope_unchecked(c.max(SLOPE_FLOOR));
    let linear = iso.is_inert();

    // Face flux F_{i+1/2} = a C_i + b C_{i+1} (already divided by θ).
    let a = d / dx + 0.5 * v;
    let b = -d / dx + 0.5 * v;
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };

    let mut lower = vec![0.0; n];
    let mut diag_base = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        if i == 0 {
            diag_base[i] = a;
            upper[i] = b;
        } else if i == n - 1 {
            lower[i] = -a;
            diag_base[i] = -b + v;
        } else {
            lower[i] = -a;
            diag_base[i] = a - b;
            upper[i] = b;
        }
    }

    let mut c = vec![0.0; n];
    let mut c_iter = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut m_old = vec![0.0; n];

    // location-major output buffer
    let mut out = vec![0.0; n * n_out];
    let mut outflow = vec![0.0; n_out];
    let mut cumulative_out = 0.0;
    let mut max_sweeps = 0;

    for step in 1..=total_steps {
        let t_new = step as f64 * dt;
        let inlet = if t_new <= config.t0 + 1e-9 * dt { v * config.c0 } else { 0.0 };

        for i in 0..n {
            m_old[i] = storage(c[i]);
        }
        c_iter.copy_from_slice(&c);

        let mut sweeps = 0;
        loop {
            sweeps += 1;
            for i in 0..n {
                let w = weight(i) * dx / dt;
                let (slope, resid) = if linear {
                    (1.0, m_old[i])
                } else {
                    let s = storage_slope(c_iter[i]);
                    (s, m_old[i] - storage(c_iter[i]) + s * c_iter[i])
                };
                diag[i] = diag_base[i] + w * slope;
                rhs[i] = w * resid;
            }
            rhs[0] += inlet;
            tridiag::solve_in_place(&lower, &diag, &upper, &mut rhs, &mut scratch);

            let change = rhs.iter().zip(&c_iter).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            c_iter.copy_from_slice(&rhs);
            if change < PICARD_TOL || linear && sweeps >= 1 {
                break;
            }
            if sweeps >= PICARD_MAX_SWEEPS {
                return Err(Error::SolverDivergence { time: t_new, iterations: sweeps, last_change: change });
            }
        }
        max_sweeps = max_sweeps.max(sweeps);
        c.copy_from_slice(&c_iter);
        cumulative_out += dt * v * c[n - 1];

        if step % steps_per_output == 0 {
            let k = step / steps_per_output;
            for i in 0..n {
                out[i * n_out + k] = c[i];
            }
            outflow[k] = cumulative_out;
        }
    }

    let field = Field::new(n, n_out, 0.0, dx, 0.0, config.meas_dt, out)?;
    Ok(Simulation { field, outflow, max_sweeps })
}

/// Restricts a simulated field to the measurement grid, interpolating
/// linearly where the grids do not coincide, and masks entries below the
/// concentration floor.
pub fn sample_measurements(sim: &Field, config: &ScenarioConfig) -> Result<Field> {
    let nx = config.meas_x_count;
    let nt = config.meas_t_count();
    let x_end = (nx - 1) as f64 * config.meas_dx;
    let sim_x_end = sim.x(sim.nx - 1);
    let sim_t_end = sim.t(sim.nt - 1);
    let eps = 1e-9;
    if x_end > sim_x_end + eps || config.meas_t_start < sim.t0 - eps || config.meas_t_end > sim_t_end + eps {
        return Err(Error::Range(format!(
            "measurement window x∈[0, {x_end}], t∈[{}, {}] lies outside the simulation x∈[{}, {sim_x_end}], t∈[{}, {sim_t_end}]",
            config.meas_t_start, config.meas_t_end, sim.x0, sim.t0
        )));
    }

    // (lower index, upper weight) for linear interpolation along an axis
    let locate = |coord: f64, origin: f64, step: f64, len: usize| -> (usize, f64) {
        let s = (coord - origin) / step;
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            return ((nearest as usize).min(len - 1), 0.0);
        }
        let i = (s.floor() as usize).min(len - 2);
        (i, s - i as f64)
    };

    let xs: Vec<_> = (0..nx).map(|j| locate(j as f64 * config.meas_dx, sim.x0, sim.dx, sim.nx)).collect();
    let ts: Vec<_> =
        (0..nt).map(|k| locate(config.meas_t_start + k as f64 * config.meas_dt, sim.t0, sim.dt, sim.nt)).collect();

    let mut values = Vec::with_capacity(nx * nt);
    for &(ix, wx) in &xs {
        for &(it, wt) in &ts {
            let at = |i: usize, j: usize| sim.get(i, j);
            let v0 = if wt == 0.0 { at(ix, it) } else { (1.0 - wt) * at(ix, it) + wt * at(ix, it + 1) };
            let v = if wx == 0.0 {
                v0
            } else {
                let v1 = if wt == 0.0 { at(ix + 1, it) } else { (1.0 - wt) * at(ix + 1, it) + wt * at(ix + 1, it + 1) };
                (1.0 - wx) * v0 + wx * v1
            };
            values.push(v);
        }
    }
    let mut field = Field::new(nx, nt, 0.0, config.meas_dx, config.meas_t_start, config.meas_dt, values)?;
    field.apply_floor(config.conc_floor);
    Ok(field)
}

/// Simulates and samples in one call.
pub fn measure(config: &ScenarioConfig) -> Result<Field> {
    let sim = simulate(config)?;
    sample_measurements(&sim.field, config)
}
