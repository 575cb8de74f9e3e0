//! Fixed-step time integration with per-record diagnostics.
//!
//! Smooth fields use explicit Euler or classical RK4. Projected fields are
//! discontinuous on the boundary and are stepped by projected Euler:
//! `x ← clamp(x + dt · f(x))` on the constrained coordinates.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Diagnostics, VectorField};
use crate::error::{Error, Result};

/// Any coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    Rk4,
    ProjectedEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    1
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Self {
        Self {
            scheme,
            dt,
            t_end,
            record_every: 1,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("step size must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("horizon must be positive, got {}", self.t_end),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be at least 1".into(),
            });
        }
        if self.n_steps() == 0 {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("horizon {} is shorter than one step of {}", self.t_end, self.dt),
            });
        }
        Ok(())
    }

    fn check_scheme(&self, projected: bool) -> Result<()> {
        match (projected, self.scheme) {
            (true, Scheme::ProjectedEuler) | (false, Scheme::Euler | Scheme::Rk4) => Ok(()),
            (true, _) => Err(Error::InvalidParameter {
                name: "scheme",
                reason: "projected dynamics require the projected-euler scheme".into(),
            }),
            (false, _) => Err(Error::InvalidParameter {
                name: "scheme",
                reason: "projected-euler is only for projected dynamics; use euler or rk4".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Horizon,
    Threshold,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub time: f64,
    pub step: usize,
    /// Largest coordinate magnitude (NaN if a coordinate was NaN).
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    pub stop: StopReason,
    pub diverged: bool,
    pub divergence: Option<DivergenceReport>,
    /// Residual threshold requested through [`integrate_until`].
    pub threshold: Option<f64>,
    /// Largest increase of the storage value over any single step, checked
    /// at every step (not just recorded ones) when a reference is known.
    pub max_step_storage_increase: Option<f64>,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_diagnostics(&self) -> &Diagnostics {
        self.diagnostics.last().expect("trajectory always holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates to `t_end`.
pub fn integrate<F: VectorField + ?Sized>(field: &F, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    run(field, x0, cfg, None)
}

/// Integrates until the residual diagnostic of a record falls strictly below
/// `threshold`, or `t_end`.
pub fn integrate_until<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    cfg: &IntegratorConfig,
    threshold: f64,
) -> Result<Trajectory> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            reason: format!("stopping residual must be positive, got {threshold}"),
        });
    }
    run(field, x0, cfg, Some(threshold))
}

struct Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step<F: VectorField + ?Sized>(&mut self, field: &F, scheme: Scheme, dt: f64, x: &mut [f64]) -> Result<()> {
        match scheme {
            Scheme::Euler | Scheme::ProjectedEuler => {
                field.eval(x, &mut self.k1)?;
                for (xi, k) in x.iter_mut().zip(&self.k1) {
                    *xi += dt * k;
                }
                if scheme == Scheme::ProjectedEuler {
                    field.clamp(x);
                }
            }
            Scheme::Rk4 => {
                field.eval(x, &mut self.k1)?;
                axpy(&mut self.tmp, x, 0.5 * dt, &self.k1);
                field.eval(&self.tmp, &mut self.k2)?;
                axpy(&mut self.tmp, x, 0.5 * dt, &self.k2);
                field.eval(&self.tmp, &mut self.k3)?;
                axpy(&mut self.tmp, x, dt, &self.k3);
                field.eval(&self.tmp, &mut self.k4)?;
                let h6 = dt / 6.0;
                for i in 0..x.len() {
                    x[i] += h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
                }
            }
        }
        Ok(())
    }
}

fn axpy(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}

fn blown_up(x: &[f64]) -> Option<f64> {
    let mut max_abs: f64 = 0.0;
    for &v in x {
        if !v.is_finite() {
            return Some(f64::NAN);
        }
        max_abs = max_abs.max(v.abs());
    }
    (max_abs > DIVERGENCE_LIMIT).then_some(max_abs)
}

fn run<F: VectorField + ?Sized>(field: &F, x0: &[f64], cfg: &IntegratorConfig, threshold: Option<f64>) -> Result<Trajectory> {
    cfg.validate()?;
    cfg.check_scheme(field.is_projected())?;
    field.check_initial(x0)?;

    let n_steps = cfg.n_steps();
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        stop: StopReason::Horizon,
        diverged: false,
        divergence: None,
        threshold,
        max_step_storage_increase: None,
        steps_taken: 0,
    };
    let d0 = field.diagnostics(&x)?;
    let mut prev_storage = d0.storage;
    let mut max_inc: Option<f64> = prev_storage.map(|_| 0.0);
    traj.times.push(0.0);
    traj.states.push(x.clone());
    traj.diagnostics.push(d0);
    if threshold.is_some_and(|th| d0.ne_residual < th) {
        traj.stop = StopReason::Threshold;
        return Ok(traj);
    }

    let mut stepper = Stepper::new(x.len());
    for step in 1..=n_steps {
        stepper.step(field, cfg.scheme, cfg.dt, &mut x)?;
        traj.steps_taken = step;
        let t = step as f64 * cfg.dt;
        if let Some(max_abs) = blown_up(&x) {
            traj.diverged = true;
            traj.stop = StopReason::Diverged;
            traj.divergence = Some(DivergenceReport { time: t, step, max_abs });
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.diagnostics.push(Diagnostics {
                consensus_err: None,
                ne_residual: f64::NAN,
                ne_dist: None,
                storage: None,
            });
            traj.max_step_storage_increase = None;
            return Ok(traj);
        }
        let record = step % cfg.record_every == 0 || step == n_steps;
        if let Some(prev) = prev_storage {
            if let Some(cur) = field.storage(&x)? {
                max_inc = max_inc.map(|m| m.max(cur - prev));
                prev_storage = Some(cur);
            }
        }
        if record {
            let d = field.diagnostics(&x)?;
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.diagnostics.push(d);
            if threshold.is_some_and(|th| d.ne_residual < th) {
                traj.stop = StopReason::Threshold;
                break;
            }
        }
    }
    traj.max_step_storage_increase = max_inc;
    Ok(traj)
}
