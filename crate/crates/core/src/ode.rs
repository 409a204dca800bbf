//! Fixed-step classical Runge–Kutta integration of the master equations and
//! relaxation to a steady state.

use crate::models::{inf_norm, MarketModel, ModelError, StateDistribution};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_T_MAX: f64 = 1e4;

/// How far a component may leave `[0, 1]` before the step is declared too
/// large.
pub const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("invalid initial state: {0}")]
    InvalidInitialState(#[from] ModelError),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("component {component} reached {value} at t = {time}; reduce the step")]
    StepTooLarge {
        time: f64,
        component: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateDistribution>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StateDistribution> {
        self.states.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationReport {
    pub final_state: StateDistribution,
    pub residual_inf_norm: f64,
    pub elapsed_model_time: f64,
    pub converged: bool,
}

/// Scratch buffers for one RK4 step.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` by `h`. When `k1_ready` is set, `self.k1` already holds
    /// the drift at `y`.
    fn step<M: MarketModel + ?Sized>(&mut self, model: &M, y: &mut [f64], h: f64, k1_ready: bool) {
        if !k1_ready {
            model.rhs_into(y, &mut self.k1);
        }
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k1)) {
            *t = yi + 0.5 * h * k;
        }
        model.rhs_into(&self.tmp, &mut self.k2);
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k2)) {
            *t = yi + 0.5 * h * k;
        }
        model.rhs_into(&self.tmp, &mut self.k3);
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k3)) {
            *t = yi + h * k;
        }
        model.rhs_into(&self.tmp, &mut self.k4);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn check_range(y: &[f64], time: f64) -> Result<(), OdeError> {
    for (component, &value) in y.iter().enumerate() {
        if !value.is_finite() || !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&value) {
            return Err(OdeError::StepTooLarge {
                time,
                component,
                value,
            });
        }
    }
    Ok(())
}

/// Sampled copy of the integrator state with rounding noise just outside
/// `[0, 1]` clamped away.
fn sample<M: MarketModel + ?Sized>(model: &M, y: &[f64]) -> StateDistribution {
    StateDistribution::new(model.class(), y.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

fn check_step(step: f64) -> Result<(), OdeError> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(OdeError::InvalidStep(step))
    }
}

/// Integrates from `state0` over `[0, t_end]` with steps no larger than
/// `step`, recording the state at every multiple of `sample_every` and at
/// `t_end`. Each sampling interval is split into equal sub-steps so samples
/// land exactly on the grid.
pub fn integrate<M: MarketModel + ?Sized>(
    model: &M,
    state0: &StateDistribution,
    t_end: f64,
    step: f64,
    sample_every: f64,
) -> Result<Trajectory, OdeError> {
    model.check_state(state0)?;
    check_step(step)?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(OdeError::InvalidHorizon(format!("t_end = {t_end}")));
    }
    if !(sample_every.is_finite() && sample_every > 0.0) {
        return Err(OdeError::InvalidHorizon(format!(
            "sample_every = {sample_every}"
        )));
    }

    let mut y = state0.values.clone();
    let mut rk = Rk4::new(y.len());
    let grid = sample_grid(t_end, sample_every);
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut t = 0.0;
    for &next in &grid[1..] {
        let span = next - t;
        let n = (span / step - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            rk.step(model, &mut y, h, false);
        }
        t = next;
        check_range(&y, t)?;
        times.push(t);
        states.push(sample(model, &y));
    }
    Ok(Trajectory { times, states })
}

/// `0, dt, 2 dt, ...` up to and including `t_end`.
pub fn sample_grid(t_end: f64, sample_every: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    if t_end <= 0.0 {
        return grid;
    }
    let mut k = 1usize;
    loop {
        let t = k as f64 * sample_every;
        if t >= t_end - 1e-9 * sample_every {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(t_end);
    grid
}

/// Integrates until the drift's sup-norm drops to `tol` or `t_max` is
/// reached. Non-convergence is reported, not raised.
pub fn relax_to_steady<M: MarketModel + ?Sized>(
    model: &M,
    state0: &StateDistribution,
    tol: f64,
    t_max: f64,
    step: f64,
) -> Result<RelaxationReport, OdeError> {
    model.check_state(state0)?;
    check_step(step)?;
    if !(tol > 0.0) {
        return Err(OdeError::InvalidHorizon(format!("tol = {tol}")));
    }
    if !(t_max >= 0.0) {
        return Err(OdeError::InvalidHorizon(format!("t_max = {t_max}")));
    }
    let mut y = state0.values.clone();
    let mut rk = Rk4::new(y.len());
    let mut t = 0.0;
    loop {
        model.rhs_into(&y, &mut rk.k1);
        let residual = inf_norm(&rk.k1);
        if residual <= tol || t >= t_max {
            return Ok(RelaxationReport {
                final_state: sample(model, &y),
                residual_inf_norm: residual,
                elapsed_model_time: t,
                converged: residual <= tol,
            });
        }
        let h = step.min(t_max - t);
        rk.step(model, &mut y, h, true);
        t += h;
        check_range(&y, t)?;
    }
}
