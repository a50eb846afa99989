//! Fixed-step RK4 integration and the exponential-bound check along flows.

use serde::{Deserialize, Serialize};

use crate::poly::{CompiledPoly, Polynomial};
use crate::system::HybridSystem;

/// States whose norm exceeds this are reported as diverged.
pub const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("step and horizon must be positive and finite (h = {h}, T = {t})")]
    Step { h: f64, t: f64 },
    #[error("no mode `{0}`")]
    Mode(String),
    #[error("start state has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diverged: bool,
}

pub(crate) fn compile_field(field: &[Polynomial]) -> Vec<CompiledPoly> {
    field.iter().map(Polynomial::compile).collect()
}

fn eval_field(f: &[CompiledPoly], x: &[f64]) -> Vec<f64> {
    f.iter().map(|p| p.eval(x)).collect()
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

/// One classical Runge–Kutta step.
pub fn rk4_step(f: &[CompiledPoly], x: &[f64], h: f64) -> Vec<f64> {
    let k1 = eval_field(f, x);
    let k2 = eval_field(f, &axpy(x, 0.5 * h, &k1));
    let k3 = eval_field(f, &axpy(x, 0.5 * h, &k2));
    let k4 = eval_field(f, &axpy(x, h, &k3));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

pub(crate) fn diverged(x: &[f64]) -> bool {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    !n2.is_finite() || n2.sqrt() > OVERFLOW_GUARD
}

pub(crate) fn check_step(h: f64, t: f64) -> Result<(), SimError> {
    if h > 0.0 && t > 0.0 && h.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(SimError::Step { h, t })
    }
}

/// Integrates `f` from `x0` over `[0, t_end]`; the last step is shortened to
/// land on `t_end`.
pub fn integrate(f: &[CompiledPoly], x0: &[f64], t_end: f64, h: f64) -> Trajectory {
    let steps = (t_end / h - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 1..=steps {
        let t = if k == steps { t_end } else { k as f64 * h };
        let dt = t - times[k - 1];
        x = rk4_step(f, &x, dt);
        times.push(t);
        states.push(x.clone());
        if diverged(&x) {
            return Trajectory { times, states, diverged: true };
        }
    }
    Trajectory { times, states, diverged: false }
}

/// RK4 trajectory of one mode's field, with dense output at every step.
pub fn simulate_continuous(
    h: &HybridSystem,
    mode: &str,
    x0: &[f64],
    t_end: f64,
    step: f64,
) -> Result<Trajectory, SimError> {
    check_step(step, t_end)?;
    let m = h.mode(mode).ok_or_else(|| SimError::Mode(mode.to_string()))?;
    if x0.len() != h.dim() {
        return Err(SimError::Dimension { expected: h.dim(), got: x0.len() });
    }
    Ok(integrate(&compile_field(&m.field), x0, t_end, step))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `max_t phi(x(t)) - phi(x0) e^{lambda t}`.
    pub max_violation: f64,
    pub at_time: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Compares `phi` along a trajectory with `phi(x0) e^{lambda t}`; the
/// threshold is `1e-6 + 10 h`.
pub fn check_exponential_bound(phi: &Polynomial, traj: &Trajectory, lambda: f64, h: f64) -> BoundCheck {
    let p = phi.compile();
    let phi0 = p.eval(&traj.states[0]);
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let v = p.eval(x) - phi0 * (lambda * t).exp();
        if v > worst {
            worst = v;
            at = *t;
        }
    }
    let threshold = 1e-6 + 10.0 * h;
    BoundCheck { max_violation: worst, at_time: at, threshold, pass: worst <= threshold }
}
