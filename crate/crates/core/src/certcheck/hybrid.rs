//! Hybrid executions: RK4 flows interleaved with guarded jumps.
//!
//! A transition becomes eligible when the state enters its guard (some
//! defining inequality changes sign); the entry time is located by bisection
//! on the RK4 step. A guard that already holds when a segment starts is not
//! an entry. Leaving the mode invariant forces a jump through any enabled
//! transition, and blocks the run when there is none.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reset::ResetSampler;
use super::simulate::{check_step, compile_field, diverged, rk4_step, SimError};
use crate::poly::CompiledPoly;
use crate::system::{Bounds, HybridSystem, Reset, SemialgebraicSet};

pub const MAX_JUMPS: usize = 10_000;
const EVENT_RESOLUTION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpPolicy {
    /// Jump at the first guard entry.
    Eager,
    /// Jump at a seeded uniform time within the guard dwell interval.
    UniformDelay,
}

impl std::str::FromStr for JumpPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eager" => Ok(JumpPolicy::Eager),
            "uniform-delay" | "uniform" => Ok(JumpPolicy::UniformDelay),
            _ => Err(format!("unknown jump policy `{s}` (eager, uniform-delay)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mode: String,
    pub t0: f64,
    pub t1: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub edge: usize,
    pub source: String,
    pub target: String,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Invariant left with no enabled transition, or no admissible post-state.
    Blocked,
    Diverged,
    /// Jump count reached [`MAX_JUMPS`].
    JumpCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridTrajectory {
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpEvent>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
}

/// `None` is the empty set.
fn compile_set(set: &SemialgebraicSet) -> Option<Vec<CompiledPoly>> {
    match set {
        SemialgebraicSet::Empty => None,
        SemialgebraicSet::Region(p) => Some(p.iter().map(|q| q.compile()).collect()),
    }
}

fn inside(set: &Option<Vec<CompiledPoly>>, x: &[f64], tol: f64) -> bool {
    set.as_ref().is_some_and(|ps| ps.iter().all(|p| p.eval(x) >= -tol))
}

/// Smallest `s` in `(0, dt]` (to [`EVENT_RESOLUTION`]) with `pred(rk4(x, s))`,
/// given that `pred` fails at `x` and holds at `rk4(x, dt)`.
fn first_time(f: &[CompiledPoly], x: &[f64], dt: f64, pred: impl Fn(&[f64]) -> bool) -> (f64, Vec<f64>) {
    bisect(f, x, 0.0, dt, pred)
}

fn bisect(f: &[CompiledPoly], x: &[f64], mut lo: f64, mut hi: f64, pred: impl Fn(&[f64]) -> bool) -> (f64, Vec<f64>) {
    let mut at_hi = rk4_step(f, x, hi);
    while hi - lo > EVENT_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        let xm = rk4_step(f, x, mid);
        if pred(&xm) {
            hi = mid;
            at_hi = xm;
        } else {
            lo = mid;
        }
    }
    (hi, at_hi)
}

const SCAN: usize = 64;

/// First entry into `g` during the step `x -> rk4(x, dt)`. When both ends
/// are outside but some inequality went from violated to satisfied, the
/// step is scanned for a thin guard that was stepped over.
fn guard_entry(
    f: &[CompiledPoly],
    g: &Option<Vec<CompiledPoly>>,
    x: &[f64],
    xn: &[f64],
    dt: f64,
) -> Option<(f64, Vec<f64>)> {
    let ps = g.as_ref()?;
    if inside(g, x, 0.0) {
        return None;
    }
    let pred = |y: &[f64]| inside(g, y, 0.0);
    if pred(xn) {
        return Some(first_time(f, x, dt, pred));
    }
    if !ps.iter().any(|p| p.eval(x) < 0.0 && p.eval(xn) >= 0.0) {
        return None;
    }
    let mut prev = 0.0;
    for j in 1..SCAN {
        let s = dt * j as f64 / SCAN as f64;
        if pred(&rk4_step(f, x, s)) {
            return Some(bisect(f, x, prev, s, pred));
        }
        prev = s;
    }
    None
}

struct Run<'a> {
    h: &'a HybridSystem,
    fields: Vec<Vec<CompiledPoly>>,
    invariants: Vec<Option<Vec<CompiledPoly>>>,
    guards: Vec<Option<Vec<CompiledPoly>>>,
    resets: Vec<Option<ResetSampler>>,
    step: f64,
    t_end: f64,
    policy: JumpPolicy,
    rng: ChaCha8Rng,
    out: HybridTrajectory,
}

enum Event {
    Guard(usize),
    InvariantExit,
}

impl Run<'_> {
    fn segment(&mut self) -> &mut Segment {
        self.out.segments.last_mut().expect("a segment is always open")
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        let seg = self.segment();
        seg.times.push(t);
        seg.states.push(x.to_vec());
        seg.t1 = t;
    }

    /// Integrates the guard dwell from `(t, x)` and returns a uniformly drawn
    /// jump time with its state, pushing the samples in between.
    fn delay(&mut self, mode: usize, edge: usize, mut t: f64, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        let f = self.fields[mode].clone();
        // dwell end: first exit from the guard (or the invariant), or the horizon
        let (mut probe_t, mut probe_x) = (t, x.clone());
        let exit = loop {
            if probe_t >= self.t_end {
                break self.t_end;
            }
            let dt = self.step.min(self.t_end - probe_t);
            let xn = rk4_step(&f, &probe_x, dt);
            let ok = |y: &[f64]| inside(&self.guards[edge], y, 0.0) && inside(&self.invariants[mode], y, 0.0);
            if diverged(&xn) || !ok(&xn) {
                let (s, _) = first_time(&f, &probe_x, dt, |y| !ok(y));
                break probe_t + (s - EVENT_RESOLUTION).max(0.0);
            }
            probe_t += dt;
            probe_x = xn;
        };
        let tau = if exit > t { self.rng.gen_range(t..=exit) } else { t };
        let mut last_in = (t, x.clone());
        while t < tau {
            let dt = self.step.min(tau - t);
            x = rk4_step(&f, &x, dt);
            t += dt;
            self.push(t, &x);
            if inside(&self.guards[edge], &x, 0.0) {
                last_in = (t, x.clone());
            }
        }
        let seg = self.segment();
        while seg.times.len() > 1 && *seg.times.last().expect("nonempty") > last_in.0 {
            seg.times.pop();
            seg.states.pop();
        }
        seg.t1 = last_in.0;
        last_in
    }

    /// Performs the jump; `false` when the run is blocked.
    fn jump(&mut self, edge: usize, t: f64, pre: Vec<f64>) -> bool {
        let tr = &self.h.transitions[edge];
        let target = self.h.mode_index(&tr.target).expect("validated system");
        let post = match &self.resets[edge] {
            None => pre.clone(),
            Some(sampler) => {
                let half = pre.iter().fold(10.0f64, |a, v| a.max(2.0 * v.abs()));
                let bounds = Bounds::cube(pre.len(), half);
                match sampler.draw(&pre, &bounds, &mut self.rng) {
                    Some(p) => p,
                    None => {
                        self.out.warnings.push(format!("t = {t}: no post-state found for edge {edge}"));
                        return false;
                    }
                }
            }
        };
        if !inside(&self.invariants[target], &post, 1e-9) {
            self.out.warnings.push(format!("t = {t}: post-state outside the invariant of `{}`", tr.target));
            return false;
        }
        self.out.jumps.push(JumpEvent {
            time: t,
            edge,
            source: tr.source.clone(),
            target: tr.target.clone(),
            pre,
            post: post.clone(),
        });
        self.out.segments.push(Segment { mode: tr.target.clone(), t0: t, t1: t, times: vec![t], states: vec![post] });
        true
    }

    fn execute(mut self, start: usize, x0: Vec<f64>) -> HybridTrajectory {
        let mut mode = start;
        let mut x = x0;
        let mut t = 0.0;
        loop {
            if t >= self.t_end {
                self.out.status = RunStatus::Completed;
                break;
            }
            let f = &self.fields[mode];
            let dt = self.step.min(self.t_end - t);
            let xn = rk4_step(f, &x, dt);
            if diverged(&xn) {
                self.push(t + dt, &xn);
                self.out.status = RunStatus::Diverged;
                break;
            }
            let mode_id = self.h.modes[mode].id.clone();
            let mut event: Option<(f64, Vec<f64>, Event)> = None;
            for (k, _) in self.h.outgoing(&mode_id) {
                if let Some((s, xs)) = guard_entry(f, &self.guards[k], &x, &xn, dt) {
                    if event.as_ref().is_none_or(|e| s < e.0) {
                        event = Some((s, xs, Event::Guard(k)));
                    }
                }
            }
            let inv = &self.invariants[mode];
            if inside(inv, &x, 0.0) && !inside(inv, &xn, 0.0) {
                let (s, _) = first_time(f, &x, dt, |y| !inside(inv, y, 0.0));
                let s_in = (s - EVENT_RESOLUTION).max(0.0);
                if event.as_ref().is_none_or(|e| s_in < e.0) {
                    event = Some((s_in, rk4_step(f, &x, s_in), Event::InvariantExit));
                }
            }
            let Some((s, xs, kind)) = event else {
                t += dt;
                x = xn;
                self.push(t, &x);
                continue;
            };
            t += s;
            x = xs;
            self.push(t, &x);
            let edge = match kind {
                Event::Guard(k) => {
                    if self.policy == JumpPolicy::UniformDelay {
                        let (tj, xj) = self.delay(mode, k, t, x.clone());
                        t = tj;
                        x = xj;
                    }
                    Some(k)
                }
                Event::InvariantExit => {
                    let enabled: Vec<usize> = self
                        .h
                        .outgoing(&mode_id)
                        .map(|(k, _)| k)
                        .filter(|&k| inside(&self.guards[k], &x, EVENT_RESOLUTION))
                        .collect();
                    match (self.policy, enabled.len()) {
                        (_, 0) => None,
                        (JumpPolicy::Eager, _) => Some(enabled[0]),
                        (JumpPolicy::UniformDelay, n) => Some(enabled[self.rng.gen_range(0..n)]),
                    }
                }
            };
            let Some(edge) = edge else {
                self.out.warnings.push(format!("t = {t}: invariant of `{mode_id}` left with no enabled transition"));
                self.out.status = RunStatus::Blocked;
                break;
            };
            if !self.jump(edge, t, x.clone()) {
                self.out.status = RunStatus::Blocked;
                break;
            }
            let last = self.out.jumps.last().expect("just pushed");
            x = last.post.clone();
            mode = self.h.mode_index(&last.target).expect("validated system");
            if self.out.jumps.len() >= MAX_JUMPS {
                self.out.warnings.push(format!("jump cap {MAX_JUMPS} reached at t = {t}"));
                self.out.status = RunStatus::JumpCap;
                break;
            }
        }
        self.out
    }
}

/// Simulates from `(start, x0)` up to time `t_end`.
pub fn simulate_hybrid(
    h: &HybridSystem,
    start: &str,
    x0: &[f64],
    t_end: f64,
    step: f64,
    policy: JumpPolicy,
    seed: u64,
) -> Result<HybridTrajectory, SimError> {
    check_step(step, t_end)?;
    let mode = h.mode_index(start).ok_or_else(|| SimError::Mode(start.to_string()))?;
    if x0.len() != h.dim() {
        return Err(SimError::Dimension { expected: h.dim(), got: x0.len() });
    }
    let mut warnings = Vec::new();
    if !h.modes[mode].init.contains(x0) {
        warnings.push(format!("start state {x0:?} is not in the initial set of `{start}`"));
    }
    let run = Run {
        h,
        fields: h.modes.iter().map(|m| compile_field(&m.field)).collect(),
        invariants: h.modes.iter().map(|m| compile_set(&m.invariant)).collect(),
        guards: h.transitions.iter().map(|t| compile_set(&t.guard)).collect(),
        resets: h
            .transitions
            .iter()
            .map(|t| match &t.reset {
                Reset::Identity => None,
                Reset::Relation(r) => Some(ResetSampler::new(h.dim(), r)),
            })
            .collect(),
        step,
        t_end,
        policy,
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: HybridTrajectory {
            segments: vec![Segment {
                mode: start.to_string(),
                t0: 0.0,
                t1: 0.0,
                times: vec![0.0],
                states: vec![x0.to_vec()],
            }],
            jumps: Vec::new(),
            status: RunStatus::Completed,
            warnings,
        },
    };
    Ok(run.execute(mode, x0.to_vec()))
}
