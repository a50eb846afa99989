//! The outer search: for each degree and each `lambda` candidate, build the
//! SOS program, solve it, verify the result, and prune tiny coefficients when
//! verification fails.

mod certificate;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certcheck::{full_check, Tolerances};
use crate::poly::rational::{format_rational, int, ratio};
use crate::poly::Rational;
use crate::sdp::{solve, SdpSolution, SdpStatus, SolveOptions};
use crate::sos::{
    build_program, default_gamma, eliminate_odd_top, gram_lift, LiftOptions, Lifted, SosProgram, SynthParams,
};
use crate::system::HybridSystem;

pub use certificate::{
    BarrierRecord, Certificate, CertificateError, EdgeGamma, GramRecord, MultiplierRecord, ParsedCertificate,
    ParsedGram, Provenance,
};

/// One `lambda` candidate: the same value everywhere or one per mode id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Global(#[serde(with = "rational_text")] Rational),
    PerMode(#[serde(with = "rational_map")] BTreeMap<String, Rational>),
}

impl LambdaChoice {
    pub fn label(&self) -> String {
        match self {
            LambdaChoice::Global(r) => format_rational(r),
            LambdaChoice::PerMode(m) => {
                m.iter().map(|(k, v)| format!("{k}={}", format_rational(v))).collect::<Vec<_>>().join(";")
            }
        }
    }

    fn resolve(&self, h: &HybridSystem) -> Result<Vec<Rational>, String> {
        match self {
            LambdaChoice::Global(r) => Ok(vec![r.clone(); h.modes.len()]),
            LambdaChoice::PerMode(m) => {
                if let Some(k) = m.keys().find(|k| h.mode(k).is_none()) {
                    return Err(format!("lambda given for unknown mode `{k}`"));
                }
                h.modes
                    .iter()
                    .map(|mode| m.get(&mode.id).cloned().ok_or_else(|| format!("no lambda for mode `{}`", mode.id)))
                    .collect()
            }
        }
    }
}

mod rational_text {
    use super::Rational;
    use crate::poly::rational::{format_rational, parse_rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).ok_or_else(|| serde::de::Error::custom(format!("not a number: {text}")))
    }
}

mod rational_map {
    use std::collections::BTreeMap;

    use super::Rational;
    use crate::poly::rational::{format_rational, parse_rational};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Rational>, s: S) -> Result<S::Ok, S::Error> {
        let text: BTreeMap<&String, String> = m.iter().map(|(k, v)| (k, format_rational(v))).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Rational>, D::Error> {
        let text = BTreeMap::<String, String>::deserialize(d)?;
        text.into_iter()
            .map(|(k, v)| {
                parse_rational(&v).map(|r| (k, r)).ok_or_else(|| serde::de::Error::custom(format!("not a number: {v}")))
            })
            .collect()
    }
}

mod rational_index_map {
    use std::collections::BTreeMap;

    use super::Rational;
    use crate::poly::rational::{format_rational, parse_rational};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<usize, Rational>, s: S) -> Result<S::Ok, S::Error> {
        let text: BTreeMap<&usize, String> = m.iter().map(|(k, v)| (k, format_rational(v))).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, Rational>, D::Error> {
        let text = BTreeMap::<usize, String>::deserialize(d)?;
        text.into_iter()
            .map(|(k, v)| {
                parse_rational(&v).map(|r| (k, r)).ok_or_else(|| serde::de::Error::custom(format!("not a number: {v}")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lambdas: Vec<LambdaChoice>,
    pub d_min: u32,
    pub d_max: u32,
    #[serde(with = "rational_text")]
    pub epsilon: Rational,
    /// Per-transition overrides of the default gamma policy.
    #[serde(with = "rational_index_map", default)]
    pub gamma: BTreeMap<usize, Rational>,
    pub prune_threshold: f64,
    pub max_prune_rounds: usize,
    pub solver: SolveOptions,
    pub lift: LiftOptions,
    pub tolerances: Tolerances,
    /// Concurrent grid cells.
    pub jobs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambdas: [int(-1), ratio(-1, 2), ratio(-1, 4), ratio(-1, 8)]
                .into_iter()
                .map(LambdaChoice::Global)
                .collect(),
            d_min: 2,
            d_max: 10,
            epsilon: ratio(1, 100),
            gamma: BTreeMap::new(),
            prune_threshold: 1e-5,
            max_prune_rounds: 5,
            solver: SolveOptions::default(),
            lift: LiftOptions::default(),
            tolerances: Tolerances::default(),
            jobs: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_min > self.d_max {
            return Err(format!("empty degree range {}..{}", self.d_min, self.d_max));
        }
        if self.d_min == 0 {
            return Err("degree must be at least 1".into());
        }
        if !num::Signed::is_positive(&self.epsilon) {
            return Err("epsilon must be positive".into());
        }
        Ok(())
    }

    /// `gamma` per transition: overrides on top of the default policy.
    pub fn gamma_for(&self, h: &HybridSystem) -> Result<Vec<Rational>, String> {
        if let Some(k) = self.gamma.keys().find(|&&k| k >= h.transitions.len()) {
            return Err(format!("gamma given for edge {k}, system has {} transitions", h.transitions.len()));
        }
        let mut g = default_gamma(h);
        for (&k, v) in &self.gamma {
            g[k] = v.clone();
        }
        Ok(g)
    }

    /// Grid cells in sweep order: ascending degree outer, candidates inner.
    pub fn cells(&self) -> Vec<(u32, LambdaChoice)> {
        (self.d_min..=self.d_max).flat_map(|d| self.lambdas.iter().map(move |l| (d, l.clone()))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Verified,
    Infeasible,
    Numerical,
    VerificationFailed,
    /// The program could not be built or lifted (parameters, odd degree, size cap).
    BuildFailed,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Verified => "verified",
            Outcome::Infeasible => "infeasible",
            Outcome::Numerical => "numerical",
            Outcome::VerificationFailed => "verification_failed",
            Outcome::BuildFailed => "build_failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub lambda: String,
    pub degree: u32,
    pub outcome: Outcome,
    pub detail: String,
    pub wall_seconds: f64,
    pub solver_iterations: usize,
    pub prune_rounds: usize,
}

#[derive(Clone, Debug)]
pub enum SynthResult {
    Found { certificate: Box<Certificate>, attempts: Vec<Attempt> },
    Exhausted { attempts: Vec<Attempt> },
}

impl SynthResult {
    pub fn attempts(&self) -> &[Attempt] {
        match self {
            SynthResult::Found { attempts, .. } | SynthResult::Exhausted { attempts } => attempts,
        }
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            SynthResult::Found { certificate, .. } => Some(certificate),
            SynthResult::Exhausted { .. } => None,
        }
    }
}

/// A lifted program with its solution and the unknowns read back from it.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub lifted: Lifted,
    pub solution: SdpSolution,
    pub values: Vec<f64>,
}

impl Candidate {
    pub fn solve(program: &SosProgram, cfg: &SearchConfig) -> Result<Self, String> {
        let lifted = gram_lift(program, &cfg.lift).map_err(|e| e.to_string())?;
        let solution = solve(&lifted.problem, &cfg.solver).map_err(|e| e.to_string())?;
        let values = lifted.unknown_values(program.unknowns.len(), &solution.free);
        Ok(Self { lifted, solution, values })
    }
}

#[derive(Clone, Debug)]
pub enum RetryOutcome {
    Accepted { candidate: Box<Candidate>, rounds: usize },
    GiveUp { reason: String, rounds: usize, status: SdpStatus },
}

/// Repeatedly pins unknowns with `|value| < prune_threshold` to zero and
/// re-solves until `accept` passes, nothing is left to prune, a barrier
/// template is emptied, or the round budget is spent.
pub fn prune_and_retry(
    program: &mut SosProgram,
    first: Candidate,
    cfg: &SearchConfig,
    mut accept: impl FnMut(&SosProgram, &Candidate) -> bool,
) -> RetryOutcome {
    let mut current = first;
    let mut rounds = 0;
    loop {
        if current.solution.status == SdpStatus::Feasible && accept(program, &current) {
            return RetryOutcome::Accepted { candidate: Box::new(current), rounds };
        }
        if current.solution.status != SdpStatus::Feasible {
            let what = match &current.solution.witness {
                Some(w) if current.solution.status == SdpStatus::Infeasible => {
                    format!("dual certificate with violation {:.3e}", w.violation)
                }
                _ => current.solution.message.clone(),
            };
            let reason = if rounds == 0 { what } else { format!("after {rounds} pruning round(s): {what}") };
            return RetryOutcome::GiveUp { reason, rounds, status: current.solution.status };
        }
        if rounds >= cfg.max_prune_rounds {
            return RetryOutcome::GiveUp {
                reason: format!("not verified after {rounds} pruning round(s)"),
                rounds,
                status: SdpStatus::Feasible,
            };
        }
        let fresh: Vec<usize> = current
            .values
            .iter()
            .enumerate()
            .filter(|(u, v)| v.abs() < cfg.prune_threshold && !program.pinned.contains(u))
            .map(|(u, _)| u)
            .collect();
        if fresh.is_empty() {
            return RetryOutcome::GiveUp {
                reason: format!("no coefficient below {:e} left to prune", cfg.prune_threshold),
                rounds,
                status: SdpStatus::Feasible,
            };
        }
        program.pinned.extend(fresh);
        rounds += 1;
        if let Some(t) = program.barriers.iter().find(|t| t.unknowns.iter().all(|u| program.pinned.contains(u))) {
            return RetryOutcome::GiveUp {
                reason: format!("pruning emptied {}", t.owner),
                rounds,
                status: SdpStatus::Feasible,
            };
        }
        current = match Candidate::solve(program, cfg) {
            Ok(c) => c,
            Err(e) => return RetryOutcome::GiveUp { reason: e, rounds, status: SdpStatus::NumericalFailure },
        };
    }
}

/// One grid cell: build, solve, verify, prune.
pub fn attempt(
    h: &HybridSystem,
    cfg: &SearchConfig,
    degree: u32,
    lambda: &LambdaChoice,
) -> (Attempt, Option<Certificate>) {
    let start = Instant::now();
    let mut record = Attempt {
        lambda: lambda.label(),
        degree,
        outcome: Outcome::BuildFailed,
        detail: String::new(),
        wall_seconds: 0.0,
        solver_iterations: 0,
        prune_rounds: 0,
    };
    let finish = |mut r: Attempt, outcome: Outcome, detail: String| {
        r.outcome = outcome;
        r.detail = detail;
        r.wall_seconds = start.elapsed().as_secs_f64();
        r
    };
    let params = match (lambda.resolve(h), cfg.gamma_for(h)) {
        (Ok(l), Ok(g)) => {
            SynthParams { degrees: vec![degree; h.modes.len()], lambda: l, gamma: g, epsilon: cfg.epsilon.clone() }
        }
        (Err(e), _) | (_, Err(e)) => return (finish(record, Outcome::BuildFailed, e), None),
    };
    let mut program = match build_program(h, &params) {
        Ok(p) => eliminate_odd_top(p),
        Err(e) => return (finish(record, Outcome::BuildFailed, e.to_string()), None),
    };
    let first = match Candidate::solve(&program, cfg) {
        Ok(c) => c,
        Err(e) => return (finish(record, Outcome::BuildFailed, e), None),
    };
    let mut iterations = 0;
    let mut found: Option<Certificate> = None;
    let mut last_failure = String::new();
    let outcome = prune_and_retry(&mut program, first, cfg, |program, cand| {
        iterations += cand.solution.iterations;
        let provenance = Provenance {
            solver_status: cand.solution.status,
            solver_iterations: cand.solution.iterations,
            slack: cand.solution.residuals.slack,
            prune_rounds: 0,
            pinned: program.pinned.len(),
            gram_blocks: cand.lifted.blocks.len(),
            free_unknowns: cand.lifted.free_unknowns.len(),
        };
        let mut cert = Certificate::from_solution(
            h,
            program,
            &cand.lifted,
            &cand.solution.blocks,
            &cand.values,
            provenance,
            cfg.tolerances.clone(),
        );
        match full_check(h, &cert, &cfg.tolerances) {
            Ok(report) if report.verdict.pass => {
                cert.report = Some(report);
                found = Some(cert);
                true
            }
            Ok(report) => {
                last_failure = report.first_failure().unwrap_or_default();
                false
            }
            Err(e) => {
                last_failure = e.to_string();
                false
            }
        }
    });
    record.solver_iterations = iterations;
    match outcome {
        RetryOutcome::Accepted { rounds, .. } => {
            record.prune_rounds = rounds;
            let mut cert = found.expect("accepted candidates carry a certificate");
            cert.provenance.prune_rounds = rounds;
            cert.provenance.solver_iterations = iterations;
            let slack = cert.provenance.slack;
            (finish(record, Outcome::Verified, format!("slack {slack:.3e}")), Some(cert))
        }
        RetryOutcome::GiveUp { reason, rounds, status } => {
            record.prune_rounds = rounds;
            let (kind, detail) = match status {
                SdpStatus::Infeasible => (Outcome::Infeasible, reason),
                SdpStatus::NumericalFailure => (Outcome::Numerical, reason),
                SdpStatus::Feasible => (Outcome::VerificationFailed, format!("{reason}; {last_failure}")),
            };
            // an infeasible re-solve after pruning is still a verification failure
            let kind = if rounds > 0 && kind == Outcome::Infeasible { Outcome::VerificationFailed } else { kind };
            (finish(record, kind, detail), None)
        }
    }
}

/// Runs `cells` with up to `jobs` threads, keeping results in cell order.
/// With `stop_at_success`, cells are dispatched in batches and the search
/// stops after the first batch containing a success.
fn run_cells(
    h: &HybridSystem,
    cfg: &SearchConfig,
    cells: &[(u32, LambdaChoice)],
    stop_at_success: bool,
) -> Vec<(Attempt, Option<Certificate>)> {
    let jobs = cfg.jobs.max(1);
    let mut out = Vec::with_capacity(cells.len());
    for batch in cells.chunks(if stop_at_success { jobs } else { cells.len().max(1) }) {
        let slots: Vec<Mutex<Option<(Attempt, Option<Certificate>)>>> =
            batch.iter().map(|_| Mutex::new(None)).collect();
        let next = Mutex::new(0usize);
        std::thread::scope(|s| {
            for _ in 0..jobs.min(batch.len()) {
                s.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("queue lock");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    let Some((d, l)) = batch.get(i) else { break };
                    let r = attempt(h, cfg, *d, l);
                    log::info!("cell d={} lambda={}: {} ({})", d, l.label(), r.0.outcome.as_str(), r.0.detail);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        let done: Vec<_> = slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("cell ran")).collect();
        let success = done.iter().any(|(_, c)| c.is_some());
        out.extend(done);
        if stop_at_success && success {
            break;
        }
    }
    out
}

/// The first verified certificate in sweep order, or every failed attempt.
pub fn synthesize(h: &HybridSystem, cfg: &SearchConfig) -> Result<SynthResult, String> {
    cfg.validate()?;
    cfg.gamma_for(h)?;
    let results = run_cells(h, cfg, &cfg.cells(), true);
    let mut attempts = Vec::new();
    for (a, cert) in results {
        attempts.push(a);
        if let Some(c) = cert {
            return Ok(SynthResult::Found { certificate: Box::new(c), attempts });
        }
    }
    Ok(SynthResult::Exhausted { attempts })
}

/// The full grid, without early exit.
pub fn sweep_report(h: &HybridSystem, cfg: &SearchConfig) -> Result<Vec<Attempt>, String> {
    cfg.validate()?;
    cfg.gamma_for(h)?;
    Ok(run_cells(h, cfg, &cfg.cells(), false).into_iter().map(|(a, _)| a).collect())
}
