//! Independent certificate checks.
//!
//! Tier A rebuilds every constraint polynomial from the certificate's
//! barriers and multipliers and compares it with the stored Gram form.
//! Tier B samples each condition's region and checks signs pointwise.
//! Neither tier reuses the SOS compiler.

mod hybrid;
mod reset;
mod simulate;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::poly::rational::to_f64;
use crate::poly::{CompiledPoly, Polynomial, Rational};
use crate::sdp::min_eigenvalue;
use crate::sos::gram_expansion;
use crate::synthesis::{Certificate, CertificateError, ParsedCertificate};
use crate::system::{Bounds, BoxSampler, HybridSystem, Reset, SemialgebraicSet};

pub use hybrid::{simulate_hybrid, HybridTrajectory, JumpEvent, JumpPolicy, RunStatus, Segment};
pub use reset::ResetSampler;
pub use simulate::{check_exponential_bound, rk4_step, simulate_continuous, BoundCheck, SimError, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Largest admissible coefficient of `p - v^T M v`.
    pub coefficient_residual: f64,
    /// Smallest admissible Gram eigenvalue.
    pub min_eigenvalue: f64,
    pub sample_slack: f64,
    pub samples: usize,
    /// Sampling box; `None` is `[-10, 10]^n`.
    #[serde(default)]
    pub bounds: Option<Bounds>,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            coefficient_residual: 1e-6,
            min_eigenvalue: -1e-7,
            sample_slack: 1e-6,
            samples: 10_000,
            bounds: None,
            seed: 0,
        }
    }
}

impl Tolerances {
    pub fn sampling_box(&self, dim: usize) -> Bounds {
        self.bounds.clone().unwrap_or_else(|| Bounds::cube(dim, 10.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: String,
    pub coefficient_residual: f64,
    /// `None` when the certificate carries no Gram matrix for the constraint
    /// (the polynomial itself must then vanish).
    pub min_eigenvalue: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingCheck {
    pub condition: String,
    pub samples: usize,
    pub attempts: usize,
    /// Largest signed violation minus the rounding allowance; `<= slack` passes.
    pub worst_violation: f64,
    pub witness: Option<Vec<f64>>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCheck {
    pub run: usize,
    pub start: Vec<f64>,
    pub max_violation: f64,
    pub at_time: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tier_a: bool,
    pub tier_b: bool,
    /// Only set when trajectory runs were attached.
    pub trajectories: Option<bool>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub constraints: Vec<ConstraintCheck>,
    pub sampling: Vec<SamplingCheck>,
    pub trajectories: Vec<TrajectoryCheck>,
    pub verdict: Verdict,
}

impl VerificationReport {
    pub fn attach_trajectories(&mut self, runs: Vec<TrajectoryCheck>) {
        let ok = runs.iter().all(|r| r.pass);
        self.trajectories = runs;
        self.verdict.trajectories = Some(ok);
        self.verdict.pass = self.verdict.tier_a && self.verdict.tier_b && ok;
    }

    pub fn worst_residual(&self) -> f64 {
        self.constraints.iter().map(|c| c.coefficient_residual).fold(0.0, f64::max)
    }

    /// First failing item, for one-line diagnostics.
    pub fn first_failure(&self) -> Option<String> {
        if let Some(c) = self.constraints.iter().find(|c| !c.pass) {
            return Some(format!(
                "{}: residual {:.3e}, min eigenvalue {}",
                c.constraint,
                c.coefficient_residual,
                c.min_eigenvalue.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())
            ));
        }
        if let Some(s) = self.sampling.iter().find(|s| !s.pass) {
            return Some(format!("{}: violation {:.3e} at {:?}", s.condition, s.worst_violation, s.witness));
        }
        self.trajectories
            .iter()
            .find(|t| !t.pass)
            .map(|t| format!("trajectory {}: violation {:.3e} at t = {}", t.run, t.max_violation, t.at_time))
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckError {
    #[error(transparent)]
    Structure(#[from] CertificateError),
    #[error("Lie derivative: {0}")]
    Field(String),
}

fn sum(polys: impl IntoIterator<Item = Polynomial>, vars: &crate::poly::Vars) -> Polynomial {
    polys.into_iter().fold(Polynomial::zero(vars.clone()), |acc, p| acc.add(&p.with_vars(vars)))
}

/// `sum_i m_i * g_i` over the multipliers named `<prefix>:<i>`; missing ones are zero.
fn weighted(pc: &ParsedCertificate, prefix: &str, set: &[Polynomial], vars: &crate::poly::Vars) -> Polynomial {
    sum(
        set.iter().enumerate().filter_map(|(i, g)| {
            pc.multipliers.get(&format!("{prefix}:{i}")).map(|m| m.with_vars(vars).mul(&g.with_vars(vars)))
        }),
        vars,
    )
}

/// Every constraint polynomial that must be SOS, keyed by tag.
pub fn constraint_polys(h: &HybridSystem, pc: &ParsedCertificate) -> Result<Vec<(String, Polynomial)>, CheckError> {
    let vars = &h.vars;
    let mut out = Vec::new();
    for (l, mode) in h.modes.iter().enumerate() {
        let phi = &pc.barriers[l];
        if !mode.init.is_empty() {
            let p = phi.neg().sub(&weighted(pc, &format!("init:{}", mode.id), mode.init.polys(), vars));
            out.push((format!("init:{}", mode.id), p));
        }
        let lie = phi.lie_derivative(&mode.field).map_err(|e| CheckError::Field(e.to_string()))?;
        let p = phi.scale(&pc.lambda[l]).sub(&lie).sub(&weighted(
            pc,
            &format!("flow:{}", mode.id),
            mode.invariant.polys(),
            vars,
        ));
        out.push((format!("flow:{}", mode.id), p));
    }
    for (k, t) in h.transitions.iter().enumerate() {
        let src = h.mode_index(&t.source).expect("validated system");
        let dst = h.mode_index(&t.target).expect("validated system");
        let gamma = &pc.gamma[k];
        let p = match &t.reset {
            Reset::Identity => pc.barriers[src].scale(gamma).sub(&pc.barriers[dst]).sub(&weighted(
                pc,
                &format!("guard:e{k}"),
                t.guard.polys(),
                vars,
            )),
            Reset::Relation(rel) => {
                let jv = &h.jump_vars;
                let primed = std::sync::Arc::new(h.primed_names());
                let post = pc.barriers[dst].rename_vars(&primed).with_vars(jv);
                pc.barriers[src]
                    .with_vars(jv)
                    .scale(gamma)
                    .sub(&post)
                    .sub(&weighted(pc, &format!("guard:e{k}"), t.guard.polys(), jv))
                    .sub(&weighted(pc, &format!("reset:e{k}"), rel, jv))
            }
        };
        out.push((format!("jump:e{k}"), p));
    }
    for (l, mode) in h.modes.iter().enumerate() {
        if mode.unsafe_set.is_empty() {
            continue;
        }
        let eps = Polynomial::from_rational(vars.clone(), pc.epsilon.clone());
        let p =
            pc.barriers[l].sub(&eps).sub(&weighted(pc, &format!("unsafe:{}", mode.id), mode.unsafe_set.polys(), vars));
        out.push((format!("unsafe:{}", mode.id), p));
    }
    for (owner, m) in &pc.multipliers {
        out.push((format!("sos:{owner}"), m.clone()));
    }
    Ok(out)
}

/// Tier A on one constraint: `max |coeff(p - v^T M v)|` and `lambda_min(M)`.
fn gram_check(tag: &str, p: &Polynomial, pc: &ParsedCertificate, tol: &Tolerances) -> ConstraintCheck {
    let mut diff: BTreeMap<crate::poly::Monomial, f64> = BTreeMap::new();
    let mut min_eig = None;
    if let Some(g) = pc.grams.get(tag) {
        // the Gram basis may be stated over a different variable order
        let p_in = p.with_vars(&g.vars);
        for (m, v) in gram_expansion(&g.basis, &g.matrix) {
            diff.insert(m, -v);
        }
        for (m, c) in p_in.terms() {
            *diff.entry(m.clone()).or_insert(0.0) += to_f64(c);
        }
        min_eig = Some(if g.basis.is_empty() { 0.0 } else { min_eigenvalue(&g.matrix) });
    } else {
        for (m, c) in p.terms() {
            diff.insert(m.clone(), to_f64(c));
        }
    }
    let residual = diff.values().fold(0.0f64, |a, v| a.max(v.abs()));
    let pass = residual <= tol.coefficient_residual && min_eig.is_none_or(|e| e >= tol.min_eigenvalue);
    ConstraintCheck { constraint: tag.to_string(), coefficient_residual: residual, min_eigenvalue: min_eig, pass }
}

/// A sampled condition: `violation(x) <= 0` must hold on `region`.
struct Condition {
    tag: String,
    region: SemialgebraicSet,
    /// `(poly, weight)`: violation is `sum weight * poly(x)`.
    terms: Vec<(CompiledPoly, f64)>,
    /// Relation reset to draw the post-state from, for general jumps.
    reset: Option<ResetSampler>,
}

impl Condition {
    fn violation(&self, x: &[f64]) -> (f64, f64) {
        let mut v = 0.0;
        let mut mag = 0.0;
        for (p, w) in &self.terms {
            v += w * p.eval(x);
            mag += w.abs() * p.magnitude(x);
        }
        (v, mag)
    }
}

fn conditions(h: &HybridSystem, pc: &ParsedCertificate) -> Result<Vec<Condition>, CheckError> {
    let mut out = Vec::new();
    let eps = to_f64(&pc.epsilon);
    for (l, mode) in h.modes.iter().enumerate() {
        let phi = &pc.barriers[l];
        if !mode.init.is_empty() {
            out.push(Condition {
                tag: format!("init:{}", mode.id),
                region: mode.init.clone(),
                terms: vec![(phi.compile(), 1.0)],
                reset: None,
            });
        }
        let lie = phi.lie_derivative(&mode.field).map_err(|e| CheckError::Field(e.to_string()))?;
        out.push(Condition {
            tag: format!("flow:{}", mode.id),
            region: mode.invariant.clone(),
            terms: vec![(lie.compile(), 1.0), (phi.compile(), -to_f64(&pc.lambda[l]))],
            reset: None,
        });
        if !mode.unsafe_set.is_empty() {
            let one = Polynomial::from_rational(h.vars.clone(), Rational::from_integer(1.into()));
            out.push(Condition {
                tag: format!("unsafe:{}", mode.id),
                region: mode.unsafe_set.clone(),
                terms: vec![(one.compile(), eps), (phi.compile(), -1.0)],
                reset: None,
            });
        }
    }
    for (k, t) in h.transitions.iter().enumerate() {
        let src = h.mode_index(&t.source).expect("validated system");
        let dst = h.mode_index(&t.target).expect("validated system");
        let gamma = to_f64(&pc.gamma[k]);
        let (post, pre, reset) = match &t.reset {
            Reset::Identity => (pc.barriers[dst].compile(), pc.barriers[src].compile(), None),
            Reset::Relation(rel) => {
                // evaluated on (x, x')
                let primed = std::sync::Arc::new(h.primed_names());
                let post = pc.barriers[dst].rename_vars(&primed).with_vars(&h.jump_vars);
                let pre = pc.barriers[src].with_vars(&h.jump_vars);
                (post.compile(), pre.compile(), Some(ResetSampler::new(h.dim(), rel)))
            }
        };
        out.push(Condition {
            tag: format!("jump:e{k}"),
            region: t.guard.clone(),
            terms: vec![(post, 1.0), (pre, -gamma)],
            reset,
        });
    }
    Ok(out)
}

/// Samples one condition; points for relation jumps are `(x, x')`.
fn sample_condition(c: &Condition, bounds: &Bounds, count: usize, slack: f64, seed: u64) -> SamplingCheck {
    let mut check = SamplingCheck {
        condition: c.tag.clone(),
        samples: 0,
        attempts: 0,
        worst_violation: f64::NEG_INFINITY,
        witness: None,
        pass: true,
        note: None,
    };
    if c.region.is_empty() || count == 0 {
        check.worst_violation = 0.0;
        check.note = Some("empty region".into());
        return check;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn =
        BoxSampler::new(&c.region, bounds, 4096).and_then(|s| s.sample(count, 2000 * count + 100_000, &mut rng));
    let samples = match drawn {
        Ok(s) => s,
        Err(e) => {
            check.worst_violation = 0.0;
            check.note = Some(e.to_string());
            return check;
        }
    };
    check.attempts = samples.attempts;
    let mut skipped = 0usize;
    for x in samples.points {
        let point = match &c.reset {
            None => x,
            Some(r) => match r.draw(&x, bounds, &mut rng) {
                Some(post) => {
                    let mut p = x;
                    p.extend(post);
                    p
                }
                None => {
                    skipped += 1;
                    continue;
                }
            },
        };
        let (v, mag) = c.violation(&point);
        let v = v - 64.0 * f64::EPSILON * mag;
        check.samples += 1;
        if v > check.worst_violation || check.witness.is_none() {
            check.worst_violation = v;
            check.witness = Some(point);
        }
    }
    if skipped > 0 {
        check.note = Some(format!("{skipped} pre-states had no reachable post-state in the box"));
    }
    if check.samples == 0 {
        check.worst_violation = 0.0;
    }
    check.pass = check.worst_violation <= slack;
    check
}

/// Tier B alone, with an explicit sample count (also used for falsification).
pub fn sample_conditions(
    h: &HybridSystem,
    pc: &ParsedCertificate,
    bounds: &Bounds,
    samples: usize,
    slack: f64,
    seed: u64,
) -> Result<Vec<SamplingCheck>, CheckError> {
    let conds = conditions(h, pc)?;
    Ok(conds
        .iter()
        .enumerate()
        .map(|(i, c)| sample_condition(c, bounds, samples, slack, seed.wrapping_add(i as u64 * 0x9e37_79b9)))
        .collect())
}

/// Tier A and Tier B; both must pass.
pub fn full_check(h: &HybridSystem, cert: &Certificate, tol: &Tolerances) -> Result<VerificationReport, CheckError> {
    let pc = cert.parse(h)?;
    let constraints: Vec<ConstraintCheck> =
        constraint_polys(h, &pc)?.iter().map(|(tag, p)| gram_check(tag, p, &pc, tol)).collect();
    let bounds = tol.sampling_box(h.dim());
    let sampling = sample_conditions(h, &pc, &bounds, tol.samples, tol.sample_slack, tol.seed)?;
    let tier_a = constraints.iter().all(|c| c.pass);
    let tier_b = sampling.iter().all(|s| s.pass);
    Ok(VerificationReport {
        constraints,
        sampling,
        trajectories: Vec::new(),
        verdict: Verdict { tier_a, tier_b, trajectories: None, pass: tier_a && tier_b },
    })
}
