//! Serialized certificates. Every coefficient is stored as an exact decimal
//! string, so the polynomials a checker rebuilds are exactly the ones written.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certcheck::{Tolerances, VerificationReport};
use crate::poly::rational::{format_rational, from_f64, parse_rational};
use crate::poly::{parse_poly, Monomial, Polynomial, Rational, Vars};
use crate::sdp::SdpStatus;
use crate::sos::{Lifted, SosProgram};
use crate::system::HybridSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierRecord {
    pub mode: String,
    pub degree: u32,
    pub polynomial: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRecord {
    /// `init:<mode>:<i>`, `flow:<mode>:<i>`, `guard:e<k>:<i>`, `reset:e<k>:<i>`
    /// or `unsafe:<mode>:<i>`.
    pub owner: String,
    pub vars: Vec<String>,
    pub polynomial: String,
}

/// `p = v^T M v` for the constraint with the given tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramRecord {
    pub constraint: String,
    pub vars: Vec<String>,
    /// Dense exponent vectors over `vars`.
    pub basis: Vec<Vec<u32>>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeGamma {
    pub source: String,
    pub target: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver_status: SdpStatus,
    pub solver_iterations: usize,
    pub slack: f64,
    pub prune_rounds: usize,
    pub pinned: usize,
    pub gram_blocks: usize,
    pub free_unknowns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub vars: Vec<String>,
    pub barriers: Vec<BarrierRecord>,
    pub multipliers: Vec<MultiplierRecord>,
    pub grams: Vec<GramRecord>,
    /// Mode id to `lambda_l`.
    pub lambda: BTreeMap<String, String>,
    /// One entry per transition, in system order.
    pub gamma: Vec<EdgeGamma>,
    pub epsilon: String,
    pub tolerances: Tolerances,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CertificateError {
    #[error("certificate is over variables {cert:?} but the system uses {system:?}")]
    Variables { cert: Vec<String>, system: Vec<String> },
    #[error("no barrier for mode `{0}`")]
    MissingBarrier(String),
    #[error("no lambda for mode `{0}`")]
    MissingLambda(String),
    #[error("expected {expected} gamma entries, found {got}")]
    GammaCount { expected: usize, got: usize },
    #[error("gamma entry {index} is for {from}->{to}, expected {expected}")]
    GammaEdge { index: usize, from: String, to: String, expected: String },
    #[error("{field}: {detail}")]
    Parse { field: String, detail: String },
    #[error("Gram record {0} is malformed")]
    Gram(String),
}

/// A certificate parsed against a system.
#[derive(Clone, Debug)]
pub struct ParsedCertificate {
    /// In mode order.
    pub barriers: Vec<Polynomial>,
    pub multipliers: BTreeMap<String, Polynomial>,
    pub grams: BTreeMap<String, ParsedGram>,
    pub lambda: Vec<Rational>,
    pub gamma: Vec<Rational>,
    pub epsilon: Rational,
}

#[derive(Clone, Debug)]
pub struct ParsedGram {
    pub vars: Vars,
    pub basis: Vec<Monomial>,
    pub matrix: DMatrix<f64>,
}

fn rational(field: &str, text: &str) -> Result<Rational, CertificateError> {
    parse_rational(text.trim())
        .ok_or_else(|| CertificateError::Parse { field: field.into(), detail: format!("not a number: {text}") })
}

fn poly(field: &str, text: &str, vars: &Vars) -> Result<Polynomial, CertificateError> {
    parse_poly(text, vars).map_err(|e| CertificateError::Parse { field: field.into(), detail: e.to_string() })
}

/// Rounds solver values to their shortest round-trip decimals.
fn rounded(template: &crate::sos::Template, values: &[f64], program: &SosProgram) -> Polynomial {
    let exact: Vec<Rational> = values
        .iter()
        .enumerate()
        .map(|(u, &v)| if program.pinned.contains(&u) || !v.is_finite() { Rational::default() } else { from_f64(v) })
        .collect();
    template.poly.instantiate(&exact)
}

impl Certificate {
    /// Packages a solved program; `values` are the unknowns read back from
    /// the solution.
    pub fn from_solution(
        system: &HybridSystem,
        program: &SosProgram,
        lifted: &Lifted,
        blocks: &[DMatrix<f64>],
        values: &[f64],
        provenance: Provenance,
        tolerances: Tolerances,
    ) -> Self {
        let barriers = program
            .barriers
            .iter()
            .zip(&program.mode_ids)
            .map(|(t, id)| BarrierRecord {
                mode: id.clone(),
                degree: t.degree,
                polynomial: rounded(t, values, program).to_string(),
            })
            .collect();
        let multipliers = program
            .multipliers
            .iter()
            .map(|t| MultiplierRecord {
                owner: t.owner.clone(),
                vars: t.vars().as_ref().clone(),
                polynomial: rounded(t, values, program).to_string(),
            })
            .collect();
        let grams = lifted
            .blocks
            .iter()
            .zip(blocks)
            .map(|(b, m)| {
                let c = &program.constraints[b.constraint];
                let n = c.expr.nvars();
                GramRecord {
                    constraint: c.tag.clone(),
                    vars: c.expr.vars().as_ref().clone(),
                    basis: b.basis.iter().map(|m| m.to_dense(n)).collect(),
                    matrix: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect(),
                }
            })
            .collect();
        let params = &program.params;
        Self {
            vars: system.vars.as_ref().clone(),
            barriers,
            multipliers,
            grams,
            lambda: program.mode_ids.iter().cloned().zip(params.lambda.iter().map(format_rational)).collect(),
            gamma: system
                .transitions
                .iter()
                .zip(&params.gamma)
                .map(|(t, g)| EdgeGamma {
                    source: t.source.clone(),
                    target: t.target.clone(),
                    value: format_rational(g),
                })
                .collect(),
            epsilon: format_rational(&params.epsilon),
            tolerances,
            provenance,
            report: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn barrier_for(&self, mode: &str) -> Option<&BarrierRecord> {
        self.barriers.iter().find(|b| b.mode == mode)
    }

    /// Resolves every string against the system's variables and modes.
    pub fn parse(&self, system: &HybridSystem) -> Result<ParsedCertificate, CertificateError> {
        if self.vars.as_slice() != system.vars.as_slice() {
            return Err(CertificateError::Variables { cert: self.vars.clone(), system: system.vars.as_ref().clone() });
        }
        let mut barriers = Vec::new();
        let mut lambda = Vec::new();
        for m in &system.modes {
            let rec = self.barrier_for(&m.id).ok_or_else(|| CertificateError::MissingBarrier(m.id.clone()))?;
            barriers.push(poly(&format!("barrier {}", m.id), &rec.polynomial, &system.vars)?);
            let l = self.lambda.get(&m.id).ok_or_else(|| CertificateError::MissingLambda(m.id.clone()))?;
            lambda.push(rational(&format!("lambda {}", m.id), l)?);
        }
        if self.gamma.len() != system.transitions.len() {
            return Err(CertificateError::GammaCount { expected: system.transitions.len(), got: self.gamma.len() });
        }
        let mut gamma = Vec::new();
        for (k, (g, t)) in self.gamma.iter().zip(&system.transitions).enumerate() {
            if g.source != t.source || g.target != t.target {
                return Err(CertificateError::GammaEdge {
                    index: k,
                    from: g.source.clone(),
                    to: g.target.clone(),
                    expected: format!("{}->{}", t.source, t.target),
                });
            }
            gamma.push(rational(&format!("gamma {k}"), &g.value)?);
        }
        let mut multipliers = BTreeMap::new();
        for m in &self.multipliers {
            let v: Vars = Arc::new(m.vars.clone());
            multipliers.insert(m.owner.clone(), poly(&format!("multiplier {}", m.owner), &m.polynomial, &v)?);
        }
        let mut grams = BTreeMap::new();
        for g in &self.grams {
            let n = g.basis.len();
            let ok = g.matrix.len() == n
                && g.matrix.iter().all(|r| r.len() == n)
                && g.basis.iter().all(|e| e.len() == g.vars.len());
            if !ok {
                return Err(CertificateError::Gram(g.constraint.clone()));
            }
            let matrix = DMatrix::from_fn(n, n, |i, j| g.matrix[i][j]);
            let basis = g.basis.iter().map(|e| Monomial::from_dense(e)).collect();
            grams.insert(g.constraint.clone(), ParsedGram { vars: Arc::new(g.vars.clone()), basis, matrix });
        }
        Ok(ParsedCertificate {
            barriers,
            multipliers,
            grams,
            lambda,
            gamma,
            epsilon: rational("epsilon", &self.epsilon)?,
        })
    }
}
