//! SOS feasibility programs for exponential-condition barrier certificates.
//!
//! For every mode `l` and transition `e = (l, l')` the program asks for
//! SOS-ness of
//!
//! ```text
//!   init    -phi_l - sum mu_i Init_i
//!   flow    lambda_l phi_l - L_f phi_l - sum theta_i I_i
//!   jump    gamma_e phi_l(x) - phi_l'(x') - sum kappa_i(x) G_i(x) - sum sigma_i(x') R_i(x, x')
//!   unsafe  phi_l - eps - sum eta_i Unsafe_i
//! ```
//!
//! plus SOS-ness of every multiplier. Identity resets use `phi_l'(x)` and no
//! `sigma`. Empty init/unsafe sets produce no constraint.

mod lift;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::poly::rational::{format_rational, int};
use crate::poly::{monomials_up_to, AffinePoly, Coeff, LinExpr, Monomial, Polynomial, Rational, UnknownId, Vars};
use crate::system::{HybridSystem, Reset, SemialgebraicSet};

pub use lift::{
    coefficient_residual, gram_expansion, gram_lift, LiftError, LiftOptions, Lifted, LiftedBlock, RowOrigin,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Unknown {
    pub owner: String,
    pub monomial: Monomial,
}

/// Unknown template coefficients, numbered densely from 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnknownRegistry {
    unknowns: Vec<Unknown>,
}

impl UnknownRegistry {
    pub fn add(&mut self, owner: &str, monomial: Monomial) -> UnknownId {
        self.unknowns.push(Unknown { owner: owner.to_string(), monomial });
        self.unknowns.len() - 1
    }

    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    pub fn get(&self, id: UnknownId) -> &Unknown {
        &self.unknowns[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (UnknownId, &Unknown)> {
        self.unknowns.iter().enumerate()
    }

    /// Label like `phi:1[x1^2]`.
    pub fn label(&self, id: UnknownId, vars: &[String]) -> String {
        let u = &self.unknowns[id];
        format!("{}[{}]", u.owner, u.monomial.display_with(vars))
    }
}

/// A complete polynomial of fixed degree with one unknown per monomial.
#[derive(Clone, Debug)]
pub struct Template {
    pub owner: String,
    pub degree: u32,
    pub poly: AffinePoly,
    pub unknowns: Vec<UnknownId>,
}

impl Template {
    fn complete(registry: &mut UnknownRegistry, owner: &str, vars: &Vars, degree: u32) -> Self {
        let mut unknowns = Vec::new();
        let mut poly = AffinePoly::zero(vars.clone());
        for m in monomials_up_to(vars.len(), degree) {
            let id = registry.add(owner, m.clone());
            poly.add_term(m, &LinExpr::unknown(id));
            unknowns.push(id);
        }
        Self { owner: owner.to_string(), degree, poly, unknowns }
    }

    pub fn vars(&self) -> &Vars {
        self.poly.vars()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Init,
    Flow,
    Jump,
    Unsafe,
    Multiplier,
    /// A bare SOS query outside any barrier program.
    Standalone,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintKind::Init => "init",
            ConstraintKind::Flow => "flow",
            ConstraintKind::Jump => "jump",
            ConstraintKind::Unsafe => "unsafe",
            ConstraintKind::Multiplier => "multiplier",
            ConstraintKind::Standalone => "standalone",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct SosConstraint {
    pub kind: ConstraintKind,
    /// `init:<mode>`, `flow:<mode>`, `jump:e<k>`, `unsafe:<mode>` or `sos:<multiplier>`.
    pub tag: String,
    pub expr: AffinePoly,
    /// Even degree the Gram lifting targets.
    pub target_degree: u32,
    /// Top-degree monomials whose coefficients are forced to zero.
    pub eliminated: Vec<Monomial>,
    pub degenerate: bool,
}

/// `expr = 0`, over unknowns only.
#[derive(Clone, Debug)]
pub struct LinearEquality {
    pub tag: String,
    pub expr: LinExpr,
}

/// Parameters of one synthesis attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Barrier degree per mode.
    pub degrees: Vec<u32>,
    /// `lambda_l` per mode.
    pub lambda: Vec<Rational>,
    /// `gamma_e` per transition.
    pub gamma: Vec<Rational>,
    pub epsilon: Rational,
}

impl SynthParams {
    /// One degree and one `lambda` for all modes, default `gamma`.
    pub fn uniform(system: &HybridSystem, degree: u32, lambda: Rational, epsilon: Rational) -> Self {
        Self {
            degrees: vec![degree; system.modes.len()],
            lambda: vec![lambda; system.modes.len()],
            gamma: default_gamma(system),
            epsilon,
        }
    }
}

/// 1 on every edge except resets whose post-state ignores the pre-state.
pub fn default_gamma(system: &HybridSystem) -> Vec<Rational> {
    let n = system.dim();
    system
        .transitions
        .iter()
        .map(|t| match &t.reset {
            Reset::Identity => int(1),
            Reset::Relation(r) => {
                let uses_pre = r.iter().any(|p| p.terms().keys().any(|m| m.iter().any(|(v, _)| v < n)));
                if uses_pre {
                    int(1)
                } else {
                    int(0)
                }
            }
        })
        .collect()
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BuildError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(
        "constraint {tag} has odd degree {degree} with fixed top-degree terms ({detail}); \
         no multiplier degree can make it even"
    )]
    OddDegree { tag: String, degree: u32, detail: String },
}

/// The symbolic program for one `(lambda, d)` cell.
#[derive(Clone, Debug)]
pub struct SosProgram {
    pub vars: Vars,
    pub jump_vars: Vars,
    pub unknowns: UnknownRegistry,
    /// One per mode, in mode order.
    pub barriers: Vec<Template>,
    pub multipliers: Vec<Template>,
    pub constraints: Vec<SosConstraint>,
    pub linear: Vec<LinearEquality>,
    /// Unknowns pinned to zero by pruning.
    pub pinned: BTreeSet<UnknownId>,
    pub params: SynthParams,
    pub mode_ids: Vec<String>,
}

impl SosProgram {
    /// A program whose only constraints are "`p` is SOS" for each `p`.
    pub fn standalone(vars: Vars, exprs: Vec<AffinePoly>, unknowns: UnknownRegistry) -> Self {
        let constraints = exprs
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let expr = e.with_vars(&vars);
                SosConstraint {
                    kind: ConstraintKind::Standalone,
                    tag: format!("sos:{i}"),
                    target_degree: expr.total_degree(),
                    degenerate: expr.is_zero(),
                    expr,
                    eliminated: Vec::new(),
                }
            })
            .collect();
        Self {
            jump_vars: vars.clone(),
            vars,
            unknowns,
            barriers: Vec::new(),
            multipliers: Vec::new(),
            constraints,
            linear: Vec::new(),
            pinned: BTreeSet::new(),
            params: SynthParams { degrees: Vec::new(), lambda: Vec::new(), gamma: Vec::new(), epsilon: int(1) },
            mode_ids: Vec::new(),
        }
    }

    pub fn main_constraints(&self) -> impl Iterator<Item = &SosConstraint> {
        self.constraints.iter().filter(|c| !matches!(c.kind, ConstraintKind::Multiplier))
    }

    pub fn multiplier(&self, owner: &str) -> Option<&Template> {
        self.multipliers.iter().find(|m| m.owner == owner)
    }

    pub fn unknown_label(&self, id: UnknownId) -> String {
        let owner = &self.unknowns.get(id).owner;
        let vars = self
            .barriers
            .iter()
            .chain(&self.multipliers)
            .find(|t| &t.owner == owner)
            .map(|t| t.vars().as_ref().clone())
            .unwrap_or_else(|| self.vars.as_ref().clone());
        self.unknowns.label(id, &vars)
    }
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

/// Even degree of a constraint with base degree `base`: every product
/// `m_i g_i` must be able to reach `base` with an even `m_i`.
fn constraint_target(base: u32, gdegs: impl Iterator<Item = u32>) -> u32 {
    let reach = gdegs.map(|g| even_ceil(base.saturating_sub(g)) + g).max().unwrap_or(0);
    even_ceil(base.max(reach))
}

/// Largest even multiplier degree keeping `deg(m * g) <= target`.
fn multiplier_degree(target: u32, gdeg: u32) -> u32 {
    let room = target.saturating_sub(gdeg);
    room - room % 2
}

struct Builder {
    registry: UnknownRegistry,
    multipliers: Vec<Template>,
    constraints: Vec<SosConstraint>,
}

struct MultiplierSpec<'p> {
    owner: String,
    g: &'p Polynomial,
    vars: Vars,
}

impl Builder {
    fn constraint(&mut self, kind: ConstraintKind, tag: String, base: AffinePoly, mults: Vec<MultiplierSpec<'_>>) {
        let mut expr = base;
        if !mults.is_empty() {
            let target = constraint_target(expr.total_degree(), mults.iter().map(|m| m.g.total_degree()));
            for spec in mults {
                let md = multiplier_degree(target, spec.g.total_degree());
                let t = Template::complete(&mut self.registry, &spec.owner, &spec.vars, md);
                let g = spec.g.with_vars(expr.vars());
                let product = t.poly.with_vars(expr.vars()).mul_poly(&g);
                expr = expr.sub(&product);
                self.multipliers.push(t);
            }
        }
        let target_degree = expr.total_degree();
        self.constraints.push(SosConstraint {
            kind,
            tag,
            degenerate: expr.is_zero(),
            expr,
            target_degree,
            eliminated: Vec::new(),
        });
    }
}

fn region_polys(set: &SemialgebraicSet) -> &[Polynomial] {
    set.polys()
}

/// Builds the SOS program; multiplier degrees follow the constraint degree so
/// that every product term fits under an even target degree.
pub fn build_program(system: &HybridSystem, params: &SynthParams) -> Result<SosProgram, BuildError> {
    let nm = system.modes.len();
    if params.degrees.len() != nm || params.lambda.len() != nm {
        return Err(BuildError::Params(format!("expected {nm} per-mode degrees and lambdas")));
    }
    if params.gamma.len() != system.transitions.len() {
        return Err(BuildError::Params(format!("expected {} gamma values", system.transitions.len())));
    }
    if params.degrees.iter().any(|&d| d < 1) {
        return Err(BuildError::Params("barrier degree must be at least 1".into()));
    }
    if !params.epsilon.is_positive() {
        return Err(BuildError::Params("epsilon must be positive".into()));
    }
    if params.gamma.iter().any(|g| g.is_negative()) {
        return Err(BuildError::Params("gamma must be non-negative".into()));
    }
    let mut b = Builder { registry: UnknownRegistry::default(), multipliers: Vec::new(), constraints: Vec::new() };
    let vars = system.vars.clone();
    let primed: Vars = std::sync::Arc::new(system.primed_names());
    let barriers: Vec<Template> = system
        .modes
        .iter()
        .zip(&params.degrees)
        .map(|(m, &d)| Template::complete(&mut b.registry, &format!("phi:{}", m.id), &vars, d))
        .collect();

    for (l, mode) in system.modes.iter().enumerate() {
        let phi = &barriers[l].poly;
        if !mode.init.is_empty() {
            let mults = region_polys(&mode.init)
                .iter()
                .enumerate()
                .map(|(i, g)| MultiplierSpec { owner: format!("init:{}:{i}", mode.id), g, vars: vars.clone() })
                .collect();
            b.constraint(ConstraintKind::Init, format!("init:{}", mode.id), phi.neg(), mults);
        }
        let lie = phi.lie_derivative(&mode.field).expect("field dimension validated at load");
        let base = phi.scale(&params.lambda[l]).sub(&lie);
        let mults = region_polys(&mode.invariant)
            .iter()
            .enumerate()
            .map(|(i, g)| MultiplierSpec { owner: format!("flow:{}:{i}", mode.id), g, vars: vars.clone() })
            .collect();
        b.constraint(ConstraintKind::Flow, format!("flow:{}", mode.id), base, mults);
    }
    for (k, t) in system.transitions.iter().enumerate() {
        let src = system.mode_index(&t.source).expect("validated");
        let dst = system.mode_index(&t.target).expect("validated");
        let gamma = &params.gamma[k];
        let guard_mults = |cvars: &Vars| -> Vec<(String, Polynomial)> {
            region_polys(&t.guard)
                .iter()
                .enumerate()
                .map(|(i, g)| (format!("guard:e{k}:{i}"), g.with_vars(cvars)))
                .collect()
        };
        match &t.reset {
            Reset::Identity => {
                let base = barriers[src].poly.scale(gamma).sub(&barriers[dst].poly);
                let gm = guard_mults(&vars);
                let mults =
                    gm.iter().map(|(o, g)| MultiplierSpec { owner: o.clone(), g, vars: vars.clone() }).collect();
                b.constraint(ConstraintKind::Jump, format!("jump:e{k}"), base, mults);
            }
            Reset::Relation(rel) => {
                let jv = system.jump_vars.clone();
                let pre = barriers[src].poly.with_vars(&jv).scale(gamma);
                let post = barriers[dst].poly.rename_vars(&primed).with_vars(&jv);
                let base = pre.sub(&post).with_vars(&jv);
                let gm = guard_mults(&jv);
                let rel: Vec<Polynomial> = rel.iter().map(|r| r.with_vars(&jv)).collect();
                let mut mults: Vec<MultiplierSpec> =
                    gm.iter().map(|(o, g)| MultiplierSpec { owner: o.clone(), g, vars: vars.clone() }).collect();
                mults.extend(rel.iter().enumerate().map(|(i, r)| MultiplierSpec {
                    owner: format!("reset:e{k}:{i}"),
                    g: r,
                    vars: primed.clone(),
                }));
                b.constraint(ConstraintKind::Jump, format!("jump:e{k}"), base, mults);
            }
        }
    }
    for (l, mode) in system.modes.iter().enumerate() {
        if mode.unsafe_set.is_empty() {
            continue;
        }
        let phi = &barriers[l].poly;
        let base = phi.sub(&AffinePoly::constant(vars.clone(), LinExpr::constant(params.epsilon.clone())));
        let mults = region_polys(&mode.unsafe_set)
            .iter()
            .enumerate()
            .map(|(i, g)| MultiplierSpec { owner: format!("unsafe:{}:{i}", mode.id), g, vars: vars.clone() })
            .collect();
        b.constraint(ConstraintKind::Unsafe, format!("unsafe:{}", mode.id), base, mults);
    }
    let multiplier_constraints: Vec<SosConstraint> = b
        .multipliers
        .iter()
        .map(|t| SosConstraint {
            kind: ConstraintKind::Multiplier,
            tag: format!("sos:{}", t.owner),
            expr: t.poly.clone(),
            target_degree: t.degree,
            eliminated: Vec::new(),
            degenerate: false,
        })
        .collect();
    b.constraints.extend(multiplier_constraints);

    for c in &b.constraints {
        let deg = c.expr.total_degree();
        if deg % 2 == 1 {
            let top = c.expr.homogeneous_part(deg);
            let fixed: Vec<String> = top
                .terms()
                .iter()
                .filter(|(_, e)| e.is_constant() && !e.vanishes())
                .map(|(m, e)| format!("{}*{}", format_rational(&e.constant), m.display_with(c.expr.vars())))
                .collect();
            if !fixed.is_empty() {
                return Err(BuildError::OddDegree { tag: c.tag.clone(), degree: deg, detail: fixed.join(", ") });
            }
        }
    }

    Ok(SosProgram {
        vars,
        jump_vars: system.jump_vars.clone(),
        unknowns: b.registry,
        barriers,
        multipliers: b.multipliers,
        constraints: b.constraints,
        linear: Vec::new(),
        pinned: BTreeSet::new(),
        params: params.clone(),
        mode_ids: system.modes.iter().map(|m| m.id.clone()).collect(),
    })
}

/// Forces the coefficients of odd top-degree monomials to zero through linear
/// equalities, lowering each such constraint's target degree by one.
pub fn eliminate_odd_top(mut program: SosProgram) -> SosProgram {
    for c in program.constraints.iter_mut() {
        if !c.eliminated.is_empty() {
            continue;
        }
        let deg = c.expr.total_degree();
        if deg % 2 == 0 {
            c.target_degree = deg;
            c.degenerate = c.expr.is_zero();
            continue;
        }
        let top = c.expr.homogeneous_part(deg);
        for (m, e) in top.terms() {
            program.linear.push(LinearEquality {
                tag: format!("{}:odd[{}]", c.tag, m.display_with(c.expr.vars())),
                expr: e.clone(),
            });
            c.eliminated.push(m.clone());
        }
        c.target_degree = deg - 1;
        c.degenerate = c.expr.sub(&top).is_zero();
    }
    program
}

/// Values of the unknowns mapped back into polynomials.
pub fn instantiate(template: &Template, values: &[Rational]) -> Polynomial {
    template.poly.instantiate(values)
}

/// Zero-valued unknown vector.
pub fn zero_values(program: &SosProgram) -> Vec<Rational> {
    vec![Rational::zero(); program.unknowns.len()]
}

/// Counts per constraint kind, for diagnostics.
pub fn kind_counts(program: &SosProgram) -> BTreeMap<ConstraintKind, usize> {
    let mut out = BTreeMap::new();
    for c in &program.constraints {
        *out.entry(c.kind).or_insert(0) += 1;
    }
    out
}

impl PartialOrd for ConstraintKind {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConstraintKind {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}
