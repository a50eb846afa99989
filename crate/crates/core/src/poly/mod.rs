//! Sparse multivariate polynomials with exact coefficients.
//!
//! [`Poly<C>`] is generic over the coefficient type. Two instantiations are
//! used throughout the crate: [`Polynomial`] (exact rationals) for systems and
//! certificates, and [`AffinePoly`] whose coefficients are affine expressions
//! in unknown template coefficients, used while compiling SOS programs.

mod linexpr;
mod monomial;
mod parse;
pub mod rational;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num::traits::{One, Signed, Zero};

pub use linexpr::{LinExpr, UnknownId};
pub use monomial::{monomials_in, monomials_up_to, Monomial};
pub use parse::{parse_poly, parse_poly_auto};
pub use rational::Rational;

use rational::{format_rational, to_f64};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable `{0}` is not bound in the evaluation point")]
    Unbound(String),
    #[error("vector field has {got} components but the state has {expected} variables")]
    Dimension { expected: usize, got: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Coefficient ring interface needed by [`Poly`].
pub trait Coeff: Clone + PartialEq + fmt::Debug {
    fn zero_value() -> Self;
    fn vanishes(&self) -> bool;
    fn add_assign_ref(&mut self, other: &Self);
    fn scale(&self, r: &Rational) -> Self;
    fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }
}

impl Coeff for Rational {
    fn zero_value() -> Self {
        Zero::zero()
    }
    fn vanishes(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn scale(&self, r: &Rational) -> Self {
        self * r
    }
}

/// Ordered variable names a polynomial is expressed over.
pub type Vars = Arc<Vec<String>>;

pub fn vars(names: &[&str]) -> Vars {
    Arc::new(names.iter().map(|s| s.to_string()).collect())
}

#[derive(Clone)]
pub struct Poly<C> {
    vars: Vars,
    terms: BTreeMap<Monomial, C>,
}

pub type Polynomial = Poly<Rational>;
pub type AffinePoly = Poly<LinExpr>;

/// Merges two variable lists: `a` first, then names of `b` not already in `a`.
/// Returns the merged list and the index maps for `a` and `b`.
fn unify_vars(a: &Vars, b: &Vars) -> (Vars, Vec<usize>, Vec<usize>) {
    if Arc::ptr_eq(a, b) || a == b {
        let ident: Vec<usize> = (0..a.len()).collect();
        return (a.clone(), ident.clone(), ident);
    }
    let mut merged: Vec<String> = a.as_ref().clone();
    let map_a: Vec<usize> = (0..a.len()).collect();
    let map_b: Vec<usize> = b
        .iter()
        .map(|name| match merged.iter().position(|m| m == name) {
            Some(i) => i,
            None => {
                merged.push(name.clone());
                merged.len() - 1
            }
        })
        .collect();
    if merged.len() == a.len() {
        return (a.clone(), map_a, map_b);
    }
    (Arc::new(merged), map_a, map_b)
}

impl<C: Coeff> Poly<C> {
    pub fn zero(vars: Vars) -> Self {
        Self { vars, terms: BTreeMap::new() }
    }

    pub fn constant(vars: Vars, c: C) -> Self {
        Self::monomial(vars, Monomial::one(), c)
    }

    pub fn monomial(vars: Vars, m: Monomial, c: C) -> Self {
        let mut terms = BTreeMap::new();
        if !c.vanishes() {
            terms.insert(m, c);
        }
        Self { vars, terms }
    }

    pub fn from_terms(vars: Vars, terms: impl IntoIterator<Item = (Monomial, C)>) -> Self {
        let mut p = Self::zero(vars);
        for (m, c) in terms {
            p.add_term(m, &c);
        }
        p
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero_value)
    }

    pub fn add_term(&mut self, m: Monomial, c: &C) {
        if c.vanishes() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                existing.add_assign_ref(c);
                if existing.vanishes() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c.clone());
            }
        }
    }

    /// Maximum total degree over the terms. The zero polynomial has degree 0.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Re-expresses the polynomial over `target`, which must contain every
    /// variable this polynomial actually uses.
    pub fn with_vars(&self, target: &Vars) -> Self {
        if Arc::ptr_eq(&self.vars, target) || self.vars == *target {
            return Self { vars: target.clone(), terms: self.terms.clone() };
        }
        let map: Vec<usize> =
            self.vars.iter().map(|name| target.iter().position(|t| t == name).unwrap_or(usize::MAX)).collect();
        let terms = self.terms.iter().map(|(m, c)| {
            debug_assert!(m.iter().all(|(v, _)| map[v] != usize::MAX));
            (m.remap(&map), c.clone())
        });
        Self::from_terms(target.clone(), terms)
    }

    /// Same terms over a list of new names, position by position.
    pub fn rename_vars(&self, names: &Vars) -> Self {
        assert_eq!(names.len(), self.vars.len(), "rename needs one name per variable");
        Self { vars: names.clone(), terms: self.terms.clone() }
    }

    fn unified(&self, other: &Vars) -> (Self, Vec<usize>) {
        let (merged, _, map_b) = unify_vars(&self.vars, other);
        (self.with_vars(&merged), map_b)
    }

    pub fn add(&self, other: &Self) -> Self {
        let (mut out, map_b) = self.unified(&other.vars);
        let same = map_b.iter().enumerate().all(|(i, &j)| i == j);
        for (m, c) in &other.terms {
            let m = if same { m.clone() } else { m.remap(&map_b) };
            out.add_term(m, c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { vars: self.vars.clone(), terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, r: &Rational) -> Self {
        if Zero::is_zero(r) {
            return Self::zero(self.vars.clone());
        }
        Self { vars: self.vars.clone(), terms: self.terms.iter().map(|(m, c)| (m.clone(), c.scale(r))).collect() }
    }

    /// Product with a polynomial with rational coefficients.
    pub fn mul_poly(&self, other: &Polynomial) -> Self {
        let (merged, map_a, map_b) = unify_vars(&self.vars, &other.vars);
        let same_a = map_a.iter().enumerate().all(|(i, &j)| i == j);
        let same_b = map_b.iter().enumerate().all(|(i, &j)| i == j);
        let mut out = Self::zero(merged);
        for (ma, ca) in &self.terms {
            let ma = if same_a { ma.clone() } else { ma.remap(&map_a) };
            for (mb, cb) in &other.terms {
                let mb = if same_b { mb.clone() } else { mb.remap(&map_b) };
                out.add_term(ma.mul(&mb), &ca.scale(cb));
            }
        }
        out
    }

    /// Partial derivative with respect to the variable at `index`.
    pub fn derivative(&self, index: usize) -> Self {
        let mut out = Self::zero(self.vars.clone());
        for (m, c) in &self.terms {
            if let Some((k, reduced)) = m.derivative(index) {
                out.add_term(reduced, &c.scale(&Rational::from_integer(k.into())));
            }
        }
        out
    }

    /// Lie derivative `sum_i dp/dx_i * f_i`, where `field[i]` is the component
    /// for `state[i]`. `state` names the differentiated variables; they need
    /// not be all of `self.vars()`.
    pub fn lie_derivative_over(&self, state: &[String], field: &[Polynomial]) -> Result<Self, PolyError> {
        if field.len() != state.len() {
            return Err(PolyError::Dimension { expected: state.len(), got: field.len() });
        }
        let mut out = Self::zero(self.vars.clone());
        for (name, f) in state.iter().zip(field) {
            if let Some(idx) = self.vars.iter().position(|v| v == name) {
                let d = self.derivative(idx);
                if !d.is_zero() {
                    out = out.add(&d.mul_poly(f));
                }
            }
        }
        Ok(out)
    }

    /// Lie derivative along `field`, one component per variable of `self`.
    pub fn lie_derivative(&self, field: &[Polynomial]) -> Result<Self, PolyError> {
        let state = self.vars.as_ref().clone();
        self.lie_derivative_over(&state, field)
    }

    /// Terms of exactly the given total degree.
    pub fn homogeneous_part(&self, degree: u32) -> Self {
        Self {
            vars: self.vars.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == degree)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        Poly::from_terms(self.vars.clone(), self.terms.iter().map(|(m, c)| (m.clone(), f(c))))
    }
}

impl<C: Coeff> PartialEq for Poly<C> {
    /// Equality after unifying variable lists by name.
    fn eq(&self, other: &Self) -> bool {
        if self.vars == other.vars {
            return self.terms == other.terms;
        }
        let (merged, _, _) = unify_vars(&self.vars, &other.vars);
        self.with_vars(&merged).terms == other.with_vars(&merged).terms
    }
}

impl Polynomial {
    pub fn var(vars: Vars, index: usize) -> Self {
        Self::monomial(vars, Monomial::var(index), Rational::one())
    }

    /// Polynomial consisting of the named variable, added to `vars` if absent.
    pub fn named(vars: &Vars, name: &str) -> Self {
        match vars.iter().position(|v| v == name) {
            Some(i) => Self::var(vars.clone(), i),
            None => {
                let mut v = vars.as_ref().clone();
                v.push(name.to_string());
                let n = v.len() - 1;
                Self::var(Arc::new(v), n)
            }
        }
    }

    pub fn from_rational(vars: Vars, c: Rational) -> Self {
        Self::constant(vars, c)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        self.mul_poly(other)
    }

    pub fn pow(&self, exp: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.vars.clone(), Rational::one());
        for _ in 0..exp {
            acc = acc.mul(self);
        }
        acc
    }

    /// Evaluates by direct term summation at a named point.
    pub fn eval(&self, point: &HashMap<String, f64>) -> Result<f64, PolyError> {
        let mut x = vec![0.0; self.nvars()];
        for (i, name) in self.vars.iter().enumerate() {
            let used = self.terms.keys().any(|m| m.exponent(i) > 0);
            match point.get(name) {
                Some(&v) => x[i] = v,
                None if used => return Err(PolyError::Unbound(name.clone())),
                None => {}
            }
        }
        Ok(self.eval_slice(&x))
    }

    /// Evaluates with values given in the order of `self.vars()`.
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| to_f64(c) * m.eval(x)).sum()
    }

    /// Exact evaluation at a rational point (ordered like `self.vars()`).
    pub fn eval_exact(&self, x: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (v, e) in m.iter() {
                term *= num::traits::Pow::pow(&x[v], e);
            }
            acc += term;
        }
        acc
    }

    /// Floating-point compiled form for fast repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.iter().map(|(v, e)| (v, e as i32)).collect(), to_f64(c)))
                .collect(),
        }
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| to_f64(c).abs()).fold(0.0, f64::max)
    }

    /// Substitutes polynomials for variables: `subs[i]` replaces `self.vars()[i]`.
    pub fn compose(&self, subs: &[Polynomial]) -> Polynomial {
        let target = subs.first().map(|p| p.vars.clone()).unwrap_or_else(|| self.vars.clone());
        let mut out = Polynomial::zero(target.clone());
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(target.clone(), c.clone());
            for (v, e) in m.iter() {
                term = term.mul(&subs[v].pow(e));
            }
            out = out.add(&term);
        }
        out
    }
}

impl AffinePoly {
    /// Lifts a rational polynomial into the affine-coefficient ring.
    pub fn from_poly(p: &Polynomial) -> Self {
        p.map_coeffs(|c| LinExpr::constant(c.clone()))
    }

    /// Fixes all unknowns to the given values.
    pub fn instantiate(&self, values: &[Rational]) -> Polynomial {
        self.map_coeffs(|e| e.eval_exact(values))
    }

    pub fn substitute(&self, fixed: &BTreeMap<UnknownId, Rational>) -> AffinePoly {
        self.map_coeffs(|e| e.substitute(fixed))
    }

    /// Unknowns referenced by any coefficient.
    pub fn unknowns(&self) -> std::collections::BTreeSet<UnknownId> {
        self.terms.values().flat_map(|e| e.terms.keys().copied()).collect()
    }
}

/// A polynomial with `f64` coefficients, evaluated by direct term summation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(Vec<(usize, i32)>, f64)>,
}

impl CompiledPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.iter().map(|&(v, e)| x[v].powi(e)).product::<f64>()).sum()
    }

    /// Sum of absolute term magnitudes, a scale for rounding error at `x`.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| (c * m.iter().map(|&(v, e)| x[v].powi(e)).product::<f64>()).abs()).sum()
    }
}

impl fmt::Display for Polynomial {
    /// Renders in the textual syntax accepted by [`parse_poly`], highest
    /// graded terms first; coefficients are exact.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let coeff = format_rational(&abs);
            let coeff = if coeff.contains('/') { format!("({coeff})") } else { coeff };
            if m.is_one() {
                write!(f, "{coeff}")?;
            } else if abs.is_one() {
                write!(f, "{}", m.display_with(&self.vars))?;
            } else {
                write!(f, "{coeff}*{}", m.display_with(&self.vars))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial[{}]({})", self.vars.join(","), self)
    }
}

impl fmt::Debug for AffinePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.terms.iter().rev().map(|(m, c)| format!("({c:?})*{}", m.display_with(&self.vars))).collect();
        write!(f, "AffinePoly({})", parts.join(" + "))
    }
}
