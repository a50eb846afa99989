use std::collections::BTreeMap;
use std::fmt;

use num::traits::Zero;

use super::rational::{format_rational, to_f64, Rational};
use super::Coeff;

/// Identifier of an unknown coefficient in a synthesis program.
pub type UnknownId = usize;

/// An affine expression `c0 + sum_k c_k * u_k` over unknown coefficients.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct LinExpr {
    pub constant: Rational,
    pub terms: BTreeMap<UnknownId, Rational>,
}

impl LinExpr {
    pub fn constant(c: Rational) -> Self {
        Self { constant: c, terms: BTreeMap::new() }
    }

    pub fn unknown(id: UnknownId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, Rational::from_integer(1.into()));
        Self { constant: Rational::zero(), terms }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, id: UnknownId) -> Rational {
        self.terms.get(&id).cloned().unwrap_or_else(Rational::zero)
    }

    /// Evaluates with the given unknown values.
    pub fn eval(&self, values: &[f64]) -> f64 {
        to_f64(&self.constant) + self.terms.iter().map(|(&k, c)| to_f64(c) * values[k]).sum::<f64>()
    }

    /// Exact evaluation with rational unknown values.
    pub fn eval_exact(&self, values: &[Rational]) -> Rational {
        let mut acc = self.constant.clone();
        for (&k, c) in &self.terms {
            acc += c * &values[k];
        }
        acc
    }

    /// Replaces selected unknowns by fixed values.
    pub fn substitute(&self, fixed: &BTreeMap<UnknownId, Rational>) -> LinExpr {
        let mut out = LinExpr::constant(self.constant.clone());
        for (&k, c) in &self.terms {
            match fixed.get(&k) {
                Some(v) => out.constant += c * v,
                None => {
                    out.terms.insert(k, c.clone());
                }
            }
        }
        out
    }
}

impl Coeff for LinExpr {
    fn zero_value() -> Self {
        LinExpr::default()
    }

    fn vanishes(&self) -> bool {
        self.constant.is_zero() && self.terms.is_empty()
    }

    fn add_assign_ref(&mut self, other: &Self) {
        self.constant += &other.constant;
        for (&k, c) in &other.terms {
            let entry = self.terms.entry(k).or_insert_with(Rational::zero);
            *entry += c;
            if entry.is_zero() {
                self.terms.remove(&k);
            }
        }
    }

    fn scale(&self, r: &Rational) -> Self {
        if r.is_zero() {
            return LinExpr::default();
        }
        LinExpr { constant: &self.constant * r, terms: self.terms.iter().map(|(&k, c)| (k, c * r)).collect() }
    }
}

impl fmt::Debug for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.constant.is_zero() || self.terms.is_empty() {
            parts.push(format_rational(&self.constant));
        }
        for (k, c) in &self.terms {
            parts.push(format!("{}*u{k}", format_rational(c)));
        }
        write!(f, "{}", parts.join(" + "))
    }
}
