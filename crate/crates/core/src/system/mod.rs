//! Semialgebraic continuous systems and hybrid automata.
//!
//! A continuous system is a [`HybridSystem`] with exactly one mode and no
//! transitions.

mod document;
mod sample;

use std::collections::HashMap;

use crate::poly::{Polynomial, Vars};

pub use document::{load_system, load_system_file, render_system, SystemError};
pub use sample::{sample, Bounds, BoxSampler, SampleError, Samples};

/// `{x | p(x) >= 0 for every p in polys}`, or the explicitly empty set.
///
/// A region with no defining polynomials is the whole state space.
#[derive(Clone, Debug, PartialEq)]
pub enum SemialgebraicSet {
    Empty,
    Region(Vec<Polynomial>),
}

impl SemialgebraicSet {
    pub fn whole() -> Self {
        SemialgebraicSet::Region(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, SemialgebraicSet::Empty)
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, SemialgebraicSet::Region(p) if p.is_empty())
    }

    /// Defining polynomials (none for the empty set and the whole space).
    pub fn polys(&self) -> &[Polynomial] {
        match self {
            SemialgebraicSet::Empty => &[],
            SemialgebraicSet::Region(p) => p,
        }
    }

    /// Point membership; `point` is ordered like the polynomials' variables.
    pub fn contains(&self, point: &[f64]) -> bool {
        self.contains_with_tol(point, 0.0)
    }

    /// Membership with every defining inequality relaxed to `p(x) >= -tol`.
    pub fn contains_with_tol(&self, point: &[f64], tol: f64) -> bool {
        match self {
            SemialgebraicSet::Empty => false,
            SemialgebraicSet::Region(polys) => polys.iter().all(|p| p.eval_slice(point) >= -tol),
        }
    }

    /// Smallest defining-polynomial value at `point` (`+inf` for the whole space).
    pub fn margin(&self, point: &[f64]) -> f64 {
        match self {
            SemialgebraicSet::Empty => f64::NEG_INFINITY,
            SemialgebraicSet::Region(polys) => polys.iter().map(|p| p.eval_slice(point)).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Membership at a named point; the empty set contains nothing.
pub fn membership(set: &SemialgebraicSet, point: &HashMap<String, f64>) -> bool {
    match set {
        SemialgebraicSet::Empty => false,
        SemialgebraicSet::Region(polys) => polys.iter().all(|p| p.eval(point).map(|v| v >= 0.0).unwrap_or(false)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub id: String,
    pub field: Vec<Polynomial>,
    pub invariant: SemialgebraicSet,
    pub init: SemialgebraicSet,
    pub unsafe_set: SemialgebraicSet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Reset {
    Identity,
    /// `{x' | r(x, x') >= 0}`; polynomials range over the state variables
    /// followed by their primed copies.
    Relation(Vec<Polynomial>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub source: String,
    pub target: String,
    pub guard: SemialgebraicSet,
    pub reset: Reset,
}

impl Transition {
    pub fn is_identity_reset(&self) -> bool {
        matches!(self.reset, Reset::Identity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridSystem {
    pub vars: Vars,
    /// State variables followed by their primed copies (`x1'`, ...).
    pub jump_vars: Vars,
    pub modes: Vec<Mode>,
    pub transitions: Vec<Transition>,
}

impl HybridSystem {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn is_continuous(&self) -> bool {
        self.modes.len() == 1 && self.transitions.is_empty()
    }

    pub fn mode_index(&self, id: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.id == id)
    }

    pub fn mode(&self, id: &str) -> Option<&Mode> {
        self.modes.iter().find(|m| m.id == id)
    }

    /// Transitions leaving the mode with the given id, with their indices.
    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions.iter().enumerate().filter(move |(_, t)| t.source == id)
    }

    pub fn primed_names(&self) -> Vec<String> {
        self.vars.iter().map(|v| format!("{v}'")).collect()
    }
}

pub(crate) fn jump_vars_for(vars: &Vars) -> Vars {
    let mut all: Vec<String> = vars.as_ref().clone();
    all.extend(vars.iter().map(|v| format!("{v}'")));
    std::sync::Arc::new(all)
}
