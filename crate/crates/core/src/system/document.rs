//! JSON system-description documents.
//!
//! ```json
//! {
//!   "vars": ["x1", "x2"],
//!   "modes": [{"id": "1", "field": ["x2", "-x1"], "invariant": [],
//!              "init": ["0.25 - x1^2"], "unsafe": []}],
//!   "transitions": [{"source": "1", "target": "1", "guard": ["x1"],
//!                    "reset": "identity"}]
//! }
//! ```
//!
//! Every polynomial string `p` denotes the inequality `p >= 0`. An empty
//! `init`/`unsafe` list is the empty set; an empty `invariant`/`guard` list is
//! the whole state space. Reset relations may use primed variables (`x1'`).

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{jump_vars_for, HybridSystem, Mode, Reset, SemialgebraicSet, Transition};
use crate::poly::{parse_poly, PolyError, Polynomial, Vars};

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{location}: {source}")]
    Poly { location: String, source: PolyError },
    #[error("{location}: transition references unknown mode `{label}`")]
    DanglingLabel { location: String, label: String },
    #[error("{location}: expected {expected} components, found {got}")]
    Dimension { location: String, expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Label {
    Text(String),
    Number(i64),
}

impl Label {
    fn into_string(self) -> String {
        match self {
            Label::Text(s) => s,
            Label::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeDoc {
    id: Label,
    field: Vec<String>,
    #[serde(default)]
    invariant: Vec<String>,
    #[serde(default)]
    init: Vec<String>,
    #[serde(default, rename = "unsafe")]
    unsafe_set: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ResetDoc {
    Keyword(String),
    Relation(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    source: Label,
    target: Label,
    #[serde(default)]
    guard: Vec<String>,
    reset: ResetDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    vars: Vec<String>,
    modes: Vec<ModeDoc>,
    #[serde(default)]
    transitions: Vec<TransitionDoc>,
}

fn parse_list(items: &[String], vars: &Vars, location: &str) -> Result<Vec<Polynomial>, SystemError> {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_poly(s, vars).map_err(|source| SystemError::Poly { location: format!("{location}[{i}]"), source })
        })
        .collect()
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses and validates a system-description document.
pub fn load_system(document: &str) -> Result<HybridSystem, SystemError> {
    let doc: SystemDoc = serde_json::from_str(document).map_err(|e| SystemError::Schema(e.to_string()))?;
    if doc.vars.is_empty() {
        return Err(SystemError::Schema("`vars` must name at least one state variable".into()));
    }
    let mut seen = HashSet::new();
    for v in &doc.vars {
        if !valid_identifier(v) {
            return Err(SystemError::Schema(format!("invalid variable name `{v}`")));
        }
        if !seen.insert(v.clone()) {
            return Err(SystemError::Schema(format!("duplicate variable `{v}`")));
        }
    }
    if doc.modes.is_empty() {
        return Err(SystemError::Schema("at least one mode is required".into()));
    }
    let vars: Vars = Arc::new(doc.vars);
    let jump_vars = jump_vars_for(&vars);
    let n = vars.len();

    let mut modes = Vec::with_capacity(doc.modes.len());
    let mut ids = HashSet::new();
    for (i, m) in doc.modes.into_iter().enumerate() {
        let id = m.id.into_string();
        let loc = format!("modes[{i}] (id `{id}`)");
        if !ids.insert(id.clone()) {
            return Err(SystemError::Invalid(format!("{loc}: duplicate mode id")));
        }
        if m.field.len() != n {
            return Err(SystemError::Dimension { location: format!("{loc}.field"), expected: n, got: m.field.len() });
        }
        let field = parse_list(&m.field, &vars, &format!("{loc}.field"))?;
        let invariant = SemialgebraicSet::Region(parse_list(&m.invariant, &vars, &format!("{loc}.invariant"))?);
        let init = region_or_empty(parse_list(&m.init, &vars, &format!("{loc}.init"))?);
        let unsafe_set = region_or_empty(parse_list(&m.unsafe_set, &vars, &format!("{loc}.unsafe"))?);
        modes.push(Mode { id, field, invariant, init, unsafe_set });
    }

    let mut transitions = Vec::with_capacity(doc.transitions.len());
    for (i, t) in doc.transitions.into_iter().enumerate() {
        let loc = format!("transitions[{i}]");
        let source = t.source.into_string();
        let target = t.target.into_string();
        for label in [&source, &target] {
            if !ids.contains(label) {
                return Err(SystemError::DanglingLabel { location: loc.clone(), label: label.clone() });
            }
        }
        let guard = SemialgebraicSet::Region(parse_list(&t.guard, &vars, &format!("{loc}.guard"))?);
        let reset = match t.reset {
            ResetDoc::Keyword(k) if k == "identity" => Reset::Identity,
            ResetDoc::Keyword(k) => {
                return Err(SystemError::Schema(format!("{loc}.reset: expected \"identity\" or a list, found `{k}`")))
            }
            ResetDoc::Relation(items) => {
                if items.is_empty() {
                    return Err(SystemError::Schema(format!(
                        "{loc}.reset: an empty relation is not allowed; use \"identity\" or give constraints"
                    )));
                }
                Reset::Relation(parse_list(&items, &jump_vars, &format!("{loc}.reset"))?)
            }
        };
        transitions.push(Transition { source, target, guard, reset });
    }

    Ok(HybridSystem { vars, jump_vars, modes, transitions })
}

fn region_or_empty(polys: Vec<Polynomial>) -> SemialgebraicSet {
    if polys.is_empty() {
        SemialgebraicSet::Empty
    } else {
        SemialgebraicSet::Region(polys)
    }
}

pub fn load_system_file(path: impl AsRef<Path>) -> Result<HybridSystem, SystemError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| SystemError::Io { path: path.display().to_string(), source })?;
    load_system(&text)
}

fn render_list(set: &SemialgebraicSet) -> Vec<String> {
    set.polys().iter().map(|p| p.to_string()).collect()
}

/// Serializes a system back into the document format.
pub fn render_system(h: &HybridSystem) -> String {
    let doc = SystemDoc {
        vars: h.vars.as_ref().clone(),
        modes: h
            .modes
            .iter()
            .map(|m| ModeDoc {
                id: Label::Text(m.id.clone()),
                field: m.field.iter().map(|p| p.to_string()).collect(),
                invariant: render_list(&m.invariant),
                init: render_list(&m.init),
                unsafe_set: render_list(&m.unsafe_set),
            })
            .collect(),
        transitions: h
            .transitions
            .iter()
            .map(|t| TransitionDoc {
                source: Label::Text(t.source.clone()),
                target: Label::Text(t.target.clone()),
                guard: render_list(&t.guard),
                reset: match &t.reset {
                    Reset::Identity => ResetDoc::Keyword("identity".into()),
                    Reset::Relation(r) => ResetDoc::Relation(r.iter().map(|p| p.to_string()).collect()),
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("system document serializes")
}
