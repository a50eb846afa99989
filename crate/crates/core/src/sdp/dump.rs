//! Line-oriented text dump of an [`SdpProblem`], for debugging and for
//! handing problems to external solvers.
//!
//! ```text
//! sdp <blocks> <free> <rows>
//! block <k> <dim> [label]
//! free <k> [label]
//! row <i> rhs <b>
//! g <i> <block> <p> <q> <coeff>
//! f <i> <var> <coeff>
//! ```

use std::fmt::Write as _;

use super::{EqualityRow, GramEntry, SdpProblem};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct DumpError {
    pub line: usize,
    pub message: String,
}

pub fn write_dump(problem: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sdp {} {} {}", problem.block_dims.len(), problem.num_free, problem.rows.len());
    for (k, d) in problem.block_dims.iter().enumerate() {
        match problem.block_labels.get(k) {
            Some(l) if !l.is_empty() => {
                let _ = writeln!(out, "block {k} {d} {l}");
            }
            _ => {
                let _ = writeln!(out, "block {k} {d}");
            }
        }
    }
    for k in 0..problem.num_free {
        match problem.free_labels.get(k) {
            Some(l) if !l.is_empty() => {
                let _ = writeln!(out, "free {k} {l}");
            }
            _ => {
                let _ = writeln!(out, "free {k}");
            }
        }
    }
    for (i, r) in problem.rows.iter().enumerate() {
        let _ = writeln!(out, "row {i} rhs {:?}", r.rhs);
        for e in &r.gram {
            let _ = writeln!(out, "g {i} {} {} {} {:?}", e.block, e.row, e.col, e.coeff);
        }
        for (k, c) in &r.free {
            let _ = writeln!(out, "f {i} {k} {c:?}");
        }
    }
    out
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, DumpError> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| DumpError { line, message: format!("expected {what}") })
}

pub fn read_dump(text: &str) -> Result<SdpProblem, DumpError> {
    let mut problem = SdpProblem::default();
    let mut header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.splitn(2, char::is_whitespace);
        let kind = parts.next().unwrap_or_default();
        let rest = parts.next().unwrap_or_default();
        let mut tok = rest.split_whitespace();
        let err = |m: &str| DumpError { line, message: m.to_string() };
        match kind {
            "sdp" => {
                let nb: usize = num(tok.next(), line, "block count")?;
                let nf: usize = num(tok.next(), line, "free count")?;
                let nr: usize = num(tok.next(), line, "row count")?;
                problem.block_dims = vec![0; nb];
                problem.block_labels = vec![String::new(); nb];
                problem.num_free = nf;
                problem.free_labels = vec![String::new(); nf];
                problem.rows = vec![EqualityRow::default(); nr];
                header = true;
            }
            _ if !header => return Err(err("missing `sdp` header")),
            "block" => {
                let k: usize = num(tok.next(), line, "block index")?;
                let d: usize = num(tok.next(), line, "block dimension")?;
                if k >= problem.block_dims.len() {
                    return Err(err("block index out of range"));
                }
                problem.block_dims[k] = d;
                problem.block_labels[k] = tok.collect::<Vec<_>>().join(" ");
            }
            "free" => {
                let k: usize = num(tok.next(), line, "free index")?;
                if k >= problem.num_free {
                    return Err(err("free index out of range"));
                }
                problem.free_labels[k] = tok.collect::<Vec<_>>().join(" ");
            }
            "row" => {
                let i: usize = num(tok.next(), line, "row index")?;
                if tok.next() != Some("rhs") {
                    return Err(err("expected `rhs`"));
                }
                let b: f64 = num(tok.next(), line, "rhs value")?;
                problem.rows.get_mut(i).ok_or_else(|| err("row index out of range"))?.rhs = b;
            }
            "g" => {
                let i: usize = num(tok.next(), line, "row index")?;
                let block = num(tok.next(), line, "block")?;
                let row = num(tok.next(), line, "entry row")?;
                let col = num(tok.next(), line, "entry column")?;
                let coeff = num(tok.next(), line, "coefficient")?;
                let r = problem.rows.get_mut(i).ok_or_else(|| err("row index out of range"))?;
                r.gram.push(GramEntry { block, row, col, coeff });
            }
            "f" => {
                let i: usize = num(tok.next(), line, "row index")?;
                let k: usize = num(tok.next(), line, "variable")?;
                let c: f64 = num(tok.next(), line, "coefficient")?;
                problem.rows.get_mut(i).ok_or_else(|| err("row index out of range"))?.free.push((k, c));
            }
            other => return Err(err(&format!("unknown record `{other}`"))),
        }
    }
    if !header {
        return Err(DumpError { line: 0, message: "empty dump".into() });
    }
    if problem.block_labels.iter().all(String::is_empty) {
        problem.block_labels.clear();
    }
    if problem.free_labels.iter().all(String::is_empty) {
        problem.free_labels.clear();
    }
    Ok(problem)
}
