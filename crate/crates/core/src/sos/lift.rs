//! Gram lifting: every SOS constraint `p` becomes `p = z^T Q z`, `Q ⪰ 0`,
//! matched coefficient by coefficient.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num::traits::Zero;

use crate::poly::rational::to_f64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::{monomials_up_to, AffinePoly, Coeff, LinExpr, Monomial, UnknownId};
use crate::sdp::{EqualityRow, GramEntry, SdpProblem};

use super::SosProgram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    pub max_block: usize,
    /// Drop basis monomials whose Gram row is forced to zero.
    pub prune: bool,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self { max_block: 2000, prune: true }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LiftError {
    #[error("Gram block for {tag} would have dimension {dim} (limit {limit})")]
    BlockTooLarge { tag: String, dim: usize, limit: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedBlock {
    /// Index into `SosProgram::constraints`.
    pub constraint: usize,
    pub basis: Vec<Monomial>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowOrigin {
    Coefficient { constraint: usize, monomial: Monomial },
    Linear(usize),
    Pin(UnknownId),
}

#[derive(Clone, Debug)]
pub struct Lifted {
    pub problem: SdpProblem,
    pub blocks: Vec<LiftedBlock>,
    pub row_origin: Vec<RowOrigin>,
    /// Unknown behind each free column; unknowns absent from every row are
    /// not given a column and read back as zero.
    pub free_unknowns: Vec<UnknownId>,
}

impl Lifted {
    /// Unknown values from a solution's free vector.
    pub fn unknown_values(&self, num_unknowns: usize, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; num_unknowns];
        for (col, &u) in self.free_unknowns.iter().enumerate() {
            out[u] = free[col];
        }
        out
    }
}

/// `(basis, pairs)` where `pairs[m]` lists `(i, j)`, `i <= j`, with `b_i b_j = m`.
type PairIndex = BTreeMap<Monomial, Vec<(usize, usize)>>;

fn pair_index(basis: &[Monomial]) -> PairIndex {
    let mut out: PairIndex = BTreeMap::new();
    for i in 0..basis.len() {
        for j in i..basis.len() {
            out.entry(basis[i].mul(&basis[j])).or_default().push((i, j));
        }
    }
    out
}

/// Removes `b` whenever the coefficient of `b^2` is identically zero and no
/// other basis pair produces `b^2`: then `Q_bb = 0` and with it the whole row.
fn prune_basis(mut basis: Vec<Monomial>, coeff_zero: impl Fn(&Monomial) -> bool) -> Vec<Monomial> {
    loop {
        let mut offdiag: HashMap<Monomial, usize> = HashMap::new();
        for i in 0..basis.len() {
            for j in i + 1..basis.len() {
                *offdiag.entry(basis[i].mul(&basis[j])).or_insert(0) += 1;
            }
        }
        let before = basis.len();
        basis.retain(|b| {
            let sq = b.mul(b);
            !(coeff_zero(&sq) && !offdiag.contains_key(&sq))
        });
        if basis.len() == before {
            return basis;
        }
    }
}

#[derive(Default)]
struct Columns {
    index: BTreeMap<UnknownId, usize>,
    order: Vec<UnknownId>,
}

impl Columns {
    fn get(&mut self, u: UnknownId) -> usize {
        let order = &mut self.order;
        *self.index.entry(u).or_insert_with(|| {
            order.push(u);
            order.len() - 1
        })
    }
}

fn linexpr_row(e: &LinExpr, cols: &mut Columns, sign: f64) -> Vec<(usize, f64)> {
    e.terms.iter().map(|(&u, c)| (cols.get(u), sign * to_f64(c))).collect()
}

/// Lifts the program into a block-diagonal SDP feasibility problem.
pub fn gram_lift(program: &SosProgram, opts: &LiftOptions) -> Result<Lifted, LiftError> {
    let mut cols = Columns::default();
    let mut block_dims = Vec::new();
    let mut block_labels = Vec::new();
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    let mut row_origin = Vec::new();

    for (ci, c) in program.constraints.iter().enumerate() {
        if c.degenerate || c.expr.is_zero() {
            continue;
        }
        let half = c.target_degree / 2;
        let nvars = c.expr.nvars();
        let mut basis = monomials_up_to(nvars, half);
        if basis.len() > opts.max_block {
            return Err(LiftError::BlockTooLarge { tag: c.tag.clone(), dim: basis.len(), limit: opts.max_block });
        }
        if opts.prune {
            basis = prune_basis(basis, |m| c.expr.coefficient(m).vanishes());
        }
        let eliminated: BTreeSet<&Monomial> = c.eliminated.iter().collect();
        let pairs = if basis.is_empty() { PairIndex::new() } else { pair_index(&basis) };
        let block = block_dims.len();
        let mut monos: BTreeSet<&Monomial> = pairs.keys().collect();
        monos.extend(c.expr.terms().keys().filter(|m| !eliminated.contains(m)));
        for m in monos {
            let coeff = c.expr.coefficient(m);
            let gram: Vec<GramEntry> = pairs
                .get(m)
                .map(|ps| ps.iter().map(|&(i, j)| GramEntry { block, row: i, col: j, coeff: 1.0 }).collect())
                .unwrap_or_default();
            if gram.is_empty() && coeff.terms.is_empty() && coeff.constant.is_zero() {
                continue;
            }
            let free = linexpr_row(&coeff, &mut cols, -1.0);
            rows.push(EqualityRow { gram, free, rhs: to_f64(&coeff.constant) });
            row_origin.push(RowOrigin::Coefficient { constraint: ci, monomial: m.clone() });
        }
        if !basis.is_empty() {
            block_dims.push(basis.len());
            block_labels.push(c.tag.clone());
            blocks.push(LiftedBlock { constraint: ci, basis });
        }
    }
    for (li, eq) in program.linear.iter().enumerate() {
        if eq.expr.terms.is_empty() && eq.expr.constant.is_zero() {
            continue;
        }
        let free = linexpr_row(&eq.expr, &mut cols, 1.0);
        rows.push(EqualityRow { gram: Vec::new(), free, rhs: -to_f64(&eq.expr.constant) });
        row_origin.push(RowOrigin::Linear(li));
    }
    for &u in &program.pinned {
        let Some(&col) = cols.index.get(&u) else { continue };
        rows.push(EqualityRow { gram: Vec::new(), free: vec![(col, 1.0)], rhs: 0.0 });
        row_origin.push(RowOrigin::Pin(u));
    }
    let free_unknowns = cols.order;
    if block_dims.is_empty() {
        // Purely linear programs still need one cone for the solver.
        block_dims.push(1);
        block_labels.push("slack".into());
    }
    let free_labels = free_unknowns.iter().map(|&u| program.unknown_label(u)).collect();
    let problem = SdpProblem { block_dims, num_free: free_unknowns.len(), rows, block_labels, free_labels };
    Ok(Lifted { problem, blocks, row_origin, free_unknowns })
}

/// `v^T M v` as a coefficient map.
pub fn gram_expansion(basis: &[Monomial], m: &DMatrix<f64>) -> BTreeMap<Monomial, f64> {
    let mut out: BTreeMap<Monomial, f64> = BTreeMap::new();
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let w = if i == j { m[(i, i)] } else { m[(i, j)] + m[(j, i)] };
            *out.entry(basis[i].mul(&basis[j])).or_insert(0.0) += w;
        }
    }
    out
}

/// Largest coefficient of `expr(u) - v^T M v`.
pub fn coefficient_residual(expr: &AffinePoly, values: &[f64], basis: &[Monomial], m: &DMatrix<f64>) -> f64 {
    let mut diff = gram_expansion(basis, m);
    for v in diff.values_mut() {
        *v = -*v;
    }
    for (mono, e) in expr.terms() {
        *diff.entry(mono.clone()).or_insert(0.0) += e.eval(values);
    }
    diff.values().fold(0.0, |acc, v| acc.max(v.abs()))
}
