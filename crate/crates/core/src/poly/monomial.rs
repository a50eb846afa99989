use std::cmp::Ordering;
use std::fmt;

/// A power product `x_{i1}^{e1} * x_{i2}^{e2} * ...` stored sparsely.
///
/// Entries are sorted by variable index and never carry a zero exponent, so
/// two equal monomials always have identical representations.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    exps: Vec<(u32, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Self { exps: Vec::new() }
    }

    pub fn var(index: usize) -> Self {
        Self::var_pow(index, 1)
    }

    pub fn var_pow(index: usize, power: u32) -> Self {
        if power == 0 {
            return Self::one();
        }
        Self { exps: vec![(index as u32, power)] }
    }

    /// Builds a monomial from a dense exponent vector.
    pub fn from_dense(exps: &[u32]) -> Self {
        Self { exps: exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i as u32, e)).collect() }
    }

    /// Builds a monomial from arbitrary `(variable, power)` pairs, merging repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut exps: Vec<(u32, u32)> = pairs.into_iter().filter(|&(_, e)| e > 0).map(|(v, e)| (v as u32, e)).collect();
        exps.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(exps.len());
        for (v, e) in exps {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += e,
                _ => merged.push((v, e)),
            }
        }
        Self { exps: merged }
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e).sum()
    }

    /// Exponent of variable `index` (zero when absent).
    pub fn exponent(&self, index: usize) -> u32 {
        self.exps.binary_search_by_key(&(index as u32), |&(v, _)| v).map(|pos| self.exps[pos].1).unwrap_or(0)
    }

    /// `(variable index, power)` pairs in increasing variable order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.exps.iter().map(|&(v, e)| (v as usize, e))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.exps.last().map(|&(v, _)| v as usize)
    }

    pub fn to_dense(&self, nvars: usize) -> Vec<u32> {
        let mut dense = vec![0; nvars];
        for (v, e) in self.iter() {
            dense[v] = e;
        }
        dense
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            let (va, ea) = self.exps[i];
            let (vb, eb) = other.exps[j];
            match va.cmp(&vb) {
                Ordering::Less => {
                    out.push((va, ea));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((vb, eb));
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((va, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.exps[i..]);
        out.extend_from_slice(&other.exps[j..]);
        Monomial { exps: out }
    }

    /// Partial derivative with respect to `index`: returns the multiplicity
    /// and the reduced monomial, or `None` when the variable is absent.
    pub fn derivative(&self, index: usize) -> Option<(u32, Monomial)> {
        let pos = self.exps.binary_search_by_key(&(index as u32), |&(v, _)| v).ok()?;
        let e = self.exps[pos].1;
        let mut exps = self.exps.clone();
        if e == 1 {
            exps.remove(pos);
        } else {
            exps[pos].1 = e - 1;
        }
        Some((e, Monomial { exps }))
    }

    /// Renames variable indices through `map` (old index -> new index).
    pub fn remap(&self, map: &[usize]) -> Monomial {
        Monomial::from_pairs(self.iter().map(|(v, e)| (map[v], e)))
    }

    /// True when every exponent is even, i.e. the monomial is a square.
    pub fn is_square(&self) -> bool {
        self.exps.iter().all(|&(_, e)| e % 2 == 0)
    }

    /// Square root of a square monomial.
    pub fn sqrt(&self) -> Option<Monomial> {
        if !self.is_square() {
            return None;
        }
        Some(Monomial { exps: self.exps.iter().map(|&(v, e)| (v, e / 2)).collect() })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.iter().map(|(v, e)| x[v].powi(e as i32)).product()
    }

    pub fn display_with(&self, vars: &[String]) -> String {
        if self.is_one() {
            return "1".to_string();
        }
        self.iter()
            .map(|(v, e)| {
                let name = vars.get(v).map(String::as_str).unwrap_or("?");
                if e == 1 {
                    name.to_string()
                } else {
                    format!("{name}^{e}")
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// Graded lexicographic order: total degree first, then lexicographic on the
/// dense exponent vector with the first variable most significant.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.exps.get(i), other.exps.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va == vb {
                        if ea != eb {
                            return ea.cmp(&eb);
                        }
                        i += 1;
                        j += 1;
                    } else if va < vb {
                        return Ordering::Greater;
                    } else {
                        return Ordering::Less;
                    }
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.iter().map(|(v, e)| format!("x{v}^{e}")).collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// All monomials in `nvars` variables with total degree at most `max_degree`,
/// in increasing graded order.
pub fn monomials_up_to(nvars: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for deg in 0..=max_degree {
        let mut current = vec![0u32; nvars];
        homogeneous(nvars, deg, 0, &mut current, &mut out);
    }
    out.sort();
    out
}

/// All monomials in the given variable indices with total degree at most `max_degree`.
pub fn monomials_in(vars: &[usize], max_degree: u32) -> Vec<Monomial> {
    monomials_up_to(vars.len(), max_degree).into_iter().map(|m| m.remap(vars)).collect()
}

fn homogeneous(nvars: usize, remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(Monomial::one());
        }
        return;
    }
    if pos == nvars - 1 {
        current[pos] = remaining;
        out.push(Monomial::from_dense(current));
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        homogeneous(nvars, remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}
