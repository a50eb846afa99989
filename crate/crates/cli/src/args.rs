use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use barrier_core::poly::rational::parse_rational;
use barrier_core::poly::Rational;
use barrier_core::synthesis::LambdaChoice;
use barrier_core::system::{Bounds, HybridSystem};

fn rational(text: &str) -> Result<Rational> {
    parse_rational(text.trim()).ok_or_else(|| anyhow!("not a number: `{text}`"))
}

fn real(text: &str) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| anyhow!("not a number: `{text}`"))
}

/// `-1,-0.25,0` or `-1/8`.
pub fn lambdas(text: &str) -> Result<Vec<LambdaChoice>> {
    text.split(',').filter(|s| !s.trim().is_empty()).map(|s| Ok(LambdaChoice::Global(rational(s)?))).collect()
}

/// `A..B` or a single degree.
pub fn degrees(text: &str) -> Result<(u32, u32)> {
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| anyhow!("bad degree `{s}`"));
    match text.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b.trim_start_matches('='))?)),
        None => {
            let d = parse(text)?;
            Ok((d, d))
        }
    }
}

/// `edge=value,...` with edges given by index or as `source->target`.
pub fn gammas(text: &str, h: &HybridSystem) -> Result<BTreeMap<usize, Rational>> {
    let mut out = BTreeMap::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (edge, value) = item.rsplit_once('=').ok_or_else(|| anyhow!("expected edge=value, got `{item}`"))?;
        let edge = edge.trim();
        let index = match edge.split_once("->") {
            Some((s, t)) => h
                .transitions
                .iter()
                .position(|tr| tr.source == s.trim() && tr.target == t.trim())
                .ok_or_else(|| anyhow!("no transition {edge}"))?,
            None => edge.parse::<usize>().map_err(|_| anyhow!("bad edge `{edge}`"))?,
        };
        if index >= h.transitions.len() {
            bail!("edge {index} out of range ({} transitions)", h.transitions.len());
        }
        out.insert(index, rational(value)?);
    }
    Ok(out)
}

/// `lo:hi` for every axis, or one `lo:hi` per axis separated by commas.
pub fn bounds(text: &str, dim: usize) -> Result<Bounds> {
    let pairs: Vec<(f64, f64)> = text
        .split(',')
        .map(|p| {
            let (lo, hi) = p.split_once(':').ok_or_else(|| anyhow!("expected lo:hi, got `{p}`"))?;
            Ok((real(lo)?, real(hi)?))
        })
        .collect::<Result<_>>()?;
    let pairs = match pairs.len() {
        1 => vec![pairs[0]; dim],
        n if n == dim => pairs,
        n => bail!("box has {n} intervals, expected 1 or {dim}"),
    };
    let b = Bounds::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect());
    if !b.is_valid() {
        bail!("empty or non-finite box `{text}`");
    }
    Ok(b)
}

/// `mode:(x1,...,xn)`.
pub fn start(text: &str, h: &HybridSystem) -> Result<(String, Vec<f64>)> {
    let (mode, point) = text.split_once(':').ok_or_else(|| anyhow!("expected mode:(x1,...), got `{text}`"))?;
    let mode = mode.trim().to_string();
    if h.mode(&mode).is_none() {
        bail!("unknown mode `{mode}`");
    }
    let inner = point.trim().trim_start_matches('(').trim_end_matches(')');
    let x: Vec<f64> = inner.split(',').map(real).collect::<Result<_>>().context("start state")?;
    if x.len() != h.dim() {
        bail!("start state has {} coordinates, system has {}", x.len(), h.dim());
    }
    Ok((mode, x))
}

/// `NxM` cells.
pub fn grid(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(|| anyhow!("expected NxM, got `{text}`"))?;
    let n = a.trim().parse::<usize>().map_err(|_| anyhow!("bad grid `{text}`"))?;
    let m = b.trim().parse::<usize>().map_err(|_| anyhow!("bad grid `{text}`"))?;
    if n == 0 || m == 0 {
        bail!("grid needs at least one cell per axis");
    }
    Ok((n, m))
}

/// `x3=0,x4=1.5`.
pub fn fixed(text: &str) -> Result<BTreeMap<String, f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("expected var=value, got `{item}`"))?;
            Ok((k.trim().to_string(), real(v)?))
        })
        .collect()
}
