//! Primal-dual interior-point method on the homogeneous self-dual embedding.
//!
//! The feasibility problem is recast as
//!
//! ```text
//!   maximize t  s.t.  A(Z + t I, u) = b,  Z ⪰ 0,  t <= cap,  sum tr Z + N t <= T
//! ```
//!
//! with `u` and `t` free. The trace budget keeps the optimal set bounded, the
//! cap keeps `t` bounded, and the dual of the embedded problem provides an
//! infeasibility witness when `t* < 0`. Search directions use Nesterov-Todd
//! scaling with a Mehrotra predictor-corrector; free variables enter the
//! reduced system directly as a saddle-point block.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{max_step_diag, min_eigenvalue, symmetrize};
use super::{DualWitness, ProblemError, SdpBackend, SdpProblem, SdpSolution, SdpStatus, SolveOptions, SolveResiduals};

/// Built-in back end.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, ProblemError> {
        solve(problem, opts)
    }
}

type Entry = (usize, usize, f64);

#[derive(Clone, Debug, Default)]
struct Row {
    gram: Vec<(usize, usize, usize, f64)>,
    free: Vec<(usize, f64)>,
}

/// Rows kept after presolve, in scaled form, plus the two embedding rows.
struct Embedded {
    dims: Vec<usize>,
    n_orig_blocks: usize,
    n_free: usize,
    t_index: usize,
    rows: Vec<Row>,
    b: DVector<f64>,
    c: DVector<f64>,
    by_block: Vec<Vec<(usize, Vec<Entry>)>>,
    a_free: DMatrix<f64>,
    /// internal row -> (original row, scale) for the problem rows.
    origin: Vec<(usize, f64)>,
    trace_budget: f64,
}

enum Presolve {
    Kept(Vec<usize>),
    Inconsistent(Vec<f64>),
}

/// Drops rows that are linear combinations of others. Rows owning a matrix
/// entry no other row touches are independent and skip the dense check.
fn presolve(problem: &SdpProblem, scale: &[f64]) -> Presolve {
    let tol = 1e-9;
    let m = problem.rows.len();
    let mut owners: std::collections::BTreeMap<(usize, usize, usize), Vec<usize>> = Default::default();
    for (i, r) in problem.rows.iter().enumerate() {
        for e in &r.gram {
            if e.coeff != 0.0 {
                owners.entry((e.block, e.row, e.col)).or_default().push(i);
            }
        }
    }
    let mut alive = vec![true; m];
    loop {
        let mut changed = false;
        for rows in owners.values() {
            let live: Vec<usize> = rows.iter().copied().filter(|&i| alive[i]).collect();
            if live.len() == 1 {
                alive[live[0]] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // dense Gram-Schmidt over the coupled rows, tracking combinations and rhs
    let coupled: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
    let mut col_index: std::collections::BTreeMap<(usize, usize, usize), usize> = Default::default();
    let mut vectors = Vec::with_capacity(coupled.len());
    for &i in &coupled {
        let mut v: Vec<(usize, f64)> = Vec::new();
        for e in &problem.rows[i].gram {
            let n = col_index.len();
            let k = *col_index.entry((e.block, e.row, e.col)).or_insert(n);
            let w = if e.row == e.col { 1.0 } else { 2.0f64.sqrt() };
            v.push((k, e.coeff * w * scale[i]));
        }
        for &(f, c) in &problem.rows[i].free {
            let n = col_index.len();
            let k = *col_index.entry((usize::MAX, f, 0)).or_insert(n);
            v.push((k, c * scale[i]));
        }
        vectors.push(v);
    }
    let width = col_index.len();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut combos: Vec<Vec<f64>> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut keep = vec![true; m];
    for (ci, &i) in coupled.iter().enumerate() {
        let mut v = DVector::zeros(width);
        for &(k, c) in &vectors[ci] {
            v[k] += c;
        }
        let norm0 = v.norm();
        let mut beta = problem.rows[i].rhs * scale[i];
        let mut combo = vec![0.0; m];
        combo[i] = 1.0;
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let h = q.dot(&v);
                v.axpy(-h, q, 1.0);
                beta -= h * betas[j];
                for (cv, qv) in combo.iter_mut().zip(&combos[j]) {
                    *cv -= h * qv;
                }
            }
        }
        let norm = v.norm();
        if norm <= 0.1 * tol * norm0.max(1e-300) {
            keep[i] = false;
            if beta.abs() > tol * (1.0 + (problem.rows[i].rhs * scale[i]).abs()) {
                // combo annihilates the rows and has b^T combo != 0
                let mut w: Vec<f64> = combo.iter().zip(scale).map(|(c, s)| c * s).collect();
                if beta > 0.0 {
                    w.iter_mut().for_each(|x| *x = -*x);
                }
                return Presolve::Inconsistent(w);
            }
            continue;
        }
        v /= norm;
        combo.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
        combos.push(combo);
        betas.push(beta / norm);
    }
    Presolve::Kept((0..m).filter(|&i| keep[i]).collect())
}

impl Embedded {
    fn build(problem: &SdpProblem, kept: &[usize], scale: &[f64], opts: &SolveOptions, trace_factor: f64) -> Self {
        let nb = problem.block_dims.len();
        let mut dims = problem.block_dims.clone();
        dims.push(1);
        dims.push(1);
        let t_index = problem.num_free;
        let n_free = problem.num_free + 1;
        let mut rows = Vec::with_capacity(kept.len() + 2);
        let mut b = Vec::with_capacity(kept.len() + 2);
        let mut origin = Vec::with_capacity(kept.len());
        for &i in kept {
            let r = &problem.rows[i];
            let s = scale[i];
            let mut row = Row::default();
            let mut trace = 0.0;
            for e in &r.gram {
                if e.coeff == 0.0 {
                    continue;
                }
                row.gram.push((e.block, e.row, e.col, e.coeff * s));
                if e.row == e.col {
                    trace += e.coeff * s;
                }
            }
            for &(k, c) in &r.free {
                if c != 0.0 {
                    row.free.push((k, c * s));
                }
            }
            if trace != 0.0 {
                row.free.push((t_index, trace));
            }
            rows.push(row);
            b.push(r.rhs * s);
            origin.push((i, s));
        }
        let n_dim: usize = problem.block_dims.iter().sum();
        let bmax = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let trace_budget = trace_factor * n_dim as f64 * bmax.max(1.0);
        // t <= cap
        rows.push(Row { gram: vec![(nb, 0, 0, 1.0)], free: vec![(t_index, 1.0)] });
        b.push(opts.slack_cap);
        // sum tr Z + N t <= T, scaled to unit rhs
        let ts = 1.0 / trace_budget;
        let mut trace_row = Row::default();
        for (j, &d) in problem.block_dims.iter().enumerate() {
            for p in 0..d {
                trace_row.gram.push((j, p, p, ts));
            }
        }
        trace_row.gram.push((nb + 1, 0, 0, 1.0));
        trace_row.free.push((t_index, n_dim as f64 * ts));
        rows.push(trace_row);
        b.push(1.0);

        let mut by_block: Vec<Vec<(usize, Vec<Entry>)>> = vec![Vec::new(); dims.len()];
        for (i, r) in rows.iter().enumerate() {
            let mut grouped: std::collections::BTreeMap<usize, Vec<Entry>> = Default::default();
            for &(blk, p, q, c) in &r.gram {
                grouped.entry(blk).or_default().push((p, q, c));
            }
            for (blk, entries) in grouped {
                by_block[blk].push((i, entries));
            }
        }
        let m = rows.len();
        let mut a_free = DMatrix::zeros(m, n_free);
        for (i, r) in rows.iter().enumerate() {
            for &(k, c) in &r.free {
                a_free[(i, k)] += c;
            }
        }
        let mut c = DVector::zeros(n_free);
        c[t_index] = -1.0;
        Self {
            dims,
            n_orig_blocks: nb,
            n_free,
            t_index,
            rows,
            b: DVector::from_vec(b),
            c,
            by_block,
            a_free,
            origin,
            trace_budget,
        }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn apply_c(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|r| {
                r.gram
                    .iter()
                    .map(|&(j, p, q, c)| if p == q { c * z[j][(p, p)] } else { 2.0 * c * z[j][(p, q)] })
                    .sum::<f64>()
            }),
        )
    }

    fn apply(&self, z: &[DMatrix<f64>], xf: &DVector<f64>) -> DVector<f64> {
        self.apply_c(z) + &self.a_free * xf
    }

    fn adjoint_c(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (i, r) in self.rows.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for &(j, p, q, c) in &r.gram {
                out[j][(p, q)] += c * yi;
                if p != q {
                    out[j][(q, p)] += c * yi;
                }
            }
        }
        out
    }

    fn schur(&self, w: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut h = DMatrix::zeros(m, m);
        for (j, list) in self.by_block.iter().enumerate() {
            let wj = &w[j];
            for a in 0..list.len() {
                let (ra, ea) = &list[a];
                for (rb, eb) in &list[a..] {
                    let mut acc = 0.0;
                    for &(p, q, c1) in ea {
                        for &(r, s, c2) in eb {
                            let k = match (p == q, r == s) {
                                (true, true) => wj[(p, r)] * wj[(p, r)],
                                (true, false) => 2.0 * wj[(p, r)] * wj[(p, s)],
                                (false, true) => 2.0 * wj[(q, r)] * wj[(p, r)],
                                (false, false) => 2.0 * (wj[(q, r)] * wj[(p, s)] + wj[(q, s)] * wj[(p, r)]),
                            };
                            acc += c1 * c2 * k;
                        }
                    }
                    h[(*ra, *rb)] += acc;
                    if *ra != *rb {
                        h[(*rb, *ra)] += acc;
                    }
                }
            }
        }
        h
    }
}

struct Scaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    lambda: DVector<f64>,
    w: DMatrix<f64>,
}

fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = symmetrize(m);
    if let Some(c) = sym.clone().cholesky() {
        return Some(c.unpack());
    }
    let shift = 1e-14 * sym.diagonal().amax().max(1e-300);
    let shifted = sym + DMatrix::identity(m.nrows(), m.nrows()) * shift;
    shifted.cholesky().map(|c| c.unpack())
}

/// Nesterov-Todd scaling point: `G^{-1} Z G^{-T} = G^T S G = diag(lambda)`.
fn nt_scaling(z: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let lx = cholesky_lower(z)?;
    let ls = cholesky_lower(s)?;
    let svd = (ls.transpose() * &lx).svd(false, true);
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let n = z.nrows();
    let mut g = &lx * &v;
    for j in 0..n {
        let f = 1.0 / lambda[j].sqrt();
        g.column_mut(j).scale_mut(f);
    }
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut ginv = v.transpose() * lx_inv;
    for i in 0..n {
        let f = lambda[i].sqrt();
        ginv.row_mut(i).scale_mut(f);
    }
    let w = &g * g.transpose();
    Some(Scaling { g, ginv, lambda, w })
}

struct Direction {
    dz: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dz_scaled: Vec<DMatrix<f64>>,
    ds_scaled: Vec<DMatrix<f64>>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    exact: DMatrix<f64>,
}

impl Kkt {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..3 {
            let r = rhs - &self.exact * &x;
            if r.amax() <= 1e-15 * rhs.amax().max(1e-300) {
                break;
            }
            let dx = self.lu.solve(&r)?;
            x += dx;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

#[derive(Clone)]
struct State {
    z: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    xf: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdf: DVector<f64>,
    rg: f64,
}

struct Outcome {
    state: State,
    iterations: usize,
    note: String,
}

fn residuals(e: &Embedded, st: &State) -> Residuals {
    let rp = &e.b * st.tau - e.apply(&st.z, &st.xf);
    let aty = e.adjoint_c(&st.y);
    let rd = aty.iter().zip(&st.s).map(|(a, s)| -a - s).collect();
    let rdf = &e.c * st.tau - e.a_free.transpose() * &st.y;
    let rg = st.kappa + e.c.dot(&st.xf) - e.b.dot(&st.y);
    Residuals { rp, rd, rdf, rg }
}

fn step_length(sc: &[Scaling], dir: &Direction, st: &State) -> f64 {
    let mut alpha = f64::INFINITY;
    for (k, s) in sc.iter().enumerate() {
        alpha = alpha.min(max_step_diag(&s.lambda, &dir.dz_scaled[k]));
        alpha = alpha.min(max_step_diag(&s.lambda, &dir.ds_scaled[k]));
    }
    if dir.dtau < 0.0 {
        alpha = alpha.min(-st.tau / dir.dtau);
    }
    if dir.dkappa < 0.0 {
        alpha = alpha.min(-st.kappa / dir.dkappa);
    }
    alpha
}

#[allow(clippy::too_many_arguments)]
fn direction(
    e: &Embedded,
    st: &State,
    res: &Residuals,
    sc: &[Scaling],
    kkt: &Kkt,
    q: &DVector<f64>,
    qhq: f64,
    eta: f64,
    rhs_scaled: &[DMatrix<f64>],
    r_tk: f64,
) -> Option<Direction> {
    let m = e.m();
    let mut rhat = Vec::with_capacity(sc.len());
    let mut t = Vec::with_capacity(sc.len());
    for (k, s) in sc.iter().enumerate() {
        let n = s.lambda.len();
        let mut v = rhs_scaled[k].clone();
        for j in 0..n {
            for i in 0..n {
                v[(i, j)] *= 2.0 / (s.lambda[i] + s.lambda[j]);
            }
        }
        let rh = &s.g * v * s.g.transpose();
        let tk = &rh - (&s.w * &res.rd[k] * &s.w) * eta;
        rhat.push(rh);
        t.push(tk);
    }
    let r1y = &res.rp * eta - e.apply_c(&t);
    let r1f = &res.rdf * eta;
    let mut rhs = DVector::zeros(m + e.n_free);
    rhs.rows_mut(0, m).copy_from(&r1y);
    rhs.rows_mut(m, e.n_free).copy_from(&r1f);
    let p = kkt.solve(&rhs)?;
    let (py, pf) = (p.rows(0, m), p.rows(m, e.n_free));
    let num = eta * res.rg + r_tk / st.tau + e.c.dot(&pf) - e.b.dot(&py);
    let dtau = num / (qhq + st.kappa / st.tau);
    let full = &p + q * dtau;
    let dy = full.rows(0, m).into_owned();
    let dxf = full.rows(m, e.n_free).into_owned();
    let aty = e.adjoint_c(&dy);
    let mut dz = Vec::with_capacity(sc.len());
    let mut ds = Vec::with_capacity(sc.len());
    let mut dz_scaled = Vec::with_capacity(sc.len());
    let mut ds_scaled = Vec::with_capacity(sc.len());
    for (k, s) in sc.iter().enumerate() {
        let dsk = symmetrize(&(&res.rd[k] * eta - &aty[k]));
        let dzk = symmetrize(&(&rhat[k] - &s.w * &dsk * &s.w));
        dz_scaled.push(symmetrize(&(&s.ginv * &dzk * s.ginv.transpose())));
        ds_scaled.push(symmetrize(&(s.g.transpose() * &dsk * &s.g)));
        dz.push(dzk);
        ds.push(dsk);
    }
    let dkappa = (r_tk - st.kappa * dtau) / st.tau;
    let ok = dtau.is_finite() && dkappa.is_finite();
    ok.then_some(Direction { dz, ds, dz_scaled, ds_scaled, dxf, dy, dtau, dkappa })
}

fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a * b + b * a) * 0.5
}

fn run(e: &Embedded, opts: &SolveOptions, perturb: Option<u64>) -> Outcome {
    let m = e.m();
    let nu: f64 = e.dims.iter().sum::<usize>() as f64;
    let mut st = State {
        z: e.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        s: e.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        xf: DVector::zeros(e.n_free),
        y: DVector::zeros(m),
        tau: 1.0,
        kappa: 1.0,
    };
    if let Some(seed) = perturb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in st.z.iter_mut().chain(st.s.iter_mut()) {
            for i in 0..z.nrows() {
                z[(i, i)] *= 1.0 + 0.5 * rng.gen::<f64>();
            }
        }
    }
    let eps = 1e-10 * (opts.tol_eq / 1e-8).min(1.0);
    let bnorm = 1.0 + e.b.amax();
    let mut note = String::from("iteration limit reached");
    let mut stalls = 0;
    let mut iterations = 0;
    // boundary problems lose accuracy near the end; keep the best iterate
    let mut best: Option<(f64, State, usize)> = None;
    for iter in 0..opts.max_iter {
        iterations = iter;
        let res = residuals(e, &st);
        let zs: f64 = st.z.iter().zip(&st.s).map(|(z, s)| z.dot(s)).sum();
        let mu = (zs + st.tau * st.kappa) / (nu + 1.0);
        let cx = e.c.dot(&st.xf);
        let by = e.b.dot(&st.y);
        let pres = res.rp.amax() / st.tau / bnorm;
        let dres = res.rd.iter().map(|r| r.amax()).fold(res.rdf.amax(), f64::max) / st.tau / 2.0;
        let gap = (cx - by).abs() / st.tau / (1.0 + (cx / st.tau).abs());
        debug!(
            "ipm {iter:3} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} mu {mu:.2e} tau {:.2e} kappa {:.2e} t {:.4e}",
            st.tau,
            st.kappa,
            st.xf[e.t_index] / st.tau
        );
        let merit = pres.max(dres).max(gap);
        if best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((merit, st.clone(), iter));
        }
        if pres < eps && dres < eps && gap < eps {
            note = "converged".into();
            break;
        }
        if by > 0.0 {
            let ray = res.rd.iter().map(|r| r.amax()).fold((&e.c * st.tau - &res.rdf).amax(), f64::max);
            if ray <= eps * by && st.tau < 1e-6 * st.kappa.max(1.0) {
                note = "embedded problem primal infeasible".into();
                break;
            }
        }
        if mu < 1e-16 {
            note = "complementarity exhausted".into();
            break;
        }
        let sc: Option<Vec<Scaling>> = st.z.iter().zip(&st.s).map(|(z, s)| nt_scaling(z, s)).collect();
        let Some(sc) = sc else {
            note = "lost positive definiteness".into();
            break;
        };
        let w: Vec<DMatrix<f64>> = sc.iter().map(|s| s.w.clone()).collect();
        let h = e.schur(&w);
        let nk = m + e.n_free;
        let mut k = DMatrix::zeros(nk, nk);
        k.view_mut((0, 0), (m, m)).copy_from(&h);
        k.view_mut((0, m), (m, e.n_free)).copy_from(&e.a_free);
        k.view_mut((m, 0), (e.n_free, m)).copy_from(&e.a_free.transpose());
        let hmax = h.diagonal().amax().max(1.0);
        let mut reg = k.clone();
        for i in 0..m {
            reg[(i, i)] += 1e-13 * hmax;
        }
        for i in m..nk {
            reg[(i, i)] -= 1e-13;
        }
        let kkt = Kkt { lu: reg.lu(), exact: k };
        let mut bc = DVector::zeros(nk);
        bc.rows_mut(0, m).copy_from(&e.b);
        bc.rows_mut(m, e.n_free).copy_from(&e.c);
        let Some(q) = kkt.solve(&bc) else {
            note = "singular reduced system".into();
            break;
        };
        let qy = q.rows(0, m);
        let qhq = qy.dot(&(&h * qy)).max(0.0);

        let affine_rhs: Vec<DMatrix<f64>> =
            sc.iter().map(|s| DMatrix::from_diagonal(&s.lambda.map(|l| -l * l))).collect();
        let Some(aff) = direction(e, &st, &res, &sc, &kkt, &q, qhq, 1.0, &affine_rhs, -st.tau * st.kappa) else {
            note = "affine direction failed".into();
            break;
        };
        let alpha_a = step_length(&sc, &aff, &st).min(1.0);
        let zs_a: f64 =
            st.z.iter()
                .zip(&st.s)
                .zip(aff.dz.iter().zip(&aff.ds))
                .map(|((z, s), (dz, ds))| (z + dz * alpha_a).dot(&(s + ds * alpha_a)))
                .sum();
        let mu_a = (zs_a + (st.tau + alpha_a * aff.dtau) * (st.kappa + alpha_a * aff.dkappa)) / (nu + 1.0);
        let sigma = (mu_a / mu).clamp(0.0, 1.0).powi(3);

        let corr_rhs: Vec<DMatrix<f64>> = sc
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let n = s.lambda.len();
                let mut r = DMatrix::identity(n, n) * (sigma * mu);
                for i in 0..n {
                    r[(i, i)] -= s.lambda[i] * s.lambda[i];
                }
                r - jordan(&aff.dz_scaled[k], &aff.ds_scaled[k])
            })
            .collect();
        let r_tk = sigma * mu - st.tau * st.kappa - aff.dtau * aff.dkappa;
        let Some(dir) = direction(e, &st, &res, &sc, &kkt, &q, qhq, 1.0 - sigma, &corr_rhs, r_tk) else {
            note = "corrector direction failed".into();
            break;
        };
        let alpha = (0.99 * step_length(&sc, &dir, &st)).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                note = "step length stalled".into();
                break;
            }
            continue;
        }
        for k in 0..st.z.len() {
            st.z[k] += &dir.dz[k] * alpha;
            st.s[k] += &dir.ds[k] * alpha;
        }
        st.xf += &dir.dxf * alpha;
        st.y += &dir.dy * alpha;
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;
        iterations = iter + 1;
    }
    if let Some((merit, state, at)) = best {
        let res = residuals(e, &st);
        let cx = e.c.dot(&st.xf);
        let by = e.b.dot(&st.y);
        let last = (res.rp.amax() / st.tau / bnorm)
            .max(res.rd.iter().map(|r| r.amax()).fold(res.rdf.amax(), f64::max) / st.tau / 2.0)
            .max((cx - by).abs() / st.tau / (1.0 + (cx / st.tau).abs()));
        if merit < last && st.tau > 1e-6 * st.kappa.max(1.0) {
            debug!("ipm: returning iterate {at} (merit {merit:.2e} < {last:.2e})");
            return Outcome { state, iterations, note };
        }
    }
    Outcome { state: st, iterations, note }
}

/// Min-norm correction of `(X, u)` onto the equality rows (Frobenius metric).
pub(crate) fn project_onto_equalities(problem: &SdpProblem, blocks: &mut [DMatrix<f64>], free: &mut [f64]) {
    let m = problem.rows.len();
    if m == 0 {
        return;
    }
    let mut owners: std::collections::BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = Default::default();
    for (i, r) in problem.rows.iter().enumerate() {
        for e in &r.gram {
            owners.entry((e.block, e.row, e.col)).or_default().push((i, e.coeff));
        }
    }
    let mut gram: DMatrix<f64> = DMatrix::zeros(m, m);
    for ((_, p, q), list) in &owners {
        let w = if p == q { 1.0 } else { 2.0 };
        for &(i, ci) in list {
            for &(k, ck) in list {
                gram[(i, k)] += w * ci * ck;
            }
        }
    }
    let mut free_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.num_free];
    for (i, r) in problem.rows.iter().enumerate() {
        for &(k, c) in &r.free {
            free_cols[k].push((i, c));
        }
    }
    for col in &free_cols {
        for &(i, ci) in col {
            for &(k, ck) in col {
                gram[(i, k)] += ci * ck;
            }
        }
    }
    let diag_max = gram.diagonal().amax().max(1e-300);
    for i in 0..m {
        gram[(i, i)] += 1e-14 * diag_max;
    }
    let Some(chol) = gram.cholesky() else { return };
    for _ in 0..2 {
        let r = DVector::from_vec(problem.residuals(blocks, free));
        let z = chol.solve(&r);
        for (i, row) in problem.rows.iter().enumerate() {
            for e in &row.gram {
                blocks[e.block][(e.row, e.col)] += e.coeff * z[i];
                if e.row != e.col {
                    blocks[e.block][(e.col, e.row)] += e.coeff * z[i];
                }
            }
            for &(k, c) in &row.free {
                free[k] += c * z[i];
            }
        }
    }
}

/// Measures a dual vector as an infeasibility witness after projecting it
/// onto `B^T w = 0` and normalizing.
pub(crate) fn assess_witness(problem: &SdpProblem, w: Vec<f64>, trace_budget: f64) -> Option<DualWitness> {
    let m = problem.rows.len();
    let mut w = DVector::from_vec(w);
    if problem.num_free > 0 {
        let mut bmat = DMatrix::zeros(m, problem.num_free);
        for (i, r) in problem.rows.iter().enumerate() {
            for &(k, c) in &r.free {
                bmat[(i, k)] += c;
            }
        }
        // w <- w - B (B^T B)^+ B^T w
        let svd = bmat.clone().svd(true, true);
        let coef = svd.solve(&w, 1e-12 * svd.singular_values.amax().max(1e-300)).ok()?;
        w -= bmat * coef;
    }
    let scale = w.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    w /= scale;
    let mut lmin = f64::INFINITY;
    let mut mats: Vec<DMatrix<f64>> = problem.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    for (i, r) in problem.rows.iter().enumerate() {
        for e in &r.gram {
            mats[e.block][(e.row, e.col)] += e.coeff * w[i];
            if e.row != e.col {
                mats[e.block][(e.col, e.row)] += e.coeff * w[i];
            }
        }
    }
    for mat in &mats {
        lmin = lmin.min(min_eigenvalue(mat));
    }
    let bw: f64 = problem.rows.iter().zip(w.iter()).map(|(r, wi)| r.rhs * wi).sum();
    let violation = -bw - trace_budget * (-lmin).max(0.0);
    Some(DualWitness { y: w.iter().copied().collect(), violation, trace_budget })
}

fn finish(
    problem: &SdpProblem,
    opts: &SolveOptions,
    e: Option<&Embedded>,
    outcome: Option<&Outcome>,
    presolve_witness: Option<Vec<f64>>,
    trace_budget: f64,
) -> SdpSolution {
    let nb = problem.block_dims.len();
    let (mut blocks, mut free, slack, iterations, mut message) = match (e, outcome) {
        (Some(e), Some(o)) => {
            let st = &o.state;
            let t = st.xf[e.t_index] / st.tau;
            let blocks: Vec<DMatrix<f64>> = (0..e.n_orig_blocks)
                .map(|j| {
                    let d = e.dims[j];
                    symmetrize(&st.z[j]) / st.tau + DMatrix::identity(d, d) * t
                })
                .collect();
            let free: Vec<f64> = (0..problem.num_free).map(|k| st.xf[k] / st.tau).collect();
            (blocks, free, t, o.iterations, o.note.clone())
        }
        _ => (
            problem.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            vec![0.0; problem.num_free],
            f64::NAN,
            0,
            "no solve".to_string(),
        ),
    };
    let finite = blocks.iter().all(|b| b.iter().all(|v| v.is_finite())) && free.iter().all(|v| v.is_finite());
    if !finite {
        blocks = problem.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        free = vec![0.0; problem.num_free];
    }
    if presolve_witness.is_none() {
        project_onto_equalities(problem, &mut blocks, &mut free);
    }
    let primal_equality = problem.residuals(&blocks, &free).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let min_eigenvalues: Vec<f64> = blocks.iter().map(min_eigenvalue).collect();
    let min_eig = min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let residuals = SolveResiduals { primal_equality, min_eigenvalues, slack };
    let feasible =
        presolve_witness.is_none() && finite && primal_equality <= opts.tol_eq && (nb == 0 || min_eig >= -opts.tol_psd);
    if feasible {
        return SdpSolution {
            status: SdpStatus::Feasible,
            blocks,
            free,
            residuals,
            iterations,
            witness: None,
            message,
        };
    }
    let dual = match (presolve_witness, e, outcome) {
        (Some(w), _, _) => Some(w),
        (None, Some(e), Some(o)) => {
            let mut w = vec![0.0; problem.rows.len()];
            for (k, &(i, s)) in e.origin.iter().enumerate() {
                w[i] = -o.state.y[k] * s;
            }
            Some(w)
        }
        _ => None,
    };
    let witness = dual.and_then(|w| assess_witness(problem, w, trace_budget));
    let status = match &witness {
        Some(wt) if wt.violation >= 10.0 * opts.tol_eq => SdpStatus::Infeasible,
        _ => SdpStatus::NumericalFailure,
    };
    if status == SdpStatus::NumericalFailure {
        message = format!(
            "{message}; equality residual {primal_equality:.3e}, min eigenvalue {min_eig:.3e}, witness violation {}",
            witness.as_ref().map_or("n/a".to_string(), |w| format!("{:.3e}", w.violation))
        );
    }
    SdpSolution { status, blocks, free, residuals, iterations, witness, message }
}

/// Decides feasibility of `problem`.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, ProblemError> {
    problem.validate()?;
    Ok(solve_at(problem, opts))
}

fn solve_at(problem: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
    let scale: Vec<f64> = problem
        .rows
        .iter()
        .map(|r| {
            let mx =
                r.gram.iter().map(|e| e.coeff.abs()).chain(r.free.iter().map(|(_, c)| c.abs())).fold(0.0, f64::max);
            if mx > 0.0 {
                1.0 / mx
            } else {
                1.0
            }
        })
        .collect();
    for (i, r) in problem.rows.iter().enumerate() {
        let empty = r.gram.iter().all(|e| e.coeff == 0.0) && r.free.iter().all(|(_, c)| *c == 0.0);
        if empty && r.rhs.abs() > opts.tol_eq {
            let mut w = vec![0.0; problem.rows.len()];
            w[i] = -r.rhs.signum();
            let n_dim: usize = problem.block_dims.iter().sum();
            return finish(problem, opts, None, None, Some(w), opts.trace_factor * n_dim as f64);
        }
    }
    let kept = match presolve(problem, &scale) {
        Presolve::Kept(k) => k,
        Presolve::Inconsistent(w) => {
            let n_dim: usize = problem.block_dims.iter().sum();
            return finish(problem, opts, None, None, Some(w), opts.trace_factor * n_dim as f64);
        }
    };
    let kept: Vec<usize> = kept
        .into_iter()
        .filter(|&i| {
            let r = &problem.rows[i];
            r.gram.iter().any(|e| e.coeff != 0.0) || r.free.iter().any(|(_, c)| *c != 0.0)
        })
        .collect();
    let mut factor = opts.trace_factor;
    let mut last = None;
    for attempt in 0..2 {
        let e = Embedded::build(problem, &kept, &scale, opts, factor);
        let perturb = (attempt > 0).then_some(opts.seed);
        let outcome = run(&e, opts, perturb);
        let sol = finish(problem, opts, Some(&e), Some(&outcome), None, e.trace_budget);
        debug!("sdp attempt {attempt}: {:?} ({})", sol.status, sol.message);
        if sol.status != SdpStatus::NumericalFailure {
            return sol;
        }
        last = Some(sol);
        factor *= 100.0;
    }
    last.expect("at least one attempt")
}
