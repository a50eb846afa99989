use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use barrier_core::certcheck::{
    full_check, sample_conditions, simulate_hybrid, CheckError, JumpPolicy, RunStatus, SamplingCheck, Tolerances,
};
use barrier_core::synthesis::{sweep_report, synthesize, Certificate, Outcome, SearchConfig, SynthResult};
use barrier_core::system::{load_system_file, HybridSystem};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

mod args;
mod levelset;
mod manifest;

use manifest::{digest, manifest_for, now, sibling, RunManifest};

#[derive(Parser)]
#[command(name = "barrier-synth", version, about = "Synthesize and check exponential-condition barrier certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the degree/lambda grid for a verified certificate.
    Synth(SynthArgs),
    /// Verify a certificate against a system (coefficient match and sampling).
    Check(CheckArgs),
    /// Grid values and zero contour of one barrier on a 2-D slice.
    Levelset(LevelsetArgs),
    /// Attempt every grid cell and tabulate the outcomes.
    Sweep(SweepArgs),
    /// Simulate one hybrid execution.
    Simulate(SimulateArgs),
    /// Sample the certificate conditions looking for a violation.
    Falsify(FalsifyArgs),
    /// Re-run a recorded command and compare its outputs.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Sampling box: `lo:hi` or one `lo:hi` per variable, comma separated.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Where to write the run manifest (defaults next to the main output).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Comma-separated lambda candidates.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Degree range `A..B`.
    #[arg(long)]
    deg: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// `edge=value,...`, edges by index or `source->target`.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    tol_eq: Option<f64>,
    #[arg(long)]
    tol_psd: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    system: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    common: Common,
    #[arg(short, long, default_value = "certificate.json")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    system: PathBuf,
    certificate: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    common: Common,
    /// Report path (defaults to `<certificate>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LevelsetArgs {
    system: PathBuf,
    certificate: PathBuf,
    /// Mode whose barrier is drawn (defaults to the first).
    #[arg(long)]
    mode: Option<String>,
    /// The two plotted variables, `x1,x2`.
    #[arg(long)]
    axes: Option<String>,
    /// Values of the other variables, `x3=0,...` (default 0).
    #[arg(long, allow_hyphen_values = true)]
    fix: Option<String>,
    #[arg(long, default_value = "200x200")]
    grid: String,
    #[command(flatten)]
    common: Common,
    /// Output prefix: writes `<prefix>.grid.csv` and `<prefix>.contour.csv`.
    #[arg(short, long, default_value = "levelset")]
    out: String,
}

#[derive(Args)]
struct SweepArgs {
    system: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    common: Common,
    #[arg(short, long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    system: PathBuf,
    /// Start as `mode:(x1,...,xn)`.
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value = "eager")]
    policy: JumpPolicy,
    /// Adds the barrier value of the current mode as a column.
    #[arg(long)]
    certificate: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[arg(short, long, default_value = "trajectory.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FalsifyArgs {
    system: PathBuf,
    certificate: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long)]
    slack: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// Exit status plus the files written, for the manifest.
struct Run {
    code: u8,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
    manifest: Option<PathBuf>,
}

fn load(path: &Path) -> Result<HybridSystem> {
    load_system_file(path).with_context(|| format!("loading system {}", path.display()))
}

fn load_certificate(path: &Path) -> Result<Certificate> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Certificate::from_json(&text).with_context(|| format!("parsing certificate {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn search_config(h: &HybridSystem, s: &SearchArgs, c: &Common) -> Result<SearchConfig> {
    let mut cfg = SearchConfig::default();
    if let Some(l) = &s.lambda {
        cfg.lambdas = args::lambdas(l)?;
    }
    if let Some(d) = &s.deg {
        (cfg.d_min, cfg.d_max) = args::degrees(d)?;
    }
    if let Some(e) = &s.epsilon {
        cfg.epsilon = barrier_core::poly::rational::parse_rational(e).ok_or_else(|| anyhow!("bad epsilon `{e}`"))?;
    }
    if let Some(g) = &s.gamma {
        cfg.gamma = args::gammas(g, h)?;
    }
    if let Some(t) = s.tol_eq {
        cfg.solver.tol_eq = t;
    }
    if let Some(t) = s.tol_psd {
        cfg.solver.tol_psd = t;
    }
    if let Some(b) = &c.bounds {
        cfg.tolerances.bounds = Some(args::bounds(b, h.dim())?);
    }
    cfg.solver.seed = c.seed;
    cfg.tolerances.seed = c.seed;
    cfg.jobs = c.jobs.max(1);
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

fn synth(a: &SynthArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let cfg = search_config(&h, &a.search, &a.common)?;
    let res = synthesize(&h, &cfg).map_err(|e| anyhow!(e))?;
    for at in res.attempts() {
        log::info!("d={} lambda={}: {} ({})", at.degree, at.lambda, at.outcome.as_str(), at.detail);
    }
    let report_path = sibling(&a.out, "report");
    let mut outputs = Vec::new();
    let code = match &res {
        SynthResult::Found { certificate, .. } => {
            write(&a.out, &certificate.to_json())?;
            let report = certificate.report.as_ref().ok_or_else(|| anyhow!("certificate carries no report"))?;
            write(&report_path, &serde_json::to_string_pretty(report)?)?;
            outputs.push(a.out.clone());
            outputs.push(report_path);
            let first = res.attempts().last().expect("a verified attempt");
            println!("verified: degree {} lambda {} -> {}", first.degree, first.lambda, a.out.display());
            0
        }
        SynthResult::Exhausted { attempts } => {
            eprintln!("no certificate found in {} attempts", attempts.len());
            for at in attempts {
                eprintln!("  d={} lambda={}: {}", at.degree, at.lambda, at.outcome.as_str());
            }
            1
        }
    };
    Ok(Run {
        code,
        inputs: vec![a.system.clone()],
        outputs,
        config: serde_json::to_value(&cfg)?,
        manifest: Some(a.common.manifest.clone().unwrap_or_else(|| manifest_for(&a.out))),
    })
}

fn tolerances(h: &HybridSystem, c: &Common, samples: Option<usize>) -> Result<Tolerances> {
    let mut tol = Tolerances { seed: c.seed, ..Tolerances::default() };
    if let Some(n) = samples {
        tol.samples = n;
    }
    if let Some(b) = &c.bounds {
        tol.bounds = Some(args::bounds(b, h.dim())?);
    }
    Ok(tol)
}

fn check(a: &CheckArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let cert = load_certificate(&a.certificate)?;
    let tol = tolerances(&h, &a.common, a.samples)?;
    let report = full_check(&h, &cert, &tol).context("certificate does not fit the system")?;
    let path = a.report.clone().unwrap_or_else(|| sibling(&a.certificate, "report"));
    write(&path, &serde_json::to_string_pretty(&report)?)?;
    let code = if report.verdict.pass {
        println!("pass (worst residual {:.3e})", report.worst_residual());
        0
    } else {
        println!("fail: {}", report.first_failure().unwrap_or_default());
        1
    };
    Ok(Run {
        code,
        inputs: vec![a.system.clone(), a.certificate.clone()],
        outputs: vec![path.clone()],
        config: serde_json::to_value(&tol)?,
        manifest: Some(a.common.manifest.clone().unwrap_or_else(|| manifest_for(&path))),
    })
}

fn levelset(a: &LevelsetArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let cert = load_certificate(&a.certificate)?;
    let pc = cert.parse(&h).context("certificate does not fit the system")?;
    let mode = a.mode.clone().unwrap_or_else(|| h.modes[0].id.clone());
    let k = h.mode_index(&mode).ok_or_else(|| anyhow!("unknown mode `{mode}`"))?;
    if h.dim() < 2 {
        bail!("level sets need at least two variables");
    }
    let index = |name: &str| h.vars.iter().position(|v| v == name).ok_or_else(|| anyhow!("unknown variable `{name}`"));
    let (ax, ay) = match &a.axes {
        Some(s) => {
            let (x, y) = s.split_once(',').ok_or_else(|| anyhow!("expected two axes, got `{s}`"))?;
            (index(x.trim())?, index(y.trim())?)
        }
        None => (0, 1),
    };
    if ax == ay {
        bail!("the two axes must differ");
    }
    let mut point = vec![0.0; h.dim()];
    for (name, v) in args::fixed(a.fix.as_deref().unwrap_or(""))? {
        point[index(&name)?] = v;
    }
    let (nx, ny) = args::grid(&a.grid)?;
    if nx.saturating_mul(ny) > levelset::MAX_CELLS {
        bail!("grid of {nx}x{ny} cells exceeds {}", levelset::MAX_CELLS);
    }
    let b = match &a.common.bounds {
        Some(s) => args::bounds(s, 2)?,
        None => barrier_core::system::Bounds::cube(2, 10.0),
    };
    let phi = pc.barriers[k].compile();
    let grid = levelset::evaluate(&phi, &point, (ax, ay), (b.lo[0], b.hi[0], nx), (b.lo[1], b.hi[1], ny));
    let segments = levelset::contour(&grid);
    let (xn, yn) = (&h.vars[ax], &h.vars[ay]);
    let grid_path = PathBuf::from(format!("{}.grid.csv", a.out));
    let contour_path = PathBuf::from(format!("{}.contour.csv", a.out));
    let mut w = csv::Writer::from_path(&grid_path)?;
    w.write_record([xn.as_str(), yn.as_str(), "phi"])?;
    for (j, y) in grid.ys.iter().enumerate() {
        for (i, x) in grid.xs.iter().enumerate() {
            w.write_record([x.to_string(), y.to_string(), grid.values[j][i].to_string()])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(&contour_path)?;
    w.write_record(["segment", &format!("{xn}_a"), &format!("{yn}_a"), &format!("{xn}_b"), &format!("{yn}_b")])?;
    for (n, s) in segments.iter().enumerate() {
        w.write_record([
            n.to_string(),
            s[0].0.to_string(),
            s[0].1.to_string(),
            s[1].0.to_string(),
            s[1].1.to_string(),
        ])?;
    }
    w.flush()?;
    println!("{} grid points, {} contour segments", grid.xs.len() * grid.ys.len(), segments.len());
    Ok(Run {
        code: 0,
        inputs: vec![a.system.clone(), a.certificate.clone()],
        outputs: vec![grid_path, contour_path],
        config: serde_json::json!({ "mode": mode, "axes": [xn, yn], "fixed": point, "grid": [nx, ny], "box": b }),
        manifest: a.common.manifest.clone().or_else(|| Some(PathBuf::from(format!("{}.manifest.json", a.out)))),
    })
}

fn sweep(a: &SweepArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let cfg = search_config(&h, &a.search, &a.common)?;
    let attempts = sweep_report(&h, &cfg).map_err(|e| anyhow!(e))?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["degree", "lambda", "outcome", "solver_iterations", "prune_rounds", "detail"])?;
    for at in &attempts {
        w.write_record([
            at.degree.to_string(),
            at.lambda.clone(),
            at.outcome.as_str().to_string(),
            at.solver_iterations.to_string(),
            at.prune_rounds.to_string(),
            at.detail.clone(),
        ])?;
    }
    w.flush()?;
    // degree rows, lambda columns
    let labels: Vec<String> = cfg.lambdas.iter().map(|l| l.label()).collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:>4} {}", "d", labels.iter().map(|l| format!("{l:>8}")).collect::<String>())?;
    for d in cfg.d_min..=cfg.d_max {
        let row: String = labels
            .iter()
            .map(|l| {
                let cell = attempts.iter().find(|at| at.degree == d && &at.lambda == l);
                let mark = if cell.is_some_and(|at| at.outcome == Outcome::Verified) { "ok" } else { "x" };
                format!("{mark:>8}")
            })
            .collect();
        writeln!(out, "{d:>4} {row}")?;
    }
    let timing: Vec<f64> = attempts.iter().map(|at| at.wall_seconds).collect();
    log::info!("cell wall times: {timing:?}");
    Ok(Run {
        code: 0,
        inputs: vec![a.system.clone()],
        outputs: vec![a.out.clone()],
        config: serde_json::to_value(&cfg)?,
        manifest: Some(a.common.manifest.clone().unwrap_or_else(|| manifest_for(&a.out))),
    })
}

fn simulate(a: &SimulateArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let (mode, x0) = args::start(&a.from, &h)?;
    let barriers = match &a.certificate {
        Some(p) => {
            let pc = load_certificate(p)?.parse(&h).context("certificate does not fit the system")?;
            Some(pc.barriers.iter().map(|b| b.compile()).collect::<Vec<_>>())
        }
        None => None,
    };
    let traj = simulate_hybrid(&h, &mode, &x0, a.horizon, a.step, a.policy, a.common.seed)?;
    for w in &traj.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = vec!["t".to_string()];
    header.extend(h.vars.iter().cloned());
    header.push("location".into());
    header.push("phi".into());
    w.write_record(&header)?;
    for seg in &traj.segments {
        let k = h.mode_index(&seg.mode).expect("segment mode");
        for (t, x) in seg.times.iter().zip(&seg.states) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.push(seg.mode.clone());
            row.push(barriers.as_ref().map(|b| b[k].eval(x).to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    println!("{:?}: {} segments, {} jumps", traj.status, traj.segments.len(), traj.jumps.len());
    let mut inputs = vec![a.system.clone()];
    inputs.extend(a.certificate.clone());
    Ok(Run {
        code: if traj.status == RunStatus::Completed { 0 } else { 1 },
        inputs,
        outputs: vec![a.out.clone()],
        config: serde_json::json!({
            "start": mode, "x0": x0, "horizon": a.horizon, "step": a.step, "policy": a.policy, "seed": a.common.seed,
        }),
        manifest: Some(a.common.manifest.clone().unwrap_or_else(|| manifest_for(&a.out))),
    })
}

/// Samples are drawn in fixed-size chunks with their own seeds so that the
/// result does not depend on `--jobs`.
const CHUNK: usize = 10_000;

fn merge(parts: Vec<Vec<SamplingCheck>>) -> Vec<SamplingCheck> {
    let mut parts = parts.into_iter();
    let Some(mut acc) = parts.next() else { return Vec::new() };
    for part in parts {
        for (a, b) in acc.iter_mut().zip(part) {
            a.samples += b.samples;
            a.attempts += b.attempts;
            a.pass &= b.pass;
            if b.worst_violation > a.worst_violation {
                a.worst_violation = b.worst_violation;
                a.witness = b.witness;
            }
            a.note = a.note.take().or(b.note);
        }
    }
    acc
}

fn falsify(a: &FalsifyArgs) -> Result<Run> {
    let h = load(&a.system)?;
    let cert = load_certificate(&a.certificate)?;
    let pc = cert.parse(&h).context("certificate does not fit the system")?;
    let tol = tolerances(&h, &a.common, Some(a.samples))?;
    let slack = a.slack.unwrap_or(tol.sample_slack);
    let bounds = tol.sampling_box(h.dim());
    let chunks: Vec<(usize, usize)> =
        (0..a.samples.div_ceil(CHUNK)).map(|i| (i, CHUNK.min(a.samples - i * CHUNK))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.common.jobs.max(1)).build()?;
    let parts: Vec<Vec<SamplingCheck>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|&(i, n)| {
                let seed = a.common.seed.wrapping_add((i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
                sample_conditions(&h, &pc, &bounds, n, slack, seed)
            })
            .collect::<Result<_, CheckError>>()
    })?;
    let checks = merge(parts);
    let mut code = 0;
    for c in &checks {
        if c.pass {
            println!("{}: no violation in {} samples (worst {:.3e})", c.condition, c.samples, c.worst_violation);
        } else {
            code = 1;
            println!(
                "{}: violation {:.3e} at {:?}",
                c.condition,
                c.worst_violation,
                c.witness.as_deref().unwrap_or(&[])
            );
        }
    }
    Ok(Run {
        code,
        inputs: vec![a.system.clone(), a.certificate.clone()],
        outputs: Vec::new(),
        config: serde_json::json!({ "samples": a.samples, "slack": slack, "box": bounds, "seed": a.common.seed }),
        manifest: a.common.manifest.clone(),
    })
}

fn replay(a: &ReplayArgs) -> Result<u8> {
    let recorded = RunManifest::read(&a.manifest)?;
    std::env::set_current_dir(&recorded.cwd).with_context(|| format!("entering {}", recorded.cwd))?;
    for input in &recorded.inputs {
        let now = digest(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            bail!("input {} changed since the recorded run", input.path);
        }
    }
    let mut argv = vec!["barrier-synth".to_string()];
    argv.extend(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv)?;
    let run = execute(&cli.command)?;
    let mut same = run.code == recorded.exit_code;
    if !same {
        println!("exit code {} (recorded {})", run.code, recorded.exit_code);
    }
    for out in &recorded.outputs {
        let now = digest(Path::new(&out.path))?;
        if now.sha256 == out.sha256 {
            println!("identical: {}", out.path);
        } else {
            println!("differs: {}", out.path);
            same = false;
        }
    }
    Ok(if same { 0 } else { 1 })
}

fn execute(command: &Command) -> Result<Run> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Check(a) => check(a),
        Command::Levelset(a) => levelset(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Falsify(a) => falsify(a),
        Command::Replay(_) => bail!("replay cannot be nested"),
    }
}

fn seed_of(command: &Command) -> u64 {
    match command {
        Command::Synth(a) => a.common.seed,
        Command::Check(a) => a.common.seed,
        Command::Levelset(a) => a.common.seed,
        Command::Sweep(a) => a.common.seed,
        Command::Simulate(a) => a.common.seed,
        Command::Falsify(a) => a.common.seed,
        Command::Replay(_) => 0,
    }
}

fn record(command: &Command, args: Vec<String>, started: f64, run: &Run) -> Result<()> {
    let Some(path) = &run.manifest else { return Ok(()) };
    let name = args.first().cloned().unwrap_or_default();
    let manifest = RunManifest {
        command: name,
        args,
        cwd: std::env::current_dir()?.display().to_string(),
        inputs: run.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        config: run.config.clone(),
        seed: seed_of(command),
        outputs: run.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        exit_code: run.code,
        started,
        finished: now(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    manifest.write(path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BARRIER_SYNTH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let started = now();
    let result = match &cli.command {
        Command::Replay(a) => replay(a),
        command => execute(command).and_then(|run| {
            record(command, std::env::args().skip(1).collect(), started, &run)?;
            Ok(run.code)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // sources often repeat in their parent's message
            let mut parts: Vec<String> = Vec::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !parts.last().is_some_and(|p| p.contains(&cause)) {
                    parts.push(cause);
                }
            }
            eprintln!("error: {}", parts.join(": "));
            ExitCode::from(2)
        }
    }
}
