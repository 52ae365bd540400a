use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use anyhow::{bail, Context};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn, LevelFilter};
use pcenter::bounds::{self, PclbVariant};
use pcenter::engine::{Scheme, SolverConfig};
use pcenter::oracle;
use pcenter_cli::{
    discover, load_instance, solve_instance, write_bounds_csv, write_runs_csv, BoundLab, Format, RunRecord,
    SolveReport,
};

#[derive(Parser)]
#[command(name = "pcenter", version, about = "Exact solver for the vertex p-center problem")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one instance to optimality (or until the time limit).
    Solve(SolveArgs),
    /// Compute the lower-bound iteration, the set-cover bound and the LP
    /// relaxations of one instance.
    Boundlab(BoundArgs),
    /// Enumerate every p-subset of a small instance.
    Oracle(OracleArgs),
    /// Solve every instance of a directory and print one CSV line per run.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pmed,
    Tsplib,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Out {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum VariantArg {
    Full,
    Reduced,
    Both,
}

#[derive(clap::Args)]
struct Source {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,
    /// File layout; inferred from the extension when omitted (`.tsp` is TSPLIB).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Number of centers. Required for TSPLIB, overrides the file for pmed.
    #[arg(long)]
    p: Option<usize>,
}

impl Source {
    fn format(&self) -> Format {
        resolve_format(self.format, &self.instance)
    }

    fn load(&self) -> anyhow::Result<pcenter::Instance> {
        require_p(self.format(), self.p);
        let inst = load_instance(&self.instance, self.format(), self.p)?;
        info!(
            "loaded {} ({} vertices, p = {})",
            inst.name(),
            inst.n_customers(),
            inst.p()
        );
        Ok(inst)
    }
}

#[derive(clap::Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "maxviolated", value_parser = parse_scheme)]
    scheme: Scheme,
    /// Primal heuristic after every LP.
    #[arg(long, value_enum, default_value = "on")]
    heuristic: Switch,
    /// Lifted cuts; `off` keeps every cut at lift bound 0.
    #[arg(long, value_enum, default_value = "on")]
    lifting: Switch,
    /// Seconds.
    #[arg(long, default_value_t = 1800.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many branch-and-bound nodes.
    #[arg(long)]
    node_limit: Option<usize>,
}

impl SolverArgs {
    fn config(&self, verbose: bool) -> SolverConfig {
        SolverConfig {
            use_heuristic: self.heuristic == Switch::On,
            lifting: self.lifting == Switch::On,
            time_limit: self.time_limit,
            seed: self.seed,
            node_limit: self.node_limit,
            verbose,
            ..SolverConfig::default().with_scheme(self.scheme)
        }
    }

    fn forward(&self) -> Vec<String> {
        let on = |s: Switch| if s == Switch::On { "on" } else { "off" }.to_string();
        let mut v = vec![
            "--scheme".into(),
            self.scheme.to_string(),
            "--heuristic".into(),
            on(self.heuristic),
            "--lifting".into(),
            on(self.lifting),
            "--time-limit".into(),
            self.time_limit.to_string(),
            "--seed".into(),
            self.seed.to_string(),
        ];
        if let Some(n) = self.node_limit {
            v.extend(["--node-limit".into(), n.to_string()]);
        }
        v
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "csv")]
    out: Out,
    /// JSON progress events on stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(clap::Args)]
struct BoundArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value = "both")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "json")]
    out: Out,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[command(flatten)]
    source: Source,
    /// Refuse to enumerate more subsets than this.
    #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
    cap: u64,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Directory with `pmed*` or `*.tsp` files.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "pmed")]
    format: FormatArg,
    /// Values of p to run on every file (required for TSPLIB).
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    /// Run both separation schemes on every instance.
    #[arg(long)]
    both_schemes: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Worker processes; each run happens in its own process when above 1.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn resolve_format(arg: Option<FormatArg>, path: &Path) -> Format {
    match arg {
        Some(FormatArg::Pmed) => Format::Pmed,
        Some(FormatArg::Tsplib) => Format::Tsplib,
        None => Format::infer(path),
    }
}

fn require_p(format: Format, p: Option<usize>) {
    if format == Format::Tsplib && p.is_none() {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "--p is required for TSPLIB instances",
            )
            .exit();
    }
}

fn init_logging(verbose: bool) -> bool {
    let setting = std::env::var("PCENTER_LOG").unwrap_or_default();
    let (level, trace) = match setting.to_ascii_lowercase().as_str() {
        "quiet" => (LevelFilter::Off, false),
        "trace" => (LevelFilter::Trace, true),
        "info" => (LevelFilter::Info, false),
        _ if verbose => (LevelFilter::Info, false),
        _ => (LevelFilter::Warn, false),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    trace
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = matches!(&cli.cmd, Cmd::Solve(a) if a.verbose);
    let trace = init_logging(verbose);
    let outcome = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(a, trace),
        Cmd::Boundlab(a) => cmd_boundlab(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_solve(a: SolveArgs, trace: bool) -> anyhow::Result<bool> {
    let inst = a.source.load()?;
    let report = solve_instance(&inst, &a.solver.config(a.verbose || trace))?;
    let rec = &report.record;
    info!("{} p = {}: {} UB = {} LB = {}", rec.name, rec.p, rec.status, rec.ub, rec.lb);
    let stdout = std::io::stdout();
    match a.out {
        Out::Csv => write_runs_csv(stdout.lock(), std::slice::from_ref(rec))?,
        Out::Json => {
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &report)?;
            writeln!(lock)?;
        }
    }
    Ok(rec.succeeded())
}

fn cmd_boundlab(a: BoundArgs) -> anyhow::Result<bool> {
    let inst = a.source.load()?;
    let p = inst.p();
    let variants: &[PclbVariant] = match a.variant {
        VariantArg::Full => &[PclbVariant::Full],
        VariantArg::Reduced => &[PclbVariant::Reduced],
        VariantArg::Both => &[PclbVariant::Full, PclbVariant::Reduced],
    };
    let mut reports = Vec::new();
    for &v in variants {
        let rep = bounds::iterate_lb_sharp(&inst, p, v)?;
        info!("{v:?}: LB# = {} after {} iterations, LB* = {}", rep.lb_sharp, rep.iterations, rep.lb_star);
        reports.push(rep);
    }
    let pc1_lp = match bounds::pc1_lp_value(&inst, p) {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("skipping the assignment LP: {e}");
            None
        }
    };
    let pc2_lp = Some(bounds::pc2_lp_value(&inst, p)?);
    let lab = BoundLab {
        name: inst.name().to_string(),
        vertices: inst.n_customers(),
        p,
        reports,
        pc1_lp,
        pc2_lp,
    };
    let stdout = std::io::stdout();
    match a.out {
        Out::Csv => write_bounds_csv(stdout.lock(), &lab.reports)?,
        Out::Json => {
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &lab)?;
            writeln!(lock)?;
        }
    }
    Ok(true)
}

fn cmd_oracle(a: OracleArgs) -> anyhow::Result<bool> {
    let inst = a.source.load()?;
    let res = oracle::brute_force(&inst, inst.p(), a.cap)?;
    let mut lock = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut lock, &res)?;
    writeln!(lock)?;
    Ok(true)
}

struct Job {
    path: PathBuf,
    p: Option<usize>,
    scheme: Scheme,
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<bool> {
    let format = resolve_format(Some(a.format), &a.dir);
    if format == Format::Tsplib && a.p.is_empty() {
        bail!("--p is required for TSPLIB directories");
    }
    let files = discover(&a.dir, format)?;
    if files.is_empty() {
        bail!("no instance files in {}", a.dir.display());
    }
    let schemes: Vec<Scheme> = if a.both_schemes {
        vec![Scheme::MaxViolated, Scheme::FixedCustomer]
    } else {
        vec![a.solver.scheme]
    };
    let ps: Vec<Option<usize>> = if a.p.is_empty() { vec![None] } else { a.p.iter().map(|&p| Some(p)).collect() };
    let mut jobs = Vec::new();
    for path in &files {
        for &p in &ps {
            for &scheme in &schemes {
                jobs.push(Job {
                    path: path.clone(),
                    p,
                    scheme,
                });
            }
        }
    }

    let results: Vec<anyhow::Result<RunRecord>> = if a.jobs <= 1 {
        jobs.iter()
            .map(|job| {
                let inst = load_instance(&job.path, format, job.p)?;
                let cfg = SolverArgs {
                    scheme: job.scheme,
                    ..a.solver.clone()
                }
                .config(false);
                let rec = solve_instance(&inst, &cfg)?.record;
                info!("{} p = {} {}: {} in {:.2}s", rec.name, rec.p, rec.scheme, rec.status, rec.time_seconds);
                Ok(rec)
            })
            .collect()
    } else {
        run_in_processes(&jobs, format, &a.solver, a.jobs)
    };

    let mut records = Vec::new();
    let mut ok = true;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(rec) => {
                ok &= rec.succeeded();
                records.push(rec);
            }
            Err(e) => {
                warn!("{}: {e:#}", job.path.display());
                ok = false;
            }
        }
    }
    match &a.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_runs_csv(file, &records)?;
        }
        None => write_runs_csv(std::io::stdout().lock(), &records)?,
    }
    Ok(ok)
}

fn run_in_processes(
    jobs: &[Job],
    format: Format,
    solver: &SolverArgs,
    workers: usize,
) -> Vec<anyhow::Result<RunRecord>> {
    let exe = match std::env::current_exe() {
        Ok(e) => e,
        Err(e) => return jobs.iter().map(|_| Err(anyhow::anyhow!("locating executable: {e}"))).collect(),
    };
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<anyhow::Result<RunRecord>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let res = run_child(&exe, job, format, solver);
                *slots[k].lock().expect("result slot") = Some(res);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

fn run_child(exe: &Path, job: &Job, format: Format, solver: &SolverArgs) -> anyhow::Result<RunRecord> {
    let mut cmd = Command::new(exe);
    cmd.arg("solve")
        .arg("--instance")
        .arg(&job.path)
        .arg("--format")
        .arg(if format == Format::Tsplib { "tsplib" } else { "pmed" })
        .args(SolverArgs {
            scheme: job.scheme,
            ..solver.clone()
        }
        .forward())
        .args(["--out", "json"]);
    if let Some(p) = job.p {
        cmd.args(["--p", &p.to_string()]);
    }
    let out = cmd.output().context("spawning worker")?;
    let report: SolveReport = serde_json::from_slice(&out.stdout).with_context(|| {
        format!(
            "worker for {} produced no report: {}",
            job.path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })?;
    Ok(report.record)
}
