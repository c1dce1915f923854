//! `jungck`: check, solve and certify commuting-pair fixed point problems.
//!
//! Exit codes: 0 pass, 1 finding, 2 input fault, 3 inversion failure.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jungck_core::checker::check_applicability;
use jungck_core::lattice::ABS_SLACK;
use jungck_core::solver::{multi_start, solve, SolveOptions};
use jungck_core::{
    catalog, certify_geometric_rate, check_symmetry, read_trace, validate_axioms, write_trace, AxiomCVariant,
    AxiomReport, BoxSampler, Error, Point, ProblemFile, ProblemSpec, Sampler, SCHEMA_VERSION,
};
use serde::Serialize;

const EXIT_PASS: u8 = 0;
const EXIT_FINDING: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INVERSION: u8 = 3;

#[derive(Parser)]
#[command(name = "jungck", version, about = "Common fixed points of commuting maps in vector S-metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the S-metric axioms and the diagonal symmetry property.
    ValidateSpace(ValidateArgs),
    /// Check the fixed point hypotheses for the selected mode.
    Check(CheckArgs),
    /// Run the Jungck iteration from one start.
    Solve(SolveArgs),
    /// Run the iteration from many seeded starts and cluster the fixed points.
    Probe(ProbeArgs),
    /// Certify a geometric rate on a recorded trace.
    Certify(CertifyArgs),
    /// List builtin problems, or print one.
    Catalog { name: Option<String> },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Problem file (TOML).
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Builtin problem name (see `jungck catalog`).
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    source: Source,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampler seed; overrides [options].seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count; overrides [options].samples.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxiomC {
    Literal,
    Standard,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Absolute slack for axiom comparisons, on top of 4 ulps.
    #[arg(long, default_value_t = ABS_SLACK)]
    tol: f64,
    /// Form of axiom (c); overrides [metric].axiom_c_variant.
    #[arg(long, value_enum)]
    axiom_c: Option<AxiomC>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides [options].tol.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct IterArgs {
    /// Overrides [options].tol.
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides [options].max_iters.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Run even if a custom metric fails axiom validation.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    iter: IterArgs,
    /// Start point, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x0: Vec<f64>,
    /// Attach a geometric rate certificate at this rate.
    #[arg(long)]
    certify_alpha: Option<f64>,
    /// Write the orbit trace (JSON lines) here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    iter: IterArgs,
    /// Number of uniform starts drawn from the carrier.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    /// Fixed points closer than this share a cluster.
    #[arg(long, default_value_t = 1e-6)]
    cluster_radius: f64,
}

#[derive(Args)]
struct CertifyArgs {
    /// Trace file written by `solve --trace-out`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure that ends the command with a non-zero exit code.
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::input(e.to_string())
    }
}

type CmdResult = Result<u8, Fail>;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    problem: Option<&'a str>,
    seed: Option<u64>,
    pass: bool,
    report: T,
}

fn emit<T: Serialize>(out: Option<&Path>, envelope: &Envelope<'_, T>) -> Result<(), Fail> {
    let mut text = serde_json::to_string_pretty(envelope).map_err(|e| Fail::input(e.to_string()))?;
    text.push('\n');
    let written = match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    written.map_err(Fail::input)
}

struct Loaded {
    label: String,
    file: ProblemFile,
}

impl Loaded {
    fn problem(&self) -> Result<&ProblemSpec, Fail> {
        self.file.require_problem().map_err(|e| Fail::input(format!("{}: {e}", self.label)))
    }
}

fn load(source: &Source) -> Result<Loaded, Fail> {
    let (label, text) = match (&source.problem, &source.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Fail::input(format!("{}: {e}", path.display())))?;
            (path.display().to_string(), text)
        }
        (None, Some(name)) => {
            let text = catalog::source(name).ok_or_else(|| {
                Fail::input(format!(
                    "unknown builtin {name:?}; available: {}",
                    catalog::names().collect::<Vec<_>>().join(", ")
                ))
            })?;
            (name.clone(), text.to_string())
        }
        (None, None) => return Err(Fail::input("one of --problem or --builtin is required")),
    };
    let file = ProblemFile::parse(&text).map_err(|e| Fail::input(format!("{label}: {e}")))?;
    Ok(Loaded { label, file })
}

fn problem_name(loaded: &Loaded) -> &str {
    loaded.file.name.as_deref().unwrap_or(&loaded.label)
}

fn validate_space(args: &ValidateArgs) -> CmdResult {
    let loaded = load(&args.common.source)?;
    let seed = args.common.seed.unwrap_or(loaded.file.options.seed);
    let n = args.common.samples.unwrap_or(loaded.file.options.samples);
    let variant = match args.axiom_c {
        Some(AxiomC::Literal) => AxiomCVariant::Literal,
        Some(AxiomC::Standard) => AxiomCVariant::Standard,
        None => loaded.file.axiom_c_variant,
    };
    let sampler = BoxSampler::new(loaded.file.carrier.clone(), seed);
    let axioms = validate_axioms(&loaded.file.metric, &sampler, n, args.tol, variant);
    let symmetry = check_symmetry(&loaded.file.metric, &sampler, n, args.tol);

    eprintln!("metric {} on {n} samples (seed {seed})", axioms.metric);
    for c in &axioms.checks {
        eprintln!(
            "  {:<24} {}  violations {}  worst {:e}",
            c.axiom,
            if c.pass { "pass" } else { "FAIL" },
            c.violations,
            c.worst_violation
        );
    }
    eprintln!(
        "  {:<24} {}  max deviation {:e}",
        "symmetry",
        if symmetry.pass { "pass" } else { "FAIL" },
        symmetry.max_deviation
    );

    #[derive(Serialize)]
    struct Report {
        axioms: AxiomReport,
        symmetry: jungck_core::SymmetryReport,
    }
    let pass = axioms.pass;
    emit(
        args.common.out.as_deref(),
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "validate-space",
            problem: Some(problem_name(&loaded)),
            seed: Some(seed),
            pass,
            report: Report { axioms, symmetry },
        },
    )?;
    Ok(if pass { EXIT_PASS } else { EXIT_FINDING })
}

fn check(args: &CheckArgs) -> CmdResult {
    let loaded = load(&args.common.source)?;
    let problem = loaded.problem()?;
    let seed = args.common.seed.unwrap_or(loaded.file.options.seed);
    let n = args.common.samples.unwrap_or(loaded.file.options.samples);
    let tol = args.tol.unwrap_or(loaded.file.options.tol);
    let sampler = BoxSampler::new(problem.carrier().clone(), seed);
    let report = check_applicability(problem, &sampler, n, tol)?;

    let flag = |b: bool| if b { "pass" } else { "FAIL" };
    eprintln!("mode {} on {n} samples (seed {seed})", report.mode);
    eprintln!("  commutes      {}  max deviation {:e}", flag(report.commutes.pass), report.commutes.max_deviation);
    if let Some(w) = &report.commutes.witness {
        eprintln!("                witness {w}");
    }
    eprintln!("  range         {}  {}", flag(report.range_ok.pass), report.range_ok.relation);
    if let Some(reason) = &report.range_ok.reason {
        eprintln!("                {reason}");
    }
    eprintln!("  continuity    {} (advisory)", flag(report.continuity.advisory_pass));
    eprintln!("  q_hat         {}  threshold {:.6}", report.q_hat, report.q_threshold);
    eprintln!("  applicable    {}", report.applicable);

    let pass = report.applicable;
    emit(
        args.common.out.as_deref(),
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "check",
            problem: Some(problem_name(&loaded)),
            seed: Some(seed),
            pass,
            report,
        },
    )?;
    Ok(if pass { EXIT_PASS } else { EXIT_FINDING })
}

/// Refuses custom metrics that fail sampled axiom validation, unless forced.
fn vet_metric(loaded: &Loaded, problem: &ProblemSpec, seed: u64, n: usize, force: bool) -> Result<(), Fail> {
    if problem.metric().is_builtin() {
        return Ok(());
    }
    let sampler = BoxSampler::new(problem.carrier().clone(), seed);
    let report = validate_axioms(problem.metric(), &sampler, n, ABS_SLACK, loaded.file.axiom_c_variant);
    if report.pass || force {
        return Ok(());
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.axiom).collect();
    Err(Fail::input(format!(
        "custom metric fails axiom check(s) {} on {n} samples (seed {seed}); run validate-space for witnesses or pass --force",
        failed.join(", ")
    )))
}

#[derive(Serialize)]
struct InversionReport {
    iteration: Option<usize>,
    source_point: Point,
    target: Point,
    reason: String,
}

fn inversion_report(e: &Error) -> Option<InversionReport> {
    let iteration = match e {
        Error::AtIteration { iteration, .. } => Some(*iteration),
        _ => None,
    };
    match e.root() {
        Error::Inversion(f) => Some(InversionReport {
            iteration,
            source_point: f.source_point.clone(),
            target: f.target.clone(),
            reason: f.reason.clone(),
        }),
        _ => None,
    }
}

fn solve_options(loaded: &Loaded, iter: &IterArgs, certify_alpha: Option<f64>) -> SolveOptions {
    SolveOptions {
        max_iters: iter.max_iters.unwrap_or(loaded.file.options.max_iters),
        tol: iter.tol.unwrap_or(loaded.file.options.tol),
        certify_alpha,
    }
}

fn solve_cmd(args: &SolveArgs) -> CmdResult {
    let loaded = load(&args.common.source)?;
    let problem = loaded.problem()?;
    let seed = args.common.seed.unwrap_or(loaded.file.options.seed);
    let n = args.common.samples.unwrap_or(loaded.file.options.samples);
    vet_metric(&loaded, problem, seed, n, args.iter.force)?;
    let opts = solve_options(&loaded, &args.iter, args.certify_alpha);
    let x0 = Point::new(args.x0.clone());
    fn envelope<'a, T: Serialize>(name: &'a str, pass: bool, report: T) -> Envelope<'a, T> {
        Envelope {
            schema_version: SCHEMA_VERSION,
            command: "solve",
            problem: Some(name),
            seed: None,
            pass,
            report,
        }
    }
    let name = problem_name(&loaded);

    let report = match solve(problem, &x0, &opts) {
        Ok(r) => r,
        Err(e) => {
            let Some(inv) = inversion_report(&e) else {
                return Err(e.into());
            };
            eprintln!("inversion failure: {e}");
            emit(args.common.out.as_deref(), &envelope(name, false, inv))?;
            return Ok(EXIT_INVERSION);
        }
    };
    if let Some(path) = &args.trace_out {
        let file = File::create(path).map_err(|e| Fail::input(format!("{}: {e}", path.display())))?;
        write_trace(&report.trace, problem.metric(), io::BufWriter::new(file))
            .map_err(|e| Fail::input(format!("{}: {e}", path.display())))?;
    }

    eprintln!(
        "{} after {} iteration(s): candidate {}  residual_f {}  residual_K {}  observed sigma {}",
        if report.converged { "converged" } else { "NOT converged" },
        report.iterations,
        report.fixed_point,
        report.residual_f,
        report.residual_k,
        report.observed_sigma
    );
    if let Some(c) = &report.certificate {
        eprintln!("certificate at alpha {}: {}", c.alpha, if c.passed() { "pass" } else { "FAIL" });
    }
    let pass = report.converged;
    emit(args.common.out.as_deref(), &envelope(name, pass, report))?;
    Ok(if pass { EXIT_PASS } else { EXIT_FINDING })
}

fn probe(args: &ProbeArgs) -> CmdResult {
    let loaded = load(&args.common.source)?;
    let problem = loaded.problem()?;
    let seed = args.common.seed.unwrap_or(loaded.file.options.seed);
    let n = args.common.samples.unwrap_or(loaded.file.options.samples);
    vet_metric(&loaded, problem, seed, n, args.iter.force)?;
    if args.starts == 0 {
        return Err(Fail::input("--starts must be positive"));
    }
    let starts = BoxSampler::new(problem.carrier().clone(), seed).draw(args.starts);
    let report = multi_start(problem, &starts, &solve_options(&loaded, &args.iter, None), args.cluster_radius)?;

    eprintln!(
        "{} start(s) (seed {seed}): {} converged, {} cluster(s), max diameter {:e}",
        report.starts, report.converged, report.cluster_count, report.max_diameter
    );
    for c in &report.clusters {
        eprintln!("  cluster at {} with {} member(s)", c.representative, c.members.len());
    }
    let pass = report.cluster_count == 1;
    emit(
        args.common.out.as_deref(),
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "probe",
            problem: Some(problem_name(&loaded)),
            seed: Some(seed),
            pass,
            report,
        },
    )?;
    Ok(if pass { EXIT_PASS } else { EXIT_FINDING })
}

fn certify(args: &CertifyArgs) -> CmdResult {
    let file = File::open(&args.trace).map_err(|e| Fail::input(format!("{}: {e}", args.trace.display())))?;
    let (trace, spec) =
        read_trace(BufReader::new(file)).map_err(|e| Fail::input(format!("{}: {e}", args.trace.display())))?;
    let cert = certify_geometric_rate(&trace, args.alpha, &spec)?;
    eprintln!(
        "alpha {}: step {}  pair bound {}  worst step ratio {}",
        cert.alpha,
        if cert.step_ok { "pass" } else { "FAIL" },
        if cert.pair_bound_ok { "pass" } else { "FAIL" },
        cert.worst_step_ratio
    );
    let pass = cert.passed();
    emit(
        args.out.as_deref(),
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "certify",
            problem: None,
            seed: None,
            pass,
            report: cert,
        },
    )?;
    Ok(if pass { EXIT_PASS } else { EXIT_FINDING })
}

fn catalog_cmd(name: Option<&str>) -> CmdResult {
    match name {
        None => {
            for n in catalog::names() {
                println!("{n}");
            }
            Ok(EXIT_PASS)
        }
        Some(n) => {
            let text = catalog::source(n).ok_or_else(|| Fail::input(format!("unknown builtin {n:?}")))?;
            print!("{text}");
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::ValidateSpace(a) => validate_space(a),
        Command::Check(a) => check(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Probe(a) => probe(a),
        Command::Certify(a) => certify(a),
        Command::Catalog { name } => catalog_cmd(name.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
