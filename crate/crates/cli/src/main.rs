//! `fractalmeter` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fractalmeter::energy::{correlation_profile, dyadic_energy};
use fractalmeter::entropy::{conditional_entropy, partition_entropy};
use fractalmeter::experiment::{circle_spec, digit_product_spec, flagship_spec, run_distance_experiment, ExperimentReport, ExperimentSpec};
use fractalmeter::format::{load, save, tree_hash, LoadedMeasure};
use fractalmeter::generators::{BlockedDigits, GeneratorSpec};
use fractalmeter::pinned::pinned_pushforward;
use fractalmeter::projection::{project_atoms, Direction, Grid1D, DEFAULT_SUBDIV};
use fractalmeter::verify::{run_suite, Suite};
use fractalmeter::{Error, Mode, Rational, Surd2};

const EXIT_VALIDATION: u8 = 3;
const EXIT_ASSERTION: u8 = 4;
const SMALL_SIZE: usize = 20;

#[derive(Parser)]
#[command(name = "fractalmeter", version, about = "Finite-resolution energy, entropy and pinned-distance experiments")]
struct Cli {
    /// Scalar mode for generated measures and exact computations.
    #[arg(long, global = true, value_enum, default_value = "rational")]
    mode: ModeArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rational,
    Float,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Rational => Mode::Rational,
            ModeArg::Float => Mode::Float,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measure file.
    Gen(GenArgs),
    /// Analyze a measure file.
    Analyze(AnalyzeArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Run a pinned-distance experiment.
    Experiment(ExperimentArgs),
    /// Inspect or compare experiment reports.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Branching,
    Uniform,
    DigitRestricted,
    Beta,
    Circle,
    Line,
    Point,
}

#[derive(Clone, Copy, ValueEnum)]
enum Blocked {
    Squares,
    Never,
    Always,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 2)]
    dim: u32,
    #[arg(long)]
    depth: Option<u32>,
    /// Retained child digits, e.g. `0,1,3`.
    #[arg(long, value_delimiter = ',')]
    pattern: Vec<u8>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<f64>>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    /// Height of a horizontal line measure.
    #[arg(long, allow_negative_numbers = true)]
    y: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, value_delimiter = ',')]
    coords: Vec<u32>,
    #[arg(long, value_enum, default_value = "squares")]
    blocked: Blocked,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Energy,
    Entropy,
    Project,
    Pindist,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    what: What,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    /// Projection angle in radians.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Sweep this many equispaced angles instead of a single one.
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<f64>>,
    #[arg(long)]
    subdiv: Option<u32>,
    /// Also write a CSV table here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `small` or a number of random instances.
    #[arg(long, default_value = "small")]
    size: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Identities,
    Inequalities,
    Pipeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Flagship,
    Circle,
    DigitProduct,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Write the experiment spec file instead of running it.
    #[arg(long)]
    emit_spec: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-scale table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    /// Exit with status 4 unless this report matches, timing excluded.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Assertion(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Validation(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let mode: Mode = cli.mode.into();
    let result = match cli.command {
        Command::Gen(a) => gen(a, mode),
        Command::Analyze(a) => analyze(a, mode),
        Command::Verify(a) => verify(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FRACTALMETER_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("FRACTALMETER_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn missing(flag: &str) -> Failure {
    Failure::Validation(anyhow::anyhow!("--{flag} is required for this kind"))
}

fn print_json(v: &Value) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn pair(v: &[f64], flag: &str) -> CliResult<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Failure::Validation(anyhow::anyhow!("--{flag} takes two comma-separated numbers"))),
    }
}

fn generator(a: &GenArgs) -> CliResult<GeneratorSpec> {
    let depth = || a.depth.ok_or_else(|| missing("depth"));
    let level = || a.level.ok_or_else(|| missing("level"));
    Ok(match a.kind {
        Kind::Branching => {
            if a.pattern.is_empty() {
                return Err(missing("pattern"));
            }
            GeneratorSpec::Branching { dim: a.dim, pattern: a.pattern.clone(), depth: depth()? }
        }
        Kind::Uniform => GeneratorSpec::Uniform { dim: a.dim, depth: depth()? },
        Kind::DigitRestricted => GeneratorSpec::DigitRestricted {
            dim: a.dim,
            depth: depth()?,
            blocked: match a.blocked {
                Blocked::Squares => BlockedDigits::Squares,
                Blocked::Never => BlockedDigits::Never,
                Blocked::Always => BlockedDigits::Always,
            },
        },
        Kind::Beta => GeneratorSpec::Beta { dim: a.dim, p: a.p.ok_or_else(|| missing("p"))?, depth: depth()?, seed: a.seed },
        Kind::Circle => {
            let c = pair(a.center.as_deref().unwrap_or(&[0.5, 0.5]), "center")?;
            GeneratorSpec::Circle { center: [c[0], c[1]], radius: a.radius.ok_or_else(|| missing("radius"))?, level: level()? }
        }
        Kind::Line => GeneratorSpec::Line { y: a.y.ok_or_else(|| missing("y"))?, x0: a.x0, x1: a.x1, level: level()? },
        Kind::Point => {
            if a.coords.len() != a.dim as usize {
                return Err(missing("coords"));
            }
            GeneratorSpec::Point { dim: a.dim, depth: depth()?, coords: a.coords.clone() }
        }
    })
}

fn gen(a: GenArgs, mode: Mode) -> CliResult<()> {
    let spec = generator(&a)?;
    let (hash, leaves, dim, depth) = match mode {
        Mode::Rational => {
            let t = spec.build::<Rational>()?;
            save(&t, &a.out)?;
            (tree_hash(&t)?, t.leaves().len(), t.dim(), t.depth())
        }
        Mode::Float => {
            let t = spec.build::<f64>()?;
            save(&t, &a.out)?;
            (tree_hash(&t)?, t.leaves().len(), t.dim(), t.depth())
        }
    };
    print_json(&json!({
        "out": a.out.display().to_string(),
        "generator": spec,
        "mode": mode,
        "dim": dim,
        "depth": depth,
        "leaves": leaves,
        "sha256": hash,
    }))
}

fn write_csv(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    Ok(())
}

fn bins_json(g: &Grid1D) -> Value {
    Value::Array(g.bins().filter(|(_, m)| *m > 0.0).map(|(i, m)| json!([i, m])).collect())
}

fn analyze(a: AnalyzeArgs, mode: Mode) -> CliResult<()> {
    let measure = load(&a.input)?;
    let depth = measure.depth();
    let level = a.level.unwrap_or(depth);
    if level > depth {
        return Err(Error::OutOfResolution { level, depth }.into());
    }
    match a.what {
        What::Energy => {
            let s = a.s.ok_or_else(|| missing("s"))?;
            let exact_ok = mode == Mode::Rational && (2.0 * s).fract() == 0.0;
            let (value, exact, csv) = match (&measure, exact_ok) {
                (LoadedMeasure::Exact(t), true) => {
                    let t = t.cast::<Surd2>();
                    let e = dyadic_energy(&t, s)?;
                    (e.to_f64(), Some(e.to_string()), correlation_profile(&t, s)?.to_csv())
                }
                _ => {
                    let t = measure.to_f64();
                    (dyadic_energy(&t, s)?, None, correlation_profile(&t, s)?.to_csv())
                }
            };
            if let Some(p) = &a.csv {
                write_csv(p, &csv)?;
            }
            print_json(&json!({ "what": "energy", "s": s, "energy": value, "exact": exact }))
        }
        What::Entropy => {
            let t = measure.to_f64();
            let mut rows = Vec::new();
            let mut csv = String::from("level,entropy,increment\n");
            for m in 0..=level {
                let h = partition_entropy(&t.discretize(m)?)?.bits;
                let inc = if m == 0 { 0.0 } else { conditional_entropy(&t, m, m - 1)?.bits };
                csv.push_str(&format!("{m},{h},{inc}\n"));
                rows.push(json!({ "level": m, "entropy": h, "increment": inc }));
            }
            if let Some(p) = &a.csv {
                write_csv(p, &csv)?;
            }
            let h = partition_entropy(&t.discretize(level)?)?.bits;
            let normalized = if level == 0 { 0.0 } else { h / level as f64 };
            print_json(&json!({ "what": "entropy", "level": level, "entropy": h, "normalized": normalized, "levels": rows }))
        }
        What::Project => {
            let grid = measure.to_f64().discretize(level)?;
            let subdiv = a.subdiv.unwrap_or(DEFAULT_SUBDIV);
            let directions: Vec<Direction> = match (a.angles, a.theta) {
                (Some(n), _) => Direction::equispaced(n),
                (None, Some(t)) => vec![Direction::from_angle(t)],
                (None, None) => return Err(missing("theta")),
            };
            let mut rows = Vec::new();
            let mut csv = String::from("theta,l2,entropy\n");
            for theta in directions {
                let g = project_atoms(&grid, theta, subdiv, level)?;
                csv.push_str(&format!("{},{},{}\n", theta.angle(), g.l2_norm_sq(), g.entropy()));
                let mut row = json!({ "theta": theta.angle(), "l2": g.l2_norm_sq(), "entropy": g.entropy() });
                if a.angles.is_none() {
                    row["bins"] = bins_json(&g);
                }
                rows.push(row);
            }
            if let Some(p) = &a.csv {
                write_csv(p, &csv)?;
            }
            print_json(&json!({ "what": "project", "level": level, "subdiv": subdiv, "rows": rows }))
        }
        What::Pindist => {
            let y = pair(a.y.as_deref().ok_or_else(|| missing("y"))?, "y")?;
            let grid = measure.to_f64().discretize(level)?;
            let g = pinned_pushforward(&grid, y, level, a.subdiv.unwrap_or(0))?;
            if let Some(p) = &a.csv {
                let mut csv = String::from("bin,mass\n");
                for (i, m) in g.bins().filter(|(_, m)| *m > 0.0) {
                    csv.push_str(&format!("{i},{m}\n"));
                }
                write_csv(p, &csv)?;
            }
            print_json(&json!({
                "what": "pindist",
                "y": y,
                "level": level,
                "entropy": g.entropy(),
                "bins": bins_json(&g),
            }))
        }
    }
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    let size = match a.size.as_str() {
        "small" => SMALL_SIZE,
        n => n.parse().map_err(|_| anyhow::anyhow!("--size must be `small` or a count, got {n:?}"))?,
    };
    let suite = match a.suite {
        SuiteArg::Identities => Suite::Identities,
        SuiteArg::Inequalities => Suite::Inequalities,
        SuiteArg::Pipeline => Suite::Pipeline,
    };
    let checks = run_suite(suite, a.seed, size)?;
    for c in &checks {
        println!("{}", serde_json::to_string(c)?);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed.join(", ")))
    }
}

fn scale_csv(r: &ExperimentReport) -> String {
    let mut out = String::from("j,m_j,d_j,direction_pass,heavy,squares,light_mass,light_bound,good_mass,bad_mass,mean_local_entropy\n");
    for row in &r.scales {
        let pass = row.direction_pass.map(|p| p.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.j, row.m_j, row.d_j, pass, row.heavy, row.squares, row.light_mass, row.light_bound, row.good_mass, row.bad_mass, row.mean_local_entropy
        ));
    }
    out
}

fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let spec: ExperimentSpec = match (&a.spec, a.preset) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?
        }
        (None, Some(Preset::Flagship)) => flagship_spec(),
        (None, Some(Preset::Circle)) => circle_spec(),
        (None, Some(Preset::DigitProduct)) => digit_product_spec(),
        (None, None) => unreachable!("clap requires a spec or preset"),
    };
    let text = if a.emit_spec {
        serde_json::to_string_pretty(&spec)?
    } else {
        let report = run_distance_experiment(&spec)?;
        if let Some(p) = &a.csv {
            write_csv(p, &scale_csv(&report))?;
        }
        report.to_json()?
    };
    match &a.out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| anyhow::anyhow!("writing {}: {e}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_report(path: &Path) -> CliResult<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
}

fn report(a: ReportArgs) -> CliResult<()> {
    let r = read_report(&a.report)?;
    if let Some(p) = &a.csv {
        write_csv(p, &scale_csv(&r))?;
    }
    match &a.compare {
        None => print_json(&r.comparable()?),
        Some(other) => {
            let o = read_report(other)?;
            if r.comparable()? == o.comparable()? {
                println!("{}", json!({ "identical": true }));
                Ok(())
            } else {
                println!("{}", json!({ "identical": false }));
                Err(Failure::Assertion(format!("{} and {} differ", a.report.display(), other.display())))
            }
        }
    }
}
