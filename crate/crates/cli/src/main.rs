use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wup_core::builders::IfsSpec;
use wup_core::functionals::{self, ProductVariant};
use wup_core::io;
use wup_core::optimizer::{minimize_product, OptimizerOptions};
use wup_core::report::{self, BuilderSpec, ExperimentConfig, GammaSetting};
use wup_core::resistance::resistance_matrix;
use wup_core::space::{self, MetricSource};
use wup_core::verifier::{self, NashVariant, VerifyOptions};
use wup_core::{Error, MetricMeasureSpace};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_CAPACITY: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

/// Weak uncertainty inequalities on finite metric measure spaces.
///
/// The vertex cap of every builder is read from WUP_MAX_VERTICES.
#[derive(Parser)]
#[command(name = "wup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a space and write it as JSON.
    Build(BuildArgs),
    /// All-pairs effective resistance of a space.
    Resistance(ResistanceArgs),
    /// Energy, variance and uncertainty product of a function.
    Eval(EvalArgs),
    /// Check volume growth, doubling, Poincaré and Nash hypotheses.
    Verify(VerifyArgs),
    /// Minimize the uncertainty product over unit-norm functions.
    Minimize(MinimizeArgs),
    /// Full pipeline from an experiment config.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BuilderKind {
    Interval,
    Sg,
    SgLattice,
    Pcf,
    LatticeGroup,
}

#[derive(Args)]
struct BuildArgs {
    /// Builder JSON, e.g. {"builder": "sg", "level": 3}. Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    builder: Option<BuilderKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    dirichlet: bool,
    #[arg(long)]
    level: Option<u32>,
    /// IFS description for the pcf builder.
    #[arg(long)]
    ifs: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    metric: Option<MetricSource>,
    /// Comma-separated boundary vertices, replacing the builder's.
    #[arg(long, value_delimiter = ',')]
    boundary: Option<Vec<usize>>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Csv,
    Binary,
}

#[derive(Args)]
struct ResistanceArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: MatrixFormat,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    space: PathBuf,
    /// One-column CSV of vertex values.
    #[arg(long)]
    function: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value = "unbounded")]
    variant: ProductVariant,
    /// Also report the Nash functional with this dimension parameter.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    space: PathBuf,
    /// Write the volume-fit residual table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    poincare_gamma: Option<f64>,
    /// Nash estimates as THETA:VARIANT, e.g. 1.5:global.
    #[arg(long)]
    nash: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MinimizeArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value = "unbounded")]
    variant: ProductVariant,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the minimizer as a one-column CSV.
    #[arg(long)]
    minimizer: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
    /// Only validate the config.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Validation(_)) => EXIT_VALIDATION,
        Some(Error::Capacity { .. }) => EXIT_CAPACITY,
        _ => EXIT_FAILURE,
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Build(a) => build(a),
        Command::Resistance(a) => resistance(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify(a),
        Command::Minimize(a) => minimize(a),
        Command::Run(a) => run(a),
    }
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_space(path: &Path) -> anyhow::Result<MetricMeasureSpace> {
    io::read_space(path).with_context(|| format!("reading space {}", path.display()))
}

fn builder_spec(a: &BuildArgs) -> anyhow::Result<BuilderSpec> {
    let base: Option<BuilderSpec> = match &a.config {
        Some(p) => Some(serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let kind = match (a.builder, &base) {
        (Some(k), _) => k,
        (None, Some(BuilderSpec::Interval { .. })) => BuilderKind::Interval,
        (None, Some(BuilderSpec::Sg { .. })) => BuilderKind::Sg,
        (None, Some(BuilderSpec::SgLattice { .. })) => BuilderKind::SgLattice,
        (None, Some(BuilderSpec::Pcf { .. })) => BuilderKind::Pcf,
        (None, Some(BuilderSpec::LatticeGroup { .. })) => BuilderKind::LatticeGroup,
        (None, None) => bail!(Error::Validation(vec!["build: --builder or --config is required".into()])),
    };
    let missing = |field: &str| Error::Validation(vec![format!("build: --{field} is required")]);
    let base_level = base.as_ref().and_then(BuilderSpec::level);
    Ok(match kind {
        BuilderKind::Interval => {
            let (bn, bl, bd) = match base {
                Some(BuilderSpec::Interval { n, length, dirichlet_ends }) => (Some(n), Some(length), dirichlet_ends),
                _ => (None, None, false),
            };
            BuilderSpec::Interval {
                n: a.n.or(bn).ok_or_else(|| missing("n"))?,
                length: a.length.or(bl).ok_or_else(|| missing("length"))?,
                dirichlet_ends: a.dirichlet || bd,
            }
        }
        BuilderKind::Sg => BuilderSpec::Sg {
            level: a.level.or(base_level).ok_or_else(|| missing("level"))?,
        },
        BuilderKind::SgLattice => BuilderSpec::SgLattice {
            level: a.level.or(base_level).ok_or_else(|| missing("level"))?,
        },
        BuilderKind::Pcf => {
            let mut ifs: IfsSpec = match (&a.ifs, base) {
                (Some(p), _) => serde_json::from_str(&fs::read_to_string(p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                (None, Some(BuilderSpec::Pcf { ifs })) => ifs,
                _ => return Err(missing("ifs").into()),
            };
            if let Some(level) = a.level {
                ifs.level = level;
            }
            BuilderSpec::Pcf { ifs }
        }
        BuilderKind::LatticeGroup => {
            let (bd, bs) = match base {
                Some(BuilderSpec::LatticeGroup { dim, side }) => (Some(dim), Some(side)),
                _ => (None, None),
            };
            BuilderSpec::LatticeGroup {
                dim: a.dim.or(bd).ok_or_else(|| missing("dim"))?,
                side: a.side.or(bs).ok_or_else(|| missing("side"))?,
            }
        }
    })
}

fn build(a: BuildArgs) -> anyhow::Result<u8> {
    let spec = builder_spec(&a)?;
    let mut space = spec.build()?;
    if let Some(m) = a.metric {
        space = space.with_metric_source(m)?;
    }
    if let Some(b) = a.boundary {
        space = space.with_boundary(b)?;
    }
    io::write_space(&a.output, &space)?;
    eprintln!(
        "wrote {} ({} vertices, {} edges)",
        a.output.display(),
        space.len(),
        space.edges().len()
    );
    Ok(0)
}

fn resistance(a: ResistanceArgs) -> anyhow::Result<u8> {
    let space = load_space(&a.space)?;
    let m = resistance_matrix(&space)?;
    let file = fs::File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let out = std::io::BufWriter::new(file);
    match a.format {
        MatrixFormat::Csv => io::write_resistance_csv(out, &m)?,
        MatrixFormat::Binary => io::write_resistance_binary(out, &m)?,
    }
    Ok(0)
}

fn eval(a: EvalArgs) -> anyhow::Result<u8> {
    let space = load_space(&a.space)?;
    let u = io::read_function_csv(&a.function)?;
    u.check_aligned(&space)?;
    let norm = space::l2_norm(&space, &u)?;
    let energy = functionals::energy(&space, &u)?;
    let variance = functionals::variance(&space, &u, a.gamma)?;
    let mut out = json!({
        "gamma": a.gamma,
        "variant": a.variant,
        "l2_norm": norm,
        "energy": energy,
        "variance": variance,
    });
    if norm > 0.0 {
        let unit = space::normalize(&space, &u)?;
        out["product_normalized"] = json!(functionals::uncertainty_product(&space, &unit, a.gamma, a.variant)?);
    }
    if let Some(theta) = a.theta {
        out["theta"] = json!(theta);
        out["nash_functional"] = match functionals::nash_functional(&space, &u, theta, false) {
            Ok(v) => json!(v),
            Err(e) => json!(e.to_string()),
        };
    }
    emit(&io::to_json_string(&out), None)?;
    Ok(0)
}

fn parse_nash(s: &str) -> anyhow::Result<(f64, NashVariant)> {
    let (theta, variant) = s.split_once(':').unwrap_or((s, "global"));
    Ok((
        theta.parse().with_context(|| format!("bad theta in '{s}'"))?,
        variant.parse()?,
    ))
}

fn verify(a: VerifyArgs) -> anyhow::Result<u8> {
    let space = load_space(&a.space)?;
    let mut opts = VerifyOptions {
        poincare_gamma: a.poincare_gamma,
        nash: a.nash.iter().map(|s| parse_nash(s)).collect::<anyhow::Result<_>>()?,
        seed: a.seed,
        ..Default::default()
    };
    opts.nash_options.seed = a.seed;
    let mut report = verifier::verify(&space, &opts)?;
    if let Some(p) = &a.csv {
        io::write_residuals_csv(fs::File::create(p)?, &report.residuals)?;
        report.residuals.clear();
    }
    emit(&io::to_json_string(&report), a.output.as_deref())?;
    Ok(0)
}

fn minimize(a: MinimizeArgs) -> anyhow::Result<u8> {
    let space = load_space(&a.space)?;
    let d = OptimizerOptions::default();
    let opts = OptimizerOptions {
        starts: a.starts.unwrap_or(d.starts),
        max_iters: a.max_iters.unwrap_or(d.max_iters),
        tol: a.tol.unwrap_or(d.tol),
        seed: a.seed,
    };
    let result = minimize_product(&space, a.gamma, a.variant, &opts)?;
    if let Some(p) = &a.minimizer {
        io::write_function_csv(p, &result.minimizer)?;
    }
    emit(&io::to_json_string(&result), a.output.as_deref())?;
    Ok(if result.is_degenerate() { EXIT_DEGENERATE } else { 0 })
}

fn run(a: RunArgs) -> anyhow::Result<u8> {
    let mut config = ExperimentConfig::from_path(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if let Some(dir) = a.out_dir {
        config.output.dir = dir;
    } else if config.output.dir.is_relative() {
        // output paths in a config are relative to the config file
        if let Some(parent) = a.config.parent() {
            config.output.dir = parent.join(&config.output.dir);
        }
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(g) = a.gamma {
        config.gamma = GammaSetting::Fixed(g);
    }
    if let Some(s) = a.starts {
        config.optimizer.starts = s;
    }
    if let Some(p) = &config.space_path {
        if p.is_relative() {
            if let Some(parent) = a.config.parent() {
                config.space_path = Some(parent.join(p));
            }
        }
    }
    let validation = report::validate_config(&config);
    for w in &validation.warnings {
        eprintln!("warning: {w}");
    }
    if !validation.is_ok() {
        bail!(Error::Validation(validation.errors));
    }
    if a.check {
        return Ok(0);
    }
    let outcome = report::run_experiment(&config)?;
    for p in &outcome.written {
        eprintln!("wrote {}", p.display());
    }
    for rec in &outcome.report.experiments {
        for row in &rec.theorems {
            let level = rec.space.level.map(|m| format!(" m={m}")).unwrap_or_default();
            let bound = row
                .theorem_bound
                .map(|b| format!("{b:.6e}"))
                .unwrap_or_else(|| "n/a".into());
            eprintln!(
                "{}{}: product {:.6e}, bound {}, certified {}",
                row.theorem, level, row.result.product, bound, row.certified
            );
        }
    }
    Ok(outcome.exit_code() as u8)
}
