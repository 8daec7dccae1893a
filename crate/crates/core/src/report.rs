//! Config-driven experiments: build a space (or a sweep of levels), verify
//! hypotheses, evaluate theorem constants, minimize the products and write a
//! JSON report plus CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{self, IfsSpec};
use crate::error::{Error, Result};
use crate::functionals::ProductVariant;
use crate::io;
use crate::optimizer::{minimize_product, OptimizerOptions, UncertaintyResult};
use crate::space::{MetricMeasureSpace, MetricSource};
use crate::verifier::{
    self, estimate_poincare_constant, theorem_lower_bound, HypothesisReport, Theorem, TheoremParams, VerifyOptions,
};

/// Builder invocation inside a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum BuilderSpec {
    Interval {
        n: usize,
        length: f64,
        #[serde(default)]
        dirichlet_ends: bool,
    },
    Sg {
        level: u32,
    },
    SgLattice {
        level: u32,
    },
    Pcf {
        ifs: IfsSpec,
    },
    LatticeGroup {
        dim: usize,
        side: usize,
    },
}

impl BuilderSpec {
    pub fn build(&self) -> Result<MetricMeasureSpace> {
        match self {
            BuilderSpec::Interval { n, length, dirichlet_ends } => builders::build_interval(*n, *length, *dirichlet_ends),
            BuilderSpec::Sg { level } => builders::build_sg(*level),
            BuilderSpec::SgLattice { level } => builders::build_sg_lattice(*level),
            BuilderSpec::Pcf { ifs } => builders::build_pcf(ifs),
            BuilderSpec::LatticeGroup { dim, side } => builders::build_lattice_group(*dim, *side),
        }
    }

    pub fn level(&self) -> Option<u32> {
        match self {
            BuilderSpec::Sg { level } | BuilderSpec::SgLattice { level } => Some(*level),
            BuilderSpec::Pcf { ifs } => Some(ifs.level),
            _ => None,
        }
    }

    /// Same builder at another level, for level-indexed families.
    pub fn at_level(&self, level: u32) -> Option<BuilderSpec> {
        match self {
            BuilderSpec::Sg { .. } => Some(BuilderSpec::Sg { level }),
            BuilderSpec::SgLattice { .. } => Some(BuilderSpec::SgLattice { level }),
            BuilderSpec::Pcf { ifs } => {
                let mut ifs = ifs.clone();
                ifs.level = level;
                Some(BuilderSpec::Pcf { ifs })
            }
            _ => None,
        }
    }

    /// Whether the built space carries a Dirichlet boundary, i.e. stands for
    /// a truncation of an unbounded space.
    pub fn is_truncation(&self) -> bool {
        match self {
            BuilderSpec::Interval { dirichlet_ends, .. } => *dirichlet_ends,
            BuilderSpec::SgLattice { .. } | BuilderSpec::LatticeGroup { .. } => true,
            BuilderSpec::Sg { .. } | BuilderSpec::Pcf { .. } => false,
        }
    }
}

/// `"auto"` or a fixed exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
    Fixed(f64),
}

mod auto_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"auto\" or a number, got \"{s}\"")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub report: String,
    pub residuals: String,
    pub sweep: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            report: "report.json".into(),
            residuals: "residuals.csv".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub space: Option<BuilderSpec>,
    #[serde(default)]
    pub space_path: Option<PathBuf>,
    /// Runs the builder once per level.
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default)]
    pub metric_source: Option<MetricSource>,
    #[serde(default)]
    pub theorems: Vec<Theorem>,
    #[serde(default)]
    pub gamma: GammaSetting,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks a config without touching the filesystem. Variant/boundary
/// mismatches are warnings: they are legitimate experiments whose outcome
/// the optimizer flags.
pub fn validate_config(config: &ExperimentConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let err = |r: &mut ValidationReport, m: String| r.errors.push(m);
    match (&config.space, &config.space_path) {
        (None, None) => err(&mut r, "space: one of 'space' or 'space_path' is required".into()),
        (Some(_), Some(_)) => err(&mut r, "space: 'space' and 'space_path' are mutually exclusive".into()),
        _ => {}
    }
    if let Some(levels) = &config.levels {
        if levels.is_empty() {
            err(&mut r, "levels: empty sweep".into());
        }
        match &config.space {
            Some(b) if b.at_level(0).is_none() => {
                err(&mut r, "levels: the chosen builder has no level parameter".into())
            }
            None => err(&mut r, "levels: sweeps need a builder space".into()),
            _ => {}
        }
    }
    if config.theorems.is_empty() {
        err(&mut r, "theorems: empty theorem list".into());
    }
    if let GammaSetting::Fixed(g) = config.gamma {
        if !(g > 0.0 && g.is_finite()) {
            err(&mut r, format!("gamma: must be positive, got {g}"));
        }
    }
    if let Some(t) = config.theta {
        if !(t > 0.0 && t.is_finite()) {
            err(&mut r, format!("theta: must be positive, got {t}"));
        }
    }
    if let Some(c0) = config.c0 {
        if !(c0 > 0.0 && c0.is_finite()) {
            err(&mut r, format!("c0: must be positive, got {c0}"));
        }
    }
    let opt = &config.optimizer;
    if opt.max_iters == 0 {
        err(&mut r, "optimizer.max_iters: must be positive".into());
    }
    if !(opt.tol > 0.0) {
        err(&mut r, format!("optimizer.tol: must be positive, got {}", opt.tol));
    }
    if config.metric_source == Some(MetricSource::Precomputed) {
        err(&mut r, "metric_source: 'precomputed' needs a space file carrying the matrix".into());
    }
    for t in &config.theorems {
        if t.nash_variant().is_some() {
            match config.theta {
                None => err(
                    &mut r,
                    format!("theta: theorem {t} needs a Nash dimension parameter theta"),
                ),
                Some(theta) if theta >= 2.0 && matches!(t, Theorem::Nash | Theorem::LocalNash) => {
                    err(&mut r, format!("theta: theorem {t} needs theta < 2, got {theta}"))
                }
                _ => {}
            }
        }
        if t.requires_resistance_metric() {
            if let Some(m) = config.metric_source {
                if m != MetricSource::EffectiveResistance {
                    err(
                        &mut r,
                        format!("metric_source: theorem {t} needs effective_resistance, got {}", m.as_str()),
                    );
                }
            }
        }
        if let Some(b) = &config.space {
            let v = t.variant();
            if b.is_truncation() && v == ProductVariant::BoundedEnergy {
                r.warnings.push(format!(
                    "theorem {t} ({v}) is stated for bounded spaces but the space is a truncation with boundary"
                ));
            }
            if !b.is_truncation() && v != ProductVariant::BoundedEnergy {
                r.warnings.push(format!(
                    "theorem {t} ({v}) on a compact space without boundary: constants are admissible"
                ));
            }
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub builder: String,
    pub level: Option<u32>,
    pub vertices: usize,
    pub edges: usize,
    pub boundary_vertices: usize,
    pub metric_source: MetricSource,
    pub total_measure: f64,
    pub diameter: f64,
}

impl SpaceSummary {
    fn of(space: &MetricMeasureSpace) -> Result<Self> {
        Ok(Self {
            builder: space.metadata().builder.clone(),
            level: space.metadata().level,
            vertices: space.len(),
            edges: space.edges().len(),
            boundary_vertices: space.boundary().len(),
            metric_source: space.metric_source(),
            total_measure: space.total_measure(),
            diameter: space.distance()?.diameter(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremRow {
    pub theorem: Theorem,
    pub variant: ProductVariant,
    pub gamma: f64,
    pub theorem_bound: Option<f64>,
    /// Why no bound could be evaluated.
    pub bound_error: Option<String>,
    pub result: UncertaintyResult,
    pub gap_ratio: Option<f64>,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub space: SpaceSummary,
    /// Residuals are written to CSV, not repeated here.
    pub hypotheses: HypothesisReport,
    pub theorems: Vec<TheoremRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Certified,
    Degenerate,
    CertificationFailure,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Certified => 0,
            RunStatus::Degenerate => 4,
            RunStatus::CertificationFailure => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
    pub experiments: Vec<ExperimentRecord>,
    pub status: RunStatus,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub residuals: Vec<Vec<verifier::ResidualRow>>,
    pub written: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code()
    }
}

fn load_spaces(config: &ExperimentConfig) -> Result<Vec<MetricMeasureSpace>> {
    let mut spaces = match (&config.space, &config.space_path) {
        (Some(b), None) => match &config.levels {
            Some(levels) => levels
                .par_iter()
                .map(|&m| b.at_level(m).expect("validated").build())
                .collect::<Result<Vec<_>>>()?,
            None => vec![b.build()?],
        },
        (None, Some(p)) => vec![io::read_space(p)?],
        _ => unreachable!("validated"),
    };
    if let Some(m) = config.metric_source {
        spaces = spaces
            .into_iter()
            .map(|s| s.with_metric_source(m))
            .collect::<Result<_>>()?;
    }
    Ok(spaces)
}

fn run_one(config: &ExperimentConfig, space: &MetricMeasureSpace) -> Result<ExperimentRecord> {
    let nash: Vec<_> = config
        .theorems
        .iter()
        .filter_map(|t| t.nash_variant().map(|v| (config.theta.expect("validated"), v)))
        .collect();
    let mut vopts = VerifyOptions {
        nash,
        seed: config.seed,
        ..Default::default()
    };
    vopts.nash_options.seed = config.seed;
    let mut report = verifier::verify(space, &vopts)?;
    if config.theorems.iter().any(|t| t.uses_poincare()) {
        let gamma = match config.gamma {
            GammaSetting::Fixed(g) => g,
            GammaSetting::Auto => report.b + 1.0,
        };
        let centers = verifier::default_centers(space, config.seed);
        let radii = verifier::default_radii(space, verifier::DEFAULT_RADIUS_RATIO)?;
        report.poincare = Some(estimate_poincare_constant(space, gamma, &centers, &radii)?);
    }
    let params = TheoremParams {
        c0: config.c0,
        theta: config.theta,
    };
    let mut opts = config.optimizer;
    opts.seed = config.seed;
    let theorems = config
        .theorems
        .iter()
        .map(|&t| {
            let gamma = match config.gamma {
                GammaSetting::Fixed(g) => g,
                GammaSetting::Auto => t.gamma(&report, config.theta)?,
            };
            let variant = t.variant();
            let result = minimize_product(space, gamma, variant, &opts)?;
            let (bound, bound_error) = match theorem_lower_bound(&report, t, &params) {
                Ok(b) => (Some(b), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let result = match bound {
                Some(b) => result.with_bound(b),
                None => result,
            };
            let certified = bound.is_some_and(|b| result.product >= b) && !result.is_degenerate();
            Ok(TheoremRow {
                theorem: t,
                variant,
                gamma,
                theorem_bound: bound,
                bound_error,
                gap_ratio: result.gap_ratio,
                result,
                certified,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRecord {
        space: SpaceSummary::of(space)?,
        hypotheses: report,
        theorems,
    })
}

/// The config as echoed in a report. Output locations are dropped so the
/// report does not depend on where it is written.
fn echoed_config(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        output: OutputPaths::default(),
        ..config.clone()
    }
}

/// Runs the pipeline and returns the report without writing files.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<(ExperimentReport, Vec<Vec<verifier::ResidualRow>>)> {
    let validation = validate_config(config);
    if !validation.is_ok() {
        return Err(Error::Validation(validation.errors));
    }
    let spaces = load_spaces(config)?;
    let mut records = spaces
        .par_iter()
        .map(|s| run_one(config, s))
        .collect::<Result<Vec<_>>>()?;
    let residuals: Vec<_> = records
        .iter_mut()
        .map(|r| std::mem::take(&mut r.hypotheses.residuals))
        .collect();
    let rows = records.iter().flat_map(|r| &r.theorems);
    let status = if rows.clone().any(|row| row.result.is_degenerate()) {
        RunStatus::Degenerate
    } else if rows.clone().all(|row| row.certified) {
        RunStatus::Certified
    } else {
        RunStatus::CertificationFailure
    };
    Ok((
        ExperimentReport {
            config: echoed_config(config),
            warnings: validation.warnings,
            experiments: records,
            status,
        },
        residuals,
    ))
}

/// Runs the pipeline and writes the report, the volume-fit residuals and,
/// for level sweeps, the product-versus-level table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (report, residuals) = run_in_memory(config)?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join(&config.output.report);
    fs::write(&path, report_json(&report))?;
    written.push(path);

    for (i, (rec, rows)) in report.experiments.iter().zip(&residuals).enumerate() {
        let name = if report.experiments.len() == 1 {
            config.output.residuals.clone()
        } else {
            suffixed(&config.output.residuals, rec.space.level.map(|m| m as usize).unwrap_or(i))
        };
        let path = dir.join(name);
        io::write_residuals_csv(fs::File::create(&path)?, rows)?;
        written.push(path);
    }

    if config.levels.is_some() {
        let path = dir.join(&config.output.sweep);
        write_sweep_csv(fs::File::create(&path)?, &report)?;
        written.push(path);
    }
    Ok(ExperimentOutcome {
        report,
        residuals,
        written,
    })
}

pub fn report_json(report: &ExperimentReport) -> String {
    io::to_json_string(report)
}

fn suffixed(name: &str, level: usize) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_m{level}.{ext}"),
        None => format!("{name}_m{level}"),
    }
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "theorem", "variant", "gamma", "product", "bound", "certified"])?;
    for rec in &report.experiments {
        for row in &rec.theorems {
            w.write_record([
                rec.space.level.map(|m| m.to_string()).unwrap_or_default(),
                row.theorem.to_string(),
                row.variant.to_string(),
                io::fmt_float(row.gamma),
                io::fmt_float(row.result.product),
                row.theorem_bound.map(io::fmt_float).unwrap_or_default(),
                row.certified.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
