//! End-to-end pipelines behind the `robust-evt` binary.
//!
//! Two pipelines share one skeleton. The naive pipeline reads a numeric
//! column, reduces it to block maxima, fits a GEV model by maximum
//! likelihood, and reports the return level x_p solving Ḡ(x) = 1 − u at each
//! requested probability level, where u = pⁿ for block size n (or u = p when
//! the input rows already are maxima). The robust pipeline additionally
//! resolves a divergence neighborhood (order α and radius δ, either given or
//! estimated from the data) and reports the worst-case quantile x̂_p over
//! that neighborhood next to the naive one, so the gap between the columns
//! is the price of distrust in the fitted model.
//!
//! Everything here is deterministic: all randomness (model draws for the
//! radius estimate) flows from the single `--seed` through counter-based
//! streams, and identical invocations produce byte-identical output.
//!
//! Exit codes: 0 success, 2 input/parse/configuration error, 3 fit
//! non-convergence, 4 infeasible robust solve (including α/δ resolutions
//! that the fitted shape cannot support).

use std::error::Error as _;
use std::fs;
use std::io::Write as _;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::asymptotics::{self, AsymptoticsError};
use crate::divergence::{knn_divergence, DivergenceError, DivergenceSpec};
use crate::fit::{self, FitError, FitResult};
use crate::gev::{gev_sample, GevError, GevParams};
use crate::rng::{stream_rng, STREAM_MODEL_DRAWS};
use crate::worstcase::{worst_case_quantile, WorstCaseError};

/// Pipeline failures, each mapped onto the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{row}: cannot parse {text:?} as a number")]
    Parse { path: String, row: usize, text: String },
    #[error("{path}:{row}: non-finite value {value}")]
    NonFiniteValue { path: String, row: usize, value: f64 },
    #[error("{path}: column {column:?} not found in header")]
    MissingColumn { path: String, column: String },
    #[error("{path}: no data rows in column {column:?}")]
    EmptyColumn { path: String, column: String },
    #[error("invalid configuration: {message}")]
    Config { message: String },
    #[error("fit did not converge on {m} block maxima; try a different block size")]
    FitNotConverged { m: usize },
    #[error(
        "order selection requires a heavy-tailed fit (shape > 0), got shape {gamma0}; \
         supply --alpha explicitly"
    )]
    ShapeNotHeavy { gamma0: f64 },
    #[error(
        "target worst-case shape {target} must exceed the fitted shape {gamma0} (itself > 0); \
         supply --alpha explicitly"
    )]
    ShapeTargetInfeasible { target: f64, gamma0: f64 },
    #[error("cannot serialize output: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Gev(#[from] GevError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    WorstCase(#[from] WorstCaseError),
}

impl CliError {
    /// 2 input/parse/configuration, 3 fit non-convergence, 4 infeasible
    /// robust solve.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. }
            | CliError::Output { .. }
            | CliError::Parse { .. }
            | CliError::NonFiniteValue { .. }
            | CliError::MissingColumn { .. }
            | CliError::EmptyColumn { .. }
            | CliError::Config { .. }
            | CliError::Serialize(_)
            | CliError::Fit(_)
            | CliError::Gev(_) => 2,
            CliError::FitNotConverged { .. } => 3,
            CliError::ShapeNotHeavy { .. }
            | CliError::ShapeTargetInfeasible { .. }
            | CliError::Divergence(_)
            | CliError::Asymptotics(_)
            | CliError::WorstCase(_) => 4,
        }
    }
}

/// Block size: an explicit count, or one twentieth of the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSizeSpec {
    Count(usize),
    Auto,
}

/// Divergence order: a number, or back it out of the shape confidence
/// interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Value(f64),
    FromCi,
}

/// Neighborhood radius: a number, or a two-sample estimate against draws
/// from the fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    Value(f64),
    Estimate,
}

/// One resolved pipeline configuration; see the flag docs on the binary for
/// field meanings.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub block_size: BlockSizeSpec,
    pub levels: Vec<f64>,
    pub alpha: Option<AlphaSpec>,
    /// Target worst-case shape γ*; resolves α = γ*/(γ* − γ̂) when the fitted
    /// shape allows it. Mutually exclusive with `alpha`.
    pub gamma_star_target: Option<f64>,
    pub delta: Option<DeltaSpec>,
    pub knn_k: usize,
    pub model_sample_factor: usize,
    pub seed: u64,
    pub already_maxima: bool,
    pub confidence: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            block_size: BlockSizeSpec::Auto,
            levels: Vec::new(),
            alpha: None,
            gamma_star_target: None,
            delta: None,
            knn_k: 5,
            model_sample_factor: 10,
            seed: 0,
            already_maxima: false,
            confidence: 0.95,
        }
    }
}

impl PipelineConfig {
    fn validate(&self, require_levels: bool) -> Result<(), CliError> {
        let bad = |message: String| Err(CliError::Config { message });
        if require_levels && self.levels.is_empty() {
            return bad("at least one --level is required".into());
        }
        for &p in &self.levels {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("--level {p} must lie strictly inside (0,1)"));
            }
        }
        if let BlockSizeSpec::Count(0) = self.block_size {
            return bad("--block-size must be at least 1".into());
        }
        if let Some(AlphaSpec::Value(a)) = self.alpha {
            if !(a.is_finite() && a >= 1.0) {
                return bad(format!("--alpha {a} must be a finite number ≥ 1"));
            }
        }
        if self.alpha.is_some() && self.gamma_star_target.is_some() {
            return bad("--alpha and --gamma-star are mutually exclusive".into());
        }
        if let Some(g) = self.gamma_star_target {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("--gamma-star {g} must be a finite number > 0"));
            }
        }
        if let Some(DeltaSpec::Value(d)) = self.delta {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("--delta {d} must be a finite number ≥ 0"));
            }
        }
        if self.knn_k == 0 {
            return bad("--knn-k must be at least 1".into());
        }
        if self.model_sample_factor == 0 {
            return bad("model sample factor must be at least 1".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!(
                "--confidence {} must lie strictly inside (0,1)",
                self.confidence
            ));
        }
        Ok(())
    }
}

/// One output row: probability level, resolved target, naive and worst-case
/// levels, and the confidence band on the naive level.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub p: f64,
    pub u: f64,
    pub naive: f64,
    pub robust: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Every configuration resolution the run actually used. Neighborhood fields
/// are `None` on naive runs; `gamma_star` is `None` when the worst-case
/// family has no power-law index (KL over a light tail).
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub shape: f64,
    pub scale: f64,
    pub location: f64,
    pub block_size: usize,
    pub block_count: usize,
    pub already_maxima: bool,
    pub confidence: f64,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_bar: Option<f64>,
    pub gamma_star: Option<f64>,
    pub knn_k: Option<usize>,
    pub model_sample_factor: usize,
    pub seed: u64,
}

/// Plot-ready return-level data plus the provenance block that makes the run
/// reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnLevelCurve {
    pub rows: Vec<CurveRow>,
    pub provenance: Provenance,
}

/// Fit report for the `fit` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub shape: f64,
    pub scale: f64,
    pub location: f64,
    pub shape_ci_low: f64,
    pub shape_ci_high: f64,
    pub confidence: f64,
    pub log_likelihood: f64,
    pub block_size: usize,
    pub block_count: usize,
    pub dropped_tail_count: usize,
    pub small_sample: bool,
    pub covariance: [[f64; 3]; 3],
}

/// Reads one numeric column from a delimited text file.
///
/// `column` is a 1-based index or a header name. A single non-numeric first
/// row is treated as a header; with a named column the header is required.
/// Blank or malformed cells and non-finite values are rejected with the
/// 1-based row number.
pub fn ingest_csv(path: &str, column: &str) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().collect();
    let split = |line: &str| -> Vec<String> {
        line.split(',').map(|c| c.trim().to_string()).collect()
    };
    let first = lines
        .first()
        .map(|l| split(l))
        .ok_or_else(|| CliError::EmptyColumn {
            path: path.to_string(),
            column: column.to_string(),
        })?;
    let (index, start_row) = match column.parse::<usize>() {
        Ok(0) => {
            return Err(CliError::Config {
                message: "--column index is 1-based; 0 is not a column".into(),
            })
        }
        Ok(i) => {
            // Skip a single header row when its target cell is not numeric.
            let header = first
                .get(i - 1)
                .map(|c| c.parse::<f64>().is_err())
                .unwrap_or(false);
            (i - 1, if header { 1 } else { 0 })
        }
        Err(_) => {
            let index = first
                .iter()
                .position(|h| h == column)
                .ok_or_else(|| CliError::MissingColumn {
                    path: path.to_string(),
                    column: column.to_string(),
                })?;
            (index, 1)
        }
    };
    let mut values = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(start_row) {
        let row = i + 1;
        // A trailing blank line is tolerated; a blank line mid-column is a
        // parse error at that row.
        if line.trim().is_empty() && i + 1 == lines.len() {
            break;
        }
        let fields = split(line);
        let cell = fields.get(index).cloned().unwrap_or_default();
        let value: f64 = cell.parse().map_err(|_| CliError::Parse {
            path: path.to_string(),
            row,
            text: cell.clone(),
        })?;
        if !value.is_finite() {
            return Err(CliError::NonFiniteValue {
                path: path.to_string(),
                row,
                value,
            });
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(CliError::EmptyColumn {
            path: path.to_string(),
            column: column.to_string(),
        });
    }
    Ok(values)
}

/// Shared front half of every pipeline: maxima extraction and the MLE fit.
struct Prepared {
    maxima: Vec<f64>,
    block_size: usize,
    /// Exponent in u = pⁿ; 1 when the input already is maxima.
    exponent: f64,
    dropped: usize,
    fit: FitResult,
}

fn prepare(data: &[f64], config: &PipelineConfig) -> Result<Prepared, CliError> {
    let (maxima, block_size, dropped) = if config.already_maxima {
        (data.to_vec(), 1, 0)
    } else {
        let n = match config.block_size {
            BlockSizeSpec::Count(c) => c,
            BlockSizeSpec::Auto => (data.len() / 20).max(1),
        };
        let blocks = fit::block_maxima(data, n)?;
        (blocks.maxima, blocks.block_size, blocks.dropped_tail_count)
    };
    if maxima.len() < 20 {
        eprintln!(
            "warning: only {} block maxima; extreme value asymptotics are unreliable below 20",
            maxima.len()
        );
    }
    let fit = fit::fit_gev_mle_with_confidence(&maxima, config.confidence)?;
    if !fit.converged {
        return Err(CliError::FitNotConverged { m: maxima.len() });
    }
    let exponent = if config.already_maxima {
        1.0
    } else {
        block_size as f64
    };
    Ok(Prepared {
        maxima,
        block_size,
        exponent,
        dropped,
        fit,
    })
}

/// Return-level rows for a fitted model: naive level, delta-method band, and
/// (when a neighborhood is given) the worst-case level. Levels are sorted
/// ascending; the worst-case column dominates the naive one row-wise.
pub fn curve_from_model(
    params: &GevParams,
    covariance: &[[f64; 3]; 3],
    levels: &[f64],
    exponent: f64,
    ball: Option<&DivergenceSpec>,
    confidence: f64,
) -> Result<Vec<CurveRow>, CliError> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0);
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut rows = Vec::with_capacity(sorted.len());
    for p in sorted {
        let u = p.powf(exponent);
        let naive = crate::gev::gev_quantile(u, params)?;
        let years = 1.0 / (1.0 - u);
        let se = fit::return_level_stderr(params, covariance, years)?;
        let robust = match ball {
            Some(spec) => Some(worst_case_quantile(u, params, spec)?),
            None => None,
        };
        rows.push(CurveRow {
            p,
            u,
            naive,
            robust,
            ci_low: naive - z * se,
            ci_high: naive + z * se,
        });
    }
    Ok(rows)
}

/// Baseline pipeline: block maxima → MLE → return levels per requested
/// probability, with the worst-case column left empty.
pub fn run_naive(data: &[f64], config: &PipelineConfig) -> Result<ReturnLevelCurve, CliError> {
    config.validate(true)?;
    let prep = prepare(data, config)?;
    let rows = curve_from_model(
        &prep.fit.params,
        &prep.fit.covariance,
        &config.levels,
        prep.exponent,
        None,
        config.confidence,
    )?;
    Ok(ReturnLevelCurve {
        rows,
        provenance: Provenance {
            shape: prep.fit.params.shape,
            scale: prep.fit.params.scale,
            location: prep.fit.params.location,
            block_size: prep.block_size,
            block_count: prep.maxima.len(),
            already_maxima: config.already_maxima,
            confidence: config.confidence,
            alpha: None,
            delta: None,
            delta_bar: None,
            gamma_star: None,
            knn_k: None,
            model_sample_factor: config.model_sample_factor,
            seed: config.seed,
        },
    })
}

fn resolve_alpha(config: &PipelineConfig, fit: &FitResult) -> Result<f64, CliError> {
    let gamma0 = fit.params.shape;
    if let Some(target) = config.gamma_star_target {
        if !(gamma0 > 0.0 && target > gamma0) {
            return Err(CliError::ShapeTargetInfeasible { target, gamma0 });
        }
        return Ok(target / (target - gamma0));
    }
    match config.alpha {
        Some(AlphaSpec::Value(a)) => Ok(a),
        Some(AlphaSpec::FromCi) => {
            if !(gamma0 > 0.0) {
                return Err(CliError::ShapeNotHeavy { gamma0 });
            }
            let half_width = 0.5 * (fit.gamma_ci.1 - fit.gamma_ci.0);
            Ok(asymptotics::choose_alpha(gamma0, half_width)?)
        }
        None => Err(CliError::Config {
            message: "the robust pipeline needs --alpha (or --gamma-star)".into(),
        }),
    }
}

/// Resolves the radius; returns the estimate together with the neighbor
/// order actually used when it came from data.
fn resolve_delta(
    config: &PipelineConfig,
    prep: &Prepared,
    alpha: f64,
) -> Result<(f64, Option<usize>), CliError> {
    match config.delta {
        Some(DeltaSpec::Value(d)) => Ok((d, None)),
        Some(DeltaSpec::Estimate) => {
            // The power-mean estimator needs α < k+1, so a too-small
            // requested order is raised to the smallest valid one.
            let k_floor = (alpha - 1.0).floor() as usize + 1;
            let k = config.knn_k.max(k_floor);
            let draws = config.model_sample_factor * prep.maxima.len();
            let mut rng = stream_rng(config.seed, STREAM_MODEL_DRAWS);
            let model: Vec<f64> = (0..draws)
                .map(|_| gev_sample(&prep.fit.params, &mut rng))
                .collect();
            let d = knn_divergence(&prep.maxima, &model, k, alpha)?;
            Ok((d, Some(k)))
        }
        None => Err(CliError::Config {
            message: "the robust pipeline needs --delta (a radius or \"estimate\")".into(),
        }),
    }
}

/// Robust pipeline: the naive pipeline plus neighborhood resolution and the
/// worst-case quantile per level.
pub fn run_robust(data: &[f64], config: &PipelineConfig) -> Result<ReturnLevelCurve, CliError> {
    config.validate(true)?;
    let prep = prepare(data, config)?;
    let alpha = resolve_alpha(config, &prep.fit)?;
    let (delta, knn_used) = resolve_delta(config, &prep, alpha)?;
    let spec = DivergenceSpec::new(alpha, delta)?;
    let rows = curve_from_model(
        &prep.fit.params,
        &prep.fit.covariance,
        &config.levels,
        prep.exponent,
        Some(&spec),
        config.confidence,
    )?;
    let gamma_star = asymptotics::gamma_star(alpha, prep.fit.params.shape).gamma_star();
    Ok(ReturnLevelCurve {
        rows,
        provenance: Provenance {
            shape: prep.fit.params.shape,
            scale: prep.fit.params.scale,
            location: prep.fit.params.location,
            block_size: prep.block_size,
            block_count: prep.maxima.len(),
            already_maxima: config.already_maxima,
            confidence: config.confidence,
            alpha: Some(alpha),
            delta: Some(delta),
            delta_bar: Some(spec.delta_bar()),
            gamma_star,
            knn_k: knn_used,
            model_sample_factor: config.model_sample_factor,
            seed: config.seed,
        },
    })
}

/// Fit pipeline: maxima extraction and the MLE report, no return levels.
pub fn run_fit(data: &[f64], config: &PipelineConfig) -> Result<FitReport, CliError> {
    config.validate(false)?;
    let prep = prepare(data, config)?;
    Ok(FitReport {
        shape: prep.fit.params.shape,
        scale: prep.fit.params.scale,
        location: prep.fit.params.location,
        shape_ci_low: prep.fit.gamma_ci.0,
        shape_ci_high: prep.fit.gamma_ci.1,
        confidence: prep.fit.confidence,
        log_likelihood: prep.fit.log_likelihood,
        block_size: prep.block_size,
        block_count: prep.maxima.len(),
        dropped_tail_count: prep.dropped,
        small_sample: prep.fit.small_sample,
        covariance: prep.fit.covariance,
    })
}

/// Output format for curves and fit reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Plain decimal with 16 significant digits, so values round-trip well past
/// the contract's 10.
fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let precision = (15 - magnitude).clamp(0, 30) as usize;
    format!("{v:.precision$}")
}

/// Renders a curve in the requested format; both renderings are
/// byte-deterministic functions of the curve.
pub fn render_curve(curve: &ReturnLevelCurve, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(curve)?;
            text.push('\n');
            Ok(text)
        }
        OutputFormat::Csv => {
            let mut out = String::from("p,u,naive,robust,ci_low,ci_high\n");
            for row in &curve.rows {
                let robust = row.robust.map(format_number).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    format_number(row.p),
                    format_number(row.u),
                    format_number(row.naive),
                    robust,
                    format_number(row.ci_low),
                    format_number(row.ci_high),
                ));
            }
            Ok(out)
        }
    }
}

fn render_fit_report(report: &FitReport, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            Ok(text)
        }
        OutputFormat::Csv => {
            let mut out = String::from("key,value\n");
            let mut push = |key: &str, value: String| {
                out.push_str(key);
                out.push(',');
                out.push_str(&value);
                out.push('\n');
            };
            push("shape", format_number(report.shape));
            push("scale", format_number(report.scale));
            push("location", format_number(report.location));
            push("shape_ci_low", format_number(report.shape_ci_low));
            push("shape_ci_high", format_number(report.shape_ci_high));
            push("confidence", format_number(report.confidence));
            push("log_likelihood", format_number(report.log_likelihood));
            push("block_size", report.block_size.to_string());
            push("block_count", report.block_count.to_string());
            push("dropped_tail_count", report.dropped_tail_count.to_string());
            push("small_sample", report.small_sample.to_string());
            let names = ["shape", "scale", "location"];
            for i in 0..3 {
                for j in 0..3 {
                    push(
                        &format!("covariance_{}_{}", names[i], names[j]),
                        format_number(report.covariance[i][j]),
                    );
                }
            }
            Ok(out)
        }
    }
}

fn write_output(text: &str, path: Option<&str>) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Output {
            path: path.to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|source| CliError::Output {
                    path: "<stdout>".to_string(),
                    source,
                })
        }
    }
}

/// Writes a rendered curve to `path`, or stdout when `path` is `None`.
pub fn emit_curve(
    curve: &ReturnLevelCurve,
    format: OutputFormat,
    path: Option<&str>,
) -> Result<(), CliError> {
    write_output(&render_curve(curve, format)?, path)
}

#[derive(Parser)]
#[command(
    name = "robust-evt",
    version,
    about = "Distributionally robust extreme value analysis",
    long_about = "Calibrates a GEV model to block maxima and reports extreme quantiles, \
                  naive and worst-case over a divergence neighborhood of the fitted model."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a GEV model to block maxima and report parameters and uncertainty
    Fit(PipelineArgs),
    /// Return levels from the fitted model alone
    Naive(PipelineArgs),
    /// Naive and worst-case return levels over a divergence neighborhood
    Robust(PipelineArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Input file: delimited text with one numeric column of interest
    #[arg(long)]
    input: String,
    /// Column to read: 1-based index or header name
    #[arg(long, default_value = "1")]
    column: String,
    /// Block size for maxima extraction: a count, or "auto" for N/20
    /// (ignored with --already-maxima)
    #[arg(long, default_value = "auto")]
    block_size: String,
    /// Probability level p in (0,1); repeat for several levels
    #[arg(long = "level")]
    levels: Vec<f64>,
    /// Divergence order: a number ≥ 1, or "from-ci" to derive it from the
    /// shape confidence interval
    #[arg(long)]
    alpha: Option<String>,
    /// Target worst-case shape; picks the order α = γ*/(γ* − γ̂)
    #[arg(long, conflicts_with = "alpha")]
    gamma_star: Option<f64>,
    /// Neighborhood radius: a number ≥ 0, or "estimate" for a two-sample
    /// estimate between the maxima and the fitted model
    #[arg(long)]
    delta: Option<String>,
    /// Neighbor order for the radius estimate
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input rows are already block maxima; targets use u = p instead of pⁿ
    #[arg(long)]
    already_maxima: bool,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Output path; stdout when omitted
    #[arg(long)]
    output: Option<String>,
    /// Confidence level for intervals
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let block_size = if self.block_size == "auto" {
            BlockSizeSpec::Auto
        } else {
            match self.block_size.parse::<usize>() {
                Ok(n) => BlockSizeSpec::Count(n),
                Err(_) => {
                    return Err(CliError::Config {
                        message: format!(
                            "--block-size {:?} must be a positive integer or \"auto\"",
                            self.block_size
                        ),
                    })
                }
            }
        };
        let alpha = match self.alpha.as_deref() {
            None => None,
            Some("from-ci") => Some(AlphaSpec::FromCi),
            Some(text) => match text.parse::<f64>() {
                Ok(a) => Some(AlphaSpec::Value(a)),
                Err(_) => {
                    return Err(CliError::Config {
                        message: format!("--alpha {text:?} must be a number or \"from-ci\""),
                    })
                }
            },
        };
        let delta = match self.delta.as_deref() {
            None => None,
            Some("estimate") => Some(DeltaSpec::Estimate),
            Some(text) => match text.parse::<f64>() {
                Ok(d) => Some(DeltaSpec::Value(d)),
                Err(_) => {
                    return Err(CliError::Config {
                        message: format!("--delta {text:?} must be a number or \"estimate\""),
                    })
                }
            },
        };
        Ok(PipelineConfig {
            block_size,
            levels: self.levels.clone(),
            alpha,
            gamma_star_target: self.gamma_star,
            delta,
            knn_k: self.knn_k,
            model_sample_factor: 10,
            seed: self.seed,
            already_maxima: self.already_maxima,
            confidence: self.confidence,
        })
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let args = match &cli.command {
        Command::Fit(a) | Command::Naive(a) | Command::Robust(a) => a,
    };
    let config = args.config()?;
    let data = ingest_csv(&args.input, &args.column)?;
    let text = match &cli.command {
        Command::Fit(_) => render_fit_report(&run_fit(&data, &config)?, args.format)?,
        Command::Naive(_) => render_curve(&run_naive(&data, &config)?, args.format)?,
        Command::Robust(_) => render_curve(&run_robust(&data, &config)?, args.format)?,
    };
    write_output(&text, args.output.as_deref())
}

/// Binary entry point: parses arguments, runs the pipeline, reports errors
/// on stderr, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_SYNTHETIC_DATA;

    fn sample_gev(params: &GevParams, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, STREAM_SYNTHETIC_DATA);
        (0..count).map(|_| gev_sample(params, &mut rng)).collect()
    }

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    #[test]
    fn ingest_reads_headerless_single_column() {
        let file = temp_file("1.5\n2.5\n-3.0\n");
        let path = file.path().to_str().unwrap();
        assert_eq!(ingest_csv(path, "1").unwrap(), vec![1.5, 2.5, -3.0]);
    }

    #[test]
    fn ingest_skips_header_and_finds_named_column() {
        let file = temp_file("year,rain_mm\n1901,10.5\n1902,20.25\n");
        let path = file.path().to_str().unwrap();
        assert_eq!(ingest_csv(path, "rain_mm").unwrap(), vec![10.5, 20.25]);
        assert_eq!(ingest_csv(path, "2").unwrap(), vec![10.5, 20.25]);
        let missing = ingest_csv(path, "snow_mm").unwrap_err();
        assert!(matches!(missing, CliError::MissingColumn { .. }));
        assert_eq!(missing.exit_code(), 2);
    }

    #[test]
    fn ingest_rejects_blank_line_mid_column_with_row_number() {
        let file = temp_file("1.0\n\n3.0\n");
        let path = file.path().to_str().unwrap();
        match ingest_csv(path, "1").unwrap_err() {
            CliError::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_tolerates_trailing_newline_only() {
        let file = temp_file("7.0\n8.0\n");
        let path = file.path().to_str().unwrap();
        assert_eq!(ingest_csv(path, "1").unwrap().len(), 2);
    }

    #[test]
    fn ingest_rejects_non_finite_with_row_number() {
        let file = temp_file("1.0\nNaN\n");
        let path = file.path().to_str().unwrap();
        match ingest_csv(path, "1").unwrap_err() {
            CliError::NonFiniteValue { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let file = temp_file("1.0\ninf\n");
        let path = file.path().to_str().unwrap();
        assert!(matches!(
            ingest_csv(path, "1").unwrap_err(),
            CliError::NonFiniteValue { row: 2, .. }
        ));
    }

    #[test]
    fn ingest_reports_missing_file_and_empty_column() {
        let err = ingest_csv("/nonexistent/data.csv", "1").unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
        let file = temp_file("rain_mm\n");
        let path = file.path().to_str().unwrap();
        assert!(matches!(
            ingest_csv(path, "rain_mm").unwrap_err(),
            CliError::EmptyColumn { .. }
        ));
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut config = PipelineConfig {
            levels: vec![0.99],
            ..PipelineConfig::default()
        };
        assert!(config.validate(true).is_ok());
        config.levels = vec![];
        assert!(config.validate(true).is_err());
        assert!(config.validate(false).is_ok());
        config.levels = vec![1.0];
        assert!(config.validate(false).is_err());
        config.levels = vec![0.9];
        config.alpha = Some(AlphaSpec::Value(0.5));
        assert!(config.validate(true).is_err());
        config.alpha = Some(AlphaSpec::Value(2.0));
        config.gamma_star_target = Some(1.0);
        assert!(config.validate(true).is_err());
        config.alpha = None;
        config.confidence = 1.0;
        assert!(config.validate(true).is_err());
    }

    #[test]
    fn formatted_numbers_carry_at_least_ten_significant_digits() {
        for &v in &[
            0.001234567890123,
            0.99,
            98.63,
            132.2441,
            583.6710,
            1.0e8 + 0.125,
        ] {
            let text = format_number(v);
            assert!(!text.contains('e'), "plain decimal expected, got {text}");
            let back: f64 = text.parse().unwrap();
            assert!(
                ((back - v) / v).abs() < 1e-10,
                "{text} does not round-trip {v}"
            );
        }
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn median_of_already_maxima_run_is_the_fitted_median() {
        let truth = GevParams::new(0.1, 2.0, 10.0).unwrap();
        let data = sample_gev(&truth, 400, 7);
        let config = PipelineConfig {
            levels: vec![0.5],
            already_maxima: true,
            ..PipelineConfig::default()
        };
        let curve = run_naive(&data, &config).unwrap();
        let row = &curve.rows[0];
        assert_eq!(row.u, 0.5);
        let fitted = GevParams::new(
            curve.provenance.shape,
            curve.provenance.scale,
            curve.provenance.location,
        )
        .unwrap();
        let median = crate::gev::gev_quantile(0.5, &fitted).unwrap();
        assert!((row.naive - median).abs() < 1e-9);
        assert!(row.robust.is_none());
        assert!(row.ci_low <= row.naive && row.naive <= row.ci_high);
    }

    #[test]
    fn naive_targets_exponentiate_by_block_size() {
        let truth = GevParams::new(0.1, 2.0, 10.0).unwrap();
        let data = sample_gev(&truth, 400, 13);
        let config = PipelineConfig {
            block_size: BlockSizeSpec::Count(5),
            levels: vec![0.999, 0.99],
            ..PipelineConfig::default()
        };
        let curve = run_naive(&data, &config).unwrap();
        assert_eq!(curve.provenance.block_size, 5);
        assert_eq!(curve.provenance.block_count, 80);
        // Rows come back sorted by p even though the input was not.
        assert!((curve.rows[0].p - 0.99).abs() < 1e-15);
        assert!((curve.rows[0].u - 0.99_f64.powi(5)).abs() < 1e-15);
        assert!((curve.rows[1].u - 0.999_f64.powi(5)).abs() < 1e-15);
        assert!(curve.rows[0].naive <= curve.rows[1].naive);
    }

    #[test]
    fn zero_radius_robust_column_equals_naive() {
        let truth = GevParams::new(0.15, 1.0, 0.0).unwrap();
        let data = sample_gev(&truth, 300, 3);
        let config = PipelineConfig {
            levels: vec![0.95, 0.99],
            already_maxima: true,
            alpha: Some(AlphaSpec::Value(2.0)),
            delta: Some(DeltaSpec::Value(0.0)),
            ..PipelineConfig::default()
        };
        let curve = run_robust(&data, &config).unwrap();
        for row in &curve.rows {
            assert_eq!(row.robust.unwrap(), row.naive);
        }
    }

    #[test]
    fn robust_rows_dominate_and_record_provenance() {
        let truth = GevParams::new(0.2, 1.0, 5.0).unwrap();
        let data = sample_gev(&truth, 500, 17);
        let config = PipelineConfig {
            levels: vec![0.99, 0.95, 0.999],
            already_maxima: true,
            alpha: Some(AlphaSpec::Value(2.0)),
            delta: Some(DeltaSpec::Value(0.1)),
            ..PipelineConfig::default()
        };
        let curve = run_robust(&data, &config).unwrap();
        assert_eq!(curve.rows.len(), 3);
        let mut last_p = 0.0;
        let mut last_naive = f64::NEG_INFINITY;
        let mut last_robust = f64::NEG_INFINITY;
        for row in &curve.rows {
            assert!(row.p > last_p);
            assert!(row.naive >= last_naive);
            let robust = row.robust.unwrap();
            assert!(robust >= row.naive, "dominance fails at p {}", row.p);
            assert!(robust >= last_robust);
            last_p = row.p;
            last_naive = row.naive;
            last_robust = robust;
        }
        let prov = &curve.provenance;
        assert_eq!(prov.alpha, Some(2.0));
        assert_eq!(prov.delta, Some(0.1));
        assert!(prov.delta_bar.unwrap() > 1.0);
        let expected_star = 2.0 * prov.shape;
        assert!((prov.gamma_star.unwrap() - expected_star).abs() < 1e-12);
    }

    #[test]
    fn order_from_ci_requires_heavy_tail() {
        let light = GevParams::new(-0.3, 1.0, 0.0).unwrap();
        let data = sample_gev(&light, 400, 23);
        let config = PipelineConfig {
            levels: vec![0.99],
            already_maxima: true,
            alpha: Some(AlphaSpec::FromCi),
            delta: Some(DeltaSpec::Value(0.1)),
            ..PipelineConfig::default()
        };
        let err = run_robust(&data, &config).unwrap_err();
        assert!(matches!(err, CliError::ShapeNotHeavy { .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn order_from_ci_uses_half_width_on_heavy_tail() {
        let heavy = GevParams::new(0.3, 1.0, 0.0).unwrap();
        let data = sample_gev(&heavy, 600, 31);
        let config = PipelineConfig {
            levels: vec![0.99],
            already_maxima: true,
            alpha: Some(AlphaSpec::FromCi),
            delta: Some(DeltaSpec::Value(0.05)),
            ..PipelineConfig::default()
        };
        let curve = run_robust(&data, &config).unwrap();
        let alpha = curve.provenance.alpha.unwrap();
        assert!(alpha > 1.0);
        // α = (γ̂+ε)/ε means the implied worst-case shape is γ̂ + ε.
        let star = curve.provenance.gamma_star.unwrap();
        let implied_epsilon = curve.provenance.shape / (alpha - 1.0);
        assert!((star - (curve.provenance.shape + implied_epsilon)).abs() < 1e-12);
    }

    #[test]
    fn shape_target_back_solves_order() {
        let heavy = GevParams::new(0.3, 1.0, 0.0).unwrap();
        let data = sample_gev(&heavy, 600, 37);
        let config = PipelineConfig {
            levels: vec![0.99],
            already_maxima: true,
            gamma_star_target: Some(1.0),
            delta: Some(DeltaSpec::Value(0.1)),
            ..PipelineConfig::default()
        };
        let curve = run_robust(&data, &config).unwrap();
        let star = curve.provenance.gamma_star.unwrap();
        assert!((star - 1.0).abs() < 1e-10, "target shape not hit: {star}");

        let config_bad = PipelineConfig {
            gamma_star_target: Some(0.01),
            ..config
        };
        let err = run_robust(&data, &config_bad).unwrap_err();
        assert!(matches!(err, CliError::ShapeTargetInfeasible { .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn estimated_radius_is_deterministic_and_raises_small_k() {
        let truth = GevParams::new(0.2, 1.0, 0.0).unwrap();
        let data = sample_gev(&truth, 200, 41);
        let config = PipelineConfig {
            levels: vec![0.99],
            already_maxima: true,
            alpha: Some(AlphaSpec::Value(2.5)),
            delta: Some(DeltaSpec::Estimate),
            knn_k: 1,
            seed: 9,
            ..PipelineConfig::default()
        };
        let one = run_robust(&data, &config).unwrap();
        let two = run_robust(&data, &config).unwrap();
        // α = 2.5 needs k > 1.5, so the requested k = 1 is raised to 2.
        assert_eq!(one.provenance.knn_k, Some(2));
        assert!(one.provenance.delta.unwrap() >= 0.0);
        let csv_one = render_curve(&one, OutputFormat::Csv).unwrap();
        let csv_two = render_curve(&two, OutputFormat::Csv).unwrap();
        assert_eq!(csv_one, csv_two);
        let json_one = render_curve(&one, OutputFormat::Json).unwrap();
        let json_two = render_curve(&two, OutputFormat::Json).unwrap();
        assert_eq!(json_one, json_two);
    }

    #[test]
    fn single_row_curve_renders_two_csv_lines() {
        let truth = GevParams::new(0.1, 1.0, 0.0).unwrap();
        let data = sample_gev(&truth, 300, 43);
        let config = PipelineConfig {
            levels: vec![0.9],
            already_maxima: true,
            ..PipelineConfig::default()
        };
        let curve = run_naive(&data, &config).unwrap();
        let csv = render_curve(&curve, OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "p,u,naive,robust,ci_low,ci_high");
        // The robust field of a naive run is empty, not zero.
        assert_eq!(lines[1].split(',').count(), 6);
        assert_eq!(lines[1].split(',').nth(3), Some(""));
    }

    #[test]
    fn json_provenance_has_resolved_neighborhood_fields() {
        let truth = GevParams::new(0.2, 1.0, 0.0).unwrap();
        let data = sample_gev(&truth, 300, 47);
        let config = PipelineConfig {
            levels: vec![0.99],
            already_maxima: true,
            alpha: Some(AlphaSpec::Value(2.0)),
            delta: Some(DeltaSpec::Value(0.3)),
            seed: 21,
            ..PipelineConfig::default()
        };
        let curve = run_robust(&data, &config).unwrap();
        let json = render_curve(&curve, OutputFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let prov = &value["provenance"];
        assert_eq!(prov["alpha"], 2.0);
        assert_eq!(prov["delta"], 0.3);
        assert!(prov["delta_bar"].as_f64().unwrap() > 1.0);
        assert!(prov["gamma_star"].as_f64().is_some());
        assert_eq!(prov["seed"], 21);
        assert!(value["rows"].as_array().unwrap().len() == 1);
    }

    #[test]
    fn fit_report_round_trips_through_both_formats() {
        let truth = GevParams::new(0.1, 2.0, 10.0).unwrap();
        let data = sample_gev(&truth, 400, 53);
        let config = PipelineConfig::default();
        let report = run_fit(&data, &config).unwrap();
        assert_eq!(report.block_size, 20);
        assert_eq!(report.block_count, 20);
        let json = render_fit_report(&report, OutputFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["shape"].is_number());
        assert!(value["covariance"].as_array().unwrap().len() == 3);
        let csv = render_fit_report(&report, OutputFormat::Csv).unwrap();
        assert!(csv.starts_with("key,value\n"));
        assert_eq!(csv.lines().count(), 1 + 11 + 9);
    }

    #[test]
    fn exit_codes_follow_the_contract()  {
        assert_eq!(
            CliError::Config {
                message: String::new()
            }
            .exit_code(),
            2
        );
        assert_eq!(CliError::Fit(FitError::EmptyData).exit_code(), 2);
        assert_eq!(CliError::FitNotConverged { m: 5 }.exit_code(), 3);
        assert_eq!(CliError::ShapeNotHeavy { gamma0: -0.1 }.exit_code(), 4);
        assert_eq!(
            CliError::WorstCase(WorstCaseError::InvalidQuantileLevel { u: 2.0 }).exit_code(),
            4
        );
    }
}
