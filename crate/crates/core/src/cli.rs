//! Experiment runner behind the `fbm-levy` binary.
//!
//! Settings are merged in the order defaults, `--config` file,
//! `FBM_LEVY_WORKERS`, command-line flags. Every command returns its output
//! as a string so identical settings give byte-identical results.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::constants::{ConstantsTable, LOG_CASE_CONSTANT};
use crate::error::{Error, Result};
use crate::fbm::{GridSpec, HurstParameter, PathSampler, Regime};
use crate::limitlaws::{
    self, ks_two_sample, normality_report, rate_regression, rosenblatt_difference_samples, rosenblatt_sample_qv,
    scaled_error_samples, ErrorScaling, KsReport, NormalityReport, NormalityThresholds, RateModel, RosenblattSpec,
    Summary,
};
use crate::oracle::{self, MseMethod, MseReport};
use crate::parallel::with_workers;
use crate::rng::{substream, substream_seed, tag};
use crate::schemes::SchemeKind;

pub const WORKERS_ENV: &str = "FBM_LEVY_WORKERS";
const ARTIFACT: &str = concat!("fbm-levy ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleKind {
    Paths,
    Rosenblatt,
}

#[derive(Debug, Parser)]
#[command(name = "fbm-levy", version, about = "Error oracles, constants and limit laws for the fractional Lévy area")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Hurst parameter in (1/4, 1)
    #[arg(long, global = true)]
    pub hurst: Option<f64>,
    /// Extra Hurst values for `constants`, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    pub hurst_grid: Vec<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Coarse resolution; repeat for several
    #[arg(long = "n", global = true, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Reference resolution is this factor times n (power of two >= 2)
    #[arg(long, global = true)]
    pub ref_factor: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Fine grid of the quadratic-variation Rosenblatt sampler
    #[arg(long, global = true)]
    pub qv_resolution: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key = value settings file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// c1, c2 and the regime constants per H
    Constants,
    /// Mean-square error per n
    Mse {
        #[arg(long, default_value = "euler")]
        scheme: String,
        /// decomposition | pair | monte-carlo
        #[arg(long, default_value = "decomposition")]
        method: String,
    },
    /// Log-log rate fit over the n values
    Rate {
        #[arg(long, default_value = "euler")]
        scheme: String,
    },
    /// Limit-law check of the scaled Euler error
    Dist,
    /// Raw fBm paths or Rosenblatt draws
    Sample {
        #[arg(value_enum)]
        what: SampleKind,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub hurst: f64,
    pub hurst_grid: Vec<f64>,
    pub horizon: f64,
    /// Empty means the command default.
    pub n_values: Vec<usize>,
    pub reference_factor: usize,
    pub sample_count: usize,
    pub master_seed: u64,
    /// Scheduling only; left out of the echo so output is independent of it.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub qv_resolution: usize,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hurst: 0.6,
            hurst_grid: Vec::new(),
            horizon: 1.0,
            n_values: Vec::new(),
            reference_factor: 64,
            sample_count: 5000,
            master_seed: 1,
            worker_count: 0,
            qv_resolution: 1 << 16,
            output_format: OutputFormat::Csv,
            output_path: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_value(key, s)).collect()
}

impl ExperimentConfig {
    /// Applies `key = value` lines; `#` starts a comment. Keys are the long
    /// flag names.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "hurst" => self.hurst = parse_value(key, value)?,
                "hurst-grid" => self.hurst_grid = parse_list(key, value)?,
                "horizon" => self.horizon = parse_value(key, value)?,
                "n" => self.n_values = parse_list(key, value)?,
                "ref-factor" => self.reference_factor = parse_value(key, value)?,
                "samples" => self.sample_count = parse_value(key, value)?,
                "seed" => self.master_seed = parse_value(key, value)?,
                "workers" => self.worker_count = parse_value(key, value)?,
                "qv-resolution" => self.qv_resolution = parse_value(key, value)?,
                "format" => {
                    self.output_format = OutputFormat::from_str(value, true)
                        .map_err(|_| Error::Config(format!("invalid value '{value}' for 'format'")))?
                }
                "out" => self.output_path = Some(PathBuf::from(value)),
                other => return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        Ok(())
    }

    fn apply_args(&mut self, args: &CommonArgs) {
        if let Some(v) = args.hurst {
            self.hurst = v;
        }
        if !args.hurst_grid.is_empty() {
            self.hurst_grid = args.hurst_grid.clone();
        }
        if let Some(v) = args.horizon {
            self.horizon = v;
        }
        if !args.n.is_empty() {
            self.n_values = args.n.clone();
        }
        if let Some(v) = args.ref_factor {
            self.reference_factor = v;
        }
        if let Some(v) = args.samples {
            self.sample_count = v;
        }
        if let Some(v) = args.seed {
            self.master_seed = v;
        }
        if let Some(v) = args.workers {
            self.worker_count = v;
        }
        if let Some(v) = args.qv_resolution {
            self.qv_resolution = v;
        }
        if let Some(v) = args.format {
            self.output_format = v;
        }
        if let Some(v) = &args.out {
            self.output_path = Some(v.clone());
        }
    }

    /// Merges defaults, the config file, the worker environment variable and
    /// the flags, then validates.
    pub fn resolve(args: &CommonArgs, workers_env: Option<&str>) -> Result<Self> {
        let mut config = Self::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)?;
            config.apply_config_text(&text)?;
        }
        if let Some(w) = workers_env {
            config.worker_count = parse_value(WORKERS_ENV, w)?;
        }
        config.apply_args(args);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        HurstParameter::new(self.hurst)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_values.iter().any(|&n| n < 1) {
            return Err(Error::Config("all n values must be at least 1".into()));
        }
        oracle::check_reference_factor(self.reference_factor).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn hurst_parameter(&self) -> HurstParameter {
        HurstParameter::new(self.hurst).expect("validated")
    }

    fn n_values_or(&self, default: &[usize]) -> Vec<usize> {
        if self.n_values.is_empty() {
            default.to_vec()
        } else {
            self.n_values.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// formatting

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Quotes a CSV field when it contains a separator or quote.
fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    artifact: &'static str,
    command: &'a str,
    config: &'a ExperimentConfig,
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(format!("json encoding failed: {e}")))
}

fn json_document<T: Serialize + ?Sized>(command: &str, config: &ExperimentConfig, key: &str, body: &T) -> Result<String> {
    let provenance = Provenance {
        artifact: ARTIFACT,
        command,
        config,
    };
    let mut doc = serde_json::Map::new();
    doc.insert("provenance".into(), to_value(&provenance)?);
    doc.insert(key.into(), to_value(body)?);
    let mut out = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .map_err(|e| Error::Io(format!("json encoding failed: {e}")))?;
    out.push('\n');
    Ok(out)
}

// ---------------------------------------------------------------------------
// constants

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub hurst: f64,
    pub regime: Option<Regime>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub alpha4: Option<f64>,
    pub log_case_constant: Option<f64>,
    pub note: String,
}

fn constants_row(h: f64) -> ConstantsRow {
    let empty = |note: String| ConstantsRow {
        hurst: h,
        regime: None,
        c1: None,
        c2: None,
        alpha1: None,
        alpha2: None,
        alpha3: None,
        alpha4: None,
        log_case_constant: None,
        note,
    };
    let hurst = match HurstParameter::new(h) {
        Ok(v) => v,
        Err(e) => return empty(e.to_string()),
    };
    let table = match ConstantsTable::compute(hurst) {
        Ok(t) => t,
        Err(e) => return empty(e.to_string()),
    };
    let note = match table.regime {
        Regime::Half => "alpha1 and alpha2 both tend to 1/2 as H approaches 1/2".to_string(),
        Regime::ThreeQuarters => format!(
            "Euler error is log(n) n^-2 T^(4H) times log_case_constant {}",
            real(LOG_CASE_CONSTANT)
        ),
        _ => String::new(),
    };
    ConstantsRow {
        hurst: h,
        regime: Some(table.regime),
        c1: Some(table.c1),
        c2: Some(table.c2),
        alpha1: table.alpha1,
        alpha2: table.alpha2,
        alpha3: table.alpha3,
        alpha4: table.alpha4,
        log_case_constant: (table.regime == Regime::ThreeQuarters).then_some(table.log_case_constant),
        note,
    }
}

pub fn cmd_constants(config: &ExperimentConfig) -> Vec<ConstantsRow> {
    let mut grid = vec![config.hurst];
    grid.extend(config.hurst_grid.iter().copied().filter(|h| *h != config.hurst));
    grid.into_iter().map(constants_row).collect()
}

fn constants_output(config: &ExperimentConfig, rows: &[ConstantsRow]) -> Result<String> {
    if config.output_format == OutputFormat::Json {
        return json_document("constants", config, "rows", &rows);
    }
    let mut out = String::from("H,regime,c1,c2,alpha1,alpha2,alpha3,alpha4,note\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            real(r.hurst),
            r.regime.map(|g| g.as_str()).unwrap_or(""),
            opt_real(r.c1),
            opt_real(r.c2),
            opt_real(r.alpha1),
            opt_real(r.alpha2),
            opt_real(r.alpha3),
            opt_real(r.alpha4),
            text(&r.note)
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// mse

pub const DEFAULT_MSE_N: [usize; 5] = [16, 64, 256, 1024, 4096];

pub fn parse_scheme(s: &str) -> Result<SchemeKind> {
    s.parse()
}

pub fn parse_method(s: &str) -> Result<MseMethod> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "decomposition" | "exact" => Ok(MseMethod::Decomposition),
        "pair" | "pair-extrapolation" => Ok(MseMethod::PairExtrapolation),
        "monte-carlo" | "mc" => Ok(MseMethod::MonteCarlo),
        other => Err(Error::Config(format!("unknown method '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub n: usize,
    pub report: Option<MseReport>,
    pub error: Option<String>,
}

pub fn cmd_mse(config: &ExperimentConfig, scheme: SchemeKind, method: MseMethod) -> Vec<MseRow> {
    let hurst = config.hurst_parameter();
    let stream_tag = tag("cmd_mse");
    config
        .n_values_or(&DEFAULT_MSE_N)
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let result = match method {
                MseMethod::Decomposition => oracle::mse_exact(hurst, config.horizon, n, scheme),
                MseMethod::PairExtrapolation => {
                    oracle::mse_pair_report(hurst, config.horizon, n, scheme, config.reference_factor)
                }
                MseMethod::MonteCarlo => oracle::mse_monte_carlo(
                    hurst,
                    config.horizon,
                    n,
                    scheme,
                    config.reference_factor,
                    config.sample_count,
                    substream_seed(config.master_seed, stream_tag, i as u64),
                ),
            };
            match result {
                Ok(r) => MseRow {
                    n,
                    report: Some(r),
                    error: None,
                },
                Err(e) => MseRow {
                    n,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn mse_output(config: &ExperimentConfig, scheme: SchemeKind, method: MseMethod, rows: &[MseRow]) -> Result<String> {
    if config.output_format == OutputFormat::Json {
        return json_document("mse", config, "rows", &rows);
    }
    let mut out = String::from("H,T,n,scheme,method,mse,prediction,ratio,error_bar,error\n");
    for row in rows {
        match &row.report {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},",
                    real(r.hurst),
                    real(r.horizon),
                    r.n,
                    r.scheme,
                    r.method,
                    real(r.mse),
                    opt_real(r.prediction),
                    opt_real(r.ratio),
                    opt_real(r.error_bar)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},,,,,{}",
                    real(config.hurst),
                    real(config.horizon),
                    row.n,
                    scheme,
                    method,
                    text(row.error.as_deref().unwrap_or(""))
                );
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// rate

pub const DEFAULT_RATE_N: [usize; 7] = [64, 128, 256, 512, 1024, 2048, 4096];
pub const RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub hurst: f64,
    pub scheme: SchemeKind,
    pub model: RateModel,
    pub n_values: Vec<usize>,
    pub mse: Vec<f64>,
    pub fitted_exponent: f64,
    pub expected_exponent: f64,
    pub coefficient: f64,
    /// POWER_LOG only.
    pub log_exponent: Option<f64>,
    pub residuals: Vec<f64>,
    pub pass: bool,
}

/// Power of `n` in the leading error term; the `H = 3/4` Euler case carries
/// an extra `log n` handled by the POWER_LOG model.
pub fn expected_exponent(hurst: HurstParameter, scheme: SchemeKind) -> f64 {
    let h = hurst.value();
    match (scheme, hurst.regime()) {
        (SchemeKind::Euler, Regime::ThreeQuarters | Regime::High) => -2.0,
        _ => 1.0 - 4.0 * h,
    }
}

pub fn cmd_rate(config: &ExperimentConfig, scheme: SchemeKind) -> Result<RateReport> {
    let hurst = config.hurst_parameter();
    let n_values = config.n_values_or(&DEFAULT_RATE_N);
    let mse: Vec<f64> = n_values
        .iter()
        .map(|&n| Ok(oracle::mse_exact(hurst, config.horizon, n, scheme)?.mse))
        .collect::<Result<_>>()?;
    let model = if scheme == SchemeKind::Euler && hurst.regime() == Regime::ThreeQuarters {
        RateModel::PowerLog
    } else {
        RateModel::Power
    };
    let points: Vec<(usize, f64)> = n_values.iter().copied().zip(mse.iter().copied()).collect();
    let fit = rate_regression(&points, model)?;
    let expected = expected_exponent(hurst, scheme);
    Ok(RateReport {
        hurst: hurst.value(),
        scheme,
        model,
        n_values,
        mse,
        fitted_exponent: fit.exponent,
        expected_exponent: expected,
        coefficient: fit.coefficient,
        log_exponent: fit.log_exponent,
        residuals: fit.residuals,
        pass: (fit.exponent - expected).abs() <= RATE_TOLERANCE,
    })
}

fn rate_output(config: &ExperimentConfig, r: &RateReport) -> Result<String> {
    if config.output_format == OutputFormat::Json {
        return json_document("rate", config, "report", r);
    }
    Ok(format!(
        "H,scheme,model,fitted_exponent,expected_exponent,coefficient,pass\n{},{},{},{},{},{},{}\n",
        real(r.hurst),
        r.scheme,
        r.model,
        real(r.fitted_exponent),
        real(r.expected_exponent),
        real(r.coefficient),
        r.pass
    ))
}

// ---------------------------------------------------------------------------
// dist

pub const DEFAULT_DIST_N: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationCandidate {
    pub label: &'static str,
    /// `c` in `c T^{2H} (R1 - R2)`.
    pub prefactor: f64,
    /// `2 c² T^{4H}` for unit-variance `R`.
    pub limit_variance: f64,
    pub variance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RosenblattComparison {
    pub qv_resolution: usize,
    pub limit_seed: u64,
    pub limit_summary: Summary,
    pub ks: KsReport,
    pub ks_pass: bool,
    pub skewness_pass: bool,
    pub variance_pass: bool,
    pub candidates: Vec<NormalizationCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistReport {
    pub hurst: f64,
    pub regime: Regime,
    pub horizon: f64,
    pub n: usize,
    pub reference_factor: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub scaling: ErrorScaling,
    pub provenance: String,
    pub summary: Summary,
    pub bias_bound: Option<f64>,
    pub limit_variance: f64,
    pub variance_ratio: f64,
    pub normality: Option<NormalityReport>,
    pub rosenblatt: Option<RosenblattComparison>,
    pub pass: bool,
}

pub fn cmd_dist(config: &ExperimentConfig) -> Result<DistReport> {
    let hurst = config.hurst_parameter();
    let h = hurst.value();
    let n = config.n_values.first().copied().unwrap_or(DEFAULT_DIST_N);
    if config.sample_count < 1000 {
        return Err(Error::InsufficientSamples {
            required: 1000,
            got: config.sample_count,
        });
    }
    let seed = substream_seed(config.master_seed, tag("cmd_dist"), 0);
    let samples = scaled_error_samples(hurst, config.horizon, n, config.reference_factor, config.sample_count, seed)?;
    let summary = *samples.summary();
    let limit_variance = limitlaws::limit_variance(hurst, config.horizon)?;
    let variance_ratio = summary.variance.value / limit_variance;
    let (normality, rosenblatt, pass) = if hurst.regime() == Regime::High {
        let spec = RosenblattSpec::new(hurst, config.qv_resolution)?;
        let alpha3 = limit_variance / config.horizon.powf(4.0 * h);
        let t2h = config.horizon.powf(2.0 * h);
        let limit_seed = substream_seed(config.master_seed, tag("cmd_dist"), 1);
        let limit = rosenblatt_difference_samples(&spec, (alpha3 / 2.0).sqrt() * t2h, config.sample_count, limit_seed)?;
        let ks = ks_two_sample(&samples, &limit)?;
        let ks_pass = ks.passes(0.01);
        let skewness_pass = summary.skewness.value.abs() <= 4.0 * summary.skewness.std_error;
        let variance_pass = (variance_ratio - 1.0).abs() <= 0.1;
        let printed = (2.0 * crate::constants::alpha4(hurst)?).sqrt();
        let candidates = [("sqrt(alpha3/2)", (alpha3 / 2.0).sqrt()), ("sqrt(2 alpha4)", printed)]
            .into_iter()
            .map(|(label, c)| {
                let v = 2.0 * c * c * config.horizon.powf(4.0 * h);
                NormalizationCandidate {
                    label,
                    prefactor: c,
                    limit_variance: v,
                    variance_ratio: summary.variance.value / v,
                }
            })
            .collect();
        let cmp = RosenblattComparison {
            qv_resolution: spec.qv_resolution(),
            limit_seed,
            limit_summary: *limit.summary(),
            ks,
            ks_pass,
            skewness_pass,
            variance_pass,
            candidates,
        };
        (None, Some(cmp), ks_pass && skewness_pass && variance_pass)
    } else {
        let report = normality_report(&samples, &NormalityThresholds::default())?;
        let pass = report.pass;
        (Some(report), None, pass)
    };
    Ok(DistReport {
        hurst: h,
        regime: hurst.regime(),
        horizon: config.horizon,
        n,
        reference_factor: config.reference_factor,
        sample_count: config.sample_count,
        seed,
        scaling: ErrorScaling::for_hurst(hurst),
        provenance: samples.provenance().to_string(),
        summary,
        bias_bound: samples.bias_bound(),
        limit_variance,
        variance_ratio,
        normality,
        rosenblatt,
        pass,
    })
}

fn dist_output(config: &ExperimentConfig, r: &DistReport) -> Result<String> {
    if config.output_format == OutputFormat::Json {
        return json_document("dist", config, "report", r);
    }
    let mut rows: Vec<(String, String)> = vec![
        ("H".into(), real(r.hurst)),
        ("regime".into(), r.regime.as_str().into()),
        ("T".into(), real(r.horizon)),
        ("n".into(), r.n.to_string()),
        ("ref_factor".into(), r.reference_factor.to_string()),
        ("samples".into(), r.sample_count.to_string()),
        ("seed".into(), r.seed.to_string()),
        ("scaling".into(), r.scaling.as_str().into()),
        ("mean".into(), real(r.summary.mean.value)),
        ("variance".into(), real(r.summary.variance.value)),
        ("variance_se".into(), real(r.summary.variance.std_error)),
        ("skewness".into(), real(r.summary.skewness.value)),
        ("skewness_se".into(), real(r.summary.skewness.std_error)),
        ("excess_kurtosis".into(), real(r.summary.excess_kurtosis.value)),
        ("excess_kurtosis_se".into(), real(r.summary.excess_kurtosis.std_error)),
        ("bias_bound".into(), opt_real(r.bias_bound)),
        ("limit_variance".into(), real(r.limit_variance)),
        ("variance_ratio".into(), real(r.variance_ratio)),
    ];
    if let Some(nr) = &r.normality {
        rows.push(("ks_statistic".into(), real(nr.ks.statistic)));
        rows.push(("ks_critical_01".into(), real(nr.ks.critical_01)));
        rows.push(("skewness_pass".into(), nr.skewness_pass.to_string()));
        rows.push(("kurtosis_pass".into(), nr.kurtosis_pass.to_string()));
        rows.push(("ks_pass".into(), nr.ks_pass.to_string()));
    }
    if let Some(c) = &r.rosenblatt {
        rows.push(("qv_resolution".into(), c.qv_resolution.to_string()));
        rows.push(("ks_statistic".into(), real(c.ks.statistic)));
        rows.push(("ks_critical_01".into(), real(c.ks.critical_01)));
        rows.push(("ks_pass".into(), c.ks_pass.to_string()));
        rows.push(("skewness_pass".into(), c.skewness_pass.to_string()));
        rows.push(("variance_pass".into(), c.variance_pass.to_string()));
        for cand in &c.candidates {
            rows.push((format!("variance_ratio[{}]", cand.label), real(cand.variance_ratio)));
        }
    }
    rows.push(("pass".into(), r.pass.to_string()));
    let mut out = String::from("statistic,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{},{}", text(&k), v);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// sample

pub const DEFAULT_PATH_RESOLUTION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDraw {
    pub draw: usize,
    pub times: Vec<f64>,
    pub component1: Vec<f64>,
    pub component2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SampleOutput {
    Paths { resolution: usize, draws: Vec<PathDraw> },
    Rosenblatt { resolution: usize, values: Vec<f64> },
}

pub fn cmd_sample(config: &ExperimentConfig, what: SampleKind) -> Result<SampleOutput> {
    let hurst = config.hurst_parameter();
    match what {
        SampleKind::Paths => {
            let m = config.n_values.first().copied().unwrap_or(DEFAULT_PATH_RESOLUTION);
            let grid = GridSpec::new(config.horizon, m)?;
            let sampler = PathSampler::new(hurst, grid)?;
            let stream_tag = tag("cmd_sample_paths");
            let draws = crate::parallel::map_indexed(config.sample_count, |i| {
                let (c1, c2) = sampler.sample(&mut substream(config.master_seed, stream_tag, i as u64)).into_components();
                PathDraw {
                    draw: i,
                    times: (0..=m).map(|j| grid.step() * j as f64).collect(),
                    component1: c1,
                    component2: c2,
                }
            });
            Ok(SampleOutput::Paths { resolution: m, draws })
        }
        SampleKind::Rosenblatt => {
            let spec = RosenblattSpec::new(hurst, config.qv_resolution)?;
            let s = rosenblatt_sample_qv(&spec, config.sample_count, substream_seed(config.master_seed, tag("cmd_sample_rosenblatt"), 0))?;
            Ok(SampleOutput::Rosenblatt {
                resolution: spec.qv_resolution(),
                values: s.values().to_vec(),
            })
        }
    }
}

fn sample_output(config: &ExperimentConfig, s: &SampleOutput) -> Result<String> {
    if config.output_format == OutputFormat::Json {
        return json_document("sample", config, "sample", s);
    }
    let mut out = String::new();
    match s {
        SampleOutput::Paths { resolution, draws } => {
            let _ = writeln!(out, "# H={} seed={} resolution={}", real(config.hurst), config.master_seed, resolution);
            out.push_str("draw,component,index,t,value\n");
            for d in draws {
                for (c, values) in [(1, &d.component1), (2, &d.component2)] {
                    for (j, (t, v)) in d.times.iter().zip(values.iter()).enumerate() {
                        let _ = writeln!(out, "{},{},{},{},{}", d.draw, c, j, real(*t), real(*v));
                    }
                }
            }
        }
        SampleOutput::Rosenblatt { resolution, values } => {
            let _ = writeln!(out, "# H={} seed={} resolution={}", real(config.hurst), config.master_seed, resolution);
            out.push_str("draw,value\n");
            for (i, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{},{}", i, real(*v));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// dispatch

/// Runs one command with a resolved configuration and renders its output.
pub fn execute(command: &Command, config: &ExperimentConfig) -> Result<String> {
    with_workers(config.worker_count, || match command {
        Command::Constants => constants_output(config, &cmd_constants(config)),
        Command::Mse { scheme, method } => {
            let (scheme, method) = (parse_scheme(scheme)?, parse_method(method)?);
            mse_output(config, scheme, method, &cmd_mse(config, scheme, method))
        }
        Command::Rate { scheme } => rate_output(config, &cmd_rate(config, parse_scheme(scheme)?)?),
        Command::Dist => dist_output(config, &cmd_dist(config)?),
        Command::Sample { what } => sample_output(config, &cmd_sample(config, *what)?),
    })
}

/// Resolves settings from the parsed arguments and the environment, runs
/// the command and writes the output to `--out` or standard output.
pub fn run(cli: &Cli) -> Result<()> {
    let env = std::env::var(WORKERS_ENV).ok();
    let config = ExperimentConfig::resolve(&cli.common, env.as_deref())?;
    let out = execute(&cli.command, &config)?;
    match &config.output_path {
        Some(path) => std::fs::write(path, &out)?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(h: f64) -> ExperimentConfig {
        ExperimentConfig {
            hurst: h,
            ..Default::default()
        }
    }

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("fbm-levy").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file_and_environment() {
        let mut c = ExperimentConfig::default();
        c.apply_config_text("# comment\nhurst = 0.7\nn = 8, 16\nworkers=3\nformat = json\n").unwrap();
        assert_eq!((c.hurst, c.n_values.clone(), c.worker_count), (0.7, vec![8, 16], 3));
        assert_eq!(c.output_format, OutputFormat::Json);
        assert!(c.apply_config_text("bogus = 1").is_err());
        assert!(c.apply_config_text("hurst 0.7").is_err());
        let cli = parse(&["--hurst", "0.35", "--n", "4", "--n", "8", "mse", "--scheme", "trapezoid"]);
        let r = ExperimentConfig::resolve(&cli.common, Some("2")).unwrap();
        assert_eq!((r.hurst, r.n_values.clone(), r.worker_count), (0.35, vec![4, 8], 2));
        let cli = parse(&["--workers", "5", "dist"]);
        assert_eq!(ExperimentConfig::resolve(&cli.common, Some("2")).unwrap().worker_count, 5);
    }

    #[test]
    fn config_validation() {
        for args in [
            &["--hurst", "0.2", "constants"][..],
            &["--ref-factor", "3", "mse"][..],
            &["--n", "0", "mse"][..],
            &["--horizon=-1", "mse"][..],
        ] {
            assert!(ExperimentConfig::resolve(&parse(args).common, None).is_err(), "{args:?}");
        }
        assert!(ExperimentConfig::resolve(&parse(&["mse"]).common, Some("x")).is_err());
    }

    #[test]
    fn constants_rows() {
        let mut c = config(0.5);
        c.hurst_grid = vec![0.9, 0.75, 0.1];
        let rows = cmd_constants(&c);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].c1, Some(0.5));
        assert_eq!(rows[0].c2, Some(0.0));
        assert!(rows[0].alpha1.is_none() && rows[0].alpha2.is_none() && rows[0].alpha4.is_none());
        assert!(rows[0].note.contains("1/2"));
        assert!((rows[1].alpha3.unwrap() - 0.27).abs() < 1e-15);
        assert!(rows[2].alpha1.is_none() && rows[2].alpha2.is_none() && rows[2].alpha3.is_none());
        assert_eq!(rows[2].log_case_constant, Some(9.0 / 128.0));
        assert!(rows[3].regime.is_none() && rows[3].note.contains("Hurst"));
        let csv = constants_output(&c, &rows).unwrap();
        assert!(csv.starts_with("H,regime,c1,c2,alpha1,alpha2,alpha3,alpha4,note\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn mse_rows() {
        let mut c = config(0.5);
        c.n_values = vec![10];
        let rows = cmd_mse(&c, SchemeKind::Euler, MseMethod::Decomposition);
        assert!((rows[0].report.as_ref().unwrap().mse - 0.05).abs() < 1e-15);
        let csv = mse_output(&c, SchemeKind::Euler, MseMethod::Decomposition, &rows).unwrap();
        assert!(csv.starts_with("H,T,n,scheme,method,mse,prediction,ratio,error_bar,error\n"));
        assert!(csv.lines().nth(1).unwrap().contains(",10,EULER,DECOMPOSITION,5.0000000000000003e-2,5.0000000000000003e-2,1.0000000000000000e0,,"));

        let mut c = config(0.6);
        c.n_values = vec![8];
        c.sample_count = 200;
        let rows = cmd_mse(&c, SchemeKind::Euler, MseMethod::MonteCarlo);
        assert!(rows[0].report.as_ref().unwrap().error_bar.is_some());

        let mut c = config(0.4);
        c.n_values = vec![8];
        let rows = cmd_mse(&c, SchemeKind::Trapezoid, MseMethod::Decomposition);
        assert!(rows[0].error.is_some());
        let csv = mse_output(&c, SchemeKind::Trapezoid, MseMethod::Decomposition, &rows).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains("regime error"));
    }

    #[test]
    fn method_and_scheme_parsing() {
        assert_eq!(parse_method("monte-carlo").unwrap(), MseMethod::MonteCarlo);
        assert_eq!(parse_method("PAIR_EXTRAPOLATION").unwrap(), MseMethod::PairExtrapolation);
        assert!(parse_method("nope").is_err());
        assert_eq!(parse_scheme("TRAPEZOID").unwrap(), SchemeKind::Trapezoid);
    }

    #[test]
    fn rate_reports() {
        let r = cmd_rate(&config(0.35), SchemeKind::Euler).unwrap();
        assert!(r.pass && (r.fitted_exponent + 0.4).abs() < 0.05, "{r:?}");
        let r = cmd_rate(&config(0.75), SchemeKind::Euler).unwrap();
        assert_eq!(r.model, RateModel::PowerLog);
        assert_eq!(r.expected_exponent, -2.0);
        let mut c = config(0.6);
        c.n_values = vec![4, 8, 16];
        assert!(cmd_rate(&c, SchemeKind::Euler).is_err());
    }

    #[test]
    fn sample_paths_and_guards() {
        let mut c = config(0.7);
        c.n_values = vec![4];
        c.sample_count = 1;
        let csv = execute(&Command::Sample { what: SampleKind::Paths }, &c).unwrap();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.iter().filter(|l| l.starts_with("0,1,")).count(), 5);
        assert_eq!(rows.iter().filter(|l| l.starts_with("0,2,")).count(), 5);
        assert!(csv.starts_with("# H=6.9999999999999996e-1 seed=1 resolution=4\n"));
        c.qv_resolution = 1 << 10;
        assert!(cmd_sample(&c, SampleKind::Rosenblatt).is_err());
        let mut c = config(0.8);
        c.qv_resolution = 1 << 10;
        c.sample_count = 3;
        let a = execute(&Command::Sample { what: SampleKind::Rosenblatt }, &c).unwrap();
        let b = execute(&Command::Sample { what: SampleKind::Rosenblatt }, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);
    }

    #[test]
    fn json_carries_provenance() {
        let mut c = config(0.9);
        c.output_format = OutputFormat::Json;
        let out = execute(&Command::Constants, &c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["provenance"]["artifact"], ARTIFACT);
        assert_eq!(v["provenance"]["config"]["hurst"], 0.9);
        assert_eq!(v["rows"][0]["regime"], "HIGH");
    }

    #[test]
    fn dist_requires_enough_samples() {
        let mut c = config(0.6);
        c.sample_count = 500;
        assert!(matches!(cmd_dist(&c), Err(Error::InsufficientSamples { .. })));
    }
}
