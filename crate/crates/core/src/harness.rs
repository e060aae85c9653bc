//! Experiment runner: data ingestion, multi-trial execution, aggregation,
//! the model-count sweep, and report files.
//!
//! # Report files
//!
//! [`emit_report`] writes into an output directory:
//!
//! * `report.json` (JSON format): the whole [`ExperimentReport`]. Top-level
//!   fields are `config`, `n`, `d`, `m`, `trials` and `summary`. Each trial
//!   has `trial`, `outcome` (`released` / `failure` / `error`), `r_squared`,
//!   `coefficients`, `ptr_bound`, `sampled_depth`, `error`, `seconds` and
//!   `timings`. `summary` has `trials`, `released`, `failures`, `errors`,
//!   `pass_rate`, `median_r2`, `q1_r2` and `q3_r2`.
//! * `trials.csv` and `summary.csv` (CSV format): the same per-trial and
//!   aggregate numbers, one row per trial / one `metric,value` row per
//!   aggregate.
//! * `histograms.csv` (when requested): for each coefficient of the
//!   non-private partition models, `bins` rows of
//!   `coefficient,bin,lower,upper,count,gaussian_expected,gaussian_mean,gaussian_sd`.
//!
//! Floats are written in shortest round-trip form, so no precision is lost.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines::{non_dp_baseline, ssp_regression, DataBounds};
use crate::depth::{compute_log_volumes, perturb_models, sorted_projections};
use crate::error::{Error, Result};
use crate::mechanism::{
    heuristic_num_models, tukey_em_traced, MechanismResult, PrivacyBudget, StageTimings,
};
use crate::noise::RngHandle;
use crate::ptr::ptr_check_with_noise;
use crate::regression::{generate_synthetic, partition_fit, r_squared, Dataset, SyntheticSpec};

/// Reads a headered numeric CSV. `label_column` names the label (a
/// zero-based column index is accepted when no header matches); every other
/// column becomes a feature, and a constant-1 column is appended when
/// `add_intercept` is set.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    add_intercept: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let ingest = |message: String| Error::Ingestion {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest(e.to_string()))?;
    let headers = reader.headers().map_err(|e| ingest(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(ingest("file is empty".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .or_else(|| {
            label_column
                .parse::<usize>()
                .ok()
                .filter(|&i| i < headers.len())
        })
        .ok_or_else(|| ingest(format!("label column '{label_column}' not found in header")))?;
    if headers.len() < 2 && !add_intercept {
        return Err(ingest("no feature columns besides the label".into()));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| ingest(format!("row {row_no}: {e}")))?;
        if record.len() != headers.len() {
            return Err(ingest(format!(
                "row {row_no}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(headers.len());
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    ingest(format!(
                        "row {row_no}, column '{}': cannot parse '{cell}' as a finite number",
                        &headers[col]
                    ))
                })?;
            if col == label_idx {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
        if add_intercept {
            features.push(1.0);
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(ingest("no data rows".into()));
    }
    Dataset::from_rows(&rows, &labels).map_err(|e| ingest(e.to_string()))
}

/// Writes `data` as a headered CSV with columns `x1..xd,y`.
pub fn write_dataset_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(f64::to_string).collect();
        rec.push(data.labels()[i].to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TukeyEm,
    Ssp,
    NonDp,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tukey_em" | "tukeyem" | "tukey" => Ok(Method::TukeyEm),
            "ssp" | "adassp" => Ok(Method::Ssp),
            "non_dp" | "nondp" | "ols" => Ok(Method::NonDp),
            _ => Err(Error::param(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, label_column: String },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub method: Method,
    /// Number of models for the Tukey mechanism; `None` picks the heuristic.
    pub models: Option<usize>,
    pub budget: PrivacyBudget,
    pub trials: usize,
    pub seed: u64,
    pub add_intercept: bool,
    /// Keep the first trial's partition models for histogram output.
    #[serde(default)]
    pub collect_models: bool,
}

impl ExperimentConfig {
    pub fn new(source: DataSource, method: Method, budget: PrivacyBudget) -> Self {
        Self {
            source,
            method,
            models: None,
            budget,
            trials: 1,
            seed: 0,
            add_intercept: true,
            collect_models: false,
        }
    }

    /// Loads or generates the dataset, appending the intercept when configured.
    pub fn load_data(&self) -> Result<Dataset> {
        match &self.source {
            DataSource::Csv { path, label_column } => {
                load_csv(path, label_column, self.add_intercept)
            }
            DataSource::Synthetic(spec) => {
                // a stream no trial uses
                let mut rng = RngHandle::with_stream(self.seed, u64::MAX);
                let (data, _) = generate_synthetic(spec, &mut rng)?;
                Ok(if self.add_intercept {
                    data.with_intercept()
                } else {
                    data
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Released,
    Failure,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcome: TrialOutcome,
    pub r_squared: Option<f64>,
    pub coefficients: Option<Vec<f64>>,
    pub ptr_bound: Option<i64>,
    pub sampled_depth: Option<usize>,
    pub error: Option<String>,
    pub seconds: f64,
    pub timings: Option<StageTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub released: usize,
    pub failures: usize,
    pub errors: usize,
    /// Fraction of trials that released coefficients.
    pub pass_rate: f64,
    pub median_r2: Option<f64>,
    pub q1_r2: Option<f64>,
    pub q3_r2: Option<f64>,
}

impl Summary {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let count = |o: TrialOutcome| trials.iter().filter(|t| t.outcome == o).count();
        let mut r2: Vec<f64> = trials.iter().filter_map(|t| t.r_squared).collect();
        r2.sort_by(f64::total_cmp);
        let released = count(TrialOutcome::Released);
        Self {
            trials: trials.len(),
            released,
            failures: count(TrialOutcome::Failure),
            errors: count(TrialOutcome::Error),
            pass_rate: if trials.is_empty() {
                0.0
            } else {
                released as f64 / trials.len() as f64
            },
            median_r2: quantile(&r2, 0.5),
            q1_r2: quantile(&r2, 0.25),
            q3_r2: quantile(&r2, 0.75),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub d: usize,
    pub m: Option<usize>,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    #[serde(skip)]
    pub models: Option<Vec<Vec<f64>>>,
}

impl ExperimentReport {
    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.trials {
            t.seconds = 0.0;
            t.timings = t.timings.map(|_| StageTimings::default());
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

fn run_trial(
    config: &ExperimentConfig,
    data: &Dataset,
    m: &Result<usize>,
    bounds: Option<&DataBounds>,
    trial: usize,
) -> (TrialRecord, Option<Vec<Vec<f64>>>) {
    let mut rng = RngHandle::with_stream(config.seed, trial as u64);
    let clock = Instant::now();
    let mut record = TrialRecord {
        trial,
        outcome: TrialOutcome::Error,
        r_squared: None,
        coefficients: None,
        ptr_bound: None,
        sampled_depth: None,
        error: None,
        seconds: 0.0,
        timings: None,
    };
    let mut models = None;
    let released: Result<Option<Vec<f64>>> = match config.method {
        Method::NonDp => Ok(Some(non_dp_baseline(data))),
        Method::Ssp => match bounds {
            Some(b) => ssp_regression(data, config.budget, *b, &mut rng).map(Some),
            None => Err(Error::param("data bounds unavailable")),
        },
        Method::TukeyEm => match m {
            Ok(m) => tukey_em_traced(data, *m, config.budget, &mut rng).map(|run| {
                record.ptr_bound = Some(run.trace.ptr.bound.get());
                record.sampled_depth = run.trace.sampled_depth;
                record.timings = Some(run.trace.timings);
                if config.collect_models {
                    models = Some(run.models.into_models());
                }
                match run.result {
                    MechanismResult::Coefficients(c) => Some(c),
                    MechanismResult::Failure => None,
                }
            }),
            Err(e) => Err(Error::InsufficientData(e.to_string())),
        },
    };
    match released {
        Ok(Some(beta)) => match r_squared(&beta, data) {
            Ok(r2) => {
                record.outcome = TrialOutcome::Released;
                record.r_squared = Some(r2);
                record.coefficients = Some(beta);
            }
            Err(e) => record.error = Some(e.to_string()),
        },
        Ok(None) => record.outcome = TrialOutcome::Failure,
        Err(e) => record.error = Some(e.to_string()),
    }
    record.seconds = clock.elapsed().as_secs_f64();
    (record, models)
}

/// Runs `config.trials` independent trials on one dataset.
///
/// Trial `k` draws from stream `k` of `config.seed`. R² is measured on the
/// full dataset. Per-trial errors are recorded rather than aborting the run;
/// only data loading failures are fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.trials == 0 {
        return Err(Error::param("trials must be >= 1"));
    }
    let data = config.load_data()?;
    let m = match config.models {
        Some(m) => Ok(m),
        None => heuristic_num_models(data.n(), data.d()),
    };
    let bounds = match config.method {
        Method::Ssp => Some(DataBounds::from_data(&data)?),
        _ => None,
    };
    let mut trials = Vec::with_capacity(config.trials);
    let mut kept_models = None;
    for k in 0..config.trials {
        let (record, models) = run_trial(config, &data, &m, bounds.as_ref(), k);
        if kept_models.is_none() {
            kept_models = models;
        }
        trials.push(record);
    }
    let summary = Summary::from_trials(&trials);
    Ok(ExperimentReport {
        config: config.clone(),
        n: data.n(),
        d: data.d(),
        m: match config.method {
            Method::TukeyEm => m.ok(),
            _ => None,
        },
        trials,
        summary,
        models: kept_models,
    })
}

/// One cell of the model-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Feature count before the intercept is appended.
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub bound: i64,
    pub threshold: f64,
    /// Whether the noiseless bound reaches the PTR threshold.
    pub passes: bool,
}

/// For each `(d, m)`, generates synthetic data with `n = (d+1)·m` rows
/// (`d` features plus an intercept), fits `m` models, and records the
/// distance lower bound used by the PTR gate at `ε/2`.
pub fn sweep_heuristic(
    d_list: &[usize],
    m_list: &[usize],
    budget: PrivacyBudget,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(d_list.len() * m_list.len());
    for &d in d_list {
        for &m in m_list {
            if d == 0 || m < 8 {
                return Err(Error::param(format!("invalid sweep cell d = {d}, m = {m}")));
            }
            let n = (d + 1) * m;
            let mut rng = RngHandle::with_stream(seed, ((d as u64) << 32) | m as u64);
            let spec = SyntheticSpec::new(n, d, 10.0)?;
            let data = generate_synthetic(&spec, &mut rng)?.0.with_intercept();
            let models = partition_fit(&data, m, &mut rng)?;
            let vols = compute_log_volumes(&sorted_projections(&perturb_models(&models, &mut rng)));
            let outcome = ptr_check_with_noise(&vols, budget.half_epsilon(), budget.delta, 0.0)?;
            rows.push(SweepRow {
                d,
                m,
                n,
                bound: outcome.bound.get(),
                threshold: outcome.threshold,
                passes: outcome.passed,
            });
        }
    }
    Ok(rows)
}

/// One bin of a per-coefficient model histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub coefficient: usize,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Expected count under a Gaussian with the coefficient's sample mean and sd.
    pub gaussian_expected: f64,
    pub gaussian_mean: f64,
    pub gaussian_sd: f64,
}

/// Histograms of each coefficient across `models`, `bins` equal-width bins
/// spanning the observed range.
pub fn model_histograms(models: &[Vec<f64>], bins: usize) -> Result<Vec<HistogramRow>> {
    if models.len() < 2 || bins == 0 {
        return Err(Error::param(
            "histograms need at least two models and one bin",
        ));
    }
    let d = models[0].len();
    let count = models.len() as f64;
    let mut rows = Vec::with_capacity(d * bins);
    for j in 0..d {
        let values: Vec<f64> = models.iter().map(|m| m[j]).collect();
        let mean = values.iter().sum::<f64>() / count;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt();
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if hi == lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let normal = (sd > 0.0).then(|| Normal::new(mean, sd).expect("positive sd"));
        for (b, &c) in counts.iter().enumerate() {
            let lower = lo + b as f64 * width;
            let upper = if b + 1 == bins {
                hi
            } else {
                lo + (b + 1) as f64 * width
            };
            let gaussian_expected = match &normal {
                Some(nd) => count * (nd.cdf(upper) - nd.cdf(lower)),
                None if mean >= lower && (mean < upper || b + 1 == bins) => count,
                None => 0.0,
            };
            rows.push(HistogramRow {
                coefficient: j,
                bin: b,
                lower,
                upper,
                count: c,
                gaussian_expected,
                gaussian_mean: mean,
                gaussian_sd: sd,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::param(format!("unknown report format '{s}'"))),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 30;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_string<T: Serialize>(rows: &[T], path: &Path) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

/// Flat per-trial row for `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCsvRow {
    pub trial: usize,
    pub outcome: TrialOutcome,
    pub r_squared: Option<f64>,
    pub ptr_bound: Option<i64>,
    pub sampled_depth: Option<usize>,
    pub seconds: f64,
    /// Coefficients joined with `;`.
    pub coefficients: String,
    pub error: String,
}

impl From<&TrialRecord> for TrialCsvRow {
    fn from(t: &TrialRecord) -> Self {
        Self {
            trial: t.trial,
            outcome: t.outcome,
            r_squared: t.r_squared,
            ptr_bound: t.ptr_bound,
            sampled_depth: t.sampled_depth,
            seconds: t.seconds,
            coefficients: t
                .coefficients
                .as_ref()
                .map(|c| c.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            error: t.error.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub metric: String,
    pub value: Option<f64>,
}

fn summary_rows(s: &Summary) -> Vec<SummaryCsvRow> {
    let row = |metric: &str, value: Option<f64>| SummaryCsvRow {
        metric: metric.into(),
        value,
    };
    vec![
        row("trials", Some(s.trials as f64)),
        row("released", Some(s.released as f64)),
        row("failures", Some(s.failures as f64)),
        row("errors", Some(s.errors as f64)),
        row("pass_rate", Some(s.pass_rate)),
        row("median_r2", s.median_r2),
        row("q1_r2", s.q1_r2),
        row("q3_r2", s.q3_r2),
    ]
}

/// Writes the report (and optionally model histograms) into `out_dir`,
/// returning the paths written.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: impl AsRef<Path>,
    format: ReportFormat,
    histograms: bool,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            write_file(&path, &report.to_json()?)?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let path = out_dir.join("trials.csv");
            let rows: Vec<TrialCsvRow> = report.trials.iter().map(TrialCsvRow::from).collect();
            write_file(&path, &csv_string(&rows, &path)?)?;
            written.push(path);
            let path = out_dir.join("summary.csv");
            write_file(&path, &csv_string(&summary_rows(&report.summary), &path)?)?;
            written.push(path);
        }
    }
    if histograms {
        let models = report.models.as_ref().ok_or_else(|| {
            Error::param("histograms need partition models; run the Tukey mechanism with model collection on")
        })?;
        let path = out_dir.join("histograms.csv");
        write_file(
            &path,
            &csv_string(&model_histograms(models, HISTOGRAM_BINS)?, &path)?,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Writes sweep rows as `sweep.json` or `sweep.csv`.
pub fn emit_sweep(
    rows: &[SweepRow],
    out_dir: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let (path, body) = match format {
        ReportFormat::Json => {
            let path = out_dir.join("sweep.json");
            let body =
                serde_json::to_string_pretty(rows).map_err(|e| Error::Serialize(e.to_string()))?;
            (path, body)
        }
        ReportFormat::Csv => {
            let path = out_dir.join("sweep.csv");
            let body = csv_string(rows, &path)?;
            (path, body)
        }
    };
    write_file(&path, &body)?;
    Ok(path)
}
