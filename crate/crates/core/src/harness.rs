//! Configuration documents and the four batch commands: simulate, fit,
//! replication experiments, and dependence summaries.
//!
//! Every output is a pure function of the configuration and seed; the worker
//! count only changes how fast it is produced. Wall-clock timings are kept in
//! separate `timing.json` files so the main documents stay byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, FitOptions, FitResult, MIN_MEAT_DRAWS};
use crate::models::{
    covariation, extremal_coefficient, CorrelationKind, Family, MaxLinearMatrix, MaxLinearSpec, SchlatherModel,
    SiteSet, TailModel, DEFAULT_SCHLATHER_MC,
};
use crate::sampling::{ObservationSet, RngStream};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration

/// A max-linear candidate: a named built-in matrix or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl CandidateSpec {
    fn build(&self, path: &str) -> Result<MaxLinearMatrix> {
        match self {
            CandidateSpec::Named(name) => match name.as_str() {
                "cyclic_pairs" => Ok(MaxLinearMatrix::cyclic_pairs()),
                "star_pairs" => Ok(MaxLinearMatrix::star_pairs()),
                other => Err(Error::config(path, format!("unknown matrix name `{other}` (expected cyclic_pairs or star_pairs)"))),
            },
            CandidateSpec::Matrix(rows) => MaxLinearMatrix::new(rows.clone()).map_err(|e| Error::config(path, e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SitesSpec {
    Coordinates(Vec<[f64; 2]>),
    /// `count` sites drawn uniformly on `[0, extent]²`.
    Uniform { count: usize, extent: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic {
        dim: usize,
        /// `[sigma, alpha]`
        theta: Vec<f64>,
    },
    MaxLinear {
        candidates: Vec<CandidateSpec>,
        /// Index of the generating candidate.
        theta: usize,
    },
    Schlather {
        correlation: CorrelationKind,
        theta: Vec<f64>,
        sites: SitesSpec,
        #[serde(default = "default_mc_size")]
        mc_size: usize,
        #[serde(default)]
        mc_seed: u64,
    },
}

fn default_mc_size() -> usize {
    DEFAULT_SCHLATHER_MC
}

impl ModelSpec {
    /// The model and its true parameter vector.
    pub fn build(&self) -> Result<(TailModel, Vec<f64>)> {
        let (model, theta) = match self {
            ModelSpec::Logistic { dim, theta } => {
                if *dim == 0 {
                    return Err(Error::config("model.dim", "must be at least 1"));
                }
                (TailModel::Logistic { dim: *dim }, theta.clone())
            }
            ModelSpec::MaxLinear { candidates, theta } => {
                let mats = candidates
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.build(&format!("model.candidates[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                let spec = MaxLinearSpec::new(mats, *theta).map_err(|e| Error::config("model", e.to_string()))?;
                (TailModel::MaxLinear(spec), vec![*theta as f64])
            }
            ModelSpec::Schlather { correlation, theta, sites, mc_size, mc_seed } => {
                let sites = match sites {
                    SitesSpec::Coordinates(c) => SiteSet::new(c.clone()),
                    SitesSpec::Uniform { count, extent, seed } => SiteSet::uniform(&RngStream::new(*seed, 0), *count, *extent),
                }
                .map_err(|e| Error::config("model.sites", e.to_string()))?;
                let model = SchlatherModel::new(*correlation, sites, *mc_size, *mc_seed)
                    .map_err(|e| Error::config("model.mc_size", e.to_string()))?;
                (TailModel::Schlather(model), theta.clone())
            }
        };
        if !model.param_space().contains(&theta) {
            return Err(Error::config("model.theta", format!("{theta:?} lies outside the {:?} parameter space", model.family())));
        }
        Ok((model, theta))
    }
}

/// Sample size(s) for an experiment: one number or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    One(usize),
    Many(Vec<usize>),
}

impl SampleSizes {
    pub fn values(&self) -> Vec<usize> {
        match self {
            SampleSizes::One(n) => vec![*n],
            SampleSizes::Many(v) => v.clone(),
        }
    }
}

fn default_n() -> SampleSizes {
    SampleSizes::One(100)
}

fn default_one() -> usize {
    1
}

/// One configuration document shared by all commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default = "default_n")]
    pub n: SampleSizes,
    #[serde(default = "default_one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one", skip_serializing)]
    pub jobs: usize,
    #[serde(default)]
    pub fit: FitOptions,
    /// Observation CSV for `fit`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a config file; relative `data` and `out` paths are resolved
    /// against the file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.data, &mut spec.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        let sizes = self.n.values();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::config("n", "sample sizes must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        if self.fit.directions == 0 {
            return Err(Error::config("fit.directions", "must be at least 1"));
        }
        if self.fit.meat_draws < MIN_MEAT_DRAWS {
            return Err(Error::config("fit.meat_draws", format!("must be at least {MIN_MEAT_DRAWS}")));
        }
        if !(self.fit.rel_tol > 0.0) {
            return Err(Error::config("fit.rel_tol", "must be positive"));
        }
        self.model.build().map(|_| ())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("documents serialise");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_seconds: f64,
    pub jobs: usize,
}

fn replicate_streams(seed: u64, replicate: usize, size_index: usize) -> (RngStream, RngStream) {
    let base = RngStream::new(seed, replicate as u64);
    (base.substream(2 * size_index as u64), base.substream(2 * size_index as u64 + 1))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))
}

// ---------------------------------------------------------------------------
// simulate

/// Draws `n` (the first configured size) observations at the true parameter
/// and writes `data.csv` with a `data.json` provenance sidecar.
pub fn cmd_simulate(spec: &ExperimentSpec, out: &Path) -> Result<ObservationSet> {
    let (model, theta) = spec.model.build()?;
    ensure_dir(out)?;
    let (data_stream, _) = replicate_streams(spec.seed, 0, 0);
    let data = thread_pool(spec.jobs)?.install(|| model.sample(&data_stream, &theta, spec.n.values()[0]))?;
    data.write_csv(out.join("data.csv"))?;
    data.write_provenance(out.join("data.json"))?;
    Ok(data)
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub seed: u64,
    pub data_rows: usize,
    pub fit: FitResult,
}

/// Fits the configured model to the CSV named by `data` and writes
/// `fit.json` (plus `fit_timing.json`).
pub fn cmd_fit(spec: &ExperimentSpec, out: &Path) -> Result<FitResult> {
    let started = Instant::now();
    let (model, _) = spec.model.build()?;
    let path = spec.data.as_ref().ok_or_else(|| Error::config("data", "fit needs a data path"))?;
    let data = ObservationSet::read_csv(path)?;
    if data.d() != model.dim() {
        return Err(Error::Data(format!(
            "{} has {} columns but the model has dimension {}",
            path.display(),
            data.d(),
            model.dim()
        )));
    }
    ensure_dir(out)?;
    let (_, fit_stream) = replicate_streams(spec.seed, 0, 0);
    let fit = thread_pool(spec.jobs)?.install(|| estimate(&data, &model, &spec.fit, &fit_stream))?;
    let doc = FitDocument { schema_version: SCHEMA_VERSION, model: spec.model.clone(), seed: spec.seed, data_rows: data.n(), fit };
    write_json(&out.join("fit.json"), &doc)?;
    write_json(&out.join("fit_timing.json"), &Timing { wall_time_seconds: started.elapsed().as_secs_f64(), jobs: spec.jobs })?;
    Ok(doc.fit)
}

// ---------------------------------------------------------------------------
// experiment

/// Outcome of one simulate→fit replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    pub outcome: std::result::Result<FitResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub true_value: f64,
    pub mean: f64,
    /// Square root of the unbiased sample variance; absent with one estimate.
    pub sd: Option<f64>,
    pub with_intervals: usize,
    pub covered: usize,
    /// `covered / with_intervals`; absent when no replicate has an interval.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub replications: usize,
    pub completed: usize,
    pub failures: usize,
    pub not_converged: usize,
    pub parameters: Vec<ParamSummary>,
    /// Fraction of completed replicates selecting a wrong candidate
    /// (finite parameter spaces only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
    pub failure_messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub spec: ExperimentSpec,
    pub results: Vec<SizeSummary>,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

fn run_replicate(model: &TailModel, theta: &[f64], spec: &ExperimentSpec, n: usize, size_index: usize, r: usize) -> ReplicateRecord {
    let (data_stream, fit_stream) = replicate_streams(spec.seed, r, size_index);
    let outcome = model
        .sample(&data_stream, theta, n)
        .and_then(|data| estimate(&data, model, &spec.fit, &fit_stream))
        .map_err(|e| e.to_string());
    ReplicateRecord { n, replicate: r, outcome }
}

fn summarise(model: &TailModel, theta: &[f64], n: usize, records: &[ReplicateRecord]) -> SizeSummary {
    let fits: Vec<&FitResult> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let failure_messages: Vec<String> = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("replicate {}: {e}", r.replicate)))
        .collect();
    let parameters = model
        .param_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let est: Vec<f64> = fits.iter().map(|f| f.theta_hat[k]).collect();
            let m = est.len() as f64;
            let mean = est.iter().sum::<f64>() / m;
            let sd = (est.len() > 1).then(|| (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt());
            let intervals: Vec<_> = fits.iter().filter_map(|f| f.intervals.as_ref().map(|iv| iv[k])).collect();
            let covered = intervals.iter().filter(|iv| iv.contains(theta[k])).count();
            ParamSummary {
                name,
                true_value: theta[k],
                mean,
                sd,
                with_intervals: intervals.len(),
                covered,
                coverage: (!intervals.is_empty()).then(|| covered as f64 / intervals.len() as f64),
            }
        })
        .collect();
    let error_rate = (model.family() == Family::MaxLinear && !fits.is_empty())
        .then(|| fits.iter().filter(|f| f.theta_hat[0] != theta[0]).count() as f64 / fits.len() as f64);
    SizeSummary {
        n,
        replications: records.len(),
        completed: fits.len(),
        failures: records.len() - fits.len(),
        not_converged: fits.iter().filter(|f| !f.converged).count(),
        parameters,
        error_rate,
        failure_messages,
    }
}

/// Runs every replicate for every sample size on a pool of `spec.jobs`
/// workers and aggregates in replicate order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let (model, theta) = spec.model.build()?;
    let pool = thread_pool(spec.jobs)?;
    let mut records = Vec::new();
    let mut results = Vec::new();
    for (s, n) in spec.n.values().into_iter().enumerate() {
        let batch: Vec<ReplicateRecord> = pool.install(|| {
            (0..spec.replications).into_par_iter().map(|r| run_replicate(&model, &theta, spec, n, s, r)).collect()
        });
        results.push(summarise(&model, &theta, n, &batch));
        records.extend(batch);
    }
    Ok(ExperimentReport { schema_version: SCHEMA_VERSION, spec: spec.clone(), results, records })
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-replicate rows: estimates, intervals and coverage flags per parameter.
pub fn write_replicates_csv(report: &ExperimentReport, names: &[String], theta: &[f64], path: &Path) -> Result<()> {
    let wrap = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    let mut header = vec!["n".to_string(), "replicate".into(), "status".into(), "converged".into(), "objective".into()];
    for name in names {
        header.extend([name.clone(), format!("{name}_lower"), format!("{name}_upper"), format!("{name}_covered")]);
    }
    header.push("message".into());
    w.write_record(&header).map_err(wrap)?;
    for rec in &report.records {
        let mut row = vec![rec.n.to_string(), rec.replicate.to_string()];
        match &rec.outcome {
            Ok(fit) => {
                row.extend(["ok".to_string(), fit.converged.to_string(), fmt_float(fit.objective)]);
                for (k, t) in fit.theta_hat.iter().enumerate() {
                    row.push(fmt_float(*t));
                    match fit.intervals.as_ref().map(|iv| iv[k]) {
                        Some(iv) => row.extend([fmt_float(iv.lower), fmt_float(iv.upper), iv.contains(theta[k]).to_string()]),
                        None => row.extend([String::new(), String::new(), String::new()]),
                    }
                }
                row.push(String::new());
            }
            Err(msg) => {
                row.extend(["failed".to_string(), String::new(), String::new()]);
                row.extend(std::iter::repeat_n(String::new(), 4 * names.len()));
                row.push(msg.clone());
            }
        }
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the study and writes `summary.json`, `replicates.csv` and
/// `timing.json` into `out`.
pub fn cmd_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    ensure_dir(out)?;
    let report = run_experiment(spec)?;
    let (model, theta) = spec.model.build()?;
    write_json(&out.join("summary.json"), &report)?;
    write_replicates_csv(&report, &model.param_names(), &theta, &out.join("replicates.csv"))?;
    write_json(&out.join("timing.json"), &Timing { wall_time_seconds: started.elapsed().as_secs_f64(), jobs: spec.jobs })?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// depsummary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCovariation {
    pub i: usize,
    pub j: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    pub covariation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceSummary {
    pub schema_version: u32,
    pub family: Family,
    pub theta: Vec<f64>,
    pub extremal_coefficient: f64,
    pub covariations: Vec<PairCovariation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Extremal coefficient of all sites and the co-variation of every pair
/// (only for standard 1-Fréchet margins). Written to `depsummary.json`
/// when `out` is given.
pub fn cmd_depsummary(spec: &ExperimentSpec, out: Option<&Path>) -> Result<DependenceSummary> {
    let (model, theta) = spec.model.build()?;
    let summary = thread_pool(spec.jobs)?.install(|| -> Result<_> {
        let theta_d = extremal_coefficient(&model, &theta)?;
        let d = model.dim();
        let (covariations, note) = if model.has_standard_margins(&theta)? {
            let mut pairs = Vec::new();
            for i in 0..d {
                for j in i + 1..d {
                    let distance = match &model {
                        TailModel::Schlather(m) => Some(m.sites.distance(i, j)),
                        _ => None,
                    };
                    pairs.push(PairCovariation { i: i + 1, j: j + 1, distance, covariation: covariation(&model, &theta, i, j)? });
                }
            }
            (pairs, None)
        } else {
            (Vec::new(), Some("co-variations need standard 1-Fréchet margins; omitted".to_string()))
        };
        Ok(DependenceSummary {
            schema_version: SCHEMA_VERSION,
            family: model.family(),
            theta: theta.clone(),
            extremal_coefficient: theta_d,
            covariations,
            note,
        })
    })?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("depsummary.json"), &summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_spec() -> ExperimentSpec {
        ExperimentSpec::from_json(
            r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 5, "theta": [5.0, 0.7]},
                "n": 100, "replications": 2, "seed": 42,
                "fit": {"directions": 50, "meat_draws": 1000}}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad = r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 5, "theta": [5.0, 1.5]}}"#;
        match ExperimentSpec::from_json(bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "model.theta"),
            e => panic!("{e}"),
        }
        let bad = r#"{"schema_version": 2, "model": {"family": "logistic", "dim": 5, "theta": [5.0, 0.5]}}"#;
        assert!(matches!(ExperimentSpec::from_json(bad), Err(Error::Config { path, .. }) if path == "schema_version"));
        let bad = r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 5, "theta": [5.0, 0.5]}, "fit": {"meat_draws": 10}}"#;
        assert!(matches!(ExperimentSpec::from_json(bad), Err(Error::Config { path, .. }) if path == "fit.meat_draws"));
        let bad = r#"{"schema_version": 1, "model": {"family": "max_linear", "candidates": ["nope"], "theta": 0}}"#;
        assert!(matches!(ExperimentSpec::from_json(bad), Err(Error::Config { path, .. }) if path == "model.candidates[0]"));
        assert!(ExperimentSpec::from_json(r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 2, "theta": [1, 0.5]}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn echo_omits_worker_count() {
        let mut a = logistic_spec();
        a.jobs = 8;
        let text = serde_json::to_string(&a).unwrap();
        assert!(!text.contains("jobs"));
    }

    #[test]
    fn experiment_is_independent_of_worker_count() {
        let mut spec = logistic_spec();
        let one = serde_json::to_string(&run_experiment(&spec).unwrap()).unwrap();
        spec.jobs = 3;
        let three = serde_json::to_string(&run_experiment(&spec).unwrap()).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn aggregates_match_records() {
        let report = run_experiment(&logistic_spec()).unwrap();
        let s = &report.results[0];
        let est: Vec<f64> = report.records.iter().map(|r| r.outcome.as_ref().unwrap().theta_hat[0]).collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (est.len() as f64 - 1.0);
        assert_eq!(s.parameters[0].mean, mean);
        assert!((s.parameters[0].sd.unwrap().powi(2) - var).abs() <= 1e-12 * var);
        assert_eq!(s.completed + s.failures, s.replications);
    }

    #[test]
    fn depsummary_logistic() {
        let spec = ExperimentSpec::from_json(r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 5, "theta": [1.0, 0.7]}}"#).unwrap();
        let s = cmd_depsummary(&spec, None).unwrap();
        assert!((s.extremal_coefficient - 5f64.powf(0.7)).abs() < 1e-12);
        assert_eq!(s.covariations.len(), 10);
        let scaled = ExperimentSpec::from_json(r#"{"schema_version": 1, "model": {"family": "logistic", "dim": 3, "theta": [2.0, 0.7]}}"#).unwrap();
        assert!(cmd_depsummary(&scaled, None).unwrap().note.is_some());
    }
}
