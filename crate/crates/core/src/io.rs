//! Run configuration, CSV ingestion and output files.
//!
//! A run is described by one TOML file (or the manifest of an earlier run)
//! plus the command-line overrides `--mode`, `--data`, `--seed` and `--out`.
//! Every output is a pure function of the configuration, the seed and the
//! input files: no timestamps, no host paths, no thread-dependent order.
//!
//! Files written per mode:
//!
//! | mode | files |
//! |---|---|
//! | `fit` | `draws.json`, `curves.csv`, `summary.csv`, `manifest.json` |
//! | `predict` | `predict_curves.csv`, `predict_manifest.json` |
//! | `benchmark` | `benchmark.csv`, `benchmark_summary.csv`, `manifest.json` |
//! | `simulate` | `data.csv`, `manifest.json` |

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardization};
use crate::dpm::{run_chain, ChainDiagnostics, Hyperparams, PosteriorDraws};
use crate::error::{Error, Result};
use crate::jitter::JitterConfig;
use crate::predictive::{Predictor, QuantileTable};
use crate::sim::{self, BenchmarkConfig, Method, Scenario, ScenarioKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Fit,
    Predict,
    Benchmark,
    Simulate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::Predict => "predict",
            Mode::Benchmark => "benchmark",
            Mode::Simulate => "simulate",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit" => Ok(Mode::Fit),
            "predict" => Ok(Mode::Predict),
            "benchmark" => Ok(Mode::Benchmark),
            "simulate" => Ok(Mode::Simulate),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which columns to read and whether to standardize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub response: String,
    /// `None` takes every column except the response, in file order.
    pub covariates: Option<Vec<String>>,
    pub standardize: bool,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { response: "y".into(), covariates: None, standardize: true }
    }
}

/// Covariate rows at which curves are evaluated. One covariate varies over
/// `points` equally spaced values between its observed extremes (or over
/// `values`, in data units); the others sit at their sample means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    /// Defaults to the first covariate.
    pub vary: Option<String>,
    pub values: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 50, vary: None, values: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub scenarios: Vec<ScenarioKind>,
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub grid_points: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            scenarios: b.scenarios,
            sizes: b.sizes,
            methods: b.methods,
            replications: b.replications,
            grid_points: b.grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: ScenarioKind,
    pub n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { scenario: ScenarioKind::Binomial, n: 100 }
    }
}

/// Everything a run depends on besides the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// The single source of randomness; copied into `hyper.seed`.
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub response: String,
    pub covariates: Option<Vec<String>>,
    pub standardize: bool,
    /// Output directory. Left out of the manifest so that reruns into
    /// another directory write identical bytes.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Fitted draws read by `predict`; defaults to `<out>/draws.json`.
    pub draws: Option<PathBuf>,
    pub quantiles: Vec<f64>,
    pub grid: GridSpec,
    pub hyper: Hyperparams,
    pub jitter: JitterConfig,
    pub benchmark: BenchmarkSection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = DataSpec::default();
        Self {
            mode: Mode::Fit,
            seed: 1,
            data: None,
            response: spec.response,
            covariates: spec.covariates,
            standardize: spec.standardize,
            out: PathBuf::from("out"),
            draws: None,
            quantiles: vec![0.1, 0.5, 0.9],
            grid: GridSpec::default(),
            hyper: Hyperparams::default(),
            jitter: JitterConfig::default(),
            benchmark: BenchmarkSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML configuration, or the `config` member of a
    /// `manifest.json` written by an earlier run.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let config = value.get("config").cloned().unwrap_or(value);
            return Ok(serde_json::from_value(config)?);
        }
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn data_spec(&self) -> DataSpec {
        DataSpec { response: self.response.clone(), covariates: self.covariates.clone(), standardize: self.standardize }
    }

    /// Propagates the run seed and checks cross-field constraints.
    pub fn resolve(mut self) -> Result<Self> {
        self.hyper.seed = self.seed;
        self.hyper.validate()?;
        if self.quantiles.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config(format!("quantile levels must lie in (0, 1), got {:?}", self.quantiles)));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("quantile levels must be strictly increasing, got {:?}", self.quantiles)));
        }
        if self.grid.points == 0 && self.grid.values.is_none() {
            return Err(Error::Config("grid.points must be at least 1".into()));
        }
        if matches!(self.mode, Mode::Fit | Mode::Predict) && self.data.is_none() {
            return Err(Error::Config(format!("mode {} needs a data file", self.mode)));
        }
        if self.mode == Mode::Simulate && self.simulate.n == 0 {
            return Err(Error::Config("simulate.n must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        let b = &self.benchmark;
        BenchmarkConfig {
            scenarios: b.scenarios.clone(),
            sizes: b.sizes.clone(),
            methods: b.methods.clone(),
            replications: b.replications,
            seed: self.seed,
            grid_points: b.grid_points,
            hyper: self.hyper.clone(),
            jitter: self.jitter,
        }
    }
}

/// Reads counts and covariates from a headed CSV file. Row numbers in
/// errors count data rows from 1.
pub fn load_csv(path: &Path, spec: &DataSpec) -> Result<Dataset> {
    read_csv(open(path)?, spec)
}

/// [`load_csv`] from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, spec: &DataSpec) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = column(&spec.response)?;
    let names: Vec<String> = match &spec.covariates {
        Some(names) => names.clone(),
        None => headers.iter().filter(|h| *h != spec.response).map(str::to_string).collect(),
    };
    let cols = names.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut cov = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        y.push(parse_count(field(y_col), row)?);
        let values = cols
            .iter()
            .zip(&names)
            .map(|(&c, name)| {
                let v: f64 = field(c)
                    .parse()
                    .map_err(|_| Error::Parse { row, message: format!("covariate `{name}` is not a number: {:?}", field(c)) })?;
                if !v.is_finite() {
                    return Err(Error::Parse { row, message: format!("covariate `{name}` is not finite") });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        cov.push(values);
    }
    if y.is_empty() {
        return Err(Error::Parse { row: 1, message: "no data rows".into() });
    }

    let standardization = spec.standardize.then(|| standardization_of(&cov, names.len()));
    let stored: Vec<Vec<f64>> = match &standardization {
        Some(s) => cov.iter().map(|c| s.forward(c)).collect(),
        None => cov,
    };
    let mut data = Dataset::with_intercept(y, &stored)?;
    data.covariate_names = names;
    data.standardization = standardization;
    Ok(data)
}

fn parse_count(field: &str, row: usize) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    let message = if field.is_empty() {
        "missing count".to_string()
    } else if field.parse::<i64>().is_ok() {
        format!("negative count {field}")
    } else if field.parse::<f64>().is_ok() {
        format!("count {field} is not an integer")
    } else {
        format!("count {field:?} is not a number")
    };
    Err(Error::Parse { row, message })
}

/// Column means and population standard deviations; a constant column is
/// centred only.
fn standardization_of(cov: &[Vec<f64>], d: usize) -> Standardization {
    let n = cov.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| cov.iter().map(|c| c[j]).sum::<f64>() / n).collect();
    let sds = (0..d)
        .map(|j| {
            let var = cov.iter().map(|c| (c[j] - means[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Standardization { means, sds }
}

/// Covariates of row `i` in data units.
pub fn raw_covariates(data: &Dataset, i: usize) -> Vec<f64> {
    match &data.standardization {
        Some(s) => s.inverse(data.covariates(i)),
        None => data.covariates(i).to_vec(),
    }
}

/// Grid rows in data units (covariates only, no intercept).
pub fn covariate_grid(data: &Dataset, spec: &GridSpec) -> Result<Vec<Vec<f64>>> {
    let d = data.d() - 1;
    if d == 0 {
        return Ok(vec![Vec::new()]);
    }
    let raw: Vec<Vec<f64>> = (0..data.n()).map(|i| raw_covariates(data, i)).collect();
    let means: Vec<f64> = (0..d).map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / raw.len() as f64).collect();
    let vary = match &spec.vary {
        Some(name) => {
            data.covariate_names.iter().position(|n| n == name).ok_or_else(|| Error::MissingColumn(name.clone()))?
        }
        None => 0,
    };
    let values = match &spec.values {
        Some(v) => v.clone(),
        None => {
            let lo = raw.iter().map(|r| r[vary]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|r| r[vary]).fold(f64::NEG_INFINITY, f64::max);
            if spec.points == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..spec.points).map(|g| lo + (hi - lo) * g as f64 / (spec.points - 1) as f64).collect()
            }
        }
    };
    Ok(values
        .into_iter()
        .map(|v| {
            let mut row = means.clone();
            row[vary] = v;
            row
        })
        .collect())
}

/// Design row (intercept plus stored covariates) for data-unit covariates.
pub fn design_row(data: &Dataset, raw: &[f64]) -> Vec<f64> {
    let stored = match &data.standardization {
        Some(s) => s.forward(raw),
        None => raw.to_vec(),
    };
    std::iter::once(1.0).chain(stored).collect()
}

/// Saved output of `fit`, read back by `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub version: String,
    pub data: DataSpec,
    pub n: usize,
    pub standardization: Option<Standardization>,
    pub hyper: Hyperparams,
    pub draws: PosteriorDraws,
}

/// Quantile curves over the configured grid, with the grid in data units.
pub fn curves(draws: &PosteriorDraws, data: &Dataset, hyper: &Hyperparams, levels: &[f64], grid: &GridSpec) -> Result<QuantileTable> {
    let raw = covariate_grid(data, grid)?;
    let design: Vec<Vec<f64>> = raw.iter().map(|r| design_row(data, r)).collect();
    let pred = Predictor::new(draws, data, hyper)?;
    let mut table = pred.quantile_curves(levels, &design)?;
    table.x_grid = raw;
    Ok(table)
}

/// Long-format curves: one column per covariate, then `p` and `quantile`.
pub fn write_curves_csv<W: Write>(table: &QuantileTable, covariate_names: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = covariate_names.iter().map(String::as_str).chain(["p", "quantile"]).collect();
    w.write_record(&header)?;
    for (x, row) in table.x_grid.iter().zip(&table.values) {
        for (p, q) in table.p.iter().zip(row) {
            let record: Vec<String> = x.iter().map(|v| v.to_string()).chain([p.to_string(), q.to_string()]).collect();
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-sweep trace: cluster count and acceptance rates.
pub fn write_summary_csv<W: Write>(diag: &ChainDiagnostics, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "clusters", "allocation_acceptance", "atom_acceptance_b", "atom_acceptance_c"])?;
    for (t, k) in diag.clusters.iter().enumerate() {
        let rate = |v: &[f64]| v.get(t).map_or(String::new(), f64::to_string);
        w.write_record([
            (t + 1).to_string(),
            k.to_string(),
            rate(&diag.allocation_acceptance),
            rate(&diag.atom_acceptance_b),
            rate(&diag.atom_acceptance_c),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts and covariates in data units, readable by [`load_csv`].
pub fn write_dataset_csv<W: Write>(data: &Dataset, response: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = std::iter::once(response).chain(data.covariate_names.iter().map(String::as_str)).collect();
    w.write_record(&header)?;
    for i in 0..data.n() {
        let record: Vec<String> =
            std::iter::once(data.y()[i].to_string()).chain(raw_covariates(data, i).iter().map(f64::to_string)).collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    seed: u64,
    outputs: &'a [String],
    config: &'a RunConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the files of a fit: draws, curves, chain summary and manifest.
pub fn emit_outputs(
    out: &Path,
    artifact: &FitArtifact,
    table: &QuantileTable,
    covariate_names: &[String],
    cfg: &RunConfig,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    write_json(&out.join("draws.json"), artifact)?;
    write_curves_csv(table, covariate_names, create(&out.join("curves.csv"))?)?;
    write_summary_csv(&artifact.draws.diagnostics, create(&out.join("summary.csv"))?)?;
    finish(out, cfg, &["draws.json", "curves.csv", "summary.csv"], "manifest.json")
}

fn finish(out: &Path, cfg: &RunConfig, files: &[&str], manifest_name: &str) -> Result<Vec<PathBuf>> {
    let mut outputs: Vec<String> = files.iter().map(|f| f.to_string()).collect();
    outputs.push(manifest_name.into());
    let manifest = Manifest { tool: "count-dpm", version: VERSION, mode: cfg.mode, seed: cfg.seed, outputs: &outputs, config: cfg };
    write_json(&out.join(manifest_name), &manifest)?;
    Ok(outputs.iter().map(|f| out.join(f)).collect())
}

/// Executes one run and returns the paths written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = cfg.clone().resolve()?;
    let out = cfg.out.as_path();
    match cfg.mode {
        Mode::Fit => {
            let data = load_csv(cfg.data.as_deref().expect("checked by resolve"), &cfg.data_spec())?;
            let draws = run_chain(&data, &cfg.hyper)?;
            let table = curves(&draws, &data, &cfg.hyper, &cfg.quantiles, &cfg.grid)?;
            let artifact = FitArtifact {
                version: VERSION.into(),
                data: cfg.data_spec(),
                n: data.n(),
                standardization: data.standardization.clone(),
                hyper: cfg.hyper.clone(),
                draws,
            };
            emit_outputs(out, &artifact, &table, &data.covariate_names, &cfg)
        }
        Mode::Predict => {
            let path = cfg.draws.clone().unwrap_or_else(|| out.join("draws.json"));
            let artifact: FitArtifact = serde_json::from_reader(std::io::BufReader::new(open(&path)?))?;
            let data = load_csv(cfg.data.as_deref().expect("checked by resolve"), &artifact.data)?;
            if data.n() != artifact.n || data.standardization != artifact.standardization {
                return Err(Error::Config(format!(
                    "{} does not match the data the draws in {} were fitted to",
                    cfg.data.as_deref().expect("checked by resolve").display(),
                    path.display()
                )));
            }
            // the fitted model's settings, with this run's seed for fresh base-measure draws
            let hyper = Hyperparams { seed: cfg.seed, ..artifact.hyper.clone() };
            let table = curves(&artifact.draws, &data, &hyper, &cfg.quantiles, &cfg.grid)?;
            fs::create_dir_all(out)?;
            // prefixed so that predicting into the fit directory keeps the fit's files
            write_curves_csv(&table, &data.covariate_names, create(&out.join("predict_curves.csv"))?)?;
            finish(out, &cfg, &["predict_curves.csv"], "predict_manifest.json")
        }
        Mode::Benchmark => {
            let rows = sim::run_benchmark(&cfg.benchmark_config())?;
            fs::create_dir_all(out)?;
            sim::write_benchmark_csv(&rows, create(&out.join("benchmark.csv"))?)?;
            sim::write_benchmark_csv(&sim::summarize(&rows), create(&out.join("benchmark_summary.csv"))?)?;
            finish(out, &cfg, &["benchmark.csv", "benchmark_summary.csv"], "manifest.json")
        }
        Mode::Simulate => {
            let s = &cfg.simulate;
            let data = Scenario { kind: s.scenario, n: s.n, seed: cfg.seed }.generate_seeded()?;
            fs::create_dir_all(out)?;
            write_dataset_csv(&data, "y", create(&out.join("data.csv"))?)?;
            finish(out, &cfg, &["data.csv"], "manifest.json")
        }
    }
}
