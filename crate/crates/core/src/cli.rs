//! Experiment runner: JSON configuration in, CSV/JSON reports out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::OverlapDecomposition;
use crate::diagnostics::{
    measure_with_model, positivity_bounds, positivity_with_model, solver_table, spectrum, structural_bounds,
    verify_bounds, wielandt_bounds, BoundReport, ConstantsReport, DenseModel, PositivityReport,
    SolverRow, SpectrumReport,
};
use crate::error::{Error, Result};
use crate::fem::StructuredGrid;
use crate::linalg::KrylovMethod;
use crate::operators::{build_form, LocalSolverBundle, MethodKind, DEFAULT_DENSE_CAP};
use crate::spaces::{wielandt_gap, InnerProduct, IpLabel, WielandtReport};

/// Random pairs per Wielandt check.
pub const WIELANDT_SAMPLES: usize = 200;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BOUND_FAILED: i32 = 2;

fn default_epsilon() -> Vec<f64> {
    vec![0.5, 0.1, 0.02, 0.004]
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    1000
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub cells_per_side: usize,
    pub blocks_per_side: usize,
    pub overlap_layers: usize,
    /// Method names; a bare `FEPS_T` expands over `epsilon`.
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub dense_cap: Option<usize>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Parses and validates; errors point at the offending line.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate().map_err(|ConfigIssue { key, message }| {
            Error::Config(match key_line(text, key) {
                Some(line) => format!("{message} at line {line}"),
                None => message,
            })
        })?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::from_json(&text)?;
        config.apply(overrides);
        config.validate().map_err(|i| Error::Config(i.message))?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.output {
            self.output = out.clone();
        }
        if let Some(cap) = overrides.dense_cap {
            self.dense_cap = cap;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
    }

    fn validate(&self) -> std::result::Result<(), ConfigIssue> {
        fn issue<T>(key: &'static str, message: String) -> std::result::Result<T, ConfigIssue> {
            Err(ConfigIssue { key, message })
        }
        if !(1..=2).contains(&self.dim) {
            return issue("dim", format!("dim must be 1 or 2, got {}", self.dim));
        }
        let grid = StructuredGrid::new(self.dim, self.cells_per_side)
            .or_else(|e| issue("cells_per_side", e.to_string()))?;
        OverlapDecomposition::new(&grid, self.blocks_per_side, self.overlap_layers).or_else(|e| {
            let key = match e {
                Error::IndivisibleBlocks { .. } => "blocks_per_side",
                _ => "overlap_layers",
            };
            issue(key, e.to_string())
        })?;
        for &eps in &self.epsilon {
            if !(eps > 0.0 && eps < 1.0) {
                return issue("epsilon", format!("epsilon must lie in (0, 1), got {eps}"));
            }
        }
        self.method_kinds().or_else(|e| issue("methods", e.to_string()))?;
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return issue("tol", format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if self.max_iter == 0 {
            return issue("max_iter", "max_iter must be positive".into());
        }
        let n = (self.cells_per_side - 1).pow(self.dim as u32);
        if self.dense_cap < n {
            return issue("dense_cap", format!("dense_cap {} is below the {n} free dofs", self.dense_cap));
        }
        if self.output.as_os_str().is_empty() {
            return issue("output", "output directory is empty".into());
        }
        Ok(())
    }

    /// Methods in configuration order, `FEPS_T` expanded.
    pub fn method_kinds(&self) -> Result<Vec<MethodKind>> {
        let mut kinds = Vec::new();
        for name in &self.methods {
            if name == "FEPS_T" {
                if self.epsilon.is_empty() {
                    return Err(Error::Config("FEPS_T needs a nonempty epsilon list".into()));
                }
                kinds.extend(self.epsilon.iter().map(|&e| MethodKind::FepsT(e)));
            } else {
                kinds.push(name.parse()?);
            }
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::Config(format!("method {k} listed twice")));
            }
        }
        Ok(kinds)
    }

    /// Short key identifying the configuration in CSV rows.
    pub fn key(&self) -> String {
        format!(
            "d{}_n{}_b{}_l{}",
            self.dim, self.cells_per_side, self.blocks_per_side, self.overlap_layers
        )
    }
}

struct ConfigIssue {
    key: &'static str,
    message: String,
}

fn key_line(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
    pub failed_bounds: usize,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        if self.failed_bounds > 0 {
            EXIT_BOUND_FAILED
        } else {
            EXIT_OK
        }
    }
}

/// Everything measured in one run; serialized as `constants.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: String,
    pub constants: ConstantsReport,
    pub spectra: Vec<SpectrumSummary>,
    pub positivity: Vec<PositivityReport>,
    pub wielandt: Vec<WielandtEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub method: MethodKind,
    pub kappa_aa: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa_spectral: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub min_field_of_values: f64,
    pub field_of_values_ip: IpLabel,
}

impl From<&SpectrumReport> for SpectrumSummary {
    fn from(s: &SpectrumReport) -> Self {
        Self {
            method: s.method,
            kappa_aa: s.kappa_aa,
            sigma_min: s.sigma_min,
            sigma_max: s.sigma_max,
            kappa_spectral: s.kappa_spectral,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            min_field_of_values: s.min_field_of_values,
            field_of_values_ip: s.field_of_values_ip,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WielandtEntry {
    pub epsilon: f64,
    pub report: WielandtReport,
}

/// Round-trip exact formatting used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn stage<T>(name: &'static str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    timings.push(StageTiming {
        stage: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn spectrum_file(kind: MethodKind) -> String {
    let name = kind.to_string().replace('(', "_").replace(')', "");
    format!("spectrum_{name}.csv")
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub const BOUNDS_HEADER: [&str; 7] = ["config", "method", "statement", "measured", "bound", "slack", "status"];
pub const SOLVER_HEADER: [&str; 9] = [
    "config",
    "method",
    "solver",
    "iterations",
    "converged",
    "relative_residual",
    "error_a",
    "matches_direct",
    "iteration_bound",
];

pub fn bounds_csv(config: &str, rows: &[BoundReport]) -> Result<String> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                config.to_string(),
                r.method.clone(),
                r.statement.clone(),
                fmt_f64(r.measured),
                fmt_f64(r.bound),
                fmt_f64(r.slack),
                r.status.to_string(),
            ]
        })
        .collect();
    csv_text(&BOUNDS_HEADER, &rows)
}

pub fn solver_csv(config: &str, rows: &[SolverRow]) -> Result<String> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                config.to_string(),
                r.method.clone(),
                r.solver.name().to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                fmt_f64(r.relative_residual),
                fmt_f64(r.error_a),
                r.matches_direct.to_string(),
                r.iteration_bound.map_or_else(|| "-".to_string(), |b| b.to_string()),
            ]
        })
        .collect();
    csv_text(&SOLVER_HEADER, &rows)
}

pub fn spectrum_csv(s: &SpectrumReport) -> Result<String> {
    let rows: Vec<Vec<String>> = s
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, z)| vec![i.to_string(), fmt_f64(z.re), fmt_f64(z.im)])
        .collect();
    csv_text(&["index", "re", "im"], &rows)
}

/// Runs every stage and writes the reports into `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    let mut timings = Vec::new();
    let kinds = stage("validate", &mut timings, || {
        config.validate().map_err(|i| Error::Config(i.message))?;
        config.method_kinds()
    })?;
    let key = config.key();

    let bundle = stage("assembly", &mut timings, || {
        let grid = StructuredGrid::new(config.dim, config.cells_per_side)?;
        let od = OverlapDecomposition::new(&grid, config.blocks_per_side, config.overlap_layers)?;
        Ok(LocalSolverBundle::new(&grid, &od)?.with_dense_cap(config.dense_cap))
    })?;
    let model = stage("model", &mut timings, || {
        bundle.check_dense(bundle.dim())?;
        DenseModel::new(&bundle)
    })?;
    let constants = stage("constants", &mut timings, || {
        measure_with_model(&bundle, &model, &config.epsilon)
    })?;
    let spectra = stage("spectrum", &mut timings, || {
        kinds.iter().map(|&k| spectrum(k, &bundle)).collect::<Result<Vec<_>>>()
    })?;
    let positivity = stage("positivity", &mut timings, || {
        config
            .epsilon
            .iter()
            .map(|&e| positivity_with_model(&bundle, &model, e))
            .collect::<Result<Vec<_>>>()
    })?;
    let wielandt = stage("wielandt", &mut timings, || {
        let b = InnerProduct::new(bundle.b_form().gram(), IpLabel::B)?;
        config
            .epsilon
            .iter()
            .map(|&e| {
                let c = build_form(bundle.grid(), bundle.decomposition(), Some(e))?.gram();
                let c = InnerProduct::new(c, IpLabel::CEps)?;
                Ok(WielandtEntry {
                    epsilon: e,
                    report: wielandt_gap(&b, &c, WIELANDT_SAMPLES, config.seed)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let bounds = stage("bounds", &mut timings, || {
        let mut rows = structural_bounds(&constants);
        for s in &spectra {
            rows.extend(verify_bounds(s.method, &constants, s)?);
        }
        rows.extend(positivity_bounds(&positivity));
        for w in &wielandt {
            rows.extend(wielandt_bounds(w.epsilon, &w.report));
        }
        Ok(rows)
    })?;
    let solver = stage("solver", &mut timings, || {
        let kappa_as = spectra.iter().find(|s| s.method == MethodKind::As).and_then(|s| s.kappa_spectral);
        solver_table(&bundle, &kinds, config.tol, config.max_iter, kappa_as)
    })?;

    let report = ExperimentReport {
        config: key.clone(),
        constants,
        spectra: spectra.iter().map(SpectrumSummary::from).collect(),
        positivity,
        wielandt,
    };
    let rows: Vec<SolverRow> = solver.into_iter().map(|r| r.row).collect();
    let failed_bounds = bounds.iter().filter(|r| r.failed()).count();

    let files = stage("write", &mut timings, || {
        let mut outputs = vec![
            ("constants.json".to_string(), serde_json::to_string_pretty(&report)? + "\n"),
            ("bounds.csv".to_string(), bounds_csv(&key, &bounds)?),
        ];
        for s in &spectra {
            outputs.push((spectrum_file(s.method), spectrum_csv(s)?));
        }
        outputs.push(("solver_table.csv".to_string(), solver_csv(&key, &rows)?));
        fs::create_dir_all(&config.output)?;
        let mut files = Vec::new();
        for (name, body) in outputs {
            fs::write(config.output.join(&name), &body)?;
            files.push(FileEntry {
                name,
                sha256: hex::encode(Sha256::digest(body.as_bytes())),
                bytes: body.len(),
            });
        }
        Ok(files)
    })?;

    let mut versions = BTreeMap::new();
    versions.insert("schwarz-lab".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("nalgebra".to_string(), "0.35".to_string());
    let manifest = RunManifest {
        config: config.clone(),
        versions,
        stages: timings,
        files,
        failed_bounds,
    };
    fs::write(config.output.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Main bound row per method, shown in the summary.
fn headline(kind: MethodKind) -> &'static str {
    match kind {
        MethodKind::As => "kappa_lions",
        MethodKind::FeT => "central_limit",
        MethodKind::FepsT(_) => "central",
        MethodKind::EfT => "five_norm_swapped",
        MethodKind::RasCut | MethodKind::ObddCut => "kappa_vs_lions",
    }
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn short(x: &str) -> String {
    x.parse::<f64>().map_or_else(|_| x.to_string(), |v| format!("{v:.4e}"))
}

/// Fixed-width table, one row per method in enum order.
pub fn print_summary(manifest_path: &Path) -> Result<String> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bounds = read_csv(&dir.join("bounds.csv"))?;
    let solver = read_csv(&dir.join("solver_table.csv"))?;
    let mut kinds = manifest.config.method_kinds()?;
    kinds.sort_by(|a, b| a.rank().cmp(&b.rank()).then(b.epsilon().partial_cmp(&a.epsilon()).unwrap()));

    let smallest = manifest.config.epsilon.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>12} {:>12} {:>10} {:>8} {:>12}",
        "method", "kappa", "bound", "slack", "iters", "positivity"
    );
    for kind in kinds {
        let name = kind.to_string();
        let row = bounds.iter().find(|r| &r[1] == name.as_str() && &r[2] == headline(kind));
        let (kappa, bound, slack) = row.map_or(("-".into(), "-".into(), "-".into()), |r| {
            (short(&r[3]), short(&r[4]), r[5].parse::<f64>().map_or("-".into(), |s| format!("{s:.4}")))
        });
        let iters = solver
            .iter()
            .find(|r| &r[1] == name.as_str() && &r[2] == KrylovMethod::Gmres.name())
            .map_or("-".to_string(), |r| r[3].to_string());
        let eps = match kind {
            MethodKind::FeT if smallest.is_finite() => Some(smallest),
            MethodKind::FepsT(e) => Some(e),
            _ => None,
        };
        let positivity = eps
            .and_then(|e| {
                let tag = format!("positivity(eps={e})");
                bounds.iter().find(|r| &r[2] == tag.as_str()).map(|r| {
                    let fov = -r[3].parse::<f64>().unwrap_or(f64::NAN);
                    let verdict = if &r[6] == "fail" { "fail" } else { "ok" };
                    format!("{fov:.3e} {verdict}")
                })
            })
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "{:<16} {:>12} {:>12} {:>10} {:>8} {:>12}",
            name, kappa, bound, slack, iters, positivity
        );
    }
    Ok(out)
}
