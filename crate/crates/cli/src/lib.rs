//! Study harness behind the `mrdmoc` command.

pub mod config;
pub mod studies;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use config::{RunConfig, MANIFEST_SECTIONS};
use studies::{run_study, Context, Row, StudyResult, TimeSeries};

pub const RESULTS_HEADER: [&str; 8] = ["study", "param_p", "param_r", "dt_s", "tf_s", "metric", "value", "rep"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error{}: {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Model(#[from] mrdmoc::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("invariant check failed: {}", .0.join("; "))]
    Invariant(Vec<String>),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical or output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Model(e) if e.is_config() => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    /// Worker threads for independent sweep points; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Recorded in the manifest; the studies themselves are deterministic.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<Row>,
    pub files: Vec<PathBuf>,
}

/// Config text with any manifest sections removed.
pub fn config_echo(text: &str) -> String {
    let mut keep = true;
    let mut out = String::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            keep = !MANIFEST_SECTIONS.contains(&name.trim());
        }
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(config_echo(text).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config {
        line: None,
        field: "--jobs".into(),
        message: e.to_string(),
    })?;

    let ctx = Context::new(cfg)?;
    let mut results: Vec<StudyResult> = Vec::new();
    for &kind in &cfg.study.kinds {
        log::info!("running {}", kind.name());
        let started = std::time::Instant::now();
        let res = if kind == config::StudyKind::Tradeoff {
            run_study(&ctx, kind)?
        } else {
            pool.install(|| run_study(&ctx, kind))?
        };
        log::info!("{} finished in {:.2} s", kind.name(), started.elapsed().as_secs_f64());
        results.push(res);
    }

    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let mut files = Vec::new();
    let rows: Vec<Row> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let results_path = out_dir.join("results.csv");
    write_results(&results_path, &rows)?;
    files.push(results_path);

    for res in &results {
        for ts in &res.series {
            let path = out_dir.join(format!("{}.csv", ts.name));
            write_series(&path, ts)?;
            files.push(path);
        }
    }
    if cfg.output.svg {
        let charts: Vec<_> = results.iter().flat_map(|r| r.plots.iter()).collect();
        let rendered: Vec<_> = pool.install(|| charts.par_iter().map(|(name, c)| (name, c.render())).collect());
        for (name, svg) in rendered {
            let path = out_dir.join(name);
            match svg.map(|s| fs::write(&path, s)) {
                Some(Ok(())) => files.push(path),
                Some(Err(e)) => log::warn!("skipping plot {}: {e}", path.display()),
                None => log::warn!("skipping plot {}: nothing to draw", path.display()),
            }
        }
    }

    let violations: Vec<String> = results.iter().flat_map(|r| r.violations.iter().cloned()).collect();
    let manifest_path = out_dir.join("manifest");
    write_manifest(&manifest_path, cfg, opts, &results, &violations)?;
    files.push(manifest_path);

    if !violations.is_empty() {
        return Err(CliError::Invariant(violations));
    }
    Ok(RunSummary { out_dir, rows, files })
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Integers print plainly; everything else in shortest round-trip exponent form.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_results(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.study.to_string(),
            r.p.to_string(),
            r.r.to_string(),
            r.dt_s.map(|v| v.to_string()).unwrap_or_default(),
            r.tf_s.to_string(),
            r.metric.clone(),
            format_value(r.value),
            r.rep.to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn write_series(path: &Path, ts: &TimeSeries) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&ts.columns)?;
    for row in &ts.rows {
        w.write_record(row.iter().map(|&v| format_value(v)))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn write_manifest(
    path: &Path,
    cfg: &RunConfig,
    opts: &RunOptions,
    results: &[StudyResult],
    violations: &[String],
) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "[manifest]");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "timestamp = {}", chrono::Utc::now().to_rfc3339());
    let _ = writeln!(s, "config_sha256 = {}", config_hash(&cfg.source));
    let _ = writeln!(
        s,
        "studies = {}",
        cfg.study.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    );
    if let Some(seed) = opts.seed {
        let _ = writeln!(s, "seed = {seed}");
    }
    if let Some(j) = opts.jobs {
        let _ = writeln!(s, "jobs = {j}");
    }
    let _ = writeln!(s, "violations = {}", violations.len());
    let _ = writeln!(s, "\n[residuals]");
    for (k, v) in results.iter().flat_map(|r| r.summary.iter()) {
        let _ = writeln!(s, "{k} = {v:e}");
    }
    let _ = writeln!(s);
    s.push_str(&config_echo(&cfg.source));
    fs::write(path, s).map_err(|e| io_err(path, e))
}
