//! Experiment orchestration for prefdens.
//!
//! Named experiments run end to end from a flat typed configuration and a
//! master seed, write CSV and JSON files atomically into an output
//! directory, and summarize themselves with pass/fail checks computed from
//! those files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod record;

pub use error::{Error, Result};

use config::Config;
use experiments::{find, Ctx, REGISTRY};
use output::{write_atomic, Emitter};
use record::{Check, Manifest, RunRecord, Summary, SUMMARY_SCHEMA_VERSION};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RECORD_FILE: &str = "record.json";

/// Resolves the configuration of a manifest against its experiment schema.
pub fn resolve_config(manifest: &Manifest) -> Result<Config> {
    let exp = find(&manifest.name)?;
    let text = match &manifest.config_file {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::ConfigFile(format!("{}: {e}", p.display())))?),
        None => None,
    };
    (exp.schema)().resolve(text.as_deref(), &manifest.overrides)
}

/// Runs one experiment end to end.
pub fn run(manifest: &Manifest) -> Result<RunRecord> {
    let exp = find(&manifest.name)?;
    let cfg = resolve_config(manifest)?;
    let start = Instant::now();
    let mut out = Emitter::create(&manifest.out_dir)?;
    out.write(CONFIG_FILE, &cfg.to_toml())?;
    (exp.run)(&mut Ctx { cfg: &cfg, seed: manifest.seed, out: &mut out })?;
    let mut files = out.files().to_vec();
    files.extend([SUMMARY_FILE.to_string(), RECORD_FILE.to_string()]);
    let summary = summarize(out.dir(), &cfg, manifest.seed, &manifest.name, files)?;
    out.write(SUMMARY_FILE, &to_json(&summary)?)?;
    let record = RunRecord { manifest: manifest.clone(), summary, wall_time_s: start.elapsed().as_secs_f64() };
    out.write(RECORD_FILE, &to_json(&record)?)?;
    Ok(record)
}

fn summarize(dir: &Path, cfg: &Config, seed: u64, name: &str, files: Vec<String>) -> Result<Summary> {
    let exp = find(name)?;
    let outcome = (exp.outcome)(dir, cfg)?;
    Ok(Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        experiment: name.to_string(),
        figures: exp.figures.to_string(),
        seed,
        config_hash: cfg.content_hash(),
        files,
        passed: outcome.passed(),
        metrics: outcome.metrics,
        checks: outcome.checks,
    })
}

/// Recomputes a run's summary from its output directory alone.
pub fn recompute(dir: &Path) -> Result<Summary> {
    let old: Summary = serde_json::from_str(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE))?;
    let cfg = (find(&old.experiment)?.schema)().resolve(Some(&text), &[])?;
    summarize(dir, &cfg, old.seed, &old.experiment, old.files)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Independent runs of `manifest` with `param` set to each value. Point `i`
/// uses a seed split from the master seed and writes to its own
/// subdirectory; `sweep_<param>.csv` in the manifest's directory compares
/// the final metrics.
pub fn sweep(manifest: &Manifest, param: &str, values: &[String]) -> Result<Vec<RunRecord>> {
    let exp = find(&manifest.name)?;
    let schema = (exp.schema)();
    schema
        .spec(param)
        .map_err(|_| Error::UnknownParameter { experiment: manifest.name.clone(), key: param.to_string() })?;
    if values.is_empty() {
        return Ok(Vec::new());
    }
    for v in values {
        schema.parse_value(param, v)?;
    }
    let points: Vec<(usize, String)> = values.iter().cloned().enumerate().collect();
    let records = prefdens::exec::map_jobs(points, |(i, v)| {
        let mut m = manifest.clone();
        m.seed = prefdens::seed::derive_indexed(manifest.seed, "sweep", i as u64);
        m.out_dir = manifest.out_dir.join(format!("{param}_{v}"));
        m.overrides.push((param.to_string(), v));
        run(&m)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut metric_names: Vec<&String> = records.iter().flat_map(|r| r.summary.metrics.keys()).collect();
    metric_names.sort_unstable();
    metric_names.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![param.to_string(), "seed".into(), "passed".into()];
    header.extend(metric_names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (r, v) in records.iter().zip(values) {
        let mut row = vec![v.clone(), r.summary.seed.to_string(), r.summary.passed.to_string()];
        row.extend(
            metric_names
                .iter()
                .map(|k| r.summary.metrics.get(*k).map(|x| prefdens::density::fmt17(*x)).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    std::fs::create_dir_all(&manifest.out_dir)?;
    write_atomic(&manifest.out_dir.join(format!("sweep_{param}.csv")), &text)?;
    Ok(records)
}

/// The deterministic result of the acceptance suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub summaries: Vec<Summary>,
    pub passed: bool,
}

/// Runs every registered experiment with its defaults. Writes
/// `verify.json` (deterministic) and `timings.json` (wall times) to
/// `out_dir`, with one subdirectory per experiment.
pub fn verify(seed: u64, out_dir: &Path, only: &[String]) -> Result<(VerifyReport, Vec<(String, f64)>)> {
    for name in only {
        find(name)?;
    }
    let mut summaries = Vec::new();
    let mut timings = Vec::new();
    for exp in REGISTRY.iter().filter(|e| only.is_empty() || only.iter().any(|n| n == e.name)) {
        let rec = run(&Manifest::new(exp.name, seed, out_dir.join(exp.name)))?;
        timings.push((exp.name.to_string(), rec.wall_time_s));
        summaries.push(rec.summary);
    }
    let passed = summaries.iter().all(|s| s.passed);
    let report = VerifyReport { schema_version: SUMMARY_SCHEMA_VERSION, seed, summaries, passed };
    write_atomic(&out_dir.join("verify.json"), &to_json(&report)?)?;
    let t: std::collections::BTreeMap<&str, f64> = timings.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    write_atomic(&out_dir.join("timings.json"), &to_json(&t)?)?;
    Ok((report, timings))
}

/// One line per check: status, check id, comparison.
pub fn check_table(summaries: &[Summary]) -> String {
    let rows: Vec<&Check> = summaries.iter().flat_map(|s| &s.checks).collect();
    let width = rows.iter().map(|c| c.id.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in rows {
        s.push_str(&format!("{}  {:width$}  {}\n", if c.pass { "PASS" } else { "FAIL" }, c.id, c.describe()));
    }
    s
}

/// Default output directory for a run.
pub fn default_out(name: &str, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(format!("{name}-seed{seed}"))
}

/// Parses a `--values` list: comma separated, brackets optional.
pub fn split_values(raw: &str) -> Vec<String> {
    raw.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
