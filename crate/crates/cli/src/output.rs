use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::scenario::Outcome;

/// Summary schema version written as `"schema"`.
pub const SCHEMA: u32 = 1;

pub fn num(value: f64) -> String {
    format!("{value:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path.display().to_string(), e.into()))
}

fn write_record<I, S>(w: &mut csv::Writer<fs::File>, path: &Path, record: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(record)
        .map_err(|e| CliError::io(path.display().to_string(), e.into()))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

/// Write the resolved config, the CSV tables and `summary.json`; returns the file names.
pub fn write_outcome(
    dir: &Path,
    cfg: &ScenarioConfig,
    outcome: &Outcome,
) -> Result<Vec<String>, CliError> {
    ensure_dir(dir)?;
    let mut files = vec!["resolved.toml".to_string()];
    write_text(&dir.join("resolved.toml"), &cfg.to_toml())?;

    for (name, spectrum) in &outcome.spectra {
        let file = format!("{name}.csv");
        let path = dir.join(&file);
        let mut w = csv_writer(&path)?;
        write_record(&mut w, &path, ["omega", "re", "im"])?;
        for (omega, v) in spectrum.omegas().zip(spectrum.values()) {
            write_record(&mut w, &path, [num(omega), num(v.re), num(v.im)])?;
        }
        finish(w, &path)?;
        files.push(file);
    }

    if let Some(series) = &outcome.series {
        let file = "timeseries.csv".to_string();
        let path = dir.join(&file);
        let mut w = csv_writer(&path)?;
        let header =
            std::iter::once("t".to_string()).chain(series.columns.iter().map(|(n, _)| n.clone()));
        write_record(&mut w, &path, header)?;
        for (j, t) in series.times.iter().enumerate() {
            let row = std::iter::once(num(*t)).chain(series.columns.iter().map(|(_, c)| num(c[j])));
            write_record(&mut w, &path, row)?;
        }
        finish(w, &path)?;
        files.push(file);
    }

    if !outcome.budget.is_empty() {
        let file = "budget.csv".to_string();
        let path = dir.join(&file);
        let mut w = csv_writer(&path)?;
        write_record(&mut w, &path, ["component", "cancelled", "uncancelled"])?;
        for row in &outcome.budget {
            write_record(
                &mut w,
                &path,
                [
                    row.component.to_string(),
                    num(row.cancelled),
                    num(row.uncancelled),
                ],
            )?;
        }
        finish(w, &path)?;
        files.push(file);
    }

    files.push("summary.json".to_string());
    let summary = summary_json(outcome, &files);
    write_text(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("json") + "\n"),
    )?;
    Ok(files)
}

pub fn summary_json(outcome: &Outcome, files: &[String]) -> Value {
    let metrics: Map<String, Value> = outcome
        .metrics
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    json!({
        "schema": SCHEMA,
        "scheme": outcome.scheme.name(),
        "seeds": outcome.seeds,
        "metrics": metrics,
        "files": files,
    })
}
