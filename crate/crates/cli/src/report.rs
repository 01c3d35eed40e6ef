//! CSV and JSON writers. Floats are written in shortest round-trip form so
//! reruns produce identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::manifest::RunManifest;
use crate::CliError;

pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub(crate) fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        debug_assert_eq!(r.len(), header.len(), "{name}");
        w.write_record(r)?;
    }
    w.flush()?;
    manifest.outputs.push(name.into());
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::write(dir.join(name), json + "\n")?;
    manifest.outputs.push(name.into());
    Ok(())
}

pub(crate) fn write_text(
    dir: &Path,
    name: &str,
    text: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    std::fs::write(dir.join(name), text)?;
    manifest.outputs.push(name.into());
    Ok(())
}
