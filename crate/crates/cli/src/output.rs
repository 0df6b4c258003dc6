//! CSV tables with a JSON sidecar describing how they were made.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fringelab::io::Table;
use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    /// Name of the CSV this sidecar belongs to.
    data: String,
    columns: &'a [String],
    settings: BTreeMap<String, String>,
    results: Value,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `table` to `csv` and the sidecar next to it. The sidecar has no
/// timestamps or absolute paths, so identical runs give identical bytes.
pub fn write(
    csv: &Path,
    command: &str,
    table: &Table,
    settings: BTreeMap<String, String>,
    results: Value,
) -> Result<PathBuf> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(csv).with_context(|| format!("creating {}", csv.display()))?;
    table.write(BufWriter::new(file)).with_context(|| format!("writing {}", csv.display()))?;

    let sidecar = Sidecar {
        tool: "fringelab",
        version: fringelab::VERSION,
        command,
        data: csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        columns: &table.headers,
        settings,
        results,
    };
    let path = sidecar_path(csv);
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
