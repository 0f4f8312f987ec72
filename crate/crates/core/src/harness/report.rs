//! Merges the CSV outputs of several runs into combined long-format tables.
//!
//! Files with the same name are concatenated with a leading `config_hash`
//! column, so runs of different configurations stay separable and row
//! counts add up. Every input is rehashed against its manifest first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::manifest::{RunManifest, RunStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedFile {
    pub name: String,
    pub rows: usize,
    pub sources: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportIndex {
    pub runs: Vec<RunEntry>,
    pub files: Vec<MergedFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEntry {
    pub manifest: PathBuf,
    pub config_hash: String,
    pub experiment: String,
}

struct Table {
    header: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
    sources: usize,
}

pub fn merge(manifests: &[PathBuf], out_dir: &Path) -> Result<ReportIndex> {
    if manifests.is_empty() {
        return Err(Error::invalid("report needs at least one manifest"));
    }
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut runs = Vec::new();
    for path in manifests {
        let m = RunManifest::read(path)?;
        if m.status != RunStatus::Success {
            return Err(Error::invalid(format!(
                "{} records a run that did not succeed",
                path.display()
            )));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        m.verify(dir)?;
        let hash = m.config_hash.clone().unwrap_or_default();
        for name in m.output_paths.iter().filter(|n| n.ends_with(".csv")) {
            let mut rdr = csv::Reader::from_path(dir.join(name))?;
            let mut header = csv::StringRecord::from(vec!["config_hash"]);
            header.extend(rdr.headers()?.iter());
            let table = tables.entry(name.clone()).or_insert_with(|| Table {
                header: header.clone(),
                rows: Vec::new(),
                sources: 0,
            });
            if table.header != header {
                return Err(Error::invalid(format!("{name}: column layout differs between runs")));
            }
            for rec in rdr.records() {
                let mut row = csv::StringRecord::from(vec![hash.as_str()]);
                row.extend(rec?.iter());
                table.rows.push(row);
            }
            table.sources += 1;
        }
        runs.push(RunEntry {
            manifest: path.clone(),
            config_hash: hash,
            experiment: m.experiment.unwrap_or_default(),
        });
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    for (name, table) in &tables {
        let mut w = csv::Writer::from_path(out_dir.join(name))?;
        w.write_record(&table.header)?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(out_dir.join(name), e))?;
        files.push(MergedFile {
            name: name.clone(),
            rows: table.rows.len(),
            sources: table.sources,
        });
    }
    let index = ReportIndex { runs, files };
    let path = out_dir.join("index.json");
    std::fs::write(&path, serde_json::to_string_pretty(&index)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
