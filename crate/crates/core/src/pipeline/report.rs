use std::fmt::Write as _;
use std::path::Path;

use super::read_manifest;
use crate::error::{Error, Result};

fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

fn format_table(rows: &[Vec<String>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut w = vec![0; width];
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let mut s = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(i, c)| format!("{c:<0$}", w[i])).collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    s
}

/// Human-readable summary of any stage output directory.
pub fn report(dir: &Path) -> Result<String> {
    let m = read_manifest(dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "{} {} `{}` (config {})", m.tool, m.version, m.command, &m.config_hash[..12.min(m.config_hash.len())]);
    let mut tables = Vec::new();
    match m.command.as_str() {
        "preprocess" => {
            let rows = read_table(&dir.join(super::preprocess::REPORT_FILE))?;
            let kept = rows.iter().skip(1).filter(|r| r.get(3).is_some_and(|k| k == "true")).count();
            let _ = writeln!(s, "days kept: {kept}, excluded: {}", rows.len().saturating_sub(1) - kept);
        }
        "discover" => {
            let d: super::DiscoverySummary = super::read_json(&dir.join(super::discover::DISCOVERY_FILE))?;
            let _ = writeln!(
                s,
                "method: {:?}, motif ids: {}, contexts: {}, segments: {}",
                d.method,
                d.n_motifs,
                d.n_contexts.map_or("none".to_string(), |c| c.to_string()),
                d.segment_ids.len()
            );
        }
        "simulate" => tables.push("outcomes.csv"),
        "evaluate" => {
            for f in ["sweep.csv", "results.csv", "coverage.csv"] {
                if dir.join(f).is_file() {
                    tables.push(f);
                }
            }
        }
        other => return Err(Error::Config(format!("unknown command `{other}` in manifest"))),
    }
    for t in tables {
        let rows = read_table(&dir.join(t))?;
        let _ = writeln!(s, "\n{t} ({} rows)", rows.len().saturating_sub(1));
        let shown: Vec<Vec<String>> = rows.into_iter().take(41).collect();
        s.push_str(&format_table(&shown));
    }
    Ok(s)
}
