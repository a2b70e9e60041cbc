use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{manifest_for, prepare_output_dir, read_json, write_bytes, write_json};
use crate::error::{Error, Result};
use crate::signal::{load_signals, segment_days, write_exclusion_report, DaySegment, LoadOptions, DEFAULT_MAX_GAP_MINUTES};

pub const SEGMENTS_FILE: &str = "segments.json";
pub const REPORT_FILE: &str = "exclusion_report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub input: PathBuf,
    pub max_gap_minutes: i64,
    pub load: LoadOptions,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            input: PathBuf::new(),
            max_gap_minutes: DEFAULT_MAX_GAP_MINUTES,
            load: LoadOptions::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.input.is_file() {
            return Err(Error::Config(format!("input file {} does not exist", self.input.display())));
        }
        if self.max_gap_minutes < 0 {
            return Err(Error::param("max_gap_minutes", "must be >= 0"));
        }
        if !(self.load.value_min < self.load.value_max) {
            return Err(Error::param("value_min", "must be below value_max"));
        }
        crate::signal::samples_per_day(self.load.sample_period_secs)?;
        Ok(())
    }
}

/// Loads, interpolates and cuts signals into kept days; writes
/// `segments.json` and `exclusion_report.csv`. Returns (kept, excluded).
pub fn run_preprocess(cfg: &PreprocessConfig, out: &Path) -> Result<(usize, usize)> {
    cfg.validate()?;
    let manifest = manifest_for("preprocess", cfg)?;
    prepare_output_dir(out, &manifest)?;
    let signals = load_signals(&cfg.input, &cfg.load)?;
    let mut segments = Vec::new();
    let mut report = Vec::new();
    for s in &signals {
        let split = segment_days(s, cfg.max_gap_minutes)?;
        segments.extend(split.segments);
        report.extend(split.report);
    }
    write_json(&out.join(SEGMENTS_FILE), &segments)?;
    let mut buf = Vec::new();
    write_exclusion_report(&mut buf, &report)?;
    write_bytes(&out.join(REPORT_FILE), &buf)?;
    let excluded = report.iter().filter(|r| !r.kept).count();
    log::info!("preprocess: {} days kept, {} excluded", segments.len(), excluded);
    Ok((segments.len(), excluded))
}

/// Reads the segments written by [`run_preprocess`].
pub fn read_segments(dir: &Path) -> Result<Vec<DaySegment>> {
    read_json(&dir.join(SEGMENTS_FILE))
}
