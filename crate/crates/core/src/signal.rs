//! Signal ingestion, gap handling, day segmentation, windowing and SAX.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::math::{mean, znormalize};

pub const DEFAULT_SAMPLE_PERIOD_SECS: i64 = 300;
pub const DEFAULT_MAX_GAP_MINUTES: i64 = 30;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// A timestamped, uniformly sampled series from one sensor session.
///
/// `values[i]` is `None` where the sensor produced nothing. `imputed[i]` marks
/// samples that were missing in the raw input and later filled by
/// [`interpolate_gaps`]; exclusion decisions are made on the union of both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub patient_id: String,
    pub session_id: String,
    pub start_time: NaiveDateTime,
    pub sample_period_secs: i64,
    pub values: Vec<Option<f64>>,
    pub imputed: Vec<bool>,
}

impl Signal {
    pub fn new(
        patient_id: impl Into<String>,
        session_id: impl Into<String>,
        start_time: NaiveDateTime,
        sample_period_secs: i64,
        values: Vec<Option<f64>>,
    ) -> Self {
        let imputed = vec![false; values.len()];
        Signal {
            patient_id: patient_id.into(),
            session_id: session_id.into(),
            start_time,
            sample_period_secs,
            values,
            imputed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start_time + Duration::seconds(self.sample_period_secs * i as i64)
    }

    /// True where the raw input had no observation.
    pub fn originally_missing(&self, i: usize) -> bool {
        self.values[i].is_none() || self.imputed[i]
    }
}

/// One calendar day of fully observed samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySegment {
    pub patient_id: String,
    pub session_id: String,
    pub date: NaiveDate,
    /// Days since 1970-01-01; consecutive days differ by one.
    pub day_index: i64,
    pub values: Vec<f64>,
}

impl DaySegment {
    pub fn new(patient_id: impl Into<String>, day_index: i64, values: Vec<f64>) -> Self {
        let date = epoch_date() + Duration::days(day_index);
        DaySegment {
            patient_id: patient_id.into(),
            session_id: String::new(),
            date,
            day_index,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self) -> String {
        format!("{}:{}", self.patient_id, self.date)
    }
}

impl AsRef<[f64]> for DaySegment {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn day_index_of(date: NaiveDate) -> i64 {
    (date - epoch_date()).num_days()
}

/// A contiguous slice `values[offset..offset + len]` of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subsequence<'a> {
    pub offset: usize,
    pub values: &'a [f64],
}

impl Subsequence<'_> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub symbols: Vec<u8>,
    pub alphabet_size: usize,
    pub paa_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaxConfig {
    pub alphabet_size: usize,
    pub paa_width: usize,
}

impl Default for SaxConfig {
    fn default() -> Self {
        SaxConfig {
            alphabet_size: 5,
            paa_width: 3,
        }
    }
}

impl SaxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=20).contains(&self.alphabet_size) {
            return Err(Error::param(
                "alphabet_size",
                format!("{} not in [2, 20]", self.alphabet_size),
            ));
        }
        if self.paa_width == 0 {
            return Err(Error::param("paa_width", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    Csv,
    Json,
    /// Chosen from the file extension (`.json` is JSON, anything else CSV).
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub format: InputFormat,
    pub sample_period_secs: i64,
    pub value_min: f64,
    pub value_max: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: InputFormat::Auto,
            sample_period_secs: DEFAULT_SAMPLE_PERIOD_SECS,
            value_min: 40.0,
            value_max: 400.0,
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// Loads one [`Signal`] per (patient, session), in order of first appearance.
///
/// CSV input has header `patient_id,session_id,timestamp,value`; a blank value is a
/// gap, and skipped grid points also become gaps. JSON input is an array of
/// `{patient_id, session_id, start_time, sample_period_seconds?, values}` objects with
/// `null` for gaps.
pub fn load_signals(path: &Path, opts: &LoadOptions) -> Result<Vec<Signal>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = match opts.format {
        InputFormat::Auto => {
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                InputFormat::Json
            } else {
                InputFormat::Csv
            }
        }
        f => f,
    };
    match format {
        InputFormat::Json => parse_json(&text, opts),
        _ => parse_csv(&text, opts),
    }
}

fn check_range(value: f64, line: usize, opts: &LoadOptions) -> Result<()> {
    if !value.is_finite() || value < opts.value_min || value > opts.value_max {
        return Err(Error::OutOfRange {
            line,
            value,
            min: opts.value_min,
            max: opts.value_max,
        });
    }
    Ok(())
}

struct SessionBuilder {
    signal: Signal,
    last_time: NaiveDateTime,
}

pub fn parse_csv(text: &str, opts: &LoadOptions) -> Result<Vec<Signal>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    if opts.sample_period_secs <= 0 {
        return Err(Error::param("sample_period", "must be positive"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Malformed {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let (pi, si, ti, vi) = (
        col("patient_id")?,
        col("session_id")?,
        col("timestamp")?,
        col("value")?,
    );
    let period = opts.sample_period_secs;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut sessions: HashMap<(String, String), SessionBuilder> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::Malformed {
                line,
                reason: format!("expected {} fields", headers.len()),
            })
        };
        let patient = field(pi)?.to_string();
        let session = field(si)?.to_string();
        let ts = field(ti)?;
        let time = parse_timestamp(ts).ok_or_else(|| Error::Malformed {
            line,
            reason: format!("unparseable timestamp `{ts}`"),
        })?;
        let raw = field(vi)?;
        let value = if raw.is_empty() {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| Error::Malformed {
                line,
                reason: format!("unparseable value `{raw}`"),
            })?;
            check_range(v, line, opts)?;
            Some(v)
        };
        let key = (patient.clone(), session.clone());
        match sessions.get_mut(&key) {
            None => {
                order.push(key.clone());
                let mut signal = Signal::new(patient, session, time, period, Vec::new());
                signal.values.push(value);
                signal.imputed.push(false);
                sessions.insert(
                    key,
                    SessionBuilder {
                        signal,
                        last_time: time,
                    },
                );
            }
            Some(b) => {
                let delta = (time - b.last_time).num_seconds();
                // Snap to the session grid; anything under half a period is a duplicate.
                let steps = (delta as f64 / period as f64).round() as i64;
                if delta <= 0 || steps < 1 {
                    return Err(Error::NonMonotone {
                        line,
                        session: format!("{}/{}", key.0, key.1),
                    });
                }
                for _ in 1..steps {
                    b.signal.values.push(None);
                    b.signal.imputed.push(false);
                }
                b.signal.values.push(value);
                b.signal.imputed.push(false);
                b.last_time = time;
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|k| sessions.remove(&k).expect("session present").signal)
        .collect())
}

#[derive(Deserialize)]
struct JsonSession {
    patient_id: String,
    session_id: String,
    start_time: String,
    #[serde(default)]
    sample_period_seconds: Option<i64>,
    values: Vec<Option<f64>>,
}

pub fn parse_json(text: &str, opts: &LoadOptions) -> Result<Vec<Signal>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let sessions: Vec<JsonSession> = serde_json::from_str(text).map_err(|e| Error::Malformed {
        line: e.line(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(sessions.len());
    for (si, s) in sessions.into_iter().enumerate() {
        let start = parse_timestamp(&s.start_time).ok_or_else(|| Error::Malformed {
            line: si + 1,
            reason: format!("unparseable start_time `{}`", s.start_time),
        })?;
        for (i, v) in s.values.iter().enumerate() {
            if let Some(v) = v {
                check_range(*v, i + 1, opts)?;
            }
        }
        let period = s.sample_period_seconds.unwrap_or(opts.sample_period_secs);
        if period <= 0 {
            return Err(Error::param("sample_period_seconds", "must be positive"));
        }
        out.push(Signal::new(s.patient_id, s.session_id, start, period, s.values));
    }
    Ok(out)
}

/// Fills interior gaps with the straight line between the bounding observations.
/// Leading and trailing gaps stay missing. Filled samples are flagged in `imputed`.
pub fn interpolate_gaps(signal: &Signal) -> Signal {
    let mut out = signal.clone();
    let mut last_obs: Option<usize> = None;
    for i in 0..signal.values.len() {
        if let Some(right) = signal.values[i] {
            if let Some(l) = last_obs {
                if i > l + 1 {
                    let left = signal.values[l].expect("observed");
                    let span = (i - l) as f64;
                    for j in (l + 1)..i {
                        let f = (j - l) as f64 / span;
                        out.values[j] = Some(left + f * (right - left));
                        out.imputed[j] = true;
                    }
                }
            }
            last_obs = Some(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub patient_id: String,
    pub session_id: String,
    pub date: NaiveDate,
    pub longest_gap_minutes: i64,
    pub kept: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DaySplit {
    pub segments: Vec<DaySegment>,
    pub report: Vec<DayReport>,
}

impl DaySplit {
    pub fn excluded(&self) -> usize {
        self.report.iter().filter(|r| !r.kept).count()
    }
}

pub fn samples_per_day(sample_period_secs: i64) -> Result<usize> {
    if sample_period_secs <= 0 || SECONDS_PER_DAY % sample_period_secs != 0 {
        return Err(Error::param(
            "sample_period",
            format!("{sample_period_secs} s does not divide a day"),
        ));
    }
    Ok((SECONDS_PER_DAY / sample_period_secs) as usize)
}

/// Cuts a signal into calendar days.
///
/// A day is kept when its longest run of originally missing samples (including
/// slots outside the session) is at most `max_gap_minutes` and every slot has a
/// value after interpolation. Gaps crossing midnight are measured separately on
/// each side.
pub fn segment_days(signal: &Signal, max_gap_minutes: i64) -> Result<DaySplit> {
    let period = signal.sample_period_secs;
    let per_day = samples_per_day(period)?;
    let mut split = DaySplit::default();
    if signal.is_empty() {
        return Ok(split);
    }
    let filled = interpolate_gaps(signal);
    let phase = signal.start_time.num_seconds_from_midnight() as i64 % period;
    let first_date = signal.start_time.date();
    let last_date = signal.timestamp(signal.len() - 1).date();
    let mut date = first_date;
    while date <= last_date {
        let day_start = date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::seconds(phase);
        let offset_secs = (day_start - signal.start_time).num_seconds();
        debug_assert_eq!(offset_secs % period, 0);
        let base = offset_secs / period;
        let mut values = Vec::with_capacity(per_day);
        let mut run = 0i64;
        let mut longest = 0i64;
        let mut complete = true;
        for slot in 0..per_day as i64 {
            let idx = base + slot;
            let (missing, value) = if idx < 0 || idx >= signal.len() as i64 {
                (true, None)
            } else {
                let i = idx as usize;
                (signal.originally_missing(i), filled.values[i])
            };
            if missing {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
            match value {
                Some(v) => values.push(v),
                None => complete = false,
            }
        }
        let longest_gap_minutes = longest * period / 60;
        let kept = longest_gap_minutes <= max_gap_minutes && complete;
        split.report.push(DayReport {
            patient_id: signal.patient_id.clone(),
            session_id: signal.session_id.clone(),
            date,
            longest_gap_minutes,
            kept,
        });
        if kept {
            split.segments.push(DaySegment {
                patient_id: signal.patient_id.clone(),
                session_id: signal.session_id.clone(),
                date,
                day_index: day_index_of(date),
                values,
            });
        }
        date = date.succ_opt().expect("date in range");
    }
    Ok(split)
}

pub fn write_exclusion_report<W: std::io::Write>(out: W, report: &[DayReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "day", "longest_gap_minutes", "kept"])?;
    for r in report {
        w.write_record([
            r.patient_id.clone(),
            r.date.to_string(),
            r.longest_gap_minutes.to_string(),
            r.kept.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("exclusion report", e))?;
    Ok(())
}

/// Subsequences at offsets `0, stride, 2*stride, ...` that fit entirely in `values`.
pub fn windows(values: &[f64], length: usize, stride: usize) -> Result<Vec<Subsequence<'_>>> {
    if length == 0 || length > values.len() {
        return Err(Error::param(
            "length",
            format!("{length} not in [1, {}]", values.len()),
        ));
    }
    if stride == 0 {
        return Err(Error::param("stride", "must be >= 1"));
    }
    Ok((0..=values.len() - length)
        .step_by(stride)
        .map(|offset| Subsequence {
            offset,
            values: &values[offset..offset + length],
        })
        .collect())
}

/// The `a - 1` standard-normal quantiles at probabilities `i / a`.
pub fn sax_breakpoints(alphabet_size: usize) -> Vec<f64> {
    let n = Normal::standard();
    (1..alphabet_size)
        .map(|i| {
            let p = i as f64 / alphabet_size as f64;
            if 2 * i == alphabet_size {
                0.0
            } else {
                n.inverse_cdf(p)
            }
        })
        .collect()
}

/// Block means over `width` samples; a trailing partial block is dropped.
pub fn paa(values: &[f64], width: usize) -> Vec<f64> {
    values.chunks_exact(width).map(mean).collect()
}

pub fn symbol_for(value: f64, breakpoints: &[f64]) -> u8 {
    breakpoints.partition_point(|&b| b <= value) as u8
}

/// SAX word of an arbitrary window (z-normalized first).
pub fn sax_word(values: &[f64], cfg: &SaxConfig, breakpoints: &[f64]) -> Vec<u8> {
    let z = znormalize(values);
    if z.iter().all(|&v| v == 0.0) {
        return vec![(cfg.alphabet_size / 2) as u8; values.len() / cfg.paa_width];
    }
    paa(&z, cfg.paa_width)
        .into_iter()
        .map(|m| symbol_for(m, breakpoints))
        .collect()
}

pub fn sax_discretize(values: &[f64], cfg: &SaxConfig) -> Result<SymbolSequence> {
    cfg.validate()?;
    let bp = sax_breakpoints(cfg.alphabet_size);
    Ok(SymbolSequence {
        symbols: sax_word(values, cfg, &bp),
        alphabet_size: cfg.alphabet_size,
        paa_width: cfg.paa_width,
    })
}
