//! Glycemic event labels and prediction-task rows.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::DaySegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Hypo,
    Hyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub event: EventKind,
    pub horizon: Horizon,
    pub hypo_level: f64,
    pub hyper_level: f64,
    /// Minimum run length, in samples, of an event.
    pub event_min_duration: usize,
    pub long_hyper_min_events: usize,
    pub short_horizon_minutes: i64,
    /// Spacing of short-horizon prediction times within a day.
    pub prediction_grid_minutes: i64,
    pub sample_period_secs: i64,
}

impl TaskSpec {
    pub fn new(event: EventKind, horizon: Horizon) -> Self {
        TaskSpec {
            event,
            horizon,
            hypo_level: 70.0,
            hyper_level: 180.0,
            event_min_duration: 3,
            long_hyper_min_events: 2,
            short_horizon_minutes: 40,
            prediction_grid_minutes: 40,
            sample_period_secs: crate::signal::DEFAULT_SAMPLE_PERIOD_SECS,
        }
    }

    /// The four standard tasks.
    pub fn all() -> [TaskSpec; 4] {
        [
            TaskSpec::new(EventKind::Hypo, Horizon::Long),
            TaskSpec::new(EventKind::Hyper, Horizon::Long),
            TaskSpec::new(EventKind::Hypo, Horizon::Short),
            TaskSpec::new(EventKind::Hyper, Horizon::Short),
        ]
    }

    pub fn name(&self) -> String {
        let h = match self.horizon {
            Horizon::Long => "long",
            Horizon::Short => "short",
        };
        let e = match self.event {
            EventKind::Hypo => "hypo",
            EventKind::Hyper => "hyper",
        };
        format!("{h}_{e}")
    }

    fn minutes_to_samples(&self, minutes: i64) -> usize {
        ((minutes * 60) / self.sample_period_secs).max(1) as usize
    }

    pub fn horizon_samples(&self) -> usize {
        self.minutes_to_samples(self.short_horizon_minutes)
    }

    pub fn grid_samples(&self) -> usize {
        self.minutes_to_samples(self.prediction_grid_minutes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hypo_level < self.hyper_level) {
            return Err(Error::param("hypo_level", "must be below hyper_level"));
        }
        if self.event_min_duration == 0 || self.long_hyper_min_events == 0 {
            return Err(Error::param("event_min_duration", "durations and counts must be >= 1"));
        }
        if self.sample_period_secs <= 0
            || self.short_horizon_minutes * 60 < self.sample_period_secs
            || self.prediction_grid_minutes * 60 < self.sample_period_secs
        {
            return Err(Error::param("short_horizon_minutes", "horizon and grid must span at least one sample"));
        }
        Ok(())
    }
}

/// Maximal run `start..end` of out-of-band samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
}

pub fn label_events(values: &[f64], task: &TaskSpec) -> Vec<Event> {
    let out_of_band = |x: f64| match task.event {
        EventKind::Hypo => x < task.hypo_level,
        EventKind::Hyper => x > task.hyper_level,
    };
    let mut events = Vec::new();
    let mut start = None;
    for t in 0..=values.len() {
        let inside = t < values.len() && out_of_band(values[t]);
        match (start, inside) {
            (None, true) => start = Some(t),
            (Some(s), false) => {
                if t - s >= task.event_min_duration {
                    events.push(Event { start: s, end: t });
                }
                start = None;
            }
            _ => {}
        }
    }
    events
}

/// One prediction instance. Inputs are the samples of `input_day` (long
/// horizon) or the last day of samples ending at `time` in `next_day` (short).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRow {
    pub patient_id: String,
    pub input_day: usize,
    pub next_day: usize,
    pub time: Option<usize>,
    pub label: bool,
}

/// Builds rows from consecutive day pairs of each patient. `days` indices are
/// used as row references.
pub fn make_task_rows(days: &[DaySegment], task: &TaskSpec) -> Result<Vec<TaskRow>> {
    task.validate()?;
    let index: HashMap<(&str, i64), usize> = days
        .iter()
        .enumerate()
        .map(|(i, d)| ((d.patient_id.as_str(), d.day_index), i))
        .collect();
    let mut order: Vec<usize> = (0..days.len()).collect();
    order.sort_by(|&a, &b| {
        (days[a].patient_id.as_str(), days[a].day_index).cmp(&(days[b].patient_id.as_str(), days[b].day_index))
    });
    let mut rows = Vec::new();
    for i in order {
        let d = &days[i];
        let Some(&j) = index.get(&(d.patient_id.as_str(), d.day_index + 1)) else {
            continue;
        };
        let next = &days[j];
        match task.horizon {
            Horizon::Long => {
                let n = label_events(&next.values, task).len();
                let needed = match task.event {
                    EventKind::Hypo => 1,
                    EventKind::Hyper => task.long_hyper_min_events,
                };
                rows.push(TaskRow {
                    patient_id: d.patient_id.clone(),
                    input_day: i,
                    next_day: j,
                    time: None,
                    label: n >= needed,
                });
            }
            Horizon::Short => {
                let t_day = d.values.len();
                let both: Vec<f64> = d.values.iter().chain(&next.values).cloned().collect();
                let onsets: Vec<usize> = label_events(&both, task)
                    .iter()
                    .filter(|e| e.start >= t_day)
                    .map(|e| e.start - t_day)
                    .collect();
                let h = task.horizon_samples();
                for t in (0..next.values.len()).step_by(task.grid_samples()) {
                    rows.push(TaskRow {
                        patient_id: d.patient_id.clone(),
                        input_day: i,
                        next_day: j,
                        time: Some(t),
                        label: onsets.iter().any(|&s| s >= t && s < t + h),
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hypo() -> TaskSpec {
        TaskSpec::new(EventKind::Hypo, Horizon::Long)
    }

    #[test]
    fn normal_band_has_no_events() {
        let v = vec![100.0; 288];
        assert!(label_events(&v, &hypo()).is_empty());
        assert!(label_events(&v, &TaskSpec::new(EventKind::Hyper, Horizon::Long)).is_empty());
    }

    #[test]
    fn run_of_four_lows() {
        let mut v = vec![100.0; 288];
        v[50..54].iter_mut().for_each(|x| *x = 60.0);
        assert_eq!(label_events(&v, &hypo()), vec![Event { start: 50, end: 54 }]);
    }

    #[test]
    fn short_highs_are_not_events() {
        let mut v = vec![100.0; 288];
        v[10] = 250.0;
        v[20] = 250.0;
        assert!(label_events(&v, &TaskSpec::new(EventKind::Hyper, Horizon::Long)).is_empty());
    }

    #[test]
    fn long_hyper_needs_two_events() {
        let mut next = vec![100.0; 288];
        next[100..110].iter_mut().for_each(|x| *x = 250.0);
        let days = vec![DaySegment::new("p", 0, vec![100.0; 288]), DaySegment::new("p", 1, next)];
        let rows = make_task_rows(&days, &TaskSpec::new(EventKind::Hyper, Horizon::Long)).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(!rows[0].label);
    }

    #[test]
    fn short_horizon_onset() {
        let mut next = vec![100.0; 288];
        next[45..50].iter_mut().for_each(|x| *x = 55.0);
        let days = vec![DaySegment::new("p", 0, vec![100.0; 288]), DaySegment::new("p", 1, next)];
        let rows = make_task_rows(&days, &TaskSpec::new(EventKind::Hypo, Horizon::Short)).unwrap();
        assert_eq!(rows.len(), 36);
        let positives: Vec<usize> = rows.iter().filter(|r| r.label).map(|r| r.time.unwrap()).collect();
        assert_eq!(positives, vec![40]);
    }

    #[test]
    fn single_day_patient_has_no_long_rows() {
        let days = vec![DaySegment::new("p", 0, vec![100.0; 288]), DaySegment::new("q", 4, vec![100.0; 288])];
        assert!(make_task_rows(&days, &hypo()).unwrap().is_empty());
    }
}
