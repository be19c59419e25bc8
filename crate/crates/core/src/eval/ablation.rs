//! Presence-threshold sweep over labeled frames.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{decide_presence, VerticalHistogram};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AblationError {
    #[error("at least one threshold is required")]
    NoThresholds,
    #[error("threshold {0} listed twice")]
    DuplicateThreshold(u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelsError {
    #[error("labels line {line}: expected `frame_index,has_marking` with has_marking 0 or 1")]
    Malformed { line: usize },
    #[error("labels line {line}: frame {frame} labeled twice")]
    Duplicate { line: usize, frame: usize },
}

/// One labeled frame and its bird's-eye column histogram.
#[derive(Debug, Clone)]
pub struct AblationSample {
    pub frame_index: usize,
    pub has_marking: bool,
    pub histogram: VerticalHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub threshold: u32,
    /// Share of no-marking frames flagged present; `None` without any.
    pub fp_percent: Option<f64>,
    pub tp_count: usize,
    pub fp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// First threshold minimizing `fp_count - tp_count`.
    pub t_optimal: u32,
    pub marking_frames: usize,
    pub no_marking_frames: usize,
}

impl AblationReport {
    pub fn row(&self, threshold: u32) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.threshold == threshold)
    }

    /// `threshold,fp_percent`, with `NA` for undefined percentages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fp_percent\n");
        for r in &self.rows {
            match r.fp_percent {
                Some(p) => writeln!(out, "{},{:.2}", r.threshold, p),
                None => writeln!(out, "{},NA", r.threshold),
            }
            .expect("write to string");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_ablation(samples: &[AblationSample], thresholds: &[u32]) -> Result<AblationReport, AblationError> {
    if thresholds.is_empty() {
        return Err(AblationError::NoThresholds);
    }
    for (i, t) in thresholds.iter().enumerate() {
        if thresholds[..i].contains(t) {
            return Err(AblationError::DuplicateThreshold(*t));
        }
    }
    let negatives = samples.iter().filter(|s| !s.has_marking).count();
    let rows: Vec<AblationRow> = thresholds
        .iter()
        .map(|&threshold| {
            let (mut tp_count, mut fp_count) = (0, 0);
            for s in samples {
                if decide_presence(&s.histogram, threshold).present {
                    if s.has_marking {
                        tp_count += 1;
                    } else {
                        fp_count += 1;
                    }
                }
            }
            AblationRow {
                threshold,
                fp_percent: (negatives > 0).then(|| 100.0 * fp_count as f64 / negatives as f64),
                tp_count,
                fp_count,
            }
        })
        .collect();
    let t_optimal = rows
        .iter()
        .min_by_key(|r| r.fp_count as i64 - r.tp_count as i64)
        .map(|r| r.threshold)
        .expect("non-empty thresholds");
    Ok(AblationReport {
        rows,
        t_optimal,
        marking_frames: samples.len() - negatives,
        no_marking_frames: negatives,
    })
}

/// Parses `frame_index,has_marking` CSV (header optional).
pub fn parse_labels(text: &str) -> Result<BTreeMap<usize, bool>, LabelsError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(idx), Some(flag), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(LabelsError::Malformed { line: line_no });
        };
        let frame: usize = idx.parse().map_err(|_| LabelsError::Malformed { line: line_no })?;
        let has = match flag {
            "0" => false,
            "1" => true,
            _ => return Err(LabelsError::Malformed { line: line_no }),
        };
        if out.insert(frame, has).is_some() {
            return Err(LabelsError::Duplicate { line: line_no, frame });
        }
    }
    Ok(out)
}
