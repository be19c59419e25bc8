//! Per-frame orchestration and sequence runs.
//!
//! A frame passes through six timed stages: perspective transformation,
//! color feature normalization, HSV thresholding, histogram analysis,
//! traversal, and projection remapping (unwarp plus overlay write-back).
//! Frames without a marking stop after histogram analysis and produce an
//! empty coordinate file and an unchanged overlay.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{normalize_hsv, rgb_to_hsv, threshold_hsv, BinaryMask, HsvRoi};
use crate::config::PipelineConfig;
use crate::detect::{decide_presence, extract_seeds, vertical_histogram, SeedSet, VerticalHistogram};
use crate::frame::{Frame, FrameSequence, SequenceError};
use crate::geometry::{unwarp_pixels, warp_roi, GeometryError, Pixel, WarpedRoi};
use crate::roi::{Roi, RoiViolation};
use crate::traversal::{circledat_multi, median, TraversalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PerspectiveTransformation,
    ColorFeatureNormalization,
    HsvThresholding,
    HistogramAnalysis,
    Circledat,
    ProjectionRemapping,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::PerspectiveTransformation,
        Stage::ColorFeatureNormalization,
        Stage::HsvThresholding,
        Stage::HistogramAnalysis,
        Stage::Circledat,
        Stage::ProjectionRemapping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::PerspectiveTransformation => "perspective_transformation",
            Stage::ColorFeatureNormalization => "color_feature_normalization",
            Stage::HsvThresholding => "hsv_thresholding",
            Stage::HistogramAnalysis => "histogram_analysis",
            Stage::Circledat => "circledat",
            Stage::ProjectionRemapping => "projection_remapping",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::PerspectiveTransformation => "Perspective Transformation",
            Stage::ColorFeatureNormalization => "Color Feature Normalization",
            Stage::HsvThresholding => "HSV-based Color Thresholding",
            Stage::HistogramAnalysis => "Histogram Analysis",
            Stage::Circledat => "CIRCLEDAT",
            Stage::ProjectionRemapping => "Projection Remapping",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Roi(#[from] RoiViolation),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame}: {stage} failed: {source}")]
    Stage {
        frame: usize,
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("ROI invalid for the sequence: {0}")]
    Roi(RoiViolation),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

/// Wall time of each stage for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageTimings(pub [Duration; 6]);

impl StageTimings {
    pub fn get(&self, stage: Stage) -> Duration {
        self.0[stage.slot()]
    }

    pub fn total(&self) -> Duration {
        self.0.iter().sum()
    }
}

/// Marking pixels of one frame, in frame coordinates sorted by `(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub frame_index: usize,
    pub present: bool,
    pub pixels: Vec<Pixel>,
    pub seed_count: usize,
}

impl AnnotationRecord {
    pub fn absent(frame_index: usize) -> Self {
        Self {
            frame_index,
            present: false,
            pixels: Vec::new(),
            seed_count: 0,
        }
    }

    /// `x y` lines; empty string when nothing was found.
    pub fn coords_text(&self) -> String {
        format_coords(&self.pixels)
    }
}

pub fn format_coords(pixels: &[Pixel]) -> String {
    let mut out = String::with_capacity(pixels.len() * 8);
    for (x, y) in pixels {
        let _ = writeln!(out, "{x} {y}");
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: expected two non-negative integers `x y`")]
pub struct CoordsParseError {
    pub line: usize,
}

pub fn parse_coords(text: &str) -> Result<Vec<Pixel>, CoordsParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.split_whitespace().map(str::parse::<u32>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => Ok((x, y)),
                _ => Err(CoordsParseError { line: i + 1 }),
            }
        })
        .collect()
}

/// Everything produced for one frame.
#[derive(Debug, Clone)]
pub struct FrameAnnotation {
    pub record: AnnotationRecord,
    pub overlay: Frame,
    pub peak_value: u32,
    pub timings: StageTimings,
}

/// Intermediate products up to the histogram, without timing.
#[derive(Debug, Clone)]
pub struct BirdsEye {
    pub warped: WarpedRoi,
    pub hsv: HsvRoi,
    pub mask: BinaryMask,
    pub histogram: VerticalHistogram,
}

fn stage_err(frame: usize, stage: Stage) -> impl Fn(StageError) -> PipelineError {
    move |source| PipelineError::Stage {
        frame,
        stage,
        source,
    }
}

/// Warps, converts and thresholds a frame; used by ablation and profiling.
pub fn birds_eye(frame: &Frame, roi: &Roi, cfg: &PipelineConfig) -> Result<BirdsEye, PipelineError> {
    let err = stage_err(frame.index(), Stage::PerspectiveTransformation);
    let warped = warp_roi(frame, roi, cfg.warp.filter).map_err(|e| err(e.into()))?;
    let hsv = color_stage(&warped.frame, cfg);
    let mask = threshold_hsv(&hsv, &cfg.bounds());
    let histogram = vertical_histogram(&mask);
    Ok(BirdsEye {
        warped,
        hsv,
        mask,
        histogram,
    })
}

fn color_stage(warped: &Frame, cfg: &PipelineConfig) -> HsvRoi {
    let hsv = rgb_to_hsv(warped);
    if cfg.hsv.normalize {
        normalize_hsv(&hsv)
    } else {
        hsv
    }
}

/// Runs the full per-frame flow.
pub fn annotate_frame(
    frame: &Frame,
    roi: &Roi,
    cfg: &PipelineConfig,
) -> Result<FrameAnnotation, PipelineError> {
    let index = frame.index();
    let mut t = StageTimings::default();
    let mut clock = Instant::now();
    let mut lap = |t: &mut StageTimings, stage: Stage| {
        let now = Instant::now();
        t.0[stage.slot()] = now - clock;
        clock = now;
    };

    let warped = warp_roi(frame, roi, cfg.warp.filter)
        .map_err(|e| stage_err(index, Stage::PerspectiveTransformation)(e.into()))?;
    lap(&mut t, Stage::PerspectiveTransformation);

    let hsv = color_stage(&warped.frame, cfg);
    lap(&mut t, Stage::ColorFeatureNormalization);

    let mask = threshold_hsv(&hsv, &cfg.bounds());
    lap(&mut t, Stage::HsvThresholding);

    let histogram = vertical_histogram(&mask);
    let decision = decide_presence(&histogram, cfg.detect.threshold);
    let seeds = if decision.present {
        extract_seeds(&mask, &decision, cfg.detect.seed_group_gap)
            .map_err(|e| stage_err(index, Stage::HistogramAnalysis)(e.into()))?
    } else {
        SeedSet::default()
    };
    lap(&mut t, Stage::HistogramAnalysis);

    if !decision.present {
        return Ok(FrameAnnotation {
            record: AnnotationRecord::absent(index),
            overlay: frame.clone(),
            peak_value: decision.peak_value,
            timings: t,
        });
    }

    let collected = circledat_multi(&mask, &seeds.seeds, &cfg.traversal)
        .map_err(|e| stage_err(index, Stage::Circledat)(e.into()))?;
    lap(&mut t, Stage::Circledat);

    let pixels = unwarp_pixels(collected.pixels, &warped.homography, frame.dims());
    let mut overlay = frame.clone();
    for &(x, y) in &pixels {
        overlay.put(x, y, cfg.output.overlay_color);
    }
    lap(&mut t, Stage::ProjectionRemapping);

    Ok(FrameAnnotation {
        record: AnnotationRecord {
            frame_index: index,
            present: true,
            pixels,
            seed_count: seeds.len(),
        },
        overlay,
        peak_value: decision.peak_value,
        timings: t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub label: String,
    pub median_ms: f64,
}

/// Median per-stage latency; `total_ms` is the sum of the stage medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub stages: Vec<StageTiming>,
    pub total_ms: f64,
    pub samples: usize,
}

impl TimingReport {
    pub fn from_samples(samples: &[StageTimings]) -> Self {
        let stages: Vec<StageTiming> = Stage::ALL
            .iter()
            .map(|&stage| {
                let mut ms: Vec<f64> = samples
                    .iter()
                    .map(|s| s.get(stage).as_secs_f64() * 1e3)
                    .collect();
                StageTiming {
                    stage,
                    label: stage.label().to_string(),
                    median_ms: median(&mut ms),
                }
            })
            .collect();
        let total_ms = stages.iter().map(|s| s.median_ms).sum();
        Self {
            stages,
            total_ms,
            samples: samples.len(),
        }
    }

    pub fn stage_ms(&self, stage: Stage) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.median_ms)
    }

    /// Two-column text table, one row per stage plus the total.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<32}{:>12}\n", "Process", "Time (ms)");
        for s in &self.stages {
            let _ = writeln!(out, "{:<32}{:>12.3}", s.label, s.median_ms);
        }
        let _ = writeln!(out, "{:<32}{:>12.3}", "Total", self.total_ms);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,median_ms\n");
        for s in &self.stages {
            let _ = writeln!(out, "{},{:.6}", s.stage, s.median_ms);
        }
        let _ = writeln!(out, "total,{:.6}", self.total_ms);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub roi: Roi,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub sequence_id: String,
    pub frames_total: usize,
    pub frames_with_marking: usize,
    pub frames_failed: usize,
    pub failures: Vec<FrameFailure>,
    pub timing: TimingReport,
    pub config: ConfigEcho,
}

/// Output locations for one sequence under an output root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(out_root: &Path, sequence_id: &str) -> Self {
        Self {
            root: out_root.join(sequence_id),
        }
    }

    pub fn overlays(&self) -> PathBuf {
        self.root.join("overlays")
    }

    pub fn coords(&self) -> PathBuf {
        self.root.join("coords")
    }

    pub fn overlay(&self, index: usize) -> PathBuf {
        self.overlays().join(format!("frame_{index:06}.png"))
    }

    pub fn coord_file(&self, index: usize) -> PathBuf {
        self.coords().join(format!("frame_{index:06}.txt"))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

fn write_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn process_one(
    seq: &FrameSequence,
    index: usize,
    roi: &Roi,
    cfg: &PipelineConfig,
    layout: &OutputLayout,
) -> Result<(bool, StageTimings), PipelineError> {
    let frame = seq.frame(index)?;
    let ann = annotate_frame(&frame, roi, cfg)?;
    let overlay_path = layout.overlay(index);
    crate::io::write_png(&ann.overlay, &overlay_path).map_err(|e| write_err(&overlay_path, e))?;
    let coord_path = layout.coord_file(index);
    std::fs::write(&coord_path, ann.record.coords_text()).map_err(|e| write_err(&coord_path, e))?;
    Ok((ann.record.present, ann.timings))
}

/// Annotates every frame of `seq` with the single sequence ROI and writes
/// `overlays/`, `coords/` and `summary.json` under `out_root/<sequence id>/`.
///
/// Per-frame failures are logged and counted; the run continues.
/// `progress` receives the number of completed frames; calls may arrive out
/// of order when frames run in parallel.
pub fn run_sequence(
    seq: &FrameSequence,
    roi: &Roi,
    cfg: &PipelineConfig,
    out_root: &Path,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<RunSummary, PipelineError> {
    roi.validate(seq.dims()).map_err(PipelineError::Roi)?;
    let layout = OutputLayout::new(out_root, seq.id());
    for dir in [layout.overlays(), layout.coords()] {
        std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
    }

    let done = AtomicUsize::new(0);
    type FrameResult = (usize, Result<(bool, StageTimings), PipelineError>);
    let results: Vec<FrameResult> = (0..seq.frame_count())
        .into_par_iter()
        .map(|index| {
            let r = process_one(seq, index, roi, cfg, &layout);
            progress(done.fetch_add(1, Ordering::SeqCst) + 1);
            (index, r)
        })
        .collect();

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut with_marking = 0;
    for (index, r) in results {
        match r {
            Ok((present, timings)) => {
                with_marking += usize::from(present);
                samples.push(timings);
            }
            Err(e) => {
                log::warn!("skipping frame {index}: {e}");
                failures.push(FrameFailure {
                    frame_index: index,
                    error: e.to_string(),
                });
            }
        }
    }

    let summary = RunSummary {
        sequence_id: seq.id().to_string(),
        frames_total: seq.frame_count(),
        frames_with_marking: with_marking,
        frames_failed: failures.len(),
        failures,
        timing: TimingReport::from_samples(&samples),
        config: ConfigEcho {
            roi: roi.clone(),
            pipeline: *cfg,
        },
    };
    let path = layout.summary();
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, json + "\n").map_err(|e| write_err(&path, e))?;
    Ok(summary)
}

/// Sequentially annotates each frame `repeats` times and reports median
/// stage latencies.
pub fn measure_stage_timings(
    seq: &FrameSequence,
    roi: &Roi,
    cfg: &PipelineConfig,
    repeats: usize,
) -> Result<TimingReport, PipelineError> {
    roi.validate(seq.dims()).map_err(PipelineError::Roi)?;
    let mut samples = Vec::with_capacity(seq.frame_count() * repeats);
    for frame in seq.iter() {
        let frame = match frame {
            Ok(f) => f,
            Err(e) => {
                log::warn!("timing: {e}");
                continue;
            }
        };
        for _ in 0..repeats.max(1) {
            match annotate_frame(&frame, roi, cfg) {
                Ok(a) => samples.push(a.timings),
                Err(e) => {
                    log::warn!("timing: {e}");
                    break;
                }
            }
        }
    }
    Ok(TimingReport::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_round_trip() {
        let px = vec![(3, 0), (1, 2), (10, 2)];
        let text = format_coords(&px);
        assert_eq!(text, "3 0\n1 2\n10 2\n");
        assert_eq!(parse_coords(&text).unwrap(), px);
        assert_eq!(format_coords(&[]), "");
        assert_eq!(parse_coords("1 2 3\n"), Err(CoordsParseError { line: 1 }));
        assert_eq!(parse_coords("1 -2\n"), Err(CoordsParseError { line: 1 }));
    }

    #[test]
    fn timing_report_sums() {
        let mut a = StageTimings::default();
        let mut b = StageTimings::default();
        for (i, s) in Stage::ALL.iter().enumerate() {
            a.0[s.slot()] = Duration::from_micros(100 * (i as u64 + 1));
            b.0[s.slot()] = Duration::from_micros(300 * (i as u64 + 1));
        }
        let r = TimingReport::from_samples(&[a, b, a]);
        assert_eq!(r.stages.len(), 6);
        let sum: f64 = r.stages.iter().map(|s| s.median_ms).sum();
        assert!((r.total_ms - sum).abs() <= 0.01 * sum);
        assert!((r.stage_ms(Stage::PerspectiveTransformation).unwrap() - 0.1).abs() < 1e-9);
        assert!(r.to_table().contains("Histogram Analysis"));
        assert_eq!(r.to_csv().lines().count(), 8);
    }

    #[test]
    fn gray_frame_is_absent() {
        let frame = Frame::from_fn(64, 48, |x, y| {
            let g = (40 + (x * 3 + y * 5) % 60) as u8;
            [g, g, g]
        });
        let roi = Roi::from_xy([(10.0, 10.0), (50.0, 10.0), (60.0, 40.0), (3.0, 40.0)]);
        let ann = annotate_frame(&frame, &roi, &PipelineConfig::default()).unwrap();
        assert!(!ann.record.present);
        assert!(ann.record.pixels.is_empty());
        assert_eq!(ann.overlay, frame);
        assert_eq!(ann.record.coords_text(), "");
    }

    #[test]
    fn invalid_roi_names_stage() {
        let frame = Frame::new(32, 32);
        let roi = Roi::from_xy([(0.0, 0.0), (40.0, 0.0), (40.0, 40.0), (0.0, 40.0)]);
        let err = annotate_frame(&frame, &roi, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::Stage {
                stage: Stage::PerspectiveTransformation,
                ..
            }
        ));
    }
}
