//! Ground-truth edge maps, recall scoring and the presence-threshold ablation.

mod ablation;
mod canny;
mod polygon;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{
    parse_labels, run_ablation, AblationError, AblationReport, AblationRow, AblationSample,
    LabelsError,
};
pub use canny::{
    auto_canny_thresholds, build_cbem, canny, gaussian_blur, gradient_sector, hysteresis,
    median_u8, non_max_suppression, sobel, Cbem, CbemError, GrayImage, BLUR_SIGMA,
};
pub use polygon::{ContourOutline, OutlineError, OutlineFileError, MIN_OUTLINE_AREA};

use crate::color::BinaryMask;
use crate::frame::{FrameSequence, SequenceError};
use crate::geometry::Pixel;
use crate::pipeline::{parse_coords, CoordsParseError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Chebyshev matching tolerance in pixels; 0 demands exact coordinates.
    pub tau: u32,
    /// Spread of the automatic Canny thresholds around the median gray value.
    pub sigma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { tau: 1, sigma: 0.33 }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("frame {frame}: annotated pixel ({x}, {y}) outside {width}x{height} edge map")]
    DimensionMismatch {
        frame: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("no edge maps found in {0}")]
    NoEdgeMaps(PathBuf),
    #[error("missing coordinates for frame {frame}: {path}")]
    MissingCoords { frame: usize, path: PathBuf },
    #[error("{path}: {source}")]
    Coords {
        path: PathBuf,
        #[source]
        source: CoordsParseError,
    },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Outline(#[from] OutlineFileError),
    #[error(transparent)]
    Cbem(#[from] CbemError),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("cannot list {path}: {message}")]
    List { path: PathBuf, message: String },
}

/// `tp / (tp + fn_)`, or `None` for an empty denominator.
pub fn recall(tp: u64, fn_: u64) -> Option<f64> {
    let total = tp + fn_;
    (total > 0).then(|| tp as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_index: usize,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `None` when undefined: no edges but a non-empty annotation.
    pub recall: Option<f64>,
}

/// Scores one frame: every edge pixel with an annotated pixel within
/// Chebyshev distance `tau` is a hit, every other edge pixel a miss.
pub fn evaluate(edges: &BinaryMask, frame_index: usize, annotated: &[Pixel], tau: u32) -> Result<FrameEval, EvalError> {
    let (w, h) = edges.dims();
    if let Some(&(x, y)) = annotated.iter().find(|&&(x, y)| x >= w || y >= h) {
        return Err(EvalError::DimensionMismatch {
            frame: frame_index,
            x,
            y,
            width: w,
            height: h,
        });
    }
    // Summed-area table over annotated pixels answers each window query in O(1).
    let (wu, hu) = (w as usize, h as usize);
    let mut hits = vec![0u32; wu * hu];
    for &(x, y) in annotated {
        hits[y as usize * wu + x as usize] = 1;
    }
    let sw = wu + 1;
    let mut sat = vec![0u64; sw * (hu + 1)];
    for y in 0..hu {
        let mut row = 0u64;
        for x in 0..wu {
            row += u64::from(hits[y * wu + x]);
            sat[(y + 1) * sw + x + 1] = sat[y * sw + x + 1] + row;
        }
    }
    let t = tau as usize;
    let (mut tp, mut fn_) = (0u64, 0u64);
    for (x, y) in edges.white_pixels() {
        let (x, y) = (x as usize, y as usize);
        let (x0, y0) = (x.saturating_sub(t), y.saturating_sub(t));
        let (x1, y1) = ((x + t + 1).min(wu), (y + t + 1).min(hu));
        let n = sat[y1 * sw + x1] + sat[y0 * sw + x0] - sat[y0 * sw + x1] - sat[y1 * sw + x0];
        if n > 0 {
            tp += 1;
        } else {
            fn_ += 1;
        }
    }
    let recall = match recall(tp, fn_) {
        None if annotated.is_empty() => Some(1.0),
        r => r,
    };
    Ok(FrameEval {
        frame_index,
        tp,
        fn_,
        recall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau: u32,
    pub frames: Vec<FrameEval>,
    pub total_tp: u64,
    pub total_fn: u64,
    pub recall: Option<f64>,
}

impl EvalReport {
    pub fn from_frames(tau: u32, mut frames: Vec<FrameEval>) -> Self {
        frames.sort_by_key(|f| f.frame_index);
        let total_tp = frames.iter().map(|f| f.tp).sum();
        let total_fn = frames.iter().map(|f| f.fn_).sum();
        let recall = match recall(total_tp, total_fn) {
            None if !frames.is_empty() && frames.iter().all(|f| f.recall == Some(1.0)) => Some(1.0),
            r => r,
        };
        Self {
            tau,
            frames,
            total_tp,
            total_fn,
            recall,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Indexed files `frame_%06d.<ext>` in `dir`, sorted by index.
pub fn indexed_files(dir: &Path, ext: &str) -> Result<BTreeMap<usize, PathBuf>, EvalError> {
    let list_err = |e: std::io::Error| EvalError::List {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(list_err)? {
        let path = entry.map_err(list_err)?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(ext).and_then(|s| s.strip_suffix('.')) else {
            continue;
        };
        if let Some(idx) = stem.strip_prefix("frame_").filter(|d| d.len() >= 6 && d.bytes().all(|b| b.is_ascii_digit())) {
            if let Ok(i) = idx.parse() {
                out.insert(i, path);
            }
        }
    }
    Ok(out)
}

/// Builds an edge map for each `frame_%06d.json` outline and writes it as
/// `frame_%06d.png` into `out_dir`.
pub fn build_cbem_dir(
    seq: &FrameSequence,
    outlines_dir: &Path,
    sigma: f64,
    out_dir: &Path,
) -> Result<usize, EvalError> {
    let outlines = indexed_files(outlines_dir, "json")?;
    std::fs::create_dir_all(out_dir).map_err(|e| EvalError::Write {
        path: out_dir.to_path_buf(),
        message: e.to_string(),
    })?;
    outlines
        .into_par_iter()
        .map(|(index, path)| {
            let outline = ContourOutline::load(&path, index)?;
            let frame = seq.frame(index)?;
            let cbem = build_cbem(&frame, &outline, sigma)?;
            let dest = out_dir.join(format!("frame_{index:06}.png"));
            cbem.save(&dest).map_err(|e| EvalError::Write {
                path: dest,
                message: e.to_string(),
            })?;
            Ok(1)
        })
        .sum()
}

/// Pairs `frame_%06d.png` edge maps with `frame_%06d.txt` coordinate files.
pub fn evaluate_dirs(cbem_dir: &Path, coords_dir: &Path, tau: u32) -> Result<EvalReport, EvalError> {
    let maps = indexed_files(cbem_dir, "png")?;
    if maps.is_empty() {
        return Err(EvalError::NoEdgeMaps(cbem_dir.to_path_buf()));
    }
    let frames = maps
        .into_par_iter()
        .map(|(index, path)| {
            let cbem = Cbem::load(&path, index)?;
            let coords_path = coords_dir.join(format!("frame_{index:06}.txt"));
            let text = std::fs::read_to_string(&coords_path).map_err(|_| EvalError::MissingCoords {
                frame: index,
                path: coords_path.clone(),
            })?;
            let pixels = parse_coords(&text).map_err(|source| EvalError::Coords {
                path: coords_path,
                source,
            })?;
            evaluate(&cbem.edges, index, &pixels, tau)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_frames(tau, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, px: &[Pixel]) -> BinaryMask {
        BinaryMask::from_pixels(w, h, px.iter().copied())
    }

    /// Direct scan over annotated pixels for each edge pixel.
    fn brute(edges: &BinaryMask, ann: &[Pixel], tau: u32) -> (u64, u64) {
        let mut tp = 0;
        for (x, y) in edges.white_pixels() {
            if ann.iter().any(|&(ax, ay)| ax.abs_diff(x).max(ay.abs_diff(y)) <= tau) {
                tp += 1;
            }
        }
        (tp, edges.count_white() as u64 - tp)
    }

    #[test]
    fn recall_arithmetic() {
        let r = recall(127, 2).unwrap();
        assert!((r - 127.0 / 129.0).abs() < 1e-15);
        assert_eq!(format!("{r:.5}"), "0.98450");
        assert_eq!(recall(0, 0), None);
    }

    #[test]
    fn edge_cases() {
        let empty = BinaryMask::new(8, 8);
        let some = mask(8, 8, &[(2, 2), (3, 3)]);
        assert_eq!(evaluate(&empty, 0, &[], 1).unwrap().recall, Some(1.0));
        assert_eq!(evaluate(&empty, 0, &[(1, 1)], 1).unwrap().recall, None);
        assert_eq!(evaluate(&some, 0, &[], 1).unwrap().recall, Some(0.0));
        let sup = evaluate(&some, 0, &[(2, 2), (3, 3), (7, 7)], 0).unwrap();
        assert_eq!((sup.tp, sup.fn_, sup.recall), (2, 0, Some(1.0)));
        assert!(evaluate(&some, 0, &[(8, 0)], 1).is_err());
    }

    #[test]
    fn matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (w, h) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let edges = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.3));
            let ann: Vec<Pixel> = (0..rng.gen_range(0..15)).map(|_| (rng.gen_range(0..w), rng.gen_range(0..h))).collect();
            let mut prev = 0.0;
            for tau in 0..4 {
                let e = evaluate(&edges, 0, &ann, tau).unwrap();
                assert_eq!((e.tp, e.fn_), brute(&edges, &ann, tau));
                assert_eq!(e.tp + e.fn_, edges.count_white() as u64);
                if let Some(r) = e.recall {
                    assert!((0.0..=1.0).contains(&r) && r >= prev);
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn report_aggregates() {
        let frames = vec![
            FrameEval { frame_index: 1, tp: 100, fn_: 1, recall: recall(100, 1) },
            FrameEval { frame_index: 0, tp: 27, fn_: 1, recall: recall(27, 1) },
        ];
        let r = EvalReport::from_frames(1, frames);
        assert_eq!(r.frames[0].frame_index, 0);
        assert_eq!((r.total_tp, r.total_fn), (127, 2));
        assert!((r.recall.unwrap() - 0.98450).abs() < 5e-6);
        let json = r.to_json();
        assert!(json.contains("\"fn\": 1") && json.contains("\"tau\": 1"));
    }

    #[test]
    fn dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (cb, co) = (dir.path().join("cbem"), dir.path().join("coords"));
        std::fs::create_dir_all(&cb).unwrap();
        std::fs::create_dir_all(&co).unwrap();
        let edges = mask(10, 10, &[(1, 1), (5, 5), (9, 9)]);
        crate::io::write_mask_png(&edges, &cb.join("frame_000000.png")).unwrap();
        std::fs::write(co.join("frame_000000.txt"), "2 2\n5 6\n").unwrap();
        let r = evaluate_dirs(&cb, &co, 1).unwrap();
        assert_eq!((r.total_tp, r.total_fn), (2, 1));
        std::fs::remove_file(co.join("frame_000000.txt")).unwrap();
        assert!(matches!(evaluate_dirs(&cb, &co, 1), Err(EvalError::MissingCoords { frame: 0, .. })));
    }
}
