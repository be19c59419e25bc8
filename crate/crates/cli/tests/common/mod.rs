#![allow(dead_code)]

use std::path::{Path, PathBuf};

use linemark_core::io::write_png;
use linemark_core::synth::{MarkingShape, NoiseKind, SceneSpec, SynthFrame, SynthGenerator};
use linemark_core::Roi;

/// A small on-disk workspace: a frame directory, its ROI, outlines and labels.
pub struct Fixture {
    pub tmp: tempfile::TempDir,
    pub seq_dir: PathBuf,
    pub roi_path: PathBuf,
    pub outlines: PathBuf,
    pub labels: PathBuf,
    pub roi: Roi,
    pub frames: Vec<SynthFrame>,
}

impl Fixture {
    pub fn new(name: &str) -> Self {
        let spec = SceneSpec::default();
        let roi = spec.roi.clone();
        let mut gen = SynthGenerator::with_spec(23, spec);
        let frames = vec![
            gen.marking_frame(0, MarkingShape::Straight),
            gen.noise_frame(1, NoiseKind::Streak),
            gen.marking_frame(2, MarkingShape::Curved),
            gen.marking_frame(3, MarkingShape::Junction),
        ];
        let tmp = tempfile::tempdir().unwrap();
        let seq_dir = tmp.path().join("data").join(name);
        let outlines = tmp.path().join("outlines");
        std::fs::create_dir_all(&seq_dir).unwrap();
        std::fs::create_dir_all(&outlines).unwrap();
        let mut labels = String::from("frame_index,has_marking\n");
        for (i, f) in frames.iter().enumerate() {
            write_png(&f.frame, &seq_dir.join(format!("frame_{i:06}.png"))).unwrap();
            labels.push_str(&format!("{i},{}\n", u8::from(f.has_marking())));
            if f.has_marking() {
                std::fs::write(outlines.join(format!("frame_{i:06}.json")), f.outline.to_json()).unwrap();
            }
        }
        let roi_path = tmp.path().join("roi.json");
        std::fs::write(&roi_path, roi.to_json()).unwrap();
        let labels_path = tmp.path().join("labels.csv");
        std::fs::write(&labels_path, labels).unwrap();
        Self {
            tmp,
            seq_dir,
            roi_path,
            outlines,
            labels: labels_path,
            roi,
            frames,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.tmp.path().join(rel)
    }
}

/// Sorted `(file name, bytes)` pairs of a directory.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// summary.json with the timing block removed.
pub fn summary_without_timing(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}
