use std::collections::BTreeSet;
use std::path::Path;

use linemark_core::eval::{build_cbem_dir, evaluate_dirs};
use linemark_core::frame::load_sequence;
use linemark_core::io::{encode_png, read_frame, write_png, write_ppm};
use linemark_core::pipeline::{measure_stage_timings, parse_coords, run_sequence, PipelineError};
use linemark_core::synth::{MarkingShape, NoiseKind, SceneSpec, SynthFrame, SynthGenerator};
use linemark_core::{PipelineConfig, Roi};

fn scene() -> (SynthGenerator, Roi) {
    let spec = SceneSpec::default();
    let roi = spec.roi.clone();
    (SynthGenerator::with_spec(11, spec), roi)
}

fn write_frames(dir: &Path, frames: &[SynthFrame]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        write_png(&f.frame, &dir.join(format!("frame_{i:06}.png"))).unwrap();
    }
}

#[test]
fn annotations_follow_ground_truth() {
    let (mut gen, roi) = scene();
    let frames = vec![
        gen.marking_frame(0, MarkingShape::Straight),
        gen.noise_frame(1, NoiseKind::Clean),
        gen.marking_frame(2, MarkingShape::Junction),
        gen.marking_frame(3, MarkingShape::Curved),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let seq_dir = tmp.path().join("seqs").join("apron");
    write_frames(&seq_dir, &frames);
    let seq = load_sequence(&seq_dir).unwrap();
    assert_eq!(seq.id(), "apron");

    let out = tmp.path().join("out");
    let summary = run_sequence(&seq, &roi, &PipelineConfig::default(), &out, &|_| {}).unwrap();
    assert_eq!(summary.frames_total, 4);
    assert_eq!(summary.frames_with_marking, 3);
    assert_eq!(summary.frames_failed, 0);

    let root = out.join("apron");
    for (i, f) in frames.iter().enumerate() {
        let text = std::fs::read_to_string(root.join(format!("coords/frame_{i:06}.txt"))).unwrap();
        let got: BTreeSet<_> = parse_coords(&text).unwrap().into_iter().collect();
        let overlay = read_frame(&root.join(format!("overlays/frame_{i:06}.png"))).unwrap();
        if !f.has_marking() {
            assert!(text.is_empty());
            assert_eq!(overlay.pixels(), f.frame.pixels());
            continue;
        }
        let truth: BTreeSet<_> = f.truth.iter().copied().collect();
        let inter = got.intersection(&truth).count() as f64;
        let union = got.union(&truth).count() as f64;
        assert!(inter / union > 0.85, "frame {i}: IoU {:.3}", inter / union);
        for &(x, y) in &got {
            assert_eq!(overlay.at(x, y), [255, 0, 0]);
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["roi"]["dst_width"], 600);
    assert_eq!(json["timing"]["stages"].as_array().unwrap().len(), 6);
}

#[test]
fn corrupt_frame_is_skipped() {
    let (mut gen, roi) = scene();
    let frames: Vec<_> = (0..3).map(|i| gen.marking_frame(i, MarkingShape::Straight)).collect();
    let tmp = tempfile::tempdir().unwrap();
    let seq_dir = tmp.path().join("broken");
    write_frames(&seq_dir, &frames);
    // Valid header, truncated pixel data.
    let bytes = encode_png(&frames[1].frame).unwrap();
    std::fs::write(seq_dir.join("frame_000001.png"), &bytes[..bytes.len() / 3]).unwrap();

    let seq = load_sequence(&seq_dir).unwrap();
    let out = tmp.path().join("out");
    let summary = run_sequence(&seq, &roi, &PipelineConfig::default(), &out, &|_| {}).unwrap();
    assert_eq!(summary.frames_failed, 1);
    assert_eq!(summary.failures[0].frame_index, 1);
    assert_eq!(summary.frames_with_marking, 2);
    assert!(out.join("broken/coords/frame_000002.txt").exists());
    assert!(!out.join("broken/coords/frame_000001.txt").exists());
}

#[test]
fn out_of_frame_roi_refuses_to_start() {
    let (mut gen, _) = scene();
    let tmp = tempfile::tempdir().unwrap();
    let seq_dir = tmp.path().join("s");
    write_frames(&seq_dir, &[gen.noise_frame(0, NoiseKind::Clean)]);
    let seq = load_sequence(&seq_dir).unwrap();
    let roi = Roi::from_xy([(100.0, 200.0), (540.0, 200.0), (700.0, 470.0), (20.0, 470.0)]);
    let out = tmp.path().join("out");
    let err = run_sequence(&seq, &roi, &PipelineConfig::default(), &out, &|_| {}).unwrap_err();
    assert!(matches!(err, PipelineError::Roi(_)));
    assert!(err.to_string().contains("vertex out of bounds"));
    assert!(!out.exists());
}

#[test]
fn progress_reaches_frame_count() {
    let (mut gen, roi) = scene();
    let frames: Vec<_> = (0..5).map(|i| gen.noise_frame(i, NoiseKind::Speckle)).collect();
    let seq = linemark_core::FrameSequence::from_frames(
        "mem",
        frames.into_iter().map(|f| f.frame).collect(),
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let max = std::sync::atomic::AtomicUsize::new(0);
    run_sequence(&seq, &roi, &PipelineConfig::default(), tmp.path(), &|n| {
        max.fetch_max(n, std::sync::atomic::Ordering::SeqCst);
    })
    .unwrap();
    assert_eq!(max.into_inner(), 5);
}

#[test]
fn ppm_frames_and_stage_timings() {
    let (mut gen, roi) = scene();
    let tmp = tempfile::tempdir().unwrap();
    for i in 0..2 {
        let f = gen.marking_frame(i, MarkingShape::Curved);
        write_ppm(&f.frame, &tmp.path().join(format!("frame_{i:06}.ppm"))).unwrap();
    }
    let seq = load_sequence(tmp.path()).unwrap();
    let report = measure_stage_timings(&seq, &roi, &PipelineConfig::default(), 2).unwrap();
    assert_eq!(report.samples, 4);
    assert!(report.stages.iter().all(|s| s.median_ms >= 0.0));
}

#[test]
fn edge_maps_from_outline_files() {
    let (mut gen, roi) = scene();
    let frames: Vec<_> = (0..3).map(|i| gen.marking_frame(i, MarkingShape::ALL[i])).collect();
    let tmp = tempfile::tempdir().unwrap();
    let seq_dir = tmp.path().join("seq");
    write_frames(&seq_dir, &frames);
    let outlines = tmp.path().join("outlines");
    std::fs::create_dir_all(&outlines).unwrap();
    // Frame 1 deliberately has no outline.
    for i in [0, 2] {
        std::fs::write(outlines.join(format!("frame_{i:06}.json")), frames[i].outline.to_json()).unwrap();
    }
    let seq = load_sequence(&seq_dir).unwrap();
    let cbem_dir = tmp.path().join("cbem");
    assert_eq!(build_cbem_dir(&seq, &outlines, 0.33, &cbem_dir).unwrap(), 2);

    let out = tmp.path().join("out");
    run_sequence(&seq, &roi, &PipelineConfig::default(), &out, &|_| {}).unwrap();
    let report = evaluate_dirs(&cbem_dir, &out.join("seq/coords"), 1).unwrap();
    let indices: Vec<_> = report.frames.iter().map(|f| f.frame_index).collect();
    assert_eq!(indices, vec![0, 2]);
    assert!(report.recall.unwrap() > 0.95, "{:?}", report.recall);
    let strict = evaluate_dirs(&cbem_dir, &out.join("seq/coords"), 0).unwrap();
    assert!(strict.recall.unwrap() <= report.recall.unwrap());
}
