//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the target exits non-zero if any criterion fails.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use linemark_core::color::BinaryMask;
use linemark_core::eval::{auto_canny_thresholds, build_cbem, evaluate, run_ablation, AblationSample, EvalReport};
use linemark_core::frame::FrameSequence;
use linemark_core::geometry::{compute_homography, Pixel};
use linemark_core::pipeline::{annotate_frame, birds_eye, run_sequence, Stage};
use linemark_core::synth::{benchmark_case, SceneSpec, SynthGenerator};
use linemark_core::traversal::{benchmark_traversal, circledat, TraversalParams, CIRCLEDAT, SLIDING_WINDOW};
use linemark_core::{PipelineConfig, Point};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:.0?}"))
}

/// Convex quadrilateral in TL, TR, BR, BL order (clockwise with y down).
fn random_quad(rng: &mut ChaCha8Rng, scale: f64) -> [Point; 4] {
    let cx = rng.gen_range(0.3..0.7) * scale;
    let cy = rng.gen_range(0.3..0.7) * scale;
    let base = [225.0f64, 315.0, 45.0, 135.0];
    base.map(|deg| {
        let a = (deg + rng.gen_range(-30.0..30.0)).to_radians();
        let r = rng.gen_range(0.1..0.3) * scale;
        Point::new(cx + r * a.cos(), cy + r * a.sin())
    })
}

fn homography_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut worst_fit, mut worst_trip) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let scale = rng.gen_range(50.0..2000.0);
        let src = random_quad(&mut rng, scale);
        let dst = random_quad(&mut rng, scale);
        let h = compute_homography(&src, &dst).map_err(|e| e.to_string())?;
        for (d, s) in dst.iter().zip(&src) {
            worst_fit = worst_fit.max(h.map_point(*d).unwrap().distance(s));
        }
        let inv = h.inverse().map_err(|e| e.to_string())?;
        for _ in 0..4 {
            let p = Point::new(rng.gen_range(0.0..scale), rng.gen_range(0.0..scale));
            if let Ok(q) = h.map_point(p) {
                if let Ok(back) = inv.map_point(q) {
                    worst_trip = worst_trip.max(back.distance(&p));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst_fit < 1e-9, format!("residual {worst_fit:e}"))?;
    check(worst_trip < 1e-6, format!("round trip {worst_trip:e}"))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("max residual {worst_fit:.1e} px, max round trip {worst_trip:.1e} px, {elapsed:.2?}"))
}

/// Closure of `seed` under hops of Chebyshev length ≤ θ between white pixels.
fn bfs_closure(mask: &BinaryMask, seed: Pixel, theta: u32) -> BTreeSet<Pixel> {
    let mut seen = BTreeSet::new();
    if !mask.is_white(seed.0, seed.1) {
        return seen;
    }
    let t = i64::from(theta);
    let mut queue = VecDeque::from([seed]);
    seen.insert(seed);
    while let Some((x, y)) = queue.pop_front() {
        for dy in -t..=t {
            for dx in -t..=t {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(mask.width()) || ny >= i64::from(mask.height()) {
                    continue;
                }
                let p = (nx as u32, ny as u32);
                if mask.is_white(p.0, p.1) && seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
    }
    seen
}

fn circledat_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let thetas = [1u32, 2, 3, 5];
    let mut agree = 0;
    for case in 0..500 {
        let theta = thetas[case % 4];
        let w = rng.gen_range(theta.max(1)..=64);
        let h = rng.gen_range(theta.max(1)..=64);
        let density = rng.gen_range(0.02..0.5);
        let mut mask = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density));
        let seed = (rng.gen_range(0..w), rng.gen_range(0..h));
        mask.set(seed.0, seed.1, true);
        let got = circledat(&mask, seed, &TraversalParams::new(theta)).map_err(|e| e.to_string())?;
        let got: BTreeSet<Pixel> = got.pixels.into_iter().collect();
        if got == bfs_closure(&mask, seed, theta) {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    check(agree == 500, format!("{agree}/500 cases match"))?;
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("500/500 masks match the BFS closure, {elapsed:.2?}"))
}

fn gap_law() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    for theta in 1..=10u32 {
        for d in 1..=10u32 {
            // Straight, diagonal and knight-like placements at Chebyshev distance d.
            for (dx, dy) in [(d, 0), (0, d), (d, d), (d, d / 2)] {
                let (w, h) = (dx + 1 + 2, dy + 1 + 2);
                let (a, b) = ((1, 1), (1 + dx, 1 + dy));
                let mask = BinaryMask::from_pixels(w.max(theta), h.max(theta), [a, b]);
                let r = circledat(&mask, a, &TraversalParams::new(theta)).map_err(|e| e.to_string())?;
                let reached = r.pixels.contains(&b);
                check(reached == (d <= theta), format!("d={d} θ={theta} offset ({dx},{dy}): reached={reached}"))?;
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{cases} placements, {elapsed:.2?}"))
}

fn complexity_contrast() -> Outcome {
    let (w, h) = (1920u32, 1080u32);
    let cases: Vec<_> = (0..4).map(|s| benchmark_case(s, w, h, 5)).collect();
    let area = f64::from(w) * f64::from(h);
    for c in &cases {
        let share = c.mask.count_white() as f64 / area;
        check(share <= 0.01, format!("white share {share:.4} above 1%"))?;
    }
    let params = TraversalParams::default();
    let report = benchmark_traversal(&cases, &params, 9).map_err(|e| e.to_string())?;
    let sw = report.row(SLIDING_WINDOW).ok_or("missing SW row")?;
    let cd = report.row(CIRCLEDAT).ok_or("missing CIRCLEDAT row")?;
    let visit_share = cd.visits as f64 / (area * cases.len() as f64);
    check(visit_share < 0.05, format!("visit share {visit_share:.4}"))?;
    check(
        cd.median_ms < sw.median_ms,
        format!("CIRCLEDAT {:.3} ms not below SW {:.3} ms", cd.median_ms, sw.median_ms),
    )?;
    let csv = report.to_csv();
    let mut lines = csv.lines();
    check(lines.next() == Some("algorithm,complexity,median_ms,visits"), "CSV header")?;
    check(lines.next().is_some_and(|l| l.starts_with("SW Search,O(m x n),")), "SW row")?;
    check(lines.next().is_some_and(|l| l.starts_with("CIRCLEDAT,O(k),")), "CIRCLEDAT row")?;
    Ok(format!(
        "visits {:.3}% of W·H, median {:.3} ms vs {:.3} ms",
        100.0 * visit_share,
        cd.median_ms,
        sw.median_ms
    ))
}

fn synthetic_recall() -> Outcome {
    let start = Instant::now();
    let spec = SceneSpec::default();
    let roi = spec.roi.clone();
    let mut gen = SynthGenerator::with_spec(2024, spec);
    let frames = gen.marking_sequence(100);
    let cfg = PipelineConfig::default();
    let rows = frames
        .par_iter()
        .map(|f| {
            let ann = annotate_frame(&f.frame, &roi, &cfg).map_err(|e| e.to_string())?;
            let cbem = build_cbem(&f.frame, &f.outline, cfg.eval.sigma).map_err(|e| e.to_string())?;
            evaluate(&cbem.edges, f.frame.index(), &ann.record.pixels, 1).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let report = EvalReport::from_frames(1, rows);
    let elapsed = start.elapsed();
    let (tp, fn_) = (report.total_tp, report.total_fn);
    check(tp > 0, "no edge pixels in any edge map")?;
    let recall = tp as f64 / (tp + fn_) as f64;
    check(recall >= 0.97, format!("recall {recall:.5} (TP {tp}, FN {fn_})"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("recall {recall:.5} over 100 frames (TP {tp}, FN {fn_}), {elapsed:.2?}"))
}

fn ablation_monotonicity() -> Outcome {
    let spec = SceneSpec::default();
    let roi = spec.roi.clone();
    let mut gen = SynthGenerator::with_spec(77, spec);
    let frames = gen.labeled_set(30, 30);
    let cfg = PipelineConfig::default();
    let samples = frames
        .par_iter()
        .map(|f| {
            let be = birds_eye(&f.frame, &roi, &cfg).map_err(|e| e.to_string())?;
            Ok(AblationSample {
                frame_index: f.frame.index(),
                has_marking: f.has_marking(),
                histogram: be.histogram,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let noise_peak = samples.iter().filter(|s| !s.has_marking).map(|s| s.histogram.peak()).max().unwrap_or(0);
    check(noise_peak < 150, format!("noise frame peaks at {noise_peak}"))?;
    let report = run_ablation(&samples, &[0, 75, 150]).map_err(|e| e.to_string())?;
    let fp = |t| report.row(t).and_then(|r| r.fp_percent).ok_or(format!("no FP% for T={t}"));
    let (f0, f75, f150) = (fp(0)?, fp(75)?, fp(150)?);
    check(f0 > f75 && f75 >= f150 && f150 == 0.0, format!("FP% {f0:.2} / {f75:.2} / {f150:.2}"))?;
    Ok(format!(
        "FP% T=0 {f0:.2}, T=75 {f75:.2}, T=150 {f150:.2}; T_optimal {}",
        report.t_optimal
    ))
}

fn auto_canny() -> Outcome {
    let a = auto_canny_thresholds(100.0, 0.33);
    let b = auto_canny_thresholds(240.0, 0.33);
    check(a == (67, 133), format!("v=100 gave {a:?}"))?;
    check(b == (160, 255), format!("v=240 gave {b:?}"))?;
    Ok(format!("{a:?}, {b:?}"))
}

fn recall_arithmetic() -> Outcome {
    // Edge map with 129 pixels on one row; the last two have no annotation nearby.
    let edges = BinaryMask::from_pixels(200, 10, (0..129).map(|x| (x, 5)));
    let annotated: Vec<Pixel> = (0..127).map(|x| (x, 5)).collect();
    let e = evaluate(&edges, 0, &annotated, 0).map_err(|e| e.to_string())?;
    check((e.tp, e.fn_) == (127, 2), format!("TP/FN {}/{}", e.tp, e.fn_))?;
    let r = e.recall.ok_or("undefined recall")?;
    check((r - 0.98450).abs() <= 5e-6, format!("recall {r}"))?;

    let empty = BinaryMask::new(200, 10);
    let both_empty = evaluate(&empty, 0, &[], 1).map_err(|e| e.to_string())?.recall;
    check(both_empty == Some(1.0), format!("empty/empty gave {both_empty:?}"))?;
    let no_edges = evaluate(&empty, 0, &[(3, 3)], 1).map_err(|e| e.to_string())?.recall;
    check(no_edges.is_none(), format!("empty CBEM with annotation gave {no_edges:?}"))?;
    let no_ann = evaluate(&edges, 0, &[], 1).map_err(|e| e.to_string())?.recall;
    check(no_ann == Some(0.0), format!("empty annotation gave {no_ann:?}"))?;
    let superset: Vec<Pixel> = (0..200).map(|x| (x, 5)).collect();
    let full = evaluate(&edges, 0, &superset, 0).map_err(|e| e.to_string())?.recall;
    check(full == Some(1.0), format!("superset gave {full:?}"))?;
    Ok(format!("127/129 = {r:.5}; edge cases hold"))
}

fn synthetic_sequence() -> (FrameSequence, linemark_core::Roi) {
    let spec = SceneSpec::default();
    let roi = spec.roi.clone();
    let mut gen = SynthGenerator::with_spec(99, spec);
    let frames = gen.marking_sequence(100).into_iter().map(|f| f.frame).collect();
    (FrameSequence::from_frames("synthetic", frames).unwrap(), roi)
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["coords", "overlays"] {
        let mut entries: Vec<_> = std::fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
        }
    }
    out
}

fn summary_without_timing(root: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(root.join("summary.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

fn determinism() -> Outcome {
    let (seq, roi) = synthetic_sequence();
    let cfg = PipelineConfig::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_sequence(&seq, &roi, &cfg, a.path(), &|_| {}).map_err(|e| e.to_string())?;
    run_sequence(&seq, &roi, &cfg, b.path(), &|_| {}).map_err(|e| e.to_string())?;
    let (ra, rb) = (a.path().join("synthetic"), b.path().join("synthetic"));
    let (ta, tb) = (read_tree(&ra), read_tree(&rb));
    check(ta.len() == 200, format!("{} output files, expected 200", ta.len()))?;
    check(ta == tb, "coordinate or overlay files differ")?;
    check(summary_without_timing(&ra) == summary_without_timing(&rb), "summaries differ")?;
    Ok(format!("{} files and summary identical across runs", ta.len()))
}

fn timing_report() -> Outcome {
    let (seq, roi) = synthetic_sequence();
    let seq = FrameSequence::from_frames("timing", (0..12).map(|i| seq.frame(i).unwrap().with_index(i)).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_sequence(&seq, &roi, &PipelineConfig::default(), dir.path(), &|_| {}).map_err(|e| e.to_string())?;
    let t = &summary.timing;
    let stages: Vec<Stage> = t.stages.iter().map(|s| s.stage).collect();
    check(stages == Stage::ALL.to_vec(), format!("stages {stages:?}"))?;
    let labels: Vec<&str> = t.stages.iter().map(|s| s.label.as_str()).collect();
    let expected = [
        "Perspective Transformation",
        "Color Feature Normalization",
        "HSV-based Color Thresholding",
        "Histogram Analysis",
        "CIRCLEDAT",
        "Projection Remapping",
    ];
    check(labels == expected, format!("labels {labels:?}"))?;
    let sum: f64 = t.stages.iter().map(|s| s.median_ms).sum();
    check((t.total_ms - sum).abs() <= 0.01 * sum.max(f64::MIN_POSITIVE), format!("total {} vs sum {sum}", t.total_ms))?;
    let table = t.to_table();
    check(table.lines().count() == 8 && table.contains("Total"), "table rows")?;
    Ok(format!("six stages, total {:.3} ms = sum {sum:.3} ms", t.total_ms))
}

// Runs without the libtest harness so every line shows up in plain `cargo test` output.
fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("homography suite", homography_suite),
        ("traversal matches BFS closure", circledat_oracle),
        ("gap-bridging law", gap_law),
        ("complexity contrast", complexity_contrast),
        ("synthetic end-to-end recall", synthetic_recall),
        ("ablation monotonicity", ablation_monotonicity),
        ("auto-Canny thresholds", auto_canny),
        ("recall arithmetic", recall_arithmetic),
        ("determinism", determinism),
        ("timing report", timing_report),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
