//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use linemark_core::color::BinaryMask;
use linemark_core::detect::{decide_presence, extract_seeds, hsv_frequency_profile, vertical_histogram};
use linemark_core::eval::{
    build_cbem_dir, evaluate_dirs, indexed_files, parse_labels, run_ablation, AblationSample, ContourOutline, EvalError,
};
use linemark_core::frame::{load_sequence, FrameSequence, SequenceError};
use linemark_core::geometry::Filter;
use linemark_core::io::read_mask_png;
use linemark_core::pipeline::{birds_eye, run_sequence, PipelineError};
use linemark_core::roi::{Point, Roi};
use linemark_core::synth::benchmark_case;
use linemark_core::traversal::{benchmark_traversal, BenchCase};
use linemark_core::PipelineConfig;

use crate::server::{self, AppState};
use crate::store::Store;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Roi(_) | PipelineError::Sequence(_) => invalid(e),
            _ => runtime(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Write { .. } => runtime(e),
            _ => invalid(e),
        }
    }
}

type CliResult = Result<(), CliError>;

fn parse_triple(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    };
    let p = |v: &str| v.parse::<u8>().map_err(|_| format!("`{v}` is not in 0..=255"));
    Ok([p(a)?, p(b)?, p(c)?])
}

fn parse_filter(s: &str) -> Result<Filter, String> {
    match s {
        "bilinear" => Ok(Filter::Bilinear),
        "nearest" => Ok(Filter::Nearest),
        _ => Err(format!("unknown filter `{s}` (bilinear or nearest)")),
    }
}

/// Flags that override keys of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Lower HSV bound, `H,S,V`.
    #[arg(long, global = true, value_parser = parse_triple)]
    hsv_lower: Option<[u8; 3]>,
    /// Upper HSV bound, `H,S,V`.
    #[arg(long, global = true, value_parser = parse_triple)]
    hsv_upper: Option<[u8; 3]>,
    /// Min-max normalize HSV channels before thresholding.
    #[arg(long, global = true)]
    normalize: Option<bool>,
    /// Presence threshold on the column-histogram peak.
    #[arg(long, global = true)]
    threshold: Option<u32>,
    /// Largest run of empty columns inside one seed group.
    #[arg(long, global = true)]
    seed_gap: Option<u32>,
    /// Traversal hop radius.
    #[arg(long, global = true)]
    theta: Option<u32>,
    /// Restrict hops to the disk of radius theta.
    #[arg(long, global = true)]
    disk_mode: Option<bool>,
    /// Warp sampling: bilinear or nearest.
    #[arg(long, global = true, value_parser = parse_filter)]
    filter: Option<Filter>,
    /// Overlay color, `R,G,B`.
    #[arg(long, global = true, value_parser = parse_triple)]
    overlay_color: Option<[u8; 3]>,
    /// Matching tolerance in pixels (Chebyshev).
    #[arg(long, global = true)]
    tau: Option<u32>,
    /// Spread of the automatic Canny thresholds.
    #[arg(long, global = true)]
    sigma: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.hsv.lower, self.hsv_lower);
        set!(cfg.hsv.upper, self.hsv_upper);
        set!(cfg.hsv.normalize, self.normalize);
        set!(cfg.detect.threshold, self.threshold);
        set!(cfg.detect.seed_group_gap, self.seed_gap);
        set!(cfg.traversal.theta, self.theta);
        set!(cfg.traversal.disk_mode, self.disk_mode);
        set!(cfg.warp.filter, self.filter);
        set!(cfg.output.overlay_color, self.overlay_color);
        set!(cfg.eval.tau, self.tau);
        set!(cfg.eval.sigma, self.sigma);
    }
}

#[derive(Debug, Parser)]
#[command(name = "linemark", version, about = "Line-marking annotation for frame sequences")]
pub struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register a frame directory with the output store.
    Ingest {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also validate and store this ROI for the sequence.
        #[arg(long)]
        roi: Option<PathBuf>,
    },
    /// Annotate every frame of a sequence.
    Run {
        #[arg(long)]
        seq: PathBuf,
        /// ROI file; defaults to the one stored under `<out>/<id>/roi.json`.
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score coordinate files against edge maps.
    Eval {
        #[arg(long)]
        cbem_dir: PathBuf,
        #[arg(long)]
        coords_dir: PathBuf,
        /// Build edge maps into `--cbem-dir` first from these frames...
        #[arg(long, requires = "outlines")]
        seq: Option<PathBuf>,
        /// ...and these `frame_%06d.json` outlines.
        #[arg(long, requires = "seq")]
        outlines: Option<PathBuf>,
        #[arg(long, default_value = "eval_report.json")]
        report: PathBuf,
    },
    /// Sweep presence thresholds over labeled frames.
    Ablate {
        #[arg(long)]
        seq: PathBuf,
        /// CSV `frame_index,has_marking`.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,75,150")]
        thresholds: Vec<u32>,
        /// CSV report; a JSON report with `t_optimal` is written next to it.
        #[arg(long, default_value = "ablation.csv")]
        report: PathBuf,
    },
    /// Compare traversal against a full raster scan.
    Bench {
        /// Directory of `frame_%06d.png` masks; synthetic masks when absent.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        cases: usize,
        #[arg(long, default_value_t = 1920)]
        width: u32,
        #[arg(long, default_value_t = 1080)]
        height: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 9)]
        runs: usize,
        #[arg(long, default_value = "bench.csv")]
        report: PathBuf,
    },
    /// Tally HSV values inside outlined markings.
    ProfileHsv {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        outlines: PathBuf,
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "hsv_profile.csv")]
        report: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(invalid)?,
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn load_seq(dir: &Path) -> Result<FrameSequence, CliError> {
    load_sequence(dir).map_err(invalid)
}

/// `--roi` when given, otherwise the ROI stored for the sequence.
fn resolve_roi(explicit: Option<&Path>, store: &Store, seq: &FrameSequence) -> Result<Roi, CliError> {
    let roi = match explicit {
        Some(path) => Roi::load(path).map_err(invalid)?,
        None => store.roi(seq.id()).map_err(invalid)?.ok_or_else(|| {
            invalid(format!(
                "no ROI for sequence `{}`: pass --roi or store one at {}",
                seq.id(),
                store.roi_path(seq.id()).display()
            ))
        })?,
    };
    roi.validate(seq.dims())
        .map_err(|v| invalid(format!("ROI rejected for sequence `{}`: {v}", seq.id())))?;
    Ok(roi)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_ingest(seq: &Path, out: &Path, roi: Option<&Path>) -> CliResult {
    let store = Store::new(out);
    let info = store.ingest(seq).map_err(invalid)?;
    println!("ingested `{}`: {} frames, {}x{}", info.id, info.frame_count, info.dims.0, info.dims.1);
    if let Some(path) = roi {
        let seq = load_seq(seq)?;
        let roi = resolve_roi(Some(path), &store, &seq)?;
        store.save_roi(seq.id(), &roi).map_err(runtime)?;
        println!("stored ROI at {}", store.roi_path(seq.id()).display());
    }
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig, seq: &Path, roi: Option<&Path>, out: &Path) -> CliResult {
    let seq = load_seq(seq)?;
    let store = Store::new(out);
    let roi = resolve_roi(roi, &store, &seq)?;
    let total = seq.frame_count();
    let summary = run_sequence(&seq, &roi, cfg, out, &|n| {
        if n == total || n % 100 == 0 {
            log::info!("{n}/{total} frames");
        }
    })?;
    println!(
        "{}: {} frames, {} with marking, {} failed",
        summary.sequence_id, summary.frames_total, summary.frames_with_marking, summary.frames_failed
    );
    for f in &summary.failures {
        eprintln!("frame {}: {}", f.frame_index, f.error);
    }
    print!("{}", summary.timing.to_table());
    println!("outputs in {}", store.layout(seq.id()).root.display());
    Ok(())
}

fn cmd_eval(
    cfg: &PipelineConfig,
    cbem_dir: &Path,
    coords_dir: &Path,
    build: Option<(&Path, &Path)>,
    report_path: &Path,
) -> CliResult {
    if let Some((seq, outlines)) = build {
        let seq = load_seq(seq)?;
        let n = build_cbem_dir(&seq, outlines, cfg.eval.sigma, cbem_dir)?;
        println!("built {n} edge maps in {}", cbem_dir.display());
    }
    let report = evaluate_dirs(cbem_dir, coords_dir, cfg.eval.tau)?;
    write_text(report_path, &(report.to_json() + "\n"))?;
    match report.recall {
        Some(r) => println!(
            "recall {r:.5} (TP {}, FN {}, tau {}, {} frames)",
            report.total_tp,
            report.total_fn,
            report.tau,
            report.frames.len()
        ),
        None => println!("recall undefined (no edge pixels, tau {})", report.tau),
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_ablate(
    cfg: &PipelineConfig,
    seq: &Path,
    labels: &Path,
    roi: Option<&Path>,
    out: &Path,
    thresholds: &[u32],
    report_path: &Path,
) -> CliResult {
    let seq = load_seq(seq)?;
    let roi = resolve_roi(roi, &Store::new(out), &seq)?;
    let text = std::fs::read_to_string(labels).map_err(|e| invalid(format!("cannot read {}: {e}", labels.display())))?;
    let labels = parse_labels(&text).map_err(invalid)?;
    let mut samples = Vec::with_capacity(labels.len());
    for (&index, &has_marking) in &labels {
        let frame = seq.frame(index).map_err(|e| match e {
            SequenceError::IndexOutOfRange { .. } => invalid(format!("labels name frame {index}, which is not in the sequence")),
            e => runtime(e),
        })?;
        let be = birds_eye(&frame, &roi, cfg)?;
        samples.push(AblationSample {
            frame_index: index,
            has_marking,
            histogram: be.histogram,
        });
    }
    let report = run_ablation(&samples, thresholds).map_err(invalid)?;
    write_text(report_path, &report.to_csv())?;
    let json_path = report_path.with_extension("json");
    write_text(&json_path, &(report.to_json() + "\n"))?;
    print!("{}", report.to_csv());
    println!("t_optimal {}", report.t_optimal);
    if report.no_marking_frames == 0 {
        println!("no no-marking frames: false-positive rate undefined");
    }
    Ok(())
}

fn mask_cases(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<BenchCase>, CliError> {
    let files = indexed_files(dir, "png")?;
    if files.is_empty() {
        return Err(invalid(format!("no frame_%06d.png masks in {}", dir.display())));
    }
    files
        .values()
        .map(|path| {
            let mask = read_mask_png(path).map_err(invalid)?;
            let decision = decide_presence(&vertical_histogram(&mask), cfg.detect.threshold);
            let seeds = if decision.present {
                extract_seeds(&mask, &decision, cfg.detect.seed_group_gap).map_err(runtime)?.seeds
            } else {
                Vec::new()
            };
            Ok(BenchCase { mask, seeds })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    cfg: &PipelineConfig,
    masks: Option<&Path>,
    cases: usize,
    width: u32,
    height: u32,
    seed: u64,
    runs: usize,
    report_path: &Path,
) -> CliResult {
    let cases = match masks {
        Some(dir) => mask_cases(cfg, dir)?,
        None => {
            if width == 0 || height == 0 {
                return Err(invalid("--width and --height must be positive"));
            }
            let isolation = cfg.traversal.theta + 2;
            (0..cases as u64).map(|i| benchmark_case(seed + i, width, height, isolation)).collect()
        }
    };
    let report = benchmark_traversal(&cases, &cfg.traversal, runs).map_err(invalid)?;
    write_text(report_path, &report.to_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_profile(cfg: &PipelineConfig, seq: &Path, outlines: &Path, roi: Option<&Path>, out: &Path, report_path: &Path) -> CliResult {
    let seq = load_seq(seq)?;
    let roi = resolve_roi(roi, &Store::new(out), &seq)?;
    let files = indexed_files(outlines, "json")?;
    if files.is_empty() {
        return Err(invalid(format!("no frame_%06d.json outlines in {}", outlines.display())));
    }
    let mut rois = Vec::new();
    let mut masks = Vec::new();
    for (&index, path) in &files {
        let outline = ContourOutline::load(path, index).map_err(invalid)?;
        outline.validate(seq.dims()).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let frame = seq.frame(index).map_err(runtime)?;
        let be = birds_eye(&frame, &roi, cfg)?;
        let h = be.warped.homography;
        let (w, ht) = be.hsv.dims();
        let mask = BinaryMask::from_fn(w, ht, |x, y| {
            h.map_point(Point::new(f64::from(x), f64::from(y)))
                .is_ok_and(|p| outline.strictly_contains(p))
        });
        rois.push(be.hsv);
        masks.push(mask);
    }
    let profile = hsv_frequency_profile(&rois, &masks).map_err(runtime)?;
    write_text(report_path, &profile.to_csv())?;
    println!("{} samples from {} frames written to {}", profile.samples(), files.len(), report_path.display());
    Ok(())
}

fn cmd_serve(cfg: &PipelineConfig, out: &Path, bind: std::net::IpAddr, port: u16) -> CliResult {
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let addr = std::net::SocketAddr::new(bind, port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("cannot bind {addr}: {e}")))?;
        let state = AppState::new(Store::new(out), *cfg).map_err(runtime)?;
        println!("serving {} on http://{addr}", out.display());
        server::serve(Arc::new(state), listener).await.map_err(runtime)
    })
}

fn dispatch(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { seq, out, roi } => cmd_ingest(&seq, &out, roi.as_deref()),
        Command::Run { seq, roi, out } => cmd_run(&cfg, &seq, roi.as_deref(), &out),
        Command::Eval {
            cbem_dir,
            coords_dir,
            seq,
            outlines,
            report,
        } => {
            let build = seq.as_deref().zip(outlines.as_deref());
            cmd_eval(&cfg, &cbem_dir, &coords_dir, build, &report)
        }
        Command::Ablate {
            seq,
            labels,
            roi,
            out,
            thresholds,
            report,
        } => cmd_ablate(&cfg, &seq, &labels, roi.as_deref(), &out, &thresholds, &report),
        Command::Bench {
            masks,
            cases,
            width,
            height,
            seed,
            runs,
            report,
        } => cmd_bench(&cfg, masks.as_deref(), cases, width, height, seed, runs, &report),
        Command::ProfileHsv {
            seq,
            outlines,
            roi,
            out,
            report,
        } => cmd_profile(&cfg, &seq, &outlines, roi.as_deref(), &out, &report),
        Command::Serve { out, bind, port } => cmd_serve(&cfg, &out, bind, port),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
