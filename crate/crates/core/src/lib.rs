//! Line-marking annotation for frame sequences.
//!
//! A quadrilateral region of interest is rectified to a bird's-eye view,
//! converted to min-max normalized HSV and thresholded. A column histogram
//! decides whether a marking is present and supplies seeds; a gap-bridging
//! traversal collects the marking pixels, which are mapped back into the
//! frame. The [`eval`] module scores results against Canny edge maps built
//! from hand-drawn outlines.

pub mod color;
pub mod config;
pub mod detect;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod roi;
pub mod synth;
pub mod traversal;

pub use color::{BinaryMask, HsvBounds, HsvRoi};
pub use config::{ConfigError, PipelineConfig};
pub use detect::{decide_presence, extract_seeds, vertical_histogram, DetectConfig, PresenceDecision, SeedSet};
pub use frame::{load_sequence, Frame, FrameSequence, Rgb, SequenceError};
pub use geometry::{compute_homography, warp_roi, Homography, Pixel};
pub use pipeline::{annotate_frame, run_sequence, AnnotationRecord, RunSummary, Stage, TimingReport};
pub use roi::{Point, Roi, RoiViolation};
pub use traversal::{circledat, circledat_multi, TraversalParams};
