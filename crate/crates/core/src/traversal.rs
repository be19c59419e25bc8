//! Gap-bridging pixel traversal and the full-raster baseline it is compared
//! against.
//!
//! [`circledat`] runs a depth-first search with an explicit stack. From every
//! white pixel it pushes each unvisited in-bounds offset of the square
//! `[-θ, θ]²` minus the origin, so it collects exactly the white pixels
//! reachable through hops of Chebyshev length at most `θ`. Offsets are
//! enumerated `(i, j)` with `i` (the x offset) varying slowest, and the
//! stack is LIFO; together these fix the collection order.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::BinaryMask;
use crate::geometry::Pixel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraversalError {
    #[error("seed ({x}, {y}) outside {width}x{height} mask")]
    SeedOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("theta must satisfy 1 <= theta <= min(W, H) = {max}, got {theta}")]
    InvalidTheta { theta: u32, max: u32 },
    #[error("benchmark needs at least one mask and one run")]
    EmptyBenchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalParams {
    /// Largest hop, in pixels, between consecutive marking pixels.
    pub theta: u32,
    /// Restrict hops to the Euclidean disk `i² + j² <= θ²` instead of the square.
    pub disk_mode: bool,
}

impl Default for TraversalParams {
    fn default() -> Self {
        Self {
            theta: 3,
            disk_mode: false,
        }
    }
}

impl TraversalParams {
    pub fn new(theta: u32) -> Self {
        Self {
            theta,
            disk_mode: false,
        }
    }

    pub fn validate(&self, dims: (u32, u32)) -> Result<(), TraversalError> {
        let max = dims.0.min(dims.1);
        if self.theta == 0 || self.theta > max {
            return Err(TraversalError::InvalidTheta {
                theta: self.theta,
                max,
            });
        }
        Ok(())
    }

    /// Neighbourhood offsets `(dx, dy)` in traversal order.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        let t = self.theta as i32;
        let mut out = Vec::with_capacity(((2 * t + 1) * (2 * t + 1)) as usize);
        for i in -t..=t {
            for j in -t..=t {
                if (i, j) == (0, 0) {
                    continue;
                }
                if self.disk_mode && i * i + j * j > t * t {
                    continue;
                }
                out.push((i, j));
            }
        }
        out
    }
}

/// Collected pixels plus the number of coordinates ever pushed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelSet {
    pub pixels: Vec<Pixel>,
    pub visit_count: usize,
}

impl PixelSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixels sorted by `(y, x)`.
    pub fn sorted(&self) -> Vec<Pixel> {
        let mut p = self.pixels.clone();
        p.sort_unstable_by_key(|&(x, y)| (y, x));
        p
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `i`; returns whether it was unmarked before.
    #[inline]
    fn insert(&mut self, i: usize) -> bool {
        let (word, bit) = (i / 64, 1u64 << (i % 64));
        let fresh = self.bits[word] & bit == 0;
        self.bits[word] |= bit;
        fresh
    }

    #[inline]
    fn contains(&self, i: usize) -> bool {
        self.bits[i / 64] & (1u64 << (i % 64)) != 0
    }
}

struct Walker<'a> {
    mask: &'a BinaryMask,
    offsets: Vec<(i32, i32, isize)>,
    theta: u32,
    visited: Visited,
    stack: Vec<usize>,
    out: PixelSet,
}

impl<'a> Walker<'a> {
    fn new(mask: &'a BinaryMask, params: &TraversalParams) -> Self {
        let w = mask.width() as isize;
        let offsets = params
            .offsets()
            .into_iter()
            .map(|(dx, dy)| (dx, dy, dy as isize * w + dx as isize))
            .collect();
        Self {
            mask,
            offsets,
            theta: params.theta,
            visited: Visited::new(mask.data().len()),
            stack: Vec::new(),
            out: PixelSet::default(),
        }
    }

    fn run_from(&mut self, (sx, sy): Pixel) {
        let w = self.mask.width() as usize;
        let (width, height) = (self.mask.width() as i64, self.mask.height() as i64);
        let data = self.mask.data();
        let seed = sy as usize * w + sx as usize;
        if !self.visited.insert(seed) {
            return;
        }
        self.out.visit_count += 1;
        self.stack.push(seed);
        let t = self.theta as usize;
        while let Some(i) = self.stack.pop() {
            if data[i] != BinaryMask::WHITE {
                continue;
            }
            let (x, y) = (i % w, i / w);
            self.out.pixels.push((x as u32, y as u32));
            let interior =
                x >= t && y >= t && x + t < width as usize && y + t < height as usize;
            for &(dx, dy, dl) in &self.offsets {
                let j = if interior {
                    (i as isize + dl) as usize
                } else {
                    let nx = x as i64 + i64::from(dx);
                    let ny = y as i64 + i64::from(dy);
                    if nx < 0 || ny < 0 || nx >= width || ny >= height {
                        continue;
                    }
                    ny as usize * w + nx as usize
                };
                if self.visited.contains(j) {
                    continue;
                }
                self.visited.insert(j);
                self.out.visit_count += 1;
                self.stack.push(j);
            }
        }
    }
}

fn check_seed(mask: &BinaryMask, (x, y): Pixel) -> Result<(), TraversalError> {
    if x >= mask.width() || y >= mask.height() {
        return Err(TraversalError::SeedOutOfBounds {
            x,
            y,
            width: mask.width(),
            height: mask.height(),
        });
    }
    Ok(())
}

/// Collects the white pixels reachable from `seed`. A black seed yields an
/// empty set.
pub fn circledat(
    mask: &BinaryMask,
    seed: Pixel,
    params: &TraversalParams,
) -> Result<PixelSet, TraversalError> {
    circledat_multi(mask, &[seed], params)
}

/// Union of [`circledat`] over several seeds, sharing one visited set.
pub fn circledat_multi(
    mask: &BinaryMask,
    seeds: &[Pixel],
    params: &TraversalParams,
) -> Result<PixelSet, TraversalError> {
    for &s in seeds {
        check_seed(mask, s)?;
    }
    if seeds.is_empty() {
        return Ok(PixelSet::default());
    }
    params.validate(mask.dims())?;
    let mut walker = Walker::new(mask, params);
    for &s in seeds {
        walker.run_from(s);
    }
    Ok(walker.out)
}

/// Full raster scan; visits all `W × H` pixels.
pub fn sliding_window_collect(mask: &BinaryMask) -> PixelSet {
    let w = mask.width() as usize;
    let mut pixels = Vec::new();
    let mut visit_count = 0;
    for (i, &v) in mask.data().iter().enumerate() {
        visit_count += 1;
        if v == BinaryMask::WHITE {
            pixels.push(((i % w) as u32, (i / w) as u32));
        }
    }
    PixelSet {
        pixels,
        visit_count,
    }
}

/// One mask and the seeds to traverse from.
#[derive(Debug, Clone)]
pub struct BenchCase {
    pub mask: BinaryMask,
    pub seeds: Vec<Pixel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub complexity: String,
    pub median_ms: f64,
    /// Pixels visited over one pass of the corpus.
    pub visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraversalBenchmark {
    pub runs: usize,
    pub rows: Vec<BenchRow>,
}

impl TraversalBenchmark {
    pub fn row(&self, algorithm: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,complexity,median_ms,visits\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{}",
                r.algorithm, r.complexity, r.median_ms, r.visits
            );
        }
        out
    }
}

pub const SLIDING_WINDOW: &str = "SW Search";
pub const CIRCLEDAT: &str = "CIRCLEDAT";

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Times both collectors over `cases`, `runs` times each (interleaved), and
/// reports median wall time per corpus pass.
pub fn benchmark_traversal(
    cases: &[BenchCase],
    params: &TraversalParams,
    runs: usize,
) -> Result<TraversalBenchmark, TraversalError> {
    if cases.is_empty() || runs == 0 {
        return Err(TraversalError::EmptyBenchmark);
    }
    let mut sw_ms = Vec::with_capacity(runs);
    let mut cd_ms = Vec::with_capacity(runs);
    let (mut sw_visits, mut cd_visits) = (0u64, 0u64);
    for run in 0..runs {
        let start = Instant::now();
        let mut visits = 0u64;
        for case in cases {
            let set = sliding_window_collect(&case.mask);
            visits += set.visit_count as u64;
            std::hint::black_box(&set);
        }
        sw_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if run == 0 {
            sw_visits = visits;
        }

        let start = Instant::now();
        let mut visits = 0u64;
        for case in cases {
            let set = circledat_multi(&case.mask, &case.seeds, params)?;
            visits += set.visit_count as u64;
            std::hint::black_box(&set);
        }
        cd_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if run == 0 {
            cd_visits = visits;
        }
    }
    Ok(TraversalBenchmark {
        runs,
        rows: vec![
            BenchRow {
                algorithm: SLIDING_WINDOW.into(),
                complexity: "O(m x n)".into(),
                median_ms: median(&mut sw_ms),
                visits: sw_visits,
            },
            BenchRow {
                algorithm: CIRCLEDAT.into(),
                complexity: "O(k)".into(),
                median_ms: median(&mut cd_ms),
                visits: cd_visits,
            },
        ],
    })
}
