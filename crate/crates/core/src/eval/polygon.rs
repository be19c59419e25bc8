//! Outline polygons: validation, containment and rasterization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::BinaryMask;
use crate::roi::Point;

#[derive(Debug, Error, PartialEq)]
pub enum OutlineError {
    #[error("outline needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("outline vertex {index} ({point}) outside {width}x{height} frame")]
    OutOfBounds {
        index: usize,
        point: Point,
        width: u32,
        height: u32,
    },
    #[error("outline vertex {0} is not finite")]
    NonFinite(usize),
    #[error("degenerate outline: edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("outline area {0:.2} px is below the 9 px minimum")]
    TooSmall(f64),
}

#[derive(Debug, Error)]
pub enum OutlineFileError {
    #[error("cannot read outline {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed outline {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourOutline {
    #[serde(default)]
    pub frame_index: usize,
    pub polygon: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct OutlineFile {
    polygon: Vec<Point>,
}

pub const MIN_OUTLINE_AREA: f64 = 9.0;

impl ContourOutline {
    pub fn new(frame_index: usize, polygon: Vec<Point>) -> Self {
        Self {
            frame_index,
            polygon,
        }
    }

    /// Reads `{"polygon": [[x, y], ...]}`.
    pub fn load(path: &Path, frame_index: usize) -> Result<Self, OutlineFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| OutlineFileError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: OutlineFile = serde_json::from_str(&text).map_err(|e| OutlineFileError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::new(frame_index, file.polygon))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&OutlineFile {
            polygon: self.polygon.clone(),
        })
        .expect("outline serializes")
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.polygon.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (self.polygon[i], self.polygon[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn validate(&self, dims: (u32, u32)) -> Result<(), OutlineError> {
        let poly = &self.polygon;
        let n = poly.len();
        if n < 3 {
            return Err(OutlineError::TooFewVertices(n));
        }
        let (w, h) = dims;
        for (index, &p) in poly.iter().enumerate() {
            if !p.is_finite() {
                return Err(OutlineError::NonFinite(index));
            }
            if p.x < 0.0 || p.y < 0.0 || p.x > f64::from(w) - 1.0 || p.y > f64::from(h) - 1.0 {
                return Err(OutlineError::OutOfBounds {
                    index,
                    point: p,
                    width: w,
                    height: h,
                });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a0, a1) = (poly[i], poly[(i + 1) % n]);
                let (b0, b1) = (poly[j], poly[(j + 1) % n]);
                let hit = if adjacent {
                    // Shared vertex is fine; folding back onto the other edge is not.
                    let shared = if j == i + 1 { a1 } else { a0 };
                    let (p, q) = if j == i + 1 { (a0, b1) } else { (a1, b0) };
                    cross(shared, p, q) == 0.0 && dot(shared, p, q) > 0.0
                } else {
                    segments_touch(a0, a1, b0, b1)
                };
                if hit {
                    return Err(OutlineError::SelfIntersecting(i, j));
                }
            }
        }
        let area = self.area();
        if area < MIN_OUTLINE_AREA {
            return Err(OutlineError::TooSmall(area));
        }
        Ok(())
    }

    /// Strict interior test; points on an edge are outside.
    pub fn strictly_contains(&self, p: Point) -> bool {
        let poly = &self.polygon;
        let n = poly.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if on_segment(a, b, p) {
                return false;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Pixel centers strictly inside, as a mask of `dims`.
    pub fn interior_mask(&self, dims: (u32, u32)) -> BinaryMask {
        let (w, h) = dims;
        let (x0, y0, x1, y1) = self.pixel_bbox(dims);
        let mut mask = BinaryMask::new(w, h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.strictly_contains(Point::new(f64::from(x), f64::from(y))) {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    /// Integer bounding box clipped to `dims`, inclusive.
    pub fn pixel_bbox(&self, dims: (u32, u32)) -> (u32, u32, u32, u32) {
        let clamp = |v: f64, max: u32| v.clamp(0.0, f64::from(max.saturating_sub(1))) as u32;
        let min_x = self.polygon.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = self.polygon.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = self.polygon.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = self.polygon.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        (
            clamp(min_x.floor(), dims.0),
            clamp(min_y.floor(), dims.1),
            clamp(max_x.ceil(), dims.0),
            clamp(max_y.ceil(), dims.1),
        )
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn dot(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.x - o.x) + (a.y - o.y) * (b.y - o.y)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn segments_touch(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = cross(b0, b1, a0);
    let d2 = cross(b0, b1, a1);
    let d3 = cross(a0, a1, b0);
    let d4 = cross(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(b0, b1, a0) || on_segment(b0, b1, a1) || on_segment(a0, a1, b0) || on_segment(a0, a1, b1)
}
