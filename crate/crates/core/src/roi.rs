//! Points and the trapezoidal region of interest.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Image-plane point: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

// Points travel as `[x, y]` pairs in every JSON file.
impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Point { x, y })
    }
}

/// Why an ROI was rejected.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoiViolation {
    #[error("vertex out of bounds: vertex {index} at {point} outside {width}x{height} frame")]
    VertexOutOfBounds {
        index: usize,
        point: Point,
        width: u32,
        height: u32,
    },
    #[error("vertex {0} is not a finite coordinate")]
    NonFinite(usize),
    #[error("degenerate trapezoid: vertices {0}, {1}, {2} are collinear")]
    Degenerate(usize, usize, usize),
    #[error("non-convex quadrilateral: turn at vertex {0} disagrees with the others")]
    NonConvex(usize),
    #[error("vertices must be ordered top-left, top-right, bottom-right, bottom-left (got counter-clockwise winding)")]
    WrongOrder,
    #[error("destination rectangle {width}x{height} too small (both sides must be >= 2)")]
    DestinationTooSmall { width: u32, height: u32 },
}

#[derive(Debug, Error)]
pub enum RoiFileError {
    #[error("cannot read ROI file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ROI JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Trapezoid on the initial frame plus the bird's-eye rectangle it maps to.
///
/// `src` is ordered top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roi {
    pub src: [Point; 4],
    pub dst_width: u32,
    pub dst_height: u32,
}

#[derive(Deserialize)]
struct RoiRepr {
    src: [Point; 4],
    dst_width: Option<u32>,
    dst_height: Option<u32>,
}

impl<'de> Deserialize<'de> for Roi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = RoiRepr::deserialize(d)?;
        let (w, h) = default_dst_dims(&repr.src);
        Ok(Roi {
            src: repr.src,
            dst_width: repr.dst_width.unwrap_or(w),
            dst_height: repr.dst_height.unwrap_or(h),
        })
    }
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Rectangle size that keeps roughly the pixel density of the trapezoid:
/// the longer of each pair of opposite sides.
pub fn default_dst_dims(src: &[Point; 4]) -> (u32, u32) {
    let [tl, tr, br, bl] = src;
    let w = tl.distance(tr).max(bl.distance(br));
    let h = tl.distance(bl).max(tr.distance(br));
    let clamp = |v: f64| {
        if v.is_finite() {
            round_half_up(v).clamp(0.0, u32::MAX as f64) as u32
        } else {
            0
        }
    };
    (clamp(w), clamp(h))
}

impl Roi {
    /// ROI with the default destination rectangle.
    pub fn new(src: [Point; 4]) -> Self {
        let (dst_width, dst_height) = default_dst_dims(&src);
        Self {
            src,
            dst_width,
            dst_height,
        }
    }

    pub fn with_dst(src: [Point; 4], dst_width: u32, dst_height: u32) -> Self {
        Self {
            src,
            dst_width,
            dst_height,
        }
    }

    pub fn from_xy(src: [(f64, f64); 4]) -> Self {
        Self::new(src.map(|(x, y)| Point::new(x, y)))
    }

    /// Corners of the bird's-eye rectangle in the same vertex order as `src`.
    pub fn dst_corners(&self) -> [Point; 4] {
        let w = f64::from(self.dst_width.max(1) - 1);
        let h = f64::from(self.dst_height.max(1) - 1);
        [
            Point::new(0.0, 0.0),
            Point::new(w, 0.0),
            Point::new(w, h),
            Point::new(0.0, h),
        ]
    }

    pub fn dst_dims(&self) -> (u32, u32) {
        (self.dst_width, self.dst_height)
    }

    pub fn validate(&self, dims: (u32, u32)) -> Result<(), RoiViolation> {
        validate_roi(self, dims)
    }

    pub fn load(path: &Path) -> Result<Self, RoiFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| RoiFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ROI serializes")
    }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Checks a quadrilateral for strict convexity with clockwise winding in
/// image coordinates (y pointing down), i.e. TL, TR, BR, BL order.
pub fn check_quad(quad: &[Point; 4]) -> Result<(), RoiViolation> {
    for (i, p) in quad.iter().enumerate() {
        if !p.is_finite() {
            return Err(RoiViolation::NonFinite(i));
        }
    }
    // Scale-aware collinearity tolerance.
    let span = quad
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1.0f64, f64::max);
    let eps = 1e-12 * span * span;
    let mut turns = [0.0; 4];
    for i in 0..4 {
        let (a, b, c) = (i, (i + 1) % 4, (i + 2) % 4);
        let t = cross(&quad[a], &quad[b], &quad[c]);
        if t.abs() <= eps {
            return Err(RoiViolation::Degenerate(a, b, c));
        }
        turns[i] = t;
    }
    let positive = turns.iter().filter(|t| **t > 0.0).count();
    match positive {
        4 => Ok(()),
        0 => Err(RoiViolation::WrongOrder),
        _ => {
            let majority_positive = positive >= 2;
            let odd = turns
                .iter()
                .position(|t| (*t > 0.0) != majority_positive)
                .unwrap_or(0);
            Err(RoiViolation::NonConvex((odd + 1) % 4))
        }
    }
}

/// Validates an ROI against frame dimensions `(W, H)`.
///
/// Vertices must satisfy `0 <= x <= W-1` and `0 <= y <= H-1`.
pub fn validate_roi(roi: &Roi, dims: (u32, u32)) -> Result<(), RoiViolation> {
    let (width, height) = dims;
    for (index, p) in roi.src.iter().enumerate() {
        if !p.is_finite() {
            return Err(RoiViolation::NonFinite(index));
        }
        let max_x = f64::from(width) - 1.0;
        let max_y = f64::from(height) - 1.0;
        if p.x < 0.0 || p.y < 0.0 || p.x > max_x || p.y > max_y {
            return Err(RoiViolation::VertexOutOfBounds {
                index,
                point: *p,
                width,
                height,
            });
        }
    }
    check_quad(&roi.src)?;
    if roi.dst_width < 2 || roi.dst_height < 2 {
        return Err(RoiViolation::DestinationTooSmall {
            width: roi.dst_width,
            height: roi.dst_height,
        });
    }
    Ok(())
}
