//! Projective mapping between the ROI trapezoid and the bird's-eye rectangle.
//!
//! Resampling works by inverse mapping: every bird's-eye pixel `(x, y)` is
//! sent through `M` to a fractional source location in the frame, which is
//! then interpolated. `M` therefore maps destination to source, and
//! unwarping a bird's-eye pixel back into the frame applies the same matrix.

use rayon::prelude::*;
use thiserror::Error;

use crate::color::BinaryMask;
use crate::frame::{Frame, Rgb};
use crate::roi::{Point, Roi, RoiViolation};

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (u32, u32);

const DENOM_EPS: f64 = 1e-12;
const SNAP_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("singular correspondence system: the point sets are degenerate")]
    Singular,
    #[error("point {0} maps to infinity")]
    PointAtInfinity(Point),
    #[error("homography is not invertible (|det| = {0:e})")]
    NotInvertible(f64),
    #[error("homography cannot be normalized to a unit (3,3) entry")]
    Unnormalizable,
    #[error("mask is {found:?} but the ROI destination is {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error(transparent)]
    Roi(#[from] RoiViolation),
}

/// 3×3 projective matrix in normalized form (`m[2][2] == 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes `m` by its (3,3) entry and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < DENOM_EPS {
            return Err(GeometryError::Unnormalizable);
        }
        let mut n = m;
        for row in &mut n {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        n[2][2] = 1.0;
        let h = Homography { m: n };
        let det = h.det();
        if !det.is_finite() || det.abs() <= DENOM_EPS {
            return Err(GeometryError::NotInvertible(det));
        }
        Ok(h)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    /// Solves for the matrix sending `from[k]` to `to[k]` for all four pairs.
    ///
    /// Both point sets are first shifted to their centroid and scaled to a
    /// mean distance of √2, the 8×8 system is solved by Gaussian elimination
    /// with partial pivoting, and the result is denormalized.
    pub fn from_correspondences(from: &[Point; 4], to: &[Point; 4]) -> Result<Self, GeometryError> {
        let (nf, tf) = normalize(from).ok_or(GeometryError::Singular)?;
        let (nt, tt) = normalize(to).ok_or(GeometryError::Singular)?;

        let mut a = [[0.0f64; 9]; 8];
        for k in 0..4 {
            let (x, y) = (nf[k].x, nf[k].y);
            let (u, v) = (nt[k].x, nt[k].y);
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve8(a).ok_or(GeometryError::Singular)?;
        let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];
        let tt_inv = invert3(&tt).ok_or(GeometryError::Singular)?;
        let m = mul3(&tt_inv, &mul3(&hn, &tf));
        Homography::from_matrix(m).map_err(|e| match e {
            GeometryError::Unnormalizable | GeometryError::NotInvertible(_) => {
                GeometryError::Singular
            }
            other => other,
        })
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    /// Applies the projective map, dividing by the third homogeneous coordinate.
    pub fn map_point(&self, p: Point) -> Result<Point, GeometryError> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !w.is_finite() || w.abs() <= DENOM_EPS {
            return Err(GeometryError::PointAtInfinity(p));
        }
        Ok(Point {
            x: (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            y: (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        })
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = invert3(&self.m).ok_or(GeometryError::NotInvertible(self.det()))?;
        Homography::from_matrix(inv)
    }

    /// Matrix that applies `self` first and then `next`.
    pub fn then(&self, next: &Homography) -> Result<Self, GeometryError> {
        Homography::from_matrix(mul3(&next.m, &self.m))
    }

    /// Row-major entries, nine numbers.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }
}

/// Solves for `M` such that `M(dst[k]) = src[k]`: the sampling map from the
/// bird's-eye rectangle back into the frame.
pub fn compute_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography, GeometryError> {
    Homography::from_correspondences(dst, src)
}

/// Sampling homography for an ROI (bird's-eye → frame).
pub fn roi_homography(roi: &Roi) -> Result<Homography, GeometryError> {
    compute_homography(&roi.src, &roi.dst_corners())
}

pub fn map_point(h: &Homography, p: Point) -> Result<Point, GeometryError> {
    h.map_point(p)
}

fn normalize(pts: &[Point; 4]) -> Option<([Point; 4], [[f64; 3]; 3])> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = pts
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / 4.0;
    if !(mean.is_finite() && mean > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    let t = [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]];
    let out = pts.map(|p| Point::new(s * (p.x - cx), s * (p.y - cy)));
    Some((out, t))
}

/// Gaussian elimination with partial pivoting on an 8×8 augmented system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    const N: usize = 8;
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=N {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = a[row][N];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = det3(m);
    if !det.is_finite() || det.abs() <= DENOM_EPS {
        return None;
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Some(adj.map(|row| row.map(|v| v / det)))
}

/// Resampling filter for [`warp_roi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    #[default]
    Bilinear,
    Nearest,
}

/// Bird's-eye rendering of the ROI.
#[derive(Debug, Clone)]
pub struct WarpedRoi {
    pub frame: Frame,
    /// Bird's-eye → frame map used to sample.
    pub homography: Homography,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

#[inline]
fn round_channel(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Samples `frame` at a fractional location; black outside the frame.
pub fn sample(frame: &Frame, p: Point, filter: Filter) -> Rgb {
    let (x, y) = (snap(p.x), snap(p.y));
    let max_x = f64::from(frame.width() - 1);
    let max_y = f64::from(frame.height() - 1);
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return [0, 0, 0];
    }
    match filter {
        Filter::Nearest => {
            let nx = ((x + 0.5).floor() as u32).min(frame.width() - 1);
            let ny = ((y + 0.5).floor() as u32).min(frame.height() - 1);
            frame.at(nx, ny)
        }
        Filter::Bilinear => {
            let x0 = x.floor() as u32;
            let y0 = y.floor() as u32;
            let fx = x - f64::from(x0);
            let fy = y - f64::from(y0);
            let x1 = (x0 + 1).min(frame.width() - 1);
            let y1 = (y0 + 1).min(frame.height() - 1);
            let (p00, p10, p01, p11) = (
                frame.at(x0, y0),
                frame.at(x1, y0),
                frame.at(x0, y1),
                frame.at(x1, y1),
            );
            let mut out = [0u8; 3];
            for k in 0..3 {
                let top = f64::from(p00[k]) * (1.0 - fx) + f64::from(p10[k]) * fx;
                let bottom = f64::from(p01[k]) * (1.0 - fx) + f64::from(p11[k]) * fx;
                out[k] = round_channel(top * (1.0 - fy) + bottom * fy);
            }
            out
        }
    }
}

/// Resamples `frame` through `h` into a `width × height` raster.
pub fn warp_with(frame: &Frame, h: &Homography, width: u32, height: u32, filter: Filter) -> Frame {
    let rows: Vec<Vec<Rgb>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| match h.map_point(Point::new(f64::from(x), f64::from(y))) {
                    Ok(p) => sample(frame, p, filter),
                    Err(_) => [0, 0, 0],
                })
                .collect()
        })
        .collect();
    let mut out = Frame::new(width, height).with_index(frame.index());
    for (y, row) in rows.into_iter().enumerate() {
        for (x, px) in row.into_iter().enumerate() {
            out.put(x as u32, y as u32, px);
        }
    }
    out
}

/// Produces the bird's-eye view of the ROI.
pub fn warp_roi(frame: &Frame, roi: &Roi, filter: Filter) -> Result<WarpedRoi, GeometryError> {
    roi.validate(frame.dims())?;
    let homography = roi_homography(roi)?;
    let warped = warp_with(frame, &homography, roi.dst_width, roi.dst_height, filter);
    Ok(WarpedRoi {
        frame: warped,
        homography,
    })
}

/// Maps bird's-eye pixels into the frame: round half-up, drop anything
/// outside `frame_dims`, deduplicate, and sort by `(y, x)`.
pub fn unwarp_pixels(
    pixels: impl IntoIterator<Item = Pixel>,
    h: &Homography,
    frame_dims: (u32, u32),
) -> Vec<Pixel> {
    let (w, hgt) = frame_dims;
    let mut out: Vec<Pixel> = pixels
        .into_iter()
        .filter_map(|(x, y)| h.map_point(Point::new(f64::from(x), f64::from(y))).ok())
        .filter_map(|p| {
            let x = (p.x + 0.5).floor();
            let y = (p.y + 0.5).floor();
            (x >= 0.0 && y >= 0.0 && x < f64::from(w) && y < f64::from(hgt))
                .then_some((x as u32, y as u32))
        })
        .collect();
    out.sort_unstable_by_key(|&(x, y)| (y, x));
    out.dedup();
    out
}

/// Every white mask pixel, mapped back into frame coordinates.
pub fn unwarp_mask(
    mask: &BinaryMask,
    roi: &Roi,
    frame_dims: (u32, u32),
) -> Result<Vec<Pixel>, GeometryError> {
    if mask.dims() != roi.dst_dims() {
        return Err(GeometryError::DimensionMismatch {
            expected: roi.dst_dims(),
            found: mask.dims(),
        });
    }
    let h = roi_homography(roi)?;
    Ok(unwarp_pixels(mask.white_pixels(), &h, frame_dims))
}
