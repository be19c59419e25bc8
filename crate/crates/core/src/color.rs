//! HSV conversion, per-channel min-max stretch and bound thresholding.
//!
//! All three HSV channels live in `[0, 255]`: hue is scaled from degrees by
//! `255/360`. Every rounding step is half-up and computed in integer
//! arithmetic so outputs are exact and reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, Rgb};
use crate::geometry::Pixel;

/// `round(num / den)` with ties going up, for non-negative operands.
#[inline]
fn div_round_half_up(num: u32, den: u32) -> u32 {
    (2 * num + den) / (2 * den)
}

/// One pixel's `(H, S, V)`, each in `[0, 255]`.
pub fn rgb_to_hsv_pixel([r, g, b]: Rgb) -> [u8; 3] {
    let (r, g, b) = (u32::from(r), u32::from(g), u32::from(b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if max == 0 {
        return [0, 0, 0];
    }
    let s = div_round_half_up(255 * delta, max);
    if delta == 0 {
        return [0, s as u8, max as u8];
    }
    // hue_degrees = 60 * (sector + frac); H = 255 * hue_degrees / 360
    //             = 255 * (sector * delta + num) / (6 * delta)
    let (ri, gi, bi, d) = (r as i64, g as i64, b as i64, delta as i64);
    let sixths = if max == r {
        (gi - bi).rem_euclid(6 * d)
    } else if max == g {
        2 * d + bi - ri
    } else {
        4 * d + ri - gi
    } as u32;
    let h = div_round_half_up(255 * sixths, 6 * delta);
    [h.min(255) as u8, s as u8, max as u8]
}

/// HSV planes of an image region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvRoi {
    width: u32,
    height: u32,
    pub h: Vec<u8>,
    pub s: Vec<u8>,
    pub v: Vec<u8>,
}

impl HsvRoi {
    pub fn from_planes(width: u32, height: u32, h: Vec<u8>, s: Vec<u8>, v: Vec<u8>) -> Self {
        let n = width as usize * height as usize;
        assert!(
            h.len() == n && s.len() == n && v.len() == n,
            "plane lengths must equal width * height"
        );
        Self {
            width,
            height,
            h,
            s,
            v,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = y as usize * self.width as usize + x as usize;
        [self.h[i], self.s[i], self.v[i]]
    }
}

pub fn rgb_to_hsv(roi: &Frame) -> HsvRoi {
    let n = roi.pixels().len();
    let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &px in roi.pixels() {
        let [ph, ps, pv] = rgb_to_hsv_pixel(px);
        h.push(ph);
        s.push(ps);
        v.push(pv);
    }
    HsvRoi::from_planes(roi.width(), roi.height(), h, s, v)
}

/// 8-bit min-max stretch of one plane. A constant plane maps to all zeros.
pub fn normalize_channel(plane: &[u8]) -> Vec<u8> {
    let (Some(&min), Some(&max)) = (plane.iter().min(), plane.iter().max()) else {
        return Vec::new();
    };
    if min == max {
        return vec![0; plane.len()];
    }
    let (min, range) = (u32::from(min), u32::from(max - min));
    plane
        .iter()
        .map(|&x| div_round_half_up(255 * (u32::from(x) - min), range) as u8)
        .collect()
}

/// Stretches H, S and V independently and recombines them.
pub fn normalize_hsv(roi: &HsvRoi) -> HsvRoi {
    HsvRoi::from_planes(
        roi.width,
        roi.height,
        normalize_channel(&roi.h),
        normalize_channel(&roi.s),
        normalize_channel(&roi.v),
    )
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("HSV bounds must satisfy lower <= upper per channel (lower {lower:?}, upper {upper:?})")]
pub struct BoundsError {
    pub lower: [u8; 3],
    pub upper: [u8; 3],
}

/// Inclusive per-channel `(H, S, V)` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BoundsRepr")]
pub struct HsvBounds {
    lower: [u8; 3],
    upper: [u8; 3],
}

impl HsvBounds {
    /// Marking bounds `(0, 70, 170)`..`(255, 255, 255)`.
    pub const MARKING: HsvBounds = HsvBounds {
        lower: [0, 70, 170],
        upper: [255, 255, 255],
    };

    pub fn new(lower: [u8; 3], upper: [u8; 3]) -> Result<Self, BoundsError> {
        if (0..3).any(|k| lower[k] > upper[k]) {
            return Err(BoundsError { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> [u8; 3] {
        self.lower
    }

    pub fn upper(&self) -> [u8; 3] {
        self.upper
    }

    #[inline]
    pub fn contains(&self, hsv: [u8; 3]) -> bool {
        (0..3).all(|k| self.lower[k] <= hsv[k] && hsv[k] <= self.upper[k])
    }
}

impl Default for HsvBounds {
    fn default() -> Self {
        Self::MARKING
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsRepr {
    #[serde(default = "default_lower")]
    lower: [u8; 3],
    #[serde(default = "default_upper")]
    upper: [u8; 3],
}

fn default_lower() -> [u8; 3] {
    HsvBounds::MARKING.lower
}

fn default_upper() -> [u8; 3] {
    HsvBounds::MARKING.upper
}

impl TryFrom<BoundsRepr> for HsvBounds {
    type Error = BoundsError;
    fn try_from(r: BoundsRepr) -> Result<Self, Self::Error> {
        HsvBounds::new(r.lower, r.upper)
    }
}

/// Two-level mask; stored values are only 0 and 255.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("white", &self.count_white())
            .finish()
    }
}

impl BinaryMask {
    pub const WHITE: u8 = 255;

    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut m = Self::new(width, height);
        for (x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn is_white(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] == Self::WHITE
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, white: bool) {
        self.data[y as usize * self.width as usize + x as usize] = if white { Self::WHITE } else { 0 };
    }

    pub fn count_white(&self) -> usize {
        self.data.iter().filter(|&&v| v == Self::WHITE).count()
    }

    /// White pixels in row-major order.
    pub fn white_pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == Self::WHITE)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

/// 255 where every channel lies within the inclusive bounds, else 0.
pub fn threshold_hsv(roi: &HsvRoi, bounds: &HsvBounds) -> BinaryMask {
    let data = (0..roi.h.len())
        .map(|i| {
            if bounds.contains([roi.h[i], roi.s[i], roi.v[i]]) {
                BinaryMask::WHITE
            } else {
                0
            }
        })
        .collect();
    BinaryMask {
        width: roi.width,
        height: roi.height,
        data,
    }
}
