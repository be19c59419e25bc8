//! Canny edge detection and edge-map construction from outlines.
//!
//! Steps: rounded luma, 5×5 Gaussian (σ = 1.4) rounded back to 8 bits,
//! 3×3 Sobel gradients with L2 magnitude, four-sector non-maximum
//! suppression, and 8-connected hysteresis. Borders reflect without
//! repeating the edge pixel.

use std::path::Path;

use thiserror::Error;

use super::polygon::{ContourOutline, OutlineError};
use crate::color::BinaryMask;
use crate::frame::{Frame, SequenceError};

pub const BLUR_SIGMA: f64 = 1.4;
const BLUR_RADIUS: i64 = 2;

#[derive(Debug, Error)]
pub enum CbemError {
    #[error("outline for frame {frame}: {source}")]
    Outline {
        frame: usize,
        #[source]
        source: OutlineError,
    },
    #[error("outline has no pixel centers strictly inside it")]
    EmptyInterior,
}

/// Binary edge map restricted to an outline interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Cbem {
    pub frame_index: usize,
    pub edges: BinaryMask,
    pub thresholds: (u32, u32),
    pub median_gray: f64,
}

impl Cbem {
    pub fn from_mask(frame_index: usize, edges: BinaryMask) -> Self {
        Self {
            frame_index,
            edges,
            thresholds: (0, 0),
            median_gray: 0.0,
        }
    }

    pub fn width(&self) -> u32 {
        self.edges.width()
    }

    pub fn height(&self) -> u32 {
        self.edges.height()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.count_white()
    }

    pub fn save(&self, path: &Path) -> Result<(), image::ImageError> {
        crate::io::write_mask_png(&self.edges, path)
    }

    pub fn load(path: &Path, frame_index: usize) -> Result<Self, SequenceError> {
        crate::io::read_mask_png(path).map(|m| Self::from_mask(frame_index, m))
    }
}

/// `(max(0, ⌊(1−σ)v⌋), min(255, ⌊(1+σ)v⌋))`, truncating toward zero.
pub fn auto_canny_thresholds(v: f64, sigma: f64) -> (u32, u32) {
    let lower = ((1.0 - sigma) * v).max(0.0).trunc();
    let upper = ((1.0 + sigma) * v).trunc().clamp(0.0, 255.0);
    (lower as u32, upper as u32)
}

/// Median with the two-middle average for even counts.
pub fn median_u8(values: &mut [u8]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        f64::from(values[n / 2])
    } else {
        (f64::from(values[n / 2 - 1]) + f64::from(values[n / 2])) / 2.0
    })
}

/// 8-bit plane with reflect-101 border access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn from_frame(frame: &Frame) -> Self {
        let data = frame
            .pixels()
            .iter()
            .map(|&[r, g, b]| {
                let y = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
                ((y + 500) / 1000) as u8
            })
            .collect();
        Self {
            width: frame.width(),
            height: frame.height(),
            data,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    fn reflected(&self, x: i64, y: i64) -> u8 {
        let rx = reflect101(x, i64::from(self.width));
        let ry = reflect101(y, i64::from(self.height));
        self.data[(ry * i64::from(self.width) + rx) as usize]
    }
}

fn reflect101(mut i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i;
        }
    }
}

fn gaussian_kernel() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - BLUR_RADIUS as f64;
        *v = (-d * d / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Separable 5×5 Gaussian, rounded half-up to 8 bits.
pub fn gaussian_blur(img: &GrayImage) -> GrayImage {
    let k = gaussian_kernel();
    let (w, h) = (i64::from(img.width), i64::from(img.height));
    let mut tmp = vec![0.0f64; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[(y * w + x) as usize] = (-BLUR_RADIUS..=BLUR_RADIUS)
                .map(|d| k[(d + BLUR_RADIUS) as usize] * f64::from(img.reflected(x + d, y)))
                .sum();
        }
    }
    let mut data = vec![0u8; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = (-BLUR_RADIUS..=BLUR_RADIUS)
                .map(|d| {
                    let ry = reflect101(y + d, h);
                    k[(d + BLUR_RADIUS) as usize] * tmp[(ry * w + x) as usize]
                })
                .sum();
            data[(y * w + x) as usize] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Sobel gradients `(gx, gy)` per pixel; `gy` grows downward.
pub fn sobel(img: &GrayImage) -> Vec<(i32, i32)> {
    let (w, h) = (i64::from(img.width), i64::from(img.height));
    let mut out = Vec::with_capacity(img.data.len());
    for y in 0..h {
        for x in 0..w {
            let p = |dx: i64, dy: i64| i32::from(img.reflected(x + dx, y + dy));
            let gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
            out.push((gx, gy));
        }
    }
    out
}

/// Neighbour offsets along the gradient for the sector containing `(gx, gy)`.
pub fn gradient_sector(gx: i32, gy: i32) -> [(i64, i64); 2] {
    let mut deg = f64::from(gy).atan2(f64::from(gx)).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        [(-1, 0), (1, 0)]
    } else if deg < 67.5 {
        [(-1, -1), (1, 1)]
    } else if deg < 112.5 {
        [(0, -1), (0, 1)]
    } else {
        [(1, -1), (-1, 1)]
    }
}

/// Thinned magnitude: a pixel survives when it beats the neighbour behind it
/// and at least ties the one ahead, so plateaus of two keep one pixel.
pub fn non_max_suppression(width: u32, height: u32, grad: &[(i32, i32)]) -> Vec<f64> {
    let (w, h) = (i64::from(width), i64::from(height));
    let mag: Vec<f64> = grad
        .iter()
        .map(|&(gx, gy)| f64::from(gx).hypot(f64::from(gy)))
        .collect();
    let at = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            mag[(y * w + x) as usize]
        }
    };
    let mut out = vec![0.0; mag.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let [(px, py), (nx, ny)] = gradient_sector(grad[i].0, grad[i].1);
            if m > at(x + px, y + py) && m >= at(x + nx, y + ny) {
                out[i] = m;
            }
        }
    }
    out
}

/// Keeps pixels above `upper` and every pixel above `lower` 8-connected to one.
pub fn hysteresis(width: u32, height: u32, mag: &[f64], lower: f64, upper: f64) -> BinaryMask {
    let (w, h) = (i64::from(width), i64::from(height));
    let mut out = BinaryMask::new(width, height);
    let mut stack: Vec<(i64, i64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mag[(y * w + x) as usize] > upper && !out.is_white(x as u32, y as u32) {
                out.set(x as u32, y as u32, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny) = (cx + dx, cy + dy);
                            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                                continue;
                            }
                            let (ux, uy) = (nx as u32, ny as u32);
                            if !out.is_white(ux, uy) && mag[(ny * w + nx) as usize] > lower {
                                out.set(ux, uy, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn canny(img: &GrayImage, lower: u32, upper: u32) -> BinaryMask {
    let blurred = gaussian_blur(img);
    let grad = sobel(&blurred);
    let thin = non_max_suppression(img.width, img.height, &grad);
    hysteresis(img.width, img.height, &thin, f64::from(lower), f64::from(upper))
}

/// Edge map of the outlined region of `frame`.
///
/// Thresholds come from the median gray value strictly inside the outline.
/// Edges are detected on the whole frame and then cut to the interior, so
/// the outline itself never shows up as an edge.
pub fn build_cbem(frame: &Frame, outline: &ContourOutline, sigma: f64) -> Result<Cbem, CbemError> {
    outline.validate(frame.dims()).map_err(|source| CbemError::Outline {
        frame: outline.frame_index,
        source,
    })?;
    let interior = outline.interior_mask(frame.dims());
    let gray = GrayImage::from_frame(frame);
    let mut inside: Vec<u8> = interior
        .data()
        .iter()
        .zip(&gray.data)
        .filter(|(&m, _)| m == BinaryMask::WHITE)
        .map(|(_, &g)| g)
        .collect();
    let v = median_u8(&mut inside).ok_or(CbemError::EmptyInterior)?;
    let (lower, upper) = auto_canny_thresholds(v, sigma);
    let all = canny(&gray, lower, upper);
    let edges = BinaryMask::from_fn(frame.width(), frame.height(), |x, y| {
        all.is_white(x, y) && interior.is_white(x, y)
    });
    Ok(Cbem {
        frame_index: outline.frame_index,
        edges,
        thresholds: (lower, upper),
        median_gray: v,
    })
}
