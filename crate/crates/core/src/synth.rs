//! Seeded synthetic scenes with known marking pixels.
//!
//! Markings are drawn in bird's-eye space and projected into the frame
//! through the ROI homography, so they narrow toward the horizon the way a
//! painted line does. Backgrounds are achromatic (R = G = B) with smooth
//! low-frequency texture and a little per-pixel noise; only markings and
//! deliberate distractors carry saturation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::BinaryMask;
use crate::eval::ContourOutline;
use crate::frame::{Frame, Rgb};
use crate::geometry::{roi_homography, Homography, Pixel};
use crate::roi::{Point, Roi};
use crate::traversal::BenchCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkingShape {
    Straight,
    Curved,
    Junction,
}

impl MarkingShape {
    pub const ALL: [MarkingShape; 3] = [MarkingShape::Straight, MarkingShape::Curved, MarkingShape::Junction];
}

/// What a noise frame contains besides background.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Clean,
    /// A few small bright blobs.
    Speckle,
    /// One short bright streak, shorter than the presence threshold.
    Streak,
}

#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub frame: Frame,
    /// Marking pixels inside the ROI, sorted by `(y, x)`.
    pub truth: Vec<Pixel>,
    pub outline: ContourOutline,
    pub shape: Option<MarkingShape>,
}

impl SynthFrame {
    pub fn has_marking(&self) -> bool {
        self.shape.is_some()
    }
}

/// Centerline segment `x = f(y)` in bird's-eye coordinates, valid for
/// `y` in `[y_min, y_max]`.
#[derive(Debug, Clone, Copy)]
struct Stroke {
    x0: f64,
    y0: f64,
    slope: f64,
    curvature: f64,
    y_min: f64,
    y_max: f64,
    half_width: f64,
}

impl Stroke {
    fn contains(&self, p: Point) -> bool {
        if p.y < self.y_min || p.y > self.y_max {
            return false;
        }
        let dy = p.y - self.y0;
        let x = self.x0 + self.slope * dy + self.curvature * dy * dy;
        let dxdy = self.slope + 2.0 * self.curvature * dy;
        (p.x - x).abs() / dxdy.hypot(1.0) <= self.half_width
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub roi: Roi,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            roi: Roi::from_xy([(100.0, 200.0), (540.0, 200.0), (620.0, 470.0), (20.0, 470.0)]),
        }
    }
}

pub struct SynthGenerator {
    rng: ChaCha8Rng,
    spec: SceneSpec,
    to_frame: Homography,
    to_bird: Homography,
}

const FAR: f64 = 1e6;

impl SynthGenerator {
    pub fn new(seed: u64) -> Self {
        Self::with_spec(seed, SceneSpec::default())
    }

    pub fn with_spec(seed: u64, spec: SceneSpec) -> Self {
        let to_frame = roi_homography(&spec.roi).expect("scene ROI is valid");
        let to_bird = to_frame.inverse().expect("invertible");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spec,
            to_frame,
            to_bird,
        }
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// Frame → bird's-eye map used for rendering.
    pub fn bird_map(&self) -> &Homography {
        &self.to_bird
    }

    /// ROI inset toward its centroid so the outline stays clear of the ROI border.
    pub fn outline(&self, frame_index: usize) -> ContourOutline {
        let src = self.spec.roi.src;
        let c = Point::new(
            src.iter().map(|p| p.x).sum::<f64>() / 4.0,
            src.iter().map(|p| p.y).sum::<f64>() / 4.0,
        );
        let scale = 0.96;
        ContourOutline::new(
            frame_index,
            src.iter()
                .map(|p| Point::new((c.x + (p.x - c.x) * scale).round(), (c.y + (p.y - c.y) * scale).round()))
                .collect(),
        )
    }

    fn background(&mut self) -> impl Fn(u32, u32, u64) -> u8 {
        let base = self.rng.gen_range(45.0..70.0);
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let wavelength = self.rng.gen_range(90.0..220.0);
                let angle: f64 = self.rng.gen_range(0.0..std::f64::consts::PI);
                let amp = self.rng.gen_range(3.0..6.0);
                let phase = self.rng.gen_range(0.0..std::f64::consts::TAU);
                (angle.cos() / wavelength, angle.sin() / wavelength, amp, phase)
            })
            .collect();
        move |x, y, noise| {
            let (xf, yf) = (f64::from(x), f64::from(y));
            let tex: f64 = waves
                .iter()
                .map(|&(kx, ky, amp, phase)| amp * (std::f64::consts::TAU * (kx * xf + ky * yf) + phase).sin())
                .sum();
            let jitter = (noise % 5) as f64 - 2.0;
            (base + tex + jitter).round().clamp(0.0, 255.0) as u8
        }
    }

    fn marking_color(&mut self) -> Rgb {
        [
            self.rng.gen_range(215..=240),
            self.rng.gen_range(185..=210),
            self.rng.gen_range(30..=70),
        ]
    }

    fn strokes(&mut self, shape: MarkingShape) -> Vec<Stroke> {
        let (bw, bh) = (f64::from(self.spec.roi.dst_width), f64::from(self.spec.roi.dst_height));
        let half_width = self.rng.gen_range(5.0..6.5);
        let x0 = self.rng.gen_range(0.3 * bw..0.7 * bw);
        let line = |slope: f64, curvature: f64, y0: f64| Stroke {
            x0,
            y0,
            slope,
            curvature,
            y_min: -FAR,
            y_max: FAR,
            half_width,
        };
        match shape {
            MarkingShape::Straight => vec![line(self.rng.gen_range(-0.04..0.04), 0.0, bh / 2.0)],
            MarkingShape::Curved => {
                let yv = self.rng.gen_range(0.4 * bh..0.6 * bh);
                let drift = self.rng.gen_range(15.0..25.0) * if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                vec![line(0.0, drift / (bh / 2.0).powi(2), yv)]
            }
            MarkingShape::Junction => {
                let yj = self.rng.gen_range(0.3 * bh..0.5 * bh);
                let toward_center = if x0 < bw / 2.0 { 1.0 } else { -1.0 };
                let slope = -toward_center * self.rng.gen_range(0.5..0.9);
                vec![
                    line(0.0, 0.0, bh / 2.0),
                    Stroke {
                        x0,
                        y0: yj,
                        slope,
                        curvature: 0.0,
                        y_min: -FAR,
                        y_max: yj,
                        half_width,
                    },
                ]
            }
        }
    }

    fn render(&mut self, index: usize, strokes: &[Stroke], blobs: &[(Point, f64)], shape: Option<MarkingShape>) -> SynthFrame {
        let bg = self.background();
        let color = self.marking_color();
        let (w, h) = (self.spec.width, self.spec.height);
        let (bw, bh) = (f64::from(self.spec.roi.dst_width), f64::from(self.spec.roi.dst_height));
        let noise_seed: u64 = self.rng.gen();
        let mut truth = Vec::new();
        let mut frame = Frame::new(w, h).with_index(index);
        for y in 0..h {
            for x in 0..w {
                let p = Point::new(f64::from(x), f64::from(y));
                let bird = self.to_bird.map_point(p).unwrap_or(Point::new(-FAR, -FAR));
                let on_marking = strokes.iter().any(|s| s.contains(bird));
                let on_blob = blobs.iter().any(|(c, r)| c.distance(&p) <= *r);
                if on_marking || on_blob {
                    frame.put(x, y, color);
                    let in_roi = bird.x >= 0.0 && bird.y >= 0.0 && bird.x <= bw - 1.0 && bird.y <= bh - 1.0;
                    if on_marking && in_roi {
                        truth.push((x, y));
                    }
                } else {
                    let g = bg(x, y, splitmix(noise_seed ^ (u64::from(y) << 32 | u64::from(x))));
                    frame.put(x, y, [g, g, g]);
                }
            }
        }
        SynthFrame {
            frame,
            truth,
            outline: self.outline(index),
            shape,
        }
    }

    pub fn marking_frame(&mut self, index: usize, shape: MarkingShape) -> SynthFrame {
        let strokes = self.strokes(shape);
        self.render(index, &strokes, &[], Some(shape))
    }

    pub fn noise_frame(&mut self, index: usize, kind: NoiseKind) -> SynthFrame {
        let (bw, bh) = (f64::from(self.spec.roi.dst_width), f64::from(self.spec.roi.dst_height));
        match kind {
            NoiseKind::Clean => self.render(index, &[], &[], None),
            NoiseKind::Speckle => {
                let n = self.rng.gen_range(3..=8);
                let blobs: Vec<(Point, f64)> = (0..n)
                    .map(|_| {
                        let b = Point::new(self.rng.gen_range(10.0..bw - 10.0), self.rng.gen_range(10.0..bh - 10.0));
                        let c = self.to_frame.map_point(b).expect("inside ROI");
                        (c, self.rng.gen_range(1.0..2.0))
                    })
                    .collect();
                self.render(index, &[], &blobs, None)
            }
            NoiseKind::Streak => {
                let len = self.rng.gen_range(90.0..125.0);
                let y_min = self.rng.gen_range(5.0..bh - 5.0 - len);
                let stroke = Stroke {
                    x0: self.rng.gen_range(0.2 * bw..0.8 * bw),
                    y0: y_min,
                    slope: 0.0,
                    curvature: 0.0,
                    y_min,
                    y_max: y_min + len,
                    half_width: self.rng.gen_range(2.0..3.5),
                };
                let mut f = self.render(index, &[stroke], &[], None);
                f.truth.clear();
                f
            }
        }
    }

    /// `n` marking frames cycling through straight, curved and junction.
    pub fn marking_sequence(&mut self, n: usize) -> Vec<SynthFrame> {
        (0..n).map(|i| self.marking_frame(i, MarkingShape::ALL[i % 3])).collect()
    }

    /// `markings` marking frames followed by `noise` noise frames cycling
    /// through clean, speckle and streak.
    pub fn labeled_set(&mut self, markings: usize, noise: usize) -> Vec<SynthFrame> {
        let kinds = [NoiseKind::Clean, NoiseKind::Speckle, NoiseKind::Streak];
        let mut out = self.marking_sequence(markings);
        out.extend((0..noise).map(|i| self.noise_frame(markings + i, kinds[i % 3])));
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sparse traversal workload: a 3 px wavy line plus isolated pixels kept
/// farther than `isolation` from it. White share stays under 1 %.
pub fn benchmark_case(seed: u64, width: u32, height: u32, isolation: u32) -> BenchCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = rng.gen_range(0.3 * f64::from(width)..0.7 * f64::from(width));
    let amp = rng.gen_range(0.02..0.08) * f64::from(width);
    let period = rng.gen_range(0.5..1.5) * f64::from(height);
    let center = |y: u32| (cx + amp * (std::f64::consts::TAU * f64::from(y) / period).sin()).round() as i64;
    let mut mask = BinaryMask::new(width, height);
    for y in 0..height {
        let c = center(y);
        for x in c - 1..=c + 1 {
            if (0..i64::from(width)).contains(&x) {
                mask.set(x as u32, y, true);
            }
        }
    }
    let budget = (u64::from(width) * u64::from(height) / 200) as usize;
    let mut placed = 0;
    while placed < budget / 2 {
        let (x, y) = (rng.gen_range(0..width), rng.gen_range(0..height));
        let lo = y.saturating_sub(isolation + 2);
        let hi = (y + isolation + 2).min(height - 1);
        let near = (lo..=hi).any(|yy| (center(yy) - i64::from(x)).unsigned_abs() <= u64::from(isolation) + 2);
        if !near {
            mask.set(x, y, true);
            placed += 1;
        }
    }
    let seed_y = height / 2;
    BenchCase {
        mask,
        seeds: vec![(center(seed_y) as u32, seed_y)],
    }
}
