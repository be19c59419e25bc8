//! Column histogram of the bird's-eye mask, the presence decision made on
//! its peak, and seed extraction for traversal.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{BinaryMask, HsvRoi};
use crate::geometry::Pixel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectError {
    #[error("no marking present; seeds can only be extracted from a positive decision")]
    NotPresent,
    #[error("item {index}: HSV region is {hsv:?} but mask is {mask:?}")]
    DimensionMismatch {
        index: usize,
        hsv: (u32, u32),
        mask: (u32, u32),
    },
    #[error("{rois} HSV regions but {masks} masks")]
    CountMismatch { rois: usize, masks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Minimum column count for a marking to be declared present.
    pub threshold: u32,
    /// Peak columns separated by at most this many columns share a seed.
    pub seed_group_gap: u32,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold: 150,
            seed_group_gap: 20,
        }
    }
}

/// White-pixel count per mask column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerticalHistogram {
    pub counts: Vec<u32>,
    pub mask_dims: (u32, u32),
}

impl VerticalHistogram {
    pub fn peak(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

pub fn vertical_histogram(mask: &BinaryMask) -> VerticalHistogram {
    let w = mask.width() as usize;
    let mut counts = vec![0u32; w];
    if w > 0 {
        for row in mask.data().chunks_exact(w) {
            for (c, &v) in counts.iter_mut().zip(row) {
                *c += u32::from(v == BinaryMask::WHITE);
            }
        }
    }
    VerticalHistogram {
        counts,
        mask_dims: mask.dims(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PresenceDecision {
    pub present: bool,
    pub peak_value: u32,
    pub peak_columns: Vec<u32>,
    pub threshold: u32,
}

/// Declares a marking present when the histogram peak reaches `threshold`.
///
/// `threshold == 0` is the no-threshold mode: any white pixel at all counts,
/// so an all-black mask is still absent.
pub fn decide_presence(h: &VerticalHistogram, threshold: u32) -> PresenceDecision {
    let peak_value = h.peak();
    let floor = threshold.max(1);
    let present = peak_value >= floor;
    let peak_columns = h
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= floor)
        .map(|(i, _)| i as u32)
        .collect();
    PresenceDecision {
        present,
        peak_value,
        peak_columns,
        threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SeedSet {
    pub seeds: Vec<Pixel>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Splits sorted columns into runs whose neighbours are at most `gap`
/// empty columns apart.
pub fn group_columns(columns: &[u32], gap: u32) -> Vec<Vec<u32>> {
    let mut groups: Vec<Vec<u32>> = Vec::new();
    for &c in columns {
        match groups.last_mut() {
            Some(g) if c - g.last().copied().unwrap_or(c) <= gap + 1 => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    groups
}

/// One seed per group of peak columns: the white pixel in those columns
/// closest to their white-pixel centroid (ties: smaller `y`, then smaller `x`).
pub fn extract_seeds(
    mask: &BinaryMask,
    decision: &PresenceDecision,
    seed_group_gap: u32,
) -> Result<SeedSet, DetectError> {
    if !decision.present {
        return Err(DetectError::NotPresent);
    }
    let mut seeds = Vec::new();
    for group in group_columns(&decision.peak_columns, seed_group_gap) {
        let white: Vec<Pixel> = group
            .iter()
            .flat_map(|&x| (0..mask.height()).map(move |y| (x, y)))
            .filter(|&(x, y)| mask.is_white(x, y))
            .collect();
        if white.is_empty() {
            continue;
        }
        // Exact comparison: n^2 * dist^2 = (n*x - Σx)^2 + (n*y - Σy)^2.
        let n = white.len() as i128;
        let sx: i128 = white.iter().map(|p| i128::from(p.0)).sum();
        let sy: i128 = white.iter().map(|p| i128::from(p.1)).sum();
        let seed = white
            .iter()
            .min_by_key(|&&(x, y)| {
                let dx = n * i128::from(x) - sx;
                let dy = n * i128::from(y) - sy;
                (dx * dx + dy * dy, y, x)
            })
            .copied()
            .expect("non-empty");
        seeds.push(seed);
    }
    Ok(SeedSet { seeds })
}

/// 256-bin tallies of H, S and V under marking masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvProfile {
    pub h: [u64; 256],
    pub s: [u64; 256],
    pub v: [u64; 256],
}

impl Default for HsvProfile {
    fn default() -> Self {
        Self {
            h: [0; 256],
            s: [0; 256],
            v: [0; 256],
        }
    }
}

impl HsvProfile {
    pub fn samples(&self) -> u64 {
        self.v.iter().sum()
    }

    /// `channel,bin,count` rows for H, then S, then V.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,bin,count\n");
        for (name, table) in [("H", &self.h), ("S", &self.s), ("V", &self.v)] {
            for (bin, count) in table.iter().enumerate() {
                let _ = writeln!(out, "{name},{bin},{count}");
            }
        }
        out
    }
}

pub fn hsv_frequency_profile(
    rois: &[HsvRoi],
    marking_masks: &[BinaryMask],
) -> Result<HsvProfile, DetectError> {
    if rois.len() != marking_masks.len() {
        return Err(DetectError::CountMismatch {
            rois: rois.len(),
            masks: marking_masks.len(),
        });
    }
    let mut profile = HsvProfile::default();
    for (index, (roi, mask)) in rois.iter().zip(marking_masks).enumerate() {
        if roi.dims() != mask.dims() {
            return Err(DetectError::DimensionMismatch {
                index,
                hsv: roi.dims(),
                mask: mask.dims(),
            });
        }
        for (i, &m) in mask.data().iter().enumerate() {
            if m == BinaryMask::WHITE {
                profile.h[roi.h[i] as usize] += 1;
                profile.s[roi.s[i] as usize] += 1;
                profile.v[roi.v[i] as usize] += 1;
            }
        }
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column_mask(w: u32, h: u32, cols: &[u32]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, _| cols.contains(&x))
    }

    /// Brute-force seed oracle: float centroid, exhaustive nearest search.
    fn nearest_white_to_centroid(mask: &BinaryMask, cols: &[u32]) -> Pixel {
        let white: Vec<Pixel> = mask
            .white_pixels()
            .filter(|p| cols.contains(&p.0))
            .collect();
        let n = white.len() as f64;
        let cx = white.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cy = white.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let mut best = white[0];
        let mut best_d = f64::INFINITY;
        for &(x, y) in &white {
            let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d < best_d || (d == best_d && (y, x) < (best.1, best.0)) {
                best = (x, y);
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn histogram_examples() {
        let m = BinaryMask::from_pixels(4, 3, [(1, 0), (1, 2), (3, 1)]);
        assert_eq!(vertical_histogram(&m).counts, vec![0, 2, 0, 1]);
        assert_eq!(vertical_histogram(&BinaryMask::new(4, 3)).counts, vec![0; 4]);
        let white = BinaryMask::from_fn(5, 7, |_, _| true);
        assert_eq!(vertical_histogram(&white).counts, vec![7; 5]);
    }

    #[test]
    fn presence_is_inclusive() {
        let h = |peak| VerticalHistogram {
            counts: vec![3, peak, 7],
            mask_dims: (3, 200),
        };
        assert!(decide_presence(&h(150), 150).present);
        assert!(!decide_presence(&h(149), 150).present);
        assert_eq!(decide_presence(&h(150), 150).peak_columns, vec![1]);
    }

    #[test]
    fn zero_threshold_is_strict() {
        let black = vertical_histogram(&BinaryMask::new(6, 6));
        assert!(!decide_presence(&black, 0).present);
        let one = vertical_histogram(&BinaryMask::from_pixels(6, 6, [(2, 2)]));
        let d = decide_presence(&one, 0);
        assert!(d.present);
        assert_eq!(d.peak_columns, vec![2]);
    }

    #[test]
    fn single_column_seed_breaks_tie_upward() {
        let m = column_mask(20, 200, &[5]);
        let d = decide_presence(&vertical_histogram(&m), 150);
        let seeds = extract_seeds(&m, &d, 20).unwrap();
        assert_eq!(seeds.seeds, vec![nearest_white_to_centroid(&m, &[5])]);
        assert_eq!(seeds.seeds, vec![(5, 99)]);
    }

    #[test]
    fn distant_columns_give_two_seeds() {
        let m = column_mask(320, 200, &[5, 300]);
        let d = decide_presence(&vertical_histogram(&m), 150);
        let seeds = extract_seeds(&m, &d, 20).unwrap();
        assert_eq!(
            seeds.seeds,
            vec![
                nearest_white_to_centroid(&m, &[5]),
                nearest_white_to_centroid(&m, &[300])
            ]
        );
        assert_eq!(group_columns(&d.peak_columns, 20).len(), 2);
    }

    #[test]
    fn adjacent_columns_share_a_seed() {
        let m = column_mask(20, 200, &[5, 6, 7]);
        let d = decide_presence(&vertical_histogram(&m), 150);
        let seeds = extract_seeds(&m, &d, 20).unwrap();
        assert_eq!(seeds.seeds, vec![(6, 99)]);
    }

    #[test]
    fn grouping_gap_boundary() {
        assert_eq!(group_columns(&[0, 21], 20).len(), 1);
        assert_eq!(group_columns(&[0, 22], 20).len(), 2);
        assert!(group_columns(&[], 20).is_empty());
    }

    #[test]
    fn seeds_require_presence() {
        let m = BinaryMask::new(4, 4);
        let d = decide_presence(&vertical_histogram(&m), 150);
        assert_eq!(extract_seeds(&m, &d, 20), Err(DetectError::NotPresent));
    }

    #[test]
    fn profile_examples() {
        let roi = HsvRoi::from_planes(4, 1, vec![1, 2, 3, 4], vec![9, 9, 9, 9], vec![170, 200, 255, 10]);
        let mask = BinaryMask::from_pixels(4, 1, [(0, 0), (1, 0), (2, 0)]);
        let p = hsv_frequency_profile(std::slice::from_ref(&roi), &[mask]).unwrap();
        assert_eq!((p.v[170], p.v[200], p.v[255], p.v[10]), (1, 1, 1, 0));
        assert_eq!(p.s[9], 3);

        let empty = hsv_frequency_profile(std::slice::from_ref(&roi), &[BinaryMask::new(4, 1)]).unwrap();
        assert_eq!(empty, HsvProfile::default());

        assert!(matches!(
            hsv_frequency_profile(&[roi], &[BinaryMask::new(3, 1)]),
            Err(DetectError::DimensionMismatch { .. })
        ));
        let csv = p.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 256);
        assert!(csv.contains("V,200,1\n"));
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            prop::collection::vec(any::<bool>(), (w * h) as usize).prop_map(move |bits| {
                BinaryMask::from_fn(w, h, |x, y| bits[(y * w + x) as usize])
            })
        })
    }

    proptest! {
        #[test]
        fn histogram_conserves_white(mask in arb_mask()) {
            let h = vertical_histogram(&mask);
            let mut scan = 0u64;
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    scan += u64::from(mask.is_white(x, y));
                }
            }
            prop_assert_eq!(h.total(), scan);
            prop_assert!(h.counts.iter().all(|&c| c <= mask.height()));
        }

        #[test]
        fn presence_monotone_and_seeds_white(mask in arb_mask(), t in 0u32..30, lower in 0u32..30) {
            let h = vertical_histogram(&mask);
            let d = decide_presence(&h, t);
            if d.present {
                prop_assert!(decide_presence(&h, t.min(lower)).present);
                let seeds = extract_seeds(&mask, &d, 2).unwrap();
                prop_assert!(!seeds.is_empty());
                for &(x, y) in &seeds.seeds {
                    prop_assert!(mask.is_white(x, y));
                }
            }
        }
    }
}
