//! Skew estimation from a region's bottom profile, and deskew rotation.
//!
//! Angles are in degrees in image coordinates (y grows downward): a positive
//! angle means the baseline descends to the right. Deskewing rotates by the
//! negated estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::regions::{ink_mask, Component, PixelMask};

/// Which pixels count as "gray" when walking up from the bottom edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    /// Dark ink pixels inside the component's blocks.
    Ink,
    /// Every pixel of the component's foreground blocks.
    Blocks,
}

impl std::str::FromStr for ProfileSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ink" => Ok(ProfileSource::Ink),
            "blocks" => Ok(ProfileSource::Blocks),
            other => Err(format!("unknown profile source {other:?} (ink|blocks)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewConfig {
    /// Columns whose bottom run is shorter than this many pixels are invalid.
    pub min_gray_extent: u32,
    /// Columns whose bottom run is shorter than this fraction of the longest
    /// bottom run in the profile are invalid.
    pub min_extent_ratio: f64,
    /// Columns deviating from the mean by more than this many mean deviations are dropped.
    pub deviation_factor: f64,
    pub profile_source: ProfileSource,
}

impl Default for SkewConfig {
    fn default() -> Self {
        Self {
            min_gray_extent: 2,
            min_extent_ratio: 0.8,
            deviation_factor: 2.0,
            profile_source: ProfileSource::Ink,
        }
    }
}

impl SkewConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_gray_extent < 1 {
            return Err(Error::Config("min_gray_extent must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_extent_ratio) {
            return Err(Error::Config(format!(
                "min_extent_ratio must lie in [0, 1], got {}",
                self.min_extent_ratio
            )));
        }
        if !(self.deviation_factor > 0.0) {
            return Err(Error::Config(format!(
                "deviation_factor must be > 0, got {}",
                self.deviation_factor
            )));
        }
        Ok(())
    }
}

/// Per-column heights above the bottom edge of a bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct BottomProfile {
    pub heights: Vec<u32>,
    pub valid: Vec<bool>,
    /// Image column of each entry, strictly increasing.
    pub x_positions: Vec<u32>,
}

impl BottomProfile {
    /// Profile whose every column is valid, at positions 0..n.
    pub fn from_heights(heights: Vec<u32>) -> Self {
        let n = heights.len();
        Self {
            heights,
            valid: vec![true; n],
            x_positions: (0..n as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Same columns with heights and validity reversed left to right.
    pub fn mirrored(&self) -> Self {
        let mut heights = self.heights.clone();
        let mut valid = self.valid.clone();
        heights.reverse();
        valid.reverse();
        Self {
            heights,
            valid,
            x_positions: self.x_positions.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewEstimate {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta: f64,
    pub mu: f64,
    pub tau: f64,
    /// Number of columns that survived the deviation filter.
    pub columns_used: usize,
}

/// Walks each column of `mask` upward from the bottom edge to the first set pixel.
///
/// `x_origin` is the image column of the mask's left edge.
pub fn extract_bottom_profile(mask: &PixelMask, x_origin: u32, cfg: &SkewConfig) -> BottomProfile {
    let (w, h) = (mask.width(), mask.height());
    let mut heights = Vec::with_capacity(w as usize);
    let mut extents = Vec::with_capacity(w as usize);
    for x in 0..w {
        match (0..h).rev().find(|&y| mask.get(x, y)) {
            Some(y) => {
                heights.push(h - 1 - y);
                extents.push((0..=y).rev().take_while(|&yy| mask.get(x, yy)).count() as u32);
            }
            None => {
                heights.push(0);
                extents.push(0);
            }
        }
    }
    let longest = extents.iter().copied().max().unwrap_or(0) as f64;
    let valid = extents
        .iter()
        .map(|&e| e > 0 && e >= cfg.min_gray_extent && e as f64 >= cfg.min_extent_ratio * longest)
        .collect();
    BottomProfile {
        heights,
        valid,
        x_positions: (x_origin..x_origin + w).collect(),
    }
}

/// Bottom profile of a component, taken over the pixel source named in `cfg`.
pub fn component_profile(c: &Component, image: &GrayImage, cfg: &SkewConfig) -> Result<BottomProfile> {
    let mask = match cfg.profile_source {
        ProfileSource::Ink => ink_mask(c, image)?,
        ProfileSource::Blocks => c.block_mask(),
    };
    Ok(extract_bottom_profile(&mask, c.bbox.x, cfg))
}

/// Mean and mean absolute deviation of the valid heights.
pub fn profile_stats(p: &BottomProfile) -> Result<(f64, f64)> {
    let valid = || {
        p.heights
            .iter()
            .zip(&p.valid)
            .filter(|(_, &v)| v)
            .map(|(&h, _)| h as f64)
    };
    let n = p.valid_count();
    if n == 0 {
        return Err(Error::Estimation("profile has no valid columns".into()));
    }
    let mu = valid().sum::<f64>() / n as f64;
    let tau = valid().map(|h| (mu - h).abs()).sum::<f64>() / n as f64;
    Ok((mu, tau))
}

pub fn estimate_skew(p: &BottomProfile, cfg: &SkewConfig) -> Result<SkewEstimate> {
    let (mu, tau) = profile_stats(p)?;
    let band = cfg.deviation_factor * tau + 1e-9 * tau.max(1.0);
    let kept: Vec<(f64, f64)> = (0..p.len())
        .filter(|&i| p.valid[i] && (p.heights[i] as f64 - mu).abs() <= band)
        .map(|i| (p.x_positions[i] as f64, p.heights[i] as f64))
        .collect();
    if kept.len() < 3 {
        return Err(Error::Estimation(format!(
            "{} columns survive filtering, need 3",
            kept.len()
        )));
    }
    let (x1, h1) = kept[0];
    let (x2, h2) = kept[kept.len() - 1];
    // with an even count the middle is the midpoint of the two central columns
    let n = kept.len();
    let (x3, h3) = if n % 2 == 1 {
        kept[n / 2]
    } else {
        let (a, b) = (kept[n / 2 - 1], kept[n / 2]);
        ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
    };
    if x2 <= x1 || x3 <= x1 || x2 <= x3 {
        return Err(Error::Estimation("coincident column positions".into()));
    }
    let theta1 = (h1 - h2).atan2(x2 - x1).to_degrees();
    let theta2 = (h1 - h3).atan2(x3 - x1).to_degrees();
    let theta3 = (h3 - h2).atan2(x2 - x3).to_degrees();
    Ok(SkewEstimate {
        theta1,
        theta2,
        theta3,
        theta: (theta1 + theta2 + theta3) / 3.0,
        mu,
        tau,
        columns_used: n,
    })
}

/// Rotates `image` by `degrees` about its centre with nearest-neighbour sampling.
///
/// The output is sized to the rotated bounding box; uncovered pixels take `fill`.
pub fn rotate_nearest(image: &GrayImage, degrees: f64, fill: u8) -> GrayImage {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let out_w = ((w * cos.abs() + h * sin.abs()) - 1e-9).ceil().max(1.0) as u32;
    let out_h = ((w * sin.abs() + h * cos.abs()) - 1e-9).ceil().max(1.0) as u32;
    let (ocx, ocy) = (out_w as f64 / 2.0, out_h as f64 / 2.0);
    let (icx, icy) = (w / 2.0, h / 2.0);
    GrayImage::from_fn(out_w, out_h, |x, y| {
        let dx = x as f64 + 0.5 - ocx;
        let dy = y as f64 + 0.5 - ocy;
        let sx = (dx * cos + dy * sin + icx).floor();
        let sy = (-dx * sin + dy * cos + icy).floor();
        if sx >= 0.0 && sy >= 0.0 && sx < w && sy < h {
            image.get(sx as u32, sy as u32)
        } else {
            fill
        }
    })
}

/// Crops the component's bbox and rotates it by `-theta` degrees.
pub fn rotate_component(image: &GrayImage, c: &Component, theta: f64) -> Result<GrayImage> {
    if !(theta.abs() <= 45.0) {
        return Err(Error::contract(format!(
            "deskew angle {theta} outside [-45, 45] degrees"
        )));
    }
    let crop = image.crop(&c.bbox)?;
    let (_, fill) = crop.min_max();
    Ok(rotate_nearest(&crop, -theta, fill))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SkewConfig {
        SkewConfig::default()
    }

    #[test]
    fn full_mask_gives_zero_heights() {
        let mask = PixelMask::from_fn(5, 4, |_, _| true);
        let p = extract_bottom_profile(&mask, 10, &cfg());
        assert_eq!(p.heights, vec![0; 5]);
        assert!(p.valid.iter().all(|&v| v));
        assert_eq!(p.x_positions, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn empty_column_is_invalid() {
        let mask = PixelMask::from_fn(3, 4, |x, _| x != 1);
        let p = extract_bottom_profile(&mask, 0, &cfg());
        assert_eq!(p.valid, vec![true, false, true]);
    }

    #[test]
    fn short_gray_run_is_invalid() {
        // column 0 has a lone pixel at the bottom, column 1 a run of 2
        let mask = PixelMask::from_fn(2, 6, |x, y| (x == 0 && y == 5) || (x == 1 && y >= 4));
        let p = extract_bottom_profile(&mask, 0, &cfg());
        assert_eq!(p.heights, vec![0, 0]);
        assert_eq!(p.valid, vec![false, true]);
    }

    #[test]
    fn run_short_relative_to_longest_is_invalid() {
        // a full-height stem next to a column that only clips its upper end
        let mask = PixelMask::from_fn(3, 10, |x, y| x == 0 || (x == 1 && y < 3) || (x == 2 && y >= 2));
        let p = extract_bottom_profile(&mask, 0, &cfg());
        assert_eq!(p.heights, vec![0, 7, 0]);
        assert_eq!(p.valid, vec![true, false, true]);
    }

    #[test]
    fn staircase_rises_left_to_right() {
        // column x filled from the top down to row 9 - x / 2
        let mask = PixelMask::from_fn(12, 10, |x, y| y <= 9 - x / 2);
        let p = extract_bottom_profile(&mask, 0, &cfg());
        let brute: Vec<u32> = (0..12u32).map(|x| x / 2).collect();
        assert_eq!(p.heights, brute);
        assert!(p.heights.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn stats_hand_values() {
        let (mu, tau) = profile_stats(&BottomProfile::from_heights(vec![2, 4, 6])).unwrap();
        assert!((mu - 4.0).abs() < 1e-12 && (tau - 4.0 / 3.0).abs() < 1e-12);
        let (mu, tau) = profile_stats(&BottomProfile::from_heights(vec![5, 5, 5])).unwrap();
        assert_eq!((mu, tau), (5.0, 0.0));
        let (mu, tau) = profile_stats(&BottomProfile::from_heights(vec![0, 10])).unwrap();
        assert_eq!((mu, tau), (5.0, 5.0));
    }

    #[test]
    fn stats_ignore_invalid_columns() {
        let mut p = BottomProfile::from_heights(vec![3, 100, 5]);
        p.valid[1] = false;
        assert_eq!(profile_stats(&p).unwrap(), (4.0, 1.0));
        p.valid = vec![false; 3];
        assert!(matches!(profile_stats(&p), Err(Error::Estimation(_))));
    }

    #[test]
    fn flat_profile_has_zero_angle() {
        let est = estimate_skew(&BottomProfile::from_heights(vec![7; 20]), &cfg()).unwrap();
        assert_eq!((est.theta1, est.theta2, est.theta3, est.theta), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(est.columns_used, 20);
    }

    #[test]
    fn linear_profile_recovers_atan_of_slope() {
        // heights fall by 1 every 10 columns => slope 0.1 with the baseline descending rightward
        let heights: Vec<u32> = (0..201u32).map(|x| 20 - x / 10).collect();
        let mut p = BottomProfile::from_heights(heights);
        // make the surviving span exactly linear: keep only columns on the 10-grid
        for (i, v) in p.valid.iter_mut().enumerate() {
            *v = i % 10 == 0;
        }
        let wide = SkewConfig {
            deviation_factor: 10.0,
            ..cfg()
        };
        let est = estimate_skew(&p, &wide).unwrap();
        let want = 0.1f64.atan().to_degrees();
        assert!((est.theta - want).abs() < 1e-9, "{} vs {want}", est.theta);
        assert!((want - 5.710593).abs() < 1e-6);
    }

    #[test]
    fn theta_is_mean_of_three() {
        let est = SkewEstimate {
            theta1: 4.0,
            theta2: 5.0,
            theta3: 6.0,
            theta: (4.0 + 5.0 + 6.0) / 3.0,
            mu: 0.0,
            tau: 0.0,
            columns_used: 3,
        };
        assert_eq!(est.theta, 5.0);
    }

    #[test]
    fn descender_outliers_are_filtered() {
        let mut heights = vec![10u32; 30];
        heights[3] = 0;
        heights[17] = 0;
        let est = estimate_skew(&BottomProfile::from_heights(heights), &cfg()).unwrap();
        assert_eq!(est.theta, 0.0);
        assert_eq!(est.columns_used, 28);
    }

    #[test]
    fn too_few_columns_is_estimation_error() {
        let p = BottomProfile::from_heights(vec![1, 2]);
        assert!(matches!(estimate_skew(&p, &cfg()), Err(Error::Estimation(_))));
    }

    #[test]
    fn mirrored_profile_negates_angle() {
        let heights: Vec<u32> = (0..40u32).map(|x| (x * 3) / 7 + (x % 5 == 0) as u32 * 4).collect();
        let p = BottomProfile::from_heights(heights);
        let a = estimate_skew(&p, &cfg()).unwrap().theta;
        let b = estimate_skew(&p.mirrored(), &cfg()).unwrap().theta;
        assert!((a + b).abs() < 1e-6, "{a} {b}");
        assert!(a.abs() > 1.0);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = GrayImage::from_fn(13, 7, |x, y| (x * 17 + y * 5) as u8);
        assert_eq!(rotate_nearest(&img, 0.0, 0), img);
        let g = crate::background::BlockGrid::from_fn(2, 1, 8, |_, _| true).unwrap();
        let c = crate::regions::grow_regions(&g).remove(0);
        let big = GrayImage::from_fn(16, 8, |x, y| (x * 9 + y) as u8);
        assert_eq!(rotate_component(&big, &c, 0.0).unwrap(), big);
    }

    #[test]
    fn quarter_turn_maps_corners() {
        let img = GrayImage::from_fn(4, 2, |x, y| (10 * y + x) as u8);
        let r = rotate_nearest(&img, 90.0, 255);
        assert_eq!((r.width(), r.height()), (2, 4));
        // positive angles turn clockwise on screen: top-left lands top-right
        assert_eq!(r.get(1, 0), img.get(0, 0));
        assert_eq!(r.get(0, 3), img.get(3, 1));
    }

    #[test]
    fn steep_deskew_is_contract_error() {
        let g = crate::background::BlockGrid::from_fn(1, 1, 8, |_, _| true).unwrap();
        let c = crate::regions::grow_regions(&g).remove(0);
        let img = GrayImage::filled(8, 8, 0);
        assert!(matches!(rotate_component(&img, &c, 90.0), Err(Error::Contract(_))));
        assert!(rotate_component(&img, &c, f64::NAN).is_err());
    }

    #[test]
    fn rotation_fills_corners_with_crop_max() {
        let g = crate::background::BlockGrid::from_fn(4, 2, 8, |_, _| true).unwrap();
        let c = crate::regions::grow_regions(&g).remove(0);
        let img = GrayImage::from_fn(32, 16, |x, _| if x < 16 { 30 } else { 210 });
        let r = rotate_component(&img, &c, 20.0).unwrap();
        assert!(r.width() > 32 && r.height() > 16);
        assert_eq!(r.get(0, 0), 210);
        assert_eq!(r.get(r.width() - 1, r.height() - 1), 210);
    }
}
