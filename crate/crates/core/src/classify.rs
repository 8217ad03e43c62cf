//! Rule cascade labelling each component as text or graphics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::Features;

/// Pixel count of a 1024x768 frame, the resolution the size defaults are given at.
pub const REFERENCE_PIXELS: f64 = 786_432.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub r_min: f64,
    pub r_max: f64,
    /// Ink percentage bounds, exclusive.
    pub ra_min: f64,
    pub ra_max: f64,
    /// Smallest text dimension at the reference resolution, pixels.
    pub min_dim: f64,
    /// Largest single-character height at the reference resolution, pixels.
    pub max_char_height: f64,
    /// Long-to-short side ratio above which a single-run component counts as a line.
    pub slant_elongation: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            r_min: 1.2,
            r_max: 32.0,
            ra_min: 5.0,
            ra_max: 90.0,
            min_dim: 6.0,
            max_char_height: 96.0,
            slant_elongation: 4.0,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min < self.r_max) || self.r_min <= 0.0 {
            return Err(Error::Config(format!(
                "need 0 < r_min < r_max, got {} / {}",
                self.r_min, self.r_max
            )));
        }
        if !(self.ra_min < self.ra_max) {
            return Err(Error::Config(format!(
                "need ra_min < ra_max, got {} / {}",
                self.ra_min, self.ra_max
            )));
        }
        if !(self.min_dim >= 1.0) {
            return Err(Error::Config(format!("min_dim must be >= 1, got {}", self.min_dim)));
        }
        if !(self.max_char_height > 0.0) || !(self.slant_elongation >= 1.0) {
            return Err(Error::Config(
                "max_char_height must be > 0 and slant_elongation >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Resolves size thresholds for an image of the given size.
    ///
    /// Size thresholds scale with the square root of the pixel-count ratio to
    /// the reference frame; line thickness is two blocks.
    pub fn rules_for(&self, width: u32, height: u32, block_size: u32) -> ClassifyRules {
        let scale = (width as f64 * height as f64 / REFERENCE_PIXELS).sqrt();
        ClassifyRules {
            r_min: self.r_min,
            r_max: self.r_max,
            ra_min: self.ra_min,
            ra_max: self.ra_max,
            min_dim: (self.min_dim * scale).max(1.0),
            max_char_height: self.max_char_height * scale,
            line_thickness: 2 * block_size,
            slant_elongation: self.slant_elongation,
        }
    }
}

/// Thresholds resolved for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyRules {
    pub r_min: f64,
    pub r_max: f64,
    pub ra_min: f64,
    pub ra_max: f64,
    pub min_dim: f64,
    pub max_char_height: f64,
    pub line_thickness: u32,
    pub slant_elongation: f64,
}

impl Default for ClassifyRules {
    fn default() -> Self {
        ClassifyConfig::default().rules_for(1024, 768, 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Text,
    Graphics,
}

impl Class {
    pub fn flipped(self) -> Class {
        match self {
            Class::Text => Class::Graphics,
            Class::Graphics => Class::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    TooSmall,
    LineShape,
    AspectOutOfRange,
    DensityOutOfRange,
    LogoLike,
    PassedAllRules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub class: Class,
    pub reason: Reason,
}

impl Label {
    fn graphics(reason: Reason) -> Self {
        Self {
            class: Class::Graphics,
            reason,
        }
    }

    pub fn text() -> Self {
        Self {
            class: Class::Text,
            reason: Reason::PassedAllRules,
        }
    }
}

/// Applies the rules in order; the first one that fires decides.
pub fn classify_component(f: &Features, rules: &ClassifyRules) -> Label {
    let (w, h) = (f.width as f64, f.height as f64);
    if w < rules.min_dim && h < rules.min_dim {
        return Label::graphics(Reason::TooSmall);
    }

    let thin = rules.line_thickness;
    let axis_line = (f.height <= thin && f.r_wh > rules.r_max)
        || (f.width <= thin && 1.0 / f.r_wh > rules.r_max);
    // a tilted rule crosses both middle sections once and stays elongated
    let single_run = f.h_segments <= 1 && f.v_segments <= 1;
    let elongation = w.max(h) / w.min(h);
    if axis_line || (single_run && elongation > rules.slant_elongation) {
        return Label::graphics(Reason::LineShape);
    }

    if f.r_wh <= rules.r_min || f.r_wh >= rules.r_max {
        return Label::graphics(Reason::AspectOutOfRange);
    }
    if f.ra_cc <= rules.ra_min || f.ra_cc >= rules.ra_max {
        return Label::graphics(Reason::DensityOutOfRange);
    }
    if h > rules.max_char_height && single_run {
        return Label::graphics(Reason::LogoLike);
    }
    Label::text()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn features(width: u32, height: u32, ra_cc: f64, h_segments: u32, v_segments: u32) -> Features {
        Features {
            width,
            height,
            r_wh: width as f64 / height as f64,
            gray_density: 1.0,
            black_density: ra_cc / 100.0,
            ra_cc,
            v_segments,
            h_segments,
            middle_row_cuts: 2 * h_segments,
        }
    }

    #[test]
    fn resolves_defaults_at_reference_size() {
        let r = ClassifyRules::default();
        assert_eq!(r.min_dim, 6.0);
        assert_eq!(r.max_char_height, 96.0);
        assert_eq!(r.line_thickness, 16);
        let big = ClassifyConfig::default().rules_for(2048, 1536, 8);
        assert!((big.max_char_height - 192.0).abs() < 1e-9);
    }

    #[test]
    fn rule_line_is_graphics() {
        let l = classify_component(&features(320, 8, 37.5, 1, 1), &ClassifyRules::default());
        assert_eq!(l.class, Class::Graphics);
        assert!(matches!(l.reason, Reason::LineShape | Reason::AspectOutOfRange));
    }

    #[test]
    fn vertical_rule_is_line_shape() {
        let l = classify_component(&features(8, 400, 40.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l.reason, Reason::LineShape);
    }

    #[test]
    fn tilted_rule_is_line_shape() {
        // slanted rule: wide bbox, low but in-range coverage, one run each way
        let l = classify_component(&features(560, 32, 9.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l.reason, Reason::LineShape);
    }

    #[test]
    fn solid_box_is_density_out_of_range() {
        let l = classify_component(&features(120, 40, 96.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l, Label::graphics(Reason::DensityOutOfRange));
    }

    #[test]
    fn word_blob_is_text() {
        let l = classify_component(&features(80, 20, 30.0, 9, 2), &ClassifyRules::default());
        assert_eq!(l, Label::text());
    }

    #[test]
    fn tiny_blob_is_too_small() {
        let l = classify_component(&features(3, 3, 50.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l, Label::graphics(Reason::TooSmall));
    }

    #[test]
    fn square_logo_fails_aspect() {
        let l = classify_component(&features(120, 112, 70.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l.reason, Reason::AspectOutOfRange);
    }

    #[test]
    fn tall_solid_shape_is_logo_like() {
        let l = classify_component(&features(240, 120, 70.0, 1, 1), &ClassifyRules::default());
        assert_eq!(l, Label::graphics(Reason::LogoLike));
        // same shape with a light line through the middle row stays text
        let l = classify_component(&features(240, 120, 70.0, 2, 1), &ClassifyRules::default());
        assert_eq!(l, Label::text());
    }

    #[test]
    fn aspect_bounds_are_open() {
        let r = ClassifyRules::default();
        // 12 / 10 == r_min exactly
        assert_eq!(
            classify_component(&features(12, 10, 30.0, 3, 2), &r).reason,
            Reason::AspectOutOfRange
        );
        let mut f = features(320, 20, 30.0, 9, 2);
        f.r_wh = 32.0;
        assert_eq!(classify_component(&f, &r).reason, Reason::AspectOutOfRange);
    }

    #[test]
    fn density_bounds_are_open() {
        let r = ClassifyRules::default();
        for ra in [5.0, 90.0] {
            assert_eq!(
                classify_component(&features(80, 20, ra, 9, 2), &r).reason,
                Reason::DensityOutOfRange
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(ClassifyConfig::default().validate().is_ok());
        let bad = ClassifyConfig {
            r_min: 40.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ClassifyConfig {
            min_dim: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn label_serialises_lowercase() {
        let json = serde_json::to_string(&Label::graphics(Reason::LogoLike)).unwrap();
        assert_eq!(json, r#"{"class":"graphics","reason":"logo_like"}"#);
    }

    proptest! {
        #[test]
        fn text_iff_passed_all_rules(
            w in 1u32..800, h in 1u32..300, ra in 0.0f64..100.0,
            hs in 0u32..20, vs in 0u32..10,
        ) {
            let f = features(w, h, ra, hs, vs);
            let l = classify_component(&f, &ClassifyRules::default());
            prop_assert_eq!(l.class == Class::Text, l.reason == Reason::PassedAllRules);
            prop_assert_eq!(l, classify_component(&f, &ClassifyRules::default()));
        }

        #[test]
        fn in_range_density_never_decides(ra1 in 5.01f64..89.99, ra2 in 5.01f64..89.99) {
            let r = ClassifyRules::default();
            let a = classify_component(&features(100, 20, ra1, 8, 2), &r);
            let b = classify_component(&features(100, 20, ra2, 8, 2), &r);
            prop_assert_eq!(a, Label::text());
            prop_assert_eq!(b, Label::text());
        }
    }
}
