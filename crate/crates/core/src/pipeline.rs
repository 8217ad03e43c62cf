//! End-to-end separation with per-stage timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::background::{eliminate_background, BackgroundConfig, BlockGrid};
use crate::binarize::{binarize_region, BinaryRegion};
use crate::classify::{classify_component, Class, ClassifyConfig, Label};
use crate::image::GrayImage;
use crate::regions::{compute_features, grow_regions, Component, Features};
use crate::skew::{component_profile, estimate_skew, rotate_component, SkewConfig, SkewEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub background: BackgroundConfig,
    pub classify: ClassifyConfig,
    pub skew: SkewConfig,
    pub iou_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            background: BackgroundConfig::default(),
            classify: ClassifyConfig::default(),
            skew: SkewConfig::default(),
            iou_threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    /// The tuned defaults.
    pub fn reference() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.background.validate()?;
        self.classify.validate()?;
        self.skew.validate()?;
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(crate::Error::Config(format!(
                "iou threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Background,
    Regions,
    Classify,
    Skew,
    Binarize,
}

#[derive(Debug, Error)]
#[error("{stage:?} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: crate::Error,
}

fn at(stage: Stage) -> impl FnOnce(crate::Error) -> PipelineError {
    move |source| PipelineError { stage, source }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub background_ms: f64,
    pub regions_ms: f64,
    pub classify_ms: f64,
    pub skew_ms: f64,
    pub binarize_ms: f64,
    pub total_ms: f64,
    /// Estimated peak bytes held by pipeline buffers, when known.
    pub peak_bytes: Option<u64>,
}

impl StageTimings {
    pub fn stage_sum_ms(&self) -> f64 {
        self.background_ms + self.regions_ms + self.classify_ms + self.skew_ms + self.binarize_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewOutcome {
    /// Angle used for deskewing; 0 when estimation failed.
    pub theta: f64,
    /// Set when the estimate could not be computed.
    pub flagged: bool,
    pub estimate: Option<SkewEstimate>,
}

#[derive(Debug, Clone)]
pub struct LabeledComponent {
    pub component: Component,
    pub features: Features,
    pub label: Label,
    pub skew: Option<SkewOutcome>,
}

/// Deskewed and binarized output for one text component.
#[derive(Debug, Clone)]
pub struct TextRegion {
    pub component_id: u32,
    pub deskewed: GrayImage,
    pub binary: BinaryRegion,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub width: u32,
    pub height: u32,
    pub grid: BlockGrid,
    pub components: Vec<LabeledComponent>,
    pub regions: Vec<TextRegion>,
    pub timings: StageTimings,
}

impl PipelineOutput {
    pub fn text_components(&self) -> impl Iterator<Item = &LabeledComponent> {
        self.components.iter().filter(|c| c.label.class == Class::Text)
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs background elimination, region growing, classification, then deskews
/// and binarizes every text component. Graphics components keep their labels
/// but are not deskewed.
pub fn run_pipeline(image: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let start = Instant::now();

    let t = Instant::now();
    cfg.background.validate().map_err(at(Stage::Background))?;
    let grid = eliminate_background(image, &cfg.background);
    let background_ms = ms(t);

    let t = Instant::now();
    let comps = grow_regions(&grid);
    let features = comps
        .iter()
        .map(|c| compute_features(c, image))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(at(Stage::Regions))?;
    let regions_ms = ms(t);

    let t = Instant::now();
    cfg.classify.validate().map_err(at(Stage::Classify))?;
    let rules = cfg
        .classify
        .rules_for(image.width(), image.height(), grid.block_size());
    let mut components: Vec<LabeledComponent> = comps
        .into_iter()
        .zip(features)
        .map(|(component, features)| LabeledComponent {
            label: classify_component(&features, &rules),
            component,
            features,
            skew: None,
        })
        .collect();
    let classify_ms = ms(t);

    let t = Instant::now();
    cfg.skew.validate().map_err(at(Stage::Skew))?;
    let mut deskewed = Vec::new();
    for lc in components.iter_mut().filter(|c| c.label.class == Class::Text) {
        let profile = component_profile(&lc.component, image, &cfg.skew).map_err(at(Stage::Skew))?;
        let outcome = match estimate_skew(&profile, &cfg.skew) {
            Ok(est) if est.theta.abs() <= 45.0 => SkewOutcome {
                theta: est.theta,
                flagged: false,
                estimate: Some(est),
            },
            Ok(est) => SkewOutcome {
                theta: 0.0,
                flagged: true,
                estimate: Some(est),
            },
            Err(_) => SkewOutcome {
                theta: 0.0,
                flagged: true,
                estimate: None,
            },
        };
        let crop = rotate_component(image, &lc.component, outcome.theta).map_err(at(Stage::Skew))?;
        lc.skew = Some(outcome);
        deskewed.push((lc.component.id, crop));
    }
    let skew_ms = ms(t);

    let t = Instant::now();
    let regions: Vec<TextRegion> = deskewed
        .into_iter()
        .map(|(component_id, crop)| TextRegion {
            component_id,
            binary: binarize_region(&crop),
            deskewed: crop,
        })
        .collect();
    let binarize_ms = ms(t);

    let peak_bytes = estimate_peak_bytes(image, &grid, &components, &regions);
    Ok(PipelineOutput {
        width: image.width(),
        height: image.height(),
        grid,
        components,
        regions,
        timings: StageTimings {
            background_ms,
            regions_ms,
            classify_ms,
            skew_ms,
            binarize_ms,
            total_ms: ms(start),
            peak_bytes: Some(peak_bytes),
        },
    })
}

/// Input raster, block labels, component block lists, the largest per-component
/// mask, and every retained crop with its binary raster.
fn estimate_peak_bytes(
    image: &GrayImage,
    grid: &BlockGrid,
    components: &[LabeledComponent],
    regions: &[TextRegion],
) -> u64 {
    let input = image.pixel_count() as u64;
    let labels = std::mem::size_of_val(grid.labels()) as u64;
    let blocks: u64 = components
        .iter()
        .map(|c| (c.component.blocks.len() * std::mem::size_of::<(u32, u32)>()) as u64)
        .sum();
    let largest_mask = components
        .iter()
        .map(|c| 2 * c.component.bbox.area())
        .max()
        .unwrap_or(0);
    let outputs: u64 = regions
        .iter()
        .map(|r| r.deskewed.pixel_count() as u64 + r.binary.bits.len() as u64)
        .sum();
    input + labels + blocks + largest_mask + outputs
}
