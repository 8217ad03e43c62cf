//! Coarse background elimination over fixed-size blocks.
//!
//! A block is background when its intensity range (max - min) stays below an
//! adaptive threshold that grows with the block's minimum intensity, and its
//! minimum is brighter than `t_min`. Everything else is foreground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundConfig {
    /// Fixed part of the range threshold, intensity units.
    pub t_fixed: i32,
    /// Blocks whose minimum is at or below this are always foreground.
    pub t_min: i32,
    /// Block edge length in pixels.
    pub block_size: u32,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            t_fixed: 20,
            t_min: 100,
            block_size: 8,
        }
    }
}

impl BackgroundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_fixed < 0 {
            return Err(Error::Config(format!("t_fixed must be >= 0, got {}", self.t_fixed)));
        }
        if !(0..=255).contains(&self.t_min) {
            return Err(Error::Config(format!("t_min must be in [0, 255], got {}", self.t_min)));
        }
        if self.block_size < 2 {
            return Err(Error::Config(format!(
                "block_size must be >= 2, got {}",
                self.block_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockLabel {
    Background,
    Foreground,
}

/// Range threshold T0 for a block whose minimum is `g_min`.
///
/// Requires `g_min > t_min`. Evaluates `t_fixed + 2 * max(0, (g_min - t_min) - t_fixed)`.
pub fn compute_block_threshold(g_min: u8, cfg: &BackgroundConfig) -> Result<i32> {
    let excess = g_min as i32 - cfg.t_min;
    if excess <= 0 {
        return Err(Error::contract(format!(
            "block threshold needs g_min > t_min, got g_min={g_min} t_min={}",
            cfg.t_min
        )));
    }
    Ok(cfg.t_fixed + 2 * (excess - cfg.t_fixed).max(0))
}

pub fn classify_block(g_min: u8, g_max: u8, cfg: &BackgroundConfig) -> BlockLabel {
    debug_assert!(g_min <= g_max, "g_min {g_min} above g_max {g_max}");
    if g_min as i32 <= cfg.t_min {
        return BlockLabel::Foreground;
    }
    // g_min > t_min here, so the threshold is defined
    let t0 = cfg.t_fixed + 2 * ((g_min as i32 - cfg.t_min) - cfg.t_fixed).max(0);
    if ((g_max - g_min) as i32) < t0 {
        BlockLabel::Background
    } else {
        BlockLabel::Foreground
    }
}

/// Per-block labels for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGrid {
    cols: u32,
    rows: u32,
    block_size: u32,
    width: u32,
    height: u32,
    labels: Vec<BlockLabel>,
}

impl BlockGrid {
    /// Builds a grid from explicit labels for an image of `width` x `height` pixels.
    pub fn from_labels(
        width: u32,
        height: u32,
        block_size: u32,
        labels: Vec<BlockLabel>,
    ) -> Result<Self> {
        if block_size < 2 || width == 0 || height == 0 {
            return Err(Error::contract("grid needs block_size >= 2 and a non-empty image"));
        }
        let cols = width.div_ceil(block_size);
        let rows = height.div_ceil(block_size);
        if labels.len() != cols as usize * rows as usize {
            return Err(Error::contract(format!(
                "{} labels for a {cols}x{rows} grid",
                labels.len()
            )));
        }
        Ok(Self {
            cols,
            rows,
            block_size,
            width,
            height,
            labels,
        })
    }

    /// Grid of `cols` x `rows` whole blocks, foreground where `fg(col, row)`.
    pub fn from_fn(
        cols: u32,
        rows: u32,
        block_size: u32,
        mut fg: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self> {
        let mut labels = Vec::with_capacity(cols as usize * rows as usize);
        for r in 0..rows {
            for c in 0..cols {
                labels.push(if fg(c, r) {
                    BlockLabel::Foreground
                } else {
                    BlockLabel::Background
                });
            }
        }
        Self::from_labels(cols * block_size, rows * block_size, block_size, labels)
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[BlockLabel] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, col: u32, row: u32) -> BlockLabel {
        self.labels[row as usize * self.cols as usize + col as usize]
    }

    #[inline]
    pub fn is_foreground(&self, col: u32, row: u32) -> bool {
        self.label(col, row) == BlockLabel::Foreground
    }

    pub fn foreground_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l == BlockLabel::Foreground)
            .count()
    }

    /// Pixel rectangle covered by a block, clipped to the image.
    pub fn block_rect(&self, col: u32, row: u32) -> Rect {
        let x = col * self.block_size;
        let y = row * self.block_size;
        Rect::new(
            x,
            y,
            self.block_size.min(self.width - x),
            self.block_size.min(self.height - y),
        )
    }

    /// Full-resolution debug raster: background 255, foreground 128.
    pub fn to_debug_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.is_foreground(x / self.block_size, y / self.block_size) {
                128
            } else {
                255
            }
        })
    }
}

/// Labels every block of `image` from its true in-image minimum and maximum.
pub fn eliminate_background(image: &GrayImage, cfg: &BackgroundConfig) -> BlockGrid {
    let bs = cfg.block_size.max(2);
    let cols = image.width().div_ceil(bs) as usize;
    let rows = image.height().div_ceil(bs) as usize;
    let mut mins = vec![u8::MAX; cols * rows];
    let mut maxs = vec![u8::MIN; cols * rows];
    for y in 0..image.height() {
        let base = (y / bs) as usize * cols;
        for (chunk_idx, chunk) in image.row(y).chunks(bs as usize).enumerate() {
            let i = base + chunk_idx;
            let (lo, hi) = chunk
                .iter()
                .fold((mins[i], maxs[i]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            mins[i] = lo;
            maxs[i] = hi;
        }
    }
    let labels = mins
        .iter()
        .zip(&maxs)
        .map(|(&lo, &hi)| classify_block(lo, hi, cfg))
        .collect();
    BlockGrid {
        cols: cols as u32,
        rows: rows as u32,
        block_size: bs,
        width: image.width(),
        height: image.height(),
        labels,
    }
}
