//! Connected components over foreground blocks and their shape features.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::background::BlockGrid;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Rect};

/// A 4-connected set of foreground blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: u32,
    pub block_size: u32,
    /// `(col, row)` block coordinates in discovery order.
    pub blocks: Vec<(u32, u32)>,
    /// Tight pixel bounding box of the blocks, clipped to the image.
    pub bbox: Rect,
}

impl Component {
    pub fn width(&self) -> u32 {
        self.bbox.w
    }

    pub fn height(&self) -> u32 {
        self.bbox.h
    }

    /// Pixels of this component's own blocks, in bbox-local coordinates.
    pub fn block_mask(&self) -> PixelMask {
        let mut mask = PixelMask::new(self.bbox.w, self.bbox.h);
        let bs = self.block_size;
        for &(c, r) in &self.blocks {
            let x0 = c * bs - self.bbox.x;
            let y0 = r * bs - self.bbox.y;
            let x1 = (x0 + bs).min(self.bbox.w);
            let y1 = (y0 + bs).min(self.bbox.h);
            for y in y0..y1 {
                for x in x0..x1 {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                mask.set(x, y, f(x, y));
            }
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Grows 4-connected components over the foreground blocks of `grid`.
///
/// Components are numbered from 1 in the raster order of their first block.
pub fn grow_regions(grid: &BlockGrid) -> Vec<Component> {
    let cols = grid.cols();
    let rows = grid.rows();
    let mut seen = vec![false; cols as usize * rows as usize];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            let idx = (r * cols + c) as usize;
            if seen[idx] || !grid.is_foreground(c, r) {
                continue;
            }
            seen[idx] = true;
            queue.push_back((c, r));
            let mut blocks = Vec::new();
            while let Some((bc, br)) = queue.pop_front() {
                blocks.push((bc, br));
                let mut visit = |nc: u32, nr: u32| {
                    let ni = (nr * cols + nc) as usize;
                    if !seen[ni] && grid.is_foreground(nc, nr) {
                        seen[ni] = true;
                        queue.push_back((nc, nr));
                    }
                };
                if bc > 0 {
                    visit(bc - 1, br);
                }
                if bc + 1 < cols {
                    visit(bc + 1, br);
                }
                if br > 0 {
                    visit(bc, br - 1);
                }
                if br + 1 < rows {
                    visit(bc, br + 1);
                }
            }
            let bbox = block_bbox(grid, &blocks);
            out.push(Component {
                id: out.len() as u32 + 1,
                block_size: grid.block_size(),
                blocks,
                bbox,
            });
        }
    }
    out
}

fn block_bbox(grid: &BlockGrid, blocks: &[(u32, u32)]) -> Rect {
    let (mut c0, mut r0, mut c1, mut r1) = (u32::MAX, u32::MAX, 0, 0);
    for &(c, r) in blocks {
        c0 = c0.min(c);
        r0 = r0.min(r);
        c1 = c1.max(c);
        r1 = r1.max(r);
    }
    let tl = grid.block_rect(c0, r0);
    let br = grid.block_rect(c1, r1);
    Rect::new(tl.x, tl.y, br.right() - tl.x, br.bottom() - tl.y)
}

/// Shape and density descriptors of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub width: u32,
    pub height: u32,
    /// Width over height of the bounding box.
    pub r_wh: f64,
    /// Fraction of the bounding box covered by the component's blocks.
    pub gray_density: f64,
    /// Fraction of the bounding box that is dark ink.
    pub black_density: f64,
    /// Dark ink as a percentage of the bounding box area.
    pub ra_cc: f64,
    /// Dark runs along the middle column.
    pub v_segments: u32,
    /// Dark runs along the middle row.
    pub h_segments: u32,
    /// Dark/light transitions along the middle row, borders counting as light.
    pub middle_row_cuts: u32,
}

/// Dark pixels of the component: inside its own blocks and strictly below the
/// component's mid-intensity `(min + max) / 2`, compared exactly.
pub fn ink_mask(c: &Component, image: &GrayImage) -> Result<PixelMask> {
    check_bbox(c, image)?;
    let blocks = c.block_mask();
    Ok(dark_mask(c, image, &blocks))
}

fn check_bbox(c: &Component, image: &GrayImage) -> Result<()> {
    if c.bbox.w == 0 || c.bbox.h == 0 {
        return Err(Error::contract(format!("component {} has a degenerate bbox", c.id)));
    }
    if !image.bounds().contains(&c.bbox) {
        return Err(Error::contract(format!(
            "component {} bbox {:?} exceeds the image",
            c.id, c.bbox
        )));
    }
    Ok(())
}

fn dark_mask(c: &Component, image: &GrayImage, blocks: &PixelMask) -> PixelMask {
    let (ox, oy) = (c.bbox.x, c.bbox.y);
    let (mut lo, mut hi) = (u8::MAX, u8::MIN);
    for y in 0..blocks.height() {
        for x in 0..blocks.width() {
            if blocks.get(x, y) {
                let v = image.get(ox + x, oy + y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let sum = lo as u32 + hi as u32;
    PixelMask::from_fn(blocks.width(), blocks.height(), |x, y| {
        blocks.get(x, y) && 2 * (image.get(ox + x, oy + y) as u32) < sum
    })
}

fn runs(cells: impl Iterator<Item = bool>) -> u32 {
    let mut prev = false;
    let mut n = 0;
    for on in cells {
        if on && !prev {
            n += 1;
        }
        prev = on;
    }
    n
}

pub fn compute_features(c: &Component, image: &GrayImage) -> Result<Features> {
    check_bbox(c, image)?;
    let blocks = c.block_mask();
    let dark = dark_mask(c, image, &blocks);
    let (w, h) = (c.bbox.w, c.bbox.h);
    let area = (w as u64 * h as u64) as f64;
    let dark_count = dark.count() as f64;
    let mid_row = h / 2;
    let mid_col = w / 2;
    let h_segments = runs((0..w).map(|x| dark.get(x, mid_row)));
    let v_segments = runs((0..h).map(|y| dark.get(mid_col, y)));
    Ok(Features {
        width: w,
        height: h,
        r_wh: w as f64 / h as f64,
        gray_density: blocks.count() as f64 / area,
        black_density: dark_count / area,
        ra_cc: 100.0 * dark_count / area,
        v_segments,
        h_segments,
        // every run is entered once and left once against the light exterior
        middle_row_cuts: 2 * h_segments,
    })
}
