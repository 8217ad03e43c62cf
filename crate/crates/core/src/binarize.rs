//! Mid-intensity binarization with neighbourhood promotion.

use crate::image::GrayImage;

/// Foreground/background raster; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRegion {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryRegion {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Ink as 0 and background as 255.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self.bits.iter().map(|&b| if b { 0 } else { 255 }).collect();
        GrayImage::new(self.width, self.height, pixels).expect("dimensions carried from a valid crop")
    }
}

/// Minimum number of foreground neighbours (out of 8) that promotes a pixel.
pub const PROMOTE_NEIGHBOURS: u32 = 5;

/// Pixels strictly darker than the crop's mid-intensity, compared exactly.
pub fn threshold_phase(crop: &GrayImage) -> BinaryRegion {
    let (lo, hi) = crop.min_max();
    let sum = lo as u32 + hi as u32;
    BinaryRegion {
        width: crop.width(),
        height: crop.height(),
        bits: crop.pixels().iter().map(|&v| 2 * (v as u32) < sum).collect(),
    }
}

/// One raster-order pass promoting background pixels with at least five
/// foreground neighbours; promotions made earlier in the pass count.
pub fn promote_phase(mut region: BinaryRegion) -> BinaryRegion {
    let (w, h) = (region.width as i64, region.height as i64);
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if region.bits[idx] {
                continue;
            }
            let mut n = 0;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && region.bits[(ny * w + nx) as usize] {
                        n += 1;
                    }
                }
            }
            if n >= PROMOTE_NEIGHBOURS {
                region.bits[idx] = true;
            }
        }
    }
    region
}

pub fn binarize_region(crop: &GrayImage) -> BinaryRegion {
    promote_phase(threshold_phase(crop))
}
