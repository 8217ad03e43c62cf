//! Grayscale raster and pixel rectangles shared by every stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit grayscale raster stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::contract(format!(
                "pixel buffer holds {} values, {width}x{height} needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image. Panics on a zero dimension.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel. Panics on a zero dimension.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        let start = y as usize * w;
        &self.pixels[start..start + w]
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Minimum and maximum intensity over the whole image.
    pub fn min_max(&self) -> (u8, u8) {
        self.pixels
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn crop(&self, rect: &Rect) -> Result<GrayImage> {
        if rect.w == 0 || rect.h == 0 || !self.bounds().contains(rect) {
            return Err(Error::contract(format!(
                "crop {rect:?} does not lie inside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(rect.area() as usize);
        for y in rect.y..rect.bottom() {
            let row = self.row(y);
            pixels.extend_from_slice(&row[rect.x as usize..rect.right() as usize]);
        }
        GrayImage::new(rect.w, rect.h, pixels)
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<GrayImage> {
        if width == 0 || height == 0 {
            return Err(Error::contract("resize target must be non-empty"));
        }
        let src_w = self.width as u64;
        let src_h = self.height as u64;
        let xs: Vec<u32> = (0..width as u64)
            .map(|x| ((2 * x + 1) * src_w / (2 * width as u64)).min(src_w - 1) as u32)
            .collect();
        Ok(GrayImage::from_fn(width, height, |x, y| {
            let sy = ((2 * y as u64 + 1) * src_h / (2 * height as u64)).min(src_h - 1) as u32;
            self.get(xs[x as usize], sy)
        }))
    }
}

/// Axis-aligned pixel rectangle; `x`, `y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection_area(&self, other: &Rect) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) as u64 * (y1 - y0) as u64
        }
    }

    /// Intersection over union; 0 when both rectangles are empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_buffer() {
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn crop_copies_rows() {
        let img = GrayImage::from_fn(4, 3, |x, y| (y * 4 + x) as u8);
        let c = img.crop(&Rect::new(1, 1, 2, 2)).unwrap();
        assert_eq!(c.pixels(), &[5, 6, 9, 10]);
        assert!(img.crop(&Rect::new(3, 0, 2, 1)).is_err());
    }

    #[test]
    fn iou_of_half_overlap() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&Rect::new(20, 20, 1, 1)), 0.0);
    }

    #[test]
    fn resize_identity_and_doubling() {
        let img = GrayImage::from_fn(3, 2, |x, y| (x + 10 * y) as u8);
        assert_eq!(img.resize_nearest(3, 2).unwrap(), img);
        let big = img.resize_nearest(6, 4).unwrap();
        assert_eq!(big.get(5, 3), img.get(2, 1));
        assert_eq!(big.get(0, 0), img.get(0, 0));
    }
}
