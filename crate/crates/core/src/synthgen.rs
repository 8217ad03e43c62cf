//! Deterministic synthetic business cards with ground-truth boxes.
//!
//! Items (text lines made of glyph blobs, rule lines, solid logos and
//! textured photos) are laid out in an unrotated frame, and the whole
//! composition is then rotated by the card's skew about the card centre.
//! Geometry is specified at 1024x768 and scaled with the square root of the
//! pixel count.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{Class, REFERENCE_PIXELS};
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, TruthRegion};
use crate::image::{GrayImage, Rect};
use crate::imageio::save_pgm;

/// Per-card skew angles used by the reference corpus, degrees.
pub const SKEW_GRID: [f64; 11] = [-10.0, -8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0];

/// Minimum contrast between text ink and the darkest background pixel.
pub const MIN_TEXT_CONTRAST: u8 = 60;

const PLACEMENT_TRIES: u32 = 600;
const MAX_TRUTH_IOU: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Flat(u8),
    Gradient { from: u8, to: u8, axis: Axis },
    Noise { base: u8, amplitude: u8 },
}

impl Background {
    fn darkest(&self) -> Result<u8> {
        match *self {
            Background::Flat(v) => Ok(v),
            Background::Gradient { from, to, .. } => Ok(from.min(to)),
            Background::Noise { base, amplitude } => {
                if base as u16 + amplitude as u16 > 255 || amplitude > base {
                    Err(Error::Config(format!(
                        "noise {base}+-{amplitude} leaves the intensity range"
                    )))
                } else {
                    Ok(base - amplitude)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphicsCounts {
    pub rules: u32,
    pub logos: u32,
    pub photos: u32,
}

impl GraphicsCounts {
    pub fn total(&self) -> u32 {
        self.rules + self.logos + self.photos
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub background: Background,
    pub text_lines: u32,
    pub graphics: GraphicsCounts,
    pub skew_deg: f64,
}

impl SynthSpec {
    /// File stem used for this card's outputs.
    pub fn stem(&self) -> String {
        format!("card{:05}", self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("card dimensions must be positive".into()));
        }
        if !(-10.0..=10.0).contains(&self.skew_deg) {
            return Err(Error::Config(format!(
                "skew {} outside [-10, 10] degrees",
                self.skew_deg
            )));
        }
        let darkest = self.background.darkest()?;
        if darkest < MIN_TEXT_CONTRAST + 15 {
            return Err(Error::Config(format!(
                "background floor {darkest} leaves no room for ink {MIN_TEXT_CONTRAST} levels darker"
            )));
        }
        Ok(())
    }
}

/// The reference corpus recipe for one seed.
///
/// Skew walks [`SKEW_GRID`] by seed; background kind cycles every 11 seeds.
pub fn corpus_spec(seed: u64, width: u32, height: u32) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee_d00d);
    let skew_deg = SKEW_GRID[(seed % SKEW_GRID.len() as u64) as usize];
    let background = match (seed / SKEW_GRID.len() as u64) % 3 {
        0 => Background::Flat(rng.random_range(170..=235)),
        1 => {
            let axis = if rng.random_bool(0.5) { Axis::Horizontal } else { Axis::Vertical };
            Background::Gradient {
                from: rng.random_range(160..=200),
                to: rng.random_range(200..=245),
                axis,
            }
        }
        _ => Background::Noise {
            base: rng.random_range(175..=225),
            amplitude: rng.random_range(3..=10),
        },
    };
    SynthSpec {
        seed,
        width,
        height,
        background,
        text_lines: rng.random_range(3..=6),
        graphics: GraphicsCounts {
            rules: rng.random_range(0..=2),
            logos: rng.random_range(0..=1),
            photos: rng.random_range(0..=1),
        },
        skew_deg,
    }
}

struct Sprite {
    w: u32,
    h: u32,
    mask: Vec<bool>,
    values: Vec<u8>,
    class: Class,
}

impl Sprite {
    fn solid(w: u32, h: u32, value: u8, class: Class, inside: impl Fn(u32, u32) -> bool) -> Self {
        let mut mask = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                mask.push(inside(x, y));
            }
        }
        Sprite {
            w,
            h,
            mask,
            values: vec![value; (w * h) as usize],
            class,
        }
    }

    fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32) {
        for yy in y..(y + h).min(self.h) {
            for xx in x..(x + w).min(self.w) {
                self.mask[(yy * self.w + xx) as usize] = true;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Glyph {
    Bar,
    Box,
    Cup,
    Ell,
    Arch,
    Aitch,
}

const GLYPHS: [(Glyph, u32); 6] = [
    (Glyph::Bar, 2),
    (Glyph::Box, 3),
    (Glyph::Cup, 3),
    (Glyph::Ell, 2),
    (Glyph::Arch, 2),
    (Glyph::Aitch, 1),
];

fn pick_glyph(rng: &mut ChaCha8Rng) -> Glyph {
    let total: u32 = GLYPHS.iter().map(|g| g.1).sum();
    let mut k = rng.random_range(0..total);
    for &(g, weight) in &GLYPHS {
        if k < weight {
            return g;
        }
        k -= weight;
    }
    unreachable!()
}

/// A text line of word blobs, `height` px tall and at most `max_len` px long.
fn text_line(rng: &mut ChaCha8Rng, height: u32, max_len: u32, ink: u8) -> Sprite {
    let stroke = (height as f64 / 7.0).round().max(2.0) as u32;
    let glyph_gap = (height as f64 / 8.0).round().max(2.0) as u32;
    let word_gap = ((0.3 * height as f64).round() as u32).clamp(4, 6);
    let short = (0.68 * height as f64).round() as u32;

    // (x, width, height, glyph)
    let mut glyphs: Vec<(u32, u32, u32, Glyph)> = Vec::new();
    let mut x = 0;
    'words: loop {
        let count = rng.random_range(2..=7);
        for i in 0..count {
            let g = pick_glyph(rng);
            let gw = match g {
                Glyph::Bar => stroke,
                _ => ((height as f64 * rng.random_range(0.45..0.7)).round() as u32).max(3 * stroke),
            };
            let gh = if glyphs.is_empty() || rng.random_bool(0.4) { height } else { short };
            let start = if i == 0 && !glyphs.is_empty() { x + word_gap } else { x };
            if start + gw > max_len && glyphs.len() >= 2 {
                break 'words;
            }
            glyphs.push((start, gw, gh, g));
            x = start + gw + glyph_gap;
        }
        x -= glyph_gap;
    }
    let width = glyphs.iter().map(|g| g.0 + g.1).max().unwrap_or(1);
    let mut s = Sprite::solid(width, height, ink, Class::Text, |_, _| false);
    for (gx, gw, gh, g) in glyphs {
        let top = height - gh;
        let right = gx + gw - stroke;
        match g {
            Glyph::Bar => s.fill_rect(gx, top, gw, gh),
            Glyph::Box => {
                s.fill_rect(gx, top, gw, stroke);
                s.fill_rect(gx, height - stroke, gw, stroke);
                s.fill_rect(gx, top, stroke, gh);
                s.fill_rect(right, top, stroke, gh);
            }
            Glyph::Cup => {
                s.fill_rect(gx, top, stroke, gh);
                s.fill_rect(right, top, stroke, gh);
                s.fill_rect(gx, height - stroke, gw, stroke);
            }
            Glyph::Ell => {
                s.fill_rect(gx, top, stroke, gh);
                s.fill_rect(gx, height - stroke, gw, stroke);
            }
            Glyph::Arch => {
                s.fill_rect(gx, top, stroke, gh);
                s.fill_rect(right, top, stroke, gh);
                s.fill_rect(gx, top, gw, stroke);
            }
            Glyph::Aitch => {
                s.fill_rect(gx, top, stroke, gh);
                s.fill_rect(right, top, stroke, gh);
                s.fill_rect(gx, top + gh / 2 - stroke / 2, gw, stroke);
            }
        }
    }
    s
}

fn logo(rng: &mut ChaCha8Rng, scale: f64) -> Sprite {
    let value = rng.random_range(15..=90);
    match rng.random_range(0..3) {
        0 => {
            let d = (rng.random_range(80.0..150.0) * scale).round().max(4.0) as u32;
            let r = d as f64 / 2.0;
            Sprite::solid(d, d, value, Class::Graphics, |x, y| {
                let (dx, dy) = (x as f64 + 0.5 - r, y as f64 + 0.5 - r);
                dx * dx + dy * dy <= r * r
            })
        }
        1 => {
            let d = (rng.random_range(80.0..150.0) * scale).round().max(4.0) as u32;
            let r = d as f64 / 2.0;
            Sprite::solid(d, d, value, Class::Graphics, |x, y| {
                (x as f64 + 0.5 - r).abs() + (y as f64 + 0.5 - r).abs() <= r
            })
        }
        _ => {
            let h = (rng.random_range(110.0..130.0) * scale).round().max(4.0) as u32;
            let w = (h as f64 * rng.random_range(1.6..2.3)).round() as u32;
            let (a, b) = (w as f64 / 2.0, h as f64 / 2.0);
            Sprite::solid(w, h, value, Class::Graphics, |x, y| {
                let (dx, dy) = ((x as f64 + 0.5 - a) / a, (y as f64 + 0.5 - b) / b);
                dx * dx + dy * dy <= 1.0
            })
        }
    }
}

fn photo(rng: &mut ChaCha8Rng, scale: f64) -> Sprite {
    let w = (rng.random_range(120.0..200.0) * scale).round().max(4.0) as u32;
    let h = ((w as f64 / rng.random_range(0.7..0.95)).round() as u32).min((240.0 * scale) as u32).max(w);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let period = rng.random_range(20.0..80.0) * scale;
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / period;
            (
                rng.random_range(0.5..1.0),
                k * angle.cos(),
                k * angle.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut raw = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = waves
                .iter()
                .map(|&(a, kx, ky, ph)| a * (kx * x as f64 + ky * y as f64 + ph).sin())
                .sum();
            raw.push(v + rng.random_range(-0.3..0.3));
        }
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let values = raw
        .iter()
        .map(|v| (10.0 + 85.0 * (v - lo) / span).round() as u8)
        .collect();
    Sprite {
        w,
        h,
        mask: vec![true; (w * h) as usize],
        values,
        class: Class::Graphics,
    }
}

fn rule(rng: &mut ChaCha8Rng, scale: f64, max_len: f64, ink: u8) -> Sprite {
    let t = (rng.random_range(2.0..4.0) * scale).round().max(2.0) as u32;
    let len = (rng.random_range(300.0..520.0) * scale).min(max_len).round().max(4.0) as u32;
    Sprite::solid(len, t, ink, Class::Graphics, |_, _| true)
}

struct Placed {
    sprite: Sprite,
    x0: f64,
    y0: f64,
    rotated: [f64; 4],
}

struct Frame {
    cx: f64,
    cy: f64,
    sin: f64,
    cos: f64,
    width: f64,
    height: f64,
    margin: f64,
    gap: f64,
}

impl Frame {
    fn rotated_bounds(&self, x0: f64, y0: f64, w: f64, h: f64) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for (px, py) in [(x0, y0), (x0 + w, y0), (x0, y0 + h), (x0 + w, y0 + h)] {
            let (dx, dy) = (px - self.cx, py - self.cy);
            let rx = dx * self.cos - dy * self.sin + self.cx;
            let ry = dx * self.sin + dy * self.cos + self.cy;
            b = [b[0].min(rx), b[1].min(ry), b[2].max(rx), b[3].max(ry)];
        }
        b
    }

    fn fits(&self, b: &[f64; 4]) -> bool {
        b[0] >= self.margin
            && b[1] >= self.margin
            && b[2] <= self.width - self.margin
            && b[3] <= self.height - self.margin
    }
}

fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

fn rect_gap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let dx = (b.0 - (a.0 + a.2)).max(a.0 - (b.0 + b.2)).max(0.0);
    let dy = (b.1 - (a.1 + a.3)).max(a.1 - (b.1 + b.3)).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

fn try_place(rng: &mut ChaCha8Rng, frame: &Frame, placed: &[Placed], sprite: &Sprite, tries: u32) -> Option<(f64, f64, [f64; 4])> {
    let (w, h) = (sprite.w as f64, sprite.h as f64);
    if w >= frame.width || h >= frame.height {
        return None;
    }
    for _ in 0..tries {
        let x0 = rng.random_range(0.0..frame.width - w).round();
        let y0 = rng.random_range(0.0..frame.height - h).round();
        let rb = frame.rotated_bounds(x0, y0, w, h);
        if !frame.fits(&rb) {
            continue;
        }
        let clear = placed.iter().all(|p| {
            rect_gap((x0, y0, w, h), (p.x0, p.y0, p.sprite.w as f64, p.sprite.h as f64)) >= frame.gap
                && box_iou(&rb, &p.rotated) <= MAX_TRUTH_IOU
        });
        if clear {
            return Some((x0, y0, rb));
        }
    }
    None
}

fn background_pixels(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (spec.width, spec.height);
    match spec.background {
        Background::Flat(v) => GrayImage::filled(w, h, v),
        Background::Gradient { from, to, axis } => GrayImage::from_fn(w, h, |x, y| {
            let (pos, span) = match axis {
                Axis::Horizontal => (x, w),
                Axis::Vertical => (y, h),
            };
            let t = if span > 1 { pos as f64 / (span - 1) as f64 } else { 0.0 };
            (from as f64 + (to as f64 - from as f64) * t).round() as u8
        }),
        Background::Noise { base, amplitude } => {
            let a = amplitude as i32;
            GrayImage::from_fn(w, h, |_, _| (base as i32 + rng.random_range(-a..=a)) as u8)
        }
    }
}

/// Renders the card described by `spec` and its ground truth.
///
/// Outputs depend only on `spec`. Fails with a layout error when the items
/// cannot be placed without overlap.
pub fn generate_card(spec: &SynthSpec) -> Result<(GrayImage, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = (spec.width as f64 * spec.height as f64 / REFERENCE_PIXELS).sqrt();
    let (sin, cos) = spec.skew_deg.to_radians().sin_cos();
    let frame = Frame {
        cx: spec.width as f64 / 2.0,
        cy: spec.height as f64 / 2.0,
        sin,
        cos,
        width: spec.width as f64,
        height: spec.height as f64,
        margin: (16.0 * scale).max(8.0),
        gap: (28.0 * scale).max(24.0),
    };
    let darkest = spec.background.darkest()?;
    let ink = rng.random_range(15..=(darkest - MIN_TEXT_CONTRAST).min(70));

    let mut placed: Vec<Placed> = Vec::new();
    let place = |rng: &mut ChaCha8Rng, placed: &mut Vec<Placed>, sprite: Sprite, what: &str| -> Result<()> {
        match try_place(rng, &frame, placed, &sprite, PLACEMENT_TRIES) {
            Some((x0, y0, rotated)) => {
                placed.push(Placed { sprite, x0, y0, rotated });
                Ok(())
            }
            None => Err(Error::Layout(format!("no room for {what} on {}", spec.stem()))),
        }
    };

    for _ in 0..spec.graphics.photos {
        let s = photo(&mut rng, scale);
        place(&mut rng, &mut placed, s, "photo")?;
    }
    for _ in 0..spec.graphics.logos {
        let s = logo(&mut rng, scale);
        place(&mut rng, &mut placed, s, "logo")?;
    }
    for _ in 0..spec.graphics.rules {
        let s = rule(&mut rng, scale, spec.width as f64 - 2.0 * frame.margin - 1.0, ink);
        place(&mut rng, &mut placed, s, "rule")?;
    }
    for _ in 0..spec.text_lines {
        let height = (rng.random_range(16.0..=32.0) * scale).round().max(4.0) as u32;
        let lo = (8.0 * height as f64).max(192.0 * scale);
        let hi = (24.0 * height as f64).min(520.0 * scale).max(lo);
        let mut len = rng.random_range(lo..=hi);
        let min_len = 5.0 * height as f64;
        let mut done = false;
        for _ in 0..4 {
            let s = text_line(&mut rng, height, len as u32, ink);
            if let Some((x0, y0, rotated)) = try_place(&mut rng, &frame, &placed, &s, PLACEMENT_TRIES / 4) {
                placed.push(Placed { sprite: s, x0, y0, rotated });
                done = true;
                break;
            }
            len = (len * 0.8).max(min_len);
        }
        if !done {
            return Err(Error::Layout(format!("no room for text line on {}", spec.stem())));
        }
    }

    let mut image = background_pixels(spec, &mut rng);
    let mut regions = Vec::with_capacity(placed.len());
    for p in &placed {
        if let Some(rect) = render_sprite(&mut image, &frame, p) {
            regions.push(TruthRegion::new(rect, p.sprite.class));
        }
    }
    Ok((
        image,
        GroundTruth {
            image: spec.stem(),
            regions,
        },
    ))
}

/// Draws a placed sprite through the inverse rotation; returns its inked bbox.
fn render_sprite(image: &mut GrayImage, frame: &Frame, p: &Placed) -> Option<Rect> {
    let x_lo = (p.rotated[0].floor() - 1.0).max(0.0) as u32;
    let y_lo = (p.rotated[1].floor() - 1.0).max(0.0) as u32;
    let x_hi = ((p.rotated[2].ceil() + 1.0) as u32).min(image.width());
    let y_hi = ((p.rotated[3].ceil() + 1.0) as u32).min(image.height());
    let (mut bx0, mut by0, mut bx1, mut by1) = (u32::MAX, u32::MAX, 0, 0);
    let s = &p.sprite;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let (dx, dy) = (x as f64 + 0.5 - frame.cx, y as f64 + 0.5 - frame.cy);
            let lx = (dx * frame.cos + dy * frame.sin + frame.cx - p.x0).floor();
            let ly = (-dx * frame.sin + dy * frame.cos + frame.cy - p.y0).floor();
            if lx < 0.0 || ly < 0.0 || lx >= s.w as f64 || ly >= s.h as f64 {
                continue;
            }
            let i = (ly as u32 * s.w + lx as u32) as usize;
            if s.mask[i] {
                image.set(x, y, s.values[i]);
                bx0 = bx0.min(x);
                by0 = by0.min(y);
                bx1 = bx1.max(x);
                by1 = by1.max(y);
            }
        }
    }
    (bx0 <= bx1).then(|| Rect::new(bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1))
}

/// Writes `<stem>.pgm`, `<stem>.truth.json` and `manifest.json` for a corpus.
pub fn write_corpus(dir: impl AsRef<Path>, specs: &[SynthSpec]) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::with_capacity(specs.len());
    for spec in specs {
        let (image, truth) = generate_card(spec)?;
        let stem = spec.stem();
        save_pgm(&image, dir.join(format!("{stem}.pgm")))?;
        truth.save(dir.join(format!("{stem}.truth.json")))?;
        stems.push(stem);
    }
    let manifest = serde_json::json!({ "stems": stems, "specs": specs });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(stems)
}
