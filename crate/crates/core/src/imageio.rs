//! Raster file formats: binary PGM (canonical), PNG input, and colour PPM overlays.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::classify::Class;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Rect};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Outline colour for text components in overlays.
pub const TEXT_COLOR: [u8; 3] = [0, 200, 0];
/// Outline colour for graphics components in overlays.
pub const GRAPHICS_COLOR: [u8; 3] = [220, 0, 0];

/// Reads a binary PGM (P5, maxval 255) or an 8-bit grayscale/RGB PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pgm(bytes)
    } else {
        let token: String = bytes
            .iter()
            .take(8)
            .map(|&b| if b.is_ascii_graphic() { b as char } else { '?' })
            .collect();
        Err(Error::Format(format!("unrecognised signature {token:?}")))
    }
}

/// BT.709 luma with half-up rounding, in exact integer arithmetic.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((2126 * r as u32 + 7152 * g as u32 + 722 * b as u32 + 5000) / 10000) as u8
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("non-ASCII PGM header token".into()))
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        tok.parse::<u32>()
            .map_err(|_| Error::Format(format!("bad PGM {what} token {tok:?}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let magic = rd.token()?;
    if magic != "P5" {
        return Err(Error::Format(format!(
            "unsupported PNM variant {magic:?} (only binary P5 is read)"
        )));
    }
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval_tok = rd.token()?;
    if maxval_tok != "255" {
        return Err(Error::Format(format!(
            "unsupported PGM maxval {maxval_tok:?} (only 255 is read)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(rd.pos) {
        Some(b) if b.is_ascii_whitespace() => rd.pos += 1,
        _ => return Err(Error::Format("missing raster separator after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("degenerate PGM size {width}x{height}")));
    }
    let len = width as usize * height as usize;
    let data = &bytes[rd.pos..];
    if data.len() < len {
        return Err(Error::Format(format!(
            "truncated PGM raster: {} of {len} bytes",
            data.len()
        )));
    }
    GrayImage::new(width, height, data[..len].to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "unsupported PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width, info.height);
    let mut pixels = Vec::with_capacity(w as usize * h as usize);
    for row in buf.chunks(info.line_size).take(h as usize) {
        match info.color_type {
            png::ColorType::Grayscale => pixels.extend_from_slice(&row[..w as usize]),
            png::ColorType::Rgb => pixels.extend(
                row[..3 * w as usize]
                    .chunks_exact(3)
                    .map(|p| luma(p[0], p[1], p[2])),
            ),
            other => {
                return Err(Error::Format(format!("unsupported PNG colour type {other:?}")))
            }
        }
    }
    GrayImage::new(w, h, pixels)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Packed 8-bit RGB raster used for debug overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn from_gray(image: &GrayImage) -> Self {
        let data = image.pixels().iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: image.width(),
            height: image.height(),
            data,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&color);
    }

    fn outline(&mut self, r: &Rect, color: [u8; 3]) {
        for x in r.x..r.right() {
            self.put(x, r.y, color);
            self.put(x, r.bottom() - 1, color);
        }
        for y in r.y..r.bottom() {
            self.put(r.x, y, color);
            self.put(r.right() - 1, y, color);
        }
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Colourises `image` and outlines each labelled box with its class colour.
pub fn render_overlay(image: &GrayImage, boxes: &[(Rect, Class)]) -> Result<RgbImage> {
    let bounds = image.bounds();
    let mut rgb = RgbImage::from_gray(image);
    for (rect, class) in boxes {
        if rect.w == 0 || rect.h == 0 || !bounds.contains(rect) {
            return Err(Error::contract(format!(
                "overlay box {rect:?} exceeds {}x{} image",
                image.width(),
                image.height()
            )));
        }
        let color = match class {
            Class::Text => TEXT_COLOR,
            Class::Graphics => GRAPHICS_COLOR,
        };
        rgb.outline(rect, color);
    }
    Ok(rgb)
}

pub fn save_overlay(image: &GrayImage, boxes: &[(Rect, Class)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let rgb = render_overlay(image, boxes)?;
    fs::write(path, rgb.encode_ppm()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode_png(w: u32, h: u32, color: png::ColorType, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, w, h);
            enc.set_color(color);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().unwrap();
            writer.write_image_data(data).unwrap();
        }
        out
    }

    #[test]
    fn reads_minimal_p5() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 128, 64]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n# another\n1 1 255\n".to_vec();
        bytes.push(9);
        assert_eq!(decode_image(&bytes).unwrap().pixels(), &[9]);
    }

    #[test]
    fn ascii_pgm_is_rejected_with_token() {
        let err = decode_image(b"P2\n1 1\n255\n7\n").unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("P2")), "{err}");
    }

    #[test]
    fn sixteen_bit_maxval_is_rejected() {
        let err = decode_image(b"P5\n1 1\n65535\n\0\0").unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("65535")), "{err}");
    }

    #[test]
    fn truncated_raster_is_rejected() {
        assert!(matches!(
            decode_image(b"P5\n2 2\n255\n\x01\x02"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn writes_minimal_p5() {
        let img = GrayImage::new(1, 1, vec![7]).unwrap();
        assert_eq!(encode_pgm(&img), b"P5\n1 1\n255\n\x07");
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let img = GrayImage::filled(1, 1, 0);
        let err = save_pgm(&img, "/nonexistent-dir/for/sure/x.pgm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_image("/nonexistent-dir/x.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn png_red_pixel_maps_to_luma_54() {
        let bytes = encode_png(1, 1, png::ColorType::Rgb, &[255, 0, 0]);
        assert_eq!(decode_image(&bytes).unwrap().pixels(), &[54]);
    }

    #[test]
    fn png_gray_passthrough() {
        let bytes = encode_png(3, 1, png::ColorType::Grayscale, &[1, 2, 250]);
        assert_eq!(decode_image(&bytes).unwrap().pixels(), &[1, 2, 250]);
    }

    #[test]
    fn png_rgba_is_rejected() {
        let bytes = encode_png(1, 1, png::ColorType::Rgba, &[1, 2, 3, 4]);
        assert!(matches!(decode_image(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn luma_extremes() {
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 255, 0), 182);
        assert_eq!(luma(0, 0, 255), 18);
    }

    #[test]
    fn empty_overlay_is_colourised_copy() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y) as u8);
        let rgb = render_overlay(&img, &[]).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                let v = img.get(x, y);
                assert_eq!(rgb.get(x, y), [v, v, v]);
            }
        }
    }

    #[test]
    fn overlay_recolours_only_the_border() {
        let img = GrayImage::filled(8, 8, 100);
        let r = Rect::new(2, 1, 4, 5);
        let rgb = render_overlay(&img, &[(r, Class::Text)]).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let inside = x >= r.x && x < r.right() && y >= r.y && y < r.bottom();
                let border = inside
                    && (x == r.x || x == r.right() - 1 || y == r.y || y == r.bottom() - 1);
                let want = if border { TEXT_COLOR } else { [100; 3] };
                assert_eq!(rgb.get(x, y), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn overlay_box_out_of_bounds_is_error() {
        let img = GrayImage::filled(4, 4, 0);
        let r = Rect::new(2, 2, 3, 1);
        assert!(matches!(
            render_overlay(&img, &[(r, Class::Graphics)]),
            Err(Error::Contract(_))
        ));
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_bit_exact(w in 1u32..24, h in 1u32..24, seed in any::<u64>()) {
            let mut s = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            });
            let back = decode_image(&encode_pgm(&img)).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn luma_is_monotone_per_channel(r in 0u8..255, g in any::<u8>(), b in any::<u8>()) {
            prop_assert!(luma(r, g, b) <= luma(r + 1, g, b));
            prop_assert!(luma(g, r, b) <= luma(g, r + 1, b));
            prop_assert!(luma(g, b, r) <= luma(g, b, r + 1));
        }
    }
}
