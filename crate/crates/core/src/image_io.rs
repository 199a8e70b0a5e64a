//! Raster decoding, grayscale conversion, patch grids and mask overlays.
//!
//! Binary PPM (`P6`, maxval 255) is the canonical format and is decoded
//! bit-exactly. PNG is available through [`png_adapter`] when the `png`
//! feature is enabled.

use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::selector::MaskPlan;

/// 8-bit RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(PgsError::shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    /// Drops the alpha channel of an RGBA buffer (as produced by canvas APIs).
    pub fn from_rgba(width: usize, height: usize, rgba: &[u8]) -> Result<Self> {
        if rgba.len() != width * height * 4 {
            return Err(PgsError::shape(format!(
                "{width}x{height} RGBA image needs {} bytes, got {}",
                width * height * 4,
                rgba.len()
            )));
        }
        let data = rgba.chunks_exact(4).flat_map(|px| [px[0], px[1], px[2]]).collect();
        Ok(Self { width, height, data })
    }

    pub fn to_rgba(&self) -> Vec<u8> {
        self.data.chunks_exact(3).flat_map(|px| [px[0], px[1], px[2], 255]).collect()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Single-channel luminance plane with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(PgsError::shape(format!(
                "{width}x{height} gray image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge-replicate addressing for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Placement of a patch grid inside an image of possibly non-divisible size.
///
/// The grid covers the centered `grid_w * patch_size` by `grid_h * patch_size`
/// window; `offset_x`/`offset_y` locate its top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_size: usize,
    pub offset_x: usize,
    pub offset_y: usize,
}

impl GridGeometry {
    pub fn for_dims(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(PgsError::config("patch_size must be positive"));
        }
        if patch_size > width || patch_size > height {
            return Err(PgsError::config(format!("patch_size {patch_size} exceeds image dimensions {width}x{height}")));
        }
        let grid_w = width / patch_size;
        let grid_h = height / patch_size;
        Ok(Self {
            grid_h,
            grid_w,
            patch_size,
            offset_x: (width - grid_w * patch_size) / 2,
            offset_y: (height - grid_h * patch_size) / 2,
        })
    }

    #[inline]
    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Top-left pixel of patch `index` in source-image coordinates.
    #[inline]
    pub fn patch_origin(&self, index: usize) -> (usize, usize) {
        let (row, col) = (index / self.grid_w, index % self.grid_w);
        (self.offset_x + col * self.patch_size, self.offset_y + row * self.patch_size)
    }

    #[inline]
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

/// Row-major grid of flattened RGB patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    geometry: GridGeometry,
    pixels: Vec<u8>,
}

impl PatchGrid {
    #[inline]
    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    #[inline]
    pub fn grid_h(&self) -> usize {
        self.geometry.grid_h
    }

    #[inline]
    pub fn grid_w(&self) -> usize {
        self.geometry.grid_w
    }

    #[inline]
    pub fn patch_size(&self) -> usize {
        self.geometry.patch_size
    }

    #[inline]
    pub fn n_patches(&self) -> usize {
        self.geometry.n_patches()
    }

    /// Flattened pixels of patch `index`: rows of the patch, each row `patch_size` RGB triples.
    #[inline]
    pub fn patch(&self, index: usize) -> &[u8] {
        let len = self.geometry.patch_len();
        &self.pixels[index * len..(index + 1) * len]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u8]> {
        self.pixels.chunks_exact(self.geometry.patch_len())
    }

    /// Inverse of [`patchify`]: rebuilds the cropped image.
    pub fn reassemble(&self) -> Image {
        let g = self.geometry;
        let width = g.grid_w * g.patch_size;
        let height = g.grid_h * g.patch_size;
        let mut data = vec![0u8; width * height * 3];
        let row_bytes = g.patch_size * 3;
        for (index, patch) in self.iter().enumerate() {
            let (px, py) = ((index % g.grid_w) * g.patch_size, (index / g.grid_w) * g.patch_size);
            for (dy, src) in patch.chunks_exact(row_bytes).enumerate() {
                let start = ((py + dy) * width + px) * 3;
                data[start..start + row_bytes].copy_from_slice(src);
            }
        }
        Image { width, height, data }
    }
}

fn decode_err(offset: usize, message: impl Into<String>) -> PgsError {
    PgsError::Decode { offset, message: message.into() }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(decode_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err(start, format!("{what} out of range")))
    }
}

/// Decodes a binary PPM (`P6`) with maxval 255.
pub fn load_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(decode_err(0, "missing P6 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(decode_err(2, "expected whitespace after magic"));
    }
    let width = cur.read_uint("width")?;
    let height = cur.read_uint("height")?;
    let maxval_at = {
        cur.skip_whitespace_and_comments();
        cur.pos
    };
    let maxval = cur.read_uint("maxval")?;
    if maxval != 255 {
        return Err(decode_err(maxval_at, format!("unsupported maxval {maxval} (only 255)")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(decode_err(cur.pos, "expected single whitespace after maxval")),
        None => return Err(decode_err(cur.pos, "header ends before pixel data")),
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| decode_err(cur.pos, "image dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(decode_err(bytes.len(), format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    Ok(Image { width, height, data: payload[..expected].to_vec() })
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Decodes PPM, or PNG when the `png` feature is on, by sniffing the magic bytes.
pub fn load_image(bytes: &[u8]) -> Result<Image> {
    #[cfg(feature = "png")]
    if bytes.starts_with(&png_adapter::SIGNATURE) {
        return png_adapter::decode(bytes);
    }
    load_ppm(bytes)
}

/// BT.601 luma.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
        .collect();
    GrayImage { width: img.width, height: img.height, data }
}

/// Splits `img` into `patch_size` squares, center-cropping any remainder.
pub fn patchify(img: &Image, patch_size: usize) -> Result<PatchGrid> {
    let geometry = GridGeometry::for_dims(img.width, img.height, patch_size)?;
    let row_bytes = patch_size * 3;
    let mut pixels = Vec::with_capacity(geometry.n_patches() * geometry.patch_len());
    for index in 0..geometry.n_patches() {
        let (x0, y0) = geometry.patch_origin(index);
        for y in y0..y0 + patch_size {
            let start = (y * img.width + x0) * 3;
            pixels.extend_from_slice(&img.data[start..start + row_bytes]);
        }
    }
    Ok(PatchGrid { geometry, pixels })
}

/// Darkens every masked patch by `dim`; unmasked pixels are copied unchanged.
pub fn render_mask_overlay(img: &Image, plan: &MaskPlan, dim: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&dim) {
        return Err(PgsError::config(format!("dim must lie in [0, 1], got {dim}")));
    }
    let geometry = GridGeometry::for_dims(img.width, img.height, plan.patch_size)?;
    if geometry.grid_h != plan.grid_h || geometry.grid_w != plan.grid_w {
        return Err(PgsError::shape(format!(
            "plan grid {}x{} does not match image grid {}x{}",
            plan.grid_h, plan.grid_w, geometry.grid_h, geometry.grid_w
        )));
    }
    let mut out = img.clone();
    let p = geometry.patch_size;
    for &index in &plan.masked {
        if index >= geometry.n_patches() {
            return Err(PgsError::shape(format!("masked index {index} outside grid")));
        }
        let (x0, y0) = geometry.patch_origin(index);
        for y in y0..y0 + p {
            let start = (y * img.width + x0) * 3;
            for v in &mut out.data[start..start + p * 3] {
                *v = (f64::from(*v) * dim).round() as u8;
            }
        }
    }
    Ok(out)
}

#[cfg(feature = "png")]
pub mod png_adapter {
    //! PNG in/out behind the same [`Image`] type. 8-bit gray, gray+alpha, RGB
    //! and RGBA inputs are converted to RGB; 16-bit samples are truncated.

    use super::Image;
    use crate::error::{PgsError, Result};

    pub const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

    fn err(e: impl std::fmt::Display) -> PgsError {
        PgsError::Decode { offset: 0, message: format!("png: {e}") }
    }

    pub fn decode(bytes: &[u8]) -> Result<Image> {
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(err)?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| err("image too large"))?];
        let info = reader.next_frame(&mut buf).map_err(err)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let samples = &buf[..info.buffer_size()];
        let data: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => samples.to_vec(),
            png::ColorType::Rgba => samples.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => samples.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => samples.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            png::ColorType::Indexed => return Err(err("indexed color not expanded")),
        };
        Image::new(w, h, data)
    }

    pub fn encode(img: &Image) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(err)?;
            writer.write_image_data(img.data()).map_err(err)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(grid_h: usize, grid_w: usize, patch_size: usize, masked: Vec<usize>) -> MaskPlan {
        MaskPlan::bare(grid_h, grid_w, patch_size, masked)
    }

    /// Second P6 reader, written independently of `load_ppm`: splits the header
    /// on whitespace without comment support.
    fn reference_p6(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
        let mut fields = Vec::new();
        let mut i = 0;
        while fields.len() < 4 {
            while bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let s = i;
            while !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            fields.push(String::from_utf8(bytes[s..i].to_vec()).unwrap());
        }
        assert_eq!(fields[0], "P6");
        let w: usize = fields[1].parse().unwrap();
        let h: usize = fields[2].parse().unwrap();
        (w, h, bytes[i + 1..i + 1 + w * h * 3].to_vec())
    }

    #[test]
    fn single_red_pixel() {
        let img = load_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(img, Image::new(1, 1, vec![255, 0, 0]).unwrap());
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[7; 9]);
        let err = load_ppm(&bytes).unwrap_err();
        match err {
            PgsError::Decode { offset, message } => {
                assert_eq!(offset, bytes.len());
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_name_offsets() {
        assert!(matches!(load_ppm(b"P3\n1 1\n255\n"), Err(PgsError::Decode { offset: 0, .. })));
        assert!(matches!(load_ppm(b"P6\n1 1\n65535\n"), Err(PgsError::Decode { offset: 7, .. })));
        assert!(matches!(load_ppm(b"P6\n1 x\n255\n"), Err(PgsError::Decode { offset: 5, .. })));
        assert!(matches!(load_ppm(b"P6\n1 1\n255"), Err(PgsError::Decode { offset: 10, .. })));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let img = load_ppm(b"P6 # made by hand\n2 # width\n1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn random_4x4_matches_reference_decoder() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let payload: Vec<u8> = (0..48).map(|_| rng.gen()).collect();
        let bytes = encode_ppm(&Image::new(4, 4, payload).unwrap());
        let (w, h, data) = reference_p6(&bytes);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (w, h));
        assert_eq!(img.data(), &data[..]);
    }

    #[test]
    fn grayscale_weights() {
        let img = Image::new(3, 1, vec![0, 0, 0, 255, 255, 255, 100, 150, 200]).unwrap();
        let g = to_grayscale(&img);
        assert_eq!(g.data[0], 0.0);
        assert!((g.data[1] - 255.0).abs() < 1e-12);
        assert!((g.data[2] - 140.75).abs() < 1e-12);
    }

    #[test]
    fn reference_grid_is_14_by_14() {
        let grid = patchify(&Image::filled(224, 224, [1, 2, 3]), 16).unwrap();
        assert_eq!((grid.grid_h(), grid.grid_w(), grid.n_patches()), (14, 14, 196));
        assert_eq!(grid.patch(0).len(), 16 * 16 * 3);
    }

    #[test]
    fn single_patch_is_whole_image() {
        let data: Vec<u8> = (0..16 * 16 * 3).map(|i| (i % 251) as u8).collect();
        let img = Image::new(16, 16, data.clone()).unwrap();
        let grid = patchify(&img, 16).unwrap();
        assert_eq!(grid.n_patches(), 1);
        assert_eq!(grid.patch(0), &data[..]);
    }

    #[test]
    fn quadrant_patches_match_direct_indexing() {
        let colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [9, 9, 9]];
        let mut img = Image::filled(32, 32, [0, 0, 0]);
        for y in 0..32 {
            for x in 0..32 {
                img.set_pixel(x, y, colors[(y / 16) * 2 + x / 16]);
            }
        }
        let grid = patchify(&img, 16).unwrap();
        assert_eq!(grid.n_patches(), 4);
        for (q, patch) in grid.iter().enumerate() {
            for (k, px) in patch.chunks_exact(3).enumerate() {
                let (x, y) = ((q % 2) * 16 + k % 16, (q / 2) * 16 + k / 16);
                assert_eq!(px, img.pixel(x, y));
                assert_eq!(px, colors[q]);
            }
        }
    }

    #[test]
    fn patchify_rejects_bad_sizes() {
        let img = Image::filled(8, 8, [0; 3]);
        assert!(matches!(patchify(&img, 0), Err(PgsError::Config(_))));
        assert!(matches!(patchify(&img, 9), Err(PgsError::Config(_))));
    }

    #[test]
    fn odd_dims_are_center_cropped() {
        let mut img = Image::filled(37, 35, [0; 3]);
        img.set_pixel(2, 1, [200, 100, 50]);
        let grid = patchify(&img, 16).unwrap();
        let g = grid.geometry();
        assert_eq!((g.grid_w, g.grid_h, g.offset_x, g.offset_y), (2, 2, 2, 1));
        assert_eq!(&grid.patch(0)[..3], &[200, 100, 50]);
    }

    #[test]
    fn overlay_empty_mask_is_identity() {
        let img = Image::new(32, 32, (0..32 * 32 * 3).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let out = render_mask_overlay(&img, &plan(2, 2, 16, vec![]), 0.3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn overlay_all_masked_dim_zero_is_black() {
        let img = Image::filled(32, 32, [200, 17, 99]);
        let out = render_mask_overlay(&img, &plan(2, 2, 16, vec![0, 1, 2, 3]), 0.0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn overlay_halves_one_block() {
        let img = Image::new(32, 32, (0..32 * 32 * 3).map(|i| (i * 13 % 256) as u8).collect()).unwrap();
        let out = render_mask_overlay(&img, &plan(2, 2, 16, vec![3]), 0.5).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let src = img.pixel(x, y);
                let expected = if x >= 16 && y >= 16 { src.map(|v| (f64::from(v) * 0.5).round() as u8) } else { src };
                assert_eq!(out.pixel(x, y), expected, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn overlay_rejects_grid_mismatch() {
        let img = Image::filled(32, 32, [0; 3]);
        assert!(matches!(render_mask_overlay(&img, &plan(3, 2, 16, vec![]), 0.5), Err(PgsError::Shape(_))));
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_adapter_round_trips() {
        let img = Image::new(3, 2, (0..18).map(|i| i * 11).collect()).unwrap();
        let bytes = png_adapter::encode(&img).unwrap();
        assert_eq!(load_image(&bytes).unwrap(), img);
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |data| Image::new(w, h, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ppm_round_trip(img in arb_image()) {
            prop_assert_eq!(load_ppm(&encode_ppm(&img)).unwrap(), img);
        }

        #[test]
        fn patchify_reassemble_reproduces_crop(img in arb_image(), p in 1usize..9) {
            prop_assume!(p <= img.width() && p <= img.height());
            let grid = patchify(&img, p).unwrap();
            let g = grid.geometry();
            let back = grid.reassemble();
            for y in 0..back.height() {
                for x in 0..back.width() {
                    prop_assert_eq!(back.pixel(x, y), img.pixel(x + g.offset_x, y + g.offset_y));
                }
            }
        }

        #[test]
        fn grayscale_in_range_and_monotone(r in any::<u8>(), g in any::<u8>(), b in any::<u8>(), ch in 0usize..3) {
            let base = Image::new(1, 1, vec![r, g, b]).unwrap();
            let v = to_grayscale(&base).data[0];
            prop_assert!((0.0..=255.0).contains(&v));
            let mut bumped = [r, g, b];
            bumped[ch] = bumped[ch].saturating_add(1);
            let w = to_grayscale(&Image::new(1, 1, bumped.to_vec()).unwrap()).data[0];
            prop_assert!(w >= v);
        }

        #[test]
        fn overlay_dim_one_is_identity_and_order_free(
            img in arb_image(),
            mut masked in proptest::collection::vec(0usize..4, 0..4),
        ) {
            prop_assume!(img.width() >= 2 && img.height() >= 2);
            let g = GridGeometry::for_dims(img.width(), img.height(), img.width().min(img.height()) / 2).unwrap();
            masked.retain(|&m| m < g.n_patches());
            let a = plan(g.grid_h, g.grid_w, g.patch_size, masked.clone());
            prop_assert_eq!(&render_mask_overlay(&img, &a, 1.0).unwrap(), &img);
            masked.reverse();
            let b = plan(g.grid_h, g.grid_w, g.patch_size, masked);
            prop_assert_eq!(
                render_mask_overlay(&img, &a, 0.4).unwrap(),
                render_mask_overlay(&img, &b, 0.4).unwrap()
            );
        }
    }
}
