//! Raster primitives shared by every stage of the pipeline.
//!
//! A [`WordImage`] is the RGB raster of one cropped word. Colour-space
//! conversions produce real-valued [`GrayPlane`]s; thresholding and mask
//! editing produce [`BinaryMask`]s of the same dimensions.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("pixel buffer holds {actual} samples, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("plane contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

pub type RasterResult<T> = Result<T, RasterError>;

/// RGB raster of a cropped word image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordImage {
    id: String,
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl WordImage {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<[u8; 3]>,
    ) -> RasterResult<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::BufferLength {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            pixels,
        })
    }

    /// Uniformly coloured image.
    pub fn filled(id: impl Into<String>, width: usize, height: usize, rgb: [u8; 3]) -> RasterResult<Self> {
        Self::new(id, width, height, vec![rgb; width * height])
    }

    /// Decode a PNG, BMP or JPEG file. Alpha is discarded.
    pub fn open(id: impl Into<String>, path: impl AsRef<Path>) -> RasterResult<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| RasterError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| p.0).collect();
        Self::new(id, w as usize, h as usize, pixels)
    }

    /// Encode as an 8-bit RGB PNG.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header().expect("in-memory PNG header");
            let data: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
            writer.write_image_data(&data).expect("in-memory PNG data");
        }
        out
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn with_pixels(&self, pixels: Vec<[u8; 3]>) -> Self {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        Self {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Which channel or derived quantity a [`GrayPlane`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaneTag {
    R,
    G,
    B,
    H,
    S,
    V,
    L,
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    LabB,
    Intensity,
}

impl PlaneTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaneTag::R => "R",
            PlaneTag::G => "G",
            PlaneTag::B => "B",
            PlaneTag::H => "H",
            PlaneTag::S => "S",
            PlaneTag::V => "V",
            PlaneTag::L => "L",
            PlaneTag::A => "a",
            PlaneTag::LabB => "b",
            PlaneTag::Intensity => "I",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "R" => PlaneTag::R,
            "G" => PlaneTag::G,
            "B" => PlaneTag::B,
            "H" => PlaneTag::H,
            "S" => PlaneTag::S,
            "V" => PlaneTag::V,
            "L" => PlaneTag::L,
            "a" => PlaneTag::A,
            "b" => PlaneTag::LabB,
            "I" => PlaneTag::Intensity,
            _ => return None,
        })
    }
}

impl fmt::Display for PlaneTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Real-valued single-channel plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
    tag: PlaneTag,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>, tag: PlaneTag) -> RasterResult<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(RasterError::BufferLength {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            values,
            tag,
        })
    }

    fn from_image(img: &WordImage, tag: PlaneTag, f: impl Fn([u8; 3]) -> f64) -> Self {
        Self {
            width: img.width,
            height: img.height,
            values: img.pixels.iter().map(|&p| f(p)).collect(),
            tag,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> PlaneTag {
        self.tag
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Foreground/background raster, row-major. `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> RasterResult<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(RasterError::BufferLength {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::filled(width, height, true)
    }

    fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMask) -> RasterResult<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> RasterResult<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> RasterResult<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> RasterResult<Self> {
        if !self.same_dims(other) {
            return Err(RasterError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Grayscale PNG with foreground at 255 and background at 0.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let data: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_gray_png(self.width, self.height, &data)
    }

    /// Decode any grayscale-convertible image; nonzero samples are foreground.
    pub fn from_image_file(path: impl AsRef<Path>) -> RasterResult<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| RasterError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        let gray = decoded.to_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.pixels().map(|p| p.0[0] != 0).collect())
    }
}

pub(crate) fn encode_gray_png(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(data).expect("in-memory PNG data");
    }
    out
}

// ============================================================================
// Colour conversions
// ============================================================================

pub fn split_rgb(img: &WordImage) -> (GrayPlane, GrayPlane, GrayPlane) {
    (
        GrayPlane::from_image(img, PlaneTag::R, |p| p[0] as f64),
        GrayPlane::from_image(img, PlaneTag::G, |p| p[1] as f64),
        GrayPlane::from_image(img, PlaneTag::B, |p| p[2] as f64),
    )
}

/// Hexcone HSV for one pixel: H in [0,360), S and V in [0,1].
///
/// Achromatic pixels (r = g = b) get H = 0 and S = 0.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max as f64 / 255.0;
    if max == min {
        return (0.0, 0.0, v);
    }
    let delta = (max - min) as f64;
    let s = delta / max as f64;
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let sector = if max as f64 == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max as f64 == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h >= 360.0 {
        h -= 360.0;
    }
    (h, s, v)
}

pub fn to_hsv(img: &WordImage) -> (GrayPlane, GrayPlane, GrayPlane) {
    let hsv: Vec<(f64, f64, f64)> = img.pixels.iter().map(|&p| rgb_to_hsv(p)).collect();
    let plane = |tag, f: fn(&(f64, f64, f64)) -> f64| GrayPlane {
        width: img.width,
        height: img.height,
        values: hsv.iter().map(f).collect(),
        tag,
    };
    (
        plane(PlaneTag::H, |t| t.0),
        plane(PlaneTag::S, |t| t.1),
        plane(PlaneTag::V, |t| t.2),
    )
}

// sRGB (IEC 61966-2-1) to XYZ, D65.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// Row sums of the matrix above, so that sRGB white maps to L=100, a=b=0 exactly.
const D65_WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const EPSILON: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// CIE L*a*b* for one sRGB pixel under D65.
pub fn rgb_to_lab(rgb: [u8; 3]) -> (f64, f64, f64) {
    let lin = [srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])];
    let mut xyz = [0.0; 3];
    for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    (l, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

pub fn to_lab(img: &WordImage) -> (GrayPlane, GrayPlane, GrayPlane) {
    let lab: Vec<(f64, f64, f64)> = img.pixels.iter().map(|&p| rgb_to_lab(p)).collect();
    let plane = |tag, f: fn(&(f64, f64, f64)) -> f64| GrayPlane {
        width: img.width,
        height: img.height,
        values: lab.iter().map(f).collect(),
        tag,
    };
    (
        plane(PlaneTag::L, |t| t.0),
        plane(PlaneTag::A, |t| t.1),
        plane(PlaneTag::LabB, |t| t.2),
    )
}

pub fn luma(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Rec. 601 luma plane.
pub fn intensity(img: &WordImage) -> GrayPlane {
    GrayPlane::from_image(img, PlaneTag::Intensity, luma)
}
