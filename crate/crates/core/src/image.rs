//! Image containers, bilinear resampling, sRGB → L*a*b* conversion and
//! square patch extraction.
//!
//! All sampling uses half-pixel centers: pixel `i` of an `n`-pixel axis sits
//! at continuous coordinate `i + 0.5`, and corners are never aligned.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel mean subtracted before the network sees a patch (R, G, B).
pub const CHANNEL_MEAN: [f32; 3] = [124.0, 117.0, 104.0];

/// Side length, in pixels, that one patch occupies at network input.
pub const PATCH_PIXELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    /// Integer-valued samples in [0, 255].
    SrgbU8,
    LinearF32,
    /// L* in [0, 100]; a*, b* unbounded.
    LabF32,
}

/// Row-major, channel-interleaved image with `f32` storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    space: ColorSpace,
    data: Vec<f32>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        space: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "image data has {} samples, {width}x{height}x{channels} needs {}",
                data.len(),
                width * height * channels
            )));
        }
        match space {
            ColorSpace::SrgbU8 => {
                if data.iter().any(|v| !(0.0..=255.0).contains(v) || v.fract() != 0.0) {
                    return Err(Error::invalid("sRGB samples must be integers in [0, 255]"));
                }
            }
            ColorSpace::LabF32 => {
                if channels != 3 {
                    return Err(Error::invalid("L*a*b* images need 3 channels"));
                }
                if data.chunks_exact(3).any(|px| !(0.0..=100.0).contains(&px[0])) {
                    return Err(Error::invalid("L* outside [0, 100]"));
                }
            }
            ColorSpace::LinearF32 => {}
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite image sample"));
        }
        Ok(Image {
            width,
            height,
            channels,
            space,
            data,
        })
    }

    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        Image::new(
            width,
            height,
            3,
            ColorSpace::SrgbU8,
            rgb.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn filled(width: usize, height: usize, space: ColorSpace, value: &[f32]) -> Result<Self> {
        let data = value.iter().copied().cycle().take(width * height * value.len()).collect();
        Image::new(width, height, value.len(), space, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn min_dim(&self) -> usize {
        self.width.min(self.height)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn to_rgb8(&self) -> Result<Vec<u8>> {
        if self.space != ColorSpace::SrgbU8 {
            return Err(Error::invalid("only sRGB images convert to bytes"));
        }
        Ok(self.data.iter().map(|&v| v as u8).collect())
    }

    /// Copies the image, mirrored left to right.
    pub fn flip_horizontal(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.extend_from_slice(self.pixel(x, y));
            }
        }
        Image { data, ..self.clone() }
    }

    /// Multiplies every sample by `gain`; sRGB images are rounded and clamped
    /// back to [0, 255].
    pub fn scale_amplitude(&self, gain: f32) -> Image {
        let data = self
            .data
            .iter()
            .map(|&v| match self.space {
                ColorSpace::SrgbU8 => round_half_up(v as f64 * gain as f64).clamp(0.0, 255.0) as f32,
                _ => v * gain,
            })
            .collect();
        Image { data, ..self.clone() }
    }

    /// Crops a `w`×`h` window at (`x0`, `y0`), replicating edges outside.
    pub fn crop_replicate(&self, x0: isize, y0: isize, w: usize, h: usize) -> Image {
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in 0..h {
            let sy = (y0 + y as isize).clamp(0, self.height as isize - 1) as usize;
            for x in 0..w {
                let sx = (x0 + x as isize).clamp(0, self.width as isize - 1) as usize;
                data.extend_from_slice(self.pixel(sx, sy));
            }
        }
        Image {
            width: w,
            height: h,
            data,
            ..self.clone()
        }
    }
}

/// Rounds halves away from zero for non-negative inputs (2.5 → 3).
#[inline]
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Square patch location: center as fractions of width/height, side as a
/// fraction of the smaller image dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub center_x: f64,
    pub center_y: f64,
    pub scale: f64,
}

impl PatchGeometry {
    pub fn new(center_x: f64, center_y: f64, scale: f64) -> Result<Self> {
        let geom = PatchGeometry {
            center_x,
            center_y,
            scale,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.center_x) || !(0.0..=1.0).contains(&self.center_y) {
            return Err(Error::invalid(format!(
                "patch center ({}, {}) outside [0, 1]",
                self.center_x, self.center_y
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::invalid(format!("patch scale {} outside (0, 1]", self.scale)));
        }
        Ok(())
    }

    /// Crop side in pixels for an image of the given size.
    pub fn side_pixels(&self, width: usize, height: usize) -> usize {
        round_half_up(self.scale * width.min(height) as f64) as usize
    }
}

/// Bilinear sample of a `w`×`h`×`ch` interleaved grid at continuous grid
/// coordinates (`gx`, `gy`), where integer coordinates hit sample centers.
/// Coordinates are clamped to the grid, and each output lies between the
/// min and max of its four taps.
#[inline]
pub(crate) fn bilinear_at(
    data: &[f32],
    w: usize,
    h: usize,
    ch: usize,
    gx: f64,
    gy: f64,
    out: &mut [f32],
) {
    let gx = gx.clamp(0.0, (w - 1) as f64);
    let gy = gy.clamp(0.0, (h - 1) as f64);
    let x0 = gx.floor() as usize;
    let y0 = gy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = gx - x0 as f64;
    let fy = gy - y0 as f64;
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).clamp(a.min(b), a.max(b));
    for c in 0..ch {
        let a = data[(y0 * w + x0) * ch + c] as f64;
        let b = data[(y0 * w + x1) * ch + c] as f64;
        let d = data[(y1 * w + x0) * ch + c] as f64;
        let e = data[(y1 * w + x1) * ch + c] as f64;
        out[c] = lerp(lerp(a, b, fx), lerp(d, e, fx), fy) as f32;
    }
}

/// Bilinear resize with half-pixel centers. sRGB images stay integer-valued
/// (rounded), which keeps outputs inside the input range.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid(format!("zero-sized resize target {out_w}x{out_h}")));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let ch = img.channels;
    let sx = img.width as f64 / out_w as f64;
    let sy = img.height as f64 / out_h as f64;
    let mut data = vec![0f32; out_w * out_h * ch];
    for y in 0..out_h {
        let gy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..out_w {
            let gx = (x as f64 + 0.5) * sx - 0.5;
            let o = (y * out_w + x) * ch;
            bilinear_at(&img.data, img.width, img.height, ch, gx, gy, &mut data[o..o + ch]);
        }
    }
    if img.space == ColorSpace::SrgbU8 {
        for v in &mut data {
            *v = round_half_up(*v as f64) as f32;
        }
    }
    Ok(Image {
        width: out_w,
        height: out_h,
        data,
        ..img.clone()
    })
}

/// Resizes so the smaller dimension becomes `min_dim`; the larger one is
/// scaled by the same factor and rounded half-up.
pub fn resize_min_dim(img: &Image, min_dim: usize) -> Result<Image> {
    let (w, h) = scaled_dims(img.width, img.height, min_dim);
    resize_bilinear(img, w, h)
}

/// Output size that gives `min_dim` on the smaller axis with aspect kept.
pub fn scaled_dims(width: usize, height: usize, min_dim: usize) -> (usize, usize) {
    let small = width.min(height) as f64;
    let other = |v: usize| round_half_up(v as f64 * min_dim as f64 / small).max(1.0) as usize;
    if width <= height {
        (min_dim, other(height))
    } else {
        (other(width), min_dim)
    }
}

const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

#[inline]
fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const EPSILON: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// Converts one 8-bit sRGB triple to CIE L*a*b* (D65).
pub fn srgb_pixel_to_lab(rgb: [f32; 3]) -> [f32; 3] {
    let lin = rgb.map(|v| srgb_decode(v as f64 / 255.0));
    let mut f = [0f64; 3];
    for (k, row) in SRGB_TO_XYZ.iter().enumerate() {
        let xyz = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[k] = lab_f(xyz / D65_WHITE[k]);
    }
    let l = (116.0 * f[1] - 16.0).clamp(0.0, 100.0);
    [l as f32, (500.0 * (f[0] - f[1])) as f32, (200.0 * (f[1] - f[2])) as f32]
}

pub fn rgb_to_lab(img: &Image) -> Result<Image> {
    if img.channels != 3 || img.space != ColorSpace::SrgbU8 {
        return Err(Error::invalid(format!(
            "L*a*b* conversion needs 3-channel sRGB, got {} channel(s) in {:?}",
            img.channels, img.space
        )));
    }
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|px| srgb_pixel_to_lab([px[0], px[1], px[2]]))
        .collect();
    Ok(Image {
        space: ColorSpace::LabF32,
        data,
        ..img.clone()
    })
}

/// Square crop described by `geom`, edge-replicated where it leaves the
/// image, resized to `out_size`×`out_size`.
pub fn extract_patch(img: &Image, geom: &PatchGeometry, out_size: usize) -> Result<Image> {
    if out_size == 0 {
        return Err(Error::invalid("patch output size must be at least 1"));
    }
    geom.validate()?;
    let side = geom.side_pixels(img.width, img.height);
    if side < 1 {
        return Err(Error::invalid(format!(
            "patch scale {} gives a crop smaller than one pixel",
            geom.scale
        )));
    }
    let half = side as f64 / 2.0;
    let x0 = round_half_up(geom.center_x * img.width as f64 - half) as isize;
    let y0 = round_half_up(geom.center_y * img.height as f64 - half) as isize;
    let crop = img.crop_replicate(x0, y0, side, side);
    resize_bilinear(&crop, out_size, out_size)
}

/// Mean-subtracted 1×3×H×W network input.
pub fn preprocess(img: &Image) -> Result<Tensor> {
    if img.channels != 3 {
        return Err(Error::invalid(format!(
            "preprocess needs 3 channels, got {}",
            img.channels
        )));
    }
    let (w, h) = (img.width, img.height);
    let mut t = Tensor::zeros([1, 3, h, w]);
    let plane = w * h;
    let out = t.data_mut();
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] - CHANNEL_MEAN[c];
        }
    }
    Ok(t)
}

/// Reads a PNG or PPM file as 3-channel sRGB.
pub fn read_image(path: &Path) -> Result<Image> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_rgb8(w as usize, h as usize, rgb.as_raw())
}

/// Writes an 8-bit PNG with one (gray) or three (RGB) channels.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let bytes = img.to_rgb8()?;
    let color = if img.channels == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        color,
        ImageFormat::Png,
    )?;
    Ok(())
}

/// Writes a binary (P6) PPM.
pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::invalid("PPM output needs 3 channels"));
    }
    let bytes = img.to_rgb8()?;
    let mut out = BufWriter::new(File::create(path)?);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(&bytes, img.width as u32, img.height as u32, ExtendedColorType::Rgb8)?;
    out.flush()?;
    Ok(())
}
