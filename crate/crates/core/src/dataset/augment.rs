//! Training-time patch augmentation: scale, aspect, crop, flip, amplitude,
//! applied in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, round_half_up, Image, PATCH_PIXELS};

pub const CROP_PIXELS: usize = 227;
pub const SCALE_RANGE: (f64, f64) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::SQRT_2);
pub const ASPECT_RANGE: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);
pub const AMPLITUDE_RANGE: (f32, f32) = (0.95, 1.05);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub scale: f64,
    /// Width over height.
    pub aspect: f64,
    /// Crop origin as a fraction of the available slack, in [0, 1).
    pub crop_x: f64,
    pub crop_y: f64,
    pub flip: bool,
    pub amplitude: f32,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

impl AugmentParams {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        AugmentParams {
            scale: log_uniform(rng, SCALE_RANGE),
            aspect: log_uniform(rng, ASPECT_RANGE),
            crop_x: rng.random(),
            crop_y: rng.random(),
            flip: rng.random_bool(0.5),
            amplitude: rng.random_range(AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1),
        }
    }

    /// Size of the rescaled patch before cropping.
    pub fn resized_dims(&self, side: usize) -> (usize, usize) {
        let s = side as f64 * self.scale;
        let w = round_half_up(s * self.aspect.sqrt()).max(1.0);
        let h = round_half_up(s / self.aspect.sqrt()).max(1.0);
        (w as usize, h as usize)
    }

    pub fn apply(&self, patch: &Image) -> Result<Image> {
        if patch.width() != PATCH_PIXELS || patch.height() != PATCH_PIXELS {
            return Err(Error::invalid(format!(
                "augmentation expects a {PATCH_PIXELS}x{PATCH_PIXELS} patch, got {}x{}",
                patch.width(),
                patch.height()
            )));
        }
        let (w, h) = self.resized_dims(PATCH_PIXELS);
        let resized = resize_bilinear(patch, w, h)?;
        // smaller than the crop: center it and replicate edges
        let origin = |len: usize, u: f64| -> isize {
            if len >= CROP_PIXELS {
                ((u * (len - CROP_PIXELS + 1) as f64) as usize).min(len - CROP_PIXELS) as isize
            } else {
                -(((CROP_PIXELS - len) / 2) as isize)
            }
        };
        let mut out = resized.crop_replicate(origin(w, self.crop_x), origin(h, self.crop_y), CROP_PIXELS, CROP_PIXELS);
        if self.flip {
            out = out.flip_horizontal();
        }
        Ok(out.scale_amplitude(self.amplitude))
    }
}

/// Random augmentation of a 256×256 patch into a 227×227 crop.
pub fn augment(patch: &Image, seed: u64) -> Result<Image> {
    let params = AugmentParams::sample(&mut ChaCha8Rng::seed_from_u64(seed));
    params.apply(patch)
}
