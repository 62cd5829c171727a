//! Scale planning and multi-scale fusion of dense probability maps.
//!
//! A network trained on patches at scale `s` sees the image resized so one
//! patch spans the network's patch side: the smaller image dimension
//! becomes `d = patch_pixels / s`. The image is evaluated at `d/√2`, `d` and
//! `d·√2`, every map is bilinearly upsampled to a smaller dimension of 550,
//! and the three are averaged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convnet::{forward_dense, NetworkSpec, WeightStore};
use crate::error::{Error, Result};
use crate::image::{preprocess, resize_min_dim, round_half_up, scaled_dims, Image, PATCH_PIXELS};
use crate::probmap::ProbabilityMap;

/// Smaller dimension of the fused map.
pub const FUSION_DIM: usize = 550;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePlan {
    pub patch_scale: f64,
    pub patch_pixels: usize,
    pub base_dim: usize,
    /// Target smaller dimensions, ascending.
    pub scales: Vec<usize>,
    pub fusion_dim: usize,
}

/// Standard three-scale plan for 256-pixel patches.
pub fn plan_scales(patch_scale: f64) -> Result<ScalePlan> {
    ScalePlan::for_patch(patch_scale, PATCH_PIXELS)
}

impl ScalePlan {
    /// Plan for a network whose patches are `patch_pixels` wide.
    pub fn for_patch(patch_scale: f64, patch_pixels: usize) -> Result<Self> {
        if !(patch_scale > 0.0 && patch_scale <= 1.0) {
            return Err(Error::invalid(format!("patch scale {patch_scale} outside (0, 1]")));
        }
        if patch_pixels == 0 {
            return Err(Error::invalid("patch side must be positive"));
        }
        let d = round_half_up(patch_pixels as f64 / patch_scale);
        let scales = vec![
            round_half_up(d / std::f64::consts::SQRT_2) as usize,
            d as usize,
            round_half_up(d * std::f64::consts::SQRT_2) as usize,
        ];
        Ok(ScalePlan {
            patch_scale,
            patch_pixels,
            base_dim: d as usize,
            scales,
            fusion_dim: FUSION_DIM,
        })
    }

    /// Keeps `count` of the three scales: 1 → `d`, 2 → `d/√2, d`, 3 → all.
    pub fn with_count(mut self, count: usize) -> Result<Self> {
        self.scales = match count {
            1 => vec![self.scales[1]],
            2 => self.scales[..2].to_vec(),
            3 => self.scales,
            n => return Err(Error::invalid(format!("scale count {n} not in 1..=3"))),
        };
        Ok(self)
    }

    pub fn with_fusion_dim(mut self, fusion_dim: usize) -> Result<Self> {
        if fusion_dim == 0 {
            return Err(Error::invalid("fusion dimension must be positive"));
        }
        self.fusion_dim = fusion_dim;
        Ok(self)
    }

    /// Size of the fused map for a `width`×`height` image.
    pub fn fusion_size(&self, width: usize, height: usize) -> (usize, usize) {
        scaled_dims(width, height, self.fusion_dim)
    }
}

/// Arithmetic mean of maps sharing one grid, renormalized per cell.
pub fn fuse_maps(maps: &[ProbabilityMap]) -> Result<ProbabilityMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    if let Some(i) = maps.iter().position(|m| !m.same_grid(first)) {
        return Err(Error::invalid(format!("map {i} does not share the first map's grid")));
    }
    let n = maps.len() as f64;
    let mut fused = first.clone();
    for (i, v) in fused.values_mut().iter_mut().enumerate() {
        let sum: f64 = maps.iter().map(|m| m.values()[i] as f64).sum();
        *v = (sum / n) as f32;
    }
    fused.renormalize();
    Ok(fused)
}

/// Dense prediction at every planned scale, fused at the plan's fusion
/// resolution. The result is in `image` coordinates.
pub fn predict_multiscale(
    net: &NetworkSpec,
    weights: &WeightStore,
    image: &Image,
    plan: &ScalePlan,
    half_stride: bool,
) -> Result<ProbabilityMap> {
    let rf = net.geometry()?.receptive_field;
    if let Some(&small) = plan.scales.iter().find(|&&t| t < rf) {
        return Err(Error::invalid(format!(
            "scale {small} is below the network receptive field {rf}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let (fw, fh) = plan.fusion_size(w, h);
    let maps = plan
        .scales
        .par_iter()
        .map(|&target| {
            let resized = resize_min_dim(image, target)?;
            let input = preprocess(&resized)?;
            let mut map = forward_dense(net, weights, &input, half_stride)?;
            map.rescale_coordinates(
                w as f64 / resized.width() as f64,
                h as f64 / resized.height() as f64,
            );
            map.resample(fw, fh, w as f64, h as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_maps(&maps)
}
