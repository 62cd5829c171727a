use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

/// Position (x, y) plus L*a*b* color.
pub const FEATURE_DIM: usize = 5;

/// Bandwidths, pairwise weight and iteration count of the CRF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    /// Position bandwidth as a fraction of the smaller image dimension.
    pub theta_p: f64,
    /// L* bandwidth.
    pub theta_l: f64,
    /// a*/b* bandwidth.
    pub theta_ab: f64,
    /// Potts weight.
    pub w_p: f64,
    pub iterations: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            theta_p: 0.1,
            theta_l: 10.0,
            theta_ab: 5.0,
            w_p: 2.0,
            iterations: 10,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let thetas = [self.theta_p, self.theta_l, self.theta_ab];
        if thetas.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("CRF bandwidths must be positive: {thetas:?}")));
        }
        if !(self.w_p >= 0.0 && self.w_p.is_finite()) {
            return Err(Error::invalid(format!("pairwise weight {} must be >= 0", self.w_p)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("mean-field needs at least one iteration"));
        }
        Ok(())
    }
}

/// Scaled per-pixel feature vectors, row-major over the image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    width: usize,
    height: usize,
    data: Vec<[f64; FEATURE_DIM]>,
}

impl PixelFeatures {
    pub fn new(width: usize, height: usize, data: Vec<[f64; FEATURE_DIM]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} feature vectors for a {width}x{height} grid",
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        Ok(PixelFeatures { width, height, data })
    }

    /// Unstructured point set laid out as a single row.
    pub fn from_points(points: Vec<[f64; FEATURE_DIM]>) -> Result<Self> {
        let n = points.len();
        PixelFeatures::new(n, 1, points)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn points(&self) -> &[[f64; FEATURE_DIM]] {
        &self.data
    }
}

/// `(x / (θp·d), y / (θp·d), L / θL, a / θab, b / θab)` for every pixel,
/// with `d` the smaller image dimension.
pub fn build_features(lab: &Image, params: &CrfParams) -> Result<PixelFeatures> {
    if lab.space() != ColorSpace::LabF32 || lab.channels() != 3 {
        return Err(Error::invalid("pairwise features need a 3-channel L*a*b* image"));
    }
    params.validate()?;
    let d = lab.min_dim() as f64;
    let pos = params.theta_p * d;
    let mut data = Vec::with_capacity(lab.width() * lab.height());
    for y in 0..lab.height() {
        for x in 0..lab.width() {
            let px = lab.pixel(x, y);
            data.push([
                x as f64 / pos,
                y as f64 / pos,
                px[0] as f64 / params.theta_l,
                px[1] as f64 / params.theta_ab,
                px[2] as f64 / params.theta_ab,
            ]);
        }
    }
    PixelFeatures::new(lab.width(), lab.height(), data)
}
