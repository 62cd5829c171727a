//! Fully connected CRF over pixels with a single Potts pairwise term and a
//! unit Gaussian kernel on scaled position + L*a*b* features.
//!
//! Energy: `E(x) = sum_i psi_i(x_i) + sum_{i<j} w_p [x_i != x_j] k(f_i - f_j)`
//! with `psi_i = -log p_i`. Inference is synchronous mean-field for a fixed
//! number of rounds. The kernel sum is computed either exactly (O(N²)) or
//! with a permutohedral lattice.

mod exact;
mod features;
mod lattice;

use serde::{Deserialize, Serialize};

pub use exact::gaussian_filter_exact;
pub use features::{build_features, CrfParams, PixelFeatures, FEATURE_DIM};
pub use lattice::Lattice;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::labelmap::LabelMap;
use crate::probmap::ProbabilityMap;

/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterBackend {
    Exact,
    #[default]
    Lattice,
}

/// Approximate Gaussian filter through a freshly built lattice.
pub fn gaussian_filter_lattice(features: &PixelFeatures, values: &[f64], channels: usize) -> Vec<f64> {
    Lattice::new(features.points()).filter(values, channels)
}

/// `-log p` per pixel and label.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryPotentials {
    width: usize,
    height: usize,
    labels: usize,
    data: Vec<f64>,
}

impl UnaryPotentials {
    pub fn new(width: usize, height: usize, labels: usize, data: Vec<f64>) -> Result<Self> {
        if width * height * labels == 0 || data.len() != width * height * labels {
            return Err(Error::invalid(format!(
                "{} unary values for {width}x{height}x{labels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite unary potential"));
        }
        Ok(UnaryPotentials {
            width,
            height,
            labels,
            data,
        })
    }

    /// Unaries from per-pixel probabilities, floored at [`PROB_FLOOR`].
    pub fn from_probabilities(width: usize, height: usize, labels: usize, probs: &[f32]) -> Result<Self> {
        let data = probs.iter().map(|&p| -(p as f64).max(PROB_FLOOR).ln()).collect();
        UnaryPotentials::new(width, height, labels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Label minimising the unary at every pixel, ties to the lowest index.
    pub fn argmin_labels(&self) -> Result<LabelMap> {
        let labels = self
            .data
            .chunks_exact(self.labels)
            .map(|psi| {
                let mut best = 0;
                for (l, &v) in psi.iter().enumerate() {
                    if v < psi[best] {
                        best = l;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap::new(self.width, self.height, labels)
    }
}

/// Resamples `map` onto a `target_w`×`target_h` pixel grid covering the
/// map's footprint (`cols·spacing_x` by `rows·spacing_y`) and takes
/// `-log max(p, 1e-12)`.
pub fn unary_from_probmap(map: &ProbabilityMap, target_w: usize, target_h: usize) -> Result<UnaryPotentials> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::invalid(format!("degenerate unary size {target_w}x{target_h}")));
    }
    let extent_w = map.cols() as f64 * map.spacing()[0];
    let extent_h = map.rows() as f64 * map.spacing()[1];
    let resampled = map.resample(target_w, target_h, extent_w, extent_h)?;
    UnaryPotentials::from_probabilities(target_w, target_h, map.labels(), resampled.values())
}

/// Mean-field marginals `Q_i(l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalField {
    width: usize,
    height: usize,
    labels: usize,
    q: Vec<f64>,
}

impl MarginalField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn to_probability_map(&self) -> Result<ProbabilityMap> {
        ProbabilityMap::pixel_grid(
            self.width,
            self.height,
            self.labels,
            self.q.iter().map(|&v| v as f32).collect(),
        )
    }
}

fn softmax_neg(energy: &[f64], out: &mut [f64]) {
    let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (o, &e) in out.iter_mut().zip(energy) {
        *o = (min - e).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Mean-field inference; `observe` sees the marginals after initialisation
/// (round 0) and after every update round.
pub fn meanfield_infer_observed(
    unary: &UnaryPotentials,
    features: &PixelFeatures,
    w_p: f64,
    iterations: usize,
    backend: FilterBackend,
    mut observe: impl FnMut(usize, &MarginalField),
) -> Result<MarginalField> {
    let n = unary.width * unary.height;
    if features.len() != n || features.width() != unary.width {
        return Err(Error::invalid(format!(
            "features ({}x{}) and unaries ({}x{}) are not aligned",
            features.width(),
            features.height(),
            unary.width,
            unary.height
        )));
    }
    if !(w_p >= 0.0 && w_p.is_finite()) {
        return Err(Error::invalid(format!("pairwise weight {w_p} must be >= 0")));
    }
    let l = unary.labels;
    let mut field = MarginalField {
        width: unary.width,
        height: unary.height,
        labels: l,
        q: vec![0.0; n * l],
    };
    for (psi, q) in unary.data.chunks_exact(l).zip(field.q.chunks_exact_mut(l)) {
        softmax_neg(psi, q);
    }
    observe(0, &field);
    if w_p == 0.0 {
        for round in 1..=iterations {
            observe(round, &field);
        }
        return Ok(field);
    }

    let lattice = match backend {
        FilterBackend::Lattice => Some(Lattice::new(features.points())),
        FilterBackend::Exact => None,
    };
    let mut energy = vec![0f64; l];
    for round in 1..=iterations {
        let kq = match &lattice {
            Some(lat) => lat.filter(&field.q, l),
            None => gaussian_filter_exact(features, &field.q, l),
        };
        for i in 0..n {
            let q = &mut field.q[i * l..(i + 1) * l];
            let psi = &unary.data[i * l..(i + 1) * l];
            let msg = &kq[i * l..(i + 1) * l];
            // Messages from all other pixels: subtract the self term.
            let total: f64 = msg.iter().zip(q.iter()).map(|(m, q)| m - q).sum();
            for k in 0..l {
                let m = msg[k] - q[k];
                energy[k] = psi[k] + w_p * (total - m);
            }
            softmax_neg(&energy, q);
        }
        observe(round, &field);
    }
    Ok(field)
}

pub fn meanfield_infer(
    unary: &UnaryPotentials,
    features: &PixelFeatures,
    w_p: f64,
    iterations: usize,
    backend: FilterBackend,
) -> Result<MarginalField> {
    meanfield_infer_observed(unary, features, w_p, iterations, backend, |_, _| {})
}

/// Per-pixel argmax of the marginals, ties to the lowest label.
pub fn map_labels(q: &MarginalField) -> Result<LabelMap> {
    if q.labels > 256 {
        return Err(Error::invalid(format!("{} labels do not fit in 8 bits", q.labels)));
    }
    let labels = q
        .q
        .chunks_exact(q.labels)
        .map(|p| {
            let mut best = 0;
            for (l, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = l;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(q.width, q.height, labels)
}

/// Runs the CRF end to end on an L*a*b* image and its unaries.
pub fn crf_segment(
    lab: &Image,
    unary: &UnaryPotentials,
    params: &CrfParams,
    backend: FilterBackend,
) -> Result<(MarginalField, LabelMap)> {
    let features = build_features(lab, params)?;
    let q = meanfield_infer(unary, &features, params.w_p, params.iterations, backend)?;
    let labels = map_labels(&q)?;
    Ok((q, labels))
}
