use rayon::prelude::*;

use super::features::{PixelFeatures, FEATURE_DIM};

/// Brute-force Gaussian filter over all point pairs, self term included:
/// `out_i = sum_j exp(-|f_i - f_j|^2 / 2) v_j`. O(N²).
pub fn gaussian_filter_exact(features: &PixelFeatures, values: &[f64], channels: usize) -> Vec<f64> {
    let pts = features.points();
    assert_eq!(values.len(), pts.len() * channels, "values do not match features");
    let mut out = vec![0f64; values.len()];
    out.par_chunks_mut(channels.max(1))
        .zip(pts.par_iter())
        .for_each(|(dst, fi)| {
            for (fj, v) in pts.iter().zip(values.chunks_exact(channels)) {
                let mut d2 = 0.0;
                for k in 0..FEATURE_DIM {
                    let t = fi[k] - fj[k];
                    d2 += t * t;
                }
                let w = (-0.5 * d2).exp();
                for (o, &x) in dst.iter_mut().zip(v) {
                    *o += w * x;
                }
            }
        });
    out
}
