use rayon::prelude::*;

use super::spec::{LayerKind, LayerSpec, NetworkMode, NetworkSpec};
use super::weights::{LayerParams, WeightStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Runs every layer of `net` over `input`. Shapes and weights are checked by
/// the callers.
pub(crate) fn run_layers(net: &NetworkSpec, weights: &WeightStore, input: &Tensor) -> Result<Tensor> {
    let mut x = input.clone();
    for (i, layer) in net.layers.iter().enumerate() {
        x = match layer.kind {
            LayerKind::Conv => conv2d(&x, layer, params(weights, i)?),
            LayerKind::FullyConnected => fully_connected(&x, layer, params(weights, i)?),
            LayerKind::MaxPool => max_pool(&x, layer),
            LayerKind::ReLU => {
                x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                x
            }
            LayerKind::Softmax => softmax_channels(x),
        };
    }
    Ok(x)
}

fn params(weights: &WeightStore, layer: usize) -> Result<&LayerParams> {
    weights
        .get(layer)
        .ok_or_else(|| Error::state(format!("missing weights for layer {layer}")))
}

fn out_extent(n: usize, l: &LayerSpec) -> usize {
    (n + 2 * l.pad - l.kernel) / l.stride + 1
}

fn conv2d(x: &Tensor, l: &LayerSpec, p: &LayerParams) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (out_extent(h, l), out_extent(w, l));
    let (k, s, pad) = (l.kernel, l.stride, l.pad as isize);
    let mut out = Tensor::zeros([n, l.out_channels, oh, ow]);
    let plane = oh * ow;
    let src = x.data();
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (b, o) = (idx / l.out_channels, idx % l.out_channels);
            dst.fill(p.bias[o]);
            for ci in 0..c {
                let in_plane = &src[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = p.weights[((o * c + ci) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            if s == 1 && pad == 0 {
                                for (d, &v) in drow.iter_mut().zip(&row[kx..kx + ow]) {
                                    *d += wv * v;
                                }
                            } else {
                                for (ox, d) in drow.iter_mut().enumerate() {
                                    let ix = (ox * s + kx) as isize - pad;
                                    if ix >= 0 && ix < w as isize {
                                        *d += wv * row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

fn fully_connected(x: &Tensor, l: &LayerSpec, p: &LayerParams) -> Tensor {
    let n = x.batch();
    let fan_in = x.channels() * x.rows() * x.cols();
    let mut out = Tensor::zeros([n, l.out_channels, 1, 1]);
    for b in 0..n {
        let input = &x.data()[b * fan_in..(b + 1) * fan_in];
        for o in 0..l.out_channels {
            // Accumulate in the same (channel, row, col) order as conv2d so
            // the convolutionalised layer reproduces the same sums.
            let row = &p.weights[o * fan_in..(o + 1) * fan_in];
            let acc = row
                .iter()
                .zip(input)
                .fold(p.bias[o], |acc, (&wv, &v)| acc + wv * v);
            out.data_mut()[b * l.out_channels + o] = acc;
        }
    }
    out
}

fn max_pool(x: &Tensor, l: &LayerSpec) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (out_extent(h, l), out_extent(w, l));
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let pad = l.pad as isize;
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for ky in 0..l.kernel {
                        let iy = (oy * l.stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..l.kernel {
                            let ix = (ox * l.stride + kx) as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                m = m.max(x.at(b, ch, iy as usize, ix as usize));
                            }
                        }
                    }
                    let i = out.index(b, ch, oy, ox);
                    out.data_mut()[i] = m;
                }
            }
        }
    }
    out
}

fn softmax_channels(mut x: Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let data = x.data_mut();
    let mut buf = vec![0f64; c];
    for b in 0..n {
        for pos in 0..plane {
            let at = |ch: usize| (b * c + ch) * plane + pos;
            let max = (0..c).map(|ch| data[at(ch)]).fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut sum = 0.0;
            for (ch, e) in buf.iter_mut().enumerate() {
                *e = (data[at(ch)] as f64 - max).exp();
                sum += *e;
            }
            for (ch, e) in buf.iter().enumerate() {
                data[at(ch)] = (e / sum) as f32;
            }
        }
    }
    x
}

/// Label distribution for one patch.
pub fn forward_patch(net: &NetworkSpec, weights: &WeightStore, input: &Tensor) -> Result<Vec<f32>> {
    if net.mode != NetworkMode::Patch {
        return Err(Error::invalid("forward_patch needs a patch-mode network"));
    }
    let expected = [1, net.in_channels, net.input_size, net.input_size];
    if input.shape() != expected {
        return Err(Error::invalid(format!(
            "input shape {:?} does not match network input {expected:?}",
            input.shape()
        )));
    }
    weights.check(net)?;
    Ok(run_layers(net, weights, input)?.into_vec())
}
