use super::engine::run_layers;
use super::spec::{LayerKind, LayerSpec, NetworkMode, NetworkSpec};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::probmap::ProbabilityMap;
use crate::tensor::Tensor;

/// Rewrites every fully connected layer as a convolution: the first one
/// spans its whole incoming extent, later ones are 1×1. Weight blobs are
/// carried over untouched since the memory layouts coincide.
pub fn convolutionalize(net: &NetworkSpec, weights: &WeightStore) -> Result<(NetworkSpec, WeightStore)> {
    if net.mode != NetworkMode::Patch {
        return Err(Error::invalid("only patch-mode networks can be convolutionalized"));
    }
    let inputs = net
        .input_shapes()
        .map_err(|e| Error::state(format!("cannot infer spatial size ahead of FC layers: {e}")))?;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, l) in net.layers.iter().enumerate() {
        if l.kind == LayerKind::FullyConnected {
            let [_, h, w] = inputs[i];
            if h != w {
                return Err(Error::state(format!("layer {i}: FC input {h}x{w} is not square")));
            }
            layers.push(LayerSpec::conv(l.out_channels, h, 1, 0));
        } else {
            layers.push(*l);
        }
    }
    let sliding = NetworkSpec {
        mode: NetworkMode::Sliding,
        layers,
        ..net.clone()
    };
    sliding.validate()?;
    weights.check(&sliding)?;
    Ok((sliding, weights.clone()))
}

/// Padding added on every side of the input before dense prediction.
pub fn alignment_padding(receptive_field: usize) -> usize {
    receptive_field.div_ceil(2)
}

/// Dense label distributions over `image` (1×C×H×W).
///
/// The input is edge-padded by [`alignment_padding`] so that grid cell
/// `(r, c)` covers input pixels starting at `(r, c) * spacing - pad -
/// input_offset`. With `half_stride` the network is also run on inputs
/// shifted by half the total stride in x, y and both, and the four grids are
/// interleaved; even grid positions come from the unshifted run.
pub fn forward_dense(
    net: &NetworkSpec,
    weights: &WeightStore,
    image: &Tensor,
    half_stride: bool,
) -> Result<ProbabilityMap> {
    if net.mode != NetworkMode::Sliding {
        return Err(Error::invalid("forward_dense needs a sliding-mode network"));
    }
    let [n, c, h, w] = image.shape();
    if n != 1 || c != net.in_channels {
        return Err(Error::invalid(format!(
            "dense input must be 1x{}xHxW, got {:?}",
            net.in_channels,
            image.shape()
        )));
    }
    weights.check(net)?;
    let geom = net.geometry()?;
    let rf = geom.receptive_field;
    if h < rf || w < rf {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than the receptive field {rf}"
        )));
    }
    let stride = geom.total_stride;
    if half_stride && stride % 2 != 0 {
        return Err(Error::invalid(format!("half-stride needs an even total stride, got {stride}")));
    }
    let pad = alignment_padding(rf);
    let padded = image.pad_replicate(pad);
    let labels = net.num_labels;
    let origin = rf as f64 / 2.0 - pad as f64 - geom.input_offset as f64;

    let base = run_layers(net, weights, &padded)?;
    if !half_stride {
        let (rows, cols) = (base.rows(), base.cols());
        let values = channels_last(&base);
        return ProbabilityMap::new(rows, cols, labels, [origin, origin], [stride as f64; 2], values);
    }

    let half = stride / 2;
    let (ph, pw) = (padded.rows(), padded.cols());
    let run_shifted = |dy: usize, dx: usize| -> Result<Option<Tensor>> {
        if ph - dy < rf || pw - dx < rf {
            return Ok(None);
        }
        let shifted = padded.crop_replicate(dy as isize, dx as isize, ph - dy, pw - dx);
        run_layers(net, weights, &shifted).map(Some)
    };
    let shift_x = run_shifted(0, half)?;
    let shift_y = run_shifted(half, 0)?;
    let shift_xy = run_shifted(half, half)?;

    let odd_cols = shift_x.as_ref().map_or(0, Tensor::cols);
    let odd_rows = shift_y.as_ref().map_or(0, Tensor::rows);
    let rows = base.rows() + odd_rows;
    let cols = base.cols() + odd_cols;
    let mut values = vec![0f32; rows * cols * labels];
    let grids = [Some(&base), shift_x.as_ref(), shift_y.as_ref(), shift_xy.as_ref()];
    for r in 0..rows {
        for c in 0..cols {
            let src = grids[(r % 2) * 2 + c % 2].expect("odd cells exist only when the shifted run does");
            let (sr, sc) = (r / 2, c / 2);
            let o = (r * cols + c) * labels;
            for l in 0..labels {
                values[o + l] = src.at(0, l, sr, sc);
            }
        }
    }
    ProbabilityMap::new(rows, cols, labels, [origin, origin], [half as f64; 2], values)
}

fn channels_last(t: &Tensor) -> Vec<f32> {
    let [_, c, h, w] = t.shape();
    let mut out = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for x in 0..w {
            out.extend((0..c).map(|ch| t.at(0, ch, y, x)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::engine::forward_patch;
    use crate::convnet::weights::RANDOM_SIGMA;

    fn stride32_net() -> NetworkSpec {
        let mut layers = Vec::new();
        for _ in 0..5 {
            layers.push(LayerSpec::conv(2, 2, 2, 0));
            layers.push(LayerSpec::relu());
        }
        layers.push(LayerSpec::fully_connected(3));
        layers.push(LayerSpec::softmax());
        NetworkSpec::new(NetworkMode::Patch, 32, 3, 3, layers).unwrap()
    }

    #[test]
    fn conversion_keeps_params_and_shapes() {
        let net = stride32_net();
        let w = WeightStore::random(&net, 9, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        assert_eq!(s.mode, NetworkMode::Sliding);
        assert_eq!(s.layers[10], LayerSpec::conv(3, 1, 1, 0));
        assert_eq!(sw.param_count(), w.param_count());
        assert!(convolutionalize(&s, &sw).is_err());
    }

    #[test]
    fn fc_becomes_full_extent_conv() {
        let net = NetworkSpec::new(
            NetworkMode::Patch,
            5,
            2,
            4,
            vec![LayerSpec::fully_connected(4), LayerSpec::softmax()],
        )
        .unwrap();
        let w = WeightStore::random(&net, 1, RANDOM_SIGMA).unwrap();
        let (s, _) = convolutionalize(&net, &w).unwrap();
        assert_eq!(s.layers[0], LayerSpec::conv(4, 5, 1, 0));
    }

    #[test]
    fn no_fc_layers_is_identity() {
        let net = NetworkSpec::new(
            NetworkMode::Patch,
            3,
            3,
            2,
            vec![LayerSpec::conv(2, 3, 1, 0), LayerSpec::softmax()],
        )
        .unwrap();
        let w = WeightStore::random(&net, 1, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        assert_eq!(s.layers, net.layers);
        assert_eq!(sw, w);
    }

    #[test]
    fn converted_net_on_patch_matches_patch_forward() {
        let net = stride32_net();
        let w = WeightStore::random(&net, 2, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        let data: Vec<f32> = (0..3 * 32 * 32).map(|i| ((i * 37 % 101) as f32) - 50.0).collect();
        let input = Tensor::from_vec([1, 3, 32, 32], data).unwrap();
        let p = forward_patch(&net, &w, &input).unwrap();
        let q = run_layers(&s, &sw, &input).unwrap();
        assert_eq!(q.shape(), [1, 3, 1, 1]);
        for (a, b) in p.iter().zip(q.data()) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn stride32_strip_spacing() {
        let net = stride32_net();
        let w = WeightStore::random(&net, 2, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        let strip = Tensor::zeros([1, 3, 32, 256]);
        let full = forward_dense(&s, &sw, &strip, false).unwrap();
        assert_eq!(full.spacing(), [32.0, 32.0]);
        assert_eq!(full.cols(), 9);
        let half = forward_dense(&s, &sw, &strip, true).unwrap();
        assert_eq!(half.spacing(), [16.0, 16.0]);
        assert_eq!(half.cols(), 17);
        assert_eq!(half.origin(), full.origin());
    }

    #[test]
    fn constant_image_gives_constant_map() {
        let net = stride32_net();
        let w = WeightStore::random(&net, 4, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        let img = Tensor::from_vec([1, 3, 70, 90], vec![3.5; 3 * 70 * 90]).unwrap();
        let map = forward_dense(&s, &sw, &img, true).unwrap();
        let first = map.cell(0, 0).to_vec();
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                assert_eq!(map.cell(r, c), &first[..]);
            }
        }
        map.check_normalized().unwrap();
    }

    #[test]
    fn rejects_small_images_and_odd_strides() {
        let net = stride32_net();
        let w = WeightStore::random(&net, 4, RANDOM_SIGMA).unwrap();
        let (s, sw) = convolutionalize(&net, &w).unwrap();
        assert!(forward_dense(&s, &sw, &Tensor::zeros([1, 3, 31, 64]), false).is_err());

        let odd = NetworkSpec::new(
            NetworkMode::Sliding,
            3,
            3,
            2,
            vec![LayerSpec::conv(2, 3, 3, 0), LayerSpec::softmax()],
        )
        .unwrap();
        let ow = WeightStore::random(&odd, 1, RANDOM_SIGMA).unwrap();
        let img = Tensor::zeros([1, 3, 9, 9]);
        assert!(forward_dense(&odd, &ow, &img, false).is_ok());
        assert!(forward_dense(&odd, &ow, &img, true).is_err());
    }
}
