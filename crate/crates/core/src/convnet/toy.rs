//! Small random networks for tests and demos. No trained weights ship with
//! this crate.

use rand::Rng;

use super::spec::{LayerSpec, NetworkMode, NetworkSpec};
use crate::error::{Error, Result};

/// Builds a random patch network with `total_stride` (a power of two),
/// between two and five conv/pool/FC layers, and a softmax over `labels`.
pub fn random_toy_network<R: Rng>(
    rng: &mut R,
    total_stride: usize,
    in_channels: usize,
    labels: usize,
) -> Result<NetworkSpec> {
    if !total_stride.is_power_of_two() {
        return Err(Error::invalid(format!("total stride {total_stride} is not a power of two")));
    }
    let log_stride = total_stride.trailing_zeros() as usize;
    let depth = rng.random_range(2..=5usize);
    let fc_layers = if depth > 2 { rng.random_range(1..=2usize) } else { 1 };
    let spatial = depth - fc_layers;

    // Spread the stride exponent over the spatial layers.
    let mut exps = vec![0usize; spatial];
    for _ in 0..log_stride {
        exps[rng.random_range(0..spatial)] += 1;
    }

    let mut layers = Vec::new();
    let mut channels = in_channels;
    for e in exps {
        let stride = 1usize << e;
        if channels != in_channels && rng.random_bool(0.4) {
            let kernel = if stride == 1 { 2 } else { stride + rng.random_range(0..=1usize) };
            layers.push(LayerSpec::max_pool(kernel, stride));
        } else {
            channels = rng.random_range(2..=5usize);
            let kernel = stride.max(1) + rng.random_range(0..=2usize);
            layers.push(LayerSpec::conv(channels, kernel, stride, 0));
            layers.push(LayerSpec::relu());
        }
    }
    let spatial_net = NetworkSpec {
        version: super::spec::NETSPEC_VERSION,
        mode: NetworkMode::Sliding,
        input_size: 1,
        in_channels,
        num_labels: channels,
        layers: layers.clone(),
    };
    let rf = spatial_net.geometry()?.receptive_field;
    let fc_extent = rng.random_range(1..=2usize);
    let input_size = rf + (fc_extent - 1) * total_stride;

    if fc_layers == 2 {
        layers.push(LayerSpec::fully_connected(rng.random_range(3..=6usize)));
        layers.push(LayerSpec::relu());
    }
    layers.push(LayerSpec::fully_connected(labels));
    layers.push(LayerSpec::softmax());
    NetworkSpec::new(NetworkMode::Patch, input_size, in_channels, labels, layers)
}
