use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETSPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    MaxPool,
    #[serde(rename = "relu")]
    ReLU,
    FullyConnected,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default = "one")]
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default)]
    pub out_channels: usize,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            stride,
            pad,
            out_channels,
        }
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel,
            stride,
            pad: 0,
            out_channels: 0,
        }
    }

    pub fn relu() -> Self {
        LayerSpec {
            kind: LayerKind::ReLU,
            kernel: 1,
            stride: 1,
            pad: 0,
            out_channels: 0,
        }
    }

    pub fn fully_connected(out_channels: usize) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected,
            kernel: 1,
            stride: 1,
            pad: 0,
            out_channels,
        }
    }

    pub fn softmax() -> Self {
        LayerSpec {
            kind: LayerKind::Softmax,
            kernel: 1,
            stride: 1,
            pad: 0,
            out_channels: 0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::FullyConnected)
    }

    fn is_spatial(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::MaxPool)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    /// Classifies one `input_size`² patch.
    Patch,
    /// Fully convolutional; accepts any input at least as large as the
    /// receptive field.
    Sliding,
}

/// Spatial bookkeeping for a fully convolutional view of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlidingGeometry {
    /// Input pixels that influence one output cell along each axis.
    pub receptive_field: usize,
    /// Input pixels between adjacent output cells.
    pub total_stride: usize,
    /// How far left/up of `cell * total_stride` the window of a cell starts,
    /// caused by zero padding inside the network.
    pub input_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub version: u32,
    pub mode: NetworkMode,
    /// Side of the square training patch.
    pub input_size: usize,
    #[serde(default = "three")]
    pub in_channels: usize,
    pub num_labels: usize,
    pub layers: Vec<LayerSpec>,
}

fn three() -> usize {
    3
}

impl NetworkSpec {
    pub fn new(
        mode: NetworkMode,
        input_size: usize,
        in_channels: usize,
        num_labels: usize,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let net = NetworkSpec {
            version: NETSPEC_VERSION,
            mode,
            input_size,
            in_channels,
            num_labels,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkSpec = serde_json::from_str(text)?;
        if net.version != NETSPEC_VERSION {
            return Err(Error::format(
                "network spec",
                format!("unsupported version {}", net.version),
            ));
        }
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.in_channels == 0 || self.num_labels == 0 {
            return Err(Error::invalid("input size, channels and labels must be positive"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.stride == 0 || l.kernel == 0 {
                return Err(Error::invalid(format!("layer {i}: stride and kernel must be >= 1")));
            }
            if l.has_params() && l.out_channels == 0 {
                return Err(Error::invalid(format!("layer {i}: out_channels must be >= 1")));
            }
        }
        match self.mode {
            NetworkMode::Patch => {
                if self.layers.last().map(|l| l.kind) != Some(LayerKind::Softmax) {
                    return Err(Error::invalid("patch networks must end in a softmax layer"));
                }
                let out = self.output_shape(self.input_size, self.input_size)?;
                if out != [self.num_labels, 1, 1] {
                    return Err(Error::invalid(format!(
                        "patch network produces {out:?}, expected [{}, 1, 1]",
                        self.num_labels
                    )));
                }
            }
            NetworkMode::Sliding => {
                if self.layers.iter().any(|l| l.kind == LayerKind::FullyConnected) {
                    return Err(Error::invalid("sliding networks cannot hold fully connected layers"));
                }
                let rf = self.geometry()?.receptive_field;
                let out = self.output_shape(rf, rf)?;
                if out[0] != self.num_labels {
                    return Err(Error::invalid(format!(
                        "sliding network emits {} channels, expected {}",
                        out[0], self.num_labels
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-layer output shapes `[channels, rows, cols]` for an input of the
    /// given size.
    pub fn layer_shapes(&self, rows: usize, cols: usize) -> Result<Vec<[usize; 3]>> {
        let mut shape = [self.in_channels, rows, cols];
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            shape = match l.kind {
                LayerKind::Conv | LayerKind::MaxPool => {
                    let out = |n: usize| -> Result<usize> {
                        let padded = n + 2 * l.pad;
                        if padded < l.kernel {
                            return Err(Error::invalid(format!(
                                "layer {i}: input extent {n} smaller than kernel {}",
                                l.kernel
                            )));
                        }
                        Ok((padded - l.kernel) / l.stride + 1)
                    };
                    let ch = if l.kind == LayerKind::Conv { l.out_channels } else { shape[0] };
                    [ch, out(shape[1])?, out(shape[2])?]
                }
                LayerKind::FullyConnected => [l.out_channels, 1, 1],
                LayerKind::ReLU | LayerKind::Softmax => shape,
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self, rows: usize, cols: usize) -> Result<[usize; 3]> {
        Ok(self
            .layer_shapes(rows, cols)?
            .last()
            .copied()
            .unwrap_or([self.in_channels, rows, cols]))
    }

    /// Shape `[channels, rows, cols]` entering each layer of the patch network.
    pub fn input_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = vec![[self.in_channels, self.input_size, self.input_size]];
        let outs = self.layer_shapes(self.input_size, self.input_size)?;
        shapes.extend_from_slice(&outs[..outs.len().saturating_sub(1)]);
        Ok(shapes)
    }

    /// Receptive field, stride and padding offset of the fully convolutional
    /// form of this network. Fully connected layers count as convolutions
    /// spanning their whole input.
    pub fn geometry(&self) -> Result<SlidingGeometry> {
        let fc_extent = if self.layers.iter().any(|l| l.kind == LayerKind::FullyConnected) {
            Some(self.input_shapes()?)
        } else {
            None
        };
        let mut rf = 1;
        let mut jump = 1;
        let mut offset = 0;
        for (i, l) in self.layers.iter().enumerate() {
            let (kernel, stride, pad) = if l.is_spatial() {
                (l.kernel, l.stride, l.pad)
            } else if l.kind == LayerKind::FullyConnected {
                let [_, h, w] = fc_extent.as_ref().expect("computed above")[i];
                if h != w {
                    return Err(Error::state(format!("layer {i}: non-square input {h}x{w} to FC")));
                }
                (h, 1, 0)
            } else {
                continue;
            };
            rf += (kernel - 1) * jump;
            offset += pad * jump;
            jump *= stride;
        }
        Ok(SlidingGeometry {
            receptive_field: rf,
            total_stride: jump,
            input_offset: offset,
        })
    }

    /// Expected (weight, bias) lengths for each parameterised layer.
    pub fn param_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let inputs = match self.mode {
            NetworkMode::Patch => self.input_shapes()?,
            NetworkMode::Sliding => {
                let rf = self.geometry()?.receptive_field;
                let mut v = vec![[self.in_channels, rf, rf]];
                let outs = self.layer_shapes(rf, rf)?;
                v.extend_from_slice(&outs[..outs.len().saturating_sub(1)]);
                v
            }
        };
        Ok(self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, l)| {
                let [c, h, w] = inputs[i];
                let fan_in = match l.kind {
                    LayerKind::Conv => c * l.kernel * l.kernel,
                    _ => c * h * w,
                };
                (i, l.out_channels * fan_in, l.out_channels)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NetworkSpec {
        NetworkSpec::new(
            NetworkMode::Patch,
            12,
            3,
            4,
            vec![
                LayerSpec::conv(5, 3, 1, 0),
                LayerSpec::relu(),
                LayerSpec::max_pool(2, 2),
                LayerSpec::fully_connected(6),
                LayerSpec::relu(),
                LayerSpec::fully_connected(4),
                LayerSpec::softmax(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn geometry_counts_fc_as_full_conv() {
        let g = toy().geometry().unwrap();
        // conv3 -> rf 3, pool2/2 -> rf 4 jump 2, FC over 5x5 -> rf 4 + 4*2 = 12
        assert_eq!(g.receptive_field, 12);
        assert_eq!(g.total_stride, 2);
        assert_eq!(g.input_offset, 0);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let net = toy();
        assert_eq!(NetworkSpec::from_json(&net.to_json()).unwrap(), net);
        let bumped = net.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(NetworkSpec::from_json(&bumped).is_err());
    }

    #[test]
    fn patch_net_must_end_in_softmax_over_labels() {
        let mut layers = toy().layers;
        layers.pop();
        assert!(NetworkSpec::new(NetworkMode::Patch, 12, 3, 4, layers.clone()).is_err());
        layers.push(LayerSpec::softmax());
        assert!(NetworkSpec::new(NetworkMode::Patch, 12, 3, 5, layers).is_err());
    }

    #[test]
    fn param_shapes_match_layers() {
        let shapes = toy().param_shapes().unwrap();
        assert_eq!(shapes, vec![(0, 5 * 3 * 9, 5), (3, 6 * 5 * 25, 6), (5, 4 * 6, 4)]);
    }
}
