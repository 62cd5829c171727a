//! Layer parameters and their on-disk form.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic   8 bytes  b"MSWGHT\0\0"
//! version u32      1
//! count   u32      number of index entries
//! entry * count:
//!   layer  u32     layer index in the network spec
//!   kind   u32     0 = weights, 1 = bias
//!   offset u64     byte offset of the blob from the start of the file
//!   length u64     number of f32 values
//! payload          f32 values
//! ```
//!
//! Conv weights are stored `[out][in][ky][kx]`; fully connected weights are
//! `[out][in_channel][row][col]`, which is the same memory order a k×k
//! convolution over the whole input expects.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MSWGHT\0\0";
const VERSION: u32 = 1;
const ENTRY_LEN: usize = 24;

/// Default standard deviation of randomly initialised weights.
pub const RANDOM_SIGMA: f32 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    layers: BTreeMap<usize, LayerParams>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: usize, weights: Vec<f32>, bias: Vec<f32>) {
        self.layers.insert(layer, LayerParams { weights, bias });
    }

    pub fn get(&self, layer: usize) -> Option<&LayerParams> {
        self.layers.get(&layer)
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.layers.iter().map(|(&k, v)| (k, v))
    }

    pub fn param_count(&self) -> usize {
        self.layers.values().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// Seeded Gaussian weights and biases for every parameterised layer.
    pub fn random(net: &NetworkSpec, seed: u64, sigma: f32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, sigma)
            .map_err(|e| Error::invalid(format!("bad sigma {sigma}: {e}")))?;
        let mut store = WeightStore::new();
        for (layer, nw, nb) in net.param_shapes()? {
            let weights = (0..nw).map(|_| normal.sample(&mut rng)).collect();
            let bias = (0..nb).map(|_| normal.sample(&mut rng)).collect();
            store.insert(layer, weights, bias);
        }
        Ok(store)
    }

    /// Checks every parameterised layer has blobs of exactly the right size.
    pub fn check(&self, net: &NetworkSpec) -> Result<()> {
        for (layer, nw, nb) in net.param_shapes()? {
            let p = self
                .layers
                .get(&layer)
                .ok_or_else(|| Error::state(format!("missing weights for layer {layer}")))?;
            if p.weights.len() != nw || p.bias.len() != nb {
                return Err(Error::state(format!(
                    "layer {layer}: blobs are {}+{}, expected {nw}+{nb}",
                    p.weights.len(),
                    p.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let blobs: Vec<(u32, u32, &[f32])> = self
            .layers
            .iter()
            .flat_map(|(&l, p)| [(l as u32, 0, &p.weights[..]), (l as u32, 1, &p.bias[..])])
            .collect();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
        let mut offset = (MAGIC.len() + 8 + ENTRY_LEN * blobs.len()) as u64;
        for (layer, kind, data) in &blobs {
            buf.extend_from_slice(&layer.to_le_bytes());
            buf.extend_from_slice(&kind.to_le_bytes());
            buf.extend_from_slice(&offset.to_le_bytes());
            buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
            offset += 4 * data.len() as u64;
        }
        for (_, _, data) in &blobs {
            for v in data.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let bad = |m: String| Error::format("weight store", m);
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(bad("bad magic or short header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if u32_at(8) != VERSION {
            return Err(bad(format!("unsupported version {}", u32_at(8))));
        }
        let count = u32_at(12) as usize;
        if buf.len() < 16 + count * ENTRY_LEN {
            return Err(bad("truncated index".into()));
        }
        let mut pending: BTreeMap<usize, (Option<Vec<f32>>, Option<Vec<f32>>)> = BTreeMap::new();
        for e in 0..count {
            let base = 16 + e * ENTRY_LEN;
            let layer = u32_at(base) as usize;
            let kind = u32_at(base + 4);
            let offset = u64_at(base + 8) as usize;
            let len = u64_at(base + 16) as usize;
            let end = len
                .checked_mul(4)
                .and_then(|n| n.checked_add(offset))
                .filter(|&end| end <= buf.len())
                .ok_or_else(|| bad(format!("blob for layer {layer} runs past end of file")))?;
            let data: Vec<f32> = buf[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let slot = pending.entry(layer).or_default();
            match kind {
                0 => slot.0 = Some(data),
                1 => slot.1 = Some(data),
                k => return Err(bad(format!("unknown blob kind {k}"))),
            }
        }
        let mut store = WeightStore::new();
        for (layer, (w, b)) in pending {
            match (w, b) {
                (Some(w), Some(b)) => store.insert(layer, w, b),
                _ => return Err(bad(format!("layer {layer} lacks weights or bias"))),
            }
        }
        Ok(store)
    }
}
