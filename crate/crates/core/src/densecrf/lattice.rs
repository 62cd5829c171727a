//! Permutohedral lattice Gaussian filtering (splat, blur, slice).
//!
//! Each feature vector is embedded in the hyperplane `x · 1 = 0` of
//! `R^{d+1}`, splatted onto the `d + 1` vertices of its enclosing simplex
//! with barycentric weights, blurred with `[1, 2, 1] / 4` along each of the
//! `d + 1` lattice directions, and read back with the same weights. The
//! scaling follows the usual construction so that the blur approximates a
//! unit-variance Gaussian in feature space.

use super::features::FEATURE_DIM;

const D: usize = FEATURE_DIM;
const D1: usize = D + 1;
const EMPTY: u32 = u32::MAX;

/// Open-addressing table from lattice keys to dense point indices.
struct KeyTable {
    keys: Vec<[i32; D]>,
    slots: Vec<u32>,
    mask: usize,
}

impl KeyTable {
    fn with_capacity(n: usize) -> Self {
        let cap = (2 * n.max(8)).next_power_of_two();
        KeyTable {
            keys: Vec::with_capacity(n),
            slots: vec![EMPTY; cap],
            mask: cap - 1,
        }
    }

    #[inline]
    fn hash(key: &[i32; D]) -> usize {
        let mut h: u64 = 0;
        for &k in key {
            h = h.wrapping_add(k as u32 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
        (h ^ (h >> 29)) as usize
    }

    fn grow(&mut self) {
        let cap = self.slots.len() * 2;
        self.slots = vec![EMPTY; cap];
        self.mask = cap - 1;
        for (i, key) in self.keys.iter().enumerate() {
            let mut s = Self::hash(key) & self.mask;
            while self.slots[s] != EMPTY {
                s = (s + 1) & self.mask;
            }
            self.slots[s] = i as u32;
        }
    }

    fn insert(&mut self, key: [i32; D]) -> u32 {
        if 2 * (self.keys.len() + 1) > self.slots.len() {
            self.grow();
        }
        let mut s = Self::hash(&key) & self.mask;
        loop {
            match self.slots[s] {
                EMPTY => {
                    let idx = self.keys.len() as u32;
                    self.keys.push(key);
                    self.slots[s] = idx;
                    return idx;
                }
                idx if self.keys[idx as usize] == key => return idx,
                _ => s = (s + 1) & self.mask,
            }
        }
    }

    fn find(&self, key: &[i32; D]) -> Option<u32> {
        let mut s = Self::hash(key) & self.mask;
        loop {
            match self.slots[s] {
                EMPTY => return None,
                idx if &self.keys[idx as usize] == key => return Some(idx),
                _ => s = (s + 1) & self.mask,
            }
        }
    }
}

/// Lattice built once for a fixed set of features and reused for every
/// filtering pass over them.
pub struct Lattice {
    n: usize,
    points: usize,
    offsets: Vec<u32>,
    weights: Vec<f64>,
    /// `neighbors[dir * points + p]`; missing neighbours point at the
    /// always-zero slot `points`.
    neighbors: Vec<[u32; 2]>,
}

impl Lattice {
    pub fn new(features: &[[f64; D]]) -> Self {
        let n = features.len();
        let inv_std = (2.0f64 / 3.0).sqrt() * D1 as f64;
        let scale: [f64; D] = std::array::from_fn(|i| inv_std / (((i + 1) * (i + 2)) as f64).sqrt());
        let d1 = D1 as i32;

        let mut table = KeyTable::with_capacity(n * D1 / 4 + 16);
        let mut offsets = Vec::with_capacity(n * D1);
        let mut weights = Vec::with_capacity(n * D1);
        for f in features {
            let mut elevated = [0f64; D1];
            let mut sm = 0.0;
            for j in (1..=D).rev() {
                let cf = f[j - 1] * scale[j - 1];
                elevated[j] = sm - j as f64 * cf;
                sm += cf;
            }
            elevated[0] = sm;

            // Nearest point with every coordinate a multiple of d + 1.
            let mut rem0 = [0i32; D1];
            let mut sum = 0i32;
            for k in 0..D1 {
                let v = elevated[k] / D1 as f64;
                let up = v.ceil() * D1 as f64;
                let down = v.floor() * D1 as f64;
                rem0[k] = if up - elevated[k] < elevated[k] - down { up } else { down } as i32;
                sum += rem0[k];
            }
            let sum = sum / d1;

            let mut rank = [0i32; D1];
            for a in 0..D {
                for b in a + 1..D1 {
                    if elevated[a] - (rem0[a] as f64) < elevated[b] - (rem0[b] as f64) {
                        rank[a] += 1;
                    } else {
                        rank[b] += 1;
                    }
                }
            }
            if sum > 0 {
                for k in 0..D1 {
                    if rank[k] >= d1 - sum {
                        rem0[k] -= d1;
                        rank[k] += sum - d1;
                    } else {
                        rank[k] += sum;
                    }
                }
            } else if sum < 0 {
                for k in 0..D1 {
                    if rank[k] < -sum {
                        rem0[k] += d1;
                        rank[k] += d1 + sum;
                    } else {
                        rank[k] += sum;
                    }
                }
            }

            let mut bary = [0f64; D1 + 1];
            for k in 0..D1 {
                let v = (elevated[k] - rem0[k] as f64) / D1 as f64;
                let r = rank[k] as usize;
                bary[D - r] += v;
                bary[D1 - r] -= v;
            }
            bary[0] += 1.0 + bary[D1];

            for (r, &b) in bary.iter().take(D1).enumerate() {
                let key: [i32; D] = std::array::from_fn(|k| {
                    let base = rem0[k] + r as i32;
                    if rank[k] > (D - r) as i32 {
                        base - d1
                    } else {
                        base
                    }
                });
                offsets.push(table.insert(key));
                weights.push(b);
            }
        }

        let points = table.keys.len();
        let mut neighbors = vec![[points as u32; 2]; D1 * points];
        for dir in 0..D1 {
            for (p, key) in table.keys.iter().enumerate() {
                let mut n1 = key.map(|k| k - 1);
                let mut n2 = key.map(|k| k + 1);
                if dir < D {
                    n1[dir] = key[dir] + D as i32;
                    n2[dir] = key[dir] - D as i32;
                }
                let slot = &mut neighbors[dir * points + p];
                if let Some(i) = table.find(&n1) {
                    slot[0] = i;
                }
                if let Some(i) = table.find(&n2) {
                    slot[1] = i;
                }
            }
        }

        Lattice {
            n,
            points,
            offsets,
            weights,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of occupied lattice vertices.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Ratio between the unit Gaussian's total mass and the feature-space
    /// volume owned by one lattice vertex. Multiplying a lattice response by
    /// it puts the output on the scale of the exact kernel sum.
    pub fn mass_scale() -> f64 {
        let d = D as f64;
        let inv_std = (2.0f64 / 3.0).sqrt() * (d + 1.0);
        let cell_volume = (d + 1.0).powf(d - 0.5) / inv_std.powf(d);
        (2.0 * std::f64::consts::PI).powf(d / 2.0) / cell_volume
    }

    /// Filters `channels`-wide per-point vectors. The output approximates
    /// `sum_j exp(-|f_i - f_j|^2 / 2) v_j`, self term included.
    pub fn filter(&self, values: &[f64], channels: usize) -> Vec<f64> {
        assert_eq!(values.len(), self.n * channels, "values do not match lattice size");
        let c = channels;
        let mut lat = vec![0f64; (self.points + 1) * c];
        for i in 0..self.n {
            let v = &values[i * c..(i + 1) * c];
            for r in 0..D1 {
                let o = self.offsets[i * D1 + r] as usize * c;
                let w = self.weights[i * D1 + r];
                for (dst, &src) in lat[o..o + c].iter_mut().zip(v) {
                    *dst += w * src;
                }
            }
        }

        let mut next = vec![0f64; lat.len()];
        for dir in 0..D1 {
            let nb = &self.neighbors[dir * self.points..(dir + 1) * self.points];
            for (p, &[a, b]) in nb.iter().enumerate() {
                let (a, b) = (a as usize * c, b as usize * c);
                let dst = &mut next[p * c..(p + 1) * c];
                for k in 0..c {
                    dst[k] = 0.5 * lat[p * c + k] + 0.25 * (lat[a + k] + lat[b + k]);
                }
            }
            std::mem::swap(&mut lat, &mut next);
        }

        let scale = Self::mass_scale();
        let mut out = vec![0f64; self.n * c];
        for i in 0..self.n {
            let dst = &mut out[i * c..(i + 1) * c];
            for r in 0..D1 {
                let o = self.offsets[i * D1 + r] as usize * c;
                let w = self.weights[i * D1 + r] * scale;
                for (d, &s) in dst.iter_mut().zip(&lat[o..o + c]) {
                    *d += w * s;
                }
            }
        }
        out
    }
}
