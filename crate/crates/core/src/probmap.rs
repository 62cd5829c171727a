//! Per-pixel label distributions on a regular grid.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | field                              |
//! |-------|------------------------------------|
//! | 8     | magic `b"MSPMAP\0\0"`              |
//! | 4     | version (`u32`, currently 1)       |
//! | 4     | rows (`u32`)                       |
//! | 4     | cols (`u32`)                       |
//! | 4     | labels (`u32`)                     |
//! | 16    | origin x, y (`f64`)                |
//! | 16    | spacing x, y (`f64`)               |
//! | 4·n   | values (`f32`), row-major, labels innermost |
//!
//! Cell (r, c) is centered at `origin + (c, r) * spacing` in source-image
//! continuous coordinates, where pixel `i` spans `[i, i + 1)`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::image::bilinear_at;

const MAGIC: &[u8; 8] = b"MSPMAP\0\0";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4 + 8 * 4;

/// Tolerance on per-cell sums accepted by [`ProbabilityMap::check_normalized`].
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    rows: usize,
    cols: usize,
    labels: usize,
    origin: [f64; 2],
    spacing: [f64; 2],
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(
        rows: usize,
        cols: usize,
        labels: usize,
        origin: [f64; 2],
        spacing: [f64; 2],
        values: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || labels == 0 {
            return Err(Error::invalid(format!(
                "degenerate probability map {rows}x{cols}x{labels}"
            )));
        }
        if values.len() != rows * cols * labels {
            return Err(Error::invalid(format!(
                "probability map payload has {} values, expected {}",
                values.len(),
                rows * cols * labels
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("non-positive grid spacing {spacing:?}")));
        }
        Ok(ProbabilityMap {
            rows,
            cols,
            labels,
            origin,
            spacing,
            values,
        })
    }

    /// A map whose cells are pixel centers of a `width`×`height` image.
    pub fn pixel_grid(width: usize, height: usize, labels: usize, values: Vec<f32>) -> Result<Self> {
        ProbabilityMap::new(height, width, labels, [0.5, 0.5], [1.0, 1.0], values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.cols + col) * self.labels;
        &self.values[i..i + self.labels]
    }

    pub fn same_grid(&self, other: &ProbabilityMap) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.labels == other.labels
            && self.origin == other.origin
            && self.spacing == other.spacing
    }

    /// Multiplies origin and spacing by per-axis factors, e.g. to move from a
    /// resized image's coordinates back to the original's.
    pub fn rescale_coordinates(&mut self, fx: f64, fy: f64) {
        self.origin = [self.origin[0] * fx, self.origin[1] * fy];
        self.spacing = [self.spacing[0] * fx, self.spacing[1] * fy];
    }

    pub fn check_normalized(&self) -> Result<()> {
        for (i, cell) in self.values.chunks_exact(self.labels).enumerate() {
            let sum: f64 = cell.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > NORM_TOLERANCE || cell.iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(format!(
                    "cell {i} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    /// Rescales every cell to sum to one.
    pub fn renormalize(&mut self) {
        for cell in self.values.chunks_exact_mut(self.labels) {
            let sum: f64 = cell.iter().map(|&v| v as f64).sum();
            if sum > 0.0 {
                for v in cell.iter_mut() {
                    *v = (*v as f64 / sum) as f32;
                }
            } else {
                cell.fill(1.0 / self.labels as f32);
            }
        }
    }

    /// Bilinearly resamples onto the pixel centers of a `width`×`height`
    /// image covering the same `extent_w`×`extent_h` source area.
    pub fn resample(&self, width: usize, height: usize, extent_w: f64, extent_h: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("zero-sized resample target {width}x{height}")));
        }
        let sx = extent_w / width as f64;
        let sy = extent_h / height as f64;
        let l = self.labels;
        let mut values = vec![0f32; width * height * l];
        for y in 0..height {
            let gy = ((y as f64 + 0.5) * sy - self.origin[1]) / self.spacing[1];
            for x in 0..width {
                let gx = ((x as f64 + 0.5) * sx - self.origin[0]) / self.spacing[0];
                let o = (y * width + x) * l;
                bilinear_at(&self.values, self.cols, self.rows, l, gx, gy, &mut values[o..o + l]);
            }
        }
        ProbabilityMap::new(height, width, l, [0.5 * sx, 0.5 * sy], [sx, sy], values)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        buf.extend_from_slice(MAGIC);
        for v in [VERSION, self.rows as u32, self.cols as u32, self.labels as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.origin.iter().chain(&self.spacing) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        if buf.len() < HEADER_LEN || &buf[..8] != MAGIC {
            return Err(Error::format("probability map", "bad magic or short header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::format("probability map", format!("unsupported version {version}")));
        }
        let (rows, cols, labels) = (u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize);
        let origin = [f64_at(24), f64_at(32)];
        let spacing = [f64_at(40), f64_at(48)];
        let payload = &buf[HEADER_LEN..];
        if payload.len() != 4 * rows * cols * labels {
            return Err(Error::format(
                "probability map",
                format!("payload is {} bytes, header implies {}", payload.len(), 4 * rows * cols * labels),
            ));
        }
        let values = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        ProbabilityMap::new(rows, cols, labels, origin, spacing, values)
    }

    /// Lossless text form: a header line, then one line per cell.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "pmap v{VERSION} rows={} cols={} labels={} origin={:?},{:?} spacing={:?},{:?}\n",
            self.rows, self.cols, self.labels, self.origin[0], self.origin[1], self.spacing[0], self.spacing[1]
        );
        for cell in self.values.chunks_exact(self.labels) {
            let line: Vec<String> = cell.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::format("probability map text", m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("pmap") || fields.next() != Some("v1") {
            return Err(bad("bad header"));
        }
        let mut get = |key: &str| -> Result<String> {
            let f = fields.next().ok_or_else(|| bad("truncated header"))?;
            f.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected {key}")))
        };
        let int = |s: String| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let pair = |s: String| -> Result<[f64; 2]> {
            let (a, b) = s.split_once(',').ok_or_else(|| bad("bad pair"))?;
            Ok([a.parse().map_err(|_| bad("bad real"))?, b.parse().map_err(|_| bad("bad real"))?])
        };
        let rows = int(get("rows")?)?;
        let cols = int(get("cols")?)?;
        let labels = int(get("labels")?)?;
        let origin = pair(get("origin")?)?;
        let spacing = pair(get("spacing")?)?;
        let values = lines
            .flat_map(str::split_whitespace)
            .map(|v| v.parse::<f32>().map_err(|_| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        ProbabilityMap::new(rows, cols, labels, origin, spacing, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_map() -> impl Strategy<Value = ProbabilityMap> {
        (1usize..5, 1usize..5, 1usize..4, -10f64..10.0, 0.1f64..40.0).prop_flat_map(
            |(r, c, l, o, s)| {
                proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), r * c * l)
                    .prop_map(move |v| ProbabilityMap::new(r, c, l, [o, -o], [s, s * 1.5], v).unwrap())
            },
        )
    }

    proptest! {
        #[test]
        fn binary_and_text_round_trip(map in arb_map()) {
            let mut buf = Vec::new();
            map.write_binary(&mut buf).unwrap();
            prop_assert_eq!(&ProbabilityMap::read_binary(&buf[..]).unwrap(), &map);
            prop_assert_eq!(&ProbabilityMap::from_text(&map.to_text()).unwrap(), &map);
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let map = ProbabilityMap::pixel_grid(2, 1, 2, vec![0.5; 4]).unwrap();
        let mut buf = Vec::new();
        map.write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(ProbabilityMap::read_binary(&buf[..]).is_err());
        assert!(ProbabilityMap::new(0, 1, 1, [0.0; 2], [1.0; 2], vec![]).is_err());
    }

    #[test]
    fn resample_onto_same_pixel_grid_is_identity() {
        let vals = vec![0.2, 0.8, 0.6, 0.4, 1.0, 0.0, 0.3, 0.7, 0.5, 0.5, 0.9, 0.1];
        let map = ProbabilityMap::pixel_grid(3, 2, 2, vals.clone()).unwrap();
        let out = map.resample(3, 2, 3.0, 2.0).unwrap();
        assert_eq!(out.values(), &vals[..]);
    }

    #[test]
    fn renormalize_fixes_sums() {
        let mut map = ProbabilityMap::pixel_grid(2, 1, 2, vec![2.0, 2.0, 0.0, 0.0]).unwrap();
        map.renormalize();
        assert_eq!(map.values(), &[0.5, 0.5, 0.5, 0.5]);
        map.check_normalized().unwrap();
    }
}
