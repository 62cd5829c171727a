//! Per-pixel label indices, stored on disk as 8-bit grayscale PNG plus a
//! JSON sidecar naming the labels.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{write_png, ColorSpace, Image};

pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub version: u32,
    pub labels: Vec<String>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        Ok(LabelMap { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Number of 4-connected regions of equal label.
    pub fn connected_components(&self) -> usize {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut queue = VecDeque::new();
        let mut count = 0;
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            let label = self.labels[start];
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if !seen[j] && self.labels[j] == label {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
        }
        count
    }

    /// Nearest-neighbour resize, for comparing maps of different sizes.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<LabelMap> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("zero-sized label map"));
        }
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                labels.push(self.get(sx.min(self.width - 1), sy.min(self.height - 1)));
            }
        }
        LabelMap::new(width, height, labels)
    }

    /// Maps each label through `palette` into an sRGB image.
    pub fn render(&self, palette: &[[u8; 3]]) -> Result<Image> {
        if palette.is_empty() {
            return Err(Error::invalid("empty palette"));
        }
        let data = self
            .labels
            .iter()
            .flat_map(|&l| palette[l as usize % palette.len()].map(|v| v as f32))
            .collect();
        Image::new(self.width, self.height, 3, ColorSpace::SrgbU8, data)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data = self.labels.iter().map(|&l| l as f32).collect();
        write_png(path, &Image::new(self.width, self.height, 1, ColorSpace::SrgbU8, data)?)
    }

    pub fn read_png(path: &Path) -> Result<LabelMap> {
        let img = image::open(path)?;
        if img.color() != image::ColorType::L8 {
            return Err(Error::format("label map", format!("{} is not 8-bit grayscale", path.display())));
        }
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        LabelMap::new(w as usize, h as usize, gray.into_raw())
    }
}

pub fn write_sidecar(path: &Path, names: &[String]) -> Result<()> {
    let sidecar = LabelSidecar {
        version: SIDECAR_VERSION,
        labels: names.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_components() {
        #[rustfmt::skip]
        let m = LabelMap::new(4, 3, vec![
            0, 0, 1, 1,
            0, 2, 1, 0,
            0, 0, 0, 0,
        ]).unwrap();
        assert_eq!(m.connected_components(), 3);
        assert_eq!(LabelMap::new(2, 2, vec![3; 4]).unwrap().connected_components(), 1);
        // diagonal neighbours are separate
        assert_eq!(LabelMap::new(2, 2, vec![1, 0, 0, 1]).unwrap().connected_components(), 4);
    }

    #[test]
    fn png_round_trip() {
        let dir = std::env::temp_dir().join(format!("mincseg-lbl-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let m = LabelMap::new(3, 2, vec![0, 5, 22, 1, 1, 9]).unwrap();
        let path = dir.join("m.png");
        m.write_png(&path).unwrap();
        assert_eq!(LabelMap::read_png(&path).unwrap(), m);
        std::fs::remove_dir_all(&dir).ok();
    }
}
