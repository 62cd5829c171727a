//! Dense 4-D `f32` tensors in (batch, channel, row, col) order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::invalid(format!(
                "tensor data has {} elements, shape {:?} needs {}",
                data.len(),
                shape,
                len
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite tensor value at {pos}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn rows(&self) -> usize {
        self.shape[2]
    }

    pub fn cols(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// Crops a `rows`×`cols` window whose top-left corner sits at
    /// (`y0`, `x0`); coordinates outside the tensor replicate the nearest edge.
    pub fn crop_replicate(&self, y0: isize, x0: isize, rows: usize, cols: usize) -> Tensor {
        let [n, c, h, w] = self.shape;
        let mut out = Tensor::zeros([n, c, rows, cols]);
        let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..rows {
                    let sy = clamp(y0 + y as isize, h);
                    let src = self.index(b, ch, sy, 0);
                    let dst = out.index(b, ch, y, 0);
                    for x in 0..cols {
                        let sx = clamp(x0 + x as isize, w);
                        out.data[dst + x] = self.data[src + sx];
                    }
                }
            }
        }
        out
    }

    /// Pads every spatial side by `pad` pixels with edge replication.
    pub fn pad_replicate(&self, pad: usize) -> Tensor {
        let p = pad as isize;
        self.crop_replicate(-p, -p, self.rows() + 2 * pad, self.cols() + 2 * pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        assert!(Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_vec([1, 1, 1, 1], vec![f32::NAN]).is_err());
    }

    #[test]
    fn pad_replicates_edges() {
        let t = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let p = t.pad_replicate(1);
        assert_eq!(p.shape(), [1, 1, 3, 4]);
        assert_eq!(p.data(), &[1., 1., 2., 2., 1., 1., 2., 2., 1., 1., 2., 2.]);
    }
}
