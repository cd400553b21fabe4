//! Dense displacement fields.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Resolution a flow field lives at. Flow values are always in pixels *at
/// that scale*; converting between scales multiplies both the grid and the
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowScale {
    Sixteenth,
    Eighth,
    Full,
}

impl FlowScale {
    /// Downsampling factor relative to full resolution.
    pub fn factor(self) -> usize {
        match self {
            FlowScale::Sixteenth => 16,
            FlowScale::Eighth => 8,
            FlowScale::Full => 1,
        }
    }
}

/// A `[h, w, 2]` map of `(u, v)` displacements in pixels at `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T: Scalar = f32> {
    data: Tensor<T>,
    scale: FlowScale,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(data: Tensor<T>, scale: FlowScale) -> Self {
        let s = data.shape();
        assert!(
            s.rank() == 3 && s.dim(2) == 2,
            "flow must be [h, w, 2], got {:?}",
            s
        );
        FlowField { data, scale }
    }

    pub fn zeros(h: usize, w: usize, scale: FlowScale) -> Self {
        Self::new(Tensor::zeros(Shape::d3(h, w, 2)), scale)
    }

    pub fn height(&self) -> usize {
        self.data.shape().dim(0)
    }

    pub fn width(&self) -> usize {
        self.data.shape().dim(1)
    }

    pub fn scale(&self) -> FlowScale {
        self.scale
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    /// `(u, v)` at a pixel.
    pub fn at(&self, y: usize, x: usize) -> (T, T) {
        let i = (y * self.width() + x) * 2;
        (self.data.data()[i], self.data.data()[i + 1])
    }

    /// Mean Euclidean magnitude over all pixels.
    pub fn mean_magnitude(&self) -> f64 {
        let d = self.data.data();
        let n = self.height() * self.width();
        let mut acc = 0.0;
        for p in 0..n {
            let u = d[p * 2].to_f64();
            let v = d[p * 2 + 1].to_f64();
            acc += libm::sqrt(u * u + v * v);
        }
        acc / n.max(1) as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.all_finite()
    }
}

/// Pixel-center coordinate grid: `grid[y, x] = (x, y)` at the map's scale.
pub fn coordinate_grid<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    let mut data = alloc::vec::Vec::with_capacity(h * w * 2);
    for y in 0..h {
        for x in 0..w {
            data.push(T::from_usize(x));
            data.push(T::from_usize(y));
        }
    }
    Tensor::from_vec(Shape::d3(h, w, 2), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_satisfies_unit_steps() {
        let g = coordinate_grid::<f32>(3, 4);
        let d = g.data();
        assert_eq!(&d[0..2], &[0.0, 0.0]);
        for y in 0..3 {
            for x in 0..3 {
                let i = (y * 4 + x) * 2;
                assert_eq!(d[i + 2] - d[i], 1.0);
                assert_eq!(d[i + 3] - d[i + 1], 0.0);
            }
        }
    }

    #[test]
    fn mean_magnitude_of_constant_field() {
        let f = FlowField::new(
            Tensor::from_vec(Shape::d3(2, 2, 2), alloc::vec![3.0f32, 4.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]),
            FlowScale::Full,
        );
        assert!((f.mean_magnitude() - 5.0).abs() < 1e-12);
    }
}
