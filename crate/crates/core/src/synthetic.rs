//! Synthetic image pairs with exact ground-truth flow.
//!
//! Textures are sums of random plane waves, defined everywhere in the plane,
//! so the second frame can be rendered analytically under the inverse motion
//! and the ground truth is exact by construction. Wave frequencies are kept
//! low enough that bilinear resampling of the discrete frames stays within a
//! few percent, which the warp-consistency oracle relies on.

use alloc::format;
use alloc::vec::Vec;

use crate::flow::{FlowField, FlowScale};
use crate::image::ImageTensor;
use crate::rng::Rng;
use crate::sample::FlowSample;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Motion family of the generated pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    /// Pure translations, bounded by [`MAX_TRANSLATION`] per axis.
    Translation,
    /// Near-identity affine maps (small rotation/scale/shear plus offset).
    Affine,
    /// Alternating translations and affines, with every eighth sample an
    /// exact identity pair.
    Mixed,
}

pub const MAX_TRANSLATION: f64 = 16.0;
const WAVES_PER_CHANNEL: usize = 8;

/// `y = A x + b` on pixel coordinates; flow(x) = A x + b - x.
#[derive(Debug, Clone, Copy)]
struct AffineMap {
    a: [[f64; 2]; 2],
    b: [f64; 2],
}

impl AffineMap {
    fn identity() -> Self {
        AffineMap {
            a: [[1.0, 0.0], [0.0, 1.0]],
            b: [0.0, 0.0],
        }
    }

    fn translation(tx: f64, ty: f64) -> Self {
        AffineMap {
            a: [[1.0, 0.0], [0.0, 1.0]],
            b: [tx, ty],
        }
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a[0][0] * x + self.a[0][1] * y + self.b[0],
            self.a[1][0] * x + self.a[1][1] * y + self.b[1],
        )
    }

    fn inverse(&self) -> Self {
        let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
        assert!(det.abs() > 1e-9, "degenerate affine map");
        let inv = [
            [self.a[1][1] / det, -self.a[0][1] / det],
            [-self.a[1][0] / det, self.a[0][0] / det],
        ];
        let bx = -(inv[0][0] * self.b[0] + inv[0][1] * self.b[1]);
        let by = -(inv[1][0] * self.b[0] + inv[1][1] * self.b[1]);
        AffineMap {
            a: inv,
            b: [bx, by],
        }
    }
}

/// A band-limited procedural texture: per channel, a sum of plane waves.
struct WaveTexture {
    // (kx, ky, phase, amplitude) per wave per channel
    waves: Vec<[(f64, f64, f64, f64); WAVES_PER_CHANNEL]>,
}

impl WaveTexture {
    fn random(rng: &mut Rng) -> Self {
        let waves = (0..3)
            .map(|_| {
                let mut ws = [(0.0, 0.0, 0.0, 0.0); WAVES_PER_CHANNEL];
                for w in &mut ws {
                    // Spatial frequency 0.02 .. 0.055 cycles/pixel.
                    let freq = rng.range(0.02, 0.055) * 2.0 * core::f64::consts::PI;
                    let theta = rng.range(0.0, 2.0 * core::f64::consts::PI);
                    *w = (
                        freq * libm::cos(theta),
                        freq * libm::sin(theta),
                        rng.range(0.0, 2.0 * core::f64::consts::PI),
                        rng.range(0.5, 1.0),
                    );
                }
                ws
            })
            .collect();
        WaveTexture { waves }
    }

    fn sample(&self, channel: usize, x: f64, y: f64) -> f64 {
        let ws = &self.waves[channel];
        let mut acc = 0.0;
        let mut amp = 0.0;
        for &(kx, ky, phase, a) in ws {
            acc += a * libm::sin(kx * x + ky * y + phase);
            amp += a;
        }
        // Normalized to a [-0.9, 0.9] envelope.
        0.9 * acc / amp
    }

    fn render<T: Scalar>(&self, h: usize, w: usize, map: &AffineMap) -> ImageTensor<T> {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = map.apply(x as f64, y as f64);
                for c in 0..3 {
                    data.push(T::from_f64(self.sample(c, sx, sy)));
                }
            }
        }
        ImageTensor::new(Tensor::from_vec(Shape::d3(h, w, 3), data))
    }
}

fn motion_for(rng: &mut Rng, motion: Motion, index: usize) -> AffineMap {
    let translation = |rng: &mut Rng| {
        AffineMap::translation(
            rng.range(-MAX_TRANSLATION, MAX_TRANSLATION),
            rng.range(-MAX_TRANSLATION, MAX_TRANSLATION),
        )
    };
    let affine = |rng: &mut Rng| AffineMap {
        a: [
            [1.0 + rng.range(-0.03, 0.03), rng.range(-0.03, 0.03)],
            [rng.range(-0.03, 0.03), 1.0 + rng.range(-0.03, 0.03)],
        ],
        b: [rng.range(-4.0, 4.0), rng.range(-4.0, 4.0)],
    };
    match motion {
        Motion::Translation => translation(rng),
        Motion::Affine => affine(rng),
        Motion::Mixed => {
            if index % 8 == 0 {
                // Keep the random stream aligned across variants.
                let _ = translation(rng);
                AffineMap::identity()
            } else if index % 2 == 0 {
                translation(rng)
            } else {
                affine(rng)
            }
        }
    }
}

/// Generates `count` pairs of `size x size` frames with exact ground truth.
/// `size` must be a multiple of 16.
pub fn generate_synthetic<T: Scalar>(
    seed: u64,
    count: usize,
    size: usize,
    motion: Motion,
) -> Vec<FlowSample<T>> {
    assert!(count >= 1, "count must be at least 1");
    assert!(size >= 32 && size % 16 == 0, "size must be a multiple of 16, at least 32");
    let mut rng = Rng::new(seed);
    let (h, w) = (size, size);
    (0..count)
        .map(|i| {
            let texture = WaveTexture::random(&mut rng);
            let map = motion_for(&mut rng, motion, i);
            let img1 = texture.render(h, w, &AffineMap::identity());
            let img2 = texture.render(h, w, &map.inverse());

            let mut flow = Vec::with_capacity(h * w * 2);
            let mut valid = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let (tx, ty) = map.apply(x as f64, y as f64);
                    flow.push(T::from_f64(tx - x as f64));
                    flow.push(T::from_f64(ty - y as f64));
                    let inside = tx >= 0.0 && tx <= (w - 1) as f64 && ty >= 0.0 && ty <= (h - 1) as f64;
                    valid.push(if inside { T::ONE } else { T::ZERO });
                }
            }
            FlowSample {
                img1,
                img2,
                gt_flow: FlowField::new(Tensor::from_vec(Shape::d3(h, w, 2), flow), FlowScale::Full),
                valid: Tensor::from_vec(Shape::d3(h, w, 1), valid),
                id: format!("syn-{i:04}"),
            }
        })
        .collect()
}
