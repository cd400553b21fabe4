//! Flow visualization on the standard color wheel: hue from direction,
//! saturation from magnitude, zero flow white.

use alloc::vec::Vec;

use crate::flow::FlowField;
use crate::image::ImageTensor;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Renders a flow field as an RGB image in `[-1, 1]`. Saturation is
/// magnitude over `max_radius` (the maximum observed magnitude when `None`),
/// clamped at one.
pub fn flow_to_color<T: Scalar>(flow: &FlowField<T>, max_radius: Option<f64>) -> ImageTensor<T> {
    let (h, w) = (flow.height(), flow.width());
    let d = flow.tensor().data();
    let radius = max_radius.unwrap_or_else(|| {
        let mut m = 0.0f64;
        for p in 0..h * w {
            let u = d[p * 2].to_f64();
            let v = d[p * 2 + 1].to_f64();
            m = m.max(libm::sqrt(u * u + v * v));
        }
        m
    });
    let mut out = Vec::with_capacity(h * w * 3);
    for p in 0..h * w {
        let u = d[p * 2].to_f64();
        let v = d[p * 2 + 1].to_f64();
        let mag = libm::sqrt(u * u + v * v);
        let sat = if radius > 0.0 { (mag / radius).min(1.0) } else { 0.0 };
        let mut angle = libm::atan2(v, u);
        if angle < 0.0 {
            angle += 2.0 * core::f64::consts::PI;
        }
        let hue_deg = angle / (2.0 * core::f64::consts::PI) * 360.0;
        let (r, g, b) = hsv_to_rgb(hue_deg % 360.0, sat, 1.0);
        out.push(T::from_f64(2.0 * r - 1.0));
        out.push(T::from_f64(2.0 * g - 1.0));
        out.push(T::from_f64(2.0 * b - 1.0));
    }
    ImageTensor::new(Tensor::from_vec(Shape::d3(h, w, 3), out))
}

/// `h` in degrees `[0, 360)`, `s`/`v` in `[0, 1]`; returns RGB in `[0, 1]`.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - libm::fabs(hp % 2.0 - 1.0));
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}
