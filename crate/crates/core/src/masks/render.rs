//! Composite visualisation of a mask stack: every pixel takes the colour of
//! its argmax slot.

use image::{Rgb, RgbImage};

use crate::numerics::Tensor;

pub const SLOT_PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [70, 240, 240],
    [245, 130, 48],
    [240, 50, 230],
];

/// Renders an `N×H×W` stack. Ties go to the lower slot; slots beyond the
/// palette wrap around.
pub fn render_composite(masks: &Tensor<f32>) -> RgbImage {
    let (n, h, w) = (masks.dim(0), masks.dim(1), masks.dim(2));
    let hw = h * w;
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let q = y as usize * w + x as usize;
        let mut best = 0;
        for k in 1..n {
            if masks.data()[k * hw + q] > masks.data()[best * hw + q] {
                best = k;
            }
        }
        Rgb(SLOT_PALETTE[best % SLOT_PALETTE.len()])
    })
}
