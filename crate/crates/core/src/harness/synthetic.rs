//! Deterministic synthetic images for experiments and tests.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::imaging::{ImageGrid, LabelMap};

/// Smooth random color field: a base color, a few Gaussian color blobs, an
/// oriented sinusoidal texture and low-amplitude pixel noise.
pub fn textured_image(width: usize, height: usize, rng: &mut impl Rng) -> ImageGrid {
    let base: [f64; 3] = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(0.1..0.3) * width.max(height) as f64,
                [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
            )
        })
        .collect();
    let angle = rng.gen_range(0.0..PI);
    let freq = rng.gen_range(0.3..0.9);
    let (ca, sa) = (libm::cos(angle), libm::sin(angle));
    let noise: Vec<f64> = (0..width * height).map(|_| rng.gen_range(-0.03..0.03)).collect();
    ImageGrid::from_fn(width, height, 3, |x, y, px| {
        let (fx, fy) = (x as f64, y as f64);
        let wave = 0.08 * libm::sin(freq * (fx * ca + fy * sa));
        for c in 0..3 {
            let mut v = base[c] + wave;
            for &(bx, by, s, col) in &blobs {
                let d2 = (fx - bx) * (fx - bx) + (fy - by) * (fy - by);
                v += col[c] * libm::exp(-d2 / (2.0 * s * s));
            }
            px[c] = v + noise[y * width + x];
        }
    })
    .expect("finite values clamped to [0, 1]")
}

/// A labeled scene: an object disk (class 1) wrapped in a band (class 2) on a
/// textured background (class 0). Disk and band share one object color, the
/// band slightly darker and striped, so local appearance alone separates
/// them only weakly while their spatial arrangement is always the same.
pub struct Scene {
    pub image: ImageGrid,
    pub truth: LabelMap,
}

pub fn shape_scene(width: usize, height: usize, rng: &mut impl Rng) -> Scene {
    let background = textured_image(width, height, rng);
    let size = width.min(height) as f64;
    let cx = width as f64 * 0.5 + rng.gen_range(-0.08..0.08) * size;
    let cy = height as f64 * 0.5 + rng.gen_range(-0.08..0.08) * size;
    let r_inner = rng.gen_range(0.16..0.22) * size;
    let r_outer = r_inner + rng.gen_range(0.10..0.14) * size;
    let object: [f64; 3] = [rng.gen_range(0.3..0.9), rng.gen_range(0.3..0.9), rng.gen_range(0.3..0.9)];
    let noise: Vec<f64> = (0..width * height).map(|_| rng.gen_range(-0.06..0.06)).collect();
    let mut labels = Vec::with_capacity(width * height);
    let image = ImageGrid::from_fn(width, height, 3, |x, y, px| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let r = libm::sqrt(dx * dx + dy * dy);
        let n = noise[y * width + x];
        if r <= r_inner {
            labels.push(1);
            for c in 0..3 {
                px[c] = object[c] + n;
            }
        } else if r <= r_outer {
            labels.push(2);
            let sector = libm::floor((libm::atan2(dy, dx) + PI) * 6.0 / PI) as i64;
            let stripe = if sector % 2 == 0 { 0.04 } else { -0.04 };
            for c in 0..3 {
                px[c] = object[c] * 0.9 + stripe + n;
            }
        } else {
            labels.push(0);
            px.copy_from_slice(background.pixel(x, y));
        }
    })
    .expect("finite values clamped to [0, 1]");
    Scene {
        image,
        truth: LabelMap::new(width, height, labels).expect("one label per pixel"),
    }
}

/// Resamples `image` under the shear `x' = x + shear * (y - h/2)` with
/// nearest-neighbor lookup and edge clamping.
pub fn shear_image(image: &ImageGrid, shear: f64) -> ImageGrid {
    let (w, h) = (image.width(), image.height());
    ImageGrid::from_fn(w, h, image.channels(), |x, y, px| {
        let sx = x as f64 - shear * (y as f64 - h as f64 / 2.0);
        let sx = libm::round(sx).clamp(0.0, (w - 1) as f64) as usize;
        px.copy_from_slice(image.pixel(sx, y));
    })
    .expect("source values are valid")
}
