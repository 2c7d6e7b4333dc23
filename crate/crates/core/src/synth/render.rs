use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SyntheticImage;

/// Adds `contrast * (1 - (d/radius)^2)^2` inside the disc of `radius`
/// around `(cx, cy)`, sampled at pixel centers.
pub fn render_blob(image: &mut SyntheticImage, cx: f64, cy: f64, radius: f64, contrast: f64) {
    for y in 0..image.height {
        let dy = y as f64 + 0.5 - cy;
        if dy.abs() >= radius {
            continue;
        }
        for x in 0..image.width {
            let dx = x as f64 + 0.5 - cx;
            let t = (dx * dx + dy * dy) / (radius * radius);
            if t < 1.0 {
                image.pixels[y * image.width + x] += contrast * (1.0 - t) * (1.0 - t);
            }
        }
    }
}

/// Zero-mean Gaussian noise smoothed by a Gaussian kernel of width
/// `correlation` pixels, rescaled so each pixel has std `sigma`.
///
/// Noise is drawn on a padded canvas so borders see full kernels.
pub fn smoothed_noise<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    sigma: f64,
    correlation: f64,
) -> SyntheticImage {
    let kernel = gaussian_kernel(correlation);
    let pad = kernel.len() / 2;
    let (pw, ph) = (width + 2 * pad, height + 2 * pad);
    let raw: Vec<f64> = (0..pw * ph).map(|_| StandardNormal.sample(rng)).collect();

    // Horizontal pass on every padded row, valid columns only.
    let mut tmp = vec![0.0; width * ph];
    for y in 0..ph {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * raw[y * pw + x + k])
                .sum();
        }
    }
    // The std of a separable normalized kernel applied to unit white noise
    // is the product of the 1D norms.
    let norm: f64 = kernel.iter().map(|w| w * w).sum::<f64>();
    let scale = sigma / norm;
    let mut image = SyntheticImage::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[(y + k) * width + x])
                .sum();
            image.pixels[y * width + x] = v * scale;
        }
    }
    image
}

/// Normalized 1D kernel with radius `ceil(3 * s)`; `s = 0` is the identity.
fn gaussian_kernel(s: f64) -> Vec<f64> {
    if s <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * s).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * s * s)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}
