use crate::ingest::Frame;
use crate::par::{self, Exec};

use super::LocalizerParams;

/// Interleaved float image, `channels` values per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> FloatImage {
        assert_eq!(data.len(), width * height * channels, "buffer size mismatch");
        FloatImage {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> FloatImage {
        FloatImage::new(width, height, channels, vec![value; width * height * channels])
    }

    /// RGB values scaled to `[0, 1]`.
    pub fn from_frame(frame: &Frame) -> FloatImage {
        let img = &frame.image;
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        FloatImage::new(img.width() as usize, img.height() as usize, 3, data)
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, v: f32) {
        self.data[(row * self.width + col) * self.channels + channel] = v;
    }
}

/// Normalized 1-D Gaussian taps. The 2-D kernel is their outer product.
pub fn gaussian_kernel_1d(size: usize, sigma: f32) -> Vec<f32> {
    let half = (size / 2) as i64;
    let sigma = sigma as f64;
    let raw: Vec<f64> = (-half..=half)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / sum) as f32).collect()
}

/// Reflect-101 index: `dcb|abcd|cba`.
fn reflect101(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn gaussian_blur(img: &FloatImage, params: &LocalizerParams) -> FloatImage {
    gaussian_blur_with(img, params, Exec::default())
}

/// Separable Gaussian blur with reflect-101 borders, clamped to `[0, 1]`.
pub fn gaussian_blur_with(img: &FloatImage, params: &LocalizerParams, exec: Exec) -> FloatImage {
    let kernel = gaussian_kernel_1d(params.blur_kernel, params.blur_sigma);
    let half = (kernel.len() / 2) as i64;
    let (w, h, ch) = (img.width, img.height, img.channels);
    if w == 0 || h == 0 {
        return img.clone();
    }
    let row_len = w * ch;

    let col_taps: Vec<Vec<usize>> = (0..w as i64)
        .map(|c| (-half..=half).map(|k| reflect101(c + k, w)).collect())
        .collect();
    let mut horiz = vec![0f32; img.data.len()];
    par::for_each_row(exec, &mut horiz, row_len, |r, out| {
        let src = &img.data[r * row_len..(r + 1) * row_len];
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0f32;
                for (tap, &sc) in kernel.iter().zip(&col_taps[c]) {
                    acc += tap * src[sc * ch + k];
                }
                out[c * ch + k] = acc;
            }
        }
    });

    let mut out = vec![0f32; img.data.len()];
    par::for_each_row(exec, &mut out, row_len, |r, dst| {
        let rows: Vec<usize> = (-half..=half).map(|k| reflect101(r as i64 + k, h)).collect();
        for (i, v) in dst.iter_mut().enumerate() {
            let mut acc = 0f32;
            for (tap, &sr) in kernel.iter().zip(&rows) {
                acc += tap * horiz[sr * row_len + i];
            }
            *v = acc.clamp(0.0, 1.0);
        }
    });
    FloatImage::new(w, h, ch, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Direct 2-D evaluation of exp(-(x^2 + y^2) / 8) on the 5x5 grid.
    fn kernel_2d_oracle() -> [[f64; 5]; 5] {
        let mut k = [[0f64; 5]; 5];
        let mut sum = 0.0;
        for (i, row) in k.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (x, y) = (i as f64 - 2.0, j as f64 - 2.0);
                *v = (-(x * x + y * y) / 8.0).exp();
                sum += *v;
            }
        }
        for row in k.iter_mut() {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        k
    }

    fn impulse(size: usize) -> FloatImage {
        let mut img = FloatImage::filled(size, size, 1, 0.0);
        img.set(size / 2, size / 2, 0, 1.0);
        img
    }

    #[test]
    fn constant_field_is_unchanged() {
        let img = FloatImage::filled(13, 9, 3, 0.37);
        let out = gaussian_blur(&img, &LocalizerParams::default());
        for v in out.data {
            assert_abs_diff_eq!(v, 0.37, epsilon = 1e-6);
        }
    }

    #[test]
    fn impulse_center_matches_kernel_center_weight() {
        let oracle = kernel_2d_oracle();
        // frozen from an independent evaluation: (1 / sum_x exp(-x^2 / 8))^2
        assert_abs_diff_eq!(oracle[2][2], 0.063_191_462, epsilon = 1e-8);
        let out = gaussian_blur(&impulse(11), &LocalizerParams::default());
        assert_abs_diff_eq!(out.get(5, 5, 0) as f64, oracle[2][2], epsilon = 1e-6);
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(out.get(3 + i, 3 + j, 0) as f64, oracle[i][j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn interior_impulse_conserves_mass() {
        let out = gaussian_blur(&impulse(11), &LocalizerParams::default());
        let total: f32 = out.data.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn reflect101_borders() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(-2, 1), 0);
        assert_eq!(reflect101(3, 2), 1);
    }

    #[test]
    fn tiny_images_do_not_panic() {
        let p = LocalizerParams::default();
        for (w, h) in [(1, 1), (2, 1), (1, 3), (2, 2)] {
            let img = FloatImage::filled(w, h, 3, 0.5);
            let out = gaussian_blur(&img, &p);
            assert_eq!(out.data.len(), w * h * 3);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let data: Vec<f32> = (0..40 * 30 * 3).map(|i| ((i * 7919) % 256) as f32 / 255.0).collect();
        let img = FloatImage::new(40, 30, 3, data);
        let p = LocalizerParams::default();
        assert_eq!(
            gaussian_blur_with(&img, &p, Exec::Sequential),
            gaussian_blur_with(&img, &p, Exec::Parallel)
        );
    }
}
