//! Clean-image generator: smooth gradients, random rectangles and disks,
//! band-limited value noise. Busy enough that restoration is non-trivial.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TapError};
use crate::tensor::Tensor;
use crate::util::rng_for;

/// Bilinearly upsampled random grid; band-limited by construction.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, grid: usize) -> Vec<f64> {
    let gh = grid + 1;
    let gw = grid + 1;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / h as f64 * grid as f64;
        let y0 = fy.floor() as usize;
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = x as f64 / w as f64 * grid as f64;
            let x0 = fx.floor() as usize;
            let tx = fx - x0 as f64;
            let v00 = lattice[y0 * gw + x0];
            let v01 = lattice[y0 * gw + x0 + 1];
            let v10 = lattice[(y0 + 1) * gw + x0];
            let v11 = lattice[(y0 + 1) * gw + x0 + 1];
            let top = v00 + (v01 - v00) * tx;
            let bot = v10 + (v11 - v10) * tx;
            out[y * w + x] = top + (bot - top) * ty;
        }
    }
    out
}

/// Deterministic procedural clean image in [0, 1], shape [H, W, 3].
pub fn gen_clean(seed: u64, height: usize, width: usize) -> Result<Tensor> {
    if height < 16 || width < 16 {
        return Err(TapError::config(
            "size",
            format!("clean images need height, width >= 16, got {height}x{width}"),
        ));
    }
    let mut rng = rng_for(seed, "clean");
    let (h, w) = (height, width);
    let mut img = vec![0.0f64; h * w * 3];

    // Smooth per-channel linear gradient base.
    for c in 0..3 {
        let gx = rng.gen_range(-0.4..0.4);
        let gy = rng.gen_range(-0.4..0.4);
        let bias = rng.gen_range(0.25..0.75);
        for y in 0..h {
            for x in 0..w {
                img[(y * w + x) * 3 + c] =
                    bias + gx * (x as f64 / w as f64 - 0.5) + gy * (y as f64 / h as f64 - 0.5);
            }
        }
    }

    // Random rectangles and disks, alpha-blended in draw order.
    let shapes = rng.gen_range(6..12);
    for _ in 0..shapes {
        let color = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let alpha = rng.gen_range(0.45..0.95);
        if rng.gen_bool(0.5) {
            let x0 = rng.gen_range(0..w);
            let y0 = rng.gen_range(0..h);
            let rw = rng.gen_range(w / 8..w / 2 + 1);
            let rh = rng.gen_range(h / 8..h / 2 + 1);
            for y in y0..(y0 + rh).min(h) {
                for x in x0..(x0 + rw).min(w) {
                    for c in 0..3 {
                        let px = &mut img[(y * w + x) * 3 + c];
                        *px = *px * (1.0 - alpha) + color[c] * alpha;
                    }
                }
            }
        } else {
            let cx = rng.gen_range(0.0..w as f64);
            let cy = rng.gen_range(0.0..h as f64);
            let r = rng.gen_range(w as f64 / 12.0..w as f64 / 4.0);
            let r2 = r * r;
            let y_lo = ((cy - r).floor().max(0.0)) as usize;
            let y_hi = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
            for y in y_lo..=y_hi {
                for x in 0..w {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    if dx * dx + dy * dy <= r2 {
                        for c in 0..3 {
                            let px = &mut img[(y * w + x) * 3 + c];
                            *px = *px * (1.0 - alpha) + color[c] * alpha;
                        }
                    }
                }
            }
        }
    }

    // Shared band-limited noise with per-channel gain.
    let noise = value_noise(&mut rng, h, w, 6);
    let gains = [
        rng.gen_range(0.05..0.15),
        rng.gen_range(0.05..0.15),
        rng.gen_range(0.05..0.15),
    ];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img[(y * w + x) * 3 + c] += gains[c] * noise[y * w + x];
            }
        }
    }

    for v in img.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::from_vec(img, &[h, w, 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_clean(1, 32, 32).unwrap();
        let b = gen_clean(1, 32, 32).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn different_seeds_differ_in_at_least_one_percent_of_pixels() {
        let a = gen_clean(1, 32, 32).unwrap();
        let b = gen_clean(2, 32, 32).unwrap();
        let differing = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| (*x - *y).abs() > 1e-12)
            .count();
        assert!(
            differing as f64 >= 0.01 * a.len() as f64,
            "only {differing} of {} values differ",
            a.len()
        );
    }

    #[test]
    fn range_clamped_over_many_seeds() {
        for seed in 0..100 {
            let img = gen_clean(seed, 16, 16).unwrap();
            for &v in img.data() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn degenerate_size_is_config_error() {
        assert!(matches!(
            gen_clean(1, 8, 32),
            Err(TapError::Config { .. })
        ));
    }
}
