//! Parametric weather degradations applied to clean images.
//!
//! Haze follows the atmospheric scattering model lq = T.hq + (1-T).A, which
//! the restoration head can invert exactly given the true coefficients. Rain
//! draws oriented additive streaks, snow additive soft disks, and raindrops
//! locally blurred darkened disks, so snow and raindrop residuals stay
//! shape-similar while haze differs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{DegradationSample, DegradationSpec, Task, Truth, WeatherParams};
use crate::error::{Result, TapError};
use crate::tensor::Tensor;
use crate::util::rng_for;

fn dims(img: &Tensor) -> Result<(usize, usize)> {
    if img.rank() != 3 || img.shape()[2] != 3 {
        return Err(TapError::Shape {
            op: "weather",
            lhs: img.shape().to_vec(),
            rhs: vec![0, 0, 3],
        });
    }
    Ok((img.shape()[0], img.shape()[1]))
}

/// Smooth transmission field in [t_min, t_max], shape [H, W, 1].
pub fn make_t_map(
    rng: &mut ChaCha8Rng,
    height: usize,
    width: usize,
    t_min: f64,
    t_max: f64,
) -> Result<Tensor> {
    if t_min <= 0.0 || t_min > t_max || t_max > 1.0 {
        return Err(TapError::config(
            "haze.t_min",
            "need 0 < t_min <= t_max <= 1",
        ));
    }
    // Coarse random lattice, bilinear upsample, then min-max normalize into
    // the requested band (constant field when the lattice is degenerate).
    let grid = 4usize;
    let lattice: Vec<f64> = (0..(grid + 1) * (grid + 1))
        .map(|_| rng.gen::<f64>())
        .collect();
    let mut field = vec![0.0; height * width];
    for y in 0..height {
        let fy = y as f64 / height as f64 * grid as f64;
        let y0 = fy.floor() as usize;
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = x as f64 / width as f64 * grid as f64;
            let x0 = fx.floor() as usize;
            let tx = fx - x0 as f64;
            let gw = grid + 1;
            let v00 = lattice[y0 * gw + x0];
            let v01 = lattice[y0 * gw + x0 + 1];
            let v10 = lattice[(y0 + 1) * gw + x0];
            let v11 = lattice[(y0 + 1) * gw + x0 + 1];
            let top = v00 + (v01 - v00) * tx;
            let bot = v10 + (v11 - v10) * tx;
            field[y * width + x] = top + (bot - top) * ty;
        }
    }
    let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data: Vec<f64> = field
        .iter()
        .map(|&v| {
            let unit = if span > 0.0 { (v - lo) / span } else { 0.5 };
            t_min + unit * (t_max - t_min)
        })
        .collect();
    Tensor::from_vec(data, &[height, width, 1])
}

/// lq = T.hq + (1-T).A, clamped to [0, 1]. T must be in (0, 1] everywhere:
/// the reconstruction coefficients divide by T.
pub fn apply_haze(hq: &Tensor, t_map: &Tensor, airlight: [f64; 3]) -> Result<Tensor> {
    let (h, w) = dims(hq)?;
    if t_map.shape() != [h, w, 1] {
        return Err(TapError::Shape {
            op: "apply_haze",
            lhs: t_map.shape().to_vec(),
            rhs: vec![h, w, 1],
        });
    }
    if let Some(&bad) = t_map.data().iter().find(|&&t| t <= 0.0 || t > 1.0) {
        return Err(TapError::config(
            "haze.t_map",
            format!("transmission {bad} outside (0, 1]"),
        ));
    }
    let src = hq.data();
    let t = t_map.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..h * w {
        let tv = t[p];
        for c in 0..3 {
            let v = tv * src[p * 3 + c] + (1.0 - tv) * airlight[c];
            out[p * 3 + c] = v.clamp(0.0, 1.0);
        }
    }
    Tensor::from_vec(out, &[h, w, 3])
}

/// Oriented additive bright streaks. Returns (lq, residual layer).
///
/// `angle_deg` tilts the streak direction away from vertical, clockwise.
pub fn apply_rain(
    hq: &Tensor,
    streak_count: usize,
    angle_deg: f64,
    length_px: f64,
    intensity: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Tensor)> {
    let (h, w) = dims(hq)?;
    let mut layer = vec![0.0f64; h * w];
    let theta = angle_deg.to_radians();
    let (dir_x, dir_y) = (theta.sin(), theta.cos());
    let sigma = 0.6f64;
    for _ in 0..streak_count {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let gain = intensity * rng.gen_range(0.5..1.0);
        let steps = (length_px * 2.0).ceil() as usize;
        for s in 0..=steps {
            let t = s as f64 / steps.max(1) as f64 - 0.5;
            let px = cx + dir_x * t * length_px;
            let py = cy + dir_y * t * length_px;
            splat(&mut layer, h, w, px, py, gain, sigma);
        }
    }
    compose_additive(hq, &layer, h, w)
}

/// Additive soft disks. Returns (lq, residual layer).
pub fn apply_snow(
    hq: &Tensor,
    flake_count: usize,
    radius_min: f64,
    radius_max: f64,
    opacity: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Tensor)> {
    let (h, w) = dims(hq)?;
    let mut layer = vec![0.0f64; h * w];
    for _ in 0..flake_count {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let radius = rng.gen_range(radius_min..=radius_max);
        let gain = opacity * rng.gen_range(0.6..1.0);
        splat(&mut layer, h, w, cx, cy, gain, radius / 1.6);
    }
    compose_additive(hq, &layer, h, w)
}

/// Locally blurred, darkened disk regions with feathered edges; silhouettes
/// deliberately similar to snow flakes. Returns (lq, residual layer).
pub fn apply_raindrop(
    hq: &Tensor,
    drop_count: usize,
    radius_min: f64,
    radius_max: f64,
    blur_radius: usize,
    darkening: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Tensor)> {
    let (h, w) = dims(hq)?;
    let src = hq.data();
    let mut out = src.to_vec();
    if drop_count > 0 {
        let blurred = box_blur(src, h, w, blur_radius);
        for _ in 0..drop_count {
            let cx = rng.gen_range(0.0..w as f64);
            let cy = rng.gen_range(0.0..h as f64);
            let radius = rng.gen_range(radius_min..=radius_max);
            let y_lo = ((cy - radius - 1.0).floor().max(0.0)) as usize;
            let y_hi = ((cy + radius + 1.0).ceil().min(h as f64 - 1.0)) as usize;
            let x_lo = ((cx - radius - 1.0).floor().max(0.0)) as usize;
            let x_hi = ((cx + radius + 1.0).ceil().min(w as f64 - 1.0)) as usize;
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    // Feathered edge over one pixel.
                    let alpha = (radius + 0.5 - d).clamp(0.0, 1.0);
                    if alpha == 0.0 {
                        continue;
                    }
                    for c in 0..3 {
                        let i = (y * w + x) * 3 + c;
                        let drop_val = blurred[i] * (1.0 - darkening);
                        out[i] = out[i] * (1.0 - alpha) + drop_val * alpha;
                    }
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let lq = Tensor::from_vec(out, &[h, w, 3])?;
    let residual: Vec<f64> = lq.data().iter().zip(src).map(|(a, b)| a - b).collect();
    let layer = Tensor::from_vec(residual, &[h, w, 3])?;
    Ok((lq, layer))
}

/// Applies the spec's degradation to a clean image, recording ground truth.
pub fn degrade(hq: &Tensor, spec: &DegradationSpec) -> Result<DegradationSample> {
    spec.validate()?;
    let (h, w) = dims(hq)?;
    let mut rng = rng_for(spec.seed, &format!("weather/{}", spec.task));
    let (lq, truth) = match &spec.params {
        WeatherParams::Haze {
            t_min,
            t_max,
            airlight,
        } => {
            let t_map = make_t_map(&mut rng, h, w, *t_min, *t_max)?;
            let lq = apply_haze(hq, &t_map, *airlight)?;
            (
                lq,
                Truth::Haze {
                    t_map,
                    airlight: *airlight,
                },
            )
        }
        WeatherParams::Rain {
            streak_count,
            angle_deg,
            length_px,
            intensity,
        } => {
            let (lq, layer) =
                apply_rain(hq, *streak_count, *angle_deg, *length_px, *intensity, &mut rng)?;
            (lq, Truth::Residual { layer })
        }
        WeatherParams::Snow {
            flake_count,
            radius_min,
            radius_max,
            opacity,
        } => {
            let (lq, layer) = apply_snow(
                hq,
                *flake_count,
                *radius_min,
                *radius_max,
                *opacity,
                &mut rng,
            )?;
            (lq, Truth::Residual { layer })
        }
        WeatherParams::Raindrop {
            drop_count,
            radius_min,
            radius_max,
            blur_radius,
            darkening,
        } => {
            let (lq, layer) = apply_raindrop(
                hq,
                *drop_count,
                *radius_min,
                *radius_max,
                *blur_radius,
                *darkening,
                &mut rng,
            )?;
            (lq, Truth::Residual { layer })
        }
    };
    Ok(DegradationSample {
        lq,
        hq: hq.clone(),
        task: spec.task,
        truth: Some(truth),
    })
}

/// Gaussian splat into a single-channel accumulation layer.
fn splat(layer: &mut [f64], h: usize, w: usize, cx: f64, cy: f64, gain: f64, sigma: f64) {
    let reach = (3.0 * sigma).ceil();
    let y_lo = ((cy - reach).floor().max(0.0)) as usize;
    let y_hi = ((cy + reach).ceil().min(h as f64 - 1.0)) as usize;
    let x_lo = ((cx - reach).floor().max(0.0)) as usize;
    let x_hi = ((cx + reach).ceil().min(w as f64 - 1.0)) as usize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            layer[y * w + x] += gain * (-d2 * inv).exp();
        }
    }
}

/// lq = clamp(hq + white layer); residual reported pre-clamp consistent with
/// the clamped image.
fn compose_additive(hq: &Tensor, layer: &[f64], h: usize, w: usize) -> Result<(Tensor, Tensor)> {
    let src = hq.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..h * w {
        for c in 0..3 {
            out[p * 3 + c] = (src[p * 3 + c] + layer[p]).clamp(0.0, 1.0);
        }
    }
    let lq = Tensor::from_vec(out, &[h, w, 3])?;
    let residual: Vec<f64> = lq.data().iter().zip(src).map(|(a, b)| a - b).collect();
    Ok((lq, Tensor::from_vec(residual, &[h, w, 3])?))
}

/// Channel-wise box blur with the given radius, clamped at borders.
fn box_blur(src: &[f64], h: usize, w: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return src.to_vec();
    }
    let r = radius as isize;
    let mut tmp = vec![0.0; src.len()];
    // Horizontal pass.
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..3 {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    acc += src[((y * w as isize + xx) * 3) as usize + c];
                    n += 1.0;
                }
                tmp[((y * w as isize + x) * 3) as usize + c] = acc / n;
            }
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; src.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..3 {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -r..=r {
                    let yy = y + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    acc += tmp[((yy * w as isize + x) * 3) as usize + c];
                    n += 1.0;
                }
                out[((y * w as isize + x) * 3) as usize + c] = acc / n;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_clean;

    fn clean() -> Tensor {
        gen_clean(77, 32, 32).unwrap()
    }

    #[test]
    fn haze_with_unit_transmission_is_identity() {
        let hq = clean();
        let t = Tensor::full(&[32, 32, 1], 1.0);
        let lq = apply_haze(&hq, &t, [0.9, 0.9, 0.9]).unwrap();
        assert_eq!(lq.data(), hq.data());
    }

    #[test]
    fn haze_forced_midpoint() {
        let hq = Tensor::zeros(&[32, 32, 3]);
        let t = Tensor::full(&[32, 32, 1], 0.5);
        let lq = apply_haze(&hq, &t, [1.0, 1.0, 1.0]).unwrap();
        for &v in lq.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn haze_rejects_zero_transmission() {
        let hq = clean();
        let t = Tensor::zeros(&[32, 32, 1]);
        assert!(matches!(
            apply_haze(&hq, &t, [1.0; 3]),
            Err(TapError::Config { .. })
        ));
    }

    #[test]
    fn zero_counts_leave_image_untouched() {
        let hq = clean();
        let mut rng = rng_for(1, "t");
        let (lq, _) = apply_rain(&hq, 0, 20.0, 10.0, 1.0, &mut rng).unwrap();
        assert_eq!(lq.data(), hq.data());
        let (lq, _) = apply_snow(&hq, 0, 1.0, 2.0, 0.5, &mut rng).unwrap();
        assert_eq!(lq.data(), hq.data());
        let (lq, _) = apply_raindrop(&hq, 0, 2.0, 4.0, 2, 0.3, &mut rng).unwrap();
        assert_eq!(lq.data(), hq.data());
    }

    #[test]
    fn single_streak_lies_along_configured_angle() {
        // Dark image so the streak cannot clip against the [0,1] ceiling.
        let hq = Tensor::zeros(&[32, 32, 3]);
        let angle: f64 = 30.0;
        let mut rng = rng_for(5, "rain-angle");
        let (lq, _) = apply_rain(&hq, 1, angle, 14.0, 1.0, &mut rng).unwrap();
        let mut pts = Vec::new();
        for y in 0..32 {
            for x in 0..32 {
                if (lq.data()[(y * 32 + x) * 3] - hq.data()[(y * 32 + x) * 3]).abs() > 1e-3 {
                    pts.push((x as f64, y as f64));
                }
            }
        }
        assert!(!pts.is_empty(), "streak changed no pixels");
        // Principal direction of the changed pixels should match the streak
        // direction (sin a, cos a): project onto it and its perpendicular.
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let (dx, dy) = (angle.to_radians().sin(), angle.to_radians().cos());
        let mut along = 0.0;
        let mut across = 0.0;
        for (x, y) in &pts {
            let (ux, uy) = (x - mx, y - my);
            along += (ux * dx + uy * dy).powi(2);
            across += (ux * dy - uy * dx).powi(2);
        }
        assert!(
            along > 4.0 * across,
            "extent along streak {along:.2} vs across {across:.2}"
        );
    }

    #[test]
    fn degrade_is_deterministic_per_seed() {
        let hq = clean();
        let spec = DegradationSpec::new(9, WeatherParams::default_for(Task::Snow));
        let a = degrade(&hq, &spec).unwrap();
        let b = degrade(&hq, &spec).unwrap();
        assert_eq!(a.lq.data(), b.lq.data());
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let hq = clean();
        for task in Task::ALL {
            let spec = DegradationSpec::new(13, WeatherParams::default_for(task));
            let s = degrade(&hq, &spec).unwrap();
            for &v in s.lq.data() {
                assert!((0.0..=1.0).contains(&v), "{task}: {v}");
            }
        }
    }
}
