//! On-disk dataset layout and manifest.
//!
//! Layout: `<root>/<task>/{lq,hq}/<index>.png` plus `<root>/manifest.json`.
//! Pixels store as 8-bit PNG; in-memory values live in [0, 1] floats, so a
//! write/read round trip moves each channel by at most 1/255.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{degrade, gen_clean, DegradationSpec, Task, WeatherParams};
use crate::error::{Result, TapError};
use crate::tensor::Tensor;
use crate::util::derive_seed;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub task: Task,
    /// Paths relative to the manifest's directory.
    pub lq: String,
    pub hq: String,
    pub seed: u64,
    /// Ground-truth degradation parameters; full fields (e.g. the haze
    /// transmission map) regenerate deterministically from `seed`.
    pub truth: WeatherParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub tasks: Vec<Task>,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)
            .map_err(|e| TapError::io(path.display().to_string(), e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(TapError::Format {
                path: path.display().to_string(),
                message: format!(
                    "manifest version {} != supported {MANIFEST_VERSION}",
                    manifest.version
                ),
            });
        }
        Ok(manifest)
    }

    pub fn samples_for(&self, task: Task) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.task == task)
    }
}

/// Writes a [0,1] float image [H, W, 3] as 8-bit RGB PNG.
pub fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    if img.rank() != 3 || img.shape()[2] != 3 {
        return Err(TapError::Shape {
            op: "save_png",
            lhs: img.shape().to_vec(),
            rhs: vec![0, 0, 3],
        });
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buffer = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .expect("dimensions match buffer");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(TapError::from)
}

/// Loads an 8-bit RGB PNG into a [0,1] float tensor [H, W, 3].
pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data: Vec<f64> = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::from_vec(data, &[h as usize, w as usize, 3])
}

/// Builds a paired dataset with `per_task` samples for every configured
/// task. Deterministic per (`specs`, `seed`): rebuilding writes identical
/// bytes.
pub fn build_dataset(
    root: &Path,
    specs: &BTreeMap<Task, WeatherParams>,
    per_task: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Manifest> {
    for params in specs.values() {
        params.validate()?;
    }
    let mut samples = Vec::with_capacity(specs.len() * per_task);
    for (&task, params) in specs {
        let lq_dir = root.join(task.name()).join("lq");
        let hq_dir = root.join(task.name()).join("hq");
        fs::create_dir_all(&lq_dir).map_err(|e| TapError::io(lq_dir.display().to_string(), e))?;
        fs::create_dir_all(&hq_dir).map_err(|e| TapError::io(hq_dir.display().to_string(), e))?;
        for index in 0..per_task {
            let sample_seed = derive_seed(seed, &format!("{}/{}", task.name(), index));
            let hq = gen_clean(sample_seed, height, width)?;
            let spec = DegradationSpec::new(sample_seed, params.clone());
            let pair = degrade(&hq, &spec)?;
            let lq_rel = format!("{}/lq/{index:04}.png", task.name());
            let hq_rel = format!("{}/hq/{index:04}.png", task.name());
            save_png(&root.join(&lq_rel), &pair.lq)?;
            save_png(&root.join(&hq_rel), &pair.hq)?;
            samples.push(SampleRecord {
                task,
                lq: lq_rel,
                hq: hq_rel,
                seed: sample_seed,
                truth: params.clone(),
            });
        }
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        tasks: specs.keys().copied().collect(),
        samples,
    };
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| TapError::io(path.display().to_string(), e))?;
    Ok(manifest)
}

/// Resolves a manifest-relative path against the manifest's directory.
pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::sha256_file;

    fn default_specs() -> BTreeMap<Task, WeatherParams> {
        Task::ALL
            .iter()
            .map(|&t| (t, WeatherParams::default_for(t)))
            .collect()
    }

    #[test]
    fn builds_expected_counts_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_dataset(dir.path(), &default_specs(), 8, 16, 16, 3).unwrap();
        assert_eq!(manifest.samples.len(), 32);
        for task in Task::ALL {
            assert_eq!(manifest.samples_for(task).count(), 8);
        }
        for s in &manifest.samples {
            assert!(dir.path().join(&s.lq).exists());
            assert!(dir.path().join(&s.hq).exists());
        }
    }

    #[test]
    fn rebuild_produces_identical_manifest_hash() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(dir.path(), &default_specs(), 2, 16, 16, 3).unwrap();
        let first = sha256_file(&dir.path().join("manifest.json")).unwrap();
        let sample = sha256_file(&dir.path().join("rain/lq/0000.png")).unwrap();
        build_dataset(dir.path(), &default_specs(), 2, 16, 16, 3).unwrap();
        let second = sha256_file(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(first, second);
        assert_eq!(
            sample,
            sha256_file(&dir.path().join("rain/lq/0000.png")).unwrap()
        );
    }

    #[test]
    fn png_roundtrip_error_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let img = crate::synth::gen_clean(4, 16, 16).unwrap();
        let path = dir.path().join("img.png");
        save_png(&path, &img).unwrap();
        let back = load_png(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0, "{a} vs {b}");
        }
    }

    #[test]
    fn manifest_version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, r#"{"version":99,"tasks":[],"samples":[]}"#).unwrap();
        assert!(matches!(
            Manifest::load(&path),
            Err(TapError::Format { .. })
        ));
    }
}
