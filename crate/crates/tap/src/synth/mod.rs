//! Procedural paired datasets: clean images plus parametric rain, snow,
//! haze and raindrop degradations with known ground truth.

mod clean;
mod dataset;
mod weather;

pub use clean::gen_clean;
pub use dataset::{build_dataset, load_png, save_png, Manifest, SampleRecord, MANIFEST_VERSION};
pub use weather::{apply_haze, apply_rain, apply_raindrop, apply_snow, degrade, make_t_map};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapError};
use crate::tensor::Tensor;

/// The four weather-removal tasks, in canonical index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Rain,
    Snow,
    Haze,
    Raindrop,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Rain, Task::Snow, Task::Haze, Task::Raindrop];

    pub fn index(self) -> usize {
        match self {
            Task::Rain => 0,
            Task::Snow => 1,
            Task::Haze => 2,
            Task::Raindrop => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Rain => "rain",
            Task::Snow => "snow",
            Task::Haze => "haze",
            Task::Raindrop => "raindrop",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Task-specific degradation parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeatherParams {
    Haze {
        t_min: f64,
        t_max: f64,
        airlight: [f64; 3],
    },
    Rain {
        streak_count: usize,
        angle_deg: f64,
        length_px: f64,
        intensity: f64,
    },
    Snow {
        flake_count: usize,
        radius_min: f64,
        radius_max: f64,
        opacity: f64,
    },
    Raindrop {
        drop_count: usize,
        radius_min: f64,
        radius_max: f64,
        blur_radius: usize,
        darkening: f64,
    },
}

impl WeatherParams {
    pub fn task(&self) -> Task {
        match self {
            WeatherParams::Haze { .. } => Task::Haze,
            WeatherParams::Rain { .. } => Task::Rain,
            WeatherParams::Snow { .. } => Task::Snow,
            WeatherParams::Raindrop { .. } => Task::Raindrop,
        }
    }

    /// Defaults sized for 64x64 desk-scale images.
    pub fn default_for(task: Task) -> WeatherParams {
        match task {
            Task::Haze => WeatherParams::Haze {
                t_min: 0.4,
                t_max: 0.9,
                airlight: [0.9, 0.9, 0.95],
            },
            Task::Rain => WeatherParams::Rain {
                streak_count: 50,
                angle_deg: 20.0,
                length_px: 12.0,
                intensity: 0.5,
            },
            Task::Snow => WeatherParams::Snow {
                flake_count: 60,
                radius_min: 0.8,
                radius_max: 2.2,
                opacity: 0.7,
            },
            Task::Raindrop => WeatherParams::Raindrop {
                drop_count: 10,
                radius_min: 2.5,
                radius_max: 5.5,
                blur_radius: 2,
                darkening: 0.3,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(TapError::config(field, format!("{v} must be in [0, 1]")));
            }
            Ok(())
        };
        match self {
            WeatherParams::Haze {
                t_min,
                t_max,
                airlight,
            } => {
                if *t_min <= 0.0 {
                    return Err(TapError::config("haze.t_min", "must satisfy 0 < t_min"));
                }
                if t_min > t_max || *t_max > 1.0 {
                    return Err(TapError::config(
                        "haze.t_max",
                        "must satisfy t_min <= t_max <= 1",
                    ));
                }
                for (i, a) in airlight.iter().enumerate() {
                    unit(&format!("haze.airlight[{i}]"), *a)?;
                }
            }
            WeatherParams::Rain {
                length_px,
                intensity,
                ..
            } => {
                if *length_px <= 0.0 {
                    return Err(TapError::config("rain.length_px", "must be positive"));
                }
                unit("rain.intensity", *intensity)?;
            }
            WeatherParams::Snow {
                radius_min,
                radius_max,
                opacity,
                ..
            } => {
                if !(*radius_min > 0.0 && radius_min <= radius_max) {
                    return Err(TapError::config(
                        "snow.radius_min",
                        "need 0 < radius_min <= radius_max",
                    ));
                }
                unit("snow.opacity", *opacity)?;
            }
            WeatherParams::Raindrop {
                radius_min,
                radius_max,
                darkening,
                ..
            } => {
                if !(*radius_min > 0.0 && radius_min <= radius_max) {
                    return Err(TapError::config(
                        "raindrop.radius_min",
                        "need 0 < radius_min <= radius_max",
                    ));
                }
                unit("raindrop.darkening", *darkening)?;
            }
        }
        Ok(())
    }
}

/// A fully seeded degradation instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub task: Task,
    pub seed: u64,
    pub params: WeatherParams,
}

impl DegradationSpec {
    pub fn new(seed: u64, params: WeatherParams) -> DegradationSpec {
        DegradationSpec {
            task: params.task(),
            seed,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.task != self.params.task() {
            return Err(TapError::config(
                "spec.task",
                format!(
                    "task {} does not match params for {}",
                    self.task,
                    self.params.task()
                ),
            ));
        }
        self.params.validate()
    }
}

/// Ground-truth degradation fields kept alongside synthetic pairs.
#[derive(Clone, Debug)]
pub enum Truth {
    /// Transmission map [H, W, 1] and global airlight.
    Haze { t_map: Tensor, airlight: [f64; 3] },
    /// Residual layer lq - hq before clamping, [H, W, 3].
    Residual { layer: Tensor },
}

/// One paired sample: degraded input, clean target, task and optional truth.
#[derive(Clone, Debug)]
pub struct DegradationSample {
    pub lq: Tensor,
    pub hq: Tensor,
    pub task: Task,
    pub truth: Option<Truth>,
}
