//! Run configuration: a JSON document with sensor, scene, prior, policy,
//! decode, and output sections. Unknown keys are rejected before any
//! compute starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use fspd_core::decode::DecodeMethod;
use fspd_core::foveation::{BucketAggregation, FoveaMode};
use fspd_core::photon::Sampler;
use fspd_core::prior::MonocularDistortion;
use fspd_core::scene::{MovingSceneSpec, SceneSpec};
use fspd_core::SensorConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorConfig,
    pub scene: Value,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_decode")]
    pub decode: DecodeMethod,
    #[serde(default)]
    pub output: OutputConfig,
    /// Optional master-seed override of sensor.seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sequence length; only read by the sequence command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<u32>,
}

fn default_sampler() -> Sampler {
    Sampler::Poisson
}

fn default_decode() -> DecodeMethod {
    DecodeMethod::Argmax
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Parsed form of the scene section.
#[derive(Debug, Clone)]
pub enum SceneConfig {
    Spec(SceneSpec),
    Container {
        depth: PathBuf,
        reflectance: Option<PathBuf>,
    },
    Moving(MovingSceneSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerSceneRaw {
    depth: PathBuf,
    #[serde(default)]
    reflectance: Option<PathBuf>,
}

impl RunConfig {
    pub fn effective_sensor(&self) -> SensorConfig {
        let mut sensor = self.sensor.clone();
        if let Some(seed) = self.seed {
            sensor.seed = seed;
        }
        sensor
    }

    /// Parses and validates the scene section.
    pub fn scene_config(&self) -> CliResult<SceneConfig> {
        let kind = self
            .scene
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::Config("scene.kind missing or not a string".into()))?;
        let mut stripped = self.scene.clone();
        match kind {
            "container" => {
                strip_kind(&mut stripped);
                let raw: ContainerSceneRaw = serde_json::from_value(stripped)
                    .map_err(|e| CliError::Config(format!("scene: {e}")))?;
                Ok(SceneConfig::Container {
                    depth: raw.depth,
                    reflectance: raw.reflectance,
                })
            }
            "moving_boxes" => {
                strip_kind(&mut stripped);
                let spec: MovingSceneSpec = serde_json::from_value(stripped)
                    .map_err(|e| CliError::Config(format!("scene: {e}")))?;
                Ok(SceneConfig::Moving(spec))
            }
            _ => {
                let spec: SceneSpec = serde_json::from_value(stripped)
                    .map_err(|e| CliError::Config(format!("scene: {e}")))?;
                Ok(SceneConfig::Spec(spec))
            }
        }
    }
}

fn strip_kind(v: &mut Value) {
    if let Some(obj) = v.as_object_mut() {
        obj.remove("kind");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Fit on the frame being processed.
    Local,
    /// Fit once on the first frame and reuse the fit on later frames.
    Global,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_calib_mode")]
    pub mode: CalibrationMode,
    /// Designated calibration frame for global mode (sequence runs).
    #[serde(default = "default_calib_frame")]
    pub frame: u32,
}

fn default_degree() -> usize {
    1
}

fn default_samples() -> usize {
    64
}

fn default_calib_mode() -> CalibrationMode {
    CalibrationMode::Local
}

fn default_calib_frame() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Perfect prior: the scene depth itself.
    #[default]
    GroundTruth,
    /// Synthetic monocular-style distortion of the ground truth, optionally
    /// re-scaled against sparse full-resolution captures.
    Monocular {
        #[serde(flatten)]
        distortion: MonocularDistortion,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration: Option<CalibrationConfig>,
    },
    /// Prior loaded from a depth container.
    Container { path: PathBuf },
}

fn default_fraction() -> f64 {
    0.25
}

fn default_quarter() -> f64 {
    0.25
}

fn default_tau() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

fn default_mode() -> FoveaMode {
    FoveaMode::Memory
}

fn default_n_prime() -> u32 {
    1
}

fn default_aggregation() -> BucketAggregation {
    BucketAggregation::Min
}

fn default_compactness() -> f64 {
    fspd_core::superpixel::DEFAULT_COMPACTNESS
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// Dense full-resolution capture.
    #[default]
    Full,
    /// Memory foveation: window of floor(fraction * N) full-width bins.
    Memory {
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
    /// Depth foveation: n_prime fine bins packed into the window.
    Depth {
        #[serde(default = "default_fraction")]
        fraction: f64,
        n_prime: u32,
    },
    /// Baseline with n_prime coarse bins over the whole range.
    LimitedBins { n_prime: u32 },
    /// Quantized spatio-temporal sampling over prior buckets.
    QuantizedSt {
        buckets: u32,
        samples_per_bucket: usize,
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default = "default_mode")]
        mode: FoveaMode,
        #[serde(default = "default_n_prime")]
        n_prime: u32,
        #[serde(default = "default_aggregation")]
        aggregation: BucketAggregation,
    },
    /// Superpixel spatio-temporal sampling over the pseudo-intensity image.
    SuperpixelSt {
        segments: u32,
        #[serde(default = "default_quarter")]
        fraction: f64,
        #[serde(default = "default_compactness")]
        compactness: f64,
    },
    /// Flow-driven capture with noise-floor fallback (sequences).
    Flow {
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default = "default_tau")]
        floor_tau: f64,
        #[serde(default = "default_true")]
        fallback: bool,
    },
}

/// Loads a run config, accepting either a bare config document or a
/// manifest produced by an earlier run (its embedded config is reused, so
/// re-running a manifest reproduces the outputs).
pub fn load_run_config(path: &Path) -> CliResult<RunConfig> {
    let value = read_json(path)?;
    let config_value = match embedded_config(&value) {
        Some(embedded) => embedded.clone(),
        None => value,
    };
    let config: RunConfig = serde_json::from_value(config_value)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config
        .effective_sensor()
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn embedded_config(value: &Value) -> Option<&Value> {
    if value.get("tool").and_then(Value::as_str) == Some("fspd") {
        value.get("config")
    } else {
        None
    }
}
