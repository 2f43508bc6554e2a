//! Shared pipeline steps: materializing scenes, building priors, and
//! executing capture policies.

use fspd_core::container;
use fspd_core::decode::{decode_histogram, DecodeMethod};
use fspd_core::foveation::{
    capture_frame_with_plan, capture_full_frame, capture_limited_bins, flow_capture, plan_fovea,
    quantized_st_capture, superpixel_st_capture, FoveationPlan,
};
use fspd_core::frame::{DepthFrame, FlowField, Mask, ReflectanceFrame};
use fspd_core::histogram::BinGrid;
use fspd_core::photon::{capture_pixel, Sampler};
use fspd_core::prior::{
    calibrate_polynomial, synth_monocular, CalibrationFit, PriorFrame, Provenance,
};
use fspd_core::rng::{sample_without_replacement, PixelRng, StreamKind};
use fspd_core::scene::generate_scene;
use fspd_core::{MemoryReport, SensorConfig};

use crate::config::{CalibrationConfig, PolicyConfig, PriorConfig, SceneConfig};
use crate::error::{CliError, CliResult};

/// A materialized static scene.
pub struct Scene {
    pub depth: DepthFrame,
    pub reflectance: ReflectanceFrame,
}

pub fn build_scene(config: &SceneConfig, sensor: &SensorConfig) -> CliResult<Scene> {
    let (depth, reflectance) = match config {
        SceneConfig::Spec(spec) => generate_scene(spec)?,
        SceneConfig::Container { depth, reflectance } => {
            let d = container::load_depth(depth)?;
            let r = match reflectance {
                Some(path) => container::load_reflectance(path)?,
                None => ReflectanceFrame::filled(d.width, d.height, 1.0),
            };
            (d, r)
        }
        SceneConfig::Moving(_) => {
            return Err(CliError::Config(
                "moving scenes are only valid for the sequence command".into(),
            ))
        }
    };
    for (i, &d) in depth.depth_m.iter().enumerate() {
        if depth.valid[i] && !(0.0..=sensor.z_max_m).contains(&d) {
            return Err(CliError::Domain(format!(
                "scene depth {d} m at pixel {i} outside [0, {}]",
                sensor.z_max_m
            )));
        }
    }
    Ok(Scene { depth, reflectance })
}

/// Decodes full-resolution histograms at a sparse deterministic pixel set;
/// these play the role of the trusted sensor measurements a calibration
/// fits against.
pub fn sparse_full_res_samples(
    scene: &Scene,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    count: usize,
    frame_index: u32,
) -> CliResult<Vec<((usize, usize), f64)>> {
    let valid_pixels: Vec<usize> = (0..scene.depth.len())
        .filter(|&i| scene.depth.valid[i])
        .collect();
    if valid_pixels.is_empty() {
        return Err(CliError::Domain("no valid pixels to sample".into()));
    }
    let mut rng = PixelRng::for_stream(sensor.seed, StreamKind::CalibSampling, frame_index, 0);
    let picks = sample_without_replacement(&mut rng, valid_pixels.len(), count);
    let grid = BinGrid::full(sensor);
    let mut samples = Vec::with_capacity(picks.len());
    for k in picks {
        let i = valid_pixels[k];
        let (x, y) = (i % scene.depth.width, i / scene.depth.width);
        let mut rng = PixelRng::for_pixel(
            sensor.seed,
            StreamKind::Capture,
            frame_index,
            x as u32,
            y as u32,
        );
        let hist = capture_pixel(
            scene.depth.depth_m[i],
            scene.reflectance.albedo[i],
            sensor,
            grid,
            sampler,
            &mut rng,
        )?;
        if let Some(d) = decode_histogram(&hist, sensor, method)? {
            samples.push(((x, y), d));
        }
    }
    Ok(samples)
}

/// Prior construction outcome; the fit is present when a calibration ran so
/// sequence runs can reuse it globally.
pub struct BuiltPrior {
    pub prior: PriorFrame,
    pub fit: Option<CalibrationFit>,
}

pub fn build_prior(
    config: &PriorConfig,
    scene: &Scene,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
    reuse_fit: Option<&CalibrationFit>,
) -> CliResult<BuiltPrior> {
    match config {
        PriorConfig::GroundTruth => Ok(BuiltPrior {
            prior: PriorFrame::perfect(&scene.depth, sensor),
            fit: None,
        }),
        PriorConfig::Container { path } => {
            let frame = container::load_depth(path)?;
            Ok(BuiltPrior {
                prior: PriorFrame::new(frame, Provenance::External, sensor),
                fit: None,
            })
        }
        PriorConfig::Monocular {
            distortion,
            calibration,
        } => {
            let mut rng = PixelRng::for_stream(sensor.seed, StreamKind::PriorNoise, frame_index, 0);
            let raw = synth_monocular(&scene.depth, distortion, sensor, &mut rng);
            match (calibration, reuse_fit) {
                (Some(_), Some(fit)) => {
                    let prior = fspd_core::prior::apply_calibration(
                        &raw,
                        fit,
                        (0.0, sensor.z_max_m),
                        sensor,
                    );
                    Ok(BuiltPrior {
                        prior,
                        fit: Some(fit.clone()),
                    })
                }
                (Some(calib), None) => {
                    let (fit, prior) =
                        run_calibration(&raw, calib, scene, sensor, sampler, method, frame_index)?;
                    Ok(BuiltPrior {
                        prior,
                        fit: Some(fit),
                    })
                }
                (None, _) => Ok(BuiltPrior {
                    prior: raw,
                    fit: None,
                }),
            }
        }
    }
}

fn run_calibration(
    raw: &PriorFrame,
    calib: &CalibrationConfig,
    scene: &Scene,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> CliResult<(CalibrationFit, PriorFrame)> {
    let samples =
        sparse_full_res_samples(scene, sensor, sampler, method, calib.samples, frame_index)?;
    let (fit, prior) =
        calibrate_polynomial(raw, &samples, calib.degree, (0.0, sensor.z_max_m), sensor)?;
    Ok((fit, prior))
}

/// Fits the global calibration on one designated frame of a sequence; the
/// returned fit is then reused for every other frame.
pub fn global_calibration_fit(
    prior_config: &PriorConfig,
    scene: &Scene,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> CliResult<Option<CalibrationFit>> {
    let PriorConfig::Monocular {
        distortion,
        calibration: Some(calib),
    } = prior_config
    else {
        return Ok(None);
    };
    let mut rng = PixelRng::for_stream(sensor.seed, StreamKind::PriorNoise, frame_index, 0);
    let raw = synth_monocular(&scene.depth, distortion, sensor, &mut rng);
    let (fit, _) = run_calibration(&raw, calib, scene, sensor, sampler, method, frame_index)?;
    Ok(Some(fit))
}

/// Everything a policy run produces. Optional pieces depend on the policy.
pub struct PolicyOutcome {
    pub frame: DepthFrame,
    pub memory: MemoryReport,
    pub plan: Option<FoveationPlan>,
    pub error_mask: Option<Mask>,
    pub sparsity: Option<f64>,
    pub reduced_cost_fraction: Option<f64>,
}

/// Runs a single-frame policy. Flow is excluded here; it needs sequence
/// state and is driven by `run_flow_step`.
#[allow(clippy::too_many_arguments)]
pub fn run_policy(
    policy: &PolicyConfig,
    scene: &Scene,
    prior: &PriorFrame,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> CliResult<PolicyOutcome> {
    match policy {
        PolicyConfig::Full => {
            let (frame, memory) = capture_full_frame(
                &scene.depth,
                &scene.reflectance,
                sensor,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame,
                memory,
                plan: None,
                error_mask: None,
                sparsity: None,
                reduced_cost_fraction: None,
            })
        }
        PolicyConfig::Memory { fraction } => {
            let plan = plan_fovea(prior, *fraction, fspd_core::FoveaMode::Memory, 1, sensor)?;
            let (frame, memory) = capture_frame_with_plan(
                &scene.depth,
                &scene.reflectance,
                &plan,
                sensor,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame,
                memory,
                plan: Some(plan),
                error_mask: None,
                sparsity: None,
                reduced_cost_fraction: None,
            })
        }
        PolicyConfig::Depth { fraction, n_prime } => {
            let plan = plan_fovea(
                prior,
                *fraction,
                fspd_core::FoveaMode::Depth,
                *n_prime,
                sensor,
            )?;
            let (frame, memory) = capture_frame_with_plan(
                &scene.depth,
                &scene.reflectance,
                &plan,
                sensor,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame,
                memory,
                plan: Some(plan),
                error_mask: None,
                sparsity: None,
                reduced_cost_fraction: None,
            })
        }
        PolicyConfig::LimitedBins { n_prime } => {
            let (frame, memory) = capture_limited_bins(
                &scene.depth,
                &scene.reflectance,
                *n_prime,
                sensor,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame,
                memory,
                plan: None,
                error_mask: None,
                sparsity: None,
                reduced_cost_fraction: None,
            })
        }
        PolicyConfig::QuantizedSt {
            buckets,
            samples_per_bucket,
            fraction,
            mode,
            n_prime,
            aggregation,
        } => {
            let out = quantized_st_capture(
                &scene.depth,
                &scene.reflectance,
                prior,
                *buckets,
                *samples_per_bucket,
                *fraction,
                *mode,
                *n_prime,
                *aggregation,
                sensor,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame: out.frame,
                memory: out.memory,
                plan: None,
                error_mask: Some(out.sampled),
                sparsity: Some(out.sparsity),
                reduced_cost_fraction: None,
            })
        }
        PolicyConfig::SuperpixelSt {
            segments,
            fraction,
            compactness,
        } => {
            let out = superpixel_st_capture(
                &scene.depth,
                &scene.reflectance,
                sensor,
                *segments,
                *fraction,
                *compactness,
                sampler,
                method,
                frame_index,
            )?;
            Ok(PolicyOutcome {
                frame: out.frame,
                memory: out.memory,
                plan: None,
                error_mask: None,
                sparsity: None,
                reduced_cost_fraction: Some(out.reduced_cost_fraction),
            })
        }
        PolicyConfig::Flow { .. } => Err(CliError::Config(
            "the flow policy requires a moving scene; use the sequence command".into(),
        )),
    }
}

/// One temporal step of the flow policy.
#[allow(clippy::too_many_arguments)]
pub fn run_flow_step(
    scene: &Scene,
    prev_depth: &DepthFrame,
    flow: &FlowField,
    fraction: f64,
    floor_tau: f64,
    fallback: bool,
    sensor: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> CliResult<PolicyOutcome> {
    let out = flow_capture(
        &scene.depth,
        &scene.reflectance,
        prev_depth,
        flow,
        fraction,
        floor_tau,
        fallback,
        sensor,
        sampler,
        method,
        frame_index,
    )?;
    Ok(PolicyOutcome {
        frame: out.frame,
        memory: out.memory,
        plan: None,
        error_mask: Some(out.error_mask),
        sparsity: None,
        reduced_cost_fraction: None,
    })
}
