//! Subcommand implementations. Every command writes its outputs plus a
//! manifest with the resolved config and output checksums.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use fspd_core::analysis::{
    p_detect, p_worst, sbr, snr, stationary_points, SbrModel, SbrRegime, SnrModel, SnrRegime,
    WorstCaseParams,
};
use fspd_core::container;
use fspd_core::frame::Mask;
use fspd_core::metrics::{evaluate, report_csv, MemoryReport, MetricsReport};
use fspd_core::photon::capture_full_cube;
use fspd_core::rng::StreamKind;
use fspd_core::scene::generate_moving_sequence;
use fspd_core::sweep::{run_sweep, SweepSpec};
use fspd_core::FoveationPlan;

use crate::config::{load_run_config, PolicyConfig, PriorConfig, RunConfig, SceneConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;
use crate::pipeline::{build_prior, build_scene, run_flow_step, run_policy, Scene};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(PathBuf::from(name))
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(PathBuf::from(name))
}

fn config_value(config: &RunConfig) -> CliResult<Value> {
    serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))
}

/// Serialized plan: the fallback mask as an FSPD mask container plus a JSON
/// sidecar with the window parameters and per-pixel start bins.
fn write_plan(dir: &Path, plan: &FoveationPlan) -> CliResult<Vec<PathBuf>> {
    let mask = Mask::from_parts(plan.width, plan.height, plan.fallback.clone())?;
    let mask_rel = PathBuf::from("plan.fspd");
    container::save_mask(&dir.join(&mask_rel), &mask)?;
    let sidecar = json!({
        "mode": plan.mode,
        "m_bins": plan.m_bins,
        "n_prime": plan.n_prime,
        "start_bins": plan.start_bin,
    });
    let json_rel = write_json(dir, "plan.json", &sidecar)?;
    Ok(vec![mask_rel, json_rel])
}

pub fn cmd_simulate(config_path: &Path, out_override: Option<&Path>) -> CliResult<()> {
    let config = load_run_config(config_path)?;
    let sensor = config.effective_sensor();
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.dir.clone());
    ensure_dir(&dir)?;
    let scene = build_scene(&config.scene_config()?, &sensor)?;

    let cube = capture_full_cube(
        &scene.depth,
        &scene.reflectance,
        &sensor,
        0,
        config.sampler,
        StreamKind::Capture,
    )?;
    container::save_cube(&dir.join("cube.fspd"), &cube, &sensor)?;
    container::save_depth(&dir.join("gt_depth.fspd"), &scene.depth)?;
    container::save_reflectance(&dir.join("gt_reflectance.fspd"), &scene.reflectance)?;
    sensor.save_json(&dir.join("sensor.json"))?;
    let outputs: Vec<PathBuf> = [
        "cube.fspd",
        "cube.json",
        "gt_depth.fspd",
        "gt_reflectance.fspd",
        "sensor.json",
    ]
    .iter()
    .map(PathBuf::from)
    .collect();

    write_manifest(&dir, "simulate", &config_value(&config)?, &outputs)?;
    println!(
        "simulate: wrote {} outputs to {}",
        outputs.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FoveateSummary {
    metrics: MetricsReport,
    memory: MemoryReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reduced_cost_fraction: Option<f64>,
}

pub struct FoveateOverrides {
    pub fraction: Option<f64>,
    pub mode: Option<String>,
    pub n_prime: Option<u32>,
    pub buckets: Option<u32>,
    pub samples_per_bucket: Option<usize>,
    pub segments: Option<u32>,
    pub floor_tau: Option<f64>,
}

impl FoveateOverrides {
    fn apply(&self, policy: &mut PolicyConfig) -> CliResult<()> {
        if let Some(f) = self.fraction {
            match policy {
                PolicyConfig::Memory { fraction }
                | PolicyConfig::Depth { fraction, .. }
                | PolicyConfig::QuantizedSt { fraction, .. }
                | PolicyConfig::SuperpixelSt { fraction, .. }
                | PolicyConfig::Flow { fraction, .. } => *fraction = f,
                _ => {
                    return Err(CliError::Config(
                        "--fraction does not apply to this policy".into(),
                    ))
                }
            }
        }
        if let Some(mode) = &self.mode {
            let parsed = match mode.as_str() {
                "memory" => fspd_core::FoveaMode::Memory,
                "depth" => fspd_core::FoveaMode::Depth,
                other => return Err(CliError::Config(format!("unknown mode {other}"))),
            };
            match policy {
                PolicyConfig::QuantizedSt { mode, .. } => *mode = parsed,
                PolicyConfig::Memory { fraction } if parsed == fspd_core::FoveaMode::Depth => {
                    let f = *fraction;
                    let n_prime = self
                        .n_prime
                        .ok_or_else(|| CliError::Config("--mode depth needs --nprime".into()))?;
                    *policy = PolicyConfig::Depth {
                        fraction: f,
                        n_prime,
                    };
                }
                _ => {}
            }
        }
        if let Some(n) = self.n_prime {
            match policy {
                PolicyConfig::Depth { n_prime, .. }
                | PolicyConfig::LimitedBins { n_prime }
                | PolicyConfig::QuantizedSt { n_prime, .. } => *n_prime = n,
                _ => {}
            }
        }
        if let Some(b) = self.buckets {
            if let PolicyConfig::QuantizedSt { buckets, .. } = policy {
                *buckets = b;
            }
        }
        if let Some(k) = self.samples_per_bucket {
            if let PolicyConfig::QuantizedSt {
                samples_per_bucket, ..
            } = policy
            {
                *samples_per_bucket = k;
            }
        }
        if let Some(s) = self.segments {
            if let PolicyConfig::SuperpixelSt { segments, .. } = policy {
                *segments = s;
            }
        }
        if let Some(t) = self.floor_tau {
            if let PolicyConfig::Flow { floor_tau, .. } = policy {
                *floor_tau = t;
            }
        }
        Ok(())
    }
}

pub fn cmd_foveate(
    config_path: &Path,
    out_override: Option<&Path>,
    overrides: &FoveateOverrides,
) -> CliResult<()> {
    let mut config = load_run_config(config_path)?;
    overrides.apply(&mut config.policy)?;
    let sensor = config.effective_sensor();
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.dir.clone());
    ensure_dir(&dir)?;
    let scene = build_scene(&config.scene_config()?, &sensor)?;
    let built = build_prior(
        &config.prior,
        &scene,
        &sensor,
        config.sampler,
        config.decode,
        0,
        None,
    )?;
    let outcome = run_policy(
        &config.policy,
        &scene,
        &built.prior,
        &sensor,
        config.sampler,
        config.decode,
        0,
    )?;

    let mut outputs = Vec::new();
    container::save_depth(&dir.join("depth.fspd"), &outcome.frame)?;
    outputs.push(PathBuf::from("depth.fspd"));
    container::save_depth(&dir.join("prior.fspd"), &built.prior.frame)?;
    outputs.push(PathBuf::from("prior.fspd"));
    if let Some(plan) = &outcome.plan {
        outputs.extend(write_plan(&dir, plan)?);
    }
    if let Some(mask) = &outcome.error_mask {
        container::save_mask(&dir.join("mask.fspd"), mask)?;
        outputs.push(PathBuf::from("mask.fspd"));
    }
    if let Some(fit) = &built.fit {
        outputs.push(write_json(&dir, "calibration.json", fit)?);
    }
    let metrics = evaluate(&outcome.frame, &scene.depth)?;
    let summary = FoveateSummary {
        metrics: metrics.clone(),
        memory: outcome.memory.clone(),
        sparsity: outcome.sparsity,
        reduced_cost_fraction: outcome.reduced_cost_fraction,
    };
    outputs.push(write_json(&dir, "report.json", &summary)?);
    outputs.push(write_text(
        &dir,
        "report.csv",
        &report_csv(&metrics, Some(&outcome.memory)),
    )?);

    write_manifest(&dir, "foveate", &config_value(&config)?, &outputs)?;
    println!(
        "foveate: rmse {:.4} m, memory factor {:.2}",
        metrics.rmse_m, outcome.memory.reduction_factor
    );
    Ok(())
}

pub fn cmd_metrics(pred: &Path, gt: &Path, out: Option<&Path>) -> CliResult<()> {
    let pred_frame = container::load_depth(pred)?;
    let gt_frame = container::load_depth(gt)?;
    let metrics = evaluate(&pred_frame, &gt_frame)?;
    let text =
        serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let outputs = vec![
            write_json(dir, "metrics.json", &metrics)?,
            write_text(dir, "metrics.csv", &report_csv(&metrics, None))?,
        ];
        let config = json!({
            "pred": pred.display().to_string(),
            "gt": gt.display().to_string(),
        });
        write_manifest(dir, "metrics", &config, &outputs)?;
    }
    Ok(())
}

pub enum AnalyzeKind {
    Worstcase {
        m_bins: u32,
        p_multipath: f64,
        p_floor: f64,
        pixels: u64,
        p_gt: Option<f64>,
    },
    Snr {
        n_bins: u32,
        m_bins: u32,
        temporal_volume_s: f64,
        cycles: u64,
        cycles_new: Option<u64>,
    },
    Sbr {
        regime: String,
        phi_sig: f64,
        phi_bkg: f64,
        peak_bin: u32,
        window_start: u32,
        n_bins: u32,
        m_bins: u32,
    },
}

pub fn cmd_analyze(kind: &AnalyzeKind, out: Option<&Path>) -> CliResult<()> {
    let (name, report) = match kind {
        AnalyzeKind::Worstcase {
            m_bins,
            p_multipath,
            p_floor,
            pixels,
            p_gt,
        } => {
            let points = stationary_points(*p_multipath, *m_bins)?;
            let eval_at = |p: f64| -> CliResult<Value> {
                let w = WorstCaseParams {
                    p_gt: p,
                    p_multipath: *p_multipath,
                    p_floor: *p_floor,
                    m_bins: *m_bins,
                    pixels: *pixels,
                };
                Ok(json!({
                    "p_gt": p,
                    "p_detect": p_detect(&w)?,
                    "p_worst": p_worst(&w)?,
                }))
            };
            let mut point_reports = Vec::new();
            for p in &points.points {
                let mut v = eval_at(p.p_gt)?;
                v["kind"] = serde_json::to_value(p.kind).unwrap();
                point_reports.push(v);
            }
            let mut report = json!({
                "m_bins": m_bins,
                "p_multipath": p_multipath,
                "p_floor": p_floor,
                "pixels": pixels,
                "stationary_points": point_reports,
            });
            if let Some(note) = &points.note {
                report["note"] = json!(note);
            }
            if let Some(p) = p_gt {
                report["at"] = eval_at(*p)?;
            }
            ("worstcase", report)
        }
        AnalyzeKind::Snr {
            n_bins,
            m_bins,
            temporal_volume_s,
            cycles,
            cycles_new,
        } => {
            let mk = |regime: SnrRegime| SnrModel {
                regime,
                n_bins: *n_bins,
                m_bins: *m_bins,
                temporal_volume_s: *temporal_volume_s,
                cycles: *cycles,
                cycles_new: cycles_new.unwrap_or(*cycles),
            };
            let report = json!({
                "n_bins": n_bins,
                "m_bins": m_bins,
                "cycles": cycles,
                "snr_conventional": snr(&mk(SnrRegime::Conventional))?,
                "snr_memory": snr(&mk(SnrRegime::Memory))?,
                "snr_depth": snr(&mk(SnrRegime::Depth))?,
                "snr_depth_compensated": snr(&mk(SnrRegime::DepthCompensated))?,
            });
            ("snr", report)
        }
        AnalyzeKind::Sbr {
            regime,
            phi_sig,
            phi_bkg,
            peak_bin,
            window_start,
            n_bins,
            m_bins,
        } => {
            let regime = match regime.as_str() {
                "conventional" => SbrRegime::Conventional,
                "memory" => SbrRegime::Memory,
                "perfect" => SbrRegime::Perfect,
                "depth" => SbrRegime::Depth,
                other => return Err(CliError::Config(format!("unknown sbr regime {other}"))),
            };
            let model = SbrModel {
                regime,
                phi_sig: *phi_sig,
                phi_bkg: *phi_bkg,
                peak_bin: *peak_bin,
                window_start: *window_start,
                n_bins: *n_bins,
                m_bins: *m_bins,
            };
            let value = sbr(&model)?;
            let report = json!({
                "model": model,
                "sbr": value,
            });
            ("sbr", report)
        }
    };
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let outputs = vec![write_json(dir, "analysis.json", &report)?];
        write_manifest(dir, &format!("analyze {name}"), &report, &outputs)?;
    }
    Ok(())
}

pub fn cmd_sweep(config_path: &Path, out: &Path) -> CliResult<()> {
    let value = crate::config::read_json(config_path)?;
    let spec_value = crate::config::embedded_config(&value)
        .cloned()
        .unwrap_or(value);
    let spec: SweepSpec = serde_json::from_value(spec_value.clone())
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    ensure_dir(out)?;
    let table = run_sweep(&spec)?;
    let outputs = vec![write_text(out, "sweep.csv", &table.to_csv())?];
    write_manifest(out, "sweep", &spec_value, &outputs)?;
    println!("sweep: {} rows to {}", table.rows.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct SequenceFrameReport {
    frame: u32,
    metrics: MetricsReport,
    memory: MemoryReport,
    flagged_pixels: u64,
}

pub fn cmd_sequence(config_path: &Path, out_override: Option<&Path>) -> CliResult<()> {
    let config = load_run_config(config_path)?;
    let sensor = config.effective_sensor();
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.dir.clone());
    ensure_dir(&dir)?;

    let spec = match config.scene_config()? {
        SceneConfig::Moving(spec) => spec,
        _ => {
            return Err(CliError::Config(
                "sequence requires a moving_boxes scene".into(),
            ))
        }
    };
    let frames = config.frames.unwrap_or(8) as usize;
    let sequence = generate_moving_sequence(&spec, frames)?;

    let mut outputs = Vec::new();
    let mut reports: Vec<SequenceFrameReport> = Vec::new();
    let mut prev_output: Option<fspd_core::DepthFrame> = None;

    // Global calibration fits once on its designated frame and is reused
    // everywhere else.
    let mut global_fit = None;
    if let PriorConfig::Monocular {
        calibration: Some(calib),
        ..
    } = &config.prior
    {
        if calib.mode == crate::config::CalibrationMode::Global {
            let t = (calib.frame as usize).min(sequence.frames.len() - 1);
            let scene = Scene {
                depth: sequence.frames[t].depth.clone(),
                reflectance: sequence.frames[t].reflectance.clone(),
            };
            global_fit = crate::pipeline::global_calibration_fit(
                &config.prior,
                &scene,
                &sensor,
                config.sampler,
                config.decode,
                t as u32,
            )?;
        }
    }

    for (t, seq_frame) in sequence.frames.iter().enumerate() {
        let scene = Scene {
            depth: seq_frame.depth.clone(),
            reflectance: seq_frame.reflectance.clone(),
        };
        let outcome = match (&config.policy, t) {
            // Frame 0 is always reconstructed densely; policies take over
            // from the second frame.
            (_, 0) => run_policy(
                &PolicyConfig::Full,
                &scene,
                &fspd_core::PriorFrame::perfect(&scene.depth, &sensor),
                &sensor,
                config.sampler,
                config.decode,
                0,
            )?,
            (
                PolicyConfig::Flow {
                    fraction,
                    floor_tau,
                    fallback,
                },
                t,
            ) => {
                let flow = sequence.frames[t - 1]
                    .flow_to_next
                    .as_ref()
                    .expect("non-final frame has flow");
                run_flow_step(
                    &scene,
                    prev_output.as_ref().expect("previous frame decoded"),
                    flow,
                    *fraction,
                    *floor_tau,
                    *fallback,
                    &sensor,
                    config.sampler,
                    config.decode,
                    t as u32,
                )?
            }
            (policy, t) => {
                let built = build_prior(
                    &config.prior,
                    &scene,
                    &sensor,
                    config.sampler,
                    config.decode,
                    t as u32,
                    global_fit.as_ref(),
                )?;
                run_policy(
                    policy,
                    &scene,
                    &built.prior,
                    &sensor,
                    config.sampler,
                    config.decode,
                    t as u32,
                )?
            }
        };

        let name = format!("depth_{t:03}.fspd");
        container::save_depth(&dir.join(&name), &outcome.frame)?;
        outputs.push(PathBuf::from(name));
        let flagged = if let Some(mask) = &outcome.error_mask {
            let name = format!("mask_{t:03}.fspd");
            container::save_mask(&dir.join(&name), mask)?;
            outputs.push(PathBuf::from(name));
            mask.count_set() as u64
        } else {
            0
        };
        let metrics = evaluate(&outcome.frame, &seq_frame.depth)?;
        reports.push(SequenceFrameReport {
            frame: t as u32,
            metrics,
            memory: outcome.memory.clone(),
            flagged_pixels: flagged,
        });
        prev_output = Some(outcome.frame);
    }

    // Per-frame rows plus the running average over frames so far.
    let mut csv = String::from(
        "frame,rmse,log10,rel,d1,d2,d3,ssd,pixels,bins,factor,flagged,avg_rmse,avg_rel,avg_d1\n",
    );
    let mut sums = (0.0, 0.0, 0.0);
    for (k, r) in reports.iter().enumerate() {
        sums.0 += r.metrics.rmse_m;
        sums.1 += r.metrics.abs_rel;
        sums.2 += r.metrics.delta1_pct;
        let n = (k + 1) as f64;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.frame,
            r.metrics.rmse_m,
            r.metrics.log10_err,
            r.metrics.abs_rel,
            r.metrics.delta1_pct,
            r.metrics.delta2_pct,
            r.metrics.delta3_pct,
            r.metrics.ssd_m2,
            r.metrics.pixels,
            r.memory.bins_recorded,
            r.memory.reduction_factor,
            r.flagged_pixels,
            sums.0 / n,
            sums.1 / n,
            sums.2 / n,
        ));
    }
    outputs.push(write_text(&dir, "sequence.csv", &csv)?);
    outputs.push(write_json(&dir, "sequence.json", &reports)?);

    write_manifest(&dir, "sequence", &config_value(&config)?, &outputs)?;
    let last = reports.last().expect("at least one frame");
    println!(
        "sequence: {} frames, final rmse {:.4} m, running avg {:.4} m",
        reports.len(),
        last.metrics.rmse_m,
        sums.0 / reports.len() as f64
    );
    Ok(())
}
