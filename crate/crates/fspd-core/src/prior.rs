//! Depth priors: synthetic monocular-style estimates, polynomial scale
//! calibration against sparse full-resolution samples, flow-based warping,
//! and bucket quantization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, FlowField};
use crate::rng::PixelRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Monocular,
    Warped,
    Quantized,
    External,
}

/// A depth prior: a depth frame plus where it came from. Depths are clamped
/// to [0, z_max] on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFrame {
    pub frame: DepthFrame,
    pub provenance: Provenance,
}

impl PriorFrame {
    pub fn new(mut frame: DepthFrame, provenance: Provenance, cfg: &SensorConfig) -> Self {
        for d in frame.depth_m.iter_mut() {
            *d = d.clamp(0.0, cfg.z_max_m);
        }
        Self { frame, provenance }
    }

    /// Treats a ground-truth depth frame as a perfect prior.
    pub fn perfect(frame: &DepthFrame, cfg: &SensorConfig) -> Self {
        Self::new(frame.clone(), Provenance::External, cfg)
    }
}

/// Distortion applied to ground truth to emulate a monocular estimator:
/// affine scale/offset, a smooth low-frequency bias field, and white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonocularDistortion {
    pub scale: f64,
    pub offset_m: f64,
    pub bias_amplitude_m: f64,
    pub noise_sigma_m: f64,
}

impl MonocularDistortion {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset_m: 0.0,
            bias_amplitude_m: 0.0,
            noise_sigma_m: 0.0,
        }
    }
}

/// Synthesizes a monocular-style prior from ground truth. Deterministic for
/// a given rng stream.
pub fn synth_monocular(
    gt: &DepthFrame,
    distortion: &MonocularDistortion,
    cfg: &SensorConfig,
    rng: &mut PixelRng,
) -> PriorFrame {
    let (w, h) = (gt.width, gt.height);
    // Random phases make the bias field differ between seeds while staying
    // smooth across the frame.
    let phase_x = rng.uniform_f64();
    let phase_y = rng.uniform_f64();
    let mut depth = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let bias = if distortion.bias_amplitude_m != 0.0 {
                let fx = (std::f64::consts::TAU * (x as f64 / w as f64 + phase_x)).sin();
                let fy = (std::f64::consts::TAU * (y as f64 / h as f64 + phase_y)).sin();
                distortion.bias_amplitude_m * fx * fy
            } else {
                0.0
            };
            let noise = if distortion.noise_sigma_m != 0.0 {
                distortion.noise_sigma_m * rng.normal_f64()
            } else {
                0.0
            };
            depth.push(distortion.scale * gt.depth_m[i] + distortion.offset_m + bias + noise);
        }
    }
    let frame = DepthFrame {
        width: w,
        height: h,
        depth_m: depth,
        valid: gt.valid.clone(),
    };
    PriorFrame::new(frame, Provenance::Monocular, cfg)
}

/// Least-squares polynomial mapping from prior depths to sampled true
/// (full-resolution decoded) depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub degree: usize,
    /// Coefficients in ascending power order: `c[0] + c[1] x + c[2] x^2 ...`
    pub coefficients: Vec<f64>,
    pub residual_rms_m: f64,
    pub sample_pixels: Vec<(usize, usize)>,
}

impl CalibrationFit {
    pub fn apply(&self, x: f64) -> f64 {
        // Horner evaluation.
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Fits a polynomial mapping prior -> sampled depth and applies it to the
/// whole prior, clamping to `bounds`. Returns the fit so it can be reused on
/// other frames (global calibration).
pub fn calibrate_polynomial(
    prior: &PriorFrame,
    spad_samples: &[((usize, usize), f64)],
    degree: usize,
    bounds: (f64, f64),
    cfg: &SensorConfig,
) -> Result<(CalibrationFit, PriorFrame)> {
    if degree < 1 {
        return Err(Error::Calibration("degree must be >= 1".into()));
    }
    if spad_samples.len() < degree + 1 {
        return Err(Error::Calibration(format!(
            "{} samples for degree {degree}; need at least {}",
            spad_samples.len(),
            degree + 1
        )));
    }
    let n = spad_samples.len();
    let mut design = DMatrix::<f64>::zeros(n, degree + 1);
    let mut target = DVector::<f64>::zeros(n);
    for (row, ((x, y), spad_depth)) in spad_samples.iter().enumerate() {
        if *x >= prior.frame.width || *y >= prior.frame.height {
            return Err(Error::Calibration(format!(
                "sample ({x},{y}) outside frame"
            )));
        }
        let p = prior.frame.depth_m[prior.frame.idx(*x, *y)];
        let mut pow = 1.0;
        for c in 0..=degree {
            design[(row, c)] = pow;
            pow *= p;
        }
        target[row] = *spad_depth;
    }

    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > max_sv * 1e-10)
        .count();
    if rank < degree + 1 {
        return Err(Error::Calibration(
            "rank-deficient design matrix (prior values do not span the fit)".into(),
        ));
    }
    let coeffs = svd
        .solve(&target, max_sv * 1e-12)
        .map_err(|e| Error::Calibration(e.to_string()))?;

    let residual = &design * &coeffs - &target;
    let residual_rms = (residual.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();

    let fit = CalibrationFit {
        degree,
        coefficients: coeffs.iter().cloned().collect(),
        residual_rms_m: residual_rms,
        sample_pixels: spad_samples.iter().map(|(p, _)| *p).collect(),
    };
    let calibrated = apply_calibration(prior, &fit, bounds, cfg);
    Ok((fit, calibrated))
}

/// Applies a fit to a prior frame with clamping; used directly when a global
/// fit from a designated calibration frame is reused on other frames.
pub fn apply_calibration(
    prior: &PriorFrame,
    fit: &CalibrationFit,
    bounds: (f64, f64),
    cfg: &SensorConfig,
) -> PriorFrame {
    let mut frame = prior.frame.clone();
    for d in frame.depth_m.iter_mut() {
        *d = fit.apply(*d).clamp(bounds.0, bounds.1);
    }
    PriorFrame::new(frame, prior.provenance, cfg)
}

/// Forward-warps the previous depth by per-pixel flow, rounding displaced
/// coordinates. Collisions keep the smaller depth (nearer surface wins);
/// targets nothing lands on are marked invalid so a fallback can catch them.
pub fn warp_prior_by_flow(
    prev_depth: &DepthFrame,
    flow: &FlowField,
    cfg: &SensorConfig,
) -> Result<PriorFrame> {
    if prev_depth.width != flow.width || prev_depth.height != flow.height {
        return Err(Error::DimensionMismatch(
            prev_depth.width,
            prev_depth.height,
            flow.width,
            flow.height,
        ));
    }
    let (w, h) = (prev_depth.width, prev_depth.height);
    let mut depth = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !prev_depth.valid[i] {
                continue;
            }
            let tx = (x as f64 + flow.u[i]).round() as i64;
            let ty = (y as f64 + flow.v[i]).round() as i64;
            if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                continue;
            }
            let j = ty as usize * w + tx as usize;
            let d = prev_depth.depth_m[i];
            if !valid[j] || d < depth[j] {
                depth[j] = d;
                valid[j] = true;
            }
        }
    }
    Ok(PriorFrame::new(
        DepthFrame {
            width: w,
            height: h,
            depth_m: depth,
            valid,
        },
        Provenance::Warped,
        cfg,
    ))
}

/// Per-pixel bucket ids over uniform depth edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketMap {
    pub width: usize,
    pub height: usize,
    pub bucket_count: u32,
    /// Uniform edges over [0, z_max]; length bucket_count + 1.
    pub edges_m: Vec<f64>,
    pub bucket_of_pixel: Vec<u32>,
    /// Copied from the prior; unassigned pixels are skipped downstream.
    pub valid: Vec<bool>,
}

impl BucketMap {
    /// Pixel indices per bucket, in row-major order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.bucket_count as usize];
        for (i, (&b, &v)) in self.bucket_of_pixel.iter().zip(&self.valid).enumerate() {
            if v {
                members[b as usize].push(i);
            }
        }
        members
    }
}

/// Quantizes a prior into `bucket_count` uniform depth buckets:
/// id = min(floor(d / z_max * B), B - 1).
pub fn quantize_prior(
    prior: &PriorFrame,
    bucket_count: u32,
    cfg: &SensorConfig,
) -> Result<BucketMap> {
    if bucket_count == 0 {
        return Err(Error::InvalidParameter("bucket count must be >= 1".into()));
    }
    let b = bucket_count as f64;
    let ids = prior
        .frame
        .depth_m
        .iter()
        .map(|&d| ((d / cfg.z_max_m * b).floor() as u32).min(bucket_count - 1))
        .collect();
    let edges = (0..=bucket_count)
        .map(|k| k as f64 * cfg.z_max_m / b)
        .collect();
    Ok(BucketMap {
        width: prior.frame.width,
        height: prior.frame.height,
        bucket_count,
        edges_m: edges,
        bucket_of_pixel: ids,
        valid: prior.frame.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;

    fn cfg() -> SensorConfig {
        SensorConfig {
            z_max_m: 10.0,
            n_bins: 1000,
            cycles: 1000,
            phi_sig: 1.0,
            phi_bkg: 0.0,
            pulse_fwhm_s: 0.0,
            seed: 3,
        }
    }

    fn gt() -> DepthFrame {
        let mut f = DepthFrame::filled(16, 16, 0.0);
        for y in 0..16 {
            for x in 0..16 {
                f.depth_m[y * 16 + x] = 1.0 + (x + y) as f64 * 0.25;
            }
        }
        f
    }

    #[test]
    fn identity_distortion_reproduces_ground_truth() {
        let cfg = cfg();
        let gt = gt();
        let mut rng = PixelRng::for_stream(1, StreamKind::PriorNoise, 0, 0);
        let p = synth_monocular(&gt, &MonocularDistortion::identity(), &cfg, &mut rng);
        assert_eq!(p.frame.depth_m, gt.depth_m);
    }

    #[test]
    fn affine_distortion_is_exact() {
        let cfg = cfg();
        let gt = gt();
        let d = MonocularDistortion {
            scale: 0.5,
            offset_m: 1.0,
            bias_amplitude_m: 0.0,
            noise_sigma_m: 0.0,
        };
        let mut rng = PixelRng::for_stream(1, StreamKind::PriorNoise, 0, 0);
        let p = synth_monocular(&gt, &d, &cfg, &mut rng);
        for i in 0..gt.len() {
            assert!((p.frame.depth_m[i] - (0.5 * gt.depth_m[i] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_sigma_matches_requested_level() {
        let cfg = cfg();
        let gt = DepthFrame::filled(100, 100, 5.0);
        let d = MonocularDistortion {
            scale: 1.0,
            offset_m: 0.0,
            bias_amplitude_m: 0.0,
            noise_sigma_m: 0.1,
        };
        let mut rng = PixelRng::for_stream(4, StreamKind::PriorNoise, 0, 0);
        let p = synth_monocular(&gt, &d, &cfg, &mut rng);
        let resid: Vec<f64> = p.frame.depth_m.iter().map(|&v| v - 5.0).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        // 5-sigma CI for the sample std of 1e4 draws is about +/-3.5%.
        assert!(
            (var.sqrt() - 0.1).abs() < 0.005,
            "sample std {}",
            var.sqrt()
        );
    }

    #[test]
    fn prior_is_clamped_to_range() {
        let cfg = cfg();
        let gt = DepthFrame::filled(8, 8, 9.0);
        let d = MonocularDistortion {
            scale: 2.0,
            offset_m: 0.0,
            bias_amplitude_m: 0.0,
            noise_sigma_m: 0.0,
        };
        let mut rng = PixelRng::for_stream(4, StreamKind::PriorNoise, 0, 0);
        let p = synth_monocular(&gt, &d, &cfg, &mut rng);
        assert!(p.frame.depth_m.iter().all(|&v| v <= 10.0));
    }

    #[test]
    fn linear_calibration_recovers_inverse_affine() {
        // Prior = 0.5 gt + 1, so the prior -> gt map is gt = 2 p - 2.
        let cfg = cfg();
        let gt = gt();
        let d = MonocularDistortion {
            scale: 0.5,
            offset_m: 1.0,
            bias_amplitude_m: 0.0,
            noise_sigma_m: 0.0,
        };
        let mut rng = PixelRng::for_stream(1, StreamKind::PriorNoise, 0, 0);
        let p = synth_monocular(&gt, &d, &cfg, &mut rng);
        let samples: Vec<((usize, usize), f64)> = (0..8)
            .map(|k| {
                let (x, y) = (2 * k, k);
                ((x, y), gt.depth_m[y * 16 + x])
            })
            .collect();
        let (fit, calibrated) = calibrate_polynomial(&p, &samples, 1, (0.0, 10.0), &cfg).unwrap();
        assert!(
            (fit.coefficients[1] - 2.0).abs() < 1e-6,
            "{:?}",
            fit.coefficients
        );
        assert!(
            (fit.coefficients[0] + 2.0).abs() < 1e-6,
            "{:?}",
            fit.coefficients
        );
        assert!(fit.residual_rms_m < 1e-9);
        for i in 0..gt.len() {
            assert!((calibrated.frame.depth_m[i] - gt.depth_m[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_prior_fits_identity() {
        let cfg = cfg();
        let gt = gt();
        let p = PriorFrame::perfect(&gt, &cfg);
        let samples: Vec<((usize, usize), f64)> = (0..6)
            .map(|k| ((k, 2 * k), gt.depth_m[2 * k * 16 + k]))
            .collect();
        let (fit, _) = calibrate_polynomial(&p, &samples, 1, (0.0, 10.0), &cfg).unwrap();
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-6);
        assert!(fit.coefficients[0].abs() < 1e-6);
    }

    #[test]
    fn constant_prior_is_a_calibration_error() {
        let cfg = cfg();
        let gt = gt();
        let p = PriorFrame::perfect(&DepthFrame::filled(16, 16, 4.0), &cfg);
        let samples: Vec<((usize, usize), f64)> =
            (0..8).map(|k| ((k, k), gt.depth_m[k * 16 + k])).collect();
        assert!(matches!(
            calibrate_polynomial(&p, &samples, 1, (0.0, 10.0), &cfg),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn exact_quadratic_is_recovered_at_degree_two() {
        let cfg = cfg();
        let gt = gt();
        let mut prior_frame = gt.clone();
        for d in prior_frame.depth_m.iter_mut() {
            // invert: prior p such that gt = 0.1 p^2 + 0.5 p
            let target = *d;
            let p = (-0.5 + (0.25 + 0.4 * target).sqrt()) / 0.2;
            *d = p;
        }
        let p = PriorFrame::new(prior_frame, Provenance::Monocular, &cfg);
        let samples: Vec<((usize, usize), f64)> = (0..12)
            .map(|k| ((k, (k * 5) % 16), gt.depth_m[((k * 5) % 16) * 16 + k]))
            .collect();
        let (_, calibrated) = calibrate_polynomial(&p, &samples, 2, (0.0, 10.0), &cfg).unwrap();
        let rms = calibrated
            .frame
            .depth_m
            .iter()
            .zip(&gt.depth_m)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / (gt.len() as f64).sqrt();
        assert!(rms <= 1e-6 * cfg.z_max_m, "rms {rms}");
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let cfg = cfg();
        let gt = gt();
        let flow = FlowField::zero(16, 16);
        let warped = warp_prior_by_flow(&gt, &flow, &cfg).unwrap();
        assert_eq!(warped.frame.depth_m, gt.depth_m);
        assert!(warped.frame.valid.iter().all(|&v| v));
    }

    #[test]
    fn uniform_flow_leaves_invalid_band() {
        let cfg = cfg();
        let gt = DepthFrame::filled(16, 16, 4.0);
        let flow = FlowField::from_parts(16, 16, vec![2.0; 256], vec![0.0; 256]).unwrap();
        let warped = warp_prior_by_flow(&gt, &flow, &cfg).unwrap();
        for y in 0..16 {
            assert!(!warped.frame.valid[y * 16]);
            assert!(!warped.frame.valid[y * 16 + 1]);
            for x in 2..16 {
                assert!(warped.frame.valid[y * 16 + x]);
                assert_eq!(warped.frame.depth_m[y * 16 + x], 4.0);
            }
        }
    }

    #[test]
    fn collisions_keep_nearer_depth() {
        let cfg = cfg();
        let mut gt = DepthFrame::filled(4, 1, 5.0);
        gt.depth_m[0] = 2.0;
        // Pixels 0 and 1 both land on pixel 1.
        let flow = FlowField::from_parts(4, 1, vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        let warped = warp_prior_by_flow(&gt, &flow, &cfg).unwrap();
        assert_eq!(warped.frame.depth_m[1], 2.0);
    }

    #[test]
    fn bucket_quantization_arithmetic() {
        let cfg = cfg();
        let p = PriorFrame::perfect(&DepthFrame::filled(2, 2, 5.0), &cfg);
        let map = quantize_prior(&p, 64, &cfg).unwrap();
        assert!(map.bucket_of_pixel.iter().all(|&b| b == 32));

        let one = quantize_prior(&p, 1, &cfg).unwrap();
        assert!(one.bucket_of_pixel.iter().all(|&b| b == 0));
    }

    #[test]
    fn staircase_fills_matching_buckets() {
        let cfg = cfg();
        let spec = crate::scene::SceneSpec::Staircase {
            width: 16,
            height: 16,
            depths_m: vec![2.0, 4.0, 6.0, 8.0],
            albedos: None,
        };
        let (d, _) = crate::scene::generate_scene(&spec).unwrap();
        let p = PriorFrame::perfect(&d, &cfg);
        let map = quantize_prior(&p, 4, &cfg).unwrap();
        let mut seen: Vec<u32> = map.bucket_of_pixel.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}
