//! Photon transient models and histogram samplers.
//!
//! A transient is the per-cycle mean photon rate over a bin grid: a discrete
//! Gaussian pulse centered at the round-trip time of flight plus a uniform
//! background. The Poisson sampler covers the low-ambient regime; the pileup
//! sampler models the one-detection-per-cycle behavior under strong ambient
//! light.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::config::SensorConfig;
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, IntensityFrame, ReflectanceFrame};
use crate::histogram::{BinGrid, Histogram, PhotonCube};
use crate::rng::{PixelRng, StreamKind};

/// FWHM-to-sigma conversion factor for a Gaussian pulse.
pub const FWHM_TO_SIGMA: f64 = 2.355;

/// Which photon statistics to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Poisson,
    Pileup,
}

/// Per-cycle mean photon rates over a bin grid.
#[derive(Debug, Clone)]
pub struct TransientModel {
    pub grid: BinGrid,
    /// Mean photons per cycle in each recorded bin.
    pub rates: Vec<f64>,
    /// Full-resolution bin holding the true depth.
    pub peak_bin: u32,
    /// Total signal photons per cycle: phi_sig * albedo.
    pub signal_per_cycle: f64,
    /// Background photons per cycle per full-width bin.
    pub bkg_per_full_bin: f64,
}

/// Normal CDF via the Abramowitz-Stegun erf polynomial (7.1.26).
///
/// Absolute error ~1.5e-7, which only shapes the pulse; per-bin masses
/// telescope, so total signal mass is conserved exactly regardless.
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Builds the transient for one pixel on the given grid.
///
/// The pulse is discretized by bin-edge CDF differences so mass is conserved
/// under foveated fine bins; tail mass outside the sensor range folds into
/// the range-edge bins. Background scales linearly with bin width.
pub fn build_transient(
    depth_m: f64,
    albedo: f64,
    cfg: &SensorConfig,
    grid: BinGrid,
) -> Result<TransientModel> {
    grid.validate(cfg)?;
    if !(0.0..=1.0).contains(&albedo) {
        return Err(Error::InvalidParameter(format!("albedo {albedo}")));
    }
    let peak_bin = cfg.depth_to_bin(depth_m)?;
    let center = cfg.coord_of_depth(depth_m);
    let sigma_bins = (cfg.pulse_fwhm_s / FWHM_TO_SIGMA) / cfg.full_bin_width_s();

    // CDF of the pulse in full-grid coordinates; a zero-width pulse
    // degenerates to a step that puts all mass in the bin holding `center`.
    let cdf = |x: f64| -> f64 {
        if sigma_bins == 0.0 {
            if x > center {
                1.0
            } else {
                0.0
            }
        } else {
            normal_cdf((x - center) / sigma_bins)
        }
    };

    let signal_per_cycle = cfg.phi_sig * albedo;
    let bkg_per_bin = cfg.phi_bkg * grid.bin_width_full_units();
    let n = grid.n_sub as usize;
    let mut rates = Vec::with_capacity(n);
    let mut prev = cdf(grid.bin_lower_coord(0));
    for k in 0..n {
        let next = cdf(grid.bin_lower_coord(k as u32 + 1));
        let mut mass = next - prev;
        if k == 0 && grid.start_bin == 0 {
            mass += prev; // tail below the sensor range
        }
        if k == n - 1 && grid.end_bin() == cfg.n_bins {
            mass += 1.0 - next; // tail beyond the sensor range
        }
        // Rates must stay non-negative even if the CDF approximation ever
        // rounds a difference below zero.
        rates.push((signal_per_cycle * mass).max(0.0) + bkg_per_bin);
        prev = next;
    }
    Ok(TransientModel {
        grid,
        rates,
        peak_bin,
        signal_per_cycle,
        bkg_per_full_bin: cfg.phi_bkg,
    })
}

/// Independent Poisson counts per bin: `counts[k] ~ Poisson(cycles * rate[k])`.
///
/// Zero-rate bins are deterministically zero and consume no draws, so
/// histograms on aligned grids stay stream-compatible.
pub fn sample_poisson(model: &TransientModel, cycles: u64, rng: &mut PixelRng) -> Histogram {
    let mut counts = Vec::with_capacity(model.rates.len());
    for &rate in &model.rates {
        let mean = rate * cycles as f64;
        if mean <= 0.0 {
            counts.push(0);
        } else {
            let draw = Poisson::new(mean).expect("positive mean").sample(rng);
            counts.push(draw.min(u32::MAX as f64) as u32);
        }
    }
    Histogram {
        grid: model.grid,
        counts,
        cycles_used: cycles,
    }
}

/// First-photon (pileup) sampling: per cycle, bins inside the gate are
/// scanned in time order and bin q detects with probability `1 - exp(-rate[q])`
/// given no earlier in-gate detection. At most one count per cycle; photons
/// before the gate are discarded by the gating electronics and do not
/// suppress later bins.
pub fn sample_pileup(
    model: &TransientModel,
    cycles: u64,
    gate: std::ops::Range<usize>,
    rng: &mut PixelRng,
) -> Result<Histogram> {
    if gate.end > model.rates.len() || gate.start >= gate.end {
        return Err(Error::InvalidParameter(format!(
            "gate {gate:?} outside grid of {} bins",
            model.rates.len()
        )));
    }
    let p_detect: Vec<f64> = model.rates[gate.clone()]
        .iter()
        .map(|&r| 1.0 - (-r).exp())
        .collect();
    let mut counts = vec![0u32; model.rates.len()];
    for _ in 0..cycles {
        for (q, &p) in p_detect.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            if rng.uniform_f64() < p {
                counts[gate.start + q] += 1;
                break;
            }
        }
    }
    Ok(Histogram {
        grid: model.grid,
        counts,
        cycles_used: cycles,
    })
}

/// Samples one pixel on a grid with the chosen statistics.
pub fn capture_pixel(
    depth_m: f64,
    albedo: f64,
    cfg: &SensorConfig,
    grid: BinGrid,
    sampler: Sampler,
    rng: &mut PixelRng,
) -> Result<Histogram> {
    let model = build_transient(depth_m, albedo, cfg, grid)?;
    Ok(match sampler {
        Sampler::Poisson => sample_poisson(&model, cfg.cycles, rng),
        Sampler::Pileup => sample_pileup(&model, cfg.cycles, 0..model.rates.len(), rng)?,
    })
}

/// Captures a full-resolution cube, one deterministic stream per pixel.
/// Invalid scene pixels produce all-zero histograms.
pub fn capture_full_cube(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    cfg: &SensorConfig,
    frame_index: u32,
    sampler: Sampler,
    stream: StreamKind,
) -> Result<PhotonCube> {
    if depth.width != reflectance.width || depth.height != reflectance.height {
        return Err(Error::DimensionMismatch(
            depth.width,
            depth.height,
            reflectance.width,
            reflectance.height,
        ));
    }
    let grid = BinGrid::full(cfg);
    let bins = grid.n_sub as usize;
    let (w, h) = (depth.width, depth.height);
    let rows: Vec<Vec<u32>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return Ok(vec![0u32; bins]);
            }
            let (x, y) = (i % w, i / w);
            let mut rng = PixelRng::for_pixel(cfg.seed, stream, frame_index, x as u32, y as u32);
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                grid,
                sampler,
                &mut rng,
            )?;
            Ok(hist.counts)
        })
        .collect::<Result<_>>()?;
    let mut counts = Vec::with_capacity(w * h * bins);
    for row in rows {
        counts.extend_from_slice(&row);
    }
    Ok(PhotonCube {
        width: w,
        height: h,
        grid,
        cycles: cfg.cycles,
        counts,
    })
}

/// Per-pixel total counts normalized to [0, 1] by the frame maximum. An
/// all-zero cube stays all-zero.
pub fn pseudo_intensity(cube: &PhotonCube) -> IntensityFrame {
    let bins = cube.bins();
    let mut sums = Vec::with_capacity(cube.width * cube.height);
    for i in 0..cube.width * cube.height {
        let off = i * bins;
        let s: u64 = cube.counts[off..off + bins].iter().map(|&c| c as u64).sum();
        sums.push(s as f64);
    }
    let max = sums.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for s in sums.iter_mut() {
            *s /= max;
        }
    }
    IntensityFrame {
        width: cube.width,
        height: cube.height,
        values: sums,
    }
}
