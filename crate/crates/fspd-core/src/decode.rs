//! Depth decoding from photon histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::histogram::{Histogram, PhotonCube};
use crate::photon::FWHM_TO_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMethod {
    Argmax,
    Matched,
}

/// Index of the max-count bin; ties break to the lowest index. `None` when
/// all counts are zero.
pub fn argmax_bin(hist: &Histogram) -> Option<u32> {
    let mut best_bin = 0usize;
    let mut best_count = 0u32;
    for (k, &c) in hist.counts.iter().enumerate() {
        if c > best_count {
            best_count = c;
            best_bin = k;
        }
    }
    (best_count > 0).then_some(best_bin as u32)
}

/// Depth at the center of the max-count bin through the histogram's own
/// grid; ties break to the lowest bin index. All-zero histograms decode to
/// `None` (invalid pixel).
pub fn decode_argmax(hist: &Histogram, cfg: &SensorConfig) -> Result<Option<f64>> {
    if hist.counts.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    Ok(argmax_bin(hist).map(|k| hist.grid.depth_of_bin(k, cfg)))
}

/// Cross-correlates counts with the discrete pulse kernel at the histogram's
/// bin width and returns the depth at the correlation argmax (same tie
/// rule). Falls back to plain argmax when the kernel support is narrower
/// than one bin.
pub fn decode_matched(hist: &Histogram, cfg: &SensorConfig) -> Result<Option<f64>> {
    if hist.counts.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    if hist.counts.iter().all(|&c| c == 0) {
        return Ok(None);
    }
    let sigma_bins = (cfg.pulse_fwhm_s / FWHM_TO_SIGMA) / hist.grid.bin_width_s(cfg);
    // With support under one bin the kernel is a delta: same as argmax.
    if cfg.pulse_fwhm_s <= 0.0 || 6.0 * sigma_bins < 1.0 {
        return decode_argmax(hist, cfg);
    }
    let radius = (3.0 * sigma_bins).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|j| {
            let hi = normal_cdf((j as f64 + 0.5) / sigma_bins);
            let lo = normal_cdf((j as f64 - 0.5) / sigma_bins);
            hi - lo
        })
        .collect();

    let n = hist.counts.len() as i64;
    let mut best_bin = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..n {
        let mut score = 0.0;
        for (j, w) in kernel.iter().enumerate() {
            let idx = k + (j as i64 - radius);
            if idx >= 0 && idx < n {
                score += w * hist.counts[idx as usize] as f64;
            }
        }
        if score > best_score {
            best_score = score;
            best_bin = k as usize;
        }
    }
    Ok(Some(hist.grid.depth_of_bin(best_bin as u32, cfg)))
}

fn normal_cdf(x: f64) -> f64 {
    // Same discretization the transient builder uses.
    0.5 * (1.0 + erf_approx(x / std::f64::consts::SQRT_2))
}

fn erf_approx(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

pub fn decode_histogram(
    hist: &Histogram,
    cfg: &SensorConfig,
    method: DecodeMethod,
) -> Result<Option<f64>> {
    match method {
        DecodeMethod::Argmax => decode_argmax(hist, cfg),
        DecodeMethod::Matched => decode_matched(hist, cfg),
    }
}

/// Decodes every pixel of a cube; all-zero pixels come out invalid.
pub fn decode_cube(
    cube: &PhotonCube,
    cfg: &SensorConfig,
    method: DecodeMethod,
) -> Result<DepthFrame> {
    let bins = cube.bins();
    let decoded: Vec<Option<f64>> = (0..cube.width * cube.height)
        .into_par_iter()
        .map(|i| {
            let hist = Histogram {
                grid: cube.grid,
                counts: cube.counts[i * bins..(i + 1) * bins].to_vec(),
                cycles_used: cube.cycles,
            };
            decode_histogram(&hist, cfg, method)
        })
        .collect::<Result<_>>()?;
    let mut frame = DepthFrame::invalid(cube.width, cube.height);
    for (i, d) in decoded.into_iter().enumerate() {
        if let Some(d) = d {
            frame.depth_m[i] = d;
            frame.valid[i] = true;
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::BinGrid;

    fn cfg(fwhm: f64) -> SensorConfig {
        SensorConfig {
            z_max_m: 10.0,
            n_bins: 1000,
            cycles: 100,
            phi_sig: 1.0,
            phi_bkg: 0.0,
            pulse_fwhm_s: fwhm,
            seed: 1,
        }
    }

    #[test]
    fn argmax_maps_through_the_grid() {
        let cfg = cfg(0.0);
        let hist = Histogram {
            grid: BinGrid::memory(10, 3),
            counts: vec![0, 5, 0],
            cycles_used: 100,
        };
        let d = decode_argmax(&hist, &cfg).unwrap().unwrap();
        assert_eq!(d.to_bits(), cfg.bin_to_depth(11).unwrap().to_bits());
    }

    #[test]
    fn all_zero_is_invalid() {
        let cfg = cfg(0.0);
        let hist = Histogram {
            grid: BinGrid::memory(0, 4),
            counts: vec![0; 4],
            cycles_used: 10,
        };
        assert_eq!(decode_argmax(&hist, &cfg).unwrap(), None);
        assert_eq!(decode_matched(&hist, &cfg).unwrap(), None);
    }

    #[test]
    fn ties_break_to_the_lower_bin() {
        let cfg = cfg(0.0);
        let hist = Histogram {
            grid: BinGrid::memory(0, 2),
            counts: vec![3, 3],
            cycles_used: 10,
        };
        let d = decode_argmax(&hist, &cfg).unwrap().unwrap();
        assert_eq!(d.to_bits(), cfg.bin_to_depth(0).unwrap().to_bits());
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let cfg = cfg(0.0);
        let hist = Histogram {
            grid: BinGrid::memory(0, 1),
            counts: vec![],
            cycles_used: 10,
        };
        assert!(decode_argmax(&hist, &cfg).is_err());
    }

    #[test]
    fn matched_recovers_noiseless_gaussian_peak() {
        let cfg = cfg(1e-9);
        let grid = BinGrid::full(&cfg);
        let model = crate::photon::build_transient(5.0, 1.0, &cfg, grid).unwrap();
        // Noise-free histogram: expected counts scaled up.
        let counts: Vec<u32> = model.rates.iter().map(|&r| (r * 1e6) as u32).collect();
        let hist = Histogram {
            grid,
            counts,
            cycles_used: 100,
        };
        let d = decode_matched(&hist, &cfg).unwrap().unwrap();
        assert_eq!(d.to_bits(), cfg.bin_to_depth(500).unwrap().to_bits());
    }

    #[test]
    fn matched_on_delta_histogram_equals_argmax() {
        let cfg = cfg(0.0);
        let mut counts = vec![0u32; 100];
        counts[37] = 9;
        let hist = Histogram {
            grid: BinGrid::memory(0, 100),
            counts,
            cycles_used: 10,
        };
        assert_eq!(
            decode_matched(&hist, &cfg).unwrap(),
            decode_argmax(&hist, &cfg).unwrap()
        );
    }
}
