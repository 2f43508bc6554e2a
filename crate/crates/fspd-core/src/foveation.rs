//! Foveated capture policies: window planning, gated capture, quantized and
//! superpixel spatio-temporal sampling, and flow-driven capture with a
//! noise-floor fallback.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::decode::{argmax_bin, decode_histogram, DecodeMethod};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, FlowField, Mask, ReflectanceFrame};
use crate::histogram::BinGrid;
use crate::metrics::MemoryReport;
use crate::photon::{capture_full_cube, capture_pixel, pseudo_intensity, Sampler};
use crate::prior::{quantize_prior, warp_prior_by_flow, PriorFrame};
use crate::rng::{sample_without_replacement, PixelRng, StreamKind};
use crate::superpixel::{superpixels, SuperpixelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoveaMode {
    /// M full-width bins around the prior: same SNR, less memory.
    Memory,
    /// N' fine bins packed into the same window: finer depth, lower SNR.
    Depth,
}

/// Per-pixel gating plan. The window width, mode, and sub-bin count are
/// shared; the start bin and fallback flag vary per pixel. Fallback pixels
/// record the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FoveationPlan {
    pub width: usize,
    pub height: usize,
    pub mode: FoveaMode,
    pub m_bins: u32,
    pub n_prime: u32,
    pub start_bin: Vec<u32>,
    pub fallback: Vec<bool>,
}

impl FoveationPlan {
    pub fn grid_for(&self, idx: usize, cfg: &SensorConfig) -> BinGrid {
        if self.fallback[idx] {
            return BinGrid::full(cfg);
        }
        match self.mode {
            FoveaMode::Memory => BinGrid::memory(self.start_bin[idx], self.m_bins),
            FoveaMode::Depth => BinGrid::depth(self.start_bin[idx], self.m_bins, self.n_prime),
        }
    }

    /// Bins recorded by one pixel under this plan.
    pub fn bins_for(&self, idx: usize, cfg: &SensorConfig) -> u64 {
        if self.fallback[idx] {
            cfg.n_bins as u64
        } else {
            match self.mode {
                FoveaMode::Memory => self.m_bins as u64,
                FoveaMode::Depth => self.n_prime as u64,
            }
        }
    }

    /// Exact total bins recorded over the frame.
    pub fn bins_recorded(&self, cfg: &SensorConfig) -> u64 {
        (0..self.start_bin.len())
            .map(|i| self.bins_for(i, cfg))
            .sum()
    }

    pub fn memory_report(&self, cfg: &SensorConfig) -> MemoryReport {
        MemoryReport::new(self.bins_recorded(cfg), self.width, self.height, cfg)
    }
}

/// Window width for a bin-budget fraction: floor(f * N), at least one bin.
pub fn window_bins(fraction: f64, cfg: &SensorConfig) -> Result<u32> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction {fraction}")));
    }
    Ok(((fraction * cfg.n_bins as f64).floor() as u32).clamp(1, cfg.n_bins))
}

fn centered_window(center_bin: u32, m: u32, n: u32) -> u32 {
    // Shift (never shrink) the window to fit the grid, keeping M constant.
    let half = m / 2;
    let start = center_bin.saturating_sub(half);
    start.min(n - m)
}

/// Plans per-pixel windows of floor(fraction * N) bins centered on the prior
/// depth, shifted to fit the grid. Invalid-prior pixels fall back to the
/// full grid.
pub fn plan_fovea(
    prior: &PriorFrame,
    fraction: f64,
    mode: FoveaMode,
    n_prime: u32,
    cfg: &SensorConfig,
) -> Result<FoveationPlan> {
    if mode == FoveaMode::Depth && n_prime < 1 {
        return Err(Error::InvalidParameter(
            "depth mode needs n_prime >= 1".into(),
        ));
    }
    let m = window_bins(fraction, cfg)?;
    let frame = &prior.frame;
    let mut start = vec![0u32; frame.len()];
    let mut fallback = vec![false; frame.len()];
    for i in 0..frame.len() {
        if !frame.valid[i] {
            fallback[i] = true;
            continue;
        }
        let center = cfg.depth_to_bin(frame.depth_m[i])?;
        start[i] = centered_window(center, m, cfg.n_bins);
    }
    Ok(FoveationPlan {
        width: frame.width,
        height: frame.height,
        mode,
        m_bins: m,
        n_prime,
        start_bin: start,
        fallback,
    })
}

/// Captures and decodes one frame under a plan with deterministic per-pixel
/// streams. Returns the decoded frame and the exact memory report.
pub fn capture_frame_with_plan(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    plan: &FoveationPlan,
    cfg: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<(DepthFrame, MemoryReport)> {
    check_scene(depth, reflectance, plan.width, plan.height)?;
    let w = depth.width;
    let decoded: Vec<Option<f64>> = (0..depth.len())
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return Ok(None);
            }
            let (x, y) = (i % w, i / w);
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                plan.grid_for(i, cfg),
                sampler,
                &mut rng,
            )?;
            decode_histogram(&hist, cfg, method)
        })
        .collect::<Result<_>>()?;
    Ok((
        assemble_frame(depth.width, depth.height, decoded),
        plan.memory_report(cfg),
    ))
}

/// Dense baseline: full-resolution capture and decode of every pixel.
pub fn capture_full_frame(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    cfg: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<(DepthFrame, MemoryReport)> {
    let cube = capture_full_cube(
        depth,
        reflectance,
        cfg,
        frame_index,
        sampler,
        StreamKind::Capture,
    )?;
    let frame = crate::decode::decode_cube(&cube, cfg, method)?;
    let bins = depth.len() as u64 * cfg.n_bins as u64;
    Ok((
        frame,
        MemoryReport::new(bins, depth.width, depth.height, cfg),
    ))
}

/// Limited-bins baseline: N' coarse bins spread over the whole range, no
/// window placement and therefore no dependence on a prior.
pub fn capture_limited_bins(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    n_prime: u32,
    cfg: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<(DepthFrame, MemoryReport)> {
    if n_prime < 1 {
        return Err(Error::InvalidParameter("n_prime must be >= 1".into()));
    }
    let grid = BinGrid::limited(cfg, n_prime);
    let w = depth.width;
    let decoded: Vec<Option<f64>> = (0..depth.len())
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return Ok(None);
            }
            let (x, y) = (i % w, i / w);
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                grid,
                sampler,
                &mut rng,
            )?;
            decode_histogram(&hist, cfg, method)
        })
        .collect::<Result<_>>()?;
    let bins = depth.len() as u64 * n_prime as u64;
    Ok((
        assemble_frame(depth.width, depth.height, decoded),
        MemoryReport::new(bins, depth.width, depth.height, cfg),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketAggregation {
    /// Minimum decoded depth per bucket.
    Min,
    /// Median decoded depth (lower of the two middles for even counts).
    Median,
}

#[derive(Debug, Clone)]
pub struct QuantizedStOutcome {
    pub frame: DepthFrame,
    /// Sampled pixels / total pixels.
    pub sparsity: f64,
    pub memory: MemoryReport,
    pub sampled: Mask,
}

/// Deterministic per-bucket pixel selection: min(k, bucket size) pixels
/// uniformly without replacement.
pub fn plan_bucket_samples(
    members: &[Vec<usize>],
    samples_per_bucket: usize,
    cfg: &SensorConfig,
    frame_index: u32,
) -> Vec<Vec<usize>> {
    members
        .iter()
        .enumerate()
        .map(|(b, pixels)| {
            if pixels.is_empty() {
                return Vec::new();
            }
            let mut rng =
                PixelRng::for_stream(cfg.seed, StreamKind::BucketSampling, frame_index, b as u64);
            sample_without_replacement(&mut rng, pixels.len(), samples_per_bucket)
                .into_iter()
                .map(|k| pixels[k])
                .collect()
        })
        .collect()
}

/// Quantization-based spatio-temporal capture: bucket the prior, sample a
/// few pixels per bucket, foveate-capture and decode those, and assign every
/// pixel of a bucket the aggregate of its samples.
#[allow(clippy::too_many_arguments)]
pub fn quantized_st_capture(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    prior: &PriorFrame,
    buckets: u32,
    samples_per_bucket: usize,
    fraction: f64,
    mode: FoveaMode,
    n_prime: u32,
    aggregation: BucketAggregation,
    cfg: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<QuantizedStOutcome> {
    check_scene(depth, reflectance, prior.frame.width, prior.frame.height)?;
    if samples_per_bucket == 0 {
        return Err(Error::InvalidParameter(
            "samples_per_bucket must be >= 1".into(),
        ));
    }
    if depth.is_empty() {
        return Err(Error::InvalidParameter("empty frame".into()));
    }
    let map = quantize_prior(prior, buckets, cfg)?;
    let members = map.members();
    let picks = plan_bucket_samples(&members, samples_per_bucket, cfg, frame_index);
    let plan = plan_fovea(prior, fraction, mode, n_prime, cfg)?;

    let w = depth.width;
    let sampled_pixels: Vec<usize> = picks.iter().flatten().cloned().collect();
    let decoded: Vec<(usize, Option<f64>, u64)> = sampled_pixels
        .par_iter()
        .map(|&i| {
            let (x, y) = (i % w, i / w);
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                plan.grid_for(i, cfg),
                sampler,
                &mut rng,
            )?;
            let d = decode_histogram(&hist, cfg, method)?;
            Ok((i, d, plan.bins_for(i, cfg)))
        })
        .collect::<Result<_>>()?;

    let mut per_pixel: std::collections::HashMap<usize, Option<f64>> = Default::default();
    let mut bins_recorded = 0u64;
    for (i, d, bins) in decoded {
        per_pixel.insert(i, d);
        bins_recorded += bins;
    }

    let mut frame = DepthFrame::invalid(depth.width, depth.height);
    for (b, pixels) in members.iter().enumerate() {
        let mut values: Vec<f64> = picks[b]
            .iter()
            .filter_map(|i| per_pixel.get(i).copied().flatten())
            .collect();
        if values.is_empty() {
            continue;
        }
        values.sort_by(f64::total_cmp);
        let value = match aggregation {
            BucketAggregation::Min => values[0],
            BucketAggregation::Median => values[(values.len() - 1) / 2],
        };
        for &i in pixels {
            frame.depth_m[i] = value;
            frame.valid[i] = true;
        }
    }

    let mut sampled = Mask::filled(depth.width, depth.height, false);
    for &i in &sampled_pixels {
        sampled.data[i] = true;
    }
    let sparsity = sampled_pixels.len() as f64 / depth.len() as f64;
    Ok(QuantizedStOutcome {
        frame,
        sparsity,
        memory: MemoryReport::new(bins_recorded, depth.width, depth.height, cfg),
        sampled,
    })
}

#[derive(Debug, Clone)]
pub struct SuperpixelStOutcome {
    pub frame: DepthFrame,
    pub memory: MemoryReport,
    /// Fraction of pixels captured at reduced (windowed) cost.
    pub reduced_cost_fraction: f64,
    pub map: SuperpixelMap,
}

/// Superpixel spatio-temporal capture: segment the pseudo-intensity image,
/// decode each segment's centroid from a full histogram, then gate every
/// other pixel of the segment to a window centered on the centroid's peak.
#[allow(clippy::too_many_arguments)]
pub fn superpixel_st_capture(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    cfg: &SensorConfig,
    target_segments: u32,
    fraction: f64,
    compactness: f64,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<SuperpixelStOutcome> {
    check_scene(depth, reflectance, depth.width, depth.height)?;
    let m = window_bins(fraction, cfg)?;

    // Pseudo-intensity comes from per-pixel photon counters, modeled as an
    // independent capture stream.
    let intensity_cube = capture_full_cube(
        depth,
        reflectance,
        cfg,
        frame_index,
        sampler,
        StreamKind::Intensity,
    )?;
    let intensity = pseudo_intensity(&intensity_cube);
    let map = superpixels(&intensity, target_segments, compactness)?;

    let w = depth.width;
    // Centroid pixels carry full histograms; their peak places the segment
    // window. Segments whose centroid saw no photons fall back to full-grid
    // capture for every member.
    let centroid_results: Vec<(Option<f64>, Option<u32>)> = map
        .centroids
        .par_iter()
        .map(|&(x, y)| {
            let i = y * w + x;
            if !depth.valid[i] {
                return Ok((None, None));
            }
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                BinGrid::full(cfg),
                sampler,
                &mut rng,
            )?;
            let d = decode_histogram(&hist, cfg, method)?;
            Ok((d, argmax_bin(&hist)))
        })
        .collect::<Result<_>>()?;

    let mut segment_window: Vec<Option<u32>> = Vec::with_capacity(map.centroids.len());
    for (_, peak) in &centroid_results {
        segment_window.push(peak.map(|p| centered_window(p, m, cfg.n_bins)));
    }

    let mut is_centroid = vec![false; depth.len()];
    for &(x, y) in &map.centroids {
        is_centroid[y * w + x] = true;
    }

    let decoded: Vec<(Option<f64>, u64)> = (0..depth.len())
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return Ok((None, 0));
            }
            let (x, y) = (i % w, i / w);
            let label = map.labels[i] as usize;
            if is_centroid[i] {
                return Ok((centroid_results[label].0, cfg.n_bins as u64));
            }
            let grid = match segment_window[label] {
                Some(start) => BinGrid::memory(start, m),
                None => BinGrid::full(cfg),
            };
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                grid,
                sampler,
                &mut rng,
            )?;
            let d = decode_histogram(&hist, cfg, method)?;
            Ok((d, grid.n_sub as u64))
        })
        .collect::<Result<_>>()?;

    let mut frame = DepthFrame::invalid(depth.width, depth.height);
    let mut bins_recorded = 0u64;
    let mut reduced = 0u64;
    for (i, (d, bins)) in decoded.iter().enumerate() {
        bins_recorded += bins;
        if *bins > 0 && *bins == m as u64 && !is_centroid[i] {
            reduced += 1;
        }
        if let Some(d) = d {
            frame.depth_m[i] = *d;
            frame.valid[i] = true;
        }
    }
    Ok(SuperpixelStOutcome {
        frame,
        memory: MemoryReport::new(bins_recorded, depth.width, depth.height, cfg),
        reduced_cost_fraction: reduced as f64 / depth.len() as f64,
        map,
    })
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub frame: DepthFrame,
    /// True where foveation was judged unreliable (warp holes or counts at
    /// the noise floor) and the pixel was recaptured on the full grid.
    pub error_mask: Mask,
    pub memory: MemoryReport,
    pub prior: PriorFrame,
}

/// Flow-driven capture: warp the previous depth by the flow, gate capture on
/// the warped prior, and recapture any pixel whose window looks like pure
/// background (max in-window count <= tau * expected background per bin) or
/// that the warp left unfilled.
///
/// With `fallback` disabled, warp holes inherit the previous frame's depth
/// at the same pixel and no thresholding runs; this is the naive propagation
/// baseline that lets stale depths compound.
#[allow(clippy::too_many_arguments)]
pub fn flow_capture(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    prev_depth: &DepthFrame,
    flow: &FlowField,
    fraction: f64,
    floor_tau: f64,
    fallback: bool,
    cfg: &SensorConfig,
    sampler: Sampler,
    method: DecodeMethod,
    frame_index: u32,
) -> Result<FlowOutcome> {
    check_scene(depth, reflectance, prev_depth.width, prev_depth.height)?;
    let mut prior = warp_prior_by_flow(prev_depth, flow, cfg)?;
    if !fallback {
        for i in 0..prior.frame.len() {
            if !prior.frame.valid[i] && prev_depth.valid[i] {
                prior.frame.depth_m[i] = prev_depth.depth_m[i];
                prior.frame.valid[i] = true;
            }
        }
    }
    let plan = plan_fovea(&prior, fraction, FoveaMode::Memory, 1, cfg)?;

    let w = depth.width;
    // Expected background per recorded bin for a full-width-bin window.
    let expected_bkg = cfg.cycles as f64 * cfg.phi_bkg;
    let decoded: Vec<(Option<f64>, bool, u64)> = (0..depth.len())
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return Ok((None, false, 0));
            }
            let (x, y) = (i % w, i / w);
            let mut rng = PixelRng::for_pixel(
                cfg.seed,
                StreamKind::Capture,
                frame_index,
                x as u32,
                y as u32,
            );
            if plan.fallback[i] {
                // Warp hole: full-grid capture directly.
                let hist = capture_pixel(
                    depth.depth_m[i],
                    reflectance.albedo[i],
                    cfg,
                    BinGrid::full(cfg),
                    sampler,
                    &mut rng,
                )?;
                let d = decode_histogram(&hist, cfg, method)?;
                return Ok((d, true, cfg.n_bins as u64));
            }
            let grid = plan.grid_for(i, cfg);
            let hist = capture_pixel(
                depth.depth_m[i],
                reflectance.albedo[i],
                cfg,
                grid,
                sampler,
                &mut rng,
            )?;
            let max_count = hist.counts.iter().copied().max().unwrap_or(0);
            let flagged =
                fallback && floor_tau > 0.0 && (max_count as f64) <= floor_tau * expected_bkg;
            if flagged {
                // Recapture on the full grid from the start of the pixel
                // stream, matching a dense reference capture bit for bit.
                let mut rng = PixelRng::for_pixel(
                    cfg.seed,
                    StreamKind::Capture,
                    frame_index,
                    x as u32,
                    y as u32,
                );
                let hist = capture_pixel(
                    depth.depth_m[i],
                    reflectance.albedo[i],
                    cfg,
                    BinGrid::full(cfg),
                    sampler,
                    &mut rng,
                )?;
                let d = decode_histogram(&hist, cfg, method)?;
                return Ok((d, true, plan.m_bins as u64 + cfg.n_bins as u64));
            }
            let d = decode_histogram(&hist, cfg, method)?;
            Ok((d, false, plan.m_bins as u64))
        })
        .collect::<Result<_>>()?;

    let mut frame = DepthFrame::invalid(depth.width, depth.height);
    let mut mask = Mask::filled(depth.width, depth.height, false);
    let mut bins_recorded = 0u64;
    for (i, (d, flagged, bins)) in decoded.iter().enumerate() {
        bins_recorded += bins;
        mask.data[i] = *flagged;
        if let Some(d) = d {
            frame.depth_m[i] = *d;
            frame.valid[i] = true;
        }
    }
    Ok(FlowOutcome {
        frame,
        error_mask: mask,
        memory: MemoryReport::new(bins_recorded, depth.width, depth.height, cfg),
        prior,
    })
}

fn check_scene(
    depth: &DepthFrame,
    reflectance: &ReflectanceFrame,
    width: usize,
    height: usize,
) -> Result<()> {
    if depth.width != reflectance.width || depth.height != reflectance.height {
        return Err(Error::DimensionMismatch(
            depth.width,
            depth.height,
            reflectance.width,
            reflectance.height,
        ));
    }
    if depth.width != width || depth.height != height {
        return Err(Error::DimensionMismatch(
            depth.width,
            depth.height,
            width,
            height,
        ));
    }
    Ok(())
}

fn assemble_frame(width: usize, height: usize, decoded: Vec<Option<f64>>) -> DepthFrame {
    let mut frame = DepthFrame::invalid(width, height);
    for (i, d) in decoded.into_iter().enumerate() {
        if let Some(d) = d {
            frame.depth_m[i] = d;
            frame.valid[i] = true;
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneSpec};

    fn cfg(phi_sig: f64, phi_bkg: f64) -> SensorConfig {
        SensorConfig {
            z_max_m: 10.0,
            n_bins: 1000,
            cycles: 2000,
            phi_sig,
            phi_bkg,
            pulse_fwhm_s: 0.0,
            seed: 21,
        }
    }

    fn staircase(w: usize, h: usize) -> (DepthFrame, ReflectanceFrame) {
        generate_scene(&SceneSpec::Staircase {
            width: w,
            height: h,
            depths_m: vec![2.0, 4.0, 6.0, 8.0],
            albedos: None,
        })
        .unwrap()
    }

    #[test]
    fn window_width_follows_floor_convention() {
        let cfg = cfg(1.0, 0.0);
        assert_eq!(window_bins(1.0 / 16.0, &cfg).unwrap(), 62);
        assert_eq!(window_bins(1.0, &cfg).unwrap(), 1000);
        assert_eq!(window_bins(1e-9, &cfg).unwrap(), 1);
        assert!(window_bins(0.0, &cfg).is_err());
        assert!(window_bins(1.5, &cfg).is_err());
    }

    #[test]
    fn full_fraction_plans_the_whole_grid() {
        let cfg = cfg(1.0, 0.0);
        let (d, _) = staircase(8, 8);
        let prior = PriorFrame::perfect(&d, &cfg);
        let plan = plan_fovea(&prior, 1.0, FoveaMode::Memory, 1, &cfg).unwrap();
        assert_eq!(plan.m_bins, 1000);
        assert!(plan.start_bin.iter().all(|&s| s == 0));
    }

    #[test]
    fn windows_near_the_edge_shift_to_fit() {
        let cfg = cfg(1.0, 0.0);
        let mut frame = DepthFrame::filled(1, 1, 0.0);
        frame.depth_m[0] = cfg.bin_to_depth(5).unwrap();
        let prior = PriorFrame::perfect(&frame, &cfg);
        let plan = plan_fovea(&prior, 1.0 / 16.0, FoveaMode::Memory, 1, &cfg).unwrap();
        assert_eq!(plan.m_bins, 62);
        assert_eq!(plan.start_bin[0], 0);

        frame.depth_m[0] = cfg.bin_to_depth(998).unwrap();
        let prior = PriorFrame::perfect(&frame, &cfg);
        let plan = plan_fovea(&prior, 1.0 / 16.0, FoveaMode::Memory, 1, &cfg).unwrap();
        assert_eq!(plan.start_bin[0], 1000 - 62);
    }

    #[test]
    fn invalid_prior_pixels_fall_back() {
        let cfg = cfg(1.0, 0.0);
        let mut frame = DepthFrame::filled(2, 1, 5.0);
        frame.valid[1] = false;
        let prior = PriorFrame::perfect(&frame, &cfg);
        let plan = plan_fovea(&prior, 0.25, FoveaMode::Memory, 1, &cfg).unwrap();
        assert!(!plan.fallback[0]);
        assert!(plan.fallback[1]);
        assert_eq!(plan.bins_for(0, &cfg), 250);
        assert_eq!(plan.bins_for(1, &cfg), 1000);
        assert_eq!(plan.bins_recorded(&cfg), 1250);
    }

    #[test]
    fn gate_containment_holds_for_every_pixel() {
        let cfg = cfg(1.0, 0.0);
        let (d, _) = staircase(16, 16);
        let prior = PriorFrame::perfect(&d, &cfg);
        for mode in [FoveaMode::Memory, FoveaMode::Depth] {
            let plan = plan_fovea(&prior, 1.0 / 8.0, mode, 64, &cfg).unwrap();
            for i in 0..d.len() {
                let grid = plan.grid_for(i, &cfg);
                assert!(grid.end_bin() <= cfg.n_bins);
                let center = cfg.depth_to_bin(d.depth_m[i]).unwrap();
                assert!(
                    grid.start_bin <= center && center < grid.end_bin(),
                    "window [{}, {}) misses bin {center}",
                    grid.start_bin,
                    grid.end_bin()
                );
            }
        }
    }

    #[test]
    fn memory_window_with_peak_and_no_background_matches_full_decode() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = staircase(16, 16);
        let prior = PriorFrame::perfect(&d, &cfg);
        let plan = plan_fovea(&prior, 1.0 / 16.0, FoveaMode::Memory, 1, &cfg).unwrap();
        let (full, _) =
            capture_full_frame(&d, &r, &cfg, Sampler::Poisson, DecodeMethod::Argmax, 0).unwrap();
        let (fovea, mem) = capture_frame_with_plan(
            &d,
            &r,
            &plan,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        assert_eq!(full, fovea);
        assert_eq!(mem.bins_recorded, 16 * 16 * 62);
    }

    #[test]
    fn depth_mode_error_is_bounded_by_fine_bin_width() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = generate_scene(&SceneSpec::SlantedPlane {
            width: 16,
            height: 16,
            near_m: 2.0,
            far_m: 8.0,
            axis: crate::scene::SlantAxis::X,
            albedo: 1.0,
        })
        .unwrap();
        let prior = PriorFrame::perfect(&d, &cfg);
        let n_prime = 1000;
        let plan = plan_fovea(&prior, 1.0 / 16.0, FoveaMode::Depth, n_prime, &cfg).unwrap();
        let (fovea, mem) = capture_frame_with_plan(
            &d,
            &r,
            &plan,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        let bound = 62.0 * cfg.z_max_m / (2.0 * 1000.0 * n_prime as f64) + 1e-12;
        for i in 0..d.len() {
            assert!(fovea.valid[i]);
            assert!(
                (fovea.depth_m[i] - d.depth_m[i]).abs() <= bound,
                "pixel {i}: {} vs {}",
                fovea.depth_m[i],
                d.depth_m[i]
            );
        }
        assert_eq!(mem.bins_recorded, 16 * 16 * 1000);
    }

    #[test]
    fn window_excluding_the_peak_sees_nothing() {
        let cfg = cfg(5.0, 0.0);
        let mut rng = PixelRng::for_pixel(cfg.seed, StreamKind::Capture, 0, 0, 0);
        // True depth at bin 800, window at [0, 62).
        let hist = capture_pixel(
            8.0,
            1.0,
            &cfg,
            BinGrid::memory(0, 62),
            Sampler::Poisson,
            &mut rng,
        )
        .unwrap();
        assert_eq!(hist.total(), 0);
    }

    #[test]
    fn quantized_capture_with_single_bucket_takes_the_minimum() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = staircase(8, 8);
        let prior = PriorFrame::perfect(&d, &cfg);
        let out = quantized_st_capture(
            &d,
            &r,
            &prior,
            1,
            64,
            1.0 / 16.0,
            FoveaMode::Memory,
            1,
            BucketAggregation::Min,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        assert!((out.sparsity - 1.0).abs() < 1e-12);
        let min = out
            .frame
            .depth_m
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(out.frame.depth_m.iter().all(|&v| v == min));
        // All pixels of the staircase decode near 2 m; the min rule keeps it.
        assert!((min - 2.0).abs() < 0.01);
    }

    #[test]
    fn quantized_capture_respects_bucket_value_cardinality() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = staircase(16, 16);
        let prior = PriorFrame::perfect(&d, &cfg);
        let out = quantized_st_capture(
            &d,
            &r,
            &prior,
            4,
            3,
            1.0 / 16.0,
            FoveaMode::Memory,
            1,
            BucketAggregation::Min,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        let mut distinct: Vec<u64> = out
            .frame
            .depth_m
            .iter()
            .zip(&out.frame.valid)
            .filter(|(_, v)| **v)
            .map(|(d, _)| d.to_bits())
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() <= 4);
        // Noiseless staircase: each band decodes to its own bin center.
        for (band, expect) in [(0, 2.0), (4, 4.0), (8, 6.0), (12, 8.0)] {
            let i = band * 16;
            assert!((out.frame.depth_m[i] - expect).abs() <= cfg.z_max_m / 1000.0);
        }
        let expected_sparsity = (4 * 3) as f64 / 256.0;
        assert!((out.sparsity - expected_sparsity).abs() < 1e-12);
        assert_eq!(out.memory.bins_recorded, 12 * 62);
    }

    #[test]
    fn quantized_sampling_plan_reports_table_sparsity() {
        // 640x480, 64 equal buckets, 50 samples each: 3200 / 307200 pixels.
        let cfg = cfg(1.0, 0.0);
        let depths: Vec<f64> = (0..64).map(|k| (k as f64 + 0.5) * 10.0 / 64.0).collect();
        let (d, _) = generate_scene(&SceneSpec::Staircase {
            width: 640,
            height: 480,
            depths_m: depths,
            albedos: None,
        })
        .unwrap();
        let prior = PriorFrame::perfect(&d, &cfg);
        let map = quantize_prior(&prior, 64, &cfg).unwrap();
        let picks = plan_bucket_samples(&map.members(), 50, &cfg, 0);
        let total: usize = picks.iter().map(Vec::len).sum();
        assert_eq!(total, 3200);
        let sparsity = total as f64 / (640.0 * 480.0);
        assert!((sparsity - 0.0104166).abs() < 1e-4);
    }

    #[test]
    fn superpixel_capture_decodes_banded_scene() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = generate_scene(&SceneSpec::Staircase {
            width: 32,
            height: 32,
            depths_m: vec![2.0, 4.0, 6.0, 8.0],
            albedos: Some(vec![0.25, 0.5, 0.75, 1.0]),
        })
        .unwrap();
        let out = superpixel_st_capture(
            &d,
            &r,
            &cfg,
            16,
            0.25,
            crate::superpixel::DEFAULT_COMPACTNESS,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        let segs = out.map.segment_count as u64;
        assert_eq!(
            out.memory.bins_recorded,
            segs * 1000 + (32 * 32 - segs) * 250
        );
        for i in 0..d.len() {
            assert!(out.frame.valid[i]);
            assert!(
                (out.frame.depth_m[i] - d.depth_m[i]).abs() <= cfg.z_max_m / 1000.0,
                "pixel {i}"
            );
        }
        let expect_reduced = 1.0 - segs as f64 / (32.0 * 32.0);
        assert!((out.reduced_cost_fraction - expect_reduced).abs() < 1e-12);
    }

    #[test]
    fn depth_outside_the_segment_window_fails_without_silent_correction() {
        // A small far-away patch hidden inside a near segment: the window
        // from the centroid peak excludes its true bin, so with no
        // background its histogram stays empty and decodes invalid.
        let cfg = cfg(5.0, 0.0);
        let (d, r) = generate_scene(&SceneSpec::Boxes {
            width: 16,
            height: 16,
            background_m: 2.0,
            background_albedo: 0.8,
            boxes: vec![crate::scene::BoxSpec {
                x: 6,
                y: 6,
                w: 2,
                h: 2,
                depth_m: 9.0,
                albedo: 0.8,
            }],
        })
        .unwrap();
        let out = superpixel_st_capture(
            &d,
            &r,
            &cfg,
            1,
            1.0 / 16.0,
            crate::superpixel::DEFAULT_COMPACTNESS,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        // Centroid sits on the 2 m background; the 62-bin window around bin
        // 200 cannot see bin 900.
        for y in 6..8 {
            for x in 6..8 {
                let i = y * 16 + x;
                assert!(
                    !out.frame.valid[i] || (out.frame.depth_m[i] - 9.0).abs() > 1.0,
                    "hidden patch decoded correctly at ({x},{y}); gate should exclude it"
                );
            }
        }
        // The rest of the frame still decodes to the background depth.
        let i = 0;
        assert!(out.frame.valid[i]);
        assert!((out.frame.depth_m[i] - 2.0).abs() <= cfg.z_max_m / 1000.0);
    }

    #[test]
    fn static_flow_capture_has_empty_mask_and_matches_dense_decode() {
        let cfg = cfg(5.0, 0.0);
        let (d, r) = staircase(16, 16);
        let (full, _) =
            capture_full_frame(&d, &r, &cfg, Sampler::Poisson, DecodeMethod::Argmax, 1).unwrap();
        let flow = FlowField::zero(16, 16);
        let out = flow_capture(
            &d,
            &r,
            &full,
            &flow,
            0.25,
            3.0,
            true,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            1,
        )
        .unwrap();
        assert_eq!(out.error_mask.count_set(), 0);
        assert_eq!(out.frame, full);
    }

    #[test]
    fn zero_tau_disables_thresholding() {
        let cfg = cfg(0.0, 0.0); // no photons at all
        let (d, r) = staircase(8, 8);
        let prev = d.clone();
        let flow = FlowField::zero(8, 8);
        let out = flow_capture(
            &d,
            &r,
            &prev,
            &flow,
            0.25,
            0.0,
            true,
            &cfg,
            Sampler::Poisson,
            DecodeMethod::Argmax,
            0,
        )
        .unwrap();
        // Every histogram is empty, yet nothing is flagged by thresholding.
        assert_eq!(out.error_mask.count_set(), 0);
    }
}
