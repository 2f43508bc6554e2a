//! Depth-map evaluation metrics and exact memory accounting.

use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::error::{Error, Result};
use crate::frame::DepthFrame;

/// Standard depth evaluation metrics. RMSE and SSD run over pixels valid in
/// both frames; log/relative/delta metrics additionally require both depths
/// strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_m: f64,
    pub log10_err: f64,
    pub abs_rel: f64,
    /// Percent of pixels with max(d/d^, d^/d) < 1.25.
    pub delta1_pct: f64,
    pub delta2_pct: f64,
    pub delta3_pct: f64,
    /// Sum of squared differences in m^2.
    pub ssd_m2: f64,
    pub pixels: u64,
}

pub fn evaluate(pred: &DepthFrame, gt: &DepthFrame) -> Result<MetricsReport> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(
            pred.width,
            pred.height,
            gt.width,
            gt.height,
        ));
    }
    let mut ssd = 0.0;
    let mut pixels = 0u64;
    let mut log_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut positive = 0u64;
    let mut d1 = 0u64;
    let mut d2 = 0u64;
    let mut d3 = 0u64;
    let t1 = 1.25;
    let t2 = 1.25 * 1.25;
    let t3 = 1.25 * 1.25 * 1.25;
    for i in 0..pred.len() {
        if !(pred.valid[i] && gt.valid[i]) {
            continue;
        }
        let (p, g) = (pred.depth_m[i], gt.depth_m[i]);
        let diff = p - g;
        ssd += diff * diff;
        pixels += 1;
        if p > 0.0 && g > 0.0 {
            positive += 1;
            log_sum += (g.log10() - p.log10()).abs();
            rel_sum += diff.abs() / g;
            let ratio = (g / p).max(p / g);
            if ratio < t1 {
                d1 += 1;
            }
            if ratio < t2 {
                d2 += 1;
            }
            if ratio < t3 {
                d3 += 1;
            }
        }
    }
    if pixels == 0 {
        return Err(Error::NoValidPixels);
    }
    let rmse = (ssd / pixels as f64).sqrt();
    let (log10_err, abs_rel, delta1, delta2, delta3) = if positive > 0 {
        let n = positive as f64;
        (
            log_sum / n,
            rel_sum / n,
            100.0 * d1 as f64 / n,
            100.0 * d2 as f64 / n,
            100.0 * d3 as f64 / n,
        )
    } else {
        (0.0, 0.0, 0.0, 0.0, 0.0)
    };
    Ok(MetricsReport {
        rmse_m: rmse,
        log10_err,
        abs_rel,
        delta1_pct: delta1,
        delta2_pct: delta2,
        delta3_pct: delta3,
        ssd_m2: ssd,
        pixels,
    })
}

/// Exact histogram-memory accounting at one byte per bin. The reduction
/// factor is the exact ratio of the integer bin counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub bins_recorded: u64,
    pub bytes: u64,
    pub baseline_bins: u64,
    pub reduction_factor: f64,
}

impl MemoryReport {
    pub fn new(bins_recorded: u64, width: usize, height: usize, cfg: &SensorConfig) -> Self {
        let baseline = width as u64 * height as u64 * cfg.n_bins as u64;
        Self {
            bins_recorded,
            bytes: bins_recorded,
            baseline_bins: baseline,
            reduction_factor: baseline as f64 / bins_recorded as f64,
        }
    }
}

/// One-row CSV with the stable column order:
/// rmse, log10, rel, d1, d2, d3, ssd, pixels, bins, factor.
pub fn report_csv(metrics: &MetricsReport, memory: Option<&MemoryReport>) -> String {
    let (bins, factor) = match memory {
        Some(m) => (m.bins_recorded.to_string(), m.reduction_factor.to_string()),
        None => (String::new(), String::new()),
    };
    format!(
        "rmse,log10,rel,d1,d2,d3,ssd,pixels,bins,factor\n{},{},{},{},{},{},{},{},{},{}\n",
        metrics.rmse_m,
        metrics.log10_err,
        metrics.abs_rel,
        metrics.delta1_pct,
        metrics.delta2_pct,
        metrics.delta3_pct,
        metrics.ssd_m2,
        metrics.pixels,
        bins,
        factor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_score_perfectly() {
        let f = DepthFrame::filled(8, 8, 3.0);
        let r = evaluate(&f, &f).unwrap();
        assert_eq!(r.rmse_m, 0.0);
        assert_eq!(r.ssd_m2, 0.0);
        assert_eq!(r.delta1_pct, 100.0);
        assert_eq!(r.delta3_pct, 100.0);
        assert_eq!(r.pixels, 64);
    }

    #[test]
    fn constant_offset_has_closed_form() {
        let gt = DepthFrame::filled(8, 8, 1.0);
        let pred = DepthFrame::filled(8, 8, 1.1);
        let r = evaluate(&pred, &gt).unwrap();
        assert!((r.rmse_m - 0.1).abs() < 1e-12);
        assert!((r.abs_rel - 0.1).abs() < 1e-12);
        assert_eq!(r.delta1_pct, 100.0);
    }

    #[test]
    fn doubled_depth_fails_all_delta_thresholds() {
        let gt = DepthFrame::filled(4, 4, 2.0);
        let pred = DepthFrame::filled(4, 4, 4.0);
        let r = evaluate(&pred, &gt).unwrap();
        assert_eq!(r.delta1_pct, 0.0);
        assert_eq!(r.delta2_pct, 0.0);
        // 1.25^3 = 1.953 < 2, so delta3 misses as well.
        assert_eq!(r.delta3_pct, 0.0);
    }

    #[test]
    fn invalid_pixels_are_excluded() {
        let gt = DepthFrame::filled(2, 2, 1.0);
        let mut pred = DepthFrame::filled(2, 2, 1.0);
        pred.depth_m[0] = 100.0;
        pred.valid[0] = false;
        let r = evaluate(&pred, &gt).unwrap();
        assert_eq!(r.pixels, 3);
        assert_eq!(r.rmse_m, 0.0);
    }

    #[test]
    fn disjoint_masks_are_an_error() {
        let mut a = DepthFrame::filled(2, 2, 1.0);
        let mut b = DepthFrame::filled(2, 2, 1.0);
        a.valid = vec![true, true, false, false];
        b.valid = vec![false, false, true, true];
        assert!(matches!(evaluate(&a, &b), Err(Error::NoValidPixels)));
    }

    #[test]
    fn delta_metrics_are_symmetric() {
        let mut gt = DepthFrame::filled(4, 4, 0.0);
        let mut pred = DepthFrame::filled(4, 4, 0.0);
        for i in 0..16 {
            gt.depth_m[i] = 1.0 + i as f64 * 0.3;
            pred.depth_m[i] = 1.3 + i as f64 * 0.27;
        }
        let a = evaluate(&pred, &gt).unwrap();
        let b = evaluate(&gt, &pred).unwrap();
        assert_eq!(a.delta1_pct, b.delta1_pct);
        assert_eq!(a.delta2_pct, b.delta2_pct);
        assert_eq!(a.delta3_pct, b.delta3_pct);
    }

    fn cfg_640() -> SensorConfig {
        SensorConfig {
            z_max_m: 10.0,
            n_bins: 1000,
            cycles: 100,
            phi_sig: 1.0,
            phi_bkg: 0.0,
            pulse_fwhm_s: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn quantized_accounting_reproduces_the_1548_fold_figure() {
        // 64 buckets x 50 samples x 62 bins against 640 x 480 x 1000.
        let cfg = cfg_640();
        let recorded = 64u64 * 50 * 62;
        let report = MemoryReport::new(recorded, 640, 480, &cfg);
        assert_eq!(report.baseline_bins, 307_200_000);
        assert_eq!(report.bins_recorded, 198_400);
        assert!((1548.0..1549.0).contains(&report.reduction_factor));
    }

    #[test]
    fn dense_capture_has_factor_one() {
        let cfg = cfg_640();
        let report = MemoryReport::new(640 * 480 * 1000, 640, 480, &cfg);
        assert_eq!(report.reduction_factor, 1.0);
    }

    #[test]
    fn quarter_window_has_factor_four() {
        let cfg = cfg_640();
        let report = MemoryReport::new(640 * 480 * 250, 640, 480, &cfg);
        assert_eq!(report.reduction_factor, 4.0);
    }
}
