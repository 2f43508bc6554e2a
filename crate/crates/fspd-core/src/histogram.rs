//! Photon-timing histograms and the bin grids they live on.

use serde::{Deserialize, Serialize};

use crate::config::SensorConfig;
use crate::error::{Error, Result};

/// A uniform time grid over part (or all) of the full-resolution range.
///
/// `start_bin` and `span_bins` are in full-resolution bin units; the span is
/// subdivided into `n_sub` recorded bins, so the recorded bin width is
/// `span_bins / n_sub` full bins. Memory foveation uses `n_sub == span_bins`
/// (full-width bins), depth foveation packs `n_sub > span_bins` finer bins
/// into the same window, and the limited-bins baseline spreads
/// `n_sub < span_bins` coarse bins over the whole range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinGrid {
    pub start_bin: u32,
    pub span_bins: u32,
    pub n_sub: u32,
}

impl BinGrid {
    pub fn full(cfg: &SensorConfig) -> Self {
        Self {
            start_bin: 0,
            span_bins: cfg.n_bins,
            n_sub: cfg.n_bins,
        }
    }

    /// Memory-foveation window: `m` full-width bins starting at `start`.
    pub fn memory(start: u32, m: u32) -> Self {
        Self {
            start_bin: start,
            span_bins: m,
            n_sub: m,
        }
    }

    /// Depth-foveation window: `n_prime` fine bins over `m` full bins.
    pub fn depth(start: u32, m: u32, n_prime: u32) -> Self {
        Self {
            start_bin: start,
            span_bins: m,
            n_sub: n_prime,
        }
    }

    /// Limited-bins baseline: `n_prime` coarse bins over the entire range.
    pub fn limited(cfg: &SensorConfig, n_prime: u32) -> Self {
        Self {
            start_bin: 0,
            span_bins: cfg.n_bins,
            n_sub: n_prime,
        }
    }

    pub fn validate(&self, cfg: &SensorConfig) -> Result<()> {
        if self.span_bins == 0 || self.n_sub == 0 {
            return Err(Error::InvalidParameter("empty bin grid".into()));
        }
        if self.start_bin + self.span_bins > cfg.n_bins {
            return Err(Error::InvalidParameter(format!(
                "grid [{}, {}) exceeds {} bins",
                self.start_bin,
                self.end_bin(),
                cfg.n_bins
            )));
        }
        Ok(())
    }

    /// One past the last covered full-resolution bin.
    pub fn end_bin(&self) -> u32 {
        self.start_bin + self.span_bins
    }

    /// Recorded bin width in full-resolution bin units.
    pub fn bin_width_full_units(&self) -> f64 {
        self.span_bins as f64 / self.n_sub as f64
    }

    pub fn bin_width_s(&self, cfg: &SensorConfig) -> f64 {
        self.bin_width_full_units() * cfg.full_bin_width_s()
    }

    /// Full-grid coordinate of the lower edge of recorded bin `k`.
    #[inline]
    pub fn bin_lower_coord(&self, k: u32) -> f64 {
        self.start_bin as f64 + self.span_bins as f64 * k as f64 / self.n_sub as f64
    }

    /// Full-grid coordinate of the center of recorded bin `k`.
    #[inline]
    pub fn bin_center_coord(&self, k: u32) -> f64 {
        self.start_bin as f64 + self.span_bins as f64 * (k as f64 + 0.5) / self.n_sub as f64
    }

    /// Center depth of recorded bin `k`.
    #[inline]
    pub fn depth_of_bin(&self, k: u32, cfg: &SensorConfig) -> f64 {
        cfg.depth_at_coord(self.bin_center_coord(k))
    }

    /// Recorded bin containing full-grid coordinate `u`, if inside the grid.
    pub fn bin_of_coord(&self, u: f64) -> Option<u32> {
        if u < self.start_bin as f64 || u >= self.end_bin() as f64 {
            return None;
        }
        let k = ((u - self.start_bin as f64) * self.n_sub as f64 / self.span_bins as f64) as u32;
        Some(k.min(self.n_sub - 1))
    }
}

/// Per-pixel photon counts over a bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub grid: BinGrid,
    pub counts: Vec<u32>,
    pub cycles_used: u64,
}

impl Histogram {
    pub fn zeros(grid: BinGrid, cycles: u64) -> Self {
        Self {
            grid,
            counts: vec![0; grid.n_sub as usize],
            cycles_used: cycles,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Dense W x H stack of histograms sharing one grid; bins are innermost in
/// the flattened layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonCube {
    pub width: usize,
    pub height: usize,
    pub grid: BinGrid,
    pub cycles: u64,
    pub counts: Vec<u32>,
}

impl PhotonCube {
    pub fn zeros(width: usize, height: usize, grid: BinGrid, cycles: u64) -> Self {
        Self {
            width,
            height,
            grid,
            cycles,
            counts: vec![0; width * height * grid.n_sub as usize],
        }
    }

    pub fn bins(&self) -> usize {
        self.grid.n_sub as usize
    }

    pub fn counts_at(&self, x: usize, y: usize) -> &[u32] {
        let b = self.bins();
        let off = (y * self.width + x) * b;
        &self.counts[off..off + b]
    }

    pub fn histogram_at(&self, x: usize, y: usize) -> Histogram {
        Histogram {
            grid: self.grid,
            counts: self.counts_at(x, y).to_vec(),
            cycles_used: self.cycles,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SensorConfig {
        SensorConfig {
            z_max_m: 10.0,
            n_bins: 1000,
            cycles: 100,
            phi_sig: 1.0,
            phi_bkg: 0.0,
            pulse_fwhm_s: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn memory_grid_centers_match_full_grid_bit_exactly() {
        let cfg = cfg();
        let full = BinGrid::full(&cfg);
        let mem = BinGrid::memory(137, 62);
        for k in 0..62 {
            let i = 137 + k;
            assert_eq!(
                mem.depth_of_bin(k, &cfg).to_bits(),
                full.depth_of_bin(i, &cfg).to_bits()
            );
            assert_eq!(
                full.depth_of_bin(i, &cfg).to_bits(),
                cfg.bin_to_depth(i).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn depth_grid_with_n_prime_equal_span_matches_memory() {
        let cfg = cfg();
        let mem = BinGrid::memory(10, 40);
        let dep = BinGrid::depth(10, 40, 40);
        for k in 0..40 {
            assert_eq!(
                mem.depth_of_bin(k, &cfg).to_bits(),
                dep.depth_of_bin(k, &cfg).to_bits()
            );
        }
    }

    #[test]
    fn bin_of_coord_round_trips_centers() {
        let g = BinGrid::depth(100, 62, 500);
        for k in (0..500).step_by(7) {
            assert_eq!(g.bin_of_coord(g.bin_center_coord(k)), Some(k));
        }
        assert_eq!(g.bin_of_coord(99.999), None);
        assert_eq!(g.bin_of_coord(162.0), None);
    }

    #[test]
    fn grid_validation() {
        let cfg = cfg();
        assert!(BinGrid::memory(990, 20).validate(&cfg).is_err());
        assert!(BinGrid::memory(990, 10).validate(&cfg).is_ok());
        assert!(BinGrid::depth(0, 0, 10).validate(&cfg).is_err());
    }

    #[test]
    fn bin_widths() {
        let cfg = cfg();
        let fine = BinGrid::depth(0, 62, 1000);
        assert!((fine.bin_width_full_units() - 0.062).abs() < 1e-15);
        let coarse = BinGrid::limited(&cfg, 16);
        assert!((coarse.bin_width_s(&cfg) - cfg.temporal_volume_s() / 16.0).abs() < 1e-22);
    }
}
