//! Sensor and illumination parameterization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s, exact SI value.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Full sensor/illumination configuration for a capture.
///
/// The temporal volume `T = 2 Z / c` is always derived from `z_max_m`, never
/// stored, so the two can not drift apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Working volume in meters.
    pub z_max_m: f64,
    /// Bin count of the full-resolution histogram.
    pub n_bins: u32,
    /// Laser cycles per capture.
    pub cycles: u64,
    /// Mean signal photons per cycle at unit reflectance.
    pub phi_sig: f64,
    /// Mean background photons per cycle per full-width bin.
    pub phi_bkg: f64,
    /// Laser pulse FWHM in seconds.
    pub pulse_fwhm_s: f64,
    /// Master RNG seed.
    pub seed: u64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.z_max_m.is_finite() || self.z_max_m <= 0.0 {
            return Err(Error::InvalidConfig(format!("z_max_m = {}", self.z_max_m)));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig(format!("n_bins = {}", self.n_bins)));
        }
        if self.cycles < 1 {
            return Err(Error::InvalidConfig("cycles must be >= 1".into()));
        }
        for (name, v) in [
            ("phi_sig", self.phi_sig),
            ("phi_bkg", self.phi_bkg),
            ("pulse_fwhm_s", self.pulse_fwhm_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v}; must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Temporal volume `T = 2 Z / c` in seconds.
    pub fn temporal_volume_s(&self) -> f64 {
        2.0 * self.z_max_m / SPEED_OF_LIGHT_M_S
    }

    /// Width of one full-resolution bin in seconds.
    pub fn full_bin_width_s(&self) -> f64 {
        self.temporal_volume_s() / self.n_bins as f64
    }

    /// Depth at a fractional full-grid coordinate.
    ///
    /// Every grid-to-depth mapping in the crate funnels through this one
    /// expression so that aligned grids decode to bit-identical depths.
    #[inline]
    pub fn depth_at_coord(&self, coord: f64) -> f64 {
        coord * self.z_max_m / self.n_bins as f64
    }

    /// Fractional full-grid coordinate of a depth (0..=n_bins).
    #[inline]
    pub fn coord_of_depth(&self, depth_m: f64) -> f64 {
        depth_m / self.z_max_m * self.n_bins as f64
    }

    /// Full-resolution bin holding `depth_m`: floor mapping, clamped to the
    /// last bin at the upper boundary.
    pub fn depth_to_bin(&self, depth_m: f64) -> Result<u32> {
        if !(0.0..=self.z_max_m).contains(&depth_m) {
            return Err(Error::DepthOutOfRange {
                depth: depth_m,
                z_max: self.z_max_m,
            });
        }
        let bin = self.coord_of_depth(depth_m).floor() as u32;
        Ok(bin.min(self.n_bins - 1))
    }

    /// Center depth of full-resolution bin `i`.
    pub fn bin_to_depth(&self, i: u32) -> Result<f64> {
        if i >= self.n_bins {
            return Err(Error::BinOutOfRange {
                index: i,
                n_bins: self.n_bins,
            });
        }
        Ok(self.depth_at_coord(i as f64 + 0.5))
    }

    /// Write the JSON sidecar form of this config.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(crate::error::ContainerError::Io)?;
        Ok(())
    }

    /// Read a config from its JSON sidecar and validate it.
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::ContainerError::Io)?;
        let cfg: SensorConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(z_max: f64, n: u32) -> SensorConfig {
        SensorConfig {
            z_max_m: z_max,
            n_bins: n,
            cycles: 1000,
            phi_sig: 1.0,
            phi_bkg: 0.01,
            pulse_fwhm_s: 1e-9,
            seed: 7,
        }
    }

    #[test]
    fn depth_to_bin_boundaries() {
        let c = cfg(10.0, 1000);
        assert_eq!(c.depth_to_bin(0.0).unwrap(), 0);
        assert_eq!(c.depth_to_bin(10.0).unwrap(), 999);
        assert_eq!(c.depth_to_bin(5.0).unwrap(), 500);
    }

    #[test]
    fn depth_out_of_range() {
        let c = cfg(10.0, 1000);
        assert!(c.depth_to_bin(-0.1).is_err());
        assert!(c.depth_to_bin(10.1).is_err());
    }

    #[test]
    fn bin_to_depth_centers() {
        let c = cfg(10.0, 1000);
        assert_eq!(c.bin_to_depth(0).unwrap(), 0.005);
        assert_eq!(c.bin_to_depth(999).unwrap(), 9.995);
        assert!(c.bin_to_depth(1000).is_err());
    }

    #[test]
    fn round_trip_within_half_bin() {
        let c = cfg(10.0, 1000);
        let half_bin = c.z_max_m / (2.0 * c.n_bins as f64);
        for k in 0..=5000 {
            let d = k as f64 * 10.0 / 5000.0;
            let back = c.bin_to_depth(c.depth_to_bin(d).unwrap()).unwrap();
            assert!((back - d).abs() <= half_bin + 1e-12, "d = {d}");
        }
    }

    #[test]
    fn temporal_volume_is_derived() {
        let c = cfg(10.0, 1000);
        assert_eq!(c.temporal_volume_s(), 20.0 / SPEED_OF_LIGHT_M_S);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        assert!(cfg(0.0, 1000).validate().is_err());
        assert!(cfg(10.0, 1).validate().is_err());
        let mut c = cfg(10.0, 1000);
        c.phi_sig = -1.0;
        assert!(c.validate().is_err());
    }
}
