//! Closed-form calculators: SNR scaling across capture regimes, pileup SBR,
//! and the worst-case stochastic limits with their derivative chain.
//!
//! Proportionality constants are taken as 1 throughout, so only ratios
//! between regimes are meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrRegime {
    Conventional,
    Memory,
    Depth,
    DepthCompensated,
}

/// Inputs to the SNR scaling laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrModel {
    pub regime: SnrRegime,
    pub n_bins: u32,
    pub m_bins: u32,
    pub temporal_volume_s: f64,
    pub cycles: u64,
    /// Compensated cycle count; only read in the depth-compensated regime.
    pub cycles_new: u64,
}

impl SnrModel {
    fn validate(&self) -> Result<()> {
        if self.m_bins < 1 || self.m_bins > self.n_bins {
            return Err(Error::InvalidParameter(format!(
                "m_bins {} outside [1, {}]",
                self.m_bins, self.n_bins
            )));
        }
        if self.cycles < 1 || self.cycles_new < 1 {
            return Err(Error::InvalidParameter("cycle counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// SNR up to a shared proportionality constant.
///
/// Conventional and memory windows keep the full-width bin, so both scale as
/// C sqrt(T/N); depth foveation shrinks the bin to M T / N^2.
pub fn snr(model: &SnrModel) -> Result<f64> {
    model.validate()?;
    let n = model.n_bins as f64;
    let m = model.m_bins as f64;
    let t = model.temporal_volume_s;
    let c = model.cycles as f64;
    Ok(match model.regime {
        SnrRegime::Conventional | SnrRegime::Memory => c * (t / n).sqrt(),
        SnrRegime::Depth => c * (m * t / (n * n)).sqrt(),
        SnrRegime::DepthCompensated => model.cycles_new as f64 * (m * t / (n * n)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbrRegime {
    Conventional,
    Memory,
    Perfect,
    Depth,
}

/// Inputs to the pileup SBR laws. Bin indices are zero-based; `peak_bin`
/// counts full-width bins in the conventional/memory regimes and fine bins
/// in the depth regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbrModel {
    pub regime: SbrRegime,
    pub phi_sig: f64,
    pub phi_bkg: f64,
    pub peak_bin: u32,
    /// First bin of the gate; 0 recovers the conventional case.
    pub window_start: u32,
    pub n_bins: u32,
    pub m_bins: u32,
}

/// SBR outcome. With zero background the background sum vanishes and the
/// ratio is reported as a tag instead of a float infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SbrValue {
    Value { sbr: f64 },
    BackgroundFree,
}

/// Detection probability of a background photon at `offset` bins past the
/// gate start, for a per-bin background mass `phi_bkg`:
/// (1 - e^{-phi}) e^{-offset phi}. Shared by the closed-form SBR and the
/// Monte-Carlo cross checks.
pub fn bkg_detection_prob(phi_bkg: f64, offset: u32) -> f64 {
    (1.0 - (-phi_bkg).exp()) * (-(offset as f64) * phi_bkg).exp()
}

/// Probability that the signal photon is detected at the peak bin, with
/// `pre_bins` background-only bins ahead of it inside the gate.
pub fn sig_detection_prob(phi_sig: f64, phi_bkg: f64, pre_bins: u32) -> f64 {
    (1.0 - (-(phi_sig + phi_bkg)).exp()) * (-(pre_bins as f64) * phi_bkg).exp()
}

pub fn sbr(model: &SbrModel) -> Result<SbrValue> {
    if model.phi_sig < 0.0 || model.phi_bkg < 0.0 {
        return Err(Error::InvalidParameter("photon masses must be >= 0".into()));
    }
    if model.m_bins < 1 || model.m_bins > model.n_bins {
        return Err(Error::InvalidParameter(format!(
            "m_bins {} outside [1, {}]",
            model.m_bins, model.n_bins
        )));
    }
    match model.regime {
        SbrRegime::Perfect => {
            // Gate opens exactly at the peak: no earlier photon can pause
            // the detector, so the peak bin alone decides.
            Ok(SbrValue::Value {
                sbr: 1.0 - (-(model.phi_sig + model.phi_bkg)).exp(),
            })
        }
        SbrRegime::Conventional | SbrRegime::Memory => {
            let j = if model.regime == SbrRegime::Conventional {
                0
            } else {
                model.window_start
            };
            if model.peak_bin < j || model.peak_bin >= model.n_bins {
                return Err(Error::InvalidParameter(format!(
                    "peak bin {} outside gate [{}, {})",
                    model.peak_bin, j, model.n_bins
                )));
            }
            let p_sig = sig_detection_prob(model.phi_sig, model.phi_bkg, model.peak_bin - j);
            let p_bkg: f64 = (j..=model.peak_bin)
                .map(|q| bkg_detection_prob(model.phi_bkg, q - j))
                .sum();
            if p_bkg == 0.0 {
                return Ok(SbrValue::BackgroundFree);
            }
            Ok(SbrValue::Value { sbr: p_sig / p_bkg })
        }
        SbrRegime::Depth => {
            // All bins concentrate into the window; bin masses shrink by
            // M/N and the race runs over the fine grid.
            let scale = model.m_bins as f64 / model.n_bins as f64;
            let phi_sig = scale * model.phi_sig;
            let phi_bkg = scale * model.phi_bkg;
            if model.peak_bin >= model.n_bins {
                return Err(Error::InvalidParameter(format!(
                    "fine peak bin {} outside [0, {})",
                    model.peak_bin, model.n_bins
                )));
            }
            let p_sig = sig_detection_prob(phi_sig, phi_bkg, model.peak_bin);
            let p_bkg: f64 = (0..=model.peak_bin)
                .map(|q| bkg_detection_prob(phi_bkg, q))
                .sum();
            if p_bkg == 0.0 {
                return Ok(SbrValue::BackgroundFree);
            }
            Ok(SbrValue::Value { sbr: p_sig / p_bkg })
        }
    }
}

/// Parameters of the worst-case detection analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseParams {
    /// Probability that a detected photon came from the laser dot.
    pub p_gt: f64,
    /// Probability that a detected photon experienced multipath bounces.
    pub p_multipath: f64,
    /// Probability that sensor noise creates no spurious peak.
    pub p_floor: f64,
    /// Foveation window size in bins.
    pub m_bins: u32,
    /// Pixel count of the array.
    pub pixels: u64,
}

impl WorstCaseParams {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_gt", self.p_gt),
            ("p_multipath", self.p_multipath),
            ("p_floor", self.p_floor),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p}")));
            }
        }
        if self.m_bins < 1 || self.pixels < 1 {
            return Err(Error::InvalidParameter(
                "m_bins and pixels must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Probability that one pixel detects the correct foveated peak:
/// p_gt (1 - p_gt p_multipath)^{M-1} p_floor.
pub fn p_detect(w: &WorstCaseParams) -> Result<f64> {
    w.validate()?;
    let m = w.m_bins as f64;
    Ok(w.p_gt * (1.0 - w.p_gt * w.p_multipath).powf(m - 1.0) * w.p_floor)
}

/// Probability that none of the S pixels detects the correct depth.
pub fn p_worst(w: &WorstCaseParams) -> Result<f64> {
    let pd = p_detect(w)?;
    Ok((1.0 - pd).powf(w.pixels as f64))
}

fn derivative_guard(w: &WorstCaseParams) -> Result<()> {
    if w.p_gt * w.p_multipath > 1.0 {
        return Err(Error::InvalidParameter(
            "p_gt * p_multipath must be <= 1 for the derivative".into(),
        ));
    }
    Ok(())
}

/// Product-rule bracket before factoring:
/// (1 - p pm)^{M-1} + (M-1) p (1 - p pm)^{M-2} (-pm).
/// This form stays finite at the boundary p pm = 1, where the factored
/// (1 - p pm)^{M-2} would hit 0^negative for M < 2.
fn derivative_bracket(w: &WorstCaseParams) -> f64 {
    let m = w.m_bins as f64;
    let base = 1.0 - w.p_gt * w.p_multipath;
    if w.m_bins == 1 {
        return 1.0;
    }
    base.powf(m - 1.0) + (m - 1.0) * w.p_gt * base.powf(m - 2.0) * (-w.p_multipath)
}

/// Fully reduced derivative of p_worst with respect to p_gt:
/// S (1 - p_detect)^{S-1} (-p_floor) (1 - p_gt p_mp)^{M-2} (1 - M p_gt p_mp).
/// At the degenerate boundary p_gt p_mp = 1 the bracket form evaluates the
/// removable limit instead.
pub fn dp_worst(w: &WorstCaseParams) -> Result<f64> {
    w.validate()?;
    derivative_guard(w)?;
    let m = w.m_bins as f64;
    let s = w.pixels as f64;
    let pd = p_detect(w)?;
    let base = 1.0 - w.p_gt * w.p_multipath;
    let tail = if base == 0.0 || w.m_bins == 1 {
        derivative_bracket(w)
    } else {
        base.powf(m - 2.0) * (1.0 - m * w.p_gt * w.p_multipath)
    };
    Ok(s * (1.0 - pd).powf(s - 1.0) * (-w.p_floor) * tail)
}

/// Product-rule form of the same derivative, before factoring. Kept
/// alongside the reduced form so drift in either transcription fails a
/// pointwise-equality test.
pub fn dp_worst_unreduced(w: &WorstCaseParams) -> Result<f64> {
    w.validate()?;
    derivative_guard(w)?;
    let s = w.pixels as f64;
    let pd = p_detect(w)?;
    Ok(s * (1.0 - pd).powf(s - 1.0) * (-w.p_floor) * derivative_bracket(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryKind {
    /// p_gt = 1 / p_multipath: every bin carries both laser and multipath
    /// photons; a degenerate mirror-like scene.
    Degenerate,
    /// p_gt = 1 / (M p_multipath): the interior extremum; the operating
    /// point the window size should be tuned around.
    Recommended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub p_gt: f64,
    pub kind: StationaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoints {
    /// Points filtered to the admissible range [0, 1].
    pub points: Vec<StationaryPoint>,
    pub note: Option<String>,
}

/// The two zeros of dp_worst/dp_gt, filtered to [0, 1].
pub fn stationary_points(p_multipath: f64, m_bins: u32) -> Result<StationaryPoints> {
    if !(0.0..=1.0).contains(&p_multipath) {
        return Err(Error::InvalidParameter(format!(
            "p_multipath = {p_multipath}"
        )));
    }
    if m_bins < 1 {
        return Err(Error::InvalidParameter("m_bins must be >= 1".into()));
    }
    if p_multipath == 0.0 {
        return Ok(StationaryPoints {
            points: Vec::new(),
            note: Some("no finite stationary points when p_multipath = 0".into()),
        });
    }
    let candidates = [
        (1.0 / p_multipath, StationaryKind::Degenerate),
        (
            1.0 / (m_bins as f64 * p_multipath),
            StationaryKind::Recommended,
        ),
    ];
    let points = candidates
        .into_iter()
        .filter(|(p, _)| (0.0..=1.0).contains(p))
        .map(|(p_gt, kind)| StationaryPoint { p_gt, kind })
        .collect();
    Ok(StationaryPoints { points, note: None })
}
