//! Per-pixel frame containers: depth, reflectance, flow, intensity, masks.

use crate::error::{Error, Result};

fn check_len(name: &str, len: usize, width: usize, height: usize) -> Result<()> {
    if len != width * height {
        return Err(Error::InvalidParameter(format!(
            "{name} length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// Metric depth map with a per-pixel validity mask. Invalid pixels are
/// excluded from every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth_m: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthFrame {
    pub fn filled(width: usize, height: usize, depth_m: f64) -> Self {
        Self {
            width,
            height,
            depth_m: vec![depth_m; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth_m: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        depth_m: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        check_len("depth", depth_m.len(), width, height)?;
        check_len("valid", valid.len(), width, height)?;
        Ok(Self {
            width,
            height,
            depth_m,
            valid,
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Per-pixel albedo in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceFrame {
    pub width: usize,
    pub height: usize,
    pub albedo: Vec<f64>,
}

impl ReflectanceFrame {
    pub fn filled(width: usize, height: usize, albedo: f64) -> Self {
        Self {
            width,
            height,
            albedo: vec![albedo; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, albedo: Vec<f64>) -> Result<Self> {
        check_len("albedo", albedo.len(), width, height)?;
        if albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter("albedo outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            albedo,
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Per-pixel displacement to the next frame, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zero(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_len("u", u.len(), width, height)?;
        check_len("v", v.len(), width, height)?;
        let bound = (width.max(height)) as f64;
        if u.iter()
            .chain(v.iter())
            .any(|c| !c.is_finite() || c.abs() > bound)
        {
            return Err(Error::InvalidParameter(
                "flow components must be finite and bounded by frame dimensions".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Pseudo-intensity image, normalized to [0, 1] by the frame maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl IntensityFrame {
    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Per-pixel boolean mask (fallback flags, error masks, validity).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len("mask", data.len(), width, height)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// One frame of a moving sequence. The flow maps this frame onto the next
/// one; the last frame of a sequence has no flow.
#[derive(Debug, Clone)]
pub struct SequenceFrame {
    pub depth: DepthFrame,
    pub reflectance: ReflectanceFrame,
    pub flow_to_next: Option<FlowField>,
}

/// Ordered list of (depth, reflectance, flow-to-next) frames sharing one
/// dimension; the frame interval is one abstract frame.
#[derive(Debug, Clone)]
pub struct SceneSequence {
    pub frames: Vec<SequenceFrame>,
}

impl SceneSequence {
    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, |f| f.depth.width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, |f| f.depth.height)
    }
}
