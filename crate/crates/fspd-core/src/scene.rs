//! Synthetic scene and sequence generators.
//!
//! Desk-scale stand-ins for real RGB-D data: planes, staircases, and boxes
//! over a background, plus moving-box sequences with exact ground-truth flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, FlowField, ReflectanceFrame, SceneSequence, SequenceFrame};

fn default_albedo() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlantAxis {
    #[default]
    X,
    Y,
}

/// Axis-aligned box at a fixed depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
    pub depth_m: f64,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
}

impl BoxSpec {
    fn contains(&self, x: usize, y: usize) -> bool {
        let (xi, yi) = (x as i64, y as i64);
        xi >= self.x && xi < self.x + self.w as i64 && yi >= self.y && yi < self.y + self.h as i64
    }
}

/// Static scene descriptors. All generators are pure functions of the
/// descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    /// Fronto-parallel plane at a fixed depth.
    Plane {
        width: usize,
        height: usize,
        depth_m: f64,
        #[serde(default = "default_albedo")]
        albedo: f64,
    },
    /// Depth ramps linearly from `near_m` to `far_m` along the chosen axis.
    SlantedPlane {
        width: usize,
        height: usize,
        near_m: f64,
        far_m: f64,
        #[serde(default)]
        axis: SlantAxis,
        #[serde(default = "default_albedo")]
        albedo: f64,
    },
    /// Horizontal bands of constant depth, one per entry of `depths_m`.
    Staircase {
        width: usize,
        height: usize,
        depths_m: Vec<f64>,
        #[serde(default)]
        albedos: Option<Vec<f64>>,
    },
    /// Boxes over a constant background.
    Boxes {
        width: usize,
        height: usize,
        background_m: f64,
        #[serde(default = "default_albedo")]
        background_albedo: f64,
        boxes: Vec<BoxSpec>,
    },
}

impl SceneSpec {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            Self::Plane { width, height, .. }
            | Self::SlantedPlane { width, height, .. }
            | Self::Staircase { width, height, .. }
            | Self::Boxes { width, height, .. } => (*width, *height),
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidScene(format!("empty frame {width}x{height}")));
    }
    Ok(())
}

/// Generates (depth, reflectance) for a static descriptor. Deterministic.
pub fn generate_scene(spec: &SceneSpec) -> Result<(DepthFrame, ReflectanceFrame)> {
    let (width, height) = spec.dimensions();
    check_dims(width, height)?;
    match spec {
        SceneSpec::Plane {
            depth_m, albedo, ..
        } => {
            if !depth_m.is_finite() || *depth_m < 0.0 {
                return Err(Error::InvalidScene(format!("plane depth {depth_m}")));
            }
            Ok((
                DepthFrame::filled(width, height, *depth_m),
                ReflectanceFrame::from_parts(width, height, vec![*albedo; width * height])?,
            ))
        }
        SceneSpec::SlantedPlane {
            near_m,
            far_m,
            axis,
            albedo,
            ..
        } => {
            if !near_m.is_finite() || !far_m.is_finite() || *near_m < 0.0 || *far_m < 0.0 {
                return Err(Error::InvalidScene("slant depths must be >= 0".into()));
            }
            let mut depth = vec![0.0; width * height];
            for y in 0..height {
                for x in 0..width {
                    let (pos, extent) = match axis {
                        SlantAxis::X => (x, width),
                        SlantAxis::Y => (y, height),
                    };
                    let t = if extent > 1 {
                        pos as f64 / (extent - 1) as f64
                    } else {
                        0.0
                    };
                    depth[y * width + x] = near_m + (far_m - near_m) * t;
                }
            }
            Ok((
                DepthFrame::from_parts(width, height, depth, vec![true; width * height])?,
                ReflectanceFrame::from_parts(width, height, vec![*albedo; width * height])?,
            ))
        }
        SceneSpec::Staircase {
            depths_m, albedos, ..
        } => {
            if depths_m.is_empty() {
                return Err(Error::InvalidScene(
                    "staircase needs at least one step".into(),
                ));
            }
            if depths_m.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(Error::InvalidScene("staircase depths must be >= 0".into()));
            }
            if let Some(a) = albedos {
                if a.len() != depths_m.len() {
                    return Err(Error::InvalidScene(
                        "albedos length must match depths".into(),
                    ));
                }
            }
            let steps = depths_m.len();
            let mut depth = vec![0.0; width * height];
            let mut albedo = vec![1.0; width * height];
            for y in 0..height {
                // Bands split the height evenly; the last band absorbs the
                // remainder rows.
                let band = (y * steps / height).min(steps - 1);
                for x in 0..width {
                    depth[y * width + x] = depths_m[band];
                    if let Some(a) = albedos {
                        albedo[y * width + x] = a[band];
                    }
                }
            }
            Ok((
                DepthFrame::from_parts(width, height, depth, vec![true; width * height])?,
                ReflectanceFrame::from_parts(width, height, albedo)?,
            ))
        }
        SceneSpec::Boxes {
            background_m,
            background_albedo,
            boxes,
            ..
        } => {
            let frame = render_boxes(width, height, *background_m, *background_albedo, boxes)?;
            Ok(frame)
        }
    }
}

fn render_boxes(
    width: usize,
    height: usize,
    background_m: f64,
    background_albedo: f64,
    boxes: &[BoxSpec],
) -> Result<(DepthFrame, ReflectanceFrame)> {
    if !background_m.is_finite() || background_m < 0.0 {
        return Err(Error::InvalidScene(format!(
            "background depth {background_m}"
        )));
    }
    let mut depth = vec![background_m; width * height];
    let mut albedo = vec![background_albedo; width * height];
    for y in 0..height {
        for x in 0..width {
            // Nearest box wins where boxes overlap.
            let mut best: Option<&BoxSpec> = None;
            for b in boxes {
                if b.contains(x, y) && best.is_none_or(|p| b.depth_m < p.depth_m) {
                    best = Some(b);
                }
            }
            if let Some(b) = best {
                depth[y * width + x] = b.depth_m;
                albedo[y * width + x] = b.albedo;
            }
        }
    }
    Ok((
        DepthFrame::from_parts(width, height, depth, vec![true; width * height])?,
        ReflectanceFrame::from_parts(width, height, albedo)?,
    ))
}

/// A box translating at an integer-pixel velocity per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingBox {
    #[serde(flatten)]
    pub shape: BoxSpec,
    pub velocity: (i64, i64),
}

impl MovingBox {
    fn at_frame(&self, t: usize) -> BoxSpec {
        let mut b = self.shape.clone();
        b.x += self.velocity.0 * t as i64;
        b.y += self.velocity.1 * t as i64;
        b
    }
}

/// Descriptor for a moving sequence: boxes translating over a static
/// background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingSceneSpec {
    pub width: usize,
    pub height: usize,
    pub background_m: f64,
    #[serde(default = "default_albedo")]
    pub background_albedo: f64,
    pub boxes: Vec<MovingBox>,
}

impl MovingSceneSpec {
    fn boxes_at(&self, t: usize) -> Vec<BoxSpec> {
        self.boxes.iter().map(|b| b.at_frame(t)).collect()
    }

    /// Velocity of the nearest box covering (x, y) at frame `t`, if any.
    fn velocity_at(&self, x: usize, y: usize, t: usize) -> Option<(i64, i64)> {
        let mut best: Option<(&MovingBox, f64)> = None;
        for b in &self.boxes {
            if b.at_frame(t).contains(x, y) && best.is_none_or(|(_, d)| b.shape.depth_m < d) {
                best = Some((b, b.shape.depth_m));
            }
        }
        best.map(|(b, _)| b.velocity)
    }

    fn covered(&self, x: usize, y: usize, t: usize) -> bool {
        self.boxes.iter().any(|b| b.at_frame(t).contains(x, y))
    }

    /// Analytic disocclusion set for the transition t -> t+1: pixels covered
    /// by a box at t and background at t+1. Pure rectangle arithmetic,
    /// independent of the flow/warping code paths.
    pub fn disoccluded_pixels(&self, t: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.covered(x, y, t) && !self.covered(x, y, t + 1) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Generates a moving sequence with exact ground-truth flow.
///
/// Flow at a pixel is the velocity of the surface visible there; pixels that
/// become background in the next frame (disocclusions) carry the background
/// flow, mirroring how a flow estimator behaves when the tracked content
/// vanishes.
pub fn generate_moving_sequence(spec: &MovingSceneSpec, frames: usize) -> Result<SceneSequence> {
    check_dims(spec.width, spec.height)?;
    if frames == 0 {
        return Err(Error::InvalidScene(
            "sequence needs at least one frame".into(),
        ));
    }
    let mut seq = Vec::with_capacity(frames);
    for t in 0..frames {
        let (depth, reflectance) = render_boxes(
            spec.width,
            spec.height,
            spec.background_m,
            spec.background_albedo,
            &spec.boxes_at(t),
        )?;
        let flow_to_next = if t + 1 < frames {
            let mut u = vec![0.0; spec.width * spec.height];
            let mut v = vec![0.0; spec.width * spec.height];
            for y in 0..spec.height {
                for x in 0..spec.width {
                    if let Some(vel) = spec.velocity_at(x, y, t) {
                        if spec.covered(x, y, t + 1) {
                            u[y * spec.width + x] = vel.0 as f64;
                            v[y * spec.width + x] = vel.1 as f64;
                        }
                        // else: disoccluded, keeps background flow (0, 0)
                    }
                }
            }
            Some(FlowField::from_parts(spec.width, spec.height, u, v)?)
        } else {
            None
        };
        seq.push(SequenceFrame {
            depth,
            reflectance,
            flow_to_next,
        });
    }
    Ok(SceneSequence { frames: seq })
}
