//! Foveated single-photon time-of-flight depth imaging.
//!
//! Simulates SPAD photon-timing histograms under Poisson and pileup models,
//! plans prior-driven foveation windows (memory and depth variants plus
//! quantized, superpixel, and optical-flow spatio-temporal policies),
//! decodes depth, evaluates it, and cross-validates the closed-form
//! SNR/SBR/worst-case analyses against Monte-Carlo.

pub mod analysis;
pub mod config;
pub mod container;
pub mod decode;
pub mod error;
pub mod foveation;
pub mod frame;
pub mod histogram;
pub mod metrics;
pub mod photon;
pub mod prior;
pub mod rng;
pub mod scene;
pub mod superpixel;
pub mod sweep;

pub use config::{SensorConfig, SPEED_OF_LIGHT_M_S};
pub use decode::DecodeMethod;
pub use error::{Error, Result};
pub use foveation::{FoveaMode, FoveationPlan};
pub use frame::{DepthFrame, FlowField, IntensityFrame, Mask, ReflectanceFrame, SceneSequence};
pub use histogram::{BinGrid, Histogram, PhotonCube};
pub use metrics::{MemoryReport, MetricsReport};
pub use photon::Sampler;
pub use prior::PriorFrame;
