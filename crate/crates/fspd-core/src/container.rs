//! FSPD container format.
//!
//! Layout: bytes 0-3 magic `FSPD`; byte 4 version (1); byte 5 payload kind;
//! bytes 6-7 reserved zero; then width, height, channels, bins as 32-bit
//! little-endian unsigned; then the row-major little-endian payload with
//! channels interleaved per pixel and bins innermost.
//!
//! Payload kinds: 1 depth f32 (two channels: depth, validity), 2 reflectance
//! f32, 3 flow f32 x 2 (u, v), 4 histogram u32, 5 mask u8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ContainerError, Result};
use crate::frame::{DepthFrame, FlowField, Mask, ReflectanceFrame};
use crate::histogram::{BinGrid, PhotonCube};

pub const MAGIC: [u8; 4] = *b"FSPD";
pub const VERSION: u8 = 1;

/// Maximum accepted payload size (bytes); guards against corrupt headers.
const MAX_PAYLOAD_BYTES: u64 = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Depth = 1,
    Reflectance = 2,
    Flow = 3,
    Histogram = 4,
    Mask = 5,
}

impl PayloadKind {
    fn from_byte(b: u8) -> std::result::Result<Self, ContainerError> {
        match b {
            1 => Ok(Self::Depth),
            2 => Ok(Self::Reflectance),
            3 => Ok(Self::Flow),
            4 => Ok(Self::Histogram),
            5 => Ok(Self::Mask),
            other => Err(ContainerError::UnknownKind(other)),
        }
    }

    fn bytes_per_value(self) -> u64 {
        match self {
            Self::Mask => 1,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    kind: PayloadKind,
    width: u32,
    height: u32,
    channels: u32,
    bins: u32,
}

impl Header {
    fn value_count(&self) -> std::result::Result<u64, ContainerError> {
        (self.width as u64)
            .checked_mul(self.height as u64)
            .and_then(|n| n.checked_mul(self.channels as u64))
            .and_then(|n| n.checked_mul(self.bins as u64))
            .filter(|n| {
                *n > 0
                    && n.checked_mul(self.kind.bytes_per_value())
                        .is_some_and(|b| b <= MAX_PAYLOAD_BYTES)
            })
            .ok_or_else(|| {
                ContainerError::DimensionOverflow(format!(
                    "{}x{}x{}x{}",
                    self.width, self.height, self.channels, self.bins
                ))
            })
    }
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> std::result::Result<(), ContainerError> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, h.kind as u8, 0, 0])?;
    for field in [h.width, h.height, h.channels, h.bins] {
        w.write_all(&field.to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> std::result::Result<Header, ContainerError> {
    let mut fixed = [0u8; 8];
    r.read_exact(&mut fixed)
        .map_err(|_| ContainerError::BadMagic)?;
    if fixed[0..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    if fixed[4] != VERSION {
        return Err(ContainerError::UnsupportedVersion(fixed[4]));
    }
    let kind = PayloadKind::from_byte(fixed[5])?;
    let mut dims = [0u32; 4];
    for d in dims.iter_mut() {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)
            .map_err(|_| ContainerError::Truncated {
                expected: 24,
                found: 8,
            })?;
        *d = u32::from_le_bytes(buf);
    }
    Ok(Header {
        kind,
        width: dims[0],
        height: dims[1],
        channels: dims[2],
        bins: dims[3],
    })
}

fn read_payload<R: Read>(
    r: &mut R,
    header: &Header,
) -> std::result::Result<Vec<u8>, ContainerError> {
    let values = header.value_count()?;
    let expected = values * header.kind.bytes_per_value();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let found = payload.len() as u64;
    if found < expected {
        return Err(ContainerError::Truncated { expected, found });
    }
    if found > expected {
        return Err(ContainerError::TrailingBytes(found - expected));
    }
    Ok(payload)
}

fn save(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(ContainerError::Io)?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, header)?;
    w.write_all(payload).map_err(ContainerError::Io)?;
    w.flush().map_err(ContainerError::Io)?;
    Ok(())
}

fn load(path: &Path, expected: PayloadKind) -> Result<(Header, Vec<u8>)> {
    let file = File::open(path).map_err(ContainerError::Io)?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)?;
    if header.kind != expected {
        return Err(ContainerError::KindMismatch {
            expected: expected as u8,
            found: header.kind as u8,
        }
        .into());
    }
    let payload = read_payload(&mut r, &header)?;
    Ok((header, payload))
}

fn f32_at(payload: &[u8], i: usize) -> f32 {
    let off = i * 4;
    f32::from_le_bytes(payload[off..off + 4].try_into().unwrap())
}

fn u32_at(payload: &[u8], i: usize) -> u32 {
    let off = i * 4;
    u32::from_le_bytes(payload[off..off + 4].try_into().unwrap())
}

pub fn save_depth(path: &Path, frame: &DepthFrame) -> Result<()> {
    let header = Header {
        kind: PayloadKind::Depth,
        width: frame.width as u32,
        height: frame.height as u32,
        channels: 2,
        bins: 1,
    };
    let mut payload = Vec::with_capacity(frame.len() * 8);
    for i in 0..frame.len() {
        payload.extend_from_slice(&(frame.depth_m[i] as f32).to_le_bytes());
        payload.extend_from_slice(&(if frame.valid[i] { 1.0f32 } else { 0.0f32 }).to_le_bytes());
    }
    save(path, &header, &payload)
}

pub fn load_depth(path: &Path) -> Result<DepthFrame> {
    let (h, payload) = load(path, PayloadKind::Depth)?;
    let n = (h.width * h.height) as usize;
    let (mut depth, mut valid) = (Vec::with_capacity(n), Vec::with_capacity(n));
    match h.channels {
        // Single-channel files mark every pixel valid.
        1 => {
            for i in 0..n {
                depth.push(f32_at(&payload, i) as f64);
                valid.push(true);
            }
        }
        2 => {
            for i in 0..n {
                depth.push(f32_at(&payload, 2 * i) as f64);
                valid.push(f32_at(&payload, 2 * i + 1) != 0.0);
            }
        }
        c => return Err(ContainerError::DimensionOverflow(format!("depth channels = {c}")).into()),
    }
    DepthFrame::from_parts(h.width as usize, h.height as usize, depth, valid)
}

pub fn save_reflectance(path: &Path, frame: &ReflectanceFrame) -> Result<()> {
    let header = Header {
        kind: PayloadKind::Reflectance,
        width: frame.width as u32,
        height: frame.height as u32,
        channels: 1,
        bins: 1,
    };
    let mut payload = Vec::with_capacity(frame.albedo.len() * 4);
    for a in &frame.albedo {
        payload.extend_from_slice(&(*a as f32).to_le_bytes());
    }
    save(path, &header, &payload)
}

pub fn load_reflectance(path: &Path) -> Result<ReflectanceFrame> {
    let (h, payload) = load(path, PayloadKind::Reflectance)?;
    let n = (h.width * h.height) as usize;
    let albedo = (0..n).map(|i| f32_at(&payload, i) as f64).collect();
    ReflectanceFrame::from_parts(h.width as usize, h.height as usize, albedo)
}

pub fn save_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let header = Header {
        kind: PayloadKind::Flow,
        width: flow.width as u32,
        height: flow.height as u32,
        channels: 2,
        bins: 1,
    };
    let mut payload = Vec::with_capacity(flow.u.len() * 8);
    for i in 0..flow.u.len() {
        payload.extend_from_slice(&(flow.u[i] as f32).to_le_bytes());
        payload.extend_from_slice(&(flow.v[i] as f32).to_le_bytes());
    }
    save(path, &header, &payload)
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let (h, payload) = load(path, PayloadKind::Flow)?;
    let n = (h.width * h.height) as usize;
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        u.push(f32_at(&payload, 2 * i) as f64);
        v.push(f32_at(&payload, 2 * i + 1) as f64);
    }
    FlowField::from_parts(h.width as usize, h.height as usize, u, v)
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let header = Header {
        kind: PayloadKind::Mask,
        width: mask.width as u32,
        height: mask.height as u32,
        channels: 1,
        bins: 1,
    };
    let payload: Vec<u8> = mask.data.iter().map(|&b| b as u8).collect();
    save(path, &header, &payload)
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let (h, payload) = load(path, PayloadKind::Mask)?;
    let data = payload.iter().map(|&b| b != 0).collect();
    Mask::from_parts(h.width as usize, h.height as usize, data)
}

/// Sidecar metadata for histogram cubes: the shared bin grid and cycle count.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSidecar {
    pub grid: BinGrid,
    pub cycles: u64,
    pub bin_width_s: f64,
}

/// Saves the cube payload at `path` and a JSON sidecar at `path` with its
/// extension replaced by `json`.
pub fn save_cube(path: &Path, cube: &PhotonCube, cfg: &crate::config::SensorConfig) -> Result<()> {
    let header = Header {
        kind: PayloadKind::Histogram,
        width: cube.width as u32,
        height: cube.height as u32,
        channels: 1,
        bins: cube.grid.n_sub,
    };
    let mut payload = Vec::with_capacity(cube.counts.len() * 4);
    for c in &cube.counts {
        payload.extend_from_slice(&c.to_le_bytes());
    }
    save(path, &header, &payload)?;
    let sidecar = CubeSidecar {
        grid: cube.grid,
        cycles: cube.cycles,
        bin_width_s: cube.grid.bin_width_s(cfg),
    };
    let text = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(sidecar_path(path), text).map_err(ContainerError::Io)?;
    Ok(())
}

pub fn load_cube(path: &Path) -> Result<PhotonCube> {
    let (h, payload) = load(path, PayloadKind::Histogram)?;
    let text = std::fs::read_to_string(sidecar_path(path)).map_err(ContainerError::Io)?;
    let sidecar: CubeSidecar = serde_json::from_str(&text)?;
    if sidecar.grid.n_sub != h.bins {
        return Err(ContainerError::DimensionOverflow(format!(
            "sidecar bins {} vs header bins {}",
            sidecar.grid.n_sub, h.bins
        ))
        .into());
    }
    let n = (h.width * h.height) as usize * h.bins as usize;
    let counts = (0..n).map(|i| u32_at(&payload, i)).collect();
    Ok(PhotonCube {
        width: h.width as usize,
        height: h.height as usize,
        grid: sidecar.grid,
        cycles: sidecar.cycles,
        counts,
    })
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fspd-container-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn depth_round_trip_is_bitwise_stable() {
        let path = tmp("depth.fspd");
        let mut frame = DepthFrame::filled(5, 3, 2.5);
        frame.valid[7] = false;
        frame.depth_m[7] = 9.0;
        save_depth(&path, &frame).unwrap();
        let loaded = load_depth(&path).unwrap();
        assert_eq!(loaded, frame);
        // save(load(bytes)) reproduces the bytes exactly
        let bytes0 = std::fs::read(&path).unwrap();
        save_depth(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes0);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let path = tmp("magic.fspd");
        std::fs::write(&path, b"NOPE1234567890123456789012").unwrap();
        match load_depth(&path) {
            Err(crate::error::Error::Container(ContainerError::BadMagic)) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_detected() {
        let path = tmp("trunc.fspd");
        let frame = DepthFrame::filled(16, 16, 1.0);
        save_depth(&path, &frame).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match load_depth(&path) {
            Err(crate::error::Error::Container(ContainerError::Truncated { .. })) => {}
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_is_detected() {
        let path = tmp("kind.fspd");
        let frame = ReflectanceFrame::filled(4, 4, 0.5);
        save_reflectance(&path, &frame).unwrap();
        match load_depth(&path) {
            Err(crate::error::Error::Container(ContainerError::KindMismatch { .. })) => {}
            other => panic!("expected KindMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let path = tmp("zero.fspd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&[VERSION, 1, 0, 0]);
        for d in [0u32, 16, 2, 1] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        match load_depth(&path) {
            Err(crate::error::Error::Container(ContainerError::DimensionOverflow(_))) => {}
            other => panic!("expected DimensionOverflow, got {other:?}"),
        }
    }

    #[test]
    fn flow_and_mask_round_trip() {
        let fpath = tmp("flow.fspd");
        let flow = FlowField::from_parts(3, 2, vec![1.0; 6], vec![-2.0; 6]).unwrap();
        save_flow(&fpath, &flow).unwrap();
        assert_eq!(load_flow(&fpath).unwrap(), flow);

        let mpath = tmp("mask.fspd");
        let mask = Mask::from_parts(3, 2, vec![true, false, true, true, false, false]).unwrap();
        save_mask(&mpath, &mask).unwrap();
        assert_eq!(load_mask(&mpath).unwrap(), mask);
    }

    #[test]
    fn cube_round_trip_with_sidecar() {
        let path = tmp("cube.fspd");
        let cfg = crate::config::SensorConfig {
            z_max_m: 10.0,
            n_bins: 100,
            cycles: 50,
            phi_sig: 1.0,
            phi_bkg: 0.0,
            pulse_fwhm_s: 0.0,
            seed: 0,
        };
        let mut cube = PhotonCube::zeros(2, 2, BinGrid::memory(10, 4), 50);
        for (i, c) in cube.counts.iter_mut().enumerate() {
            *c = i as u32;
        }
        save_cube(&path, &cube, &cfg).unwrap();
        assert_eq!(load_cube(&path).unwrap(), cube);
    }
}
