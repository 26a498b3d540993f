//! Binary scene format, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "OGSSCENE"
//! 8       4     u32 version = 1
//! 12      4     u32 reserved = 0
//! 16      4     u32 K (language feature width)
//! 20      8     u64 primitive count N
//! 28      N·4·(15+K)
//!               per primitive, f32: mu(3) rot(4, w x y z) scale(3) opacity(1)
//!               color(3) lang(K) confidence(1)
//! ```

use std::path::Path;

use nalgebra::Vector3;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianPrimitive, GaussianScene};
use crate::geometry::Quat;

pub const MAGIC: &[u8; 8] = b"OGSSCENE";
pub const VERSION: u32 = 1;
const HEADER: usize = 28;

pub fn ogs_bytes(scene: &GaussianScene) -> Vec<u8> {
    let k = scene.k();
    let mut out = Vec::with_capacity(HEADER + scene.len() * 4 * (15 + k));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(scene.len() as u64).to_le_bytes());
    for p in scene.primitives() {
        let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        p.mu.iter().for_each(|v| put(*v));
        p.rot.to_array().iter().for_each(|v| put(*v));
        p.scale.iter().for_each(|v| put(*v));
        put(p.opacity);
        p.color.iter().for_each(|v| put(*v));
        p.lang.iter().for_each(|v| put(*v));
        put(p.confidence);
    }
    out
}

/// Parses a scene; primitives are validated but stored values are kept as
/// read, so a read-write cycle reproduces the bytes.
pub fn parse_ogs(bytes: &[u8], voxel_size: f64, path: &Path) -> Result<GaussianScene> {
    let bad = |msg: String| Error::format(path, msg);
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("not an OGS scene (bad magic)".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(bad(format!("unsupported OGS version {version}")));
    }
    if u32_at(12) != 0 {
        return Err(bad("reserved header field is nonzero".into()));
    }
    let k = u32_at(16) as usize;
    let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let stride = 4 * (15 + k);
    let expected = (n as u128) * stride as u128 + HEADER as u128;
    if expected != bytes.len() as u128 {
        return Err(bad(format!(
            "file holds {} bytes but the header declares {n} primitives of K = {k} ({expected} bytes)",
            bytes.len()
        )));
    }
    let mut scene = GaussianScene::new(k, voxel_size)?;
    for (i, rec) in bytes[HEADER..].chunks_exact(stride).enumerate() {
        let v: Vec<f64> = rec
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let p = GaussianPrimitive {
            mu: Vector3::new(v[0], v[1], v[2]),
            rot: Quat::new(v[3], v[4], v[5], v[6]),
            scale: Vector3::new(v[7], v[8], v[9]),
            opacity: v[10],
            color: Vector3::new(v[11], v[12], v[13]),
            lang: v[14..14 + k].to_vec(),
            confidence: v[14 + k],
        };
        scene.push(p).map_err(|e| bad(format!("primitive {i}: {e}")))?;
    }
    Ok(scene)
}

pub fn write_ogs(path: &Path, scene: &GaussianScene) -> Result<()> {
    write_file(path, &ogs_bytes(scene))
}

pub fn read_ogs(path: &Path, voxel_size: f64) -> Result<GaussianScene> {
    parse_ogs(&read_file(path)?, voxel_size, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> GaussianScene {
        let mut s = GaussianScene::new(2, 0.05).unwrap();
        let mut p = GaussianPrimitive::isotropic(
            Vector3::new(0.1, -0.2, 1.5),
            0.03,
            0.7,
            Vector3::new(0.2, 0.4, 0.6),
            vec![0.5, -1.25],
        );
        p.rot = Quat::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.4);
        p.confidence = 2.5;
        s.push(p).unwrap();
        s
    }

    #[test]
    fn header_layout() {
        let b = ogs_bytes(&scene());
        assert_eq!(&b[..8], b"OGSSCENE");
        assert_eq!(b.len(), 28 + 4 * 17);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[20..28].try_into().unwrap()), 1);
    }

    #[test]
    fn bytes_round_trip() {
        let b = ogs_bytes(&scene());
        let back = parse_ogs(&b, 0.05, Path::new("mem")).unwrap();
        assert_eq!(ogs_bytes(&back), b);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let b = ogs_bytes(&scene());
        let err = parse_ogs(&b[..b.len() - 1], 0.05, Path::new("mem")).unwrap_err();
        assert!(err.is_input_error());
    }
}
