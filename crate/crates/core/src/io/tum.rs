//! Trajectories as text: a `#` header line followed by one line per frame,
//! `index tx ty tz qx qy qz qw`, numbers in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{read_text, write_file};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::{CameraPose, Quat};

pub const HEADER: &str = "# streamsplat trajectory v1: index tx ty tz qx qy qz qw";

/// One trajectory line exactly as stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumRecord {
    pub index: u64,
    pub translation: [f64; 3],
    /// `(w, x, y, z)`.
    pub rotation: Quat,
}

impl TumRecord {
    pub fn from_pose(index: u64, pose: &CameraPose) -> Self {
        TumRecord {
            index,
            translation: pose.translation.into(),
            rotation: pose.quat(),
        }
    }

    pub fn pose(&self) -> Result<CameraPose> {
        CameraPose::from_quat(self.rotation.normalized()?, Vector3::from(self.translation))
    }
}

pub fn records_from_poses(poses: &[CameraPose]) -> Vec<TumRecord> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| TumRecord::from_pose(i as u64, p))
        .collect()
}

pub fn tum_string(records: &[TumRecord]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in records {
        let [tx, ty, tz] = r.translation;
        let q = r.rotation;
        let _ = writeln!(s, "{} {tx} {ty} {tz} {} {} {} {}", r.index, q.x, q.y, q.z, q.w);
    }
    s
}

pub fn parse_tum(text: &str, path: &Path) -> Result<Vec<TumRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(perr(format!("expected 8 fields, found {}", fields.len())));
        }
        let index: u64 = fields[0]
            .parse()
            .map_err(|_| perr(format!("bad frame index {:?}", fields[0])))?;
        let mut v = [0.0f64; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| perr(format!("bad number {f:?}")))?;
            if !slot.is_finite() {
                return Err(perr(format!("non-finite value {f:?}")));
            }
        }
        out.push(TumRecord {
            index,
            translation: [v[0], v[1], v[2]],
            rotation: Quat::new(v[6], v[3], v[4], v[5]),
        });
    }
    Ok(out)
}

pub fn write_tum(path: &Path, records: &[TumRecord]) -> Result<()> {
    write_file(path, tum_string(records).as_bytes())
}

pub fn read_tum(path: &Path) -> Result<Vec<TumRecord>> {
    parse_tum(&read_text(path)?, path)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let recs = read_tum(path)?;
    let poses = recs
        .iter()
        .map(|r| {
            r.pose()
                .map_err(|e| Error::format(path, format!("frame {}: {e}", r.index)))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(recs.iter().map(|r| r.index).collect(), poses).map_err(|e| Error::format(path, e.to_string()))
}
