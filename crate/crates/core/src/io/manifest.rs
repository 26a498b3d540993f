//! JSON stream manifests and query files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "frames": ["frames/000.ppm", "frames/001.ppm"],
//!   "intrinsics": {"fx": 40.0, "fy": 40.0, "cx": 15.5, "cy": 15.5, "width": 32, "height": 32},
//!   "gt_trajectory": "gt.tum",
//!   "gt_features": ["feat/000.ogsf", "feat/001.ogsf"],
//!   "config": {"voxel_size": "0.05"}
//! }
//! ```
//!
//! Paths are relative to the manifest. Queries map labels to K floats:
//! `{"version": 1, "queries": {"chair": [0.1, ...]}}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::StreamConfig;
use super::{read_text, write_file};
use crate::error::{Error, Result};
use crate::eval::TextQuery;
use crate::geometry::Intrinsics;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl IntrinsicsSpec {
    pub fn to_intrinsics(self) -> Result<Intrinsics> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

impl From<Intrinsics> for IntrinsicsSpec {
    fn from(k: Intrinsics) -> Self {
        IntrinsicsSpec {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamManifest {
    pub version: u32,
    pub frames: Vec<PathBuf>,
    pub intrinsics: IntrinsicsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gt_features: Vec<PathBuf>,
    /// Overrides applied on top of the configuration file, as text values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
    /// Directory the relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base: PathBuf,
}

impl StreamManifest {
    pub fn new(frames: Vec<PathBuf>, intrinsics: Intrinsics) -> Self {
        StreamManifest {
            version: MANIFEST_VERSION,
            frames,
            intrinsics: intrinsics.into(),
            gt_trajectory: None,
            gt_features: Vec::new(),
            config: BTreeMap::new(),
            base: PathBuf::new(),
        }
    }

    /// Parses and checks structure; file existence is checked by
    /// [`StreamManifest::check_files`].
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m: StreamManifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let bad = |msg: String| Error::format(path, msg);
        if m.version != MANIFEST_VERSION {
            return Err(bad(format!("unsupported manifest version {}", m.version)));
        }
        if m.frames.is_empty() {
            return Err(bad("manifest lists no frames".into()));
        }
        m.intrinsics.to_intrinsics().map_err(|e| bad(e.to_string()))?;
        if !m.gt_features.is_empty() && m.gt_features.len() != m.frames.len() {
            return Err(bad(format!(
                "{} feature maps for {} frames",
                m.gt_features.len(),
                m.frames.len()
            )));
        }
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn frame_paths(&self) -> Vec<PathBuf> {
        self.frames.iter().map(|p| self.resolve(p)).collect()
    }

    pub fn feature_paths(&self) -> Vec<PathBuf> {
        self.gt_features.iter().map(|p| self.resolve(p)).collect()
    }

    pub fn trajectory_path(&self) -> Option<PathBuf> {
        self.gt_trajectory.as_deref().map(|p| self.resolve(p))
    }

    pub fn check_files(&self) -> Result<()> {
        let all = self
            .frame_paths()
            .into_iter()
            .chain(self.feature_paths())
            .chain(self.trajectory_path());
        for p in all {
            if !p.is_file() {
                return Err(Error::io(&p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// Applies the manifest's overrides to `cfg`.
    pub fn apply_overrides(&self, cfg: &mut StreamConfig, path: &Path) -> Result<()> {
        for (k, v) in &self.config {
            cfg.set(k, v).map_err(|msg| Error::format(path, msg))?;
        }
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryFile {
    version: u32,
    queries: BTreeMap<String, Vec<f64>>,
}

/// Parses a query file. Embeddings are not validated here so that a single
/// bad label can be reported without rejecting the others.
pub fn parse_queries(text: &str, path: &Path) -> Result<Vec<TextQuery>> {
    let f: QueryFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if f.version != MANIFEST_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported query file version {}", f.version),
        ));
    }
    Ok(f.queries
        .into_iter()
        .map(|(label, embedding)| TextQuery { label, embedding })
        .collect())
}

pub fn queries_json(queries: &[TextQuery]) -> String {
    let f = QueryFile {
        version: MANIFEST_VERSION,
        queries: queries.iter().map(|q| (q.label.clone(), q.embedding.clone())).collect(),
    };
    serde_json::to_string_pretty(&f).expect("queries serialize") + "\n"
}

pub fn read_queries(path: &Path) -> Result<Vec<TextQuery>> {
    parse_queries(&read_text(path)?, path)
}

pub fn write_queries(path: &Path, queries: &[TextQuery]) -> Result<()> {
    write_file(path, queries_json(queries).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut m = StreamManifest::new(vec!["a.ppm".into()], Intrinsics::centered(30.0, 8, 6));
        m.config.insert("voxel_size".into(), "0.1".into());
        let back = StreamManifest::parse(&m.to_json(), Path::new("/d/m.json")).unwrap();
        assert_eq!(back.frame_paths(), vec![PathBuf::from("/d/a.ppm")]);
        assert_eq!(back.to_json(), m.to_json());
        let mut cfg = StreamConfig::default();
        back.apply_overrides(&mut cfg, Path::new("m.json")).unwrap();
        assert_eq!(cfg.voxel_size, 0.1);
    }

    #[test]
    fn json_errors_carry_lines() {
        let err = StreamManifest::parse("{\n\"version\": 1,\n\"frames\": [}\n", Path::new("m.json")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_frames_rejected() {
        let m = StreamManifest::new(vec![], Intrinsics::centered(30.0, 8, 6));
        assert!(StreamManifest::parse(&m.to_json(), Path::new("m.json")).is_err());
    }

    #[test]
    fn queries_round_trip() {
        let q = vec![
            TextQuery::new("a", vec![1.0, 0.0]).unwrap(),
            TextQuery::new("b", vec![0.0, 0.5]).unwrap(),
        ];
        let back = parse_queries(&queries_json(&q), Path::new("q.json")).unwrap();
        assert_eq!(back, q);
    }
}
