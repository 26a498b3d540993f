//! File formats: OGS scenes, TUM trajectories, PPM/PGM images, feature
//! planes, key-value configuration, and JSON manifests and queries.

pub mod config;
pub mod features;
pub mod manifest;
pub mod ogs;
pub mod pnm;
pub mod tum;

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub use config::StreamConfig;
pub use manifest::{read_queries, StreamManifest};
pub use ogs::{read_ogs, write_ogs};
pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use tum::{read_tum, write_tum, TumRecord};
