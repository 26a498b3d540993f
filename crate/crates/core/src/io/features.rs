//! Feature maps as `OGSF v1\nH W K\n` followed by K planes of H·W
//! little-endian f32 values, plane-major then row-major.

use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::image::FeatureMap;

pub fn feature_bytes(map: &FeatureMap) -> Vec<u8> {
    let (w, h, k) = (map.width(), map.height(), map.k());
    let mut out = format!("OGSF v1\n{h} {w} {k}\n").into_bytes();
    for c in 0..k {
        for px in map.pixels() {
            out.extend_from_slice(&(px[c] as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_features(bytes: &[u8], path: &Path) -> Result<FeatureMap> {
    let bad = |m: &str| Error::format(path, m.to_string());
    let mut lines = bytes.splitn(3, |b| *b == b'\n');
    if lines.next() != Some(b"OGSF v1") {
        return Err(bad("expected OGSF v1 header"));
    }
    let dims: Vec<usize> = lines
        .next()
        .and_then(|l| std::str::from_utf8(l).ok())
        .map(|l| l.split_whitespace().filter_map(|v| v.parse().ok()).collect())
        .unwrap_or_default();
    if dims.len() != 3 {
        return Err(bad("expected 'H W K' dimension line"));
    }
    let (h, w, k) = (dims[0], dims[1], dims[2]);
    let payload = lines.next().unwrap_or(&[]);
    if payload.len() != h * w * k * 4 {
        return Err(bad("payload length does not match the dimensions"));
    }
    let planes: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut map = FeatureMap::zeros(w, h, k);
    let n = w * h;
    for (i, px) in map.data_mut().chunks_exact_mut(k.max(1)).enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            *v = planes[c * n + i];
        }
    }
    Ok(map)
}

pub fn write_features(path: &Path, map: &FeatureMap) -> Result<()> {
    write_file(path, &feature_bytes(map))
}

pub fn read_features(path: &Path) -> Result<FeatureMap> {
    parse_features(&read_file(path)?, path)
}
