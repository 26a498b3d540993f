//! Stream configuration as plain `key = value` text. `#` starts a comment;
//! the first line may be `# streamsplat config v1`. Unknown keys are errors.

use std::path::{Path, PathBuf};

use super::read_text;
use crate::error::{Error, Result};
use crate::gaussian::DEFAULT_VOXEL_SIZE;
use crate::net::NetConfig;

pub const HEADER: &str = "# streamsplat config v1";

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Expected frame size; `None` accepts whatever the manifest declares.
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub net: NetConfig,
    pub voxel_size: f64,
    pub seed: u64,
    /// Weight file; relative paths resolve against the config file's directory.
    pub weights: Option<PathBuf>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            width: None,
            height: None,
            net: NetConfig::default(),
            voxel_size: DEFAULT_VOXEL_SIZE,
            seed: 0,
            weights: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "width",
    "height",
    "d",
    "patch",
    "heads",
    "ffn",
    "encoder_blocks",
    "decoder_blocks",
    "global_blocks",
    "anchors",
    "k",
    "head_channels",
    "up_channels",
    "scale_base",
    "voxel_size",
    "seed",
    "weights",
];

impl StreamConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let n = &mut self.net;
        match key {
            "width" => self.width = Some(num(key, value)?),
            "height" => self.height = Some(num(key, value)?),
            "d" => n.d = num(key, value)?,
            "patch" => n.patch = num(key, value)?,
            "heads" => n.heads = num(key, value)?,
            "ffn" => n.ffn = num(key, value)?,
            "encoder_blocks" => n.encoder_blocks = num(key, value)?,
            "decoder_blocks" => n.decoder_blocks = num(key, value)?,
            "global_blocks" => n.global_blocks = num(key, value)?,
            "anchors" => n.anchors = num(key, value)?,
            "k" => n.k = num(key, value)?,
            "head_channels" => n.head_channels = num(key, value)?,
            "up_channels" => n.up_channels = num(key, value)?,
            "scale_base" => n.scale_base = num(key, value)?,
            "voxel_size" => self.voxel_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "weights" => self.weights = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid("voxel size must be positive"));
        }
        if matches!(self.width, Some(0)) || matches!(self.height, Some(0)) {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = StreamConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr("expected key = value".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(perr)?;
        }
        if let Some(w) = &cfg.weights {
            if w.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.weights = Some(dir.join(w));
                }
            }
        }
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let n = &self.net;
        let mut s = format!("{HEADER}\n");
        if let Some(w) = self.width {
            s += &format!("width = {w}\n");
        }
        if let Some(h) = self.height {
            s += &format!("height = {h}\n");
        }
        s += &format!(
            "d = {}\npatch = {}\nheads = {}\nffn = {}\nencoder_blocks = {}\ndecoder_blocks = {}\n\
             global_blocks = {}\nanchors = {}\nk = {}\nhead_channels = {}\nup_channels = {}\n\
             scale_base = {}\nvoxel_size = {}\nseed = {}\n",
            n.d,
            n.patch,
            n.heads,
            n.ffn,
            n.encoder_blocks,
            n.decoder_blocks,
            n.global_blocks,
            n.anchors,
            n.k,
            n.head_channels,
            n.up_channels,
            n.scale_base,
            self.voxel_size,
            self.seed
        );
        if let Some(w) = &self.weights {
            s += &format!("weights = {}\n", w.display());
        }
        s
    }
}
