//! Dense prediction heads (two-tap reassembly, convolutional refinement and
//! pixel-shuffle upsampling) and the MLP pose head.

use nalgebra::Vector3;

use super::layers::{conv3x3, AttentionBlock, Linear};
use super::schema::Schema;
use super::tensor::{relu, Mat};
use super::weights::WeightContainer;
use super::TokenGrid;
use crate::error::{Error, Result};
use crate::gaussian::GaussianPrimitive;
use crate::geometry::{CameraPose, Quat};

/// Channel counts shared by every dense head of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDims {
    pub d: usize,
    pub ffn: usize,
    pub heads: usize,
    pub patch: usize,
    pub channels: usize,
    pub up_channels: usize,
}

/// Token-to-pixel head. The first tap is the input tokens, the second the
/// same tokens after one cross-attention block against the conditioning
/// context; both are projected, summed, refined on the token grid,
/// pixel-shuffled to full resolution, refined again and mapped to outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub dims: HeadDims,
    pub outputs: usize,
    pub cond: AttentionBlock,
    pub tap_a: Linear,
    pub tap_b: Linear,
    pub conv_token: Linear,
    pub upsample: Linear,
    pub conv_pixel: Linear,
    pub out: Linear,
}

impl DenseHead {
    pub fn declare(s: &mut Schema, prefix: &str, dims: HeadDims, outputs: usize) {
        let (c, u, p) = (dims.channels, dims.up_channels, dims.patch);
        AttentionBlock::declare(s, &format!("{prefix}.cond"), dims.d, dims.ffn);
        Linear::declare(s, &format!("{prefix}.tap_a"), dims.d, c);
        Linear::declare(s, &format!("{prefix}.tap_b"), dims.d, c);
        Linear::declare(s, &format!("{prefix}.conv_token"), 9 * c, c);
        Linear::declare(s, &format!("{prefix}.upsample"), c, p * p * u);
        Linear::declare(s, &format!("{prefix}.conv_pixel"), 9 * u, u);
        Linear::declare(s, &format!("{prefix}.out"), u, outputs);
    }

    pub fn load(w: &WeightContainer, prefix: &str, dims: HeadDims, outputs: usize) -> Result<Self> {
        let (c, u, p) = (dims.channels, dims.up_channels, dims.patch);
        Ok(DenseHead {
            dims,
            outputs,
            cond: AttentionBlock::load(w, &format!("{prefix}.cond"), dims.d, dims.ffn, dims.heads)?,
            tap_a: Linear::load(w, &format!("{prefix}.tap_a"), dims.d, c)?,
            tap_b: Linear::load(w, &format!("{prefix}.tap_b"), dims.d, c)?,
            conv_token: Linear::load(w, &format!("{prefix}.conv_token"), 9 * c, c)?,
            upsample: Linear::load(w, &format!("{prefix}.upsample"), c, p * p * u)?,
            conv_pixel: Linear::load(w, &format!("{prefix}.conv_pixel"), 9 * u, u)?,
            out: Linear::load(w, &format!("{prefix}.out"), u, outputs)?,
        })
    }

    /// Raw per-pixel outputs, `(H·W) × outputs`, rows in raster order.
    pub fn forward(&self, tokens: &TokenGrid, context: &Mat) -> Result<Mat> {
        let (gh, gw) = tokens.grid_shape;
        let p = self.dims.patch;
        let u = self.dims.up_channels;
        if tokens.tokens.rows != gh * gw {
            return Err(Error::invalid("token count does not match the grid shape"));
        }
        let conditioned = self.cond.forward(&tokens.tokens, context)?;
        let fused = self
            .tap_a
            .forward(&tokens.tokens)?
            .add(&self.tap_b.forward(&conditioned)?)?;
        let refined = conv3x3(&fused, gh, gw, &self.conv_token)?.map(relu);
        let up = self.upsample.forward(&refined)?;
        let (h, w) = (gh * p, gw * p);
        let mut pixels = Mat::zeros(h * w, u);
        for ty in 0..gh {
            for tx in 0..gw {
                let src = up.row(ty * gw + tx);
                for py in 0..p {
                    for px in 0..p {
                        let dst = (ty * p + py) * w + tx * p + px;
                        let off = (py * p + px) * u;
                        pixels.row_mut(dst).copy_from_slice(&src[off..off + u]);
                    }
                }
            }
        }
        let pixels = conv3x3(&pixels, h, w, &self.conv_pixel)?.map(relu);
        self.out.forward(&pixels)
    }
}

fn softplus64(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-pixel centres and confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct PosMaps {
    pub width: usize,
    pub height: usize,
    pub centers: Vec<Vector3<f64>>,
    /// `1 + softplus(raw)`, strictly above 1.
    pub confidence: Vec<f64>,
}

impl PosMaps {
    pub fn from_raw(raw: &Mat, width: usize, height: usize) -> Result<Self> {
        if raw.cols != 4 || raw.rows != width * height {
            return Err(Error::invalid("position head output has the wrong shape"));
        }
        let mut centers = Vec::with_capacity(raw.rows);
        let mut confidence = Vec::with_capacity(raw.rows);
        for r in 0..raw.rows {
            let v = raw.row(r);
            centers.push(Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64));
            // floored one ulp above 1 so the weight stays strictly above 1
            confidence.push((1.0 + softplus64(v[3] as f64)).max(1.0 + f64::EPSILON));
        }
        Ok(PosMaps {
            width,
            height,
            centers,
            confidence,
        })
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centers.iter().sum::<Vector3<f64>>() / self.centers.len().max(1) as f64
    }
}

/// Per-pixel Gaussian attributes other than the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct GsMaps {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub rot: Vec<Quat>,
    pub scale: Vec<Vector3<f64>>,
    pub opacity: Vec<f64>,
    pub color: Vec<Vector3<f64>>,
    /// Row-major `H·W × K`.
    pub lang: Vec<f64>,
}

/// Smallest scale a head can emit.
pub const SCALE_FLOOR: f64 = 1e-6;

impl GsMaps {
    pub fn channels(k: usize) -> usize {
        11 + k
    }

    pub fn from_raw(raw: &Mat, width: usize, height: usize, k: usize, scale_base: f64) -> Result<Self> {
        if raw.cols != Self::channels(k) || raw.rows != width * height {
            return Err(Error::invalid("attribute head output has the wrong shape"));
        }
        let n = raw.rows;
        let mut m = GsMaps {
            width,
            height,
            k,
            rot: Vec::with_capacity(n),
            scale: Vec::with_capacity(n),
            opacity: Vec::with_capacity(n),
            color: Vec::with_capacity(n),
            lang: Vec::with_capacity(n * k),
        };
        for r in 0..n {
            let v: Vec<f64> = raw.row(r).iter().map(|x| *x as f64).collect();
            let q = Quat::new(v[0], v[1], v[2], v[3]);
            m.rot.push(if q.norm() < 1e-8 {
                Quat::IDENTITY
            } else {
                q.normalized()?
            });
            m.scale.push(Vector3::from_fn(|i, _| {
                (scale_base * softplus64(v[4 + i])).max(SCALE_FLOOR)
            }));
            m.opacity.push(sigmoid64(v[7]));
            m.color.push(Vector3::from_fn(|i, _| sigmoid64(v[8 + i])));
            m.lang.extend_from_slice(&v[11..11 + k]);
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.rot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rot.is_empty()
    }

    pub fn primitive(&self, i: usize, mu: Vector3<f64>, confidence: f64) -> GaussianPrimitive {
        GaussianPrimitive {
            mu,
            rot: self.rot[i],
            scale: self.scale[i],
            opacity: self.opacity[i],
            color: self.color[i],
            lang: self.lang[i * self.k..(i + 1) * self.k].to_vec(),
            confidence,
        }
    }
}

/// `linear → ReLU → linear` mapping a pose token to
/// `(qw, qx, qy, qz, tx, ty, tz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl PoseHead {
    pub fn declare(s: &mut Schema, prefix: &str, d: usize) {
        Linear::declare(s, &format!("{prefix}.fc1"), d, d);
        Linear::declare(s, &format!("{prefix}.fc2"), d, 7);
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize) -> Result<Self> {
        Ok(PoseHead {
            fc1: Linear::load(w, &format!("{prefix}.fc1"), d, d)?,
            fc2: Linear::load(w, &format!("{prefix}.fc2"), d, 7)?,
        })
    }

    pub fn raw(&self, token: &[f32]) -> Result<[f64; 7]> {
        let x = Mat::from_vec(1, token.len(), token.to_vec())?;
        let y = self.fc2.forward(&self.fc1.forward(&x)?.map(relu))?;
        Ok(std::array::from_fn(|i| y.data[i] as f64))
    }

    pub fn forward(&self, token: &[f32]) -> Result<(CameraPose, [f64; 7])> {
        let raw = self.raw(token)?;
        Ok((pose_from_raw(&raw)?, raw))
    }
}

/// Builds a pose from `(qw, qx, qy, qz, tx, ty, tz)`, normalizing the
/// quaternion.
pub fn pose_from_raw(raw: &[f64; 7]) -> Result<CameraPose> {
    let q = Quat::new(raw[0], raw[1], raw[2], raw[3]);
    if q.norm() < 1e-8 {
        return Err(Error::DegeneratePose(format!(
            "pose head produced a quaternion of norm {:e}",
            q.norm()
        )));
    }
    CameraPose::from_quat(q.normalized()?, Vector3::new(raw[4], raw[5], raw[6]))
}
