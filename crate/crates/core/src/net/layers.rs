//! Dense building blocks. Each layer has a `declare` function listing its
//! weight sections and a `load` function reading them back, so the schema and
//! the loader cannot drift apart.

use super::schema::Schema;
use super::tensor::{gelu, softmax, Mat};
use super::weights::WeightContainer;
use crate::error::{Error, Result};

fn load_mat(w: &WeightContainer, name: &str, rows: usize, cols: usize) -> Result<Mat> {
    let t = w.get(name)?;
    if t.shape != [rows, cols] {
        return Err(Error::invalid(format!(
            "weight section {name:?} has shape {:?}, expected [{rows}, {cols}]",
            t.shape
        )));
    }
    Mat::from_vec(rows, cols, t.data.clone())
}

fn load_vec(w: &WeightContainer, name: &str, len: usize) -> Result<Vec<f32>> {
    let t = w.get(name)?;
    if t.shape != [len] {
        return Err(Error::invalid(format!(
            "weight section {name:?} has shape {:?}, expected [{len}]",
            t.shape
        )));
    }
    Ok(t.data.clone())
}

pub(crate) fn load_tokens(w: &WeightContainer, name: &str, rows: usize, d: usize) -> Result<Mat> {
    load_mat(w, name, rows, d)
}

/// `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn declare(s: &mut Schema, prefix: &str, input: usize, output: usize) {
        s.uniform(&format!("{prefix}.weight"), vec![output, input], input);
        s.uniform(&format!("{prefix}.bias"), vec![output], input);
    }

    pub fn load(w: &WeightContainer, prefix: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Linear {
            weight: load_mat(w, &format!("{prefix}.weight"), output, input)?,
            bias: load_vec(w, &format!("{prefix}.bias"), output)?,
        })
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        x.linear(&self.weight, &self.bias)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl LayerNorm {
    pub const EPS: f32 = 1e-5;

    pub fn declare(s: &mut Schema, prefix: &str, d: usize) {
        s.ones(&format!("{prefix}.gamma"), vec![d]);
        s.zeros(&format!("{prefix}.beta"), vec![d]);
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: load_vec(w, &format!("{prefix}.gamma"), d)?,
            beta: load_vec(w, &format!("{prefix}.beta"), d)?,
        })
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.gamma.len() {
            return Err(Error::invalid(format!(
                "layer norm of width {} applied to width {}",
                self.gamma.len(),
                x.cols
            )));
        }
        let mut out = x.clone();
        let n = x.cols as f32;
        for r in 0..x.rows {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f32>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + Self::EPS).sqrt();
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma[i] + self.beta[i];
            }
        }
        Ok(out)
    }
}

/// Multi-head scaled dot-product attention with separate query, key, value
/// and output projections.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl MultiHeadAttention {
    pub fn declare(s: &mut Schema, prefix: &str, d: usize) {
        for p in ["q", "k", "v", "out"] {
            Linear::declare(s, &format!("{prefix}.{p}"), d, d);
        }
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::invalid(format!("width {d} is not divisible into {heads} heads")));
        }
        Ok(MultiHeadAttention {
            heads,
            q: Linear::load(w, &format!("{prefix}.q"), d, d)?,
            k: Linear::load(w, &format!("{prefix}.k"), d, d)?,
            v: Linear::load(w, &format!("{prefix}.v"), d, d)?,
            out: Linear::load(w, &format!("{prefix}.out"), d, d)?,
        })
    }

    pub fn forward(&self, queries: &Mat, context: &Mat) -> Result<Mat> {
        Ok(self.forward_with_probs(queries, context)?.0)
    }

    /// Also returns the attention probabilities, one `queries × context`
    /// matrix per head.
    pub fn forward_with_probs(&self, queries: &Mat, context: &Mat) -> Result<(Mat, Vec<Mat>)> {
        let d = self.q.in_dim();
        if queries.cols != d || context.cols != d {
            return Err(Error::invalid(format!(
                "attention of width {d} given queries of width {} and context of width {}",
                queries.cols, context.cols
            )));
        }
        if context.rows == 0 {
            return Err(Error::invalid("attention context is empty"));
        }
        let q = self.q.forward(queries)?;
        let k = self.k.forward(context)?;
        let v = self.v.forward(context)?;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let mut mixed = Mat::zeros(queries.rows, d);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let mut p = Mat::zeros(queries.rows, context.rows);
            for i in 0..queries.rows {
                let qi = &q.row(i)[cols.clone()];
                let row = p.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k.row(j)[cols.clone()];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                }
                softmax(row);
                let out = &mut mixed.row_mut(i)[cols.clone()];
                for (j, pij) in p.row(i).iter().enumerate() {
                    for (o, vv) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *o += pij * vv;
                    }
                }
            }
            probs.push(p);
        }
        Ok((self.out.forward(&mixed)?, probs))
    }
}

/// Two-layer GELU feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn declare(s: &mut Schema, prefix: &str, d: usize, hidden: usize) {
        Linear::declare(s, &format!("{prefix}.fc1"), d, hidden);
        Linear::declare(s, &format!("{prefix}.fc2"), hidden, d);
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize, hidden: usize) -> Result<Self> {
        Ok(FeedForward {
            fc1: Linear::load(w, &format!("{prefix}.fc1"), d, hidden)?,
            fc2: Linear::load(w, &format!("{prefix}.fc2"), hidden, d)?,
        })
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        self.fc2.forward(&self.fc1.forward(x)?.map(gelu))
    }
}

/// Pre-norm block: `x = q + attn(norm_q(q), norm_ctx(ctx))`, then
/// `x + ffn(norm_ff(x))`. Self-attention passes the queries as context.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub norm_q: LayerNorm,
    pub norm_ctx: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl AttentionBlock {
    pub fn declare(s: &mut Schema, prefix: &str, d: usize, ffn: usize) {
        LayerNorm::declare(s, &format!("{prefix}.norm_q"), d);
        LayerNorm::declare(s, &format!("{prefix}.norm_ctx"), d);
        MultiHeadAttention::declare(s, &format!("{prefix}.attn"), d);
        LayerNorm::declare(s, &format!("{prefix}.norm_ff"), d);
        FeedForward::declare(s, &format!("{prefix}.ff"), d, ffn);
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize, ffn: usize, heads: usize) -> Result<Self> {
        Ok(AttentionBlock {
            norm_q: LayerNorm::load(w, &format!("{prefix}.norm_q"), d)?,
            norm_ctx: LayerNorm::load(w, &format!("{prefix}.norm_ctx"), d)?,
            attn: MultiHeadAttention::load(w, &format!("{prefix}.attn"), d, heads)?,
            norm_ff: LayerNorm::load(w, &format!("{prefix}.norm_ff"), d)?,
            ff: FeedForward::load(w, &format!("{prefix}.ff"), d, ffn)?,
        })
    }

    pub fn forward(&self, queries: &Mat, context: &Mat) -> Result<Mat> {
        let q = self.norm_q.forward(queries)?;
        let c = self.norm_ctx.forward(context)?;
        let x = queries.add(&self.attn.forward(&q, &c)?)?;
        x.add(&self.ff.forward(&self.norm_ff.forward(&x)?)?)
    }

    pub fn forward_self(&self, x: &Mat) -> Result<Mat> {
        self.forward(x, x)
    }
}

/// Decoder block: self-attention, cross-attention to a second token set,
/// then feed-forward; all sublayers pre-norm with residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_q: LayerNorm,
    pub norm_ctx: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderBlock {
    pub fn declare(s: &mut Schema, prefix: &str, d: usize, ffn: usize) {
        LayerNorm::declare(s, &format!("{prefix}.norm_self"), d);
        MultiHeadAttention::declare(s, &format!("{prefix}.self_attn"), d);
        LayerNorm::declare(s, &format!("{prefix}.norm_q"), d);
        LayerNorm::declare(s, &format!("{prefix}.norm_ctx"), d);
        MultiHeadAttention::declare(s, &format!("{prefix}.cross_attn"), d);
        LayerNorm::declare(s, &format!("{prefix}.norm_ff"), d);
        FeedForward::declare(s, &format!("{prefix}.ff"), d, ffn);
    }

    pub fn load(w: &WeightContainer, prefix: &str, d: usize, ffn: usize, heads: usize) -> Result<Self> {
        Ok(DecoderBlock {
            norm_self: LayerNorm::load(w, &format!("{prefix}.norm_self"), d)?,
            self_attn: MultiHeadAttention::load(w, &format!("{prefix}.self_attn"), d, heads)?,
            norm_q: LayerNorm::load(w, &format!("{prefix}.norm_q"), d)?,
            norm_ctx: LayerNorm::load(w, &format!("{prefix}.norm_ctx"), d)?,
            cross_attn: MultiHeadAttention::load(w, &format!("{prefix}.cross_attn"), d, heads)?,
            norm_ff: LayerNorm::load(w, &format!("{prefix}.norm_ff"), d)?,
            ff: FeedForward::load(w, &format!("{prefix}.ff"), d, ffn)?,
        })
    }

    pub fn forward(&self, x: &Mat, context: &Mat) -> Result<Mat> {
        let n = self.norm_self.forward(x)?;
        let x = x.add(&self.self_attn.forward(&n, &n)?)?;
        let q = self.norm_q.forward(&x)?;
        let c = self.norm_ctx.forward(context)?;
        let x = x.add(&self.cross_attn.forward(&q, &c)?)?;
        x.add(&self.ff.forward(&self.norm_ff.forward(&x)?)?)
    }
}

/// 3×3 convolution over a `h × w` grid stored one row per cell, zero padded.
/// The weight is a linear map from the 9·C neighbourhood (row-major over the
/// 3×3 window, channels innermost) to the output channels.
pub fn conv3x3(grid: &Mat, h: usize, w: usize, layer: &Linear) -> Result<Mat> {
    let c = grid.cols;
    if grid.rows != h * w || layer.in_dim() != 9 * c {
        return Err(Error::invalid(format!(
            "3x3 convolution over a {h}x{w} grid of width {c} does not fit a layer with {} inputs",
            layer.in_dim()
        )));
    }
    let mut patches = Mat::zeros(h * w, 9 * c);
    for y in 0..h {
        for x in 0..w {
            let dst = patches.row_mut(y * w + x);
            for (tap, (dy, dx)) in (-1i64..=1)
                .flat_map(|dy| (-1i64..=1).map(move |dx| (dy, dx)))
                .enumerate()
            {
                let (sy, sx) = (y as i64 + dy, x as i64 + dx);
                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                    continue;
                }
                dst[tap * c..(tap + 1) * c].copy_from_slice(grid.row(sy as usize * w + sx as usize));
            }
        }
    }
    layer.forward(&patches)
}
