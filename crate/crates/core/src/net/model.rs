use sha2::{Digest, Sha256};

use super::heads::{DenseHead, GsMaps, HeadDims, PosMaps, PoseHead};
use super::layers::{load_tokens, AttentionBlock, DecoderBlock, LayerNorm, Linear};
use super::schema::Schema;
use super::tensor::Mat;
use super::weights::WeightContainer;
use crate::error::{Error, Result};
use crate::fuse::{FusionMlp, FUSION_SECTION};
use crate::gaussian::{GaussianPrimitive, DEFAULT_LANG_DIM};
use crate::geometry::CameraPose;
use crate::image::RgbImage;

/// Section holding the numeric hyper-parameters, so a weight file fully
/// describes the network it belongs to.
pub const HYPER_SECTION: &str = "config.hyper";
const HYPER_REVISION: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub d: usize,
    pub patch: usize,
    pub heads: usize,
    pub ffn: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub global_blocks: usize,
    pub anchors: usize,
    pub k: usize,
    pub head_channels: usize,
    pub up_channels: usize,
    pub scale_base: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            d: 64,
            patch: 8,
            heads: 2,
            ffn: 128,
            encoder_blocks: 2,
            decoder_blocks: 2,
            global_blocks: 2,
            anchors: 64,
            k: DEFAULT_LANG_DIM,
            head_channels: 32,
            up_channels: 8,
            scale_base: 0.01,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("patch", self.patch),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("anchors", self.anchors),
            ("k", self.k),
            ("head_channels", self.head_channels),
            ("up_channels", self.up_channels),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("network parameter {name} must be positive")));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::invalid("model width must be divisible by the head count"));
        }
        if !self.d.is_multiple_of(4) {
            return Err(Error::invalid(
                "model width must be a multiple of 4 for the position embedding",
            ));
        }
        if !(self.scale_base > 0.0 && self.scale_base.is_finite()) {
            return Err(Error::invalid("scale base must be positive"));
        }
        Ok(())
    }

    pub fn latent_width(&self) -> usize {
        GaussianPrimitive::latent_width(self.k)
    }

    fn head_dims(&self) -> HeadDims {
        HeadDims {
            d: self.d,
            ffn: self.ffn,
            heads: self.heads,
            patch: self.patch,
            channels: self.head_channels,
            up_channels: self.up_channels,
        }
    }

    fn hyper(&self) -> Vec<f32> {
        vec![
            HYPER_REVISION,
            self.d as f32,
            self.patch as f32,
            self.heads as f32,
            self.ffn as f32,
            self.encoder_blocks as f32,
            self.decoder_blocks as f32,
            self.global_blocks as f32,
            self.anchors as f32,
            self.k as f32,
            self.head_channels as f32,
            self.up_channels as f32,
            self.scale_base as f32,
        ]
    }

    /// Recovers the configuration stored in a weight container.
    pub fn from_container(w: &WeightContainer) -> Result<Self> {
        let h = &w.get(HYPER_SECTION)?.data;
        if h.len() != 13 || h[0] != HYPER_REVISION {
            return Err(Error::invalid("unsupported hyper-parameter section"));
        }
        let u = |i: usize| h[i] as usize;
        let c = NetConfig {
            d: u(1),
            patch: u(2),
            heads: u(3),
            ffn: u(4),
            encoder_blocks: u(5),
            decoder_blocks: u(6),
            global_blocks: u(7),
            anchors: u(8),
            k: u(9),
            head_channels: u(10),
            up_channels: u(11),
            // shortest decimal of the stored f32, so 0.01 comes back as 0.01
            scale_base: h[12].to_string().parse().unwrap_or(h[12] as f64),
        };
        c.validate()?;
        Ok(c)
    }

    /// Every weight section in a fixed order.
    pub fn schema(&self) -> Schema {
        let mut s = Schema::new();
        let (d, ffn) = (self.d, self.ffn);
        let hyper = self.hyper();
        s.zeros(HYPER_SECTION, vec![hyper.len()]);
        Linear::declare(&mut s, "encoder.patch_embed", 3 * self.patch * self.patch, d);
        for i in 0..self.encoder_blocks {
            AttentionBlock::declare(&mut s, &format!("encoder.block{i}"), d, ffn);
        }
        for stream in ["cur", "prev"] {
            for i in 0..self.decoder_blocks {
                DecoderBlock::declare(&mut s, &format!("decoder_r.{stream}.block{i}"), d, ffn);
            }
        }
        s.token("tokens.pose_cur", vec![1, d]);
        s.token("tokens.pose_prev", vec![1, d]);
        s.token("tokens.pose_global_init", vec![1, d]);
        s.token("tokens.anchor_init", vec![self.anchors, d]);
        for stream in ["query", "state"] {
            for i in 0..self.global_blocks {
                DecoderBlock::declare(&mut s, &format!("decoder_g.{stream}.block{i}"), d, ffn);
            }
        }
        LayerNorm::declare(&mut s, "decoder_g.state_norm", d);
        for stage in ["head_r", "head_g"] {
            DenseHead::declare(&mut s, &format!("{stage}.pos"), self.head_dims(), 4);
            DenseHead::declare(
                &mut s,
                &format!("{stage}.gs"),
                self.head_dims(),
                GsMaps::channels(self.k),
            );
            PoseHead::declare(&mut s, &format!("{stage}.pose"), d);
        }
        let f = self.latent_width();
        s.uniform(&format!("{FUSION_SECTION}.w1"), vec![f, 2 * f], 2 * f);
        s.uniform(&format!("{FUSION_SECTION}.b1"), vec![f], 2 * f);
        s.uniform(&format!("{FUSION_SECTION}.w2"), vec![f, f], f);
        s.uniform(&format!("{FUSION_SECTION}.b2"), vec![f], f);
        s
    }

    /// Seeded random weights for this architecture.
    pub fn random_weights(&self, seed: u64) -> Result<WeightContainer> {
        self.validate()?;
        let mut w = self.schema().random_container(seed);
        let hyper = self.hyper();
        w.insert(HYPER_SECTION, vec![hyper.len()], hyper);
        Ok(w)
    }
}

/// Patch tokens of one image together with their grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub tokens: Mat,
    pub grid_shape: (usize, usize),
}

impl TokenGrid {
    pub fn new(tokens: Mat, grid_shape: (usize, usize)) -> Result<Self> {
        if tokens.rows != grid_shape.0 * grid_shape.1 {
            return Err(Error::invalid("token count does not match the grid shape"));
        }
        if !tokens.is_finite() {
            return Err(Error::invalid("token grid contains non-finite values"));
        }
        Ok(TokenGrid { tokens, grid_shape })
    }

    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }

    /// Arithmetic mean over tokens.
    pub fn pooled(&self) -> Vec<f32> {
        self.tokens.mean_rows()
    }

    pub fn heap_bytes(&self) -> usize {
        self.tokens.data.capacity() * std::mem::size_of::<f32>()
    }
}

/// A single `d`-wide token.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseToken {
    pub vec: Vec<f32>,
}

impl PoseToken {
    pub fn as_mat(&self) -> Mat {
        Mat {
            rows: 1,
            cols: self.vec.len(),
            data: self.vec.clone(),
        }
    }
}

/// The fixed-size recurrent token set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorState {
    pub tokens: Mat,
}

impl AnchorState {
    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }

    pub fn heap_bytes(&self) -> usize {
        self.tokens.data.capacity() * std::mem::size_of::<f32>()
    }
}

/// Outputs of the dual decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DualOutput {
    pub pose: PoseToken,
    pub cur: TokenGrid,
    pub prev: TokenGrid,
    /// Pose slot of the previous-frame stream; computed and unused.
    pub prev_pose: PoseToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet {
    pub pos: DenseHead,
    pub gs: DenseHead,
    pub pose: PoseHead,
}

impl HeadSet {
    fn load(w: &WeightContainer, prefix: &str, c: &NetConfig) -> Result<Self> {
        Ok(HeadSet {
            pos: DenseHead::load(w, &format!("{prefix}.pos"), c.head_dims(), 4)?,
            gs: DenseHead::load(w, &format!("{prefix}.gs"), c.head_dims(), GsMaps::channels(c.k))?,
            pose: PoseHead::load(w, &format!("{prefix}.pose"), c.d)?,
        })
    }
}

/// The complete forward-only network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetConfig,
    pub patch_embed: Linear,
    pub encoder: Vec<AttentionBlock>,
    pub decoder_cur: Vec<DecoderBlock>,
    pub decoder_prev: Vec<DecoderBlock>,
    pub pose_cur: PoseToken,
    pub pose_prev: PoseToken,
    pub pose_global_init: PoseToken,
    pub anchor_init: AnchorState,
    pub global_query: Vec<DecoderBlock>,
    pub global_state: Vec<DecoderBlock>,
    pub state_norm: LayerNorm,
    pub head_r: HeadSet,
    pub head_g: HeadSet,
    pub fusion: FusionMlp,
    arch_hash: String,
}

impl Network {
    pub fn random(config: NetConfig, seed: u64) -> Result<Self> {
        Network::from_container(&config.random_weights(seed)?)
    }

    /// Loads a network, checking that the container's sections match the
    /// architecture described by its hyper-parameter section exactly.
    pub fn from_container(w: &WeightContainer) -> Result<Self> {
        let c = NetConfig::from_container(w)?;
        let schema = c.schema();
        let expected = schema.arch_hash();
        if w.arch_hash() != expected {
            let missing: Vec<&str> = schema
                .sections()
                .iter()
                .map(|s| s.name.as_str())
                .filter(|n| !w.contains(n))
                .take(3)
                .collect();
            return Err(Error::invalid(format!(
                "weight sections do not match the declared architecture (hash {} vs {expected}; missing {missing:?})",
                w.arch_hash()
            )));
        }
        let (d, ffn, heads) = (c.d, c.ffn, c.heads);
        let blocks = |prefix: &str, n: usize| -> Result<Vec<DecoderBlock>> {
            (0..n)
                .map(|i| DecoderBlock::load(w, &format!("{prefix}.block{i}"), d, ffn, heads))
                .collect()
        };
        let token = |name: &str| -> Result<PoseToken> {
            Ok(PoseToken {
                vec: load_tokens(w, name, 1, d)?.data,
            })
        };
        Ok(Network {
            config: c,
            patch_embed: Linear::load(w, "encoder.patch_embed", 3 * c.patch * c.patch, d)?,
            encoder: (0..c.encoder_blocks)
                .map(|i| AttentionBlock::load(w, &format!("encoder.block{i}"), d, ffn, heads))
                .collect::<Result<_>>()?,
            decoder_cur: blocks("decoder_r.cur", c.decoder_blocks)?,
            decoder_prev: blocks("decoder_r.prev", c.decoder_blocks)?,
            pose_cur: token("tokens.pose_cur")?,
            pose_prev: token("tokens.pose_prev")?,
            pose_global_init: token("tokens.pose_global_init")?,
            anchor_init: AnchorState {
                tokens: load_tokens(w, "tokens.anchor_init", c.anchors, d)?,
            },
            global_query: blocks("decoder_g.query", c.global_blocks)?,
            global_state: blocks("decoder_g.state", c.global_blocks)?,
            state_norm: LayerNorm::load(w, "decoder_g.state_norm", d)?,
            head_r: HeadSet::load(w, "head_r", &c)?,
            head_g: HeadSet::load(w, "head_g", &c)?,
            fusion: FusionMlp::from_container(w)?,
            arch_hash: expected,
        })
    }

    pub fn arch_hash(&self) -> &str {
        &self.arch_hash
    }

    /// SHA-256 over the encoder parameters currently in memory.
    pub fn encoder_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |v: &[f32]| {
            for x in v {
                h.update(x.to_le_bytes());
            }
        };
        feed(&self.patch_embed.weight.data);
        feed(&self.patch_embed.bias);
        for b in &self.encoder {
            for n in [&b.norm_q, &b.norm_ctx, &b.norm_ff] {
                feed(&n.gamma);
                feed(&n.beta);
            }
            for l in [&b.attn.q, &b.attn.k, &b.attn.v, &b.attn.out, &b.ff.fc1, &b.ff.fc2] {
                feed(&l.weight.data);
                feed(&l.bias);
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sinusoidal 2-D embedding: the first half of the channels encodes the
    /// row, the second half the column, each as `d/4` sines then `d/4`
    /// cosines with frequencies `10000^(−i/(d/4))`.
    pub fn position_embedding(&self, grid_shape: (usize, usize)) -> Mat {
        let d = self.config.d;
        let q = d / 4;
        let mut out = Mat::zeros(grid_shape.0 * grid_shape.1, d);
        for gy in 0..grid_shape.0 {
            for gx in 0..grid_shape.1 {
                let row = out.row_mut(gy * grid_shape.1 + gx);
                for i in 0..q {
                    let omega = 1.0 / 10000f64.powf(i as f64 / q as f64);
                    let (ay, ax) = (gy as f64 * omega, gx as f64 * omega);
                    row[i] = ay.sin() as f32;
                    row[q + i] = ay.cos() as f32;
                    row[2 * q + i] = ax.sin() as f32;
                    row[3 * q + i] = ax.cos() as f32;
                }
            }
        }
        out
    }

    /// Linear embedding of each `p × p × 3` patch plus the position
    /// embedding. Patch vectors are row-major over the patch, channels
    /// innermost.
    pub fn patchify(&self, image: &RgbImage) -> Result<TokenGrid> {
        let p = self.config.patch;
        let (w, h) = (image.width(), image.height());
        if w == 0 || h == 0 || w % p != 0 || h % p != 0 {
            return Err(Error::invalid(format!(
                "image size {w}x{h} is not a positive multiple of the patch size {p}"
            )));
        }
        let (gh, gw) = (h / p, w / p);
        let mut patches = Mat::zeros(gh * gw, 3 * p * p);
        for ty in 0..gh {
            for tx in 0..gw {
                let row = patches.row_mut(ty * gw + tx);
                for py in 0..p {
                    for px in 0..p {
                        for c in 0..3 {
                            row[(py * p + px) * 3 + c] = image.get(tx * p + px, ty * p + py, c) as f32;
                        }
                    }
                }
            }
        }
        let tokens = self
            .patch_embed
            .forward(&patches)?
            .add(&self.position_embedding((gh, gw)))?;
        TokenGrid::new(tokens, (gh, gw))
    }

    /// Patch embedding followed by the shared self-attention encoder.
    pub fn encode_image(&self, image: &RgbImage) -> Result<TokenGrid> {
        let mut grid = self.patchify(image)?;
        for block in &self.encoder {
            grid.tokens = block.forward_self(&grid.tokens)?;
        }
        TokenGrid::new(grid.tokens, grid.grid_shape)
    }

    /// Runs the two weight-distinct decoder streams `[p₁; f_t]` and
    /// `[p₀; f_{t−1}]`; in every block each stream cross-attends to the
    /// other's tokens from before that block.
    pub fn dual_decode(&self, cur: &TokenGrid, prev: &TokenGrid) -> Result<DualOutput> {
        let d = self.config.d;
        if cur.tokens.cols != d || prev.tokens.cols != d {
            return Err(Error::invalid("decoder inputs must have the model width"));
        }
        let mut x = Mat::vstack(&[&self.pose_cur.as_mat(), &cur.tokens])?;
        let mut y = Mat::vstack(&[&self.pose_prev.as_mat(), &prev.tokens])?;
        for (bc, bp) in self.decoder_cur.iter().zip(&self.decoder_prev) {
            let nx = bc.forward(&x, &y)?;
            let ny = bp.forward(&y, &x)?;
            x = nx;
            y = ny;
        }
        Ok(DualOutput {
            pose: PoseToken { vec: x.row(0).to_vec() },
            cur: TokenGrid::new(x.slice_rows(1, x.rows), cur.grid_shape)?,
            prev: TokenGrid::new(y.slice_rows(1, y.rows), prev.grid_shape)?,
            prev_pose: PoseToken { vec: y.row(0).to_vec() },
        })
    }

    /// The query stream `[f̄_t; f̄_tʳ; p_tʳ]` and the anchor state attend to
    /// each other block by block; the third query row becomes the global pose
    /// token and the state is layer-normalized.
    pub fn anchor_update(
        &self,
        pooled: &[f32],
        pooled_rel: &[f32],
        pose_rel: &PoseToken,
        state: &AnchorState,
    ) -> Result<(PoseToken, AnchorState)> {
        let d = self.config.d;
        if pooled.len() != d || pooled_rel.len() != d || pose_rel.vec.len() != d || state.tokens.cols != d {
            return Err(Error::invalid("anchor update inputs must have the model width"));
        }
        let mut data = Vec::with_capacity(3 * d);
        data.extend_from_slice(pooled);
        data.extend_from_slice(pooled_rel);
        data.extend_from_slice(&pose_rel.vec);
        let mut q = Mat::from_vec(3, d, data)?;
        let mut s = state.tokens.clone();
        for (bq, bs) in self.global_query.iter().zip(&self.global_state) {
            let nq = bq.forward(&q, &s)?;
            let ns = bs.forward(&s, &q)?;
            q = nq;
            s = ns;
        }
        Ok((
            PoseToken { vec: q.row(2).to_vec() },
            AnchorState {
                tokens: self.state_norm.forward(&s)?,
            },
        ))
    }

    fn image_size(&self, tokens: &TokenGrid) -> (usize, usize) {
        let p = self.config.patch;
        (tokens.grid_shape.1 * p, tokens.grid_shape.0 * p)
    }

    /// Position head of a stage: `tokens` are the per-pixel features and
    /// `context` the conditioning tokens.
    pub fn head_pos(&self, heads: &HeadSet, tokens: &TokenGrid, context: &Mat) -> Result<PosMaps> {
        let (w, h) = self.image_size(tokens);
        PosMaps::from_raw(&heads.pos.forward(tokens, context)?, w, h)
    }

    pub fn head_gs(&self, heads: &HeadSet, tokens: &TokenGrid, context: &Mat) -> Result<GsMaps> {
        let (w, h) = self.image_size(tokens);
        GsMaps::from_raw(
            &heads.gs.forward(tokens, context)?,
            w,
            h,
            self.config.k,
            self.config.scale_base,
        )
    }

    pub fn head_pose(&self, heads: &HeadSet, token: &PoseToken) -> Result<(CameraPose, [f64; 7])> {
        if token.vec.len() != self.config.d {
            return Err(Error::invalid("pose token must have the model width"));
        }
        heads.pose.forward(&token.vec)
    }
}
