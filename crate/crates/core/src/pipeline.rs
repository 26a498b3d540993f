//! Online reconstruction: one `step` per incoming frame, threading a
//! fixed-size recurrent state and fusing each frame's Gaussians into the
//! accumulated scene.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fuse::{integrate_frame, FusionReport};
use crate::gaussian::{GaussianPrimitive, GaussianScene};
use crate::geometry::CameraPose;
use crate::image::RgbImage;
use crate::net::{AnchorState, DualOutput, GsMaps, Network, PosMaps, PoseToken, TokenGrid};

/// Recurrent state carried between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub anchor: AnchorState,
    /// Encoder tokens of the previous frame; `None` before the first frame.
    pub prev_tokens: Option<TokenGrid>,
    /// Number of frames consumed so far.
    pub frame_index: usize,
}

impl PipelineState {
    pub fn initial(net: &Network) -> Self {
        PipelineState {
            anchor: net.anchor_init.clone(),
            prev_tokens: None,
            frame_index: 0,
        }
    }

    /// Bytes of heap storage held by the state.
    pub fn heap_bytes(&self) -> usize {
        self.anchor.heap_bytes() + self.prev_tokens.as_ref().map_or(0, TokenGrid::heap_bytes)
    }
}

/// Head outputs of one stage for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    pub pos: PosMaps,
    pub gs: GsMaps,
    pub pose: CameraPose,
    pub raw_pose: [f64; 7],
}

impl StageOutputs {
    /// One primitive per pixel, in raster order.
    pub fn gaussians(&self) -> Vec<GaussianPrimitive> {
        (0..self.gs.len())
            .map(|i| self.gs.primitive(i, self.pos.centers[i], self.pos.confidence[i]))
            .collect()
    }
}

/// Everything produced by the relative stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeOutputs {
    pub decoded: DualOutput,
    /// Maps and pose for the current frame, in the previous frame's coordinates.
    pub current: StageOutputs,
    /// Maps for the previous frame from the same joint prediction.
    pub previous_pos: PosMaps,
    pub previous_gs: GsMaps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutputs {
    /// 1-based frame number.
    pub frame_index: usize,
    /// Absent for the first frame.
    pub relative: Option<RelativeOutputs>,
    pub global: StageOutputs,
    pub gaussians_global: Vec<GaussianPrimitive>,
}

/// Decodes the current and previous encoder tokens jointly and runs the
/// relative heads on both frames.
pub fn relative_stage(net: &Network, cur: &TokenGrid, prev: &TokenGrid) -> Result<RelativeOutputs> {
    if cur.grid_shape != prev.grid_shape {
        return Err(Error::invalid("consecutive frames must have the same size"));
    }
    let decoded = net.dual_decode(cur, prev)?;
    let heads = &net.head_r;
    let (pose, raw_pose) = net.head_pose(heads, &decoded.pose)?;
    let current = StageOutputs {
        pos: net.head_pos(heads, &decoded.cur, &decoded.prev.tokens)?,
        gs: net.head_gs(heads, &decoded.cur, &decoded.prev.tokens)?,
        pose,
        raw_pose,
    };
    let previous_pos = net.head_pos(heads, &decoded.prev, &decoded.cur.tokens)?;
    let previous_gs = net.head_gs(heads, &decoded.prev, &decoded.cur.tokens)?;
    Ok(RelativeOutputs {
        decoded,
        current,
        previous_pos,
        previous_gs,
    })
}

/// Global heads conditioned on the global pose token.
pub fn global_stage(net: &Network, tokens: &TokenGrid, pose_token: &PoseToken) -> Result<StageOutputs> {
    let ctx = pose_token.as_mat();
    let heads = &net.head_g;
    let (pose, raw_pose) = net.head_pose(heads, pose_token)?;
    Ok(StageOutputs {
        pos: net.head_pos(heads, tokens, &ctx)?,
        gs: net.head_gs(heads, tokens, &ctx)?,
        pose,
        raw_pose,
    })
}

/// Global outputs of the first frame: the global heads run on the encoder
/// tokens with the initial global pose token, and the pose is the identity.
fn first_frame(net: &Network, tokens: &TokenGrid) -> Result<StageOutputs> {
    let ctx = net.pose_global_init.as_mat();
    let heads = &net.head_g;
    Ok(StageOutputs {
        pos: net.head_pos(heads, tokens, &ctx)?,
        gs: net.head_gs(heads, tokens, &ctx)?,
        pose: CameraPose::identity(),
        raw_pose: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    })
}

/// Consumes one frame. Returns the frame's outputs, the next state and the
/// fusion report for merging its Gaussians into `scene`.
pub fn step(
    net: &Network,
    image: &RgbImage,
    state: PipelineState,
    scene: &mut GaussianScene,
) -> Result<(FrameOutputs, PipelineState, FusionReport)> {
    if scene.k() != net.config.k {
        return Err(Error::invalid(format!(
            "scene feature width {} does not match network width {}",
            scene.k(),
            net.config.k
        )));
    }
    let tokens = net.encode_image(image)?;
    let (relative, global, anchor) = match &state.prev_tokens {
        None => (None, first_frame(net, &tokens)?, state.anchor),
        Some(prev) => {
            let rel = relative_stage(net, &tokens, prev)?;
            let (pose_g, anchor) = net.anchor_update(
                &tokens.pooled(),
                &rel.decoded.cur.pooled(),
                &rel.decoded.pose,
                &state.anchor,
            )?;
            let global = global_stage(net, &rel.decoded.cur, &pose_g)?;
            (Some(rel), global, anchor)
        }
    };
    let gaussians = global.gaussians();
    let report = integrate_frame(scene, gaussians.clone(), &net.fusion)?;
    let next = PipelineState {
        anchor,
        prev_tokens: Some(tokens),
        frame_index: state.frame_index + 1,
    };
    Ok((
        FrameOutputs {
            frame_index: next.frame_index,
            relative,
            global,
            gaussians_global: gaussians,
        },
        next,
        report,
    ))
}

/// Per-frame accounting row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameReport {
    pub frame_index: usize,
    pub primitives: usize,
    pub merges: usize,
    pub absorbed: usize,
    pub appended: usize,
    pub state_bytes: usize,
    pub anchor_tokens: usize,
    pub seconds: f64,
}

/// A running stream: network, recurrent state, accumulated scene and
/// trajectory.
#[derive(Debug, Clone)]
pub struct Stream {
    net: Network,
    state: PipelineState,
    scene: GaussianScene,
    trajectory: Vec<CameraPose>,
    reports: Vec<FrameReport>,
}

impl Stream {
    pub fn new(net: Network, voxel_size: f64) -> Result<Self> {
        let scene = GaussianScene::new(net.config.k, voxel_size)?;
        Ok(Stream {
            state: PipelineState::initial(&net),
            net,
            scene,
            trajectory: Vec::new(),
            reports: Vec::new(),
        })
    }

    pub fn push_frame(&mut self, image: &RgbImage) -> Result<FrameOutputs> {
        let start = Instant::now();
        let state = std::mem::replace(&mut self.state, PipelineState::initial(&self.net));
        let backup = state.clone();
        let (out, next, fusion) = match step(&self.net, image, state, &mut self.scene) {
            Ok(r) => r,
            Err(e) => {
                self.state = backup;
                return Err(e);
            }
        };
        self.state = next;
        let seconds = start.elapsed().as_secs_f64();
        self.trajectory.push(out.global.pose);
        self.reports.push(FrameReport {
            frame_index: out.frame_index,
            primitives: self.scene.len(),
            merges: fusion.merges,
            absorbed: fusion.absorbed,
            appended: fusion.appended,
            state_bytes: self.state.heap_bytes(),
            anchor_tokens: self.state.anchor.len(),
            seconds,
        });
        Ok(out)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn scene(&self) -> &GaussianScene {
        &self.scene
    }

    pub fn trajectory(&self) -> &[CameraPose] {
        &self.trajectory
    }

    pub fn reports(&self) -> &[FrameReport] {
        &self.reports
    }

    pub fn into_parts(self) -> (GaussianScene, Vec<CameraPose>, Vec<FrameReport>) {
        (self.scene, self.trajectory, self.reports)
    }
}

/// Result of folding `step` over a whole stream.
#[derive(Debug, Clone)]
pub struct StreamResult {
    pub scene: GaussianScene,
    pub trajectory: Vec<CameraPose>,
    pub reports: Vec<FrameReport>,
}

pub fn run_stream(net: &Network, frames: &[RgbImage], voxel_size: f64) -> Result<StreamResult> {
    if frames.is_empty() {
        return Err(Error::invalid("a stream needs at least one frame"));
    }
    let mut stream = Stream::new(net.clone(), voxel_size)?;
    for f in frames {
        stream.push_frame(f)?;
    }
    let (scene, trajectory, reports) = stream.into_parts();
    Ok(StreamResult {
        scene,
        trajectory,
        reports,
    })
}
