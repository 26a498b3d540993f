//! Training objectives, a finite-difference harness for the renderer's
//! gradients, and direct per-scene optimization through the renderer.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianPrimitive, GaussianScene};
use crate::geometry::{CameraPose, Intrinsics, Quat};
use crate::image::{FeatureMap, RgbImage};
use crate::render::{
    rasterize, rasterize_backward, rasterize_traced, render_with_decisions, RenderGradients, RenderSettings,
    RenderTarget, RenderUpstream,
};

/// Gt feature pixels with a smaller norm are excluded from the language loss.
pub const FEATURE_MASK_NORM: f64 = 1e-8;

/// Squared L2 distance between `(qw, qx, qy, qz, tx, ty, tz)` vectors, with
/// the predicted quaternion sign-aligned to the ground truth.
pub fn loss_pose(pred: &CameraPose, gt: &CameraPose) -> f64 {
    let qp = pred.quat().to_array();
    let qg = gt.quat().to_array();
    let dot: f64 = qp.iter().zip(&qg).map(|(a, b)| a * b).sum();
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    let rot: f64 = qp.iter().zip(&qg).map(|(a, b)| (s * a - b).powi(2)).sum();
    rot + (pred.translation - gt.translation).norm_squared()
}

fn check_image(rendered: &RenderTarget, gt: &RgbImage) -> Result<()> {
    if rendered.width != gt.width() || rendered.height != gt.height() {
        return Err(Error::invalid(format!(
            "rendered {}x{} vs ground truth {}x{}",
            rendered.width,
            rendered.height,
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// Mean squared error over all colour channels and pixels.
pub fn loss_render(rendered: &RenderTarget, gt: &RgbImage) -> Result<f64> {
    check_image(rendered, gt)?;
    let n = rendered.color.len().max(1) as f64;
    Ok(rendered
        .color
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// MSE and its partials with respect to the colour buffer.
pub fn loss_render_grad(rendered: &RenderTarget, gt: &RgbImage) -> Result<(f64, Vec<f64>)> {
    let value = loss_render(rendered, gt)?;
    let n = rendered.color.len().max(1) as f64;
    let grad = rendered
        .color
        .iter()
        .zip(gt.data())
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    Ok((value, grad))
}

fn check_features(rendered: &[f64], gt: &FeatureMap) -> Result<()> {
    if rendered.len() != gt.data().len() {
        return Err(Error::invalid(format!(
            "rendered feature buffer of {} values vs ground truth {}x{}x{}",
            rendered.len(),
            gt.width(),
            gt.height(),
            gt.k()
        )));
    }
    if gt.k() == 0 {
        return Err(Error::invalid("feature maps must have at least one channel"));
    }
    Ok(())
}

/// Mean of `−cos(rendered, gt)` over pixels whose gt feature is nonzero.
/// A rendered pixel with zero norm contributes 0.
pub fn loss_lang(rendered: &[f64], gt: &FeatureMap) -> Result<f64> {
    Ok(loss_lang_grad(rendered, gt)?.0)
}

/// Language loss and its partials with respect to the rendered features.
pub fn loss_lang_grad(rendered: &[f64], gt: &FeatureMap) -> Result<(f64, Vec<f64>)> {
    check_features(rendered, gt)?;
    let k = gt.k();
    let mut grad = vec![0.0; rendered.len()];
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, g) in gt.pixels().enumerate() {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < FEATURE_MASK_NORM {
            continue;
        }
        count += 1;
        let r = &rendered[i * k..(i + 1) * k];
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn == 0.0 {
            continue;
        }
        let cos = r.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (rn * gn);
        sum -= cos;
        for c in 0..k {
            grad[i * k + c] = -(g[c] / (rn * gn) - cos * r[c] / (rn * rn));
        }
    }
    if count == 0 {
        return Err(Error::UndefinedLoss(
            "every ground-truth feature pixel has zero norm".into(),
        ));
    }
    let inv = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((sum * inv, grad))
}

/// Stage weights: `λ_aux` scales the relative stage; `λ1..λ3` weight pose,
/// render and language terms within a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_aux: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_aux: 0.8,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("lambda_aux", self.lambda_aux),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{n} must be a nonnegative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Pose, render and language terms of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageLosses {
    pub pose: f64,
    pub render: f64,
    pub lang: f64,
}

impl StageLosses {
    pub fn new(pose: f64, render: f64, lang: f64) -> Self {
        StageLosses { pose, render, lang }
    }

    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.lambda1 * self.pose + w.lambda2 * self.render + w.lambda3 * self.lang
    }

    fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.render.is_finite() && self.lang.is_finite()
    }
}

/// `global + λ_aux · relative`, each stage weighted by `λ1..λ3`.
pub fn loss_total(global: &StageLosses, relative: &StageLosses, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    if !global.is_finite() || !relative.is_finite() {
        return Err(Error::invalid("loss components must be finite"));
    }
    Ok(global.weighted(w) + w.lambda_aux * relative.weighted(w))
}

/// One training view.
#[derive(Debug, Clone)]
pub struct View {
    pub camera: CameraPose,
    pub intrinsics: Intrinsics,
    pub image: RgbImage,
    pub features: Option<FeatureMap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub steps: usize,
    /// Base step length of the normalized update.
    pub lr: f64,
    pub weights: LossWeights,
    /// Step halvings tried before a step is rejected.
    pub max_halvings: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            steps: 500,
            lr: 0.01,
            weights: LossWeights::default(),
            max_halvings: 6,
        }
    }
}

/// One row of a loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub pose: f64,
    pub render: f64,
    pub lang: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub scene: GaussianScene,
    /// Loss before the first step and after every step.
    pub curve: Vec<LossRecord>,
    pub accepted: usize,
    pub rejected: usize,
}

pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut s = String::from("step,total,pose,render,lang\n");
    for r in curve {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.total, r.pose, r.render, r.lang);
    }
    s
}

fn evaluate(
    prims: &[GaussianPrimitive],
    k: usize,
    views: &[View],
    w: &LossWeights,
    grads: bool,
) -> Result<(LossRecord, Option<RenderGradients>)> {
    let scene = scratch_scene(prims, k);
    let mut render = 0.0;
    let mut lang = 0.0;
    let mut total_grad = grads.then(|| RenderGradients::zeros(prims.len(), k));
    let nv = views.len() as f64;
    for v in views {
        let target = rasterize(&scene, &v.camera, &v.intrinsics);
        let (r, gc) = loss_render_grad(&target, &v.image)?;
        render += r / nv;
        let mut up = RenderUpstream::zeros(target.width, target.height, k);
        for (u, g) in up.color.iter_mut().zip(gc) {
            *u = w.lambda2 * g / nv;
        }
        if let Some(f) = &v.features {
            let (l, gf) = loss_lang_grad(&target.feature, f)?;
            lang += l / nv;
            for (u, g) in up.feature.iter_mut().zip(gf) {
                *u = w.lambda3 * g / nv;
            }
        }
        if let Some(acc) = total_grad.as_mut() {
            acc.add_scaled(&rasterize_backward(&scene, &v.camera, &v.intrinsics, &up)?, 1.0);
        }
    }
    let total = w.lambda2 * render + w.lambda3 * lang;
    if !total.is_finite() {
        return Err(Error::Diverged(format!("loss became {total}")));
    }
    Ok((
        LossRecord {
            step: 0,
            total,
            pose: 0.0,
            render,
            lang,
        },
        total_grad,
    ))
}

/// Scene for rendering only; the voxel index is not needed.
fn scratch_scene(prims: &[GaussianPrimitive], k: usize) -> GaussianScene {
    let mut s = GaussianScene::new(k, 1.0).expect("unit voxel size is valid");
    for p in prims {
        s.push_unchecked(p.clone());
    }
    s
}

/// First and second moment estimates for every scalar parameter, laid out as
/// mu(3) rot(4) log-scale(3) opacity(1) color(3) lang(K) per primitive.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn flatten_grads(g: &RenderGradients, prims: &[GaussianPrimitive]) -> Vec<f64> {
    let k = g.k;
    let mut out = Vec::with_capacity(prims.len() * (14 + k));
    for (i, p) in prims.iter().enumerate() {
        out.extend(g.mu[i].iter());
        out.extend(g.rot[i]);
        // the scale is updated in log space: dL/dlog s = s · dL/ds
        out.extend((0..3).map(|c| g.scale[i][c] * p.scale[c]));
        out.push(g.opacity[i]);
        out.extend(g.color[i].iter());
        out.extend_from_slice(g.lang_of(i));
    }
    out
}

fn apply_step(prims: &[GaussianPrimitive], dir: &[f64], step: f64) -> Vec<GaussianPrimitive> {
    let stride = dir.len() / prims.len().max(1);
    prims
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = &dir[i * stride..(i + 1) * stride];
            let mut q = p.clone();
            q.mu -= Vector3::new(d[0], d[1], d[2]) * step;
            let r = Quat::new(
                p.rot.w - step * d[3],
                p.rot.x - step * d[4],
                p.rot.y - step * d[5],
                p.rot.z - step * d[6],
            );
            q.rot = r.normalized().unwrap_or(p.rot);
            for c in 0..3 {
                q.scale[c] = (p.scale[c].ln() - step * d[7 + c]).exp().max(1e-6);
            }
            q.opacity = (p.opacity - step * d[10]).clamp(0.0, 1.0);
            for c in 0..3 {
                q.color[c] = (p.color[c] - step * d[11 + c]).clamp(0.0, 1.0);
            }
            for (l, dl) in q.lang.iter_mut().zip(&d[14..]) {
                *l -= step * dl;
            }
            q
        })
        .collect()
}

/// Descends `λ2·MSE (+ λ3·lang)` averaged over views on every primitive
/// parameter. Proposals are Adam-normalized gradient steps; a proposal that
/// does not lower the loss is halved up to `max_halvings` times and otherwise
/// rejected, so the recorded curve never increases. Quaternions are
/// renormalized, scales kept positive, opacities and colours clamped.
pub fn optimize_scene(scene: &GaussianScene, views: &[View], opts: &OptimizeOptions) -> Result<OptimizeResult> {
    if views.is_empty() {
        return Err(Error::invalid("optimization needs at least one view"));
    }
    if scene.is_empty() {
        return Err(Error::invalid("optimization needs a nonempty scene"));
    }
    opts.weights.validate()?;
    let k = scene.k();
    for v in views {
        v.intrinsics.validate()?;
        if v.image.width() != v.intrinsics.width || v.image.height() != v.intrinsics.height {
            return Err(Error::invalid("view image does not match its intrinsics"));
        }
    }
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut prims = scene.primitives().to_vec();
    let (mut current, mut grads) = evaluate(&prims, k, views, &opts.weights, true)?;
    let mut curve = vec![current];
    let n_params = prims.len() * (14 + k);
    let mut mom = Moments {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let (mut accepted, mut rejected) = (0, 0);
    for step in 1..=opts.steps {
        let g = flatten_grads(grads.as_ref().expect("gradients requested"), &prims);
        if g.iter().all(|x| *x == 0.0) {
            curve.push(LossRecord { step, ..current });
            continue;
        }
        mom.t += 1;
        let c1 = 1.0 - b1.powi(mom.t);
        let c2 = 1.0 - b2.powi(mom.t);
        let dir: Vec<f64> = g
            .iter()
            .enumerate()
            .map(|(i, gi)| {
                mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * gi;
                mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * gi * gi;
                (mom.m[i] / c1) / ((mom.v[i] / c2).sqrt() + eps)
            })
            .collect();
        let mut len = opts.lr;
        let mut next = None;
        for _ in 0..=opts.max_halvings {
            let trial = apply_step(&prims, &dir, len);
            let (rec, _) = evaluate(&trial, k, views, &opts.weights, false)?;
            if rec.total <= current.total {
                next = Some((trial, rec));
                break;
            }
            len *= 0.5;
        }
        match next {
            Some((trial, _)) => {
                prims = trial;
                let (rec, gr) = evaluate(&prims, k, views, &opts.weights, true)?;
                current = rec;
                grads = gr;
                accepted += 1;
            }
            None => {
                rejected += 1;
                // drop stale momentum so the next proposal follows the gradient
                mom.m.iter_mut().for_each(|m| *m = 0.0);
            }
        }
        curve.push(LossRecord { step, ..current });
    }
    let mut out = GaussianScene::new(k, scene.voxel_size())?;
    for p in prims {
        out.push(p)?;
    }
    Ok(OptimizeResult {
        scene: out,
        curve,
        accepted,
        rejected,
    })
}

/// Parameter groups reported by [`finite_diff_check`].
pub const PARAM_GROUPS: [&str; 6] = ["mu", "rot", "scale", "opacity", "color", "lang"];

/// Worst agreement per parameter group between analytic and central-difference
/// gradients. Entries whose larger magnitude is at least `small` are compared
/// by relative error, the rest by absolute error.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel: [f64; 6],
    pub max_abs: [f64; 6],
    pub compared: [usize; 6],
}

impl FdReport {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel.iter().all(|r| *r < rel_tol) && self.max_abs.iter().all(|a| *a < abs_tol)
    }
}

/// Scalar loss of a render together with its partials.
pub type RenderLoss<'a> = dyn Fn(&RenderTarget) -> Result<(f64, RenderUpstream)> + 'a;

type Perturb = Box<dyn Fn(&mut GaussianPrimitive, f64)>;

/// Compares [`rasterize_backward`] against central differences of
/// `loss(render)` with step `h` for every scalar parameter. Differences are
/// taken with the renderer's per-pixel contributor lists and clamp states
/// frozen at the unperturbed scene, which removes the discontinuities of the
/// support cut-off and depth ordering from the quotient.
pub fn finite_diff_check(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    loss: &RenderLoss<'_>,
    h: f64,
    small: f64,
) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let settings = RenderSettings::default();
    let (target, decisions) = rasterize_traced(scene, cam, intr, &settings);
    let (_, upstream) = loss(&target)?;
    let analytic = rasterize_backward(scene, cam, intr, &upstream)?;
    let k = scene.k();
    let base = scene.primitives().to_vec();
    let eval = |prims: &[GaussianPrimitive]| -> Result<f64> {
        let s = scratch_scene(prims, k);
        Ok(loss(&render_with_decisions(&s, cam, intr, &settings, &decisions))?.0)
    };
    let mut report = FdReport {
        max_rel: [0.0; 6],
        max_abs: [0.0; 6],
        compared: [0; 6],
    };
    for i in 0..base.len() {
        let mut entries: Vec<(usize, f64, Perturb)> = Vec::new();
        for c in 0..3 {
            entries.push((0, analytic.mu[i][c], Box::new(move |p, d| p.mu[c] += d)));
        }
        for c in 0..4 {
            entries.push((
                1,
                analytic.rot[i][c],
                Box::new(move |p, d| {
                    let mut a = p.rot.to_array();
                    a[c] += d;
                    p.rot = Quat::from_array(a);
                }),
            ));
        }
        for c in 0..3 {
            entries.push((2, analytic.scale[i][c], Box::new(move |p, d| p.scale[c] += d)));
        }
        entries.push((3, analytic.opacity[i], Box::new(|p, d| p.opacity += d)));
        for c in 0..3 {
            entries.push((4, analytic.color[i][c], Box::new(move |p, d| p.color[c] += d)));
        }
        for c in 0..k {
            entries.push((5, analytic.lang_of(i)[c], Box::new(move |p, d| p.lang[c] += d)));
        }
        for (group, a, perturb) in entries {
            let mut plus = base.clone();
            perturb(&mut plus[i], h);
            let mut minus = base.clone();
            perturb(&mut minus[i], -h);
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let mag = a.abs().max(numeric.abs());
            let err = (a - numeric).abs();
            report.compared[group] += 1;
            if mag >= small {
                report.max_rel[group] = report.max_rel[group].max(err / mag);
            } else {
                report.max_abs[group] = report.max_abs[group].max(err);
            }
        }
    }
    Ok(report)
}

/// Upstream partials of `Σ_v w·C(v)`, a loss linear in the colour buffer.
pub fn linear_color_loss(
    weights: Vec<f64>,
    width: usize,
    height: usize,
    k: usize,
) -> impl Fn(&RenderTarget) -> Result<(f64, RenderUpstream)> {
    move |t: &RenderTarget| {
        if t.color.len() != weights.len() {
            return Err(Error::invalid("weight buffer does not match the render"));
        }
        let mut up = RenderUpstream::zeros(width, height, k);
        up.color.clone_from(&weights);
        Ok((t.color.iter().zip(&weights).map(|(a, b)| a * b).sum(), up))
    }
}

/// MSE against `gt` as a [`RenderLoss`].
pub fn mse_loss(gt: RgbImage, k: usize) -> impl Fn(&RenderTarget) -> Result<(f64, RenderUpstream)> {
    move |t: &RenderTarget| {
        let (v, g) = loss_render_grad(t, &gt)?;
        let mut up = RenderUpstream::zeros(t.width, t.height, k);
        up.color = g;
        Ok((v, up))
    }
}

/// Language cosine loss against `gt` as a [`RenderLoss`].
pub fn lang_loss(gt: FeatureMap) -> impl Fn(&RenderTarget) -> Result<(f64, RenderUpstream)> {
    move |t: &RenderTarget| {
        let (v, g) = loss_lang_grad(&t.feature, &gt)?;
        let mut up = RenderUpstream::zeros(t.width, t.height, t.k);
        up.feature = g;
        Ok((v, up))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn pose_loss_examples() {
        let id = CameraPose::identity();
        assert_eq!(loss_pose(&id, &id), 0.0);
        let moved = CameraPose::from_quat(Quat::IDENTITY, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(loss_pose(&moved, &id), 1.0);
        let q = Quat::from_axis_angle(Vector3::new(0.3, -1.0, 0.2), 2.5);
        let a = CameraPose::from_quat(q, Vector3::new(0.1, 0.2, 0.3)).unwrap();
        let b = CameraPose::from_quat(q.scaled(-1.0), Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert!(loss_pose(&a, &b) < 1e-24);
    }

    fn target_with_color(w: usize, h: usize, v: f64) -> RenderTarget {
        let mut t = RenderTarget::zeros(w, h, 1);
        t.color.iter_mut().for_each(|c| *c = v);
        t
    }

    #[test]
    fn render_loss_examples() {
        let gt = RgbImage::filled(4, 3, [0.75; 3]);
        assert_eq!(loss_render(&target_with_color(4, 3, 0.75), &gt).unwrap(), 0.0);
        assert_eq!(loss_render(&target_with_color(4, 3, 0.5), &gt).unwrap(), 0.0625);
        assert!(loss_render(&target_with_color(3, 3, 0.5), &gt).is_err());
    }

    #[test]
    fn lang_loss_examples() {
        let gt = FeatureMap::from_raw(2, 1, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(loss_lang(&[3.0, 0.0, 0.0, 1.0], &gt).unwrap(), -1.0);
        assert_eq!(loss_lang(&[0.0, 1.0, 5.0, 0.0], &gt).unwrap(), 0.0);
        assert_eq!(loss_lang(&[-1.0, 0.0, 0.0, -2.0], &gt).unwrap(), 1.0);
        let masked = FeatureMap::from_raw(2, 1, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(loss_lang(&[1.0, 0.0, 0.0, 0.0], &masked).unwrap(), -1.0);
        let empty = FeatureMap::zeros(2, 1, 2);
        assert!(matches!(loss_lang(&[1.0; 4], &empty), Err(Error::UndefinedLoss(_))));
    }

    #[test]
    fn lang_gradient_matches_differences() {
        let gt = FeatureMap::from_raw(2, 1, 3, vec![0.3, -0.2, 0.9, 0.0, 1.0, 0.5]).unwrap();
        let r = vec![0.1, 0.4, -0.3, 0.7, 0.2, 0.2];
        let (_, g) = loss_lang_grad(&r, &gt).unwrap();
        let h = 1e-6;
        for i in 0..r.len() {
            let mut p = r.clone();
            p[i] += h;
            let mut m = r.clone();
            m[i] -= h;
            let fd = (loss_lang(&p, &gt).unwrap() - loss_lang(&m, &gt).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        let zero = StageLosses::default();
        let one = StageLosses::new(1.0, 1.0, 1.0);
        assert_eq!(loss_total(&zero, &zero, &w).unwrap(), 0.0);
        assert_eq!(loss_total(&one, &zero, &w).unwrap(), 2.5);
        assert_eq!(loss_total(&zero, &one, &w).unwrap(), 2.0);
        assert!(loss_total(&StageLosses::new(f64::NAN, 0.0, 0.0), &zero, &w).is_err());
    }

    #[test]
    fn total_loss_is_linear_in_each_weight() {
        let g = StageLosses::new(0.3, 1.7, -0.4);
        let r = StageLosses::new(2.0, 0.1, 0.6);
        let base = LossWeights::default();
        let f = |w: LossWeights| loss_total(&g, &r, &w).unwrap();
        let scale = |w: LossWeights, i: usize, s: f64| {
            let mut w = w;
            match i {
                0 => w.lambda_aux *= s,
                1 => w.lambda1 *= s,
                2 => w.lambda2 *= s,
                _ => w.lambda3 *= s,
            }
            w
        };
        for i in 0..4 {
            let zeroed = f(scale(base, i, 0.0));
            let delta = f(base) - zeroed;
            assert!((f(scale(base, i, 3.0)) - (zeroed + 3.0 * delta)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_csv_has_header() {
        let csv = loss_curve_csv(&[LossRecord {
            step: 0,
            total: 0.5,
            pose: 0.0,
            render: 0.5,
            lang: 0.0,
        }]);
        assert_eq!(csv, "step,total,pose,render,lang\n0,0.5,0,0.5,0\n");
    }
}
