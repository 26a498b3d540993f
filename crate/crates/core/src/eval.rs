//! Evaluation metrics: PSNR/SSIM for views, Sim(3)-aligned ATE and RPE for
//! trajectories, cosine-similarity segmentation and mIoU/mAcc.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::CameraPose;
use crate::image::{FeatureMap, Mask, RgbImage};

/// Reported when two images are identical.
pub const PSNR_CAP: f64 = 99.0;

fn check_same(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// `10·log10(1/MSE)` for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_same(a, b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| win[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| win[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// channels and valid window positions.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_same(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let pa: Vec<f64> = a.data().iter().skip(c).step_by(3).copied().collect();
        let pb: Vec<f64> = b.data().iter().skip(c).step_by(3).copied().collect();
        let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
        let (mu_a, _, _) = filter_valid(&pa, w, h, &win);
        let (mu_b, _, _) = filter_valid(&pb, w, h, &win);
        let (e_aa, _, _) = filter_valid(&prod(&pa, &pa), w, h, &win);
        let (e_bb, _, _) = filter_valid(&prod(&pb, &pb), w, h, &win);
        let (e_ab, _, _) = filter_valid(&prod(&pa, &pb), w, h, &win);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3 {
    pub fn identity() -> Self {
        Sim3 {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Maps a camera pose: rotation is composed, the centre transformed.
    pub fn apply_pose(&self, pose: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.translation),
        }
    }
}

/// Least-squares similarity aligning `src` onto `dst` (Umeyama): minimizes
/// `Σ‖dst_i − (s R src_i + t)‖²` with a reflection-corrected SVD of the
/// centred cross-covariance.
pub fn umeyama_sim3(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Sim3> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!(
            "correspondence counts differ: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "alignment needs at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - mu_s, d - mu_d);
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv = svd.singular_values;
    // sort descending so the rank test and sign correction apply to the smallest value
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].total_cmp(&sv[*a]));
    let u = Matrix3::from_columns(&order.map(|i| u.column(i).into_owned()));
    let v_t = Matrix3::from_rows(&order.map(|i| v_t.row(i).into_owned()));
    sv = Vector3::new(sv[order[0]], sv[order[1]], sv[order[2]]);
    let scale_ref = sv[0].max(f64::MIN_POSITIVE);
    if var_s <= 1e-24 || sv[1] <= 1e-12 * scale_ref {
        return Err(Error::Degenerate("correspondences are collinear or coincident".into()));
    }
    let mut s_fix = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s_fix[(2, 2)] = -1.0;
    }
    let rotation = u * s_fix * v_t;
    let trace = sv[0] * s_fix[(0, 0)] + sv[1] * s_fix[(1, 1)] + sv[2] * s_fix[(2, 2)];
    let scale = trace / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

/// Poses with strictly increasing frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub indices: Vec<u64>,
    pub poses: Vec<CameraPose>,
}

impl Trajectory {
    pub fn new(indices: Vec<u64>, poses: Vec<CameraPose>) -> Result<Self> {
        if indices.len() != poses.len() {
            return Err(Error::invalid("trajectory index and pose counts differ"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("trajectory indices must be strictly increasing"));
        }
        Ok(Trajectory { indices, poses })
    }

    /// Indices `0..n`.
    pub fn from_poses(poses: Vec<CameraPose>) -> Self {
        Trajectory {
            indices: (0..poses.len() as u64).collect(),
            poses,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    pub fn transformed(&self, t: &Sim3) -> Trajectory {
        Trajectory {
            indices: self.indices.clone(),
            poses: self.poses.iter().map(|p| t.apply_pose(p)).collect(),
        }
    }
}

fn check_matched(pred: &Trajectory, gt: &Trajectory) -> Result<()> {
    if pred.indices != gt.indices {
        return Err(Error::invalid("trajectories are not index-matched"));
    }
    Ok(())
}

/// Sim(3) transform aligning the predicted positions onto the ground truth.
pub fn align_trajectory(pred: &Trajectory, gt: &Trajectory) -> Result<Sim3> {
    check_matched(pred, gt)?;
    umeyama_sim3(&pred.positions(), &gt.positions())
}

/// RMSE of position residuals after Sim(3) alignment.
pub fn ate(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let t = align_trajectory(pred, gt)?;
    let sum: f64 = pred
        .poses
        .iter()
        .zip(&gt.poses)
        .map(|(p, g)| (t.apply(&p.translation) - g.translation).norm_squared())
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Relative pose errors over pairs `delta` frames apart, computed on the
/// Sim(3)-aligned prediction: `(translation RMSE, rotation RMSE in degrees)`.
pub fn rpe(pred: &Trajectory, gt: &Trajectory, delta: usize) -> Result<(f64, f64)> {
    if delta == 0 {
        return Err(Error::invalid("RPE spacing must be at least 1"));
    }
    let t = align_trajectory(pred, gt)?;
    let aligned = pred.transformed(&t);
    let pairs = pred.len().saturating_sub(delta);
    if pairs == 0 {
        return Err(Error::invalid("trajectory too short for the RPE spacing"));
    }
    let (mut st, mut sr) = (0.0, 0.0);
    for i in 0..pairs {
        let rel_p = aligned.poses[i].inverse().compose(&aligned.poses[i + delta]);
        let rel_g = gt.poses[i].inverse().compose(&gt.poses[i + delta]);
        let err = rel_g.inverse().compose(&rel_p);
        st += err.translation.norm_squared();
        sr += rotation_angle(&err.rotation).to_degrees().powi(2);
    }
    Ok(((st / pairs as f64).sqrt(), (sr / pairs as f64).sqrt()))
}

/// Geodesic angle of a rotation matrix, accurate near zero where the
/// trace-only `acos` form loses half its digits.
fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

pub fn rpe_trans(pred: &Trajectory, gt: &Trajectory, delta: usize) -> Result<f64> {
    Ok(rpe(pred, gt, delta)?.0)
}

pub fn rpe_rot(pred: &Trajectory, gt: &Trajectory, delta: usize) -> Result<f64> {
    Ok(rpe(pred, gt, delta)?.1)
}

/// A labelled query vector in the scene's language-feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct TextQuery {
    pub label: String,
    pub embedding: Vec<f64>,
}

impl TextQuery {
    pub fn new(label: impl Into<String>, embedding: Vec<f64>) -> Result<Self> {
        let q = TextQuery {
            label: label.into(),
            embedding,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid(format!(
                "query {:?} has a zero or non-finite embedding",
                self.label
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Per-pixel cosine similarity to the query (0 where the feature is zero) and
/// the mask of pixels strictly above `threshold`.
pub fn segment_query(features: &FeatureMap, q: &TextQuery, threshold: f64) -> Result<(Mask, Vec<f64>)> {
    q.validate()?;
    if q.embedding.len() != features.k() {
        return Err(Error::invalid(format!(
            "query width {} does not match feature width {}",
            q.embedding.len(),
            features.k()
        )));
    }
    let qn = q.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut mask = Mask::new(features.width(), features.height());
    let mut conf = Vec::with_capacity(features.width() * features.height());
    for (i, f) in features.pixels().enumerate() {
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = if fnorm == 0.0 {
            0.0
        } else {
            f.iter().zip(&q.embedding).map(|(a, b)| a * b).sum::<f64>() / (fnorm * qn)
        };
        conf.push(c);
        if c > threshold {
            mask.set(i % features.width(), i / features.width(), true);
        }
    }
    Ok((mask, conf))
}

/// Mean IoU and mean accuracy (over gt-positive pixels), in percent, across
/// labels. Labels whose prediction and ground truth are both empty are
/// skipped.
pub fn miou_macc(pred: &[Mask], gt: &[Mask]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("prediction and ground-truth label counts differ"));
    }
    let (mut iou_sum, mut acc_sum, mut n_iou, mut n_acc) = (0.0, 0.0, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if !p.same_shape(g) {
            return Err(Error::invalid("mask sizes differ"));
        }
        let (mut inter, mut union, mut pos) = (0usize, 0usize, 0usize);
        for (a, b) in p.data().iter().zip(g.data()) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
            pos += *b as usize;
        }
        if union == 0 {
            continue;
        }
        iou_sum += inter as f64 / union as f64;
        n_iou += 1;
        if pos > 0 {
            acc_sum += inter as f64 / pos as f64;
            n_acc += 1;
        }
    }
    if n_iou == 0 {
        return Err(Error::invalid("no label has a nonempty prediction or ground truth"));
    }
    let macc = if n_acc == 0 {
        0.0
    } else {
        100.0 * acc_sum / n_acc as f64
    };
    Ok((100.0 * iou_sum / n_iou as f64, macc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> RgbImage {
        RgbImage::from_raw(w, h, (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = RgbImage::filled(8, 8, [0.5; 3]);
        let b = RgbImage::filled(8, 8, [0.75; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&a, &b).unwrap() - 12.041199826559248).abs() < 1e-9);
        assert!(psnr(&a, &RgbImage::new(8, 7)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(16, 16, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut check = RgbImage::new(16, 16);
        let mut neg = RgbImage::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let v = ((x + y) % 2) as f64;
                check.set(x, y, [v; 3]);
                neg.set(x, y, [1.0 - v; 3]);
            }
        }
        assert!(ssim(&check, &neg).unwrap() < 0.0);
        assert!(ssim(&RgbImage::new(10, 20), &RgbImage::new(10, 20)).is_err());
        let b = random_image(16, 16, &mut rng);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn umeyama_identity() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
        ];
        let t = umeyama_sim3(&pts, &pts).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn umeyama_rejects_collinear_points() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        assert!(matches!(umeyama_sim3(&pts, &pts), Err(Error::Degenerate(_))));
        let two = &pts[..2];
        assert!(umeyama_sim3(two, two).is_err());
    }

    #[test]
    fn umeyama_handles_planar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src: Vec<_> = (0..6)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let r = Quat::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.7)
            .normalized()
            .unwrap();
        let rm = crate::geometry::quat_to_rotmat(r).unwrap();
        let dst: Vec<_> = src.iter().map(|p| rm * p * 0.5 + Vector3::new(1.0, 2.0, 3.0)).collect();
        let t = umeyama_sim3(&src, &dst).unwrap();
        assert!((t.rotation - rm).abs().max() < 1e-9);
        assert!((t.scale - 0.5).abs() < 1e-9);
    }

    #[test]
    fn trajectory_metrics_of_identical_inputs_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let poses: Vec<_> = (0..6)
            .map(|_| {
                let q = Quat::new(rng.gen(), rng.gen(), rng.gen(), rng.gen())
                    .normalized()
                    .unwrap();
                CameraPose::from_quat(q, Vector3::new(rng.gen(), rng.gen(), rng.gen())).unwrap()
            })
            .collect();
        let t = Trajectory::from_poses(poses);
        assert!(ate(&t, &t).unwrap() < 1e-12);
        let (rt, rr) = rpe(&t, &t, 1).unwrap();
        assert!(rt < 1e-12 && rr < 1e-5);
        let shifted = Trajectory::new(vec![1, 2, 3, 4, 5, 6], t.poses.clone()).unwrap();
        assert!(ate(&shifted, &t).is_err());
        assert!(Trajectory::new(vec![0, 0], t.poses[..2].to_vec()).is_err());
    }

    #[test]
    fn segmentation_of_two_regions() {
        let mut f = FeatureMap::zeros(4, 2, 2);
        let mut gt_a = Mask::new(4, 2);
        for y in 0..2 {
            for x in 0..4 {
                if x < 2 {
                    f.pixel_mut(x, y).copy_from_slice(&[1.0, 0.0]);
                    gt_a.set(x, y, true);
                } else {
                    f.pixel_mut(x, y).copy_from_slice(&[0.0, 3.0]);
                }
            }
        }
        let q = TextQuery::new("a", vec![2.0, 0.0]).unwrap();
        let (mask, conf) = segment_query(&f, &q, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(mask, gt_a);
        assert_eq!(conf[0], 1.0);
        assert_eq!(miou_macc(&[mask], &[gt_a]).unwrap(), (100.0, 100.0));
        assert!(TextQuery::new("zero", vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn half_coverage_scores_fifty() {
        let mut gt = Mask::new(4, 1);
        let mut pred = Mask::new(4, 1);
        for x in 0..4 {
            gt.set(x, 0, true);
        }
        pred.set(0, 0, true);
        pred.set(1, 0, true);
        assert_eq!(
            miou_macc(&[pred.clone(), pred], &[gt.clone(), gt]).unwrap(),
            (50.0, 50.0)
        );
        assert!(miou_macc(&[Mask::new(2, 2)], &[Mask::new(2, 2)]).is_err());
    }
}
