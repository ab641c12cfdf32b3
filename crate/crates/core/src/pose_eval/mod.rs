//! Pose estimation from 3D–3D correspondences and evaluation metrics.

mod metrics;

pub use metrics::{
    associate, ate, ate_with_tolerance, classification_metrics, rpe, ClassificationMetrics, Trajectory,
    TrajectoryMetrics, DEFAULT_ASSOCIATION_TOLERANCE,
};

use nalgebra::{Matrix3, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::LabelMap;
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, Vec3, SE3};

/// Least-squares rigid fit `dst ≈ R * src + t` without degeneracy checks.
/// For degenerate inputs this still returns one of the minimizers.
pub(crate) fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> SE3 {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len().max(1) as f64;
    let mu_src = src.iter().sum::<Vec3>() / n;
    let mu_dst = dst.iter().sum::<Vec3>() / n;

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - mu_src) * (d - mu_dst).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = v_t.transpose();
    // reflection guard
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    let rotation = v * correction * u.transpose();
    SE3::new(rotation, mu_dst - rotation * mu_src)
}

fn is_degenerate(points: &[Vec3]) -> bool {
    let n = points.len() as f64;
    let mu = points.iter().sum::<Vec3>() / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| acc + (p - mu) * (p - mu).transpose());
    let mut sv = scatter.singular_values();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    sv[0] <= f64::EPSILON || sv[1] <= 1e-12 * sv[0]
}

/// Closed-form rigid alignment minimizing `Σ ‖dst_i − (R·src_i + t)‖²`.
pub fn rigid_align(src: &[Vec3], dst: &[Vec3]) -> Result<SE3> {
    if src.len() != dst.len() {
        return Err(Error::Degenerate("point sets differ in length"));
    }
    if src.len() < 3 {
        return Err(Error::Insufficient { what: "point pairs", needed: 3, got: src.len() });
    }
    if is_degenerate(src) {
        return Err(Error::Degenerate("points are collinear"));
    }
    Ok(fit_rigid(src, dst))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Meters, on the raw residual norm.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 200, inlier_threshold: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    /// Maps matched-frame points into the reference frame.
    pub pose: SE3,
    pub inliers: Vec<bool>,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn inlier_mask(matches: &[Correspondence], pose: &SE3, threshold: f64) -> Vec<bool> {
    matches.iter().map(|c| (c.x_re - pose.transform_point(&c.x_ma)).norm() < threshold).collect()
}

/// RANSAC over minimal 3-point samples, refit on the best consensus set.
/// The best hypothesis is the one with the most inliers; ties keep the
/// earliest iteration.
pub fn estimate_pose(matches: &[Correspondence], params: &RansacParams) -> Result<PoseEstimate> {
    if matches.len() < 3 {
        return Err(Error::Insufficient { what: "matches", needed: 3, got: matches.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Vec<bool>)> = None;
    for _ in 0..params.iterations {
        let sample = rand::seq::index::sample(&mut rng, matches.len(), 3);
        let src: Vec<Vec3> = sample.iter().map(|i| matches[i].x_ma).collect();
        let dst: Vec<Vec3> = sample.iter().map(|i| matches[i].x_re).collect();
        let Ok(pose) = rigid_align(&src, &dst) else {
            continue;
        };
        let mask = inlier_mask(matches, &pose, params.inlier_threshold);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, mask));
        }
    }

    let (count, inliers) = best.unwrap_or((0, vec![false; matches.len()]));
    if count < 3 {
        return Err(Error::ConsensusFailed { inliers: count });
    }
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) =
        matches.iter().zip(&inliers).filter(|(_, &keep)| keep).map(|(c, _)| (c.x_ma, c.x_re)).unzip();
    let pose = rigid_align(&src, &dst)?;
    Ok(PoseEstimate { pose, inliers })
}

/// Rigid alignment over the correspondences labeled static.
pub fn refine_pose(matches: &[Correspondence], labels: &LabelMap) -> Result<SE3> {
    let keep = labels.static_indices();
    if keep.len() < 3 {
        return Err(Error::Insufficient { what: "static matches", needed: 3, got: keep.len() });
    }
    let src: Vec<Vec3> = keep.iter().map(|&i| matches[i].x_ma).collect();
    let dst: Vec<Vec3> = keep.iter().map(|&i| matches[i].x_re).collect();
    rigid_align(&src, &dst)
}
