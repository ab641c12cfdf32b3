use std::collections::BTreeSet;

use crate::cluster::LabelMap;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, SE3};

use super::fit_rigid;

/// Seconds.
pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory {
    poses: Vec<(f64, SE3)>,
}

impl Trajectory {
    pub fn new(poses: Vec<(f64, SE3)>) -> Result<Self> {
        if let Some(w) = poses.windows(2).find(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Config(format!(
                "trajectory timestamps must increase strictly ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[(f64, SE3)] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &SE3) -> Self {
        Self { poses: self.poses.iter().map(|(s, p)| (*s, t.compose(p))).collect() }
    }
}

/// RMSE and median absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryMetrics {
    pub rmse: f64,
    pub mae: f64,
}

impl TrajectoryMetrics {
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self { rmse: 0.0, mae: 0.0 };
        }
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mid = abs.len() / 2;
        let mae = if abs.len() % 2 == 1 { abs[mid] } else { (abs[mid - 1] + abs[mid]) / 2.0 };
        Self { rmse, mae }
    }
}

/// Pairs `(est index, gt index)` whose timestamps differ by at most
/// `tolerance`, matched greedily by smallest difference, one-to-one.
pub fn associate(est: &Trajectory, gt: &Trajectory, tolerance: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    let stamps: Vec<f64> = gt.poses.iter().map(|(t, _)| *t).collect();
    for (i, (t, _)) in est.poses.iter().enumerate() {
        let j = stamps.partition_point(|s| s < t);
        for k in [j.wrapping_sub(1), j] {
            if let Some(s) = stamps.get(k) {
                let dt = (s - t).abs();
                if dt <= tolerance {
                    candidates.push((dt, i, k));
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_est, mut used_gt) = (BTreeSet::new(), BTreeSet::new());
    let mut pairs: Vec<(usize, usize)> = candidates
        .into_iter()
        .filter(|&(_, i, j)| {
            if used_est.contains(&i) || used_gt.contains(&j) {
                return false;
            }
            used_est.insert(i);
            used_gt.insert(j);
            true
        })
        .map(|(_, i, j)| (i, j))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Absolute trajectory error with the default association tolerance.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<TrajectoryMetrics> {
    ate_with_tolerance(est, gt, DEFAULT_ASSOCIATION_TOLERANCE)
}

/// Aligns the estimated positions onto ground truth with the least-squares
/// rigid transform, then summarizes the translational residuals.
pub fn ate_with_tolerance(est: &Trajectory, gt: &Trajectory, tolerance: f64) -> Result<TrajectoryMetrics> {
    let pairs = associate(est, gt, tolerance);
    if pairs.len() < 2 {
        return Err(Error::Insufficient { what: "associated poses", needed: 2, got: pairs.len() });
    }
    let src: Vec<Vec3> = pairs.iter().map(|&(i, _)| est.poses[i].1.translation).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|&(_, j)| gt.poses[j].1.translation).collect();
    let align = fit_rigid(&src, &dst);
    let errors: Vec<f64> = src.iter().zip(&dst).map(|(s, d)| (d - align.transform_point(s)).norm()).collect();
    Ok(TrajectoryMetrics::from_errors(&errors))
}

/// Relative pose error over a stride of `delta` associated poses.
/// Returns translational (meters) and rotational (degrees) metrics.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: usize) -> Result<(TrajectoryMetrics, TrajectoryMetrics)> {
    let delta = delta.max(1);
    let pairs = associate(est, gt, DEFAULT_ASSOCIATION_TOLERANCE);
    if pairs.len() < delta + 1 {
        return Err(Error::Insufficient { what: "associated poses", needed: delta + 1, got: pairs.len() });
    }
    let (mut trans, mut rot) = (Vec::new(), Vec::new());
    for w in 0..pairs.len() - delta {
        let (e0, g0) = pairs[w];
        let (e1, g1) = pairs[w + delta];
        let rel_est = est.poses[e0].1.inverse().compose(&est.poses[e1].1);
        let rel_gt = gt.poses[g0].1.inverse().compose(&gt.poses[g1].1);
        let err = rel_gt.inverse().compose(&rel_est);
        trans.push(err.translation.norm());
        rot.push(err.rotation_angle().to_degrees());
    }
    Ok((TrajectoryMetrics::from_errors(&trans), TrajectoryMetrics::from_errors(&rot)))
}

/// Dynamic is the positive class; unknown labels count as negative.
/// Ratios with an empty denominator are reported as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn classification_metrics(labels: &LabelMap, gt_dynamic: &BTreeSet<u64>) -> ClassificationMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for e in &labels.entries {
        match (e.label.is_dynamic(), gt_dynamic.contains(&e.id)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision > 0.0 && recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    ClassificationMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
    }
}
