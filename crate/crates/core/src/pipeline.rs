//! End-to-end filter: first pose estimate, grid passes, clustering, fusion
//! and refinement of the pose on the static correspondences.

use std::fmt::Write as _;
use std::time::Instant;

use crate::cluster::{
    eliminate_small, fuse_passes, label_matches, merge_clusters, suppress_duplicates, LabelCounts, LabelMap,
};
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, MotionBin, SE3};
use crate::grid::{run_passes, GridConfig, Verdict};
use crate::pose_eval::{estimate_pose, refine_pose, RansacParams};
use crate::simulator::{generate, ObjectSpec, SceneConfig};
use crate::stats::StatModel;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub model: StatModel,
    pub ransac: RansacParams,
    /// Clusters with fewer members are relabeled static.
    pub min_cluster_features: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let grid = GridConfig::default();
        Self {
            model: StatModel::for_grid(grid.gx, grid.gy),
            grid,
            ransac: RansacParams::default(),
            min_cluster_features: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.model.validate()?;
        if self.ransac.iterations == 0 {
            return Err(Error::Config("ransac_iterations must be at least 1".into()));
        }
        if !(self.ransac.inlier_threshold > 0.0 && self.ransac.inlier_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "ransac_inlier_threshold must be positive, got {}",
                self.ransac.inlier_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoseSource {
    Given,
    Estimated { inliers: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterSummary {
    pub id: usize,
    pub bin: MotionBin,
    pub size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PassSummary {
    pub pass: usize,
    pub static_regions: usize,
    pub dynamic_regions: usize,
    pub unknown_regions: usize,
    /// Clusters left after suppression and elimination.
    pub clusters: usize,
    /// Final labels whose deciding region came from this pass.
    pub labels_decided: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterReport {
    pub matches: usize,
    pub rejected: usize,
    pub counts: LabelCounts,
    pub pose_source: PoseSource,
    pub clusters: Vec<ClusterSummary>,
    pub passes: Vec<PassSummary>,
    pub timings: Vec<StageTiming>,
    pub total_millis: f64,
}

impl FilterReport {
    /// `key = value` text. Timings are wall-clock and differ between runs,
    /// so they are only written when asked for.
    pub fn to_text(&self, with_timings: bool) -> String {
        let mut out = String::from("# gridmotion-format v1\n# filter report\n");
        let _ = writeln!(out, "matches = {}", self.matches);
        let _ = writeln!(out, "rejected = {}", self.rejected);
        let _ = writeln!(out, "static = {}", self.counts.static_);
        let _ = writeln!(out, "dynamic = {}", self.counts.dynamic);
        let _ = writeln!(out, "unknown = {}", self.counts.unknown);
        match self.pose_source {
            PoseSource::Given => out.push_str("pose_source = given\n"),
            PoseSource::Estimated { inliers } => {
                let _ = writeln!(out, "pose_source = estimated\npose_inliers = {inliers}");
            }
        }
        let _ = writeln!(out, "cluster_count = {}", self.clusters.len());
        for c in &self.clusters {
            let _ = writeln!(out, "cluster.{} = bin {} {} size {}", c.id, c.bin.iz, c.bin.ix, c.size);
        }
        for p in &self.passes {
            let _ = writeln!(
                out,
                "pass.{} = static_regions {} dynamic_regions {} unknown_regions {} clusters {} labels_decided {}",
                p.pass, p.static_regions, p.dynamic_regions, p.unknown_regions, p.clusters, p.labels_decided
            );
        }
        if with_timings {
            for t in &self.timings {
                let _ = writeln!(out, "time_ms.{} = {:.3}", t.stage, t.millis);
            }
            let _ = writeln!(out, "time_ms.total = {:.3}", self.total_millis);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub labels: LabelMap,
    pub refined_pose: SE3,
    /// Pose the residuals were binned under.
    pub initial_pose: SE3,
    pub report: FilterReport,
}

struct Stopwatch {
    last: Instant,
    timings: Vec<StageTiming>,
}

impl Stopwatch {
    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push(StageTiming { stage, millis: (now - self.last).as_secs_f64() * 1e3 });
        self.last = now;
    }
}

/// Labels without the final pose refinement, and the pass summaries.
fn classify(
    matches: &[Correspondence],
    pose0: &SE3,
    cfg: &PipelineConfig,
    watch: &mut Stopwatch,
) -> (LabelMap, Vec<PassSummary>, usize) {
    let grid = run_passes(matches, pose0, &cfg.grid, &cfg.model);
    watch.lap("grid");

    let ids: Vec<u64> = matches.iter().map(|c| c.id).collect();
    let mut summaries = Vec::with_capacity(grid.passes.len());
    let per_pass: Vec<LabelMap> = grid
        .passes
        .iter()
        .map(|pass| {
            let merged = merge_clusters(&pass.decisions, &pass.geometry);
            let kept = suppress_duplicates(&merged, &pass.decisions);
            let kept = eliminate_small(&kept, &pass.decisions, cfg.min_cluster_features);
            let mut s = PassSummary { pass: pass.pass_id, clusters: kept.clusters.len(), ..Default::default() };
            for d in &pass.decisions {
                match d.verdict {
                    Verdict::Static => s.static_regions += 1,
                    Verdict::Dynamic(_) => s.dynamic_regions += 1,
                    Verdict::Unknown => s.unknown_regions += 1,
                }
            }
            summaries.push(s);
            label_matches(&kept, &pass.decisions, &ids, &grid.binned.rejected)
        })
        .collect();
    let labels = fuse_passes(&per_pass, cfg.min_cluster_features);
    for e in &labels.entries {
        if let Some(p) = &e.provenance {
            if let Some(s) = summaries.get_mut(p.pass) {
                s.labels_decided += 1;
            }
        }
    }
    watch.lap("clustering");
    (labels, summaries, grid.binned.rejected.len())
}

/// Runs the filter on one frame pair. Without `pose0` the first pose comes
/// from RANSAC over all matches. Errors carry the name of the failing stage.
pub fn run_filter_pipeline(
    matches: &[Correspondence],
    pose0: Option<&SE3>,
    cfg: &PipelineConfig,
) -> Result<FilterOutput> {
    if matches.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let start = Instant::now();
    let mut watch = Stopwatch { last: start, timings: Vec::new() };

    let (initial_pose, pose_source) = match pose0 {
        Some(p) => (*p, PoseSource::Given),
        None => {
            let est = estimate_pose(matches, &cfg.ransac).map_err(|e| e.in_stage("pose_estimation"))?;
            (est.pose, PoseSource::Estimated { inliers: est.inlier_count() })
        }
    };
    watch.lap("pose_estimation");

    let (labels, passes, rejected) = classify(matches, &initial_pose, cfg, &mut watch);

    let refined_pose = refine_pose(matches, &labels).map_err(|e| e.in_stage("refinement"))?;
    watch.lap("refinement");
    let total_millis = start.elapsed().as_secs_f64() * 1e3;

    let clusters = labels.clusters().into_iter().map(|(id, (bin, size))| ClusterSummary { id, bin, size }).collect();
    let report = FilterReport {
        matches: matches.len(),
        rejected,
        counts: labels.counts(),
        pose_source,
        clusters,
        passes,
        timings: watch.timings,
        total_millis,
    };
    Ok(FilterOutput { labels, refined_pose, initial_pose, report })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRecord {
    pub size: usize,
    /// Best of several runs of the grid and clustering stages.
    pub millis: f64,
}

const BENCH_REPEATS: usize = 5;

/// Scene of `size` correspondences shaped like the default scene, with
/// 300/2300 of the points on the moving object.
pub fn bench_scene(size: usize, seed: u64) -> SceneConfig {
    let base = SceneConfig::default();
    let dynamic = size * 300 / 2300;
    let objects = base.objects.iter().map(|o| ObjectSpec { n_points: dynamic, ..o.clone() }).collect();
    SceneConfig { n_static: size - dynamic, objects, seed, ..base }
}

/// Times the filter stages (binning, grid passes, clustering) for each size
/// under the ground-truth pose.
pub fn bench(sizes: &[usize], seed: u64) -> Result<Vec<BenchRecord>> {
    let cfg = PipelineConfig::default();
    sizes
        .iter()
        .map(|&size| {
            let (matches, gt) = generate(&bench_scene(size, seed))?;
            let mut best = f64::INFINITY;
            for _ in 0..BENCH_REPEATS {
                let mut watch = Stopwatch { last: Instant::now(), timings: Vec::new() };
                let start = watch.last;
                let _ = classify(&matches, &gt.pose, &cfg, &mut watch);
                best = best.min(start.elapsed().as_secs_f64() * 1e3);
            }
            Ok(BenchRecord { size: matches.len(), millis: best })
        })
        .collect()
}
