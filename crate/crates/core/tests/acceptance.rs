//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridmotion::cluster::merge_clusters;
use gridmotion::config::read_config;
use gridmotion::grid::{
    bin_matches, subdivide_binned, CellDecision, GridConfig, GridGeometry, QuadNode, Rect, Shift, Verdict,
};
use gridmotion::io::{
    format_labels, format_matches, read_labels, read_matches, write_atomic, write_labels, write_matches,
};
use gridmotion::pipeline::{bench, run_filter_pipeline, PipelineConfig};
use gridmotion::pose_eval::{ate, classification_metrics, estimate_pose, Trajectory};
use gridmotion::simulator::{generate, ObjectSpec, RigidMotion, SceneConfig};
use gridmotion::{Correspondence, Label, LabelEntry, LabelMap, MotionBin, Pixel, StatModel, Vec3, SE3};

const STATIC_RUNTIME_LIMIT_S: f64 = 1.0;
const MIN_PRECISION: f64 = 0.90;
const MIN_RECALL: f64 = 0.80;
const DETECTION_SEEDS: u64 = 20;
const MC_TRIALS: usize = 100_000;
const MC_TOLERANCE: f64 = 0.005;
const MC_RUNTIME_LIMIT_S: f64 = 5.0;
const ATE_RATIO_LIMIT: f64 = 0.5;
const POSE_SEEDS: u64 = 20;
const BENCH_SIZES: [usize; 4] = [1000, 2000, 4000, 8000];
const BENCH_RATIO_LIMIT: f64 = 10.0;
const ORACLE_GRIDS: usize = 100;
const ROUND_TRIP_RECORDS: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reproducibility_statement() -> Outcome {
    outcome(true, "paper tables need a full SLAM system and recorded RGB-D sequences; replaced by criteria 2-10".into())
}

fn static_scene_soundness() -> Outcome {
    let cfg = SceneConfig {
        n_static: 2000,
        objects: Vec::new(),
        pixel_noise_sigma: 0.0,
        depth_noise_sigma: 0.0,
        camera_motion: RigidMotion::translation(Vec3::new(0.0, 0.0, 0.5)),
        ..SceneConfig::default()
    };
    let (matches, _) = generate(&cfg).expect("scene");
    let start = Instant::now();
    let out = run_filter_pipeline(&matches, None, &PipelineConfig::default()).expect("pipeline");
    let secs = start.elapsed().as_secs_f64();
    let dynamic = out.report.counts.dynamic;
    outcome(
        dynamic == 0 && secs < STATIC_RUNTIME_LIMIT_S,
        format!("{dynamic} dynamic labels (need 0), runtime {secs:.3} s (limit {STATIC_RUNTIME_LIMIT_S} s)"),
    )
}

fn dynamic_detection() -> Outcome {
    let (mut precision, mut recall) = (0.0, 0.0);
    for seed in 0..DETECTION_SEEDS {
        let (matches, gt) = generate(&SceneConfig { seed, ..SceneConfig::default() }).expect("scene");
        let out = run_filter_pipeline(&matches, None, &PipelineConfig::default()).expect("pipeline");
        let m = classification_metrics(&out.labels, &gt.dynamic_ids);
        precision += m.precision;
        recall += m.recall;
    }
    precision /= DETECTION_SEEDS as f64;
    recall /= DETECTION_SEEDS as f64;
    outcome(
        precision >= MIN_PRECISION && recall >= MIN_RECALL,
        format!(
            "mean precision {precision:.4} (>= {MIN_PRECISION}), mean recall {recall:.4} (>= {MIN_RECALL}) over {DETECTION_SEEDS} seeds"
        ),
    )
}

fn statistics_model() -> Outcome {
    let model = StatModel::new(0.6, 1.0, 0.04).expect("model");
    let start = Instant::now();
    let (emp_true, emp_false) = model.monte_carlo_check(50, MC_TRIALS, 7);
    let secs = start.elapsed().as_secs_f64();
    let (d_true, d_false) = ((emp_true - 0.616).abs(), (emp_false - 0.016).abs());
    outcome(
        d_true <= MC_TOLERANCE && d_false <= MC_TOLERANCE && secs < MC_RUNTIME_LIMIT_S,
        format!(
            "p_true {emp_true:.5} vs 0.616, p_false {emp_false:.5} vs 0.016 (tolerance {MC_TOLERANCE}), runtime {secs:.3} s"
        ),
    )
}

/// Scene for the pose comparison: 30% of the matches on a nearby object
/// approaching the camera slightly slower than the consensus threshold per
/// frame, so unfiltered RANSAC keeps it in its consensus set.
fn pose_scene(seed: u64, step: u64) -> SceneConfig {
    SceneConfig {
        n_static: 1400,
        camera_motion: RigidMotion { rotvec: Vec3::new(0.0, 0.01, 0.0), translation: Vec3::new(0.05, 0.0, 0.02) },
        objects: vec![ObjectSpec {
            n_points: 600,
            center: Vec3::new(0.0, 0.0, 0.7),
            extent: 0.3,
            motion: RigidMotion::translation(Vec3::new(0.0, 0.0, 0.045)),
        }],
        depth_noise_sigma: 0.005,
        seed: seed * 1000 + step,
        ..SceneConfig::default()
    }
}

const POSE_STEPS: u64 = 10;

/// ATE RMSE of the unfiltered and the filtered trajectories of one seed.
fn pose_run(seed: u64) -> (f64, f64) {
    let cfg = PipelineConfig::default();
    let mut gt = vec![(0.0, SE3::identity())];
    let mut raw = gt.clone();
    let mut refined = gt.clone();
    for step in 0..POSE_STEPS {
        let (matches, truth) = generate(&pose_scene(seed, step)).expect("scene");
        let unfiltered = estimate_pose(&matches, &cfg.ransac).expect("ransac").pose;
        let filtered = run_filter_pipeline(&matches, None, &cfg).expect("pipeline").refined_pose;
        let t = (step + 1) as f64 * 0.1;
        let chain = |traj: &Vec<(f64, SE3)>, rel: &SE3| (t, traj.last().unwrap().1.compose(rel));
        gt.push(chain(&gt, &truth.pose));
        raw.push(chain(&raw, &unfiltered));
        refined.push(chain(&refined, &filtered));
    }
    let gt = Trajectory::new(gt).unwrap();
    let raw = ate(&Trajectory::new(raw).unwrap(), &gt).unwrap().rmse;
    let refined = ate(&Trajectory::new(refined).unwrap(), &gt).unwrap().rmse;
    (raw, refined)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn pose_improvement() -> Outcome {
    let (raw, refined): (Vec<f64>, Vec<f64>) = (0..POSE_SEEDS).map(pose_run).unzip();
    let (raw, refined) = (median(raw), median(refined));
    let ratio = refined / raw;
    outcome(
        ratio <= ATE_RATIO_LIMIT,
        format!(
            "median ATE filtered {refined:.5} m vs unfiltered {raw:.5} m, ratio {ratio:.3} (limit {ATE_RATIO_LIMIT})"
        ),
    )
}

fn complexity() -> Outcome {
    let records = bench(&BENCH_SIZES, 0).expect("bench");
    let ratio = records[3].millis / records[0].millis;
    let times: Vec<String> = records.iter().map(|r| format!("{}: {:.2} ms", r.size, r.millis)).collect();
    outcome(
        ratio <= BENCH_RATIO_LIMIT,
        format!("{}; time ratio 8000/1000 = {ratio:.2} (limit {BENCH_RATIO_LIMIT})", times.join(", ")),
    )
}

/// Connected components by iterative flood fill over 8-neighbors.
fn flood_fill(cols: usize, rows: usize, grid: &[Option<MotionBin>]) -> BTreeSet<(MotionBin, BTreeSet<usize>)> {
    let mut seen = vec![false; grid.len()];
    let mut out = BTreeSet::new();
    for start in 0..grid.len() {
        let Some(bin) = grid[start] else { continue };
        if seen[start] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.insert(i);
            let (c, r) = ((i % cols) as isize, (i / cols) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= cols as isize || nr >= rows as isize {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if !seen[j] && grid[j] == Some(bin) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.insert((bin, comp));
    }
    out
}

fn clustering_oracle() -> Outcome {
    let (cols, rows) = (8, 8);
    let cfg = GridConfig { image_width: 80, image_height: 80, gx: cols, gy: rows, ..GridConfig::default() };
    let geometry = GridGeometry::new(&cfg, Shift::PASSES[0]);
    let bins = [MotionBin::new(1, 0), MotionBin::new(0, -1), MotionBin::new(-2, 2)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..ORACLE_GRIDS {
        let density = rng.random_range(0.2..0.8);
        let grid: Vec<Option<MotionBin>> =
            (0..cols * rows).map(|_| rng.random_bool(density).then(|| bins[rng.random_range(0..bins.len())])).collect();
        let mut next = 0;
        let decisions: Vec<CellDecision> = grid
            .iter()
            .enumerate()
            .map(|(cell, bin)| {
                let support = rng.random_range(1..30usize);
                let winners: Vec<usize> = (next..next + support).collect();
                next += support;
                CellDecision {
                    pass: 0,
                    cell_id: cell,
                    quad_path: Vec::new(),
                    rect: geometry.cell_rect(cell),
                    verdict: bin.map_or(Verdict::Static, Verdict::Dynamic),
                    n: support,
                    support: support as u32,
                    winning_bin: bin.unwrap_or(MotionBin::STATIC),
                    members: winners.clone(),
                    winners,
                }
            })
            .collect();
        let cm = merge_clusters(&decisions, &geometry);
        let got: BTreeSet<_> = cm.clusters.iter().map(|c| (c.motion_bin, c.cells.clone())).collect();
        if got != flood_fill(cols, rows, &grid) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of {ORACLE_GRIDS} random 8x8 grids differ from flood fill"))
}

/// Correspondence at (u, v) displaced by `dz` along the depth axis of a
/// point one meter away.
fn at(id: u64, u: f64, v: f64, dz: f64) -> Correspondence {
    let x_ma = Vec3::new(0.0, 0.0, 1.0);
    Correspondence { id, px_re: Pixel::new(u, v), px_ma: Pixel::new(u, v), x_re: x_ma + Vec3::new(0.0, 0.0, dz), x_ma }
}

fn quadtree_behavior() -> Outcome {
    let cfg = GridConfig { image_width: 80, image_height: 80, gx: 2, gy: 2, ..GridConfig::default() };
    let model = StatModel::new(0.6, 1.0, 0.04).unwrap();
    let cell = Rect::new(0.0, 0.0, 40.0, 40.0);

    // left half static, right half moving by two depth bins
    let mixed: Vec<Correspondence> = (0..40u64)
        .map(|i| {
            let k = i % 20;
            let right = i >= 20;
            let u = (k % 5) as f64 * 3.0 + 1.0 + if right { 20.0 } else { 0.0 };
            let v = (k / 5) as f64 * 10.0 + 1.0;
            at(i, u, v, if right { 0.1 } else { 0.0 })
        })
        .collect();
    let binned = bin_matches(&mixed, &SE3::identity(), &cfg);
    let mut root = QuadNode::root(0, cell, (0..mixed.len()).collect());
    let decisions = subdivide_binned(&mut root, &binned, 0, &cfg, &model);
    let mut mixed_ok = root.children.len() == 4 && decisions.len() == 4;
    for d in &decisions {
        let right = d.quad_path.first().is_some_and(|q| q & 1 == 1);
        let expected = if right { Verdict::Dynamic(MotionBin::new(2, 0)) } else { Verdict::Static };
        mixed_ok &= d.verdict == expected && d.n == 10;
    }

    // 38 of 40 static: share 0.95 >= p_min
    let pure: Vec<Correspondence> = (0..40u64)
        .map(|i| at(i, (i % 8) as f64 * 5.0 + 1.0, (i / 8) as f64 * 8.0 + 1.0, if i < 2 { 0.1 } else { 0.0 }))
        .collect();
    let binned = bin_matches(&pure, &SE3::identity(), &cfg);
    let mut root = QuadNode::root(0, cell, (0..pure.len()).collect());
    let decisions = subdivide_binned(&mut root, &binned, 0, &cfg, &model);
    let pure_ok = root.children.is_empty() && decisions.len() == 1 && decisions[0].verdict == Verdict::Static;

    outcome(
        mixed_ok && pure_ok,
        format!("mixed cell split into static/dynamic quads: {mixed_ok}; pure cell kept whole: {pure_ok}"),
    )
}

fn round_trip(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let matches: Vec<Correspondence> = (0..ROUND_TRIP_RECORDS as u64)
        .map(|id| Correspondence {
            id,
            px_re: Pixel::new(r(0.0, 640.0), r(0.0, 480.0)),
            px_ma: Pixel::new(r(0.0, 640.0), r(0.0, 480.0)),
            x_re: Vec3::new(r(-4.0, 4.0), r(-3.0, 3.0), r(0.5, 8.0)),
            x_ma: Vec3::new(r(-4.0, 4.0), r(-3.0, 3.0), r(0.5, 8.0)),
        })
        .collect();
    let labels = LabelMap {
        entries: (0..ROUND_TRIP_RECORDS as u64)
            .map(|id| {
                let label = match id % 3 {
                    0 => Label::Static,
                    1 => Label::Dynamic { cluster: (id % 7) as usize, bin: MotionBin::new((id % 5) as i32 - 2, 1) },
                    _ => Label::Unknown,
                };
                LabelEntry { id, label, provenance: None }
            })
            .collect(),
    };
    let (m1, m2) = (dir.join("m1.csv"), dir.join("m2.csv"));
    let (l1, l2) = (dir.join("l1.csv"), dir.join("l2.csv"));
    write_matches(&m1, &matches).unwrap();
    let matches_back = read_matches(&m1).unwrap();
    write_matches(&m2, &matches_back).unwrap();
    write_labels(&l1, &labels).unwrap();
    let labels_back = read_labels(&l1).unwrap();
    write_labels(&l2, &labels_back).unwrap();
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    let matches_ok =
        matches_back == matches && bytes(&m1) == bytes(&m2) && bytes(&m1) == format_matches(&matches).into_bytes();
    let labels_ok =
        labels_back == labels && bytes(&l1) == bytes(&l2) && bytes(&l1) == format_labels(&labels).into_bytes();
    outcome(
        matches_ok && labels_ok,
        format!(
            "{ROUND_TRIP_RECORDS} matches identical: {matches_ok}; {ROUND_TRIP_RECORDS} labels identical: {labels_ok}"
        ),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let (matches, _) = generate(&SceneConfig { seed: 11, ..SceneConfig::default() }).unwrap();
    let cfg_path = dir.join("pipeline.cfg");
    write_atomic(&cfg_path, "ransac_seed = 5\n").unwrap();
    let cfg = read_config(&cfg_path).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = run_filter_pipeline(&matches, None, &cfg).unwrap();
        let (labels, report) = (dir.join(format!("labels{run}.csv")), dir.join(format!("report{run}.txt")));
        write_labels(&labels, &out.labels).unwrap();
        write_atomic(&report, &out.report.to_text(false)).unwrap();
        outputs.push((std::fs::read(labels).unwrap(), std::fs::read(report).unwrap()));
    }
    let labels_same = outputs[0].0 == outputs[1].0;
    let report_same = outputs[0].1 == outputs[1].1;
    outcome(
        labels_same && report_same,
        format!("label files identical: {labels_same}; report files identical: {report_same}"),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Check)> = vec![
        ("paper-result reproducibility statement", Box::new(reproducibility_statement)),
        ("static-scene soundness", Box::new(static_scene_soundness)),
        ("dynamic detection", Box::new(dynamic_detection)),
        ("statistics model", Box::new(statistics_model)),
        ("pose improvement", Box::new(pose_improvement)),
        ("linear complexity", Box::new(complexity)),
        ("clustering oracle", Box::new(clustering_oracle)),
        ("quadtree behavior", Box::new(quadtree_behavior)),
        ("file-format round trip", Box::new(|| round_trip(dir.path()))),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} criterion {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, name, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
