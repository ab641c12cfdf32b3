//! Synthetic dynamic scenes with ground truth.
//!
//! The reference camera sits at the world origin. `camera_motion` is the pose
//! of the matched camera in the reference frame, so a world point `X` is seen
//! by the matched camera at `camera_motion⁻¹ · X`, and `camera_motion` itself
//! is the ground-truth pose that maps matched-frame points back onto
//! reference-frame points.
//!
//! Objects move rigidly about their own center between the two frames:
//! `X' = center + R_obj · (X − center) + t_obj`, with `R_obj`, `t_obj` taken
//! from `object_motion` and expressed in the reference frame.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, Pixel, Vec3, SE3};

const MAX_RETRIES: usize = 1000;

const GEOMETRY_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const FALSE_MATCH_STREAM: u64 = 2;

/// Pinhole camera without distortion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
    }
}

impl Intrinsics {
    pub fn project(&self, p: &Vec3) -> Pixel {
        Pixel::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn backproject(&self, px: &Pixel, depth: f64) -> Vec3 {
        Vec3::new((px.u - self.cx) * depth / self.fx, (px.v - self.cy) * depth / self.fy, depth)
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }

    fn sees(&self, p: &Vec3) -> bool {
        p.z > 0.0 && self.contains(&self.project(p))
    }
}

/// Rigid motion as an axis-angle rotation (radians) and a translation.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidMotion {
    pub rotvec: Vec3,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn translation(translation: Vec3) -> Self {
        Self { rotvec: Vec3::zeros(), translation }
    }

    pub fn to_se3(&self) -> SE3 {
        SE3::from_rotvec(self.rotvec, self.translation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub n_points: usize,
    pub center: Vec3,
    /// Edge length of the cube points are drawn from, meters.
    pub extent: f64,
    pub motion: RigidMotion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub intrinsics: Intrinsics,
    pub n_static: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub camera_motion: RigidMotion,
    pub objects: Vec<ObjectSpec>,
    /// Pixels.
    pub pixel_noise_sigma: f64,
    /// Relative to depth.
    pub depth_noise_sigma: f64,
    pub false_match_rate: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    /// 2000 static points at 2–8 m and one 300-point object moving 0.3 m
    /// sideways, observed with 0.5 px pixel noise and 1% depth noise.
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics::default(),
            n_static: 2000,
            z_min: 2.0,
            z_max: 8.0,
            camera_motion: RigidMotion { rotvec: Vec3::new(0.0, 0.02, 0.0), translation: Vec3::new(0.1, 0.0, 0.05) },
            objects: vec![ObjectSpec {
                n_points: 300,
                center: Vec3::new(0.3, 0.1, 3.0),
                extent: 0.5,
                motion: RigidMotion::translation(Vec3::new(0.3, 0.0, 0.0)),
            }],
            pixel_noise_sigma: 0.5,
            depth_noise_sigma: 0.01,
            false_match_rate: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || k.width == 0 || k.height == 0 {
            return fail("intrinsics must have positive focal lengths and image size".into());
        }
        if !(self.z_min > 0.0 && self.z_max >= self.z_min) {
            return fail(format!("depth range must be positive, got [{}, {}]", self.z_min, self.z_max));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.depth_noise_sigma >= 0.0) {
            return fail("noise levels must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.false_match_rate) {
            return fail(format!("false_match_rate must lie in [0, 1), got {}", self.false_match_rate));
        }
        let finite = |m: &RigidMotion| m.rotvec.iter().chain(m.translation.iter()).all(|v| v.is_finite());
        if !finite(&self.camera_motion) {
            return fail("camera motion must be finite".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.extent.is_nan() || o.extent <= 0.0 {
                return fail(format!("object {i}: extent must be positive"));
            }
            if !finite(&o.motion) || !o.center.iter().all(|v| v.is_finite()) {
                return fail(format!("object {i}: center and motion must be finite"));
            }
        }
        Ok(())
    }

    pub fn total_points(&self) -> usize {
        self.n_static + self.objects.iter().map(|o| o.n_points).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GroundTruth {
    /// Maps matched-frame points onto reference-frame points.
    pub pose: SE3,
    pub dynamic_ids: BTreeSet<u64>,
    /// Member ids per object, in configuration order.
    pub objects: Vec<Vec<u64>>,
    pub false_match_ids: BTreeSet<u64>,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noise-free pair of observations of one point.
struct Observation {
    x_re: Vec3,
    x_ma: Vec3,
}

fn sample_static(cfg: &SceneConfig, cam: &SE3, cam_inv: &SE3, rng: &mut ChaCha8Rng) -> Option<Observation> {
    let k = &cfg.intrinsics;
    for _ in 0..MAX_RETRIES {
        let px = Pixel::new(rng.random_range(0.0..k.width as f64), rng.random_range(0.0..k.height as f64));
        let z = if cfg.z_max > cfg.z_min { rng.random_range(cfg.z_min..cfg.z_max) } else { cfg.z_min };
        let x_ma = cam_inv.transform_point(&k.backproject(&px, z));
        if !k.sees(&x_ma) {
            continue;
        }
        // re-derived so that the ground-truth residual is exactly zero
        let x_re = cam.transform_point(&x_ma);
        if k.sees(&x_re) {
            return Some(Observation { x_re, x_ma });
        }
    }
    None
}

fn sample_object(cfg: &SceneConfig, obj: &ObjectSpec, cam_inv: &SE3, rng: &mut ChaCha8Rng) -> Option<Observation> {
    let k = &cfg.intrinsics;
    let half = obj.extent / 2.0;
    for _ in 0..MAX_RETRIES {
        let offset =
            Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half));
        let x_re = obj.center + offset;
        let motion = obj.motion.to_se3();
        let moved = obj.center + motion.rotation * offset + motion.translation;
        let x_ma = cam_inv.transform_point(&moved);
        if k.sees(&x_re) && k.sees(&x_ma) {
            return Some(Observation { x_re, x_ma });
        }
    }
    None
}

fn observe(
    k: &Intrinsics,
    p: &Vec3,
    pixel_noise: Option<&Normal<f64>>,
    depth_noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> (Pixel, Vec3) {
    let px = k.project(p);
    if pixel_noise.is_none() && depth_noise.is_none() {
        return (px, *p);
    }
    let mut noisy = px;
    if let Some(n) = pixel_noise {
        noisy.u = (px.u + n.sample(rng)).clamp(0.0, k.width as f64 - 1e-6);
        noisy.v = (px.v + n.sample(rng)).clamp(0.0, k.height as f64 - 1e-6);
    }
    let depth = match depth_noise {
        Some(n) => (p.z * (1.0 + n.sample(rng))).max(1e-6),
        None => p.z,
    };
    (noisy, k.backproject(&noisy, depth))
}

/// Generates the correspondences of one frame pair. Static points come
/// first, then each object's points; ids follow emission order.
pub fn generate(cfg: &SceneConfig) -> Result<(Vec<Correspondence>, GroundTruth)> {
    cfg.validate()?;
    let mut geo = stream(cfg.seed, GEOMETRY_STREAM);
    let mut noise = stream(cfg.seed, NOISE_STREAM);
    let cam = cfg.camera_motion.to_se3();
    let cam_inv = cam.inverse();
    let k = &cfg.intrinsics;
    let pixel_noise =
        (cfg.pixel_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.pixel_noise_sigma).expect("finite sigma"));
    let depth_noise =
        (cfg.depth_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.depth_noise_sigma).expect("finite sigma"));

    let mut matches = Vec::with_capacity(cfg.total_points());
    let mut truth = GroundTruth { pose: cam, ..GroundTruth::default() };
    let mut emit = |obs: Observation, matches: &mut Vec<Correspondence>| {
        let id = matches.len() as u64;
        let (px_re, x_re) = observe(k, &obs.x_re, pixel_noise.as_ref(), depth_noise.as_ref(), &mut noise);
        let (px_ma, x_ma) = observe(k, &obs.x_ma, pixel_noise.as_ref(), depth_noise.as_ref(), &mut noise);
        matches.push(Correspondence { id, px_re, px_ma, x_re, x_ma });
        id
    };

    for _ in 0..cfg.n_static {
        let obs = sample_static(cfg, &cam, &cam_inv, &mut geo)
            .ok_or_else(|| Error::Config("no static point visible in both frames".into()))?;
        emit(obs, &mut matches);
    }
    for (i, obj) in cfg.objects.iter().enumerate() {
        let mut members = Vec::with_capacity(obj.n_points);
        for _ in 0..obj.n_points {
            let obs = sample_object(cfg, obj, &cam_inv, &mut geo)
                .ok_or_else(|| Error::Config(format!("object {i} is not visible in both frames")))?;
            let id = emit(obs, &mut matches);
            truth.dynamic_ids.insert(id);
            members.push(id);
        }
        truth.objects.push(members);
    }

    if cfg.false_match_rate > 0.0 {
        let (corrupted, ids) = inject_false_matches(&matches, cfg.false_match_rate, cfg.seed);
        matches = corrupted;
        truth.false_match_ids = ids;
    }
    Ok((matches, truth))
}

/// Corrupts `round(rate · n)` correspondences by exchanging their
/// matched-frame observations along a random cycle. A single victim borrows
/// the matched side of another correspondence instead.
pub fn inject_false_matches(matches: &[Correspondence], rate: f64, seed: u64) -> (Vec<Correspondence>, BTreeSet<u64>) {
    let mut out = matches.to_vec();
    let n = matches.len();
    let k = ((rate * n as f64).round() as usize).min(n);
    if k == 0 || n < 2 {
        return (out, BTreeSet::new());
    }
    let mut rng = stream(seed, FALSE_MATCH_STREAM);
    let mut victims = rand::seq::index::sample(&mut rng, n, k).into_vec();
    victims.shuffle(&mut rng);

    if k == 1 {
        let v = victims[0];
        let mut donor = rng.random_range(0..n - 1);
        if donor >= v {
            donor += 1;
        }
        out[v].px_ma = matches[donor].px_ma;
        out[v].x_ma = matches[donor].x_ma;
    } else {
        for (i, &v) in victims.iter().enumerate() {
            let donor = victims[(i + 1) % k];
            out[v].px_ma = matches[donor].px_ma;
            out[v].x_ma = matches[donor].x_ma;
        }
    }
    let ids = victims.iter().map(|&v| matches[v].id).collect();
    (out, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::residual;

    fn noiseless(cfg: SceneConfig) -> SceneConfig {
        SceneConfig { pixel_noise_sigma: 0.0, depth_noise_sigma: 0.0, ..cfg }
    }

    #[test]
    fn identity_motion_without_objects() {
        let cfg = noiseless(SceneConfig {
            camera_motion: RigidMotion::default(),
            objects: vec![],
            n_static: 500,
            ..SceneConfig::default()
        });
        let (matches, truth) = generate(&cfg).unwrap();
        assert_eq!(matches.len(), 500);
        assert!(truth.dynamic_ids.is_empty());
        assert!(matches.iter().all(|c| c.x_re == c.x_ma && c.px_re == c.px_ma));
    }

    #[test]
    fn forward_translation_gives_zero_residuals() {
        let cfg = noiseless(SceneConfig {
            camera_motion: RigidMotion::translation(Vec3::new(0.0, 0.0, 0.5)),
            objects: vec![],
            ..SceneConfig::default()
        });
        let (matches, truth) = generate(&cfg).unwrap();
        for c in &matches {
            assert_eq!(residual(c, &truth.pose, 1.0).unwrap().raw, Vec3::zeros());
        }
    }

    #[test]
    fn object_displacement_shows_in_residual() {
        let cfg = noiseless(SceneConfig::default());
        let (matches, truth) = generate(&cfg).unwrap();
        assert_eq!(matches.len(), 2300);
        assert_eq!(truth.dynamic_ids.len(), 300);
        for c in &matches {
            let raw = residual(c, &truth.pose, 1.0).unwrap().raw;
            if truth.dynamic_ids.contains(&c.id) {
                // reference minus moved point: the object went +0.3 m in x
                assert!((raw - Vec3::new(-0.3, 0.0, 0.0)).norm() < 1e-9, "{raw:?}");
                assert!((raw.norm() - 0.3).abs() < 1e-9);
            } else {
                assert_eq!(raw, Vec3::zeros());
            }
        }
    }

    #[test]
    fn rotating_object_residual_matches_formula() {
        let motion = RigidMotion { rotvec: Vec3::new(0.0, 0.3, 0.0), translation: Vec3::new(0.0, 0.0, -0.2) };
        let center = Vec3::new(0.0, 0.0, 4.0);
        let cfg = noiseless(SceneConfig {
            objects: vec![ObjectSpec { n_points: 50, center, extent: 0.5, motion }],
            n_static: 10,
            ..SceneConfig::default()
        });
        let (matches, truth) = generate(&cfg).unwrap();
        for c in matches.iter().filter(|c| truth.dynamic_ids.contains(&c.id)) {
            let m = motion.to_se3();
            let moved = center + m.rotation * (c.x_re - center) + m.translation;
            let raw = residual(c, &truth.pose, 1.0).unwrap().raw;
            assert!((raw - (c.x_re - moved)).norm() < 1e-9);
        }
    }

    #[test]
    fn pixels_back_project_onto_points() {
        let cfg = noiseless(SceneConfig::default());
        let (matches, _) = generate(&cfg).unwrap();
        let k = cfg.intrinsics;
        for c in &matches {
            assert!((k.backproject(&c.px_re, c.x_re.z) - c.x_re).norm() < 1e-9);
            assert!((k.backproject(&c.px_ma, c.x_ma.z) - c.x_ma).norm() < 1e-9);
            assert!(k.contains(&c.px_re) && k.contains(&c.px_ma));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig { false_match_rate: 0.05, ..SceneConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SceneConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn noisy_points_stay_in_image() {
        let (matches, _) = generate(&SceneConfig { pixel_noise_sigma: 3.0, ..SceneConfig::default() }).unwrap();
        let k = Intrinsics::default();
        assert!(matches.iter().all(|c| k.contains(&c.px_ma) && c.x_ma.z > 0.0));
    }

    #[test]
    fn invisible_object_is_a_config_error() {
        let cfg = SceneConfig {
            objects: vec![ObjectSpec {
                n_points: 5,
                center: Vec3::new(0.0, 0.0, -3.0),
                extent: 0.5,
                motion: RigidMotion::default(),
            }],
            ..SceneConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn false_match_examples() {
        let (matches, _) =
            generate(&noiseless(SceneConfig { n_static: 1000, objects: vec![], ..SceneConfig::default() })).unwrap();

        let (same, ids) = inject_false_matches(&matches, 0.0, 7);
        assert_eq!(same, matches);
        assert!(ids.is_empty());

        let (corrupted, ids) = inject_false_matches(&matches, 0.1, 7);
        assert_eq!(ids.len(), 100);
        for (a, b) in matches.iter().zip(&corrupted) {
            assert_eq!(a.x_re, b.x_re);
            assert_eq!(ids.contains(&a.id), a.x_ma != b.x_ma);
        }
        assert_eq!(inject_false_matches(&matches, 0.1, 7), (corrupted, ids));

        let (_, one) = inject_false_matches(&matches, 0.001, 3);
        assert_eq!(one.len(), 1);
    }
}
