//! `key = value` files for the pipeline and for simulator scenes.
//!
//! Missing keys keep their defaults; unknown keys are errors. `m_over_M`
//! defaults to one grid cell, `1 / (gx · gy)`.
//!
//! Scene objects use indexed keys (`object.0.n_points = 300`). Without any
//! `object.*` key and without `object_count` the default object is kept;
//! fields an object does not list are taken from the default object.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::grid::GridConfig;
use crate::io::{read_text, vec3_value, write_atomic, KeyValues, FORMAT_HEADER};
use crate::pipeline::PipelineConfig;
use crate::pose_eval::RansacParams;
use crate::simulator::{Intrinsics, ObjectSpec, RigidMotion, SceneConfig};
use crate::stats::StatModel;

const PIPELINE_KEYS: &[&str] = &[
    "image_width",
    "image_height",
    "gx",
    "gy",
    "bins_per_axis",
    "e_int_z",
    "e_int_x",
    "alpha",
    "p_min",
    "n_min",
    "max_quad_depth",
    "k_sigma",
    "static_margin",
    "t",
    "beta",
    "m_over_M",
    "ransac_iterations",
    "ransac_inlier_threshold",
    "ransac_seed",
    "min_cluster_features",
];

pub fn parse_pipeline_config(text: &str, path: &Path) -> Result<PipelineConfig> {
    let kv = KeyValues::parse(text, path)?;
    kv.reject_unknown(|k| PIPELINE_KEYS.contains(&k))?;
    let d = PipelineConfig::default();
    let grid = GridConfig {
        image_width: kv.get("image_width", d.grid.image_width)?,
        image_height: kv.get("image_height", d.grid.image_height)?,
        gx: kv.get("gx", d.grid.gx)?,
        gy: kv.get("gy", d.grid.gy)?,
        bins_per_axis: kv.get("bins_per_axis", d.grid.bins_per_axis)?,
        e_int_z: kv.get("e_int_z", d.grid.e_int_z)?,
        e_int_x: kv.get("e_int_x", d.grid.e_int_x)?,
        alpha: kv.get("alpha", d.grid.alpha)?,
        p_min: kv.get("p_min", d.grid.p_min)?,
        n_min: kv.get("n_min", d.grid.n_min)?,
        max_quad_depth: kv.get("max_quad_depth", d.grid.max_quad_depth)?,
        k_sigma: kv.get("k_sigma", d.grid.k_sigma)?,
        static_margin: kv.get("static_margin", d.grid.static_margin)?,
    };
    grid.validate().map_err(|e| kv.invalid("", e.to_string()))?;
    let cell_prior = StatModel::for_grid(grid.gx, grid.gy);
    let model = StatModel {
        t: kv.get("t", d.model.t)?,
        beta: kv.get("beta", d.model.beta)?,
        m_over_m: kv.get("m_over_M", cell_prior.m_over_m)?,
    };
    let cfg = PipelineConfig {
        grid,
        model,
        ransac: RansacParams {
            iterations: kv.get("ransac_iterations", d.ransac.iterations)?,
            inlier_threshold: kv.get("ransac_inlier_threshold", d.ransac.inlier_threshold)?,
            seed: kv.get("ransac_seed", d.ransac.seed)?,
        },
        min_cluster_features: kv.get("min_cluster_features", d.min_cluster_features)?,
    };
    cfg.validate().map_err(|e| kv.invalid("", e.to_string()))?;
    Ok(cfg)
}

pub fn format_pipeline_config(cfg: &PipelineConfig) -> String {
    let g = &cfg.grid;
    let mut out = format!("{FORMAT_HEADER}\n# pipeline configuration\n");
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("image_width", g.image_width.to_string());
    put("image_height", g.image_height.to_string());
    put("gx", g.gx.to_string());
    put("gy", g.gy.to_string());
    put("bins_per_axis", g.bins_per_axis.to_string());
    put("e_int_z", g.e_int_z.to_string());
    put("e_int_x", g.e_int_x.to_string());
    put("alpha", g.alpha.to_string());
    put("p_min", g.p_min.to_string());
    put("n_min", g.n_min.to_string());
    put("max_quad_depth", g.max_quad_depth.to_string());
    put("k_sigma", g.k_sigma.to_string());
    put("static_margin", g.static_margin.to_string());
    put("t", cfg.model.t.to_string());
    put("beta", cfg.model.beta.to_string());
    put("m_over_M", cfg.model.m_over_m.to_string());
    put("ransac_iterations", cfg.ransac.iterations.to_string());
    put("ransac_inlier_threshold", cfg.ransac.inlier_threshold.to_string());
    put("ransac_seed", cfg.ransac.seed.to_string());
    put("min_cluster_features", cfg.min_cluster_features.to_string());
    out
}

pub fn read_config(path: &Path) -> Result<PipelineConfig> {
    parse_pipeline_config(&read_text(path)?, path)
}

pub fn write_config(path: &Path, cfg: &PipelineConfig) -> Result<()> {
    write_atomic(path, &format_pipeline_config(cfg))
}

const SCENE_KEYS: &[&str] = &[
    "fx",
    "fy",
    "cx",
    "cy",
    "width",
    "height",
    "n_static",
    "z_min",
    "z_max",
    "camera_motion.translation",
    "camera_motion.rotation",
    "pixel_noise_sigma",
    "depth_noise_sigma",
    "false_match_rate",
    "seed",
    "object_count",
];

const OBJECT_FIELDS: &[&str] = &["n_points", "center", "extent", "motion.translation", "motion.rotation"];

/// Index of an `object.N.field` key with a known field.
fn object_index(key: &str) -> Option<usize> {
    let rest = key.strip_prefix("object.")?;
    let (index, field) = rest.split_once('.')?;
    if !OBJECT_FIELDS.contains(&field) || (index.len() > 1 && index.starts_with('0')) {
        return None;
    }
    index.parse().ok()
}

pub fn parse_scene_config(text: &str, path: &Path) -> Result<SceneConfig> {
    let kv = KeyValues::parse(text, path)?;
    kv.reject_unknown(|k| SCENE_KEYS.contains(&k) || object_index(k).is_some())?;
    let d = SceneConfig::default();
    let listed = kv.keys().filter_map(object_index).max().map(|i| i + 1);
    let count = match (kv.contains("object_count"), listed) {
        (true, _) => kv.get::<usize>("object_count", 0)?,
        (false, Some(n)) => n,
        (false, None) => d.objects.len(),
    };
    if let Some(n) = listed {
        if n > count {
            return Err(kv.invalid("object_count", format!("object {} listed but object_count is {count}", n - 1)));
        }
    }
    let template = d.objects[0].clone();
    let objects = (0..count)
        .map(|i| {
            let key = |f: &str| format!("object.{i}.{f}");
            Ok(ObjectSpec {
                n_points: kv.get(&key("n_points"), template.n_points)?,
                center: kv.get_vec3(&key("center"), template.center)?,
                extent: kv.get(&key("extent"), template.extent)?,
                motion: RigidMotion {
                    rotvec: kv.get_vec3(&key("motion.rotation"), template.motion.rotvec)?,
                    translation: kv.get_vec3(&key("motion.translation"), template.motion.translation)?,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = SceneConfig {
        intrinsics: Intrinsics {
            fx: kv.get("fx", d.intrinsics.fx)?,
            fy: kv.get("fy", d.intrinsics.fy)?,
            cx: kv.get("cx", d.intrinsics.cx)?,
            cy: kv.get("cy", d.intrinsics.cy)?,
            width: kv.get("width", d.intrinsics.width)?,
            height: kv.get("height", d.intrinsics.height)?,
        },
        n_static: kv.get("n_static", d.n_static)?,
        z_min: kv.get("z_min", d.z_min)?,
        z_max: kv.get("z_max", d.z_max)?,
        camera_motion: RigidMotion {
            rotvec: kv.get_vec3("camera_motion.rotation", d.camera_motion.rotvec)?,
            translation: kv.get_vec3("camera_motion.translation", d.camera_motion.translation)?,
        },
        objects,
        pixel_noise_sigma: kv.get("pixel_noise_sigma", d.pixel_noise_sigma)?,
        depth_noise_sigma: kv.get("depth_noise_sigma", d.depth_noise_sigma)?,
        false_match_rate: kv.get("false_match_rate", d.false_match_rate)?,
        seed: kv.get("seed", d.seed)?,
    };
    cfg.validate().map_err(|e| kv.invalid("", e.to_string()))?;
    Ok(cfg)
}

pub fn format_scene_config(cfg: &SceneConfig) -> String {
    let k = &cfg.intrinsics;
    let mut out = format!("{FORMAT_HEADER}\n# scene configuration\n");
    let mut put = |key: &str, v: String| {
        let _ = writeln!(out, "{key} = {v}");
    };
    put("fx", k.fx.to_string());
    put("fy", k.fy.to_string());
    put("cx", k.cx.to_string());
    put("cy", k.cy.to_string());
    put("width", k.width.to_string());
    put("height", k.height.to_string());
    put("n_static", cfg.n_static.to_string());
    put("z_min", cfg.z_min.to_string());
    put("z_max", cfg.z_max.to_string());
    put("camera_motion.translation", vec3_value(&cfg.camera_motion.translation));
    put("camera_motion.rotation", vec3_value(&cfg.camera_motion.rotvec));
    put("pixel_noise_sigma", cfg.pixel_noise_sigma.to_string());
    put("depth_noise_sigma", cfg.depth_noise_sigma.to_string());
    put("false_match_rate", cfg.false_match_rate.to_string());
    put("seed", cfg.seed.to_string());
    put("object_count", cfg.objects.len().to_string());
    for (i, o) in cfg.objects.iter().enumerate() {
        put(&format!("object.{i}.n_points"), o.n_points.to_string());
        put(&format!("object.{i}.center"), vec3_value(&o.center));
        put(&format!("object.{i}.extent"), o.extent.to_string());
        put(&format!("object.{i}.motion.translation"), vec3_value(&o.motion.translation));
        put(&format!("object.{i}.motion.rotation"), vec3_value(&o.motion.rotvec));
    }
    out
}

pub fn read_scene(path: &Path) -> Result<SceneConfig> {
    parse_scene_config(&read_text(path)?, path)
}

pub fn write_scene(path: &Path, cfg: &SceneConfig) -> Result<()> {
    write_atomic(path, &format_scene_config(cfg))
}
