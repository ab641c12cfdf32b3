//! Text file formats.
//!
//! Every file starts with the version line `# gridmotion-format v1`. Other
//! lines beginning with `#` are comments. Decimals always use `.` and are
//! written in shortest round-trip form, so a write → read → write cycle is
//! byte-identical.
//!
//! * matches: CSV with header `id,u_re,v_re,u_ma,v_ma,xre_x,xre_y,xre_z,xma_x,xma_y,xma_z`
//! * labels: CSV with header `id,label,cluster_id,bin_z,bin_x`, label one of
//!   `S`, `D`, `U`; cluster fields are empty unless the label is `D`
//! * trajectories: `timestamp tx ty tz qx qy qz qw` per line
//! * configurations: `key = value` per line

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Matrix3;

use crate::cluster::{Label, LabelEntry, LabelMap};
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, MotionBin, Pixel, Vec3, SE3};
use crate::pose_eval::Trajectory;
use crate::simulator::GroundTruth;

pub const FORMAT_HEADER: &str = "# gridmotion-format v1";
pub const MATCHES_HEADER: &str = "id,u_re,v_re,u_ma,v_ma,xre_x,xre_y,xre_z,xma_x,xma_y,xma_z";
pub const LABELS_HEADER: &str = "id,label,cluster_id,bin_z,bin_x";

pub(crate) fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, reason: reason.into() }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

/// Non-comment lines with their 1-based line numbers. Rejects files that
/// declare a different format version.
fn content_lines<'a>(text: &'a str, path: &Path) -> Result<Vec<(usize, &'a str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(version) = comment.strip_prefix("gridmotion-format ") {
                if version.trim() != "v1" {
                    return Err(parse_error(path, i + 1, format!("unsupported format version {version:?}")));
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn parse_field<T: FromStr>(field: &str, name: &str, path: &Path, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| parse_error(path, line, format!("invalid {name} {field:?}")))
}

pub fn parse_matches(text: &str, path: &Path) -> Result<Vec<Correspondence>> {
    let lines = content_lines(text, path)?;
    let Some(&(header_line, header)) = lines.first() else {
        return Ok(Vec::new());
    };
    if header != MATCHES_HEADER {
        return Err(parse_error(path, header_line, format!("expected header {MATCHES_HEADER:?}")));
    }
    lines[1..]
        .iter()
        .map(|&(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(parse_error(path, n, format!("expected 11 fields, found {}", fields.len())));
            }
            let names = ["id", "u_re", "v_re", "u_ma", "v_ma", "xre_x", "xre_y", "xre_z", "xma_x", "xma_y", "xma_z"];
            let id = parse_field::<u64>(fields[0], names[0], path, n)?;
            let mut v = [0.0f64; 10];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = parse_field::<f64>(fields[k + 1], names[k + 1], path, n)?;
                if !slot.is_finite() {
                    return Err(parse_error(path, n, format!("{} is not finite", names[k + 1])));
                }
            }
            Ok(Correspondence {
                id,
                px_re: Pixel::new(v[0], v[1]),
                px_ma: Pixel::new(v[2], v[3]),
                x_re: Vec3::new(v[4], v[5], v[6]),
                x_ma: Vec3::new(v[7], v[8], v[9]),
            })
        })
        .collect()
}

pub fn format_matches(matches: &[Correspondence]) -> String {
    let mut out = format!("{FORMAT_HEADER}\n{MATCHES_HEADER}\n");
    for c in matches {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.id,
            c.px_re.u,
            c.px_re.v,
            c.px_ma.u,
            c.px_ma.v,
            c.x_re.x,
            c.x_re.y,
            c.x_re.z,
            c.x_ma.x,
            c.x_ma.y,
            c.x_ma.z
        );
    }
    out
}

pub fn read_matches(path: &Path) -> Result<Vec<Correspondence>> {
    parse_matches(&read_text(path)?, path)
}

pub fn write_matches(path: &Path, matches: &[Correspondence]) -> Result<()> {
    write_atomic(path, &format_matches(matches))
}

pub fn parse_labels(text: &str, path: &Path) -> Result<LabelMap> {
    let lines = content_lines(text, path)?;
    let Some(&(header_line, header)) = lines.first() else {
        return Ok(LabelMap::default());
    };
    if header != LABELS_HEADER {
        return Err(parse_error(path, header_line, format!("expected header {LABELS_HEADER:?}")));
    }
    let entries = lines[1..]
        .iter()
        .map(|&(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_error(path, n, format!("expected 5 fields, found {}", fields.len())));
            }
            let id = parse_field::<u64>(fields[0], "id", path, n)?;
            let blank = fields[2..].iter().all(|f| f.is_empty());
            let label = match (fields[1], blank) {
                ("S", true) => Label::Static,
                ("U", true) => Label::Unknown,
                ("D", false) => Label::Dynamic {
                    cluster: parse_field(fields[2], "cluster_id", path, n)?,
                    bin: MotionBin::new(
                        parse_field(fields[3], "bin_z", path, n)?,
                        parse_field(fields[4], "bin_x", path, n)?,
                    ),
                },
                ("S" | "U", false) => {
                    return Err(parse_error(path, n, "cluster fields must be empty for S and U"));
                }
                ("D", true) => return Err(parse_error(path, n, "dynamic label without cluster")),
                (other, _) => return Err(parse_error(path, n, format!("unknown label {other:?}"))),
            };
            Ok(LabelEntry { id, label, provenance: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelMap { entries })
}

pub fn format_labels(labels: &LabelMap) -> String {
    let mut out = format!("{FORMAT_HEADER}\n{LABELS_HEADER}\n");
    for e in &labels.entries {
        let _ = match e.label {
            Label::Static => writeln!(out, "{},S,,,", e.id),
            Label::Unknown => writeln!(out, "{},U,,,", e.id),
            Label::Dynamic { cluster, bin } => writeln!(out, "{},D,{},{},{}", e.id, cluster, bin.iz, bin.ix),
        };
    }
    out
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    parse_labels(&read_text(path)?, path)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    write_atomic(path, &format_labels(labels))
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (n, line) in content_lines(text, path)? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(parse_error(path, n, format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 8];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = parse_field(field, "number", path, n)?;
        }
        let q = [v[4], v[5], v[6], v[7]];
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm.is_nan() || norm <= 1e-9 || norm.is_infinite() {
            return Err(parse_error(path, n, "quaternion has zero length"));
        }
        poses.push((v[0], SE3::from_quaternion(q, Vec3::new(v[1], v[2], v[3]))));
    }
    Trajectory::new(poses).map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn format_trajectory(trajectory: &Trajectory) -> String {
    let mut out = format!("{FORMAT_HEADER}\n# timestamp tx ty tz qx qy qz qw\n");
    for (t, pose) in trajectory.poses() {
        let [qx, qy, qz, qw] = pose.quaternion();
        let p = pose.translation;
        let _ = writeln!(out, "{t} {} {} {} {qx} {qy} {qz} {qw}", p.x, p.y, p.z);
    }
    out
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read_text(path)?, path)
}

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    write_atomic(path, &format_trajectory(trajectory))
}

fn id_list(ids: impl IntoIterator<Item = u64>) -> String {
    ids.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// Ground truth of a simulated frame pair as `key = value` lines. The pose
/// is stored as its full rotation matrix (row-major) and translation so it
/// reads back exactly.
pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let mut out = format!("{FORMAT_HEADER}\n# ground truth\n");
    let r = &gt.pose.rotation;
    let rows: Vec<String> = (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)].to_string())).collect();
    let _ = writeln!(out, "pose.rotation = {}", rows.join(" "));
    let _ = writeln!(out, "pose.translation = {}", vec3_value(&gt.pose.translation));
    let _ = writeln!(out, "object_count = {}", gt.objects.len());
    for (i, ids) in gt.objects.iter().enumerate() {
        let _ = writeln!(out, "object.{i}.ids = {}", id_list(ids.iter().copied()));
    }
    let _ = writeln!(out, "false_match_ids = {}", id_list(gt.false_match_ids.iter().copied()));
    out
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<GroundTruth> {
    let kv = KeyValues::parse(text, path)?;
    let count: usize = kv.get("object_count", 0)?;
    kv.reject_unknown(|k| {
        matches!(k, "pose.rotation" | "pose.translation" | "object_count" | "false_match_ids")
            || k.strip_prefix("object.")
                .and_then(|r| r.strip_suffix(".ids"))
                .and_then(|i| i.parse::<usize>().ok())
                .is_some_and(|i| i < count)
    })?;
    let rot: Vec<f64> = kv.get_list("pose.rotation")?;
    if rot.len() != 9 {
        return Err(kv.invalid("pose.rotation", "pose.rotation needs nine numbers"));
    }
    let pose = SE3::new(Matrix3::from_row_slice(&rot), kv.get_vec3("pose.translation", Vec3::zeros())?);
    if !pose.is_valid(1e-6) {
        return Err(kv.invalid("pose.rotation", "pose.rotation is not a rotation"));
    }
    let objects = (0..count).map(|i| kv.get_list::<u64>(&format!("object.{i}.ids"))).collect::<Result<Vec<_>>>()?;
    let dynamic_ids = objects.iter().flatten().copied().collect();
    let false_match_ids = kv.get_list::<u64>("false_match_ids")?.into_iter().collect();
    Ok(GroundTruth { pose, dynamic_ids, objects, false_match_ids })
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&read_text(path)?, path)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_atomic(path, &format_ground_truth(gt))
}

/// Parsed `key = value` file. Keys are unique; the line number of each key
/// is kept for error reporting.
#[derive(Debug)]
pub struct KeyValues<'a> {
    path: &'a Path,
    values: BTreeMap<String, (usize, String)>,
}

impl<'a> KeyValues<'a> {
    pub fn parse(text: &str, path: &'a Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in content_lines(text, path)? {
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_error(path, n, "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_error(path, n, "empty key"));
            }
            if values.insert(key.to_string(), (n, value.trim().to_string())).is_some() {
                return Err(parse_error(path, n, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { path, values })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Fails on the first key outside `known`.
    pub fn reject_unknown(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        for (key, (n, _)) in &self.values {
            if !known(key) {
                return Err(parse_error(self.path, *n, format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            Some((n, value)) => parse_field(value, key, self.path, *n),
            None => Ok(default),
        }
    }

    pub fn get_vec3(&self, key: &str, default: Vec3) -> Result<Vec3> {
        let Some((n, value)) = self.values.get(key) else {
            return Ok(default);
        };
        let parts: Vec<&str> = value.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_error(self.path, *n, format!("{key} needs three numbers")));
        }
        let mut v = [0.0; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = parse_field(part, key, self.path, *n)?;
        }
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    /// Whitespace-separated values; a missing key gives an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some((n, value)) = self.values.get(key) else {
            return Ok(Vec::new());
        };
        value.split_whitespace().map(|v| parse_field(v, key, self.path, *n)).collect()
    }

    /// Wraps a semantic error with the line of `key` (or line 0 if absent).
    pub fn invalid(&self, key: &str, reason: impl Into<String>) -> Error {
        let line = self.values.get(key).map_or(0, |(n, _)| *n);
        parse_error(self.path, line, reason)
    }
}

pub(crate) fn vec3_value(v: &Vec3) -> String {
    format!("{} {} {}", v.x, v.y, v.z)
}
