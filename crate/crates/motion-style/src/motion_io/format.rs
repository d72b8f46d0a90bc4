//! Canonical clip serialization. Numbers are stored as decimals with 9
//! significant digits; save -> load -> save is byte-identical.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MotionClip, Skeleton};
use crate::error::{Error, Result};

pub const CLIP_FORMAT_VERSION: u32 = 1;

/// Round to 9 significant decimal digits (the serialization contract).
pub fn quantize(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    format!("{v:.8e}").parse().unwrap()
}

#[derive(Serialize, Deserialize)]
struct ClipDoc {
    version: u32,
    joint_names: Vec<String>,
    /// Parent index per joint; -1 marks the root.
    parents: Vec<i64>,
    ref_bone_lengths: Vec<f64>,
    fps: f64,
    /// `frames[f][n] = [x, y, z]`.
    frames: Vec<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

fn to_doc(clip: &MotionClip, config_hash: Option<&str>) -> Result<ClipDoc> {
    if clip.frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clip frames".into()));
    }
    let (f, n, _) = clip.frames.dim();
    let mut frames = Vec::with_capacity(f);
    for t in 0..f {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            row.push([
                quantize(clip.frames[[t, j, 0]]),
                quantize(clip.frames[[t, j, 1]]),
                quantize(clip.frames[[t, j, 2]]),
            ]);
        }
        frames.push(row);
    }
    Ok(ClipDoc {
        version: CLIP_FORMAT_VERSION,
        joint_names: clip.skeleton.joint_names.clone(),
        parents: clip
            .skeleton
            .parents
            .iter()
            .map(|p| p.map_or(-1, |v| v as i64))
            .collect(),
        ref_bone_lengths: clip
            .skeleton
            .ref_bone_lengths
            .iter()
            .map(|&v| quantize(v))
            .collect(),
        fps: quantize(clip.fps),
        frames,
        config_hash: config_hash.map(String::from),
    })
}

fn from_doc(doc: ClipDoc) -> Result<MotionClip> {
    if doc.version != CLIP_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported clip format version {} (expected {CLIP_FORMAT_VERSION})",
            doc.version
        )));
    }
    let n = doc.joint_names.len();
    let mut parents = Vec::with_capacity(n);
    for &p in &doc.parents {
        parents.push(match p {
            -1 => None,
            v if v >= 0 && (v as usize) < n => Some(v as usize),
            v => return Err(Error::Schema(format!("invalid parent index {v}"))),
        });
    }
    let skeleton = Skeleton::new(doc.joint_names, parents, doc.ref_bone_lengths)
        .map_err(|e| Error::Schema(e.to_string()))?;
    let f = doc.frames.len();
    if f == 0 {
        return Err(Error::Schema("clip document has no frames".into()));
    }
    let mut frames = ndarray::Array3::zeros((f, n, 3));
    for (t, row) in doc.frames.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Schema(format!(
                "frame {t} has {} joints, skeleton has {n}",
                row.len()
            )));
        }
        for (j, p) in row.iter().enumerate() {
            for c in 0..3 {
                if !p[c].is_finite() {
                    return Err(Error::Schema(format!(
                        "non-finite position at frame {t}, joint {j}"
                    )));
                }
                frames[[t, j, c]] = p[c];
            }
        }
    }
    MotionClip::new(skeleton, frames, doc.fps).map_err(|e| Error::Schema(e.to_string()))
}

/// Serialize a clip to the canonical JSON string.
pub fn save_clip_string(clip: &MotionClip, config_hash: Option<&str>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_doc(clip, config_hash)?)?)
}

pub fn save_clip(path: &Path, clip: &MotionClip, config_hash: Option<&str>) -> Result<()> {
    std::fs::write(path, save_clip_string(clip, config_hash)?)?;
    Ok(())
}

pub fn load_clip_str(text: &str) -> Result<MotionClip> {
    let doc: ClipDoc =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    from_doc(doc)
}

pub fn load_clip(path: &Path) -> Result<MotionClip> {
    let text = std::fs::read_to_string(path)?;
    load_clip_str(&text)
}

/// One row per frame, 3N columns, header `jointname.x/y/z`.
pub fn export_csv(clip: &MotionClip, out: &mut impl Write) -> Result<()> {
    let header: Vec<String> = clip
        .skeleton
        .joint_names
        .iter()
        .flat_map(|name| ["x", "y", "z"].iter().map(move |a| format!("{name}.{a}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let (f, n, _) = clip.frames.dim();
    for t in 0..f {
        let mut cells = Vec::with_capacity(3 * n);
        for j in 0..n {
            for c in 0..3 {
                cells.push(format!("{:.8e}", clip.frames[[t, j, c]]));
            }
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
