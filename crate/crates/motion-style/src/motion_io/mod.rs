//! Skeletal motion clips: domain types, normalization, resampling and the
//! canonical on-disk formats.

mod bvh;
mod format;

pub use bvh::{bvh_to_clip, forward_kinematics, parse_bvh, BvhChannel, BvhMotion};
pub use format::{
    export_csv, load_clip, load_clip_str, quantize, save_clip, save_clip_string,
};

use ndarray::{Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Joint topology shared by every frame of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    /// Parent index per joint; `None` marks the single root.
    pub parents: Vec<Option<usize>>,
    /// Reference bone length per joint in scene units; 0 for the root.
    pub ref_bone_lengths: Vec<f64>,
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<Option<usize>>,
        ref_bone_lengths: Vec<f64>,
    ) -> Result<Self> {
        let n = joint_names.len();
        if parents.len() != n || ref_bone_lengths.len() != n {
            return Err(Error::Structure(
                "skeleton field lengths disagree".into(),
            ));
        }
        if n == 0 {
            return Err(Error::Structure("skeleton has no joints".into()));
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::Structure(format!(
                "skeleton must have exactly one root, found {roots}"
            )));
        }
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                if *p >= n {
                    return Err(Error::Structure(format!(
                        "joint {i} has out-of-range parent {p}"
                    )));
                }
            }
        }
        // Cycle check: walking up from any joint must terminate at the root.
        for i in 0..n {
            let mut seen = 0usize;
            let mut cur = i;
            while let Some(p) = parents[cur] {
                cur = p;
                seen += 1;
                if seen > n {
                    return Err(Error::Structure("skeleton parents contain a cycle".into()));
                }
            }
        }
        for (i, (&len, p)) in ref_bone_lengths.iter().zip(parents.iter()).enumerate() {
            if p.is_some() && !(len > 0.0) {
                return Err(Error::Structure(format!(
                    "non-root joint {i} has non-positive bone length {len}"
                )));
            }
            if !len.is_finite() {
                return Err(Error::NonFinite(format!("bone length of joint {i}")));
            }
        }
        Ok(Skeleton {
            joint_names,
            parents,
            ref_bone_lengths,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(|p| p.is_none()).unwrap()
    }

    pub fn joint_index(&self, name: &str) -> Result<usize> {
        self.joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown joint name: {name}")))
    }

    /// Joint indices ordered parents-before-children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.num_joints();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            for i in 0..n {
                if placed[i] {
                    continue;
                }
                if self.parents[i].map_or(true, |p| placed[p]) {
                    placed[i] = true;
                    order.push(i);
                }
            }
        }
        order
    }
}

/// A positional motion clip: `F` frames of `N` joint positions.
#[derive(Debug, Clone)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    /// F x N x 3 joint positions in scene units.
    pub frames: Array3<f64>,
    pub fps: f64,
}

impl MotionClip {
    pub fn new(skeleton: Skeleton, frames: Array3<f64>, fps: f64) -> Result<Self> {
        let (f, n, d) = frames.dim();
        if f == 0 {
            return Err(Error::Structure("clip has no frames".into()));
        }
        if n != skeleton.num_joints() || d != 3 {
            return Err(Error::Shape(format!(
                "frames are {f}x{n}x{d} but skeleton has {} joints",
                skeleton.num_joints()
            )));
        }
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid fps {fps}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clip frames".into()));
        }
        Ok(MotionClip {
            skeleton,
            frames,
            fps,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn num_joints(&self) -> usize {
        self.frames.dim().1
    }

    /// The F x 3N animation matrix: frames as rows, joints stacked as
    /// x,y,z triples in joint order.
    pub fn matrix(&self) -> Array2<f64> {
        let (f, n, _) = self.frames.dim();
        self.frames
            .to_shape((f, 3 * n))
            .expect("contiguous frames")
            .to_owned()
    }

    /// Rebuild a clip from an F x 3N matrix.
    pub fn from_matrix(skeleton: Skeleton, matrix: &Array2<f64>, fps: f64) -> Result<Self> {
        let (f, w) = matrix.dim();
        let n = skeleton.num_joints();
        if w != 3 * n {
            return Err(Error::Shape(format!(
                "matrix has {w} columns, expected {}",
                3 * n
            )));
        }
        let frames = matrix
            .to_shape((f, n, 3))
            .map_err(|e| Error::Shape(e.to_string()))?
            .to_owned();
        MotionClip::new(skeleton, frames, fps)
    }

    /// Keep every `(fps/target_fps)`-th frame starting at frame 0.
    pub fn subsample(&self, target_fps: f64) -> Result<MotionClip> {
        if !(target_fps > 0.0) {
            return Err(Error::InvalidArgument("target fps must be positive".into()));
        }
        if target_fps > self.fps {
            return Err(Error::InvalidArgument(format!(
                "target fps {target_fps} exceeds clip fps {}",
                self.fps
            )));
        }
        let ratio = self.fps / target_fps;
        let stride = ratio.round();
        if (ratio - stride).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "fps {} is not an integer multiple of {target_fps}; \
                 resampling by interpolation is not supported",
                self.fps
            )));
        }
        let stride = stride as usize;
        let frames = self.frames.slice(ndarray::s![..;stride, .., ..]).to_owned();
        MotionClip::new(self.skeleton.clone(), frames, target_fps)
    }

    /// Restrict the clip to the named joints, reparenting each kept joint to
    /// its nearest kept ancestor. Reference bone lengths are re-measured as
    /// the mean frame distance to the new parent.
    pub fn select_joints(&self, names: &[String]) -> Result<MotionClip> {
        let mut keep = Vec::with_capacity(names.len());
        for name in names {
            keep.push(self.skeleton.joint_index(name)?);
        }
        let mut new_index = vec![None; self.skeleton.num_joints()];
        for (new_i, &old_i) in keep.iter().enumerate() {
            if new_index[old_i].is_some() {
                return Err(Error::InvalidArgument(format!(
                    "joint {} selected twice",
                    names[new_i]
                )));
            }
            new_index[old_i] = Some(new_i);
        }
        let mut parents = Vec::with_capacity(keep.len());
        for &old_i in &keep {
            let mut anc = self.skeleton.parents[old_i];
            let parent = loop {
                match anc {
                    None => break None,
                    Some(a) => match new_index[a] {
                        Some(ni) => break Some(ni),
                        None => anc = self.skeleton.parents[a],
                    },
                }
            };
            parents.push(parent);
        }
        let f = self.num_frames();
        let mut frames = Array3::zeros((f, keep.len(), 3));
        for (new_i, &old_i) in keep.iter().enumerate() {
            frames
                .slice_mut(ndarray::s![.., new_i, ..])
                .assign(&self.frames.slice(ndarray::s![.., old_i, ..]));
        }
        let mut ref_lengths = vec![0.0; keep.len()];
        for (j, &p) in parents.iter().enumerate() {
            if let Some(p) = p {
                let mut acc = 0.0;
                for t in 0..f {
                    let mut d2 = 0.0;
                    for c in 0..3 {
                        let d = frames[[t, j, c]] - frames[[t, p, c]];
                        d2 += d * d;
                    }
                    acc += d2.sqrt();
                }
                ref_lengths[j] = acc / f as f64;
            }
        }
        let skeleton = Skeleton::new(names.to_vec(), parents, ref_lengths)?;
        MotionClip::new(skeleton, frames, self.fps)
    }
}

/// Per-column z-normalization statistics of an animation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean_pose: Array1<f64>,
    pub std: Array1<f64>,
}

/// Columns whose raw population standard deviation falls below this are
/// treated as constant: the column is centered and its std recorded as 1.
pub const STD_CLAMP_EPS: f64 = 1e-8;

/// Z-normalize the clip's animation matrix: zero column means, unit
/// population standard deviation (degenerate columns clamped).
pub fn normalize(clip: &MotionClip) -> Result<(Array2<f64>, NormStats)> {
    let x = clip.matrix();
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "normalization needs at least 2 frames".into(),
        ));
    }
    normalize_matrix(&x)
}

/// [`normalize`] on a bare F x 3N matrix.
pub fn normalize_matrix(x: &Array2<f64>) -> Result<(Array2<f64>, NormStats)> {
    let f = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).unwrap();
    let centered = x - &mean;
    let mut std = centered.map_axis(Axis(0), |col| {
        (col.iter().map(|v| v * v).sum::<f64>() / f).sqrt()
    });
    std.map_inplace(|s| {
        if *s < STD_CLAMP_EPS {
            *s = 1.0;
        }
    });
    let normalized = &centered / &std;
    Ok((
        normalized,
        NormStats {
            mean_pose: mean,
            std,
        },
    ))
}

/// Invert [`normalize`]: entrywise `x * std + mean_pose`.
pub fn denormalize(x: &Array2<f64>, stats: &NormStats) -> Result<Array2<f64>> {
    if x.ncols() != stats.mean_pose.len() || x.ncols() != stats.std.len() {
        return Err(Error::Shape(format!(
            "matrix has {} columns but stats cover {}",
            x.ncols(),
            stats.mean_pose.len()
        )));
    }
    Ok(x * &stats.std + &stats.mean_pose)
}
