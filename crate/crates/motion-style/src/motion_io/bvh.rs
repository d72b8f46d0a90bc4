//! Minimal BVH reader: single HIERARCHY, ROOT/JOINT/End Site nodes with
//! OFFSET and CHANNELS (3 or 6), MOTION with Frame Time and channel rows.
//! End Sites are parsed and dropped; scale channels and multiple roots are
//! rejected.

use ndarray::{Array2, Array3};

use super::{MotionClip, Skeleton};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvhChannel {
    XPosition,
    YPosition,
    ZPosition,
    XRotation,
    YRotation,
    ZRotation,
}

impl BvhChannel {
    fn parse(token: &str, line: usize) -> Result<Self> {
        match token {
            "Xposition" => Ok(BvhChannel::XPosition),
            "Yposition" => Ok(BvhChannel::YPosition),
            "Zposition" => Ok(BvhChannel::ZPosition),
            "Xrotation" => Ok(BvhChannel::XRotation),
            "Yrotation" => Ok(BvhChannel::YRotation),
            "Zrotation" => Ok(BvhChannel::ZRotation),
            other => Err(Error::parse(line, format!("unsupported channel {other}"))),
        }
    }
}

/// Parsed BVH document: skeleton topology plus raw per-frame channel values.
#[derive(Debug, Clone)]
pub struct BvhMotion {
    pub skeleton: Skeleton,
    /// Local OFFSET per joint.
    pub offsets: Vec<[f64; 3]>,
    /// Declared channels per joint, in file order.
    pub channels: Vec<Vec<BvhChannel>>,
    /// One row of channel values per frame (all joints concatenated).
    pub frames: Vec<Vec<f64>>,
    pub fps: f64,
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, Vec<&'a str>)>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
            peeked: None,
            last_line: 0,
        }
    }

    /// Next non-empty line as (1-based line number, tokens).
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        for (i, line) in self.iter.by_ref() {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                self.last_line = i + 1;
                return Some((i + 1, tokens));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.next_tokens()
            .ok_or_else(|| Error::parse(self.last_line, format!("unexpected end of file, expected {what}")))
    }

    fn push_back(&mut self, item: (usize, Vec<&'a str>)) {
        self.peeked = Some(item);
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("expected a number, got {token:?}")))
}

struct JointAccum {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<[f64; 3]>,
    channels: Vec<Vec<BvhChannel>>,
}

/// Parse a BVH document into skeleton, per-frame channel values and fps.
pub fn parse_bvh(text: &str) -> Result<BvhMotion> {
    let mut lines = Lines::new(text);

    let (l, t) = lines.expect("HIERARCHY")?;
    if t != ["HIERARCHY"] {
        return Err(Error::parse(l, "expected HIERARCHY"));
    }
    let (l, t) = lines.expect("ROOT")?;
    if t.len() != 2 || t[0] != "ROOT" {
        return Err(Error::parse(l, "expected ROOT <name>"));
    }
    let mut acc = JointAccum {
        names: Vec::new(),
        parents: Vec::new(),
        offsets: Vec::new(),
        channels: Vec::new(),
    };
    parse_joint(&mut lines, &mut acc, t[1].to_string(), None)?;

    let (l, t) = lines.expect("MOTION")?;
    if t == ["ROOT"] || (t.len() == 2 && t[0] == "ROOT") {
        return Err(Error::parse(l, "multiple ROOT hierarchies are not supported"));
    }
    if t != ["MOTION"] {
        return Err(Error::parse(l, "expected MOTION"));
    }
    let (l, t) = lines.expect("Frames:")?;
    if t.len() != 2 || t[0] != "Frames:" {
        return Err(Error::parse(l, "expected Frames: <count>"));
    }
    let frame_count: usize = t[1]
        .parse()
        .map_err(|_| Error::parse(l, "invalid frame count"))?;
    let (l, t) = lines.expect("Frame Time:")?;
    if t.len() != 3 || t[0] != "Frame" || t[1] != "Time:" {
        return Err(Error::parse(l, "expected Frame Time: <seconds>"));
    }
    let frame_time = parse_f64(t[2], l)?;
    if !(frame_time > 0.0) {
        return Err(Error::parse(l, "frame time must be positive"));
    }
    let fps = snap_fps(1.0 / frame_time);

    let total_channels: usize = acc.channels.iter().map(|c| c.len()).sum();
    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let (l, t) = lines
            .next_tokens()
            .ok_or_else(|| Error::Structure(format!(
                "motion section ended after {} of {frame_count} frames",
                frames.len()
            )))?;
        if t.len() != total_channels {
            return Err(Error::Structure(format!(
                "line {l}: frame has {} channel values, hierarchy declares {total_channels}",
                t.len()
            )));
        }
        let mut row = Vec::with_capacity(total_channels);
        for tok in t {
            row.push(parse_f64(tok, l)?);
        }
        frames.push(row);
    }

    let ref_lengths: Vec<f64> = acc
        .offsets
        .iter()
        .zip(acc.parents.iter())
        .map(|(o, p)| {
            if p.is_none() {
                0.0
            } else {
                (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt()
            }
        })
        .collect();
    let skeleton = Skeleton::new(acc.names, acc.parents, ref_lengths)?;

    Ok(BvhMotion {
        skeleton,
        offsets: acc.offsets,
        channels: acc.channels,
        frames,
        fps,
    })
}

/// Frame times are usually printed truncated (e.g. 0.008333 for 120 fps);
/// snap to the nearest integer rate when within 0.5%.
fn snap_fps(raw: f64) -> f64 {
    let rounded = raw.round();
    if rounded >= 1.0 && (raw - rounded).abs() <= 0.005 * rounded {
        rounded
    } else {
        raw
    }
}

fn parse_joint(
    lines: &mut Lines,
    acc: &mut JointAccum,
    name: String,
    parent: Option<usize>,
) -> Result<()> {
    let (l, t) = lines.expect("{")?;
    if t != ["{"] {
        return Err(Error::parse(l, "expected {"));
    }
    let (l, t) = lines.expect("OFFSET")?;
    if t.len() != 4 || t[0] != "OFFSET" {
        return Err(Error::parse(l, "expected OFFSET <x> <y> <z>"));
    }
    let offset = [
        parse_f64(t[1], l)?,
        parse_f64(t[2], l)?,
        parse_f64(t[3], l)?,
    ];
    let (l, t) = lines.expect("CHANNELS")?;
    if t.len() < 2 || t[0] != "CHANNELS" {
        return Err(Error::parse(l, "expected CHANNELS"));
    }
    let declared: usize = t[1]
        .parse()
        .map_err(|_| Error::parse(l, "invalid channel count"))?;
    if declared != t.len() - 2 {
        return Err(Error::parse(
            l,
            format!("CHANNELS declares {declared} but lists {}", t.len() - 2),
        ));
    }
    if declared != 3 && declared != 6 {
        return Err(Error::parse(l, "only 3 or 6 channels per joint are supported"));
    }
    let mut channels = Vec::with_capacity(declared);
    for tok in &t[2..] {
        channels.push(BvhChannel::parse(tok, l)?);
    }

    let index = acc.names.len();
    acc.names.push(name);
    acc.parents.push(parent);
    acc.offsets.push(offset);
    acc.channels.push(channels);

    loop {
        let (l, t) = lines.expect("JOINT, End Site or }")?;
        match t.as_slice() {
            ["}"] => return Ok(()),
            ["JOINT", name] => parse_joint(lines, acc, name.to_string(), Some(index))?,
            ["End", "Site"] => parse_end_site(lines)?,
            _ => {
                lines.push_back((l, t));
                return Err(Error::parse(l, "expected JOINT, End Site or }"));
            }
        }
    }
}

fn parse_end_site(lines: &mut Lines) -> Result<()> {
    let (l, t) = lines.expect("{")?;
    if t != ["{"] {
        return Err(Error::parse(l, "expected {"));
    }
    let (l, t) = lines.expect("OFFSET")?;
    if t.len() != 4 || t[0] != "OFFSET" {
        return Err(Error::parse(l, "expected OFFSET in End Site"));
    }
    let (l, t) = lines.expect("}")?;
    if t != ["}"] {
        return Err(Error::parse(l, "expected } after End Site offset"));
    }
    Ok(())
}

fn rot_x(deg: f64) -> [[f64; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> [[f64; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(deg: f64) -> [[f64; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn mat_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i] += a[i][k] * v[k];
        }
    }
    out
}

/// Global joint positions for one frame. Rotations are applied in the
/// declared channel order, in degrees, right-handed, column-vector
/// convention (the first declared rotation is outermost).
pub fn forward_kinematics(motion: &BvhMotion, frame: usize) -> Result<Array2<f64>> {
    let row = motion
        .frames
        .get(frame)
        .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} out of range")))?;
    let n = motion.skeleton.num_joints();
    let mut positions = Array2::<f64>::zeros((n, 3));
    let mut rotations: Vec<[[f64; 3]; 3]> = Vec::with_capacity(n);

    let mut cursor = 0usize;
    for j in 0..n {
        let mut translation = [0.0f64; 3];
        let mut local_rot = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for &ch in &motion.channels[j] {
            let value = row[cursor];
            cursor += 1;
            match ch {
                BvhChannel::XPosition => translation[0] += value,
                BvhChannel::YPosition => translation[1] += value,
                BvhChannel::ZPosition => translation[2] += value,
                BvhChannel::XRotation => local_rot = mat_mul(&local_rot, &rot_x(value)),
                BvhChannel::YRotation => local_rot = mat_mul(&local_rot, &rot_y(value)),
                BvhChannel::ZRotation => local_rot = mat_mul(&local_rot, &rot_z(value)),
            }
        }
        let local_offset = [
            motion.offsets[j][0] + translation[0],
            motion.offsets[j][1] + translation[1],
            motion.offsets[j][2] + translation[2],
        ];
        match motion.skeleton.parents[j] {
            None => {
                for c in 0..3 {
                    positions[[j, c]] = local_offset[c];
                }
                rotations.push(local_rot);
            }
            Some(p) => {
                let rotated = mat_vec(&rotations[p], &local_offset);
                for c in 0..3 {
                    positions[[j, c]] = positions[[p, c]] + rotated[c];
                }
                rotations.push(mat_mul(&rotations[p], &local_rot));
            }
        }
    }
    Ok(positions)
}

/// Convert a parsed BVH document into a positional clip by running forward
/// kinematics on every frame.
pub fn bvh_to_clip(motion: &BvhMotion) -> Result<MotionClip> {
    let f = motion.frames.len();
    let n = motion.skeleton.num_joints();
    if f == 0 {
        return Err(Error::Structure("BVH has no frames".into()));
    }
    let mut frames = Array3::<f64>::zeros((f, n, 3));
    for t in 0..f {
        let pos = forward_kinematics(motion, t)?;
        frames.slice_mut(ndarray::s![t, .., ..]).assign(&pos);
    }
    MotionClip::new(motion.skeleton.clone(), frames, motion.fps)
}
