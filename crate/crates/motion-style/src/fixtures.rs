//! Deterministic synthetic clips: a 20-joint humanoid walk generator and a
//! small sine-gait clip. These stand in for captured data in tests and demos.

use ndarray::Array3;

use crate::error::Result;
use crate::motion_io::{MotionClip, Skeleton};

/// Parameters of the synthetic walk generator.
#[derive(Debug, Clone)]
pub struct WalkParams {
    pub frames: usize,
    pub fps: f64,
    /// Gait cycles per second.
    pub gait_hz: f64,
    /// Forward speed in scene units per second.
    pub speed: f64,
    /// Leg swing amplitudes in radians.
    pub left_amp: f64,
    pub right_amp: f64,
    pub arm_amp: f64,
    /// Phase offset of the whole gait in radians.
    pub phase: f64,
}

impl WalkParams {
    pub fn normal(frames: usize) -> Self {
        WalkParams {
            frames,
            fps: 30.0,
            gait_hz: 1.0,
            speed: 1.2,
            left_amp: 0.6,
            right_amp: 0.6,
            arm_amp: 0.35,
            phase: 0.0,
        }
    }

    /// A limping gait: the left leg barely swings and the cadence differs.
    pub fn one_leg_hurt(frames: usize) -> Self {
        WalkParams {
            frames,
            fps: 30.0,
            gait_hz: 0.85,
            speed: 0.8,
            left_amp: 0.2,
            right_amp: 0.65,
            arm_amp: 0.3,
            phase: 0.7,
        }
    }
}

const JOINT_NAMES: [&str; 20] = [
    "Hips",
    "Spine",
    "Chest",
    "Neck",
    "Head",
    "HeadTop",
    "LeftShoulder",
    "LeftElbow",
    "LeftWrist",
    "RightShoulder",
    "RightElbow",
    "RightWrist",
    "LeftHip",
    "LeftKnee",
    "LeftAnkle",
    "LeftFoot",
    "RightHip",
    "RightKnee",
    "RightAnkle",
    "RightFoot",
];

const PARENTS: [i64; 20] = [
    -1, 0, 1, 2, 3, 4, 2, 6, 7, 2, 9, 10, 0, 12, 13, 14, 0, 16, 17, 18,
];

fn rot_x(angle: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

// Local offsets at rest; bone lengths come from these.
const SPINE: [f64; 3] = [0.0, 0.2, 0.0];
const CHEST: [f64; 3] = [0.0, 0.2, 0.0];
const NECK: [f64; 3] = [0.0, 0.15, 0.0];
const HEAD: [f64; 3] = [0.0, 0.1, 0.0];
const HEAD_TOP: [f64; 3] = [0.0, 0.1, 0.0];
const SHOULDER: [f64; 3] = [0.2, 0.05, 0.0];
const UPPER_ARM: [f64; 3] = [0.0, -0.25, 0.0];
const FOREARM: [f64; 3] = [0.0, -0.25, 0.0];
const HIP: [f64; 3] = [0.1, -0.05, 0.0];
const THIGH: [f64; 3] = [0.0, -0.4, 0.0];
const SHIN: [f64; 3] = [0.0, -0.4, 0.0];
const FOOT: [f64; 3] = [0.0, -0.05, 0.15];

/// Build the 20-joint walk skeleton.
pub fn walk_skeleton() -> Skeleton {
    let offsets: [[f64; 3]; 20] = [
        [0.0; 3],
        SPINE,
        CHEST,
        NECK,
        HEAD,
        HEAD_TOP,
        SHOULDER,
        UPPER_ARM,
        FOREARM,
        [-SHOULDER[0], SHOULDER[1], SHOULDER[2]],
        UPPER_ARM,
        FOREARM,
        HIP,
        THIGH,
        SHIN,
        FOOT,
        [-HIP[0], HIP[1], HIP[2]],
        THIGH,
        SHIN,
        FOOT,
    ];
    let names = JOINT_NAMES.iter().map(|s| s.to_string()).collect();
    let parents = PARENTS
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();
    let lengths = offsets
        .iter()
        .enumerate()
        .map(|(i, o)| if i == 0 { 0.0 } else { norm(*o) })
        .collect();
    Skeleton::new(names, parents, lengths).expect("static walk skeleton is valid")
}

/// Generate a deterministic walking clip with sagittal leg and arm swings.
/// Every bone keeps its rest length exactly (pure rotations).
pub fn walk_clip(params: &WalkParams) -> Result<MotionClip> {
    let skeleton = walk_skeleton();
    let omega = 2.0 * std::f64::consts::PI * params.gait_hz;
    let mut frames = Array3::<f64>::zeros((params.frames, 20, 3));
    for t in 0..params.frames {
        let time = t as f64 / params.fps;
        let ph = omega * time + params.phase;

        let root = [
            0.02 * (ph * 0.5).sin(),
            1.0 + 0.02 * (2.0 * ph).sin(),
            params.speed * time,
        ];
        let spine = add(root, SPINE);
        let chest = add(spine, CHEST);
        let neck = add(chest, NECK);
        let head = add(neck, HEAD);
        let head_top = add(head, HEAD_TOP);

        // Arms swing opposite to their leg.
        let arm_l = params.arm_amp * (ph + std::f64::consts::PI).sin();
        let arm_r = params.arm_amp * ph.sin();
        let l_shoulder = add(chest, SHOULDER);
        let l_elbow = add(l_shoulder, rot_x(arm_l, UPPER_ARM));
        let l_wrist = add(l_elbow, rot_x(1.4 * arm_l, FOREARM));
        let r_shoulder = add(chest, [-SHOULDER[0], SHOULDER[1], SHOULDER[2]]);
        let r_elbow = add(r_shoulder, rot_x(arm_r, UPPER_ARM));
        let r_wrist = add(r_elbow, rot_x(1.4 * arm_r, FOREARM));

        // Legs: hip swing plus knee flexion during the swing phase.
        let leg = |amp: f64, side_phase: f64| {
            let swing = amp * (ph + side_phase).sin();
            let knee = 0.6 * amp * (1.0 + (ph + side_phase).cos()) / 2.0;
            (swing, knee)
        };
        let (swing_l, knee_l) = leg(params.left_amp, 0.0);
        let (swing_r, knee_r) = leg(params.right_amp, std::f64::consts::PI);

        let l_hip = add(root, HIP);
        let l_knee = add(l_hip, rot_x(swing_l, THIGH));
        let l_ankle = add(l_knee, rot_x(swing_l - knee_l, SHIN));
        let l_foot = add(l_ankle, rot_x(swing_l - knee_l, FOOT));
        let r_hip = add(root, [-HIP[0], HIP[1], HIP[2]]);
        let r_knee = add(r_hip, rot_x(swing_r, THIGH));
        let r_ankle = add(r_knee, rot_x(swing_r - knee_r, SHIN));
        let r_foot = add(r_ankle, rot_x(swing_r - knee_r, FOOT));

        let positions = [
            root, spine, chest, neck, head, head_top, l_shoulder, l_elbow, l_wrist, r_shoulder,
            r_elbow, r_wrist, l_hip, l_knee, l_ankle, l_foot, r_hip, r_knee, r_ankle, r_foot,
        ];
        for (j, p) in positions.iter().enumerate() {
            for c in 0..3 {
                frames[[t, j, c]] = p[c];
            }
        }
    }
    MotionClip::new(skeleton, frames, params.fps)
}

/// A two-joint clip whose "LeftFoot" y coordinate is exactly
/// `sin(2 pi t / period)`.
pub fn sine_foot_clip(frames: usize, period: f64, fps: f64) -> Result<MotionClip> {
    let skeleton = Skeleton::new(
        vec!["Hips".into(), "LeftFoot".into()],
        vec![None, Some(0)],
        vec![0.0, 1.0],
    )?;
    let mut data = Array3::<f64>::zeros((frames, 2, 3));
    for t in 0..frames {
        data[[t, 0, 1]] = 1.0;
        data[[t, 1, 0]] = 1.0;
        data[[t, 1, 1]] = (2.0 * std::f64::consts::PI * t as f64 / period).sin();
    }
    MotionClip::new(skeleton, data, fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::measure_limb_lengths;

    #[test]
    fn walk_clip_has_exact_bone_lengths() {
        let clip = walk_clip(&WalkParams::normal(40)).unwrap();
        assert_eq!(clip.num_joints(), 20);
        let measured = measure_limb_lengths(&clip);
        for (m, r) in measured.iter().zip(clip.skeleton.ref_bone_lengths.iter()) {
            assert!((m - r).abs() < 1e-9, "measured {m}, reference {r}");
        }
    }

    #[test]
    fn gaits_differ() {
        let a = walk_clip(&WalkParams::normal(30)).unwrap();
        let b = walk_clip(&WalkParams::one_leg_hurt(30)).unwrap();
        let diff: f64 = a
            .frames
            .iter()
            .zip(b.frames.iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1.0);
    }

    #[test]
    fn sine_foot_signal_is_sinusoid() {
        use crate::dtw::{foot_signal, Axis3};
        let clip = sine_foot_clip(30, 10.0, 30.0).unwrap();
        let s = foot_signal(&clip, "LeftFoot", Axis3::Y).unwrap();
        for (t, v) in s.iter().enumerate() {
            let expected = (2.0 * std::f64::consts::PI * t as f64 / 10.0).sin();
            assert!((v - expected).abs() < 1e-12);
        }
    }
}
