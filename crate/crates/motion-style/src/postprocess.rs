//! Skeleton distortion removal: rescale every parent-child bone to a
//! reference length while keeping the synthesized bone directions.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::motion_io::MotionClip;

/// Mean over frames of each joint's distance to its parent (0 for the root).
pub fn measure_limb_lengths(clip: &MotionClip) -> Vec<f64> {
    let (f, n, _) = clip.frames.dim();
    let mut lengths = vec![0.0; n];
    for (j, parent) in clip.skeleton.parents.iter().enumerate() {
        let Some(p) = parent else { continue };
        let mut acc = 0.0;
        for t in 0..f {
            let mut d2 = 0.0;
            for c in 0..3 {
                let d = clip.frames[[t, j, c]] - clip.frames[[t, *p, c]];
                d2 += d * d;
            }
            acc += d2.sqrt();
        }
        lengths[j] = acc / f as f64;
    }
    lengths
}

/// Force every bone to its reference length.
///
/// Per frame, joints are visited parents-first: the root keeps its position
/// and each child is placed at the corrected parent plus the reference
/// length along the ORIGINAL (uncorrected) parent-to-child direction. A
/// degenerate zero-length input bone reuses the previous frame's direction;
/// on the first frame that is an error.
pub fn enforce_limb_lengths(clip: &MotionClip, ref_lengths: &[f64]) -> Result<MotionClip> {
    let (f, n, _) = clip.frames.dim();
    if ref_lengths.len() != n {
        return Err(Error::Shape(format!(
            "{} reference lengths for {n} joints",
            ref_lengths.len()
        )));
    }
    for (j, parent) in clip.skeleton.parents.iter().enumerate() {
        if parent.is_some() && !(ref_lengths[j] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "non-positive reference length for joint {j}"
            )));
        }
    }
    let order = clip.skeleton.topological_order();
    let mut out = Array3::<f64>::zeros((f, n, 3));
    let mut last_dir: Vec<Option<[f64; 3]>> = vec![None; n];
    for t in 0..f {
        for &j in &order {
            match clip.skeleton.parents[j] {
                None => {
                    for c in 0..3 {
                        out[[t, j, c]] = clip.frames[[t, j, c]];
                    }
                }
                Some(p) => {
                    let mut dir = [0.0f64; 3];
                    let mut norm2 = 0.0;
                    for c in 0..3 {
                        dir[c] = clip.frames[[t, j, c]] - clip.frames[[t, p, c]];
                        norm2 += dir[c] * dir[c];
                    }
                    let norm = norm2.sqrt();
                    let unit = if norm > 0.0 {
                        let u = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
                        last_dir[j] = Some(u);
                        u
                    } else {
                        last_dir[j].ok_or_else(|| {
                            Error::Numerical(format!(
                                "zero-length bone at joint {j} on frame 0: direction undefined"
                            ))
                        })?
                    };
                    for c in 0..3 {
                        out[[t, j, c]] = out[[t, p, c]] + ref_lengths[j] * unit[c];
                    }
                }
            }
        }
    }
    MotionClip::new(clip.skeleton.clone(), out, clip.fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::Skeleton;
    use ndarray::Array3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn chain_clip(positions: &[[f64; 3]], frames: usize) -> MotionClip {
        let n = positions.len();
        let names = (0..n).map(|i| format!("j{i}")).collect();
        let parents: Vec<Option<usize>> =
            (0..n).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        let lengths: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    let d: f64 = (0..3)
                        .map(|c| (positions[i][c] - positions[i - 1][c]).powi(2))
                        .sum();
                    d.sqrt()
                }
            })
            .collect();
        let sk = Skeleton::new(names, parents, lengths).unwrap();
        let data = Array3::from_shape_fn((frames, n, 3), |(_, j, c)| positions[j][c]);
        MotionClip::new(sk, data, 30.0).unwrap()
    }

    #[test]
    fn measure_matches_construction() {
        let clip = chain_clip(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 3.0, 0.0]], 4);
        let lengths = measure_limb_lengths(&clip);
        assert_eq!(lengths, vec![0.0, 2.0, 3.0]);
    }

    #[test]
    fn measure_single_frame() {
        let clip = chain_clip(&[[0.0, 0.0, 0.0], [0.0, 1.5, 0.0]], 1);
        assert_eq!(measure_limb_lengths(&clip), vec![0.0, 1.5]);
    }

    #[test]
    fn measure_averages_jitter() {
        let mut clip = chain_clip(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 4);
        let eps = 1e-3;
        for t in 0..4 {
            clip.frames[[t, 1, 0]] = 1.0 + if t % 2 == 0 { eps } else { -eps };
        }
        let lengths = measure_limb_lengths(&clip);
        assert!((lengths[1] - 1.0).abs() <= eps);
    }

    #[test]
    fn already_valid_clip_is_fixed_point() {
        let clip = chain_clip(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 2.0, 0.0]], 3);
        let refs = clip.skeleton.ref_bone_lengths.clone();
        let out = enforce_limb_lengths(&clip, &refs).unwrap();
        for (a, b) in out.frames.iter().zip(clip.frames.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_rescale() {
        let clip = chain_clip(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 3.0, 0.0]], 1);
        let out = enforce_limb_lengths(&clip, &[0.0, 1.0, 1.0]).unwrap();
        let expected = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        for j in 0..3 {
            for c in 0..3 {
                assert!((out.frames[[0, j, c]] - expected[j][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_distortion_fixed_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut clip = chain_clip(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 1.0, 0.0]],
            5,
        );
        for v in clip.frames.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let refs = vec![0.0, 1.0, 1.0, 1.0];
        let out = enforce_limb_lengths(&clip, &refs).unwrap();
        // Lengths exact, root trajectory untouched, directions preserved.
        for t in 0..5 {
            for c in 0..3 {
                assert_eq!(out.frames[[t, 0, c]], clip.frames[[t, 0, c]]);
            }
            for j in 1..4 {
                let p = j - 1;
                let mut d2 = 0.0;
                let mut dot = 0.0;
                let mut in_norm2 = 0.0;
                for c in 0..3 {
                    let d_out = out.frames[[t, j, c]] - out.frames[[t, p, c]];
                    let d_in = clip.frames[[t, j, c]] - clip.frames[[t, p, c]];
                    d2 += d_out * d_out;
                    dot += d_out * d_in;
                    in_norm2 += d_in * d_in;
                }
                assert!((d2.sqrt() - refs[j]).abs() < 1e-9 * refs[j]);
                // Same direction: cosine of 1.
                assert!((dot / (d2.sqrt() * in_norm2.sqrt()) - 1.0).abs() < 1e-9);
            }
        }
        // Idempotence.
        let twice = enforce_limb_lengths(&out, &refs).unwrap();
        for (a, b) in twice.frames.iter().zip(out.frames.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_bone_uses_previous_direction() {
        let mut clip = chain_clip(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 2);
        // Collapse the bone on frame 1.
        for c in 0..3 {
            clip.frames[[1, 1, c]] = clip.frames[[1, 0, c]];
        }
        let out = enforce_limb_lengths(&clip, &[0.0, 2.0]).unwrap();
        assert!((out.frames[[1, 1, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_bone_on_first_frame_is_error() {
        let sk = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![0.0, 1.0],
        )
        .unwrap();
        let data = Array3::zeros((1, 2, 3));
        let clip2 = MotionClip::new(sk, data, 30.0).unwrap();
        assert!(enforce_limb_lengths(&clip2, &[0.0, 1.0]).is_err());
    }
}
