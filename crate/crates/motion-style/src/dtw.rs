//! Time synchronization of two clips: dynamic time warping of a scalar
//! foot signal, then applying the warp path to whole clips by frame
//! duplication.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::motion_io::MotionClip;

/// Coordinate axis of a joint signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis3 {
    X,
    Y,
    Z,
}

impl Axis3 {
    pub fn index(self) -> usize {
        match self {
            Axis3::X => 0,
            Axis3::Y => 1,
            Axis3::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis3 {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis3::X),
            "y" | "Y" => Ok(Axis3::Y),
            "z" | "Z" => Ok(Axis3::Z),
            other => Err(Error::InvalidArgument(format!("invalid axis {other:?}"))),
        }
    }
}

/// Monotonic, continuous alignment between two series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    /// Ordered (i, j) index pairs into series A and B.
    pub pairs: Vec<(usize, usize)>,
}

impl WarpPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Check boundary, monotonicity and the step set {(1,0),(0,1),(1,1)}.
    pub fn validate(&self, len_a: usize, len_b: usize) -> Result<()> {
        if self.pairs.first() != Some(&(0, 0)) {
            return Err(Error::Structure("warp path must start at (0, 0)".into()));
        }
        if self.pairs.last() != Some(&(len_a - 1, len_b - 1)) {
            return Err(Error::Structure("warp path must end at the last pair".into()));
        }
        for w in self.pairs.windows(2) {
            let di = w[1].0 as i64 - w[0].0 as i64;
            let dj = w[1].1 as i64 - w[0].1 as i64;
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return Err(Error::Structure(format!(
                    "invalid warp step from {:?} to {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// One coordinate of one joint over all frames.
pub fn foot_signal(clip: &MotionClip, joint_name: &str, axis: Axis3) -> Result<Vec<f64>> {
    let j = clip.skeleton.joint_index(joint_name)?;
    let c = axis.index();
    Ok((0..clip.num_frames())
        .map(|t| clip.frames[[t, j, c]])
        .collect())
}

/// Classical DTW with squared-difference local cost.
///
/// Returns the minimum-cost path and its total cost. Backtracking breaks
/// ties preferring diagonal, then vertical (advance in `a`), then horizontal.
/// `band`, when given, restricts |i - j| to at most max(band, |len difference|).
pub fn dtw_align(a: &[f64], b: &[f64], band: Option<usize>) -> Result<(WarpPath, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("dtw input series is empty".into()));
    }
    let (n, m) = (a.len(), b.len());
    let window = band.map(|w| w.max(n.abs_diff(m)));
    let in_band = |i: usize, j: usize| match window {
        None => true,
        Some(w) => i.abs_diff(j) <= w,
    };
    let cost = |i: usize, j: usize| {
        let d = a[i] - b[j];
        d * d
    };

    let mut acc = vec![vec![f64::INFINITY; m]; n];
    acc[0][0] = cost(0, 0);
    for i in 0..n {
        for j in 0..m {
            if (i, j) == (0, 0) || !in_band(i, j) {
                continue;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(acc[i - 1][j - 1]);
            }
            if i > 0 {
                best = best.min(acc[i - 1][j]);
            }
            if j > 0 {
                best = best.min(acc[i][j - 1]);
            }
            acc[i][j] = cost(i, j) + best;
        }
    }
    let total = acc[n - 1][m - 1];
    if !total.is_finite() {
        return Err(Error::Numerical("dtw band leaves no feasible path".into()));
    }

    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 {
            acc[i - 1][j - 1]
        } else {
            f64::INFINITY
        };
        let vert = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
        let horiz = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
        let best = diag.min(vert).min(horiz);
        if diag == best {
            i -= 1;
            j -= 1;
        } else if vert == best {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((WarpPath { pairs }, total))
}

/// Apply a warp path to both clips: output frame `t` of the first clip is
/// input frame `path[t].0`, and likewise for the second. Frames are
/// duplicated, never interpolated, so both outputs share the path length.
pub fn warp_pair(
    clip_a: &MotionClip,
    clip_b: &MotionClip,
    path: &WarpPath,
) -> Result<(MotionClip, MotionClip)> {
    let take = |clip: &MotionClip, pick: &dyn Fn(&(usize, usize)) -> usize| -> Result<MotionClip> {
        let (f, n, _) = clip.frames.dim();
        let mut out = Array3::zeros((path.len(), n, 3));
        for (t, pair) in path.pairs.iter().enumerate() {
            let src = pick(pair);
            if src >= f {
                return Err(Error::InvalidArgument(format!(
                    "warp path index {src} out of range for clip with {f} frames"
                )));
            }
            out.slice_mut(ndarray::s![t, .., ..])
                .assign(&clip.frames.slice(ndarray::s![src, .., ..]));
        }
        MotionClip::new(clip.skeleton.clone(), out, clip.fps)
    };
    Ok((take(clip_a, &|p| p.0)?, take(clip_b, &|p| p.1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::Skeleton;
    use proptest::prelude::*;

    /// Exhaustive enumeration of all valid warp paths; the DP oracle.
    pub(crate) fn brute_force_cost(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let d = a[i] - b[j];
            let here = d * d;
            if i == 0 && j == 0 {
                return here;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(rec(a, b, i - 1, j - 1));
            }
            if i > 0 {
                best = best.min(rec(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(rec(a, b, i, j - 1));
            }
            here + best
        }
        rec(a, b, a.len() - 1, b.len() - 1)
    }

    fn one_joint_clip(signal: &[f64]) -> MotionClip {
        let sk = Skeleton::new(vec!["foot".into()], vec![None], vec![0.0]).unwrap();
        let mut frames = Array3::zeros((signal.len(), 1, 3));
        for (t, &v) in signal.iter().enumerate() {
            frames[[t, 0, 1]] = v;
        }
        MotionClip::new(sk, frames, 30.0).unwrap()
    }

    #[test]
    fn self_alignment_is_diagonal_zero_cost() {
        let s = [0.0, 1.0, 0.5, -2.0];
        let (path, cost) = dtw_align(&s, &s, None).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn enumerated_three_by_four_case() {
        // Exhaustive enumeration over all 3x4 paths gives cost 0 with the
        // unique zero-cost path duplicating a[0].
        let a = [0.0, 1.0, 2.0];
        let b = [0.0, 0.0, 1.0, 2.0];
        let (path, cost) = dtw_align(&a, &b, None).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(brute_force_cost(&a, &b), 0.0);
        assert_eq!(path.pairs, vec![(0, 0), (0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn cost_is_symmetric() {
        let a = [0.3, -1.0, 2.0, 0.7];
        let b = [1.0, 0.0, 0.5];
        let (pa, ca) = dtw_align(&a, &b, None).unwrap();
        let (pb, cb) = dtw_align(&b, &a, None).unwrap();
        assert!((ca - cb).abs() < 1e-12);
        pa.validate(a.len(), b.len()).unwrap();
        pb.validate(b.len(), a.len()).unwrap();
    }

    #[test]
    fn empty_series_rejected() {
        assert!(dtw_align(&[], &[1.0], None).is_err());
    }

    #[test]
    fn foot_signal_extracts_coordinate() {
        let clip = one_joint_clip(&[0.0, 1.0, 2.0]);
        let s = foot_signal(&clip, "foot", Axis3::Y).unwrap();
        assert_eq!(s, vec![0.0, 1.0, 2.0]);
        assert_eq!(s.len(), clip.num_frames());
        assert!(foot_signal(&clip, "nope", Axis3::Y).is_err());
    }

    #[test]
    fn constant_clip_gives_constant_signal() {
        let clip = one_joint_clip(&[0.7; 5]);
        let s = foot_signal(&clip, "foot", Axis3::Y).unwrap();
        assert!(s.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn warp_pair_duplicates_frames() {
        let a = one_joint_clip(&[0.0, 1.0, 2.0]);
        let b = one_joint_clip(&[0.0, 0.0, 1.0, 2.0]);
        let sa = foot_signal(&a, "foot", Axis3::Y).unwrap();
        let sb = foot_signal(&b, "foot", Axis3::Y).unwrap();
        let (path, _) = dtw_align(&sa, &sb, None).unwrap();
        let (wa, wb) = warp_pair(&a, &b, &path).unwrap();
        assert_eq!(wa.num_frames(), 4);
        assert_eq!(wb.num_frames(), 4);
        // Frame 0 of A is duplicated once.
        assert_eq!(wa.frames[[0, 0, 1]], 0.0);
        assert_eq!(wa.frames[[1, 0, 1]], 0.0);
        assert_eq!(wa.frames[[2, 0, 1]], 1.0);
        // Warped signals align exactly in this case.
        let swa = foot_signal(&wa, "foot", Axis3::Y).unwrap();
        let swb = foot_signal(&wb, "foot", Axis3::Y).unwrap();
        assert_eq!(swa, swb);
    }

    #[test]
    fn identity_path_keeps_clips() {
        let a = one_joint_clip(&[1.0, 2.0, 3.0]);
        let path = WarpPath {
            pairs: vec![(0, 0), (1, 1), (2, 2)],
        };
        let (wa, wb) = warp_pair(&a, &a, &path).unwrap();
        assert_eq!(wa.frames, a.frames);
        assert_eq!(wb.frames, a.frames);
    }

    #[test]
    fn band_still_reaches_corner() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..7).map(|i| i as f64 * 1.5).collect();
        let (path, _) = dtw_align(&a, &b, Some(2)).unwrap();
        path.validate(a.len(), b.len()).unwrap();
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force(
            a in proptest::collection::vec(-3.0f64..3.0, 1..=6),
            b in proptest::collection::vec(-3.0f64..3.0, 1..=6),
        ) {
            let (path, cost) = dtw_align(&a, &b, None).unwrap();
            path.validate(a.len(), b.len()).unwrap();
            let brute = brute_force_cost(&a, &b);
            prop_assert!((cost - brute).abs() <= 1e-12 * brute.max(1.0));
        }

        #[test]
        fn warped_clips_share_frame_count(
            a in proptest::collection::vec(-3.0f64..3.0, 2..=8),
            b in proptest::collection::vec(-3.0f64..3.0, 2..=8),
        ) {
            let ca = one_joint_clip(&a);
            let cb = one_joint_clip(&b);
            let (path, cost) = dtw_align(&a, &b, None).unwrap();
            let (wa, wb) = warp_pair(&ca, &cb, &path).unwrap();
            prop_assert_eq!(wa.num_frames(), wb.num_frames());
            // Aligned signals never cost more than the originals.
            let swa = foot_signal(&wa, "foot", Axis3::Y).unwrap();
            let swb = foot_signal(&wb, "foot", Axis3::Y).unwrap();
            let (_, warped_cost) = dtw_align(&swa, &swb, None).unwrap();
            prop_assert!(warped_cost <= cost + 1e-12);
        }
    }
}
