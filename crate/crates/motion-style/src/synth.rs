//! Synthesis from decompositions: SVD core components, alpha-blending of
//! cores in a shared basis, and core exchange between basic-motion chains.

use ndarray::{Array2, ArrayView2};

use crate::decompose::{BasicMotionChain, Decomposition};
use crate::error::{Error, Result};
use crate::motion_io::{denormalize, MotionClip, NormStats, Skeleton};
use crate::sparse::svd;

/// A decomposition with its components split as `C = core * basis`,
/// where `core = U * Sigma` and `basis = Vt` from the SVD of C.
#[derive(Debug, Clone)]
pub struct CoreDecomposition {
    /// F x K per-frame weights.
    pub w: Array2<f64>,
    /// K x r core component (U * Sigma).
    pub core: Array2<f64>,
    /// r x 3N right-singular basis (Vt).
    pub basis: Array2<f64>,
}

impl CoreDecomposition {
    pub fn rank(&self) -> usize {
        self.core.ncols()
    }

    /// `W * core * basis`, the reconstruction of `W C`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.w.dot(&self.core.dot(&self.basis))
    }

    pub fn components(&self) -> Array2<f64> {
        self.core.dot(&self.basis)
    }

    /// Keep only the top `r` singular directions.
    pub fn truncate(&self, r: usize) -> CoreDecomposition {
        let r = r.min(self.rank());
        CoreDecomposition {
            w: self.w.clone(),
            core: self.core.slice(ndarray::s![.., ..r]).to_owned(),
            basis: self.basis.slice(ndarray::s![..r, ..]).to_owned(),
        }
    }
}

/// Split a decomposition's components by SVD: `C = (U Sigma) Vt = core * basis`.
pub fn core_decompose(d: &Decomposition) -> Result<CoreDecomposition> {
    let s = svd(d.c.view())?;
    let core = &s.u * &s.singular_values;
    Ok(CoreDecomposition {
        w: d.w.clone(),
        core,
        basis: s.vt,
    })
}

/// Coordinates of foreign components in `target`'s right-singular basis:
/// `C_source * basis^T`.
pub fn project_components(target: &CoreDecomposition, c_source: ArrayView2<f64>) -> Result<Array2<f64>> {
    if c_source.ncols() != target.basis.ncols() {
        return Err(Error::Shape(format!(
            "source components have {} columns, basis has {}",
            c_source.ncols(),
            target.basis.ncols()
        )));
    }
    Ok(c_source.dot(&target.basis.t()))
}

/// [`project_components`] for a whole decomposition.
pub fn project_into_basis(target: &CoreDecomposition, source: &Decomposition) -> Result<Array2<f64>> {
    project_components(target, source.c.view())
}

/// Blend two core components in the recipient's basis:
/// `W1 * ((1 - alpha) K1 + alpha K2') * V1t`.
pub fn blend_cores(
    cd1: &CoreDecomposition,
    cd2_in_basis1: ArrayView2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    if cd2_in_basis1.dim() != cd1.core.dim() {
        return Err(Error::Shape(format!(
            "projected core is {:?}, recipient core is {:?}",
            cd2_in_basis1.dim(),
            cd1.core.dim()
        )));
    }
    let mixed = (1.0 - alpha) * &cd1.core + alpha * &cd2_in_basis1;
    Ok(cd1.w.dot(&mixed.dot(&cd1.basis)))
}

/// Core decompositions of every term of a basic-motion chain.
pub fn core_decompose_chain(chain: &BasicMotionChain) -> Result<Vec<CoreDecomposition>> {
    chain
        .terms
        .iter()
        .map(|t| core_decompose(&t.decomposition))
        .collect()
}

/// Replace term `i` (zero-based) of chain 1's reconstruction with chain 2's
/// core for that term, projected into chain 1's basis:
/// `sum_{j != i} W1_j K1_j V1t_j + W1_i K2'_i V1t_i`.
pub fn exchange_basic(
    chain1: &[CoreDecomposition],
    chain2: &[CoreDecomposition],
    i: usize,
) -> Result<Array2<f64>> {
    if chain1.len() != chain2.len() {
        return Err(Error::Shape(format!(
            "chains have different lengths ({} vs {})",
            chain1.len(),
            chain2.len()
        )));
    }
    if i >= chain1.len() {
        return Err(Error::InvalidArgument(format!(
            "term index {i} out of range for chain of length {}",
            chain1.len()
        )));
    }
    let mut acc: Option<Array2<f64>> = None;
    for (j, term) in chain1.iter().enumerate() {
        let contribution = if j == i {
            let foreign = project_components(term, chain2[i].components().view())?;
            term.w.dot(&foreign.dot(&term.basis))
        } else {
            term.reconstruct()
        };
        acc = Some(match acc {
            None => contribution,
            Some(a) => a + contribution,
        });
    }
    Ok(acc.unwrap())
}

/// Denormalize a synthesized matrix with the recipient's statistics and wrap
/// it with the recipient's skeleton and frame rate.
pub fn synthesize_clip(
    normalized: ArrayView2<f64>,
    stats: &NormStats,
    skeleton: &Skeleton,
    fps: f64,
) -> Result<MotionClip> {
    let raw = denormalize(&normalized.to_owned(), stats)?;
    MotionClip::from_matrix(skeleton.clone(), &raw, fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{fro_norm, SparsityBudget};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn random_decomposition(rng: &mut impl Rng, f: usize, k: usize, cols: usize) -> Decomposition {
        Decomposition {
            w: random_matrix(rng, f, k),
            c: random_matrix(rng, k, cols),
            sparsity: SparsityBudget::Fraction(1.0),
            objective_trace: vec![],
        }
    }

    #[test]
    fn core_reconstructs_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let d = random_decomposition(&mut rng, 8, 4, 9);
        let cd = core_decompose(&d).unwrap();
        let c = cd.components();
        let err = fro_norm((&c - &d.c).view()) / fro_norm(d.c.view());
        assert!(err < 1e-6);
        assert_eq!(cd.rank(), 4);
        // Basis rows orthonormal.
        let g = cd.basis.dot(&cd.basis.t());
        let eye = Array2::<f64>::eye(cd.rank());
        assert!(fro_norm((&g - &eye).view()) < 1e-8);
        // W * core * basis equals W * C.
        let rec = cd.reconstruct();
        let direct = d.reconstruct();
        assert!(fro_norm((&rec - &direct).view()) <= 1e-6 * fro_norm(direct.view()));
    }

    #[test]
    fn orthogonal_rows_are_their_own_svd() {
        let d = Decomposition {
            w: Array2::eye(2),
            c: array![[2.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            sparsity: SparsityBudget::Fraction(1.0),
            objective_trace: vec![],
        };
        let cd = core_decompose(&d).unwrap();
        // Core is diagonal up to permutation and sign.
        let mut nonzeros = 0;
        for v in cd.core.iter() {
            if v.abs() > 1e-12 {
                nonzeros += 1;
            }
        }
        assert_eq!(nonzeros, 2);
    }

    #[test]
    fn projection_recovers_own_core() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = random_decomposition(&mut rng, 6, 3, 12);
        let cd = core_decompose(&d).unwrap();
        let projected = project_into_basis(&cd, &d).unwrap();
        assert!(fro_norm((&projected - &cd.core).view()) < 1e-8);
    }

    #[test]
    fn projection_of_orthogonal_components_is_zero() {
        // Basis spans the first coordinate only; source lives in the second.
        let cd = CoreDecomposition {
            w: Array2::eye(2),
            core: array![[1.0], [0.5]],
            basis: array![[1.0, 0.0, 0.0]],
        };
        let source = array![[0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        let p = project_components(&cd, source.view()).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_residual_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let target = core_decompose(&random_decomposition(&mut rng, 6, 2, 10)).unwrap();
        let source = random_matrix(&mut rng, 2, 10);
        let p = project_components(&target, source.view()).unwrap();
        let back = p.dot(&target.basis);
        let residual = &source - &back;
        let overlap = residual.dot(&target.basis.t());
        assert!(fro_norm(overlap.view()) < 1e-8);
    }

    #[test]
    fn blend_endpoints_and_affinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let d1 = random_decomposition(&mut rng, 7, 3, 9);
        let d2 = random_decomposition(&mut rng, 7, 3, 9);
        let cd1 = core_decompose(&d1).unwrap();
        let k2 = project_into_basis(&cd1, &d2).unwrap();

        let out0 = blend_cores(&cd1, k2.view(), 0.0).unwrap();
        let rec1 = cd1.reconstruct();
        assert!(fro_norm((&out0 - &rec1).view()) < 1e-9 * fro_norm(rec1.view()).max(1.0));

        let out1 = blend_cores(&cd1, k2.view(), 1.0).unwrap();
        let expect1 = cd1.w.dot(&k2.dot(&cd1.basis));
        assert!(fro_norm((&out1 - &expect1).view()) < 1e-12);

        let mid = blend_cores(&cd1, k2.view(), 0.5).unwrap();
        let affine = 0.5 * &out0 + 0.5 * &out1;
        for (a, b) in mid.iter().zip(affine.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_blend_is_reconstruction_for_every_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let d = random_decomposition(&mut rng, 5, 2, 8);
        let cd = core_decompose(&d).unwrap();
        let own = project_into_basis(&cd, &d).unwrap();
        let rec = cd.reconstruct();
        for alpha in [0.0, 0.25, 0.7, 1.0] {
            let out = blend_cores(&cd, own.view(), alpha).unwrap();
            assert!(fro_norm((&out - &rec).view()) < 1e-8 * fro_norm(rec.view()).max(1.0));
        }
    }

    #[test]
    fn blend_rejects_bad_alpha_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let cd = core_decompose(&random_decomposition(&mut rng, 5, 2, 8)).unwrap();
        let k2 = cd.core.clone();
        assert!(blend_cores(&cd, k2.view(), 1.5).is_err());
        let wrong = Array2::<f64>::zeros((3, 3));
        assert!(blend_cores(&cd, wrong.view(), 0.5).is_err());
    }

    fn random_chain(rng: &mut impl Rng, m: usize, f: usize, k: usize, cols: usize) -> Vec<CoreDecomposition> {
        (0..m)
            .map(|_| core_decompose(&random_decomposition(rng, f, k, cols)).unwrap())
            .collect()
    }

    #[test]
    fn self_exchange_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let chain = random_chain(&mut rng, 3, 6, 2, 9);
        let rec: Array2<f64> = chain
            .iter()
            .fold(Array2::zeros((6, 9)), |acc, cd| acc + cd.reconstruct());
        for i in 0..3 {
            let out = exchange_basic(&chain, &chain, i).unwrap();
            assert!(fro_norm((&out - &rec).view()) < 1e-9 * fro_norm(rec.view()).max(1.0));
        }
    }

    #[test]
    fn single_term_exchange_equals_alpha_one_blend() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let d1 = random_decomposition(&mut rng, 6, 2, 9);
        let d2 = random_decomposition(&mut rng, 6, 2, 9);
        let cd1 = core_decompose(&d1).unwrap();
        let cd2 = core_decompose(&d2).unwrap();
        let out = exchange_basic(&[cd1.clone()], &[cd2], 0).unwrap();
        let k2 = project_into_basis(&cd1, &d2).unwrap();
        let blend = blend_cores(&cd1, k2.view(), 1.0).unwrap();
        assert!(fro_norm((&out - &blend).view()) < 1e-9);
    }

    #[test]
    fn exchange_difference_has_bounded_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let k = 2;
        let chain1 = random_chain(&mut rng, 3, 8, k, 12);
        let chain2 = random_chain(&mut rng, 3, 8, k, 12);
        let rec: Array2<f64> = chain1
            .iter()
            .fold(Array2::zeros((8, 12)), |acc, cd| acc + cd.reconstruct());
        let out = exchange_basic(&chain1, &chain2, 1).unwrap();
        let diff = &out - &rec;
        // The difference is W1_1 (K2' - K1) V1t_1, rank at most k.
        let s = svd(diff.view()).unwrap();
        for idx in k..s.rank() {
            assert!(s.singular_values[idx] < 1e-9 * s.singular_values[0].max(1.0));
        }
    }

    #[test]
    fn exchange_rejects_bad_index_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let c1 = random_chain(&mut rng, 2, 4, 2, 6);
        let c2 = random_chain(&mut rng, 2, 4, 2, 6);
        assert!(exchange_basic(&c1, &c2, 2).is_err());
        assert!(exchange_basic(&c1, &c2[..1], 0).is_err());
    }

    #[test]
    fn synthesize_clip_round_trips_reconstruction() {
        use crate::motion_io::{normalize, Skeleton};
        use ndarray::Array3;
        let sk = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![0.0, 1.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let frames = Array3::from_shape_fn((6, 2, 3), |_| rng.gen_range(-1.0..1.0));
        let clip = MotionClip::new(sk.clone(), frames, 30.0).unwrap();
        let (x, stats) = normalize(&clip).unwrap();
        let out = synthesize_clip(x.view(), &stats, &sk, 30.0).unwrap();
        for (a, b) in out.frames.iter().zip(clip.frames.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
