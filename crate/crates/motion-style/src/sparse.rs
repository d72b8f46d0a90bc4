//! L2/L0 sparse coding by projected gradient descent, plus the SVD and
//! spectral-norm primitives the decomposition and synthesis stages rely on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many non-zero entries a sparse code vector may keep: either an
/// absolute count or a fraction of the vector's dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SparsityBudget {
    Count(usize),
    Fraction(f64),
}

impl SparsityBudget {
    pub fn count(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("sparsity count must be >= 1".into()));
        }
        Ok(SparsityBudget::Count(k))
    }

    pub fn fraction(f: f64) -> Result<Self> {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sparsity fraction must be in (0, 1], got {f}"
            )));
        }
        Ok(SparsityBudget::Fraction(f))
    }

    /// Resolve to a concrete non-zero count for a vector of dimension `n`.
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            SparsityBudget::Count(k) => k.min(n),
            SparsityBudget::Fraction(f) => ((f * n as f64).round() as usize).clamp(1, n),
        }
    }

    /// The budget as a fraction of dimension `n`.
    pub fn resolved_fraction(&self, n: usize) -> f64 {
        self.resolve(n) as f64 / n as f64
    }
}

/// Thin SVD `M = U * diag(sigma) * Vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub vt: Array2<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Keep only the leading `r` singular directions.
    pub fn truncate(&self, r: usize) -> SvdResult {
        let r = r.min(self.rank());
        SvdResult {
            u: self.u.slice(ndarray::s![.., ..r]).to_owned(),
            singular_values: self.singular_values.slice(ndarray::s![..r]).to_owned(),
            vt: self.vt.slice(ndarray::s![..r, ..]).to_owned(),
        }
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.singular_values;
        us.dot(&self.vt)
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_TOL: f64 = 1e-14;

/// Thin SVD via one-sided Jacobi rotations.
///
/// Columns of `U` carry a deterministic sign: the largest-magnitude entry of
/// each column is positive.
pub fn svd(m: ArrayView2<f64>) -> Result<SvdResult> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("svd of empty matrix".into()));
    }
    if rows < cols {
        // M^T = V S U^T, so decompose the transpose and swap factors.
        let t = svd(m.t())?;
        return Ok(apply_sign_convention(SvdResult {
            u: t.vt.t().to_owned(),
            singular_values: t.singular_values,
            vt: t.u.t().to_owned(),
        }));
    }

    let mut a = m.to_owned();
    let n = cols;
    let mut v = Array2::<f64>::eye(n);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (ap, aq) = (a[[i, p]], a[[i, q]]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let ap = a[[i, p]];
                    let aq = a[[i, q]];
                    a[[i, p]] = c * ap - s * aq;
                    a[[i, q]] = s * ap + c * aq;
                }
                for i in 0..n {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "jacobi svd did not converge within {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| a.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Array2::<f64>::zeros((rows, n));
    let mut sigma = Array1::<f64>::zeros(n);
    let mut vt = Array2::<f64>::zeros((n, n));
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        vt.row_mut(k).assign(&v.column(j));
        if norms[j] > 1e-300 {
            u.column_mut(k).assign(&(&a.column(j) / norms[j]));
        } else {
            sigma[k] = 0.0;
            deficient.push(k);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal(&mut u, &deficient);
    }

    Ok(apply_sign_convention(SvdResult {
        u,
        singular_values: sigma,
        vt,
    }))
}

/// Fill zero columns of `u` with unit vectors orthogonal to the others.
fn complete_orthonormal(u: &mut Array2<f64>, deficient: &[usize]) {
    let rows = u.nrows();
    let cols = u.ncols();
    let mut next_basis = 0usize;
    for &k in deficient {
        'candidates: while next_basis < rows {
            let mut cand = Array1::<f64>::zeros(rows);
            cand[next_basis] = 1.0;
            next_basis += 1;
            for j in 0..cols {
                if j == k {
                    continue;
                }
                let proj = u.column(j).dot(&cand);
                cand = cand - proj * &u.column(j).to_owned();
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-8 {
                u.column_mut(k).assign(&(&cand / norm));
                break 'candidates;
            }
        }
    }
}

fn apply_sign_convention(mut r: SvdResult) -> SvdResult {
    for k in 0..r.rank() {
        let col = r.u.column(k);
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if r.u[[best, k]] < 0.0 {
            r.u.column_mut(k).map_inplace(|x| *x = -*x);
            r.vt.row_mut(k).map_inplace(|x| *x = -*x);
        }
    }
    r
}

/// Largest singular value of `m` via power iteration on the Gram matrix.
pub fn spectral_norm(m: ArrayView2<f64>) -> f64 {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // Iterate on the smaller Gram matrix.
    let gram = if cols <= rows {
        m.t().dot(&m)
    } else {
        m.dot(&m.t())
    };
    let n = gram.nrows();
    // Deterministic start with a ramp so no coordinate hyperplane traps it.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + (i as f64) / (n as f64)));
    let norm0 = v.dot(&v).sqrt();
    v /= norm0;
    let mut lambda = 0.0;
    for iter in 0..1000 {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = &w / norm;
        let next_lambda = next.dot(&gram.dot(&next));
        let done = iter >= 100 && (next_lambda - lambda).abs() <= 1e-13 * next_lambda.abs();
        v = next;
        lambda = next_lambda;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Default iteration cap for [`sparse_code`].
pub const SPARSE_CODE_ITERS: usize = 200;
/// Default stopping tolerance on the infinity-norm iterate change.
pub const SPARSE_CODE_TOL: f64 = 1e-8;

/// Solve `min ||y - D x||^2 s.t. nnz(x) <= budget` by gradient descent with
/// hard-threshold projection after each step, followed by a least-squares
/// refit on the selected support.
///
/// Step length is `1 / sigma_max(D)^2`, the largest step for which each
/// projected step is guaranteed not to increase the objective; the refit
/// minimizes over the chosen support and so never increases it either.
pub fn sparse_code(
    dict: ArrayView2<f64>,
    y: ArrayView1<f64>,
    budget: SparsityBudget,
    iters: usize,
    tol: f64,
) -> Result<Array1<f64>> {
    let x0 = Array1::zeros(dict.ncols());
    sparse_code_from(dict, y, budget, iters, tol, x0)
}

/// [`sparse_code`] warm-started from `x0` (`x0` is projected onto the budget
/// before iterating).
pub fn sparse_code_from(
    dict: ArrayView2<f64>,
    y: ArrayView1<f64>,
    budget: SparsityBudget,
    iters: usize,
    tol: f64,
    mut x: Array1<f64>,
) -> Result<Array1<f64>> {
    if iters == 0 {
        return Err(Error::InvalidArgument("sparse_code needs iters >= 1".into()));
    }
    if dict.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sparse_code input".into()));
    }
    if dict.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "dictionary has {} rows but y has {} entries",
            dict.nrows(),
            y.len()
        )));
    }
    if x.len() != dict.ncols() {
        return Err(Error::Shape("warm-start length != dictionary columns".into()));
    }
    let sigma_max = spectral_norm(dict);
    if sigma_max <= 0.0 {
        return Err(Error::InvalidArgument("zero dictionary".into()));
    }
    let step = 1.0 / (sigma_max * sigma_max);
    let keep = budget.resolve(dict.ncols());

    hard_threshold(&mut x, keep);
    if let Some(exact) = exhaustive_solve(dict, y, keep, &x) {
        return Ok(exact);
    }
    let mut best = pursue(dict, y, keep, step, iters, tol, x);
    let mut best_obj = residual_sq(dict, y, best.view());

    // The iteration only ever improves on its starting support, so restart
    // it from each single-atom seed (strongest correlations first) and keep
    // the best outcome.
    let corr = dict.t().dot(&y);
    let mut seeds: Vec<usize> = (0..dict.ncols()).collect();
    seeds.sort_by(|&i, &j| corr[j].abs().partial_cmp(&corr[i].abs()).unwrap().then(i.cmp(&j)));
    for &j in seeds.iter().take(RESTART_CAP) {
        let mut seed = Array1::zeros(dict.ncols());
        let d_j = dict.column(j);
        let denom = d_j.dot(&d_j);
        if denom <= 0.0 {
            continue;
        }
        seed[j] = corr[j] / denom;
        let candidate = pursue(dict, y, keep, step, iters, tol, seed);
        let obj = residual_sq(dict, y, candidate.view());
        if obj < best_obj {
            best = candidate;
            best_obj = obj;
        }
    }
    Ok(best)
}

/// Restart budget for [`sparse_code_from`].
const RESTART_CAP: usize = 16;

/// Support-enumeration budget: instances with at most this many candidate
/// supports are solved exactly instead of iteratively.
const EXHAUSTIVE_CAP: usize = 256;

/// Global minimizer over all supports of size `keep` when their number is
/// within [`EXHAUSTIVE_CAP`]; `None` defers to the iterative path. `fallback`
/// (already budget-feasible) is returned when every support is singular.
fn exhaustive_solve(
    dict: ArrayView2<f64>,
    y: ArrayView1<f64>,
    keep: usize,
    fallback: &Array1<f64>,
) -> Option<Array1<f64>> {
    let n = dict.ncols();
    let mut count: usize = 1;
    for i in 0..keep {
        count = count.checked_mul(n - i)?.checked_div(i + 1)?;
        if count > EXHAUSTIVE_CAP {
            return None;
        }
    }
    let mut best = fallback.clone();
    let mut best_obj = residual_sq(dict, y, best.view());
    let mut support: Vec<usize> = (0..keep).collect();
    loop {
        let sub = Array2::from_shape_fn((dict.nrows(), keep), |(i, j)| dict[[i, support[j]]]);
        let ata = sub.t().dot(&sub);
        let aty = sub.t().dot(&y);
        if let Some(coef) = solve_linear(ata, aty) {
            if coef.iter().all(|v| v.is_finite()) {
                let mut candidate = Array1::zeros(n);
                for (j, &i) in support.iter().enumerate() {
                    candidate[i] = coef[j];
                }
                let obj = residual_sq(dict, y, candidate.view());
                if obj < best_obj {
                    best = candidate;
                    best_obj = obj;
                }
            }
        }
        // Next lexicographic combination.
        let mut i = keep;
        loop {
            if i == 0 {
                return Some(best);
            }
            i -= 1;
            if support[i] != i + n - keep {
                break;
            }
        }
        support[i] += 1;
        for j in (i + 1)..keep {
            support[j] = support[j - 1] + 1;
        }
    }
}

/// One projected-gradient run with per-iteration support refit.
fn pursue(
    dict: ArrayView2<f64>,
    y: ArrayView1<f64>,
    keep: usize,
    step: f64,
    iters: usize,
    tol: f64,
    mut x: Array1<f64>,
) -> Array1<f64> {
    refit_on_support(dict, y, &mut x);
    for _ in 0..iters {
        let residual = dict.dot(&x) - &y;
        let mut next = &x - &(step * dict.t().dot(&residual));
        hard_threshold(&mut next, keep);
        refit_on_support(dict, y, &mut next);
        let change = next
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = next;
        if change < tol {
            break;
        }
    }
    x
}

/// Replace the entries of `x` on its non-zero support by the least-squares
/// solution over that support, when that lowers the residual. Keeps `x`
/// unchanged for an empty or numerically singular support.
fn refit_on_support(dict: ArrayView2<f64>, y: ArrayView1<f64>, x: &mut Array1<f64>) {
    let support: Vec<usize> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() {
        return;
    }
    let sub = Array2::from_shape_fn((dict.nrows(), support.len()), |(i, j)| dict[[i, support[j]]]);
    let ata = sub.t().dot(&sub);
    let aty = sub.t().dot(&y);
    let Some(coef) = solve_linear(ata, aty) else {
        return;
    };
    let before = residual_sq(dict, y, x.view());
    let mut candidate = x.clone();
    for (j, &i) in support.iter().enumerate() {
        candidate[i] = coef[j];
    }
    if candidate.iter().all(|v| v.is_finite())
        && residual_sq(dict, y, candidate.view()) <= before
    {
        *x = candidate;
    }
}

/// Solve a small dense symmetric system by Gaussian elimination with partial
/// pivoting; `None` when the matrix is numerically singular.
pub(crate) fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).unwrap())?;
        if a[[pivot, col]].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a[[col, j]];
                a[[col, j]] = a[[pivot, j]];
                a[[pivot, j]] = tmp;
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let factor = a[[row, col]] / a[[col, col]];
            for j in col..n {
                a[[row, j]] -= factor * a[[col, j]];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[[row, j]] * x[j];
        }
        x[row] = acc / a[[row, row]];
    }
    Some(x)
}

/// Keep the `keep` largest-magnitude entries of `x`, zero the rest.
/// Ties at the threshold keep the lower index.
pub fn hard_threshold(x: &mut Array1<f64>, keep: usize) {
    let n = x.len();
    if keep >= n {
        return;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    // Sort by magnitude descending, index ascending on ties.
    idx.sort_by(|&i, &j| {
        x[j].abs()
            .partial_cmp(&x[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    for &i in &idx[keep..] {
        x[i] = 0.0;
    }
}

/// `||y - D x||^2`.
pub fn residual_sq(dict: ArrayView2<f64>, y: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
    let r = y.to_owned() - dict.dot(&x);
    r.dot(&r)
}

/// Frobenius norm.
pub fn fro_norm(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Number of entries with magnitude above zero, per row.
pub fn row_nnz(m: ArrayView2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .map(|row| row.iter().filter(|v| **v != 0.0).count())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn svd_diagonal() {
        let m = array![[3.0, 0.0], [0.0, -5.0]];
        let r = svd(m.view()).unwrap();
        assert!((r.singular_values[0] - 5.0).abs() < 1e-12);
        assert!((r.singular_values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn svd_orthogonal_input() {
        let c = (0.3f64).cos();
        let s = (0.3f64).sin();
        let m = array![[c, -s], [s, c]];
        let r = svd(m.view()).unwrap();
        for sv in r.singular_values.iter() {
            assert!((sv - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rows = rng.gen_range(1..=12);
            let cols = rng.gen_range(1..=12);
            let m = random_matrix(&mut rng, rows, cols);
            let r = svd(m.view()).unwrap();
            let rec = r.reconstruct();
            let err = fro_norm((&rec - &m).view()) / fro_norm(m.view()).max(1e-300);
            assert!(err < 1e-10, "reconstruction error {err}");
            let utu = r.u.t().dot(&r.u);
            let vvt = r.vt.dot(&r.vt.t());
            let eye = Array2::<f64>::eye(r.rank());
            assert!(fro_norm((&utu - &eye).view()) < 1e-8);
            assert!(fro_norm((&vvt - &eye).view()) < 1e-8);
            // Non-increasing singular values.
            for k in 1..r.rank() {
                assert!(r.singular_values[k] <= r.singular_values[k - 1] + 1e-15);
            }
        }
    }

    #[test]
    fn svd_sign_convention_deterministic() {
        let m = array![[1.0, 2.0], [-3.0, 0.5], [0.1, 0.1]];
        let r = svd(m.view()).unwrap();
        for k in 0..r.rank() {
            let max = r
                .u
                .column(k)
                .iter()
                .cloned()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn svd_zero_matrix_has_orthonormal_u() {
        let m = Array2::<f64>::zeros((4, 3));
        let r = svd(m.view()).unwrap();
        assert!(r.singular_values.iter().all(|&s| s == 0.0));
        let utu = r.u.t().dot(&r.u);
        assert!(fro_norm((&utu - &Array2::<f64>::eye(3)).view()) < 1e-8);
    }

    #[test]
    fn spectral_norm_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((spectral_norm(m.view()) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_rank_one() {
        let u = array![0.6, 0.8];
        let v = array![0.0, 1.0, 0.0];
        let m = Array2::from_shape_fn((2, 3), |(i, j)| u[i] * v[j]);
        assert!((spectral_norm(m.view()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 5, 5);
            let top = svd(m.view()).unwrap().singular_values[0];
            let sn = spectral_norm(m.view());
            assert!((sn - top).abs() <= 1e-6 * top.max(1.0));
        }
    }

    #[test]
    fn sparse_code_identity_full_budget() {
        let d = Array2::<f64>::eye(4);
        let y = array![1.0, -2.0, 0.5, 3.0];
        let x = sparse_code(
            d.view(),
            y.view(),
            SparsityBudget::Count(4),
            SPARSE_CODE_ITERS,
            SPARSE_CODE_TOL,
        )
        .unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_code_identity_topk() {
        let d = Array2::<f64>::eye(4);
        let y = array![3.0, 1.0, -2.0, 0.5];
        let x = sparse_code(
            d.view(),
            y.view(),
            SparsityBudget::Count(2),
            SPARSE_CODE_ITERS,
            SPARSE_CODE_TOL,
        )
        .unwrap();
        let expected = array![3.0, 0.0, -2.0, 0.0];
        for (a, b) in x.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Exhaustive-support least squares, independent of the solver path.
    /// Normal equations are solved with plain Gaussian elimination.
    pub fn oracle_best_objective(d: ArrayView2<f64>, y: ArrayView1<f64>, k: usize) -> f64 {
        fn supports(n: usize, k: usize) -> Vec<Vec<usize>> {
            fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..n {
                    cur.push(i);
                    rec(i + 1, n, k, cur, out);
                    cur.pop();
                }
            }
            let mut out = Vec::new();
            rec(0, n, k, &mut Vec::new(), &mut out);
            out
        }
        let mut best = f64::INFINITY;
        for support in supports(d.ncols(), k) {
            let s = support.len();
            let sub = Array2::from_shape_fn((d.nrows(), s), |(i, j)| d[[i, support[j]]]);
            let ata = sub.t().dot(&sub);
            let aty = sub.t().dot(&y);
            if let Some(coef) = gauss_solve(ata, aty) {
                let r = y.to_owned() - sub.dot(&coef);
                best = best.min(r.dot(&r));
            }
        }
        best
    }

    fn gauss_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
        let n = a.nrows();
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| {
                a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).unwrap()
            })?;
            if a[[pivot, col]].abs() < 1e-12 {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a[[col, j]];
                    a[[col, j]] = a[[pivot, j]];
                    a[[pivot, j]] = tmp;
                }
                b.swap(col, pivot);
            }
            for row in (col + 1)..n {
                let factor = a[[row, col]] / a[[col, col]];
                for j in col..n {
                    a[[row, j]] -= factor * a[[col, j]];
                }
                b[row] -= factor * b[col];
            }
        }
        let mut x = Array1::zeros(n);
        for row in (0..n).rev() {
            let mut acc = b[row];
            for j in (row + 1)..n {
                acc -= a[[row, j]] * x[j];
            }
            x[row] = acc / a[[row, row]];
        }
        Some(x)
    }

    #[test]
    fn sparse_code_near_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let d = random_matrix(&mut rng, 6, 8);
            let y = Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0));
            let x = sparse_code(
                d.view(),
                y.view(),
                SparsityBudget::Count(2),
                SPARSE_CODE_ITERS,
                SPARSE_CODE_TOL,
            )
            .unwrap();
            assert!(x.iter().filter(|v| **v != 0.0).count() <= 2);
            let obj = residual_sq(d.view(), y.view(), x.view());
            let best = oracle_best_objective(d.view(), y.view(), 2);
            assert!(
                obj <= 1.1 * best + 1e-12,
                "objective {obj} vs oracle {best}"
            );
        }
    }

    #[test]
    fn sparse_code_objective_nonincreasing_full_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_matrix(&mut rng, 8, 6);
        let y = Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0));
        let sigma = spectral_norm(d.view());
        let step = 1.0 / (sigma * sigma);
        let mut x = Array1::<f64>::zeros(6);
        let mut prev = residual_sq(d.view(), y.view(), x.view());
        for _ in 0..50 {
            let r = d.dot(&x) - &y;
            x = &x - &(step * d.t().dot(&r));
            let obj = residual_sq(d.view(), y.view(), x.view());
            assert!(obj <= prev + 1e-12);
            prev = obj;
        }
    }

    #[test]
    fn sparse_code_rejects_zero_dictionary() {
        let d = Array2::<f64>::zeros((3, 3));
        let y = array![1.0, 2.0, 3.0];
        assert!(sparse_code(
            d.view(),
            y.view(),
            SparsityBudget::Count(1),
            SPARSE_CODE_ITERS,
            SPARSE_CODE_TOL
        )
        .is_err());
    }

    #[test]
    fn hard_threshold_tie_keeps_lower_index() {
        let mut x = array![2.0, -2.0, 1.0];
        hard_threshold(&mut x, 1);
        assert_eq!(x, array![2.0, 0.0, 0.0]);
    }

    #[test]
    fn budget_resolution() {
        assert_eq!(SparsityBudget::Fraction(0.1).resolve(10), 1);
        assert_eq!(SparsityBudget::Fraction(0.1).resolve(5), 1);
        assert_eq!(SparsityBudget::Fraction(1.0).resolve(7), 7);
        assert_eq!(SparsityBudget::Count(12).resolve(10), 10);
        assert!(SparsityBudget::fraction(0.0).is_err());
        assert!(SparsityBudget::count(0).is_err());
    }
}
