//! Factor an animation matrix into per-frame weights and sparse style
//! components: max-variance initialization, alternating weight/component
//! optimization, and residual-peeling basic-motion chains.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{
    fro_norm, row_nnz, solve_linear, sparse_code_from, svd, SparsityBudget, SPARSE_CODE_ITERS,
    SPARSE_CODE_TOL,
};

/// Projection applied to each weight column during the weights update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WeightConstraint {
    /// Unconstrained; the update is an exact per-block least-squares solve
    /// and the objective never increases.
    #[default]
    Identity,
    /// Clamp weights into [0, 1]. No monotonicity guarantee.
    Box01,
}

impl WeightConstraint {
    fn project(&self, v: f64) -> f64 {
        match self {
            WeightConstraint::Identity => v,
            WeightConstraint::Box01 => v.clamp(0.0, 1.0),
        }
    }
}

/// Weights and sparse components of one animation matrix.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// F x K per-frame activations.
    pub w: Array2<f64>,
    /// K x 3N sparse components.
    pub c: Array2<f64>,
    pub sparsity: SparsityBudget,
    /// `||X - WC||_F^2` after initialization and after each outer iteration.
    pub objective_trace: Vec<f64>,
}

impl Decomposition {
    pub fn num_components(&self) -> usize {
        self.w.ncols()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.w.dot(&self.c)
    }
}

/// Tunables for [`decompose`].
#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    pub sparse_iters: usize,
    pub sparse_tol: f64,
    pub constraint: WeightConstraint,
    /// Stop outer iterations early when the relative trace improvement
    /// drops below this.
    pub early_exit_rel: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            sparse_iters: SPARSE_CODE_ITERS,
            sparse_tol: SPARSE_CODE_TOL,
            constraint: WeightConstraint::Identity,
            early_exit_rel: 1e-8,
        }
    }
}

/// Default number of alternating outer iterations.
pub const DEFAULT_OUTER_ITERS: usize = 20;

fn check_matrix(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("animation matrix".into()));
    }
    if x.ncols() % 3 != 0 || x.ncols() == 0 {
        return Err(Error::Shape(format!(
            "animation matrix must have 3N columns, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Greedy max-variance initialization.
///
/// Repeats K times: pick the vertex whose three columns carry the largest
/// summed squared motion, rank-1 factorize that F x 3 block by SVD into a
/// weight column and a component row supported on those three columns, and
/// subtract the product from the working matrix.
pub fn init_components(x: ArrayView2<f64>, k: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_matrix(x)?;
    let cols = x.ncols();
    if k == 0 || k > cols {
        return Err(Error::InvalidArgument(format!(
            "component count {k} out of range for {cols} columns"
        )));
    }
    let f = x.nrows();
    let n_vertices = cols / 3;
    let mut residual = x.to_owned();
    let mut w = Array2::<f64>::zeros((f, k));
    let mut c = Array2::<f64>::zeros((k, cols));

    for i in 0..k {
        let mut best_vertex = 0usize;
        let mut best_var = -1.0f64;
        for v in 0..n_vertices {
            let var: f64 = residual
                .slice(ndarray::s![.., 3 * v..3 * v + 3])
                .iter()
                .map(|x| x * x)
                .sum();
            if var > best_var {
                best_var = var;
                best_vertex = v;
            }
        }
        let block = residual
            .slice(ndarray::s![.., 3 * best_vertex..3 * best_vertex + 3])
            .to_owned();
        let dec = svd(block.view())?;
        let sigma1 = dec.singular_values[0];
        if sigma1 <= 1e-300 {
            continue; // nothing left to explain; leave this pair zero
        }
        let w_col = dec.u.column(0).to_owned() * sigma1;
        let c_row3 = dec.vt.row(0).to_owned();
        w.column_mut(i).assign(&w_col);
        for d in 0..3 {
            c[[i, 3 * best_vertex + d]] = c_row3[d];
        }
        for t in 0..f {
            for d in 0..3 {
                residual[[t, 3 * best_vertex + d]] -= w_col[t] * c_row3[d];
            }
        }
    }
    Ok((w, c))
}

/// One block-coordinate sweep over the weight columns.
///
/// For each component k: `W[:,k] <- P(((X - WC) + W[:,k] C_k) C_k^T / (C_k C_k^T))`.
/// Components whose row norm is (near) zero are skipped and reported.
pub fn optimize_weights(
    x: ArrayView2<f64>,
    w: &Array2<f64>,
    c: &Array2<f64>,
    constraint: WeightConstraint,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (f, cols) = x.dim();
    let k = w.ncols();
    if w.nrows() != f || c.dim() != (k, cols) {
        return Err(Error::Shape("weight/component shapes disagree with X".into()));
    }
    let mut w = w.clone();
    let mut residual = x.to_owned() - w.dot(c);
    let mut skipped = Vec::new();
    for comp in 0..k {
        let c_row = c.row(comp);
        let denom: f64 = c_row.dot(&c_row);
        if denom < 1e-12 {
            skipped.push(comp);
            continue;
        }
        // R_k C_k^T = (E + W_k C_k) C_k^T, computed without forming R_k.
        let numer = residual.dot(&c_row.t()) + denom * &w.column(comp);
        let new_col = numer.mapv(|v| constraint.project(v / denom));
        let delta: Array1<f64> = &w.column(comp) - &new_col;
        for t in 0..f {
            if delta[t] != 0.0 {
                residual.row_mut(t).scaled_add(delta[t], &c_row);
            }
        }
        w.column_mut(comp).assign(&new_col);
    }
    Ok((w, skipped))
}

/// Sparse-code every column of X against the weight dictionary.
///
/// Column j of the result solves `min ||X[:,j] - W x||^2, nnz(x) <= budget`,
/// warm-started from `warm` (usually the previous components) so each outer
/// iteration can only improve the objective. In addition to the per-column
/// budget, every ROW of the result keeps its non-zero fraction within the
/// resolved budget fraction: columns are reassigned across components when
/// one row attracts more than its share (`ceil(count * cols / K)` entries).
pub fn optimize_components(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    budget: SparsityBudget,
    warm: Option<&Array2<f64>>,
    sparse_iters: usize,
    sparse_tol: f64,
) -> Result<Array2<f64>> {
    let (f, cols) = x.dim();
    let k = w.ncols();
    if w.nrows() != f {
        return Err(Error::Shape("weights row count differs from X".into()));
    }
    if let Some(prev) = warm {
        if prev.dim() != (k, cols) {
            return Err(Error::Shape("warm-start components have wrong shape".into()));
        }
    }
    let mut c = Array2::<f64>::zeros((k, cols));
    for j in 0..cols {
        let x0 = match warm {
            Some(prev) => prev.column(j).to_owned(),
            None => Array1::zeros(k),
        };
        let code = sparse_code_from(w, x.column(j), budget, sparse_iters, sparse_tol, x0)?;
        c.column_mut(j).assign(&code);
    }

    let keep = budget.resolve(k);
    let cap = row_capacity(keep, k, cols);
    if row_nnz(c.view()).iter().all(|&n| n <= cap) {
        return Ok(c);
    }
    if keep == 1 {
        enforce_cap_single(x, w, &mut c, cap);
    } else {
        enforce_cap_general(x, w, &mut c, keep, cap);
    }
    // The constrained solution can be worse than a feasible warm start;
    // never regress past it.
    if let Some(prev) = warm {
        if row_nnz(prev.view()).iter().all(|&n| n <= cap) {
            let obj = |m: &Array2<f64>| {
                let r = x.to_owned() - w.dot(m);
                r.iter().map(|v| v * v).sum::<f64>()
            };
            if obj(prev) < obj(&c) {
                c = prev.clone();
            }
        }
    }
    Ok(c)
}

/// Maximum entries one component row may occupy: the budget spread evenly
/// over rows, rounded up so total capacity always covers `keep` per column.
fn row_capacity(keep: usize, k: usize, cols: usize) -> usize {
    ((keep * cols + k - 1) / k).min(cols)
}

/// Row-capacity enforcement for the one-atom-per-column case, as a
/// capacitated assignment: repair overfull rows by cheapest moves, then
/// deterministic improvement passes with pairwise swaps.
fn enforce_cap_single(x: ArrayView2<f64>, w: ArrayView2<f64>, c: &mut Array2<f64>, cap: usize) {
    let (k, cols) = c.dim();
    let gram = w.t().dot(&x); // k x cols correlations
    let denom: Vec<f64> = (0..k).map(|r| w.column(r).dot(&w.column(r))).collect();
    let y2: Vec<f64> = (0..cols).map(|j| x.column(j).dot(&x.column(j))).collect();
    // Least-squares cost of explaining column j with row r alone.
    let cost = |j: usize, r: usize| -> f64 {
        if denom[r] < 1e-12 {
            f64::INFINITY
        } else {
            y2[j] - gram[[r, j]] * gram[[r, j]] / denom[r]
        }
    };

    let mut assign: Vec<Option<usize>> = (0..cols)
        .map(|j| (0..k).find(|&r| c[[r, j]] != 0.0))
        .collect();
    let mut load = vec![0usize; k];
    for a in assign.iter().flatten() {
        load[*a] += 1;
    }

    // Repair: move the cheapest column out of each overfull row.
    while let Some(over) = (0..k).find(|&r| load[r] > cap) {
        let mut best: Option<(f64, usize, Option<usize>)> = None;
        for j in 0..cols {
            if assign[j] != Some(over) {
                continue;
            }
            let alt = (0..k)
                .filter(|&r| r != over && load[r] < cap && denom[r] >= 1e-12)
                .min_by(|&a, &b| cost(j, a).partial_cmp(&cost(j, b)).unwrap());
            let (alt_cost, target) = match alt {
                Some(r) => (cost(j, r), Some(r)),
                None => (y2[j], None), // drop to zero
            };
            let increase = alt_cost - cost(j, over);
            if best.as_ref().map_or(true, |(inc, _, _)| increase < *inc) {
                best = Some((increase, j, target));
            }
        }
        let (_, j, target) = best.expect("overfull row has columns");
        load[over] -= 1;
        assign[j] = target;
        if let Some(r) = target {
            load[r] += 1;
        }
    }

    // Improvement: single-column reassignments and pairwise swaps.
    for _ in 0..64 {
        let mut changed = false;
        for j in 0..cols {
            let current = assign[j].map_or(y2[j], |r| cost(j, r));
            let candidate = (0..k)
                .filter(|&r| (load[r] < cap || assign[j] == Some(r)) && denom[r] >= 1e-12)
                .min_by(|&a, &b| cost(j, a).partial_cmp(&cost(j, b)).unwrap());
            if let Some(r) = candidate {
                if cost(j, r) < current - 1e-15 * y2[j].max(1.0) {
                    if let Some(old) = assign[j] {
                        load[old] -= 1;
                    }
                    assign[j] = Some(r);
                    load[r] += 1;
                    changed = true;
                }
            }
        }
        for j1 in 0..cols {
            let Some(r1) = assign[j1] else { continue };
            for j2 in (j1 + 1)..cols {
                let Some(r2) = assign[j2] else { continue };
                if r1 == r2 {
                    continue;
                }
                let delta = cost(j1, r2) + cost(j2, r1) - cost(j1, r1) - cost(j2, r2);
                if delta < -1e-12 * (y2[j1] + y2[j2]).max(1.0) {
                    assign[j1] = Some(r2);
                    assign[j2] = Some(r1);
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    c.fill(0.0);
    for j in 0..cols {
        if let Some(r) = assign[j] {
            c[[r, j]] = gram[[r, j]] / denom[r];
        }
    }
}

/// Row-capacity enforcement for multi-atom supports: drop atoms from
/// overfull rows (cheapest refit increase first), then try adding or
/// substituting atoms from rows with spare capacity.
fn enforce_cap_general(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    c: &mut Array2<f64>,
    keep: usize,
    cap: usize,
) {
    let (k, cols) = c.dim();
    let usable: Vec<bool> = (0..k).map(|r| w.column(r).dot(&w.column(r)) >= 1e-12).collect();
    let refit = |support: &[usize], j: usize| -> Option<(f64, Array1<f64>)> {
        let y = x.column(j);
        if support.is_empty() {
            return Some((y.dot(&y), Array1::zeros(0)));
        }
        let sub = Array2::from_shape_fn((x.nrows(), support.len()), |(i, s)| w[[i, support[s]]]);
        let coef = solve_linear(sub.t().dot(&sub), sub.t().dot(&y))?;
        if coef.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let r = y.to_owned() - sub.dot(&coef);
        Some((r.dot(&r), coef))
    };

    let mut supports: Vec<Vec<usize>> = (0..cols)
        .map(|j| (0..k).filter(|&r| c[[r, j]] != 0.0).collect())
        .collect();
    let mut load = vec![0usize; k];
    for s in &supports {
        for &r in s {
            load[r] += 1;
        }
    }

    while let Some(over) = (0..k).find(|&r| load[r] > cap) {
        let mut best: Option<(f64, usize)> = None;
        for (j, support) in supports.iter().enumerate() {
            if !support.contains(&over) {
                continue;
            }
            let Some((now, _)) = refit(support, j) else { continue };
            let reduced: Vec<usize> = support.iter().copied().filter(|&r| r != over).collect();
            let Some((after, _)) = refit(&reduced, j) else { continue };
            let increase = after - now;
            if best.as_ref().map_or(true, |(inc, _)| increase < *inc) {
                best = Some((increase, j));
            }
        }
        match best {
            Some((_, j)) => {
                supports[j].retain(|&r| r != over);
                load[over] -= 1;
            }
            None => {
                // No refittable column: zero the first column using the row.
                let j = (0..cols).find(|&j| supports[j].contains(&over)).unwrap();
                supports[j].retain(|&r| r != over);
                load[over] -= 1;
            }
        }
    }

    for _ in 0..8 {
        let mut changed = false;
        for j in 0..cols {
            let Some((mut now, _)) = refit(&supports[j], j) else { continue };
            // Grow toward the budget with rows that have spare capacity.
            while supports[j].len() < keep {
                let mut best: Option<(f64, usize)> = None;
                for r in 0..k {
                    if !usable[r] || load[r] >= cap || supports[j].contains(&r) {
                        continue;
                    }
                    let mut grown = supports[j].clone();
                    grown.push(r);
                    grown.sort_unstable();
                    if let Some((obj, _)) = refit(&grown, j) {
                        if obj < now - 1e-15 && best.as_ref().map_or(true, |(b, _)| obj < *b) {
                            best = Some((obj, r));
                        }
                    }
                }
                match best {
                    Some((obj, r)) => {
                        supports[j].push(r);
                        supports[j].sort_unstable();
                        load[r] += 1;
                        now = obj;
                        changed = true;
                    }
                    None => break,
                }
            }
            // Substitute one atom for a spare-capacity row when it helps.
            let mut best: Option<(f64, usize, usize)> = None;
            for (slot, &old) in supports[j].iter().enumerate() {
                for r in 0..k {
                    if !usable[r] || load[r] >= cap || supports[j].contains(&r) {
                        continue;
                    }
                    let mut swapped = supports[j].clone();
                    swapped[slot] = r;
                    swapped.sort_unstable();
                    if let Some((obj, _)) = refit(&swapped, j) {
                        if obj < now - 1e-15 && best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
                            best = Some((obj, old, r));
                        }
                    }
                }
            }
            if let Some((_, old, new)) = best {
                supports[j].retain(|&r| r != old);
                supports[j].push(new);
                supports[j].sort_unstable();
                load[old] -= 1;
                load[new] += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    c.fill(0.0);
    for (j, support) in supports.iter().enumerate() {
        if let Some((_, coef)) = refit(support, j) {
            for (s, &r) in support.iter().enumerate() {
                c[[r, j]] = coef[s];
            }
        }
    }
}

/// Alternating sparse decomposition `X ~= W C`.
pub fn decompose(
    x: ArrayView2<f64>,
    k: usize,
    budget: SparsityBudget,
    outer_iters: usize,
) -> Result<Decomposition> {
    decompose_with(x, k, budget, outer_iters, &DecomposeOptions::default())
}

pub fn decompose_with(
    x: ArrayView2<f64>,
    k: usize,
    budget: SparsityBudget,
    outer_iters: usize,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    let (mut w, mut c) = init_components(x, k)?;
    let objective = |w: &Array2<f64>, c: &Array2<f64>| {
        let r = x.to_owned() - w.dot(c);
        r.iter().map(|v| v * v).sum::<f64>()
    };
    let mut trace = vec![objective(&w, &c)];
    for _ in 0..outer_iters {
        c = optimize_components(x, w.view(), budget, Some(&c), opts.sparse_iters, opts.sparse_tol)?;
        let (new_w, _skipped) = optimize_weights(x, &w, &c, opts.constraint)?;
        w = new_w;
        let obj = objective(&w, &c);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev - obj < opts.early_exit_rel * prev.max(1e-300) {
            break;
        }
    }
    Ok(Decomposition {
        w,
        c,
        sparsity: budget,
        objective_trace: trace,
    })
}

/// One term of a basic-motion chain.
#[derive(Debug, Clone)]
pub struct BasicMotionTerm {
    pub decomposition: Decomposition,
}

/// A residual-peeling chain: `X = sum_i W_i C_i + residual` exactly.
#[derive(Debug, Clone)]
pub struct BasicMotionChain {
    pub terms: Vec<BasicMotionTerm>,
    pub residual: Array2<f64>,
}

impl BasicMotionChain {
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut acc = self.residual.clone() * 0.0;
        for term in &self.terms {
            acc = acc + term.decomposition.reconstruct();
        }
        acc
    }
}

/// Extract a chain of basic motions: decompose the running residual at each
/// scheduled sparsity, subtract the term's reconstruction, repeat.
pub fn extract_basic_chain(
    x: ArrayView2<f64>,
    schedule: &[SparsityBudget],
    k: usize,
    outer_iters: usize,
    opts: &DecomposeOptions,
) -> Result<BasicMotionChain> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty sparsity schedule".into()));
    }
    let mut residual = x.to_owned();
    let mut terms = Vec::with_capacity(schedule.len());
    for &budget in schedule {
        let dec = decompose_with(residual.view(), k, budget, outer_iters, opts)?;
        residual = residual - dec.reconstruct();
        terms.push(BasicMotionTerm { decomposition: dec });
    }
    Ok(BasicMotionChain { terms, residual })
}

/// Largest non-zero fraction over the rows of a component matrix.
pub fn max_row_nnz_fraction(c: ArrayView2<f64>) -> f64 {
    let cols = c.ncols() as f64;
    c.axis_iter(Axis(0))
        .map(|row| row.iter().filter(|v| **v != 0.0).count() as f64 / cols)
        .fold(0.0, f64::max)
}

/// Relative Frobenius reconstruction error `||X - WC||_F / ||X||_F`.
pub fn relative_error(x: ArrayView2<f64>, dec: &Decomposition) -> f64 {
    let diff = x.to_owned() - dec.reconstruct();
    fro_norm(diff.view()) / fro_norm(x).max(1e-300)
}
