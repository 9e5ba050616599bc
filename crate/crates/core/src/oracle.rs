//! Exact Wasserstein-1 on small empirical measures.
//!
//! Equal-mass discrete W1 reduces to a minimum-cost bipartite assignment
//! under Euclidean costs; this module solves it exactly with an O(n^3)
//! shortest-augmenting-path algorithm and provides the 1-D sorted-matching
//! special case. Costs are reported as the *mean* per-sample distance so
//! values are directly comparable to dual estimates.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::lipschitz::PotentialNet;

/// Row-count guard for the O(n^3) assignment solve.
pub const MATCHING_MAX_N: usize = 2048;

/// Exact minimum-cost matching between two equal-size point clouds.
#[derive(Clone, Debug)]
pub struct MatchingResult {
    /// Mean per-sample transport distance (1/n) sum ||x_i - y_sigma(i)||.
    pub cost: f64,
    /// `assignment[i]` is the target index matched to source row `i`;
    /// always a bijection.
    pub assignment: Vec<usize>,
}

/// Exact W1 between two 1-D samples of equal length: sort both sides and
/// average the absolute differences (the monotone coupling is optimal).
pub fn w1_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "w1_1d needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Usage("w1_1d needs at least one sample".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let total: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / x.len() as f64)
}

/// Exact minimum-cost assignment between the rows of `x` and `y` under
/// Euclidean costs (shortest augmenting path with potentials, O(n^3)).
pub fn w1_matching(x: &Tensor, y: &Tensor) -> Result<MatchingResult> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::Shape(format!(
            "w1_matching needs equal row counts, got {} and {}",
            n,
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "w1_matching: {}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Usage("w1_matching needs at least one row".into()));
    }
    if n > MATCHING_MAX_N {
        return Err(Error::Usage(format!(
            "w1_matching is limited to {MATCHING_MAX_N} rows (got {n}); \
             subsample both sides to equal smaller counts"
        )));
    }

    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = x.row_sq_dist(i, y, j).sqrt();
        }
    }
    let assignment = min_cost_assignment(&cost, n);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(MatchingResult { cost: total / n as f64, assignment })
}

/// Exact primal cost minus the dual estimate `mean f(X) - mean f(Y)`.
/// Non-negative (up to the Lipschitz tolerance of `f`) by weak duality.
pub fn dual_gap(f: &PotentialNet, x: &Tensor, y: &Tensor) -> Result<f64> {
    let matching = w1_matching(x, y)?;
    let dual = f.forward(x)?.mean() - f.forward(y)?.mean();
    Ok(matching.cost - dual)
}

/// Shortest augmenting path assignment (Jonker-Volgenant / Hungarian family)
/// on a dense `n x n` cost matrix. Returns the column assigned to each row.
fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    // Column n is a virtual start column; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![n; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 * n + j] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == n {
                break;
            }
        }
        // Augment along the recorded path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 0..n {
        if p[j] < n {
            assignment[p[j]] = j;
        }
    }
    assignment
}
