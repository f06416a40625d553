//! Composite Simpson quadrature on grids geometrically refined toward both
//! endpoints. The integrands here are bounded on the open interval with
//! finite one-sided limits, but their derivatives can be large near the
//! boundary, so the refinement carries the accuracy.

use crate::stats::neumaier_sum;

/// Grid on `[0, 1]`: dyadic segment boundaries `2^{−levels} .. 1/2` from the
/// left, mirrored from the right, each segment cut into `panels` uniform
/// subintervals.
pub(crate) fn refined_grid(levels: u32, panels: u32) -> Vec<f64> {
    assert!(levels >= 1 && panels >= 2 && panels.is_multiple_of(2));
    let mut bounds = vec![0.0];
    for j in (1..=levels).rev() {
        bounds.push(0.5f64.powi(j as i32));
    }
    for j in 2..=levels {
        bounds.push(1.0 - 0.5f64.powi(j as i32));
    }
    bounds.push(1.0);
    bounds.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let mut grid = vec![0.0];
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for k in 1..=panels {
            let frac = k as f64 / panels as f64;
            grid.push(if k == panels {
                hi
            } else {
                lo + (hi - lo) * frac
            });
        }
    }
    grid
}

/// Cumulative integral of `f` at every grid node, by per-subinterval Simpson
/// with a midpoint evaluation. `out[i] = ∫_{grid[0]}^{grid[i]} f`.
pub(crate) fn cumulative_simpson(f: impl Fn(f64) -> f64, grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    out.push(0.0);
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    let mut f_left = f(grid[0]);
    for w in grid.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let f_mid = f(0.5 * (lo + hi));
        let f_right = f(hi);
        let piece = (hi - lo) / 6.0 * (f_left + 4.0 * f_mid + f_right);
        // Neumaier step keeps long cumulative sums tight.
        let t = acc + piece;
        if acc.abs() >= piece.abs() {
            comp += (acc - t) + piece;
        } else {
            comp += (piece - t) + acc;
        }
        acc = t;
        out.push(acc + comp);
        f_left = f_right;
    }
    out
}

/// Definite integral of `f` over `[a, b]` on a both-ends-refined grid.
pub(crate) fn integrate_refined(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    levels: u32,
    panels: u32,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = b - a;
    let grid = refined_grid(levels, panels);
    let pieces: Vec<f64> = grid
        .windows(2)
        .map(|w| {
            let lo = a + scale * w[0];
            let hi = a + scale * w[1];
            (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi))
        })
        .collect();
    neumaier_sum(pieces)
}
