//! Stationary distributions, scale functions, fixation probabilities and
//! expected fixation times.
//!
//! Two independent routes to the same equilibrium quantities are kept
//! deliberately separate so they can cross-check each other: a numeric route
//! through the truncated generator (left null vector of the lumped matrix)
//! and, for the single-litter family `d = 0`, `π = {1: ρ}`, `b = {1: b}`,
//! `c > b`, a closed form via the generating function
//! `f(x) = (S(x) − S(0)) / (S(1) − S(0))` of the scale function
//! `S(x) = ∫₀ˣ exp{−∫_θ^y 2μ(z)/σ²(z) dz} dy`.

use serde::Serialize;

use crate::dual::{mu_raw, sigma2_raw};
use crate::linalg::{solve_refined, DenseMatrix};
use crate::model::{InteractionParams, LongTermClass, StartParity};
use crate::quad::{cumulative_simpson, integrate_refined, refined_grid};
use crate::stats::neumaier_sum;
use crate::{Error, Result};

/// Refinement depth of the quadrature grids (dyadic levels toward each
/// endpoint).
pub const DEFAULT_REFINE_LEVELS: u32 = 30;
/// Uniform panels per dyadic segment.
pub const DEFAULT_PANELS: u32 = 64;

/// Finite probability vector over population sizes starting at `offset`
/// (offset 1 when state 0 is inaccessible).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    offset: u64,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(offset: u64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty probability vector".into()));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Domain(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { offset, probs })
    }

    /// Empirical law of a sample of states.
    pub fn empirical(samples: &[u64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("empty sample".into()));
        }
        let max = *samples.iter().max().expect("nonempty");
        let mut counts = vec![0u64; (max + 1) as usize];
        for &s in samples {
            counts[s as usize] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            offset: 0,
            probs: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: u64) -> f64 {
        if state < self.offset {
            return 0.0;
        }
        self.probs
            .get((state - self.offset) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn max_state(&self) -> u64 {
        self.offset + self.probs.len() as u64 - 1
    }

    /// Total variation distance, half the L¹ distance over the union of
    /// supports.
    pub fn tv_distance(&self, other: &Distribution) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self.max_state().max(other.max_state());
        let diffs = (lo..=hi).map(|s| (self.prob(s) - other.prob(s)).abs());
        neumaier_sum(diffs) / 2.0
    }

    /// `Σ_k p_k x^{offset+k}`.
    pub fn generating_function(&self, x: f64) -> f64 {
        let terms = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p * x.powi((self.offset + k as u64) as i32));
        neumaier_sum(terms)
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(
            self.probs
                .iter()
                .enumerate()
                .map(|(k, &p)| p * (self.offset + k as u64) as f64),
        )
    }

    /// CSV export, header `k,probability`.
    pub fn csv(&self) -> String {
        let mut out = String::from("k,probability\n");
        for (k, &p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.offset + k as u64, p));
        }
        out
    }
}

/// States of the recurrent class kept by the truncation, plus the lumped
/// restricted generator over them.
struct Restricted {
    states: Vec<u64>,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

fn restricted_generator(params: &InteractionParams, states: &[u64]) -> Restricted {
    let top = *states.last().expect("nonempty state set");
    let index_of = |s: u64| -> usize {
        states
            .binary_search(&s)
            .unwrap_or_else(|_| panic!("target {s} escapes the recurrent class"))
    };
    let mut rows = Vec::with_capacity(states.len());
    let mut diag = Vec::with_capacity(states.len());
    for &s in states {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (target, rate) in params.transition_rates(s) {
            let lumped = target.min(top);
            if lumped == s {
                continue;
            }
            entries.push((index_of(lumped), rate));
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, rate) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += rate,
                _ => merged.push((j, rate)),
            }
        }
        diag.push(-neumaier_sum(merged.iter().map(|e| e.1)));
        rows.push(merged);
    }
    Restricted {
        states: states.to_vec(),
        rows,
        diag,
    }
}

fn recurrent_states(params: &InteractionParams, n_max: usize) -> Result<Vec<u64>> {
    match params.classify_long_term(StartParity::NotApplicable) {
        LongTermClass::UniqueStationary => Ok((1..=n_max as u64).collect()),
        _ => match params.classify_long_term(StartParity::Odd) {
            LongTermClass::UniqueStationaryOddParity => Ok((1..=n_max as u64).step_by(2).collect()),
            _ => Err(Error::Domain(
                "no stationary distribution: the parameters put the process \
                 in an absorbing or unclassified regime"
                    .into(),
            )),
        },
    }
}

/// Stationary distribution of the truncated lumped generator restricted to
/// the recurrent class (states ≥ 1, odd states only in the parity case).
///
/// Solves `μQ = 0`, `Σμ = 1` by LU with iterative refinement and verifies
/// the left-residual before returning.
pub fn stationary_numeric(params: &InteractionParams, n_max: usize) -> Result<Distribution> {
    if n_max < 50 {
        return Err(Error::Domain("truncation level must be at least 50".into()));
    }
    let states = recurrent_states(params, n_max)?;
    let restricted = restricted_generator(params, &states);
    let n = states.len();

    // Equations: balance at every state (columns of Q), with the first
    // balance equation replaced by the normalization Σμ = 1.
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        *a.at_mut(0, i) = 1.0;
    }
    for (i, row) in restricted.rows.iter().enumerate() {
        for &(j, rate) in row {
            if j != 0 {
                *a.at_mut(j, i) += rate;
            }
        }
        if i != 0 {
            *a.at_mut(i, i) += restricted.diag[i];
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;
    let mut mu = solve_refined(&a, &rhs)?;

    for v in mu.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::Numerical(format!(
                    "stationary solve produced a negative mass {v}"
                )));
            }
            *v = 0.0;
        }
    }
    let total = neumaier_sum(mu.iter().copied());
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical("stationary solve lost all mass".into()));
    }
    for v in mu.iter_mut() {
        *v /= total;
    }

    let dist = pack_distribution(&states, &mu)?;
    let residual = residual_on(&restricted, &dist);
    if residual > 1e-8 {
        return Err(Error::Numerical(format!(
            "stationary residual {residual} too large"
        )));
    }
    Ok(dist)
}

fn pack_distribution(states: &[u64], mass: &[f64]) -> Result<Distribution> {
    let offset = states[0];
    let top = *states.last().expect("nonempty");
    let mut probs = vec![0.0; (top - offset + 1) as usize];
    for (&s, &m) in states.iter().zip(mass) {
        probs[(s - offset) as usize] = m;
    }
    Distribution::new(offset, probs)
}

fn residual_on(restricted: &Restricted, dist: &Distribution) -> f64 {
    let n = restricted.states.len();
    let mu: Vec<f64> = restricted.states.iter().map(|&s| dist.prob(s)).collect();
    let mut col_sums = vec![0.0f64; n];
    for (i, row) in restricted.rows.iter().enumerate() {
        for &(j, rate) in row {
            col_sums[j] += mu[i] * rate;
        }
        col_sums[i] += mu[i] * restricted.diag[i];
    }
    let num = col_sums.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let norm = restricted
        .rows
        .iter()
        .zip(&restricted.diag)
        .map(|(row, &d)| row.iter().map(|e| e.1).sum::<f64>() + d.abs())
        .fold(0.0f64, f64::max);
    num / norm
}

/// Relative left-residual `‖μQ‖∞ / ‖Q‖∞` of a distribution against the
/// truncated system it was solved on.
pub fn stationary_residual(
    params: &InteractionParams,
    n_max: usize,
    dist: &Distribution,
) -> Result<f64> {
    let states = recurrent_states(params, n_max)?;
    Ok(residual_on(&restricted_generator(params, &states), dist))
}

/// Closed-form stationary law of the single-litter family, truncated at
/// `k_max` and renormalized.
#[derive(Debug, Clone)]
pub struct ClosedFormStationary {
    pub distribution: Distribution,
    /// Mass `1 − Σ_{k ≤ k_max} μ(k)` lost to truncation before
    /// renormalization.
    pub truncation_error: f64,
}

/// Stationary law `μ(k) = C · [Π_{j<k}(2ρ/b − 1 + j)] / k! · (b/c)^k` for
/// `b ≠ 2ρ`, and `μ(k) = (ln(1/(1 − b/c)))^{-1} (b/c)^k / k` at `b = 2ρ`.
///
/// The gamma ratio is evaluated through the product recurrence, which is
/// valid for `2ρ/b − 1 ∈ (−1, ∞)` and so covers both `b < 2ρ` and `b > 2ρ`.
pub fn stationary_closed_form(
    rho: f64,
    b1: f64,
    c: f64,
    k_max: usize,
) -> Result<ClosedFormStationary> {
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::Domain("rho must be positive".into()));
    }
    if !b1.is_finite() || b1 <= 0.0 {
        return Err(Error::Domain("b1 must be positive".into()));
    }
    if !c.is_finite() || c <= b1 {
        return Err(Error::Domain(format!(
            "subcriticality requires c > b1, got c = {c}, b1 = {b1}"
        )));
    }
    if k_max < 1 {
        return Err(Error::Domain("k_max must be at least 1".into()));
    }
    let q = b1 / c;
    let alpha = 2.0 * rho / b1;
    let mut weights = Vec::with_capacity(k_max);
    if (alpha - 1.0).abs() < 1e-9 {
        // Logarithmic family: μ(k) ∝ q^k / k.
        let norm = (1.0 / (1.0 - q)).ln().recip();
        let mut qk = 1.0;
        for k in 1..=k_max {
            qk *= q;
            weights.push(norm * qk / k as f64);
        }
    } else {
        let norm = ((1.0 - q).powf(1.0 - alpha) - 1.0).recip();
        let mut term = 1.0;
        for k in 1..=k_max {
            term *= (alpha - 1.0 + (k - 1) as f64) * q / k as f64;
            weights.push(norm * term);
        }
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Numerical(
            "closed-form stationary weights left [0, ∞)".into(),
        ));
    }
    let partial = neumaier_sum(weights.iter().copied());
    let truncation_error = 1.0 - partial;
    let probs: Vec<f64> = weights.iter().map(|&w| w / partial).collect();
    Ok(ClosedFormStationary {
        distribution: Distribution::new(1, probs)?,
        truncation_error,
    })
}

/// Numerical scale function sampled on a boundary-refined grid, with a
/// monotone piecewise-cubic interpolation contract between nodes.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    grid: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl ScaleTable {
    fn from_data(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 3 {
            return Err(Error::Numerical("scale table needs a proper grid".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Numerical(
                "scale function must be strictly increasing".into(),
            ));
        }
        let derivs = pchip_derivatives(&grid, &values);
        Ok(Self {
            grid,
            values,
            derivs,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Monotone cubic interpolation of `S(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.grid[0], *self.grid.last().unwrap());
        let hi = self.grid.partition_point(|&g| g < x).max(1);
        let i = (hi - 1).min(self.grid.len() - 2);
        let h = self.grid[i + 1] - self.grid[i];
        let s = (x - self.grid[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i], self.derivs[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }

    /// `(S(x) − S(0)) / (S(1) − S(0))`, independent of the reference point
    /// in the inner integral.
    pub fn ratio(&self, x: f64) -> f64 {
        let s0 = self.values[0];
        let s1 = *self.values.last().unwrap();
        (self.eval(x) - s0) / (s1 - s0)
    }

    /// CSV export, header `x,S`.
    pub fn csv(&self) -> String {
        let mut out = String::from("x,S\n");
        for (x, s) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{x},{s}\n"));
        }
        out
    }
}

fn pchip_derivatives(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = values
        .windows(2)
        .zip(&h)
        .map(|(w, &hi)| (w[1] - w[0]) / hi)
        .collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d1 * d0 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

fn require_no_annihilation(params: &InteractionParams) -> Result<()> {
    if params.a() > 0.0 {
        return Err(Error::Unsupported(
            "analysis of the dual requires no annihilation (a = 0)".into(),
        ));
    }
    Ok(())
}

/// Numerical scale function `S(x) = ∫₀ˣ exp{−∫_θ^y 2μ/σ² dz} dy` with
/// `θ = 1/2`; the reference point shifts `S` by a multiplicative constant
/// that every consumer's ratio absorbs.
///
/// The integrand `2μ/σ²` is bounded on `(0, 1)` with finite one-sided
/// limits when `d = 0` and `ς < 0`; the endpoint values are the ratios of
/// the lowest-order polynomial coefficients.
pub fn scale_function(
    params: &InteractionParams,
    refine_levels: u32,
    panels: u32,
) -> Result<ScaleTable> {
    require_no_annihilation(params)?;
    if params.d() != 0.0 {
        return Err(Error::Domain(
            "the scale route requires no death/mutation (d = 0)".into(),
        ));
    }
    let derived = params.derive();
    if derived.sigma_coop >= 0.0 {
        return Err(Error::Domain(
            "the scale function requires the subcritical cooperative regime".into(),
        ));
    }
    let c = params.c();
    let sum_ipi: f64 = params.pi().iter().map(|&(i, r)| i as f64 * r).sum();
    let r_at_zero = -2.0 * derived.rho / c;
    let r_at_one = 2.0 * sum_ipi / derived.sigma_coop;

    let degenerate = std::cell::Cell::new(false);
    let ratio = |z: f64| -> f64 {
        if z <= 0.0 {
            return r_at_zero;
        }
        if z >= 1.0 {
            return r_at_one;
        }
        let s2 = sigma2_raw(z, params);
        if s2 <= 0.0 {
            degenerate.set(true);
            return 0.0;
        }
        2.0 * mu_raw(z, params) / s2
    };

    let grid = refined_grid(refine_levels, panels);
    let inner = cumulative_simpson(ratio, &grid);
    if degenerate.get() {
        return Err(Error::Numerical(
            "sigma² vanished inside (0, 1); scale function undefined".into(),
        ));
    }
    let half_idx = grid
        .iter()
        .position(|&g| g == 0.5)
        .expect("0.5 is a segment boundary of the refined grid");
    let reference = inner[half_idx];
    let weights: Vec<f64> = inner.iter().map(|&v| (-(v - reference)).exp()).collect();

    // Outer cumulative integral on every second node; panel counts are even
    // so Simpson triples never straddle a segment boundary.
    let mut s_grid = Vec::with_capacity(grid.len() / 2 + 1);
    let mut s_values = Vec::with_capacity(grid.len() / 2 + 1);
    s_grid.push(grid[0]);
    s_values.push(0.0);
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for i in (0..grid.len() - 2).step_by(2) {
        let piece =
            (grid[i + 2] - grid[i]) / 6.0 * (weights[i] + 4.0 * weights[i + 1] + weights[i + 2]);
        let t = acc + piece;
        if acc.abs() >= piece.abs() {
            comp += (acc - t) + piece;
        } else {
            comp += (piece - t) + acc;
        }
        acc = t;
        s_grid.push(grid[i + 2]);
        s_values.push(acc + comp);
    }
    ScaleTable::from_data(s_grid, s_values)
}

/// Scale function on the default quadrature grid.
pub fn scale_function_default(params: &InteractionParams) -> Result<ScaleTable> {
    scale_function(params, DEFAULT_REFINE_LEVELS, DEFAULT_PANELS)
}

/// Probability that the dual fixes at 1 from `x`, equal to the long-time
/// limit of `P_x(X_t = 1)`: the scale ratio when `ρ > 0`, and `x` itself in
/// the driftless martingale case `ρ = 0`.
pub fn fixation_probability(params: &InteractionParams, x: f64) -> Result<f64> {
    require_no_annihilation(params)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if !params.lambda().is_empty() {
        return Err(Error::Domain(
            "the scale route requires no catastrophes".into(),
        ));
    }
    if params.d() > 0.0 {
        return Err(Error::Unsupported(
            "with d > 0 fixation at 1 is certain; use dual_fixation_limit".into(),
        ));
    }
    if params.derive().sigma_coop >= 0.0 {
        return Err(Error::Domain(
            "fixation probability requires the subcritical cooperative regime".into(),
        ));
    }
    if params.derive().rho == 0.0 {
        return Ok(x);
    }
    Ok(scale_function_default(params)?.ratio(x))
}

/// Expected fixation time `E_x[T] = 2∫ G(x,y)/σ²(y) dy` in the
/// pure-martingale case (`d = 0`, `π = ∅`, `Λ = ∅`, `ς < 0`), with
/// `G(x,y) = x(1−y)` for `x ≤ y` and `y(1−x)` for `y ≤ x`.
pub fn fixation_time_green(params: &InteractionParams, x: f64) -> Result<f64> {
    require_no_annihilation(params)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if params.d() != 0.0 || !params.pi().is_empty() || !params.lambda().is_empty() {
        return Err(Error::Domain(
            "the Green-function route covers the pure-martingale case only \
             (d = 0, no branching, no catastrophes)"
                .into(),
        ));
    }
    let derived = params.derive();
    if derived.sigma_coop >= 0.0 {
        return Err(Error::Domain(
            "expected fixation time requires the subcritical cooperative regime".into(),
        ));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    let c = params.c();
    // σ²(y) ≥ (−ς)·y(1−y) > 0 inside; endpoint values are the limits of
    // G/σ², finite because G vanishes linearly where σ² does.
    let left = integrate_refined(
        |y| {
            if y <= 0.0 {
                (1.0 - x) / c
            } else {
                y * (1.0 - x) / sigma2_raw(y, params)
            }
        },
        0.0,
        x,
        DEFAULT_REFINE_LEVELS,
        DEFAULT_PANELS,
    );
    let right = integrate_refined(
        |y| {
            if y >= 1.0 {
                x / (-derived.sigma_coop)
            } else {
                x * (1.0 - y) / sigma2_raw(y, params)
            }
        },
        x,
        1.0,
        DEFAULT_REFINE_LEVELS,
        DEFAULT_PANELS,
    );
    Ok(2.0 * (left + right))
}

/// Entropy upper bound on the expected fixation time:
/// `−2((1−x)ln(1−x) + x ln x) / (c − Σ i·b_i)`.
pub fn fixation_time_bound(x: f64, c: f64, b: &[(u32, f64)]) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let denom = c - b.iter().map(|&(i, r)| i as f64 * r).sum::<f64>();
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "entropy bound requires c − Σ i·b_i > 0, got {denom}"
        )));
    }
    let entropy = |v: f64| if v == 0.0 { 0.0 } else { v * v.ln() };
    Ok(-2.0 * (entropy(x) + entropy(1.0 - x)) / denom)
}

/// Long-time probability that the dual sits at 1: `x` in the driftless
/// case, the stationary generating function when `d = 0`, `ρ > 0`, and 1
/// when `d > 0`.
pub fn dual_fixation_limit(params: &InteractionParams, x: f64, n_max: usize) -> Result<f64> {
    require_no_annihilation(params)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if params.derive().sigma_coop >= 0.0 {
        return Err(Error::Domain(
            "the fixation limit requires the subcritical cooperative regime".into(),
        ));
    }
    if params.d() > 0.0 {
        return Ok(1.0);
    }
    if params.derive().rho == 0.0 {
        return Ok(x);
    }
    let stationary = stationary_numeric(params, n_max)?;
    Ok(stationary.generating_function(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LambdaMeasure;

    fn geometric_model() -> InteractionParams {
        InteractionParams::new(
            0.0,
            2.0,
            0.0,
            vec![(1, 1.0)],
            vec![(1, 1.0)],
            LambdaMeasure::empty(),
        )
        .unwrap()
    }

    fn geometric_reference(k_max: usize) -> Distribution {
        let probs: Vec<f64> = (1..=k_max).map(|k| 0.5f64.powi(k as i32)).collect();
        let total = neumaier_sum(probs.iter().copied());
        Distribution::new(1, probs.iter().map(|&p| p / total).collect()).unwrap()
    }

    #[test]
    fn distribution_basics() {
        let d = Distribution::new(1, vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(d.prob(0), 0.0);
        assert_eq!(d.prob(1), 0.5);
        assert_eq!(d.prob(4), 0.0);
        assert!((d.generating_function(1.0) - 1.0).abs() < 1e-12);
        assert!((d.mean() - 1.75).abs() < 1e-12);
        assert!(Distribution::new(0, vec![0.5, 0.4]).is_err());

        let e = Distribution::new(1, vec![0.25, 0.5, 0.25]).unwrap();
        assert!((d.tv_distance(&e) - 0.25).abs() < 1e-12);
        assert_eq!(d.tv_distance(&d), 0.0);
    }

    #[test]
    fn empirical_distribution_counts() {
        let d = Distribution::empirical(&[1, 1, 2, 4]).unwrap();
        assert_eq!(d.prob(1), 0.5);
        assert_eq!(d.prob(3), 0.0);
        assert_eq!(d.prob(4), 0.25);
    }

    #[test]
    fn stationary_numeric_matches_geometric_law() {
        let dist = stationary_numeric(&geometric_model(), 200).unwrap();
        let reference = geometric_reference(200);
        let tv = dist.tv_distance(&reference);
        assert!(tv < 1e-3, "TV to geometric law {tv}");
        let residual = stationary_residual(&geometric_model(), 200, &dist).unwrap();
        assert!(residual <= 1e-10, "left residual {residual}");
    }

    #[test]
    fn stationary_vector_annihilates_the_full_truncated_generator() {
        // Independent route: the restricted solve must also be a left null
        // vector of the full lumped matrix built by the simulator module.
        let params = geometric_model();
        let n_max = 120;
        let gen = crate::ctmc::build_generator(&params, n_max);
        let dist = stationary_numeric(&params, n_max).unwrap();
        let mut cols = vec![0.0f64; n_max + 1];
        for i in 0..=n_max {
            let mu_i = dist.prob(i as u64);
            for &(j, rate) in gen.off_diagonals(i) {
                cols[j] += mu_i * rate;
            }
            cols[i] += mu_i * gen.diagonal(i);
        }
        let residual = cols.iter().fold(0.0f64, |a, &v| a.max(v.abs())) / gen.inf_norm();
        assert!(residual <= 1e-10, "full-generator residual {residual}");
    }

    #[test]
    fn stationary_numeric_truncation_is_converged() {
        let d200 = stationary_numeric(&geometric_model(), 200).unwrap();
        let d400 = stationary_numeric(&geometric_model(), 400).unwrap();
        assert!(d200.tv_distance(&d400) <= 1e-6);
    }

    #[test]
    fn stationary_numeric_rejects_absorbing_regimes() {
        let pure_death =
            InteractionParams::new(1.0, 1.0, 0.0, vec![], vec![], LambdaMeasure::empty()).unwrap();
        assert!(matches!(
            stationary_numeric(&pure_death, 100),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stationary_numeric_odd_parity_class() {
        let p = InteractionParams::new(
            0.0,
            0.0,
            1.0,
            vec![(2, 1.0)],
            vec![(2, 0.5)],
            LambdaMeasure::empty(),
        )
        .unwrap();
        let dist = stationary_numeric(&p, 201).unwrap();
        assert_eq!(dist.offset(), 1);
        for state in (2..=dist.max_state()).step_by(2) {
            assert_eq!(dist.prob(state), 0.0, "even state {state} carries mass");
        }
        assert!(dist.prob(1) > 0.0);
        let residual = stationary_residual(&p, 201, &dist).unwrap();
        assert!(residual <= 1e-10, "left residual {residual}");
    }

    #[test]
    fn closed_form_geometric_case() {
        let out = stationary_closed_form(1.0, 1.0, 2.0, 60).unwrap();
        for k in 1..=10u64 {
            let expected = 0.5f64.powi(k as i32);
            assert!(
                (out.distribution.prob(k) - expected).abs() < 1e-12,
                "mu({k}) = {}",
                out.distribution.prob(k)
            );
        }
        assert!(out.truncation_error.abs() < 1e-15);
    }

    #[test]
    fn closed_form_logarithmic_case() {
        let out = stationary_closed_form(1.0, 2.0, 4.0, 200).unwrap();
        let expected = 0.5 / std::f64::consts::LN_2;
        assert!(
            (out.distribution.prob(1) - expected).abs() < 1e-10,
            "mu(1) = {}",
            out.distribution.prob(1)
        );
    }

    #[test]
    fn closed_form_beta_geometric_case_is_a_law() {
        // b > 2ρ: the product recurrence starts negative and the constant
        // flips the sign back.
        let out = stationary_closed_form(0.25, 1.0, 2.0, 400).unwrap();
        assert!(out.distribution.probs().iter().all(|&p| p >= 0.0));
        assert!(out.truncation_error.abs() < 1e-6);
    }

    #[test]
    fn closed_form_domain_errors() {
        assert!(stationary_closed_form(0.0, 1.0, 2.0, 50).is_err());
        assert!(stationary_closed_form(1.0, 2.0, 2.0, 50).is_err());
        assert!(stationary_closed_form(1.0, 0.0, 2.0, 50).is_err());
    }

    #[test]
    fn scale_is_identity_for_zero_drift() {
        let p = InteractionParams::new(
            0.0,
            1.0,
            0.0,
            vec![],
            vec![(1, 0.5)],
            LambdaMeasure::empty(),
        )
        .unwrap();
        let table = scale_function(&p, 20, 16).unwrap();
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            assert!(
                (table.ratio(x) - x).abs() < 1e-10,
                "zero-drift scale ratio at {x}: {}",
                table.ratio(x)
            );
        }
    }

    #[test]
    fn scale_matches_worked_example_generating_function() {
        let table = scale_function_default(&geometric_model()).unwrap();
        for k in 1..=9 {
            let x = k as f64 / 10.0;
            let f = (x / 2.0) / (1.0 - x / 2.0);
            assert!(
                (table.ratio(x) - f).abs() <= 1e-4,
                "scale ratio at {x}: {} vs {f}",
                table.ratio(x)
            );
        }
        assert!(table.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fixation_probability_routes() {
        let martingale =
            InteractionParams::new(0.0, 1.0, 0.0, vec![], vec![], LambdaMeasure::empty()).unwrap();
        assert_eq!(fixation_probability(&martingale, 0.37).unwrap(), 0.37);
        assert_eq!(fixation_probability(&martingale, 0.0).unwrap(), 0.0);
        assert_eq!(fixation_probability(&martingale, 1.0).unwrap(), 1.0);

        let f = fixation_probability(&geometric_model(), 0.5).unwrap();
        assert!((f - 1.0 / 3.0).abs() <= 1e-4, "f(0.5) = {f}");

        let with_death = InteractionParams::new(
            1.0,
            2.0,
            0.0,
            vec![],
            vec![(1, 1.0)],
            LambdaMeasure::empty(),
        )
        .unwrap();
        assert!(matches!(
            fixation_probability(&with_death, 0.5),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn green_function_time_exact_case() {
        let p =
            InteractionParams::new(0.0, 1.0, 0.0, vec![], vec![], LambdaMeasure::empty()).unwrap();
        let t = fixation_time_green(&p, 0.5).unwrap();
        let expected = 2.0 * std::f64::consts::LN_2;
        assert!((t - expected).abs() < 1e-6, "green time {t}");
        assert_eq!(fixation_time_green(&p, 0.0).unwrap(), 0.0);
        assert_eq!(fixation_time_green(&p, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn entropy_bound_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((fixation_time_bound(0.5, 1.0, &[]).unwrap() - 2.0 * ln2).abs() < 1e-12);
        assert_eq!(fixation_time_bound(0.0, 1.0, &[]).unwrap(), 0.0);
        assert!((fixation_time_bound(0.5, 1.0, &[(1, 0.5)]).unwrap() - 4.0 * ln2).abs() < 1e-12);
        assert!(fixation_time_bound(0.5, 1.0, &[(1, 1.0)]).is_err());
    }

    #[test]
    fn green_time_respects_entropy_bound() {
        for &(c, b) in &[(1.0, 0.5), (2.0, 1.0)] {
            let p =
                InteractionParams::new(0.0, c, 0.0, vec![], vec![(1, b)], LambdaMeasure::empty())
                    .unwrap();
            for k in 1..=9 {
                let x = k as f64 / 10.0;
                let green = fixation_time_green(&p, x).unwrap();
                let bound = fixation_time_bound(x, c, &[(1, b)]).unwrap();
                assert!(
                    green < bound,
                    "green {green} not strictly below bound {bound} at x={x}"
                );
            }
        }
    }

    #[test]
    fn dual_fixation_limit_cases() {
        let martingale =
            InteractionParams::new(0.0, 1.0, 0.0, vec![], vec![], LambdaMeasure::empty()).unwrap();
        assert_eq!(dual_fixation_limit(&martingale, 0.8, 200).unwrap(), 0.8);

        let lim = dual_fixation_limit(&geometric_model(), 0.5, 200).unwrap();
        assert!((lim - 1.0 / 3.0).abs() < 1e-3, "case-ii limit {lim}");

        let with_death = InteractionParams::new(
            1.0,
            2.0,
            0.0,
            vec![],
            vec![(1, 1.0)],
            LambdaMeasure::empty(),
        )
        .unwrap();
        assert_eq!(dual_fixation_limit(&with_death, 0.5, 200).unwrap(), 1.0);
    }

    #[test]
    fn consistency_triangle_on_worked_example() {
        let params = geometric_model();
        let numeric = stationary_numeric(&params, 200).unwrap();
        let table = scale_function_default(&params).unwrap();
        for k in 1..=9 {
            let x = k as f64 / 10.0;
            let f_closed = (x / 2.0) / (1.0 - x / 2.0);
            let f_numeric = numeric.generating_function(x);
            let f_scale = table.ratio(x);
            assert!((f_numeric - f_scale).abs() < 1e-3);
            assert!((f_numeric - f_closed).abs() < 1e-3);
            assert!((f_scale - f_closed).abs() < 1e-3);
        }
    }

    #[test]
    fn distribution_csv_header() {
        let d = Distribution::new(1, vec![0.5, 0.5]).unwrap();
        assert!(d.csv().starts_with("k,probability\n1,0.5\n2,0.5\n"));
    }
}
