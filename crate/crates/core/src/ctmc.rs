//! Exact event-driven simulation of the interacting branching process.
//!
//! Holding times are exponential in the total exit rate of the current
//! state and the next state is chosen proportionally to its rate, so paths
//! follow the jump chain of the generator exactly (no leaping, no
//! discretization). Rates are recomputed at every event; they are cheap in
//! the support size and caching across states buys nothing at desk scale.
//!
//! Explosion cannot be simulated literally, so paths carry a cap: a path
//! whose state exceeds the cap stops with a [`Outcome::Capped`] flag, and
//! estimators report the capped fraction alongside their values.

use rand::Rng;

use crate::model::InteractionParams;
use crate::rng::{exp_rate, replicate_rng};
use crate::stats::{neumaier_sum, par_replicate_map, MCEstimate};
use crate::{Error, Result};

const DOMAIN_GEN_FUNC: u64 = 0x43_54_4d_43_01;

/// Why a simulated path stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Entered a state with no outgoing rates.
    AbsorbedAt { state: u64, time: f64 },
    /// Reached the time horizon.
    TimedOut { horizon: f64 },
    /// Exceeded the state cap (the explosion surrogate).
    Capped { cap: u64, time: f64 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::AbsorbedAt { .. } => "absorbed",
            Outcome::TimedOut { .. } => "timed_out",
            Outcome::Capped { .. } => "capped",
        }
    }
}

/// Event-indexed trajectory: `states[k]` is the population size after the
/// `k`-th event, entered at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathZ {
    pub times: Vec<f64>,
    pub states: Vec<u64>,
    pub outcome: Outcome,
}

impl PathZ {
    pub fn final_state(&self) -> u64 {
        *self
            .states
            .last()
            .expect("paths start with the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("paths start at time zero")
    }
}

/// One exact jump from `state`: holding time and next state, or `None` when
/// the state is absorbing.
fn step<R: Rng + ?Sized>(
    params: &InteractionParams,
    state: u64,
    rng: &mut R,
) -> Option<(f64, u64)> {
    let rates = params.transition_rates(state);
    if rates.is_empty() {
        return None;
    }
    let total: f64 = rates.iter().map(|e| e.1).sum();
    let dt = exp_rate(rng, total);
    let mut u = rng.random::<f64>() * total;
    let mut next = rates[rates.len() - 1].0;
    for &(target, rate) in &rates {
        if u < rate {
            next = target;
            break;
        }
        u -= rate;
    }
    Some((dt, next))
}

/// Exact simulation of the process from `n0` until absorption, the horizon,
/// or the first state above `cap`.
pub fn simulate_z<R: Rng + ?Sized>(
    params: &InteractionParams,
    n0: u64,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> PathZ {
    assert!(horizon > 0.0, "horizon must be positive");
    assert!(cap > n0, "cap must exceed the initial state");
    let mut times = vec![0.0];
    let mut states = vec![n0];
    let mut t = 0.0;
    let mut state = n0;
    let outcome = loop {
        match step(params, state, rng) {
            None => break Outcome::AbsorbedAt { state, time: t },
            Some((dt, next)) => {
                if t + dt > horizon {
                    break Outcome::TimedOut { horizon };
                }
                t += dt;
                state = next;
                times.push(t);
                states.push(state);
                if state > cap {
                    break Outcome::Capped { cap, time: t };
                }
            }
        }
    };
    PathZ {
        times,
        states,
        outcome,
    }
}

/// Terminal report of a walk that does not record its path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitOutcome {
    Hit { time: f64, state: u64 },
    TimedOut { horizon: f64, state: u64 },
    Capped { cap: u64, time: f64, state: u64 },
}

/// First entrance time of `targets` along a fresh simulated path.
pub fn hitting_time<R: Rng + ?Sized>(
    params: &InteractionParams,
    n0: u64,
    targets: &[u64],
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> HitOutcome {
    assert!(horizon > 0.0, "horizon must be positive");
    assert!(cap > n0, "cap must exceed the initial state");
    if targets.contains(&n0) {
        return HitOutcome::Hit {
            time: 0.0,
            state: n0,
        };
    }
    let mut t = 0.0;
    let mut state = n0;
    loop {
        match step(params, state, rng) {
            // Absorbed outside the target set: the walk can never hit.
            None => return HitOutcome::TimedOut { horizon, state },
            Some((dt, next)) => {
                if t + dt > horizon {
                    return HitOutcome::TimedOut { horizon, state };
                }
                t += dt;
                state = next;
                if targets.contains(&state) {
                    return HitOutcome::Hit { time: t, state };
                }
                if state > cap {
                    return HitOutcome::Capped {
                        cap,
                        time: t,
                        state,
                    };
                }
            }
        }
    }
}

/// State at time `horizon` without storing the path. The flag reports a cap
/// violation on the way.
pub(crate) fn final_state_fast<R: Rng + ?Sized>(
    params: &InteractionParams,
    n0: u64,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> (u64, bool) {
    let mut t = 0.0;
    let mut state = n0;
    loop {
        match step(params, state, rng) {
            None => return (state, false),
            Some((dt, next)) => {
                if t + dt > horizon {
                    return (state, false);
                }
                t += dt;
                state = next;
                if state > cap {
                    return (state, true);
                }
            }
        }
    }
}

/// States sampled at each time in `ts` (ascending) along one path.
/// Returns `None` for a path that exceeded the cap.
pub(crate) fn states_at_times<R: Rng + ?Sized>(
    params: &InteractionParams,
    n0: u64,
    ts: &[f64],
    cap: u64,
    rng: &mut R,
) -> Option<Vec<u64>> {
    let mut out = Vec::with_capacity(ts.len());
    let mut t = 0.0;
    let mut state = n0;
    let mut idx = 0;
    while idx < ts.len() {
        match step(params, state, rng) {
            None => break,
            Some((dt, next)) => {
                while idx < ts.len() && t + dt > ts[idx] {
                    out.push(state);
                    idx += 1;
                }
                t += dt;
                state = next;
                if state > cap {
                    return None;
                }
            }
        }
    }
    while idx < ts.len() {
        out.push(state);
        idx += 1;
    }
    Some(out)
}

/// Monte Carlo estimate of the generating function `E_n[x^{Z_t}]`.
///
/// Capped paths contribute 0; for `x < 1` their true contribution is at most
/// `x^cap`, so `x^cap · capped_fraction` bounds the bias and the estimate's
/// capped fraction makes the bound checkable by the caller.
pub fn mc_generating_function(
    params: &InteractionParams,
    n0: u64,
    t: f64,
    x: f64,
    replicates: u64,
    cap: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if replicates == 0 {
        return Err(Error::Domain("replicates must be at least 1".into()));
    }
    if t < 0.0 {
        return Err(Error::Domain("t must be nonnegative".into()));
    }
    if t == 0.0 {
        return Ok(MCEstimate::exact(x.powf(n0 as f64), replicates));
    }
    let samples = par_replicate_map(replicates, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_GEN_FUNC, r);
        let (state, capped) = final_state_fast(params, n0, t, cap, &mut rng);
        if capped {
            (0.0, 1u64)
        } else {
            (x.powf(state as f64), 0u64)
        }
    });
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let capped: u64 = samples.iter().map(|s| s.1).sum();
    Ok(MCEstimate::from_values(&values, capped))
}

/// Truncated generator with every jump beyond `n_max` lumped into `n_max`.
///
/// The diagonal is the compensated negative sum of each row's off-diagonal
/// rates, so rows sum to zero exactly rather than to rounding residue.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n_max: usize,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Off-diagonal entries `(j, q_{i,j})` of row `i`, sorted by column.
    pub fn off_diagonals(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Row sum with the same compensated reduction used to build the
    /// diagonal; exactly zero by construction.
    pub fn row_sum(&self, i: usize) -> f64 {
        neumaier_sum(self.rows[i].iter().map(|e| e.1)) + self.diag[i]
    }

    /// Max absolute row sum of the full matrix.
    pub fn inf_norm(&self) -> f64 {
        (0..=self.n_max)
            .map(|i| self.rows[i].iter().map(|e| e.1).sum::<f64>() + self.diag[i].abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the lumped truncation of the generator on states `0..=n_max`.
pub fn build_generator(params: &InteractionParams, n_max: usize) -> GeneratorMatrix {
    assert!(n_max >= 2, "truncation level must be at least 2");
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut diag = Vec::with_capacity(n_max + 1);
    for i in 0..=n_max as u64 {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (target, rate) in params.transition_rates(i) {
            let j = (target.min(n_max as u64)) as usize;
            if j == i as usize {
                // Lumped overflow pointing back at the row is a self-loop;
                // it does not change the law and is dropped.
                continue;
            }
            entries.push((j, rate));
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
    GeneratorMatrix { n_max, rows, diag }
}

/// CSV batch of simulation outcomes, header
/// `replicate,outcome,final_state,final_time`.
pub fn batch_csv(paths: &[PathZ]) -> String {
    let mut out = String::from("replicate,outcome,final_state,final_time\n");
    for (r, path) in paths.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r,
            path.outcome.label(),
            path.final_state(),
            path.final_time()
        ));
    }
    out
}

/// CSV batch of hitting-time outcomes, header
/// `replicate,outcome,final_state,final_time,hit_time`.
pub fn hitting_batch_csv(results: &[HitOutcome]) -> String {
    let mut out = String::from("replicate,outcome,final_state,final_time,hit_time\n");
    for (r, res) in results.iter().enumerate() {
        match res {
            HitOutcome::Hit { time, state } => {
                out.push_str(&format!("{r},hit,{state},{time},{time}\n"));
            }
            HitOutcome::TimedOut { horizon, state } => {
                out.push_str(&format!("{r},timed_out,{state},{horizon},\n"));
            }
            HitOutcome::Capped {
                cap: _,
                time,
                state,
            } => {
                out.push_str(&format!("{r},capped,{state},{time},\n"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LambdaMeasure;

    fn pure_death(d: f64) -> InteractionParams {
        InteractionParams::new(d, 0.0, 0.0, vec![], vec![], LambdaMeasure::empty()).unwrap()
    }

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

    #[test]
    fn zero_start_absorbs_immediately() {
        let mut rng = replicate_rng(1, 0, 0);
        let path = simulate_z(&geometric_model(), 0, 5.0, 100, &mut rng);
        assert_eq!(path.states, vec![0]);
        assert_eq!(
            path.outcome,
            Outcome::AbsorbedAt {
                state: 0,
                time: 0.0
            }
        );
    }

    #[test]
    fn pure_death_mean_absorption_time() {
        // Linear death chain from 3: E[τ₀] = 1 + 1/2 + 1/3.
        let params = pure_death(1.0);
        let replicates = 100_000u64;
        let values = par_replicate_map(replicates, |r| {
            let mut rng = replicate_rng(11, 77, r);
            match hitting_time(&params, 3, &[0], 100.0, 1_000, &mut rng) {
                HitOutcome::Hit { time, .. } => time,
                other => panic!("pure death must absorb, got {other:?}"),
            }
        });
        let est = MCEstimate::from_values(&values, 0);
        let expected = 1.0 + 0.5 + 1.0 / 3.0;
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.std_err,
            "mean {} vs {} (se {})",
            est.mean,
            expected,
            est.std_err
        );
    }

    #[test]
    fn paths_are_legal_and_deterministic() {
        let params = InteractionParams::new(
            0.5,
            1.0,
            0.5,
            vec![(1, 1.0), (2, 0.3)],
            vec![(1, 0.4)],
            LambdaMeasure::new(vec![(0.5, 0.6)]).unwrap(),
        )
        .unwrap();
        let mut rng = replicate_rng(42, 1, 9);
        let path = simulate_z(&params, 6, 4.0, 10_000, &mut rng);
        for k in 1..path.states.len() {
            let from = path.states[k - 1];
            let to = path.states[k];
            assert!(
                params.transition_rates(from).iter().any(|&(t, _)| t == to),
                "illegal jump {from} -> {to}"
            );
            assert!(path.times[k] > path.times[k - 1], "times must increase");
        }
        let mut rng2 = replicate_rng(42, 1, 9);
        let path2 = simulate_z(&params, 6, 4.0, 10_000, &mut rng2);
        assert_eq!(path, path2);
    }

    #[test]
    fn parity_is_conserved_on_even_channels() {
        let params = InteractionParams::new(
            0.0,
            0.0,
            1.0,
            vec![(2, 0.5)],
            vec![(2, 0.5)],
            LambdaMeasure::empty(),
        )
        .unwrap();
        for rep in 0..200 {
            let mut rng = replicate_rng(5, 3, rep);
            let path = simulate_z(&params, 7, 10.0, 10_000, &mut rng);
            assert!(path.states.iter().all(|s| s % 2 == 1));
        }
    }

    #[test]
    fn subcritical_paths_never_cap() {
        let params = geometric_model();
        for rep in 0..500 {
            let mut rng = replicate_rng(9, 4, rep);
            let path = simulate_z(&params, 10, 5.0, 10_000, &mut rng);
            assert!(!matches!(path.outcome, Outcome::Capped { .. }));
        }
    }

    #[test]
    fn generating_function_trivia() {
        let params = geometric_model();
        let est = mc_generating_function(&params, 4, 0.0, 0.3, 10, 1_000, 1).unwrap();
        assert_eq!(est.mean, 0.3f64.powi(4));
        assert_eq!(est.std_err, 0.0);

        let est = mc_generating_function(&params, 4, 1.5, 1.0, 2_000, 10_000, 1).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.capped_fraction, 0.0);
    }

    #[test]
    fn generating_function_pure_death_oracle() {
        // Binomial thinning: E₂[x^{Z_t}] = (1 − e^{−t}(1−x))².
        let params = pure_death(1.0);
        let t = std::f64::consts::LN_2;
        let est = mc_generating_function(&params, 2, t, 0.5, 100_000, 1_000, 33).unwrap();
        let expected = 0.5625;
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.std_err,
            "mean {} vs {expected} (se {})",
            est.mean,
            est.std_err
        );
    }

    #[test]
    fn hitting_time_immediate_when_started_inside() {
        let mut rng = replicate_rng(2, 2, 2);
        let res = hitting_time(&geometric_model(), 5, &[5], 1.0, 100, &mut rng);
        assert_eq!(
            res,
            HitOutcome::Hit {
                time: 0.0,
                state: 5
            }
        );
    }

    #[test]
    fn generator_pure_death_is_bidiagonal() {
        let gen = build_generator(&pure_death(1.0), 5);
        for i in 1..=5usize {
            assert_eq!(gen.off_diagonals(i), &[(i - 1, i as f64)]);
            assert_eq!(gen.diagonal(i), -(i as f64));
            assert_eq!(gen.row_sum(i), 0.0);
        }
        assert!(gen.off_diagonals(0).is_empty());
    }

    #[test]
    fn generator_lumps_overflow_and_drops_self_loops() {
        let params = InteractionParams::new(
            0.0,
            0.0,
            0.0,
            vec![(1, 1.0)],
            vec![],
            LambdaMeasure::empty(),
        )
        .unwrap();
        let gen = build_generator(&params, 2);
        // Row 2: the birth 2 -> 3 overflows onto 2 itself and is dropped.
        assert!(gen.off_diagonals(2).is_empty());
        assert_eq!(gen.row_sum(2), 0.0);
        // Row 1 keeps its birth into the boundary state.
        assert_eq!(gen.off_diagonals(1), &[(2, 1.0)]);
    }

    #[test]
    fn generator_rows_sum_to_zero_exactly() {
        let params = InteractionParams::new(
            0.3,
            1.7,
            0.2,
            vec![(1, 0.9), (3, 0.1)],
            vec![(2, 0.4)],
            LambdaMeasure::new(vec![(0.25, 0.5), (0.75, 0.125)]).unwrap(),
        )
        .unwrap();
        let gen = build_generator(&params, 60);
        for i in 0..=60 {
            assert_eq!(gen.row_sum(i), 0.0, "row {i} sum nonzero");
            assert!(gen.off_diagonals(i).iter().all(|&(_, r)| r > 0.0));
        }
    }

    #[test]
    fn batch_csv_headers() {
        let mut rng = replicate_rng(0, 0, 0);
        let path = simulate_z(&pure_death(1.0), 2, 10.0, 10, &mut rng);
        let csv = batch_csv(&[path]);
        assert!(csv.starts_with("replicate,outcome,final_state,final_time\n"));
        assert!(csv.contains("0,absorbed,0,"));
        let csv = hitting_batch_csv(&[HitOutcome::Hit {
            time: 1.25,
            state: 0,
        }]);
        assert!(csv.starts_with("replicate,outcome,final_state,final_time,hit_time\n"));
        assert!(csv.contains("0,hit,0,1.25,1.25"));
    }
}
