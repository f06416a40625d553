//! Statistical verification probes.
//!
//! Each probe runs the two simulators (or one simulator against an analytic
//! target) under deterministic per-replicate streams and reduces in fixed
//! order, so every verdict is reproducible bit for bit from the
//! configuration and master seed. Pass thresholds (z ≤ 3 for two-sample
//! checks, TV ≤ 0.05 for convergence, plateau within 3 combined SE) are
//! Monte Carlo practice, with multiplicity noted in the summaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{stationary_numeric, Distribution};
use crate::ctmc::{self, simulate_z, HitOutcome, Outcome};
use crate::dual::{moment_pair_sample, DualDynamics};
use crate::model::{InteractionParams, LambdaMeasure, LongTermClass, StartParity};
use crate::rng::{replicate_rng, splitmix64};
use crate::stats::{par_replicate_map, z_score, MCEstimate};
use crate::{Error, Result};

const DOMAIN_DUALITY_X: u64 = 0x48_41_52_01;
const DOMAIN_DUALITY_Z: u64 = 0x48_41_52_02;
const DOMAIN_CDI: u64 = 0x48_41_52_03;
const DOMAIN_EXPLOSION: u64 = 0x48_41_52_04;
const DOMAIN_UNIFORM: u64 = 0x48_41_52_05;
const DOMAIN_PARITY: u64 = 0x48_41_52_06;

/// Two-sided comparison of `E_x[X_t^n]` (diffusion side, `lhs`) against
/// `E_n[x^{Z_t}]` (integer side, `rhs`).
///
/// The verdict is a pure function of the recorded fields: the z-score must
/// be at most 3 and both bias controls — the certifiable cap bound
/// `x^cap · capped_fraction` on the integer side and the coupled
/// coarse-step estimate of the Euler bias on the diffusion side — must sit
/// below one combined standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub x: f64,
    pub n: u32,
    pub t: f64,
    pub dt: f64,
    pub cap: u64,
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub z_score: f64,
    /// Mean offset of a coupled 2·dt companion path; first-order estimate of
    /// the fine path's discretization bias.
    pub dt_bias_estimate: f64,
    pub dt_bias_std_err: f64,
    /// `x^cap · capped_fraction`, a hard bound on the mass dropped with
    /// capped paths.
    pub cap_bias_bound: f64,
    pub pass: bool,
}

fn verdict(z: f64, cap_bias: f64, dt_bias: f64, combined_se: f64) -> bool {
    let bias_ok = |b: f64| b == 0.0 || b <= combined_se;
    z <= 3.0 && bias_ok(cap_bias) && bias_ok(dt_bias.abs())
}

/// Moment-duality check `E_x[X_t^n] = E_n[x^{Z_t}]` with independent
/// streams on the two sides.
#[allow(clippy::too_many_arguments)]
pub fn duality_check(
    params: &InteractionParams,
    x: f64,
    n: u32,
    t: f64,
    replicates: u64,
    dt: f64,
    cap: u64,
    seed: u64,
) -> Result<DualityReport> {
    duality_check_mismatched(params, params, x, n, t, replicates, dt, cap, seed)
}

/// Duality check with different parameters on the two sides.
///
/// Self-test hook: feeding the integer side a perturbed parameter set must
/// drive the z-score far beyond the pass threshold, demonstrating that the
/// harness can detect a wrong implementation.
#[allow(clippy::too_many_arguments)]
pub fn duality_check_mismatched(
    params_x: &InteractionParams,
    params_z: &InteractionParams,
    x: f64,
    n: u32,
    t: f64,
    replicates: u64,
    dt: f64,
    cap: u64,
    seed: u64,
) -> Result<DualityReport> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::Domain("t must be nonnegative and finite".into()));
    }
    if replicates == 0 {
        return Err(Error::Domain("replicates must be at least 1".into()));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let dynamics = DualDynamics::new(params_x)?;

    if t == 0.0 {
        let value = x.powi(n as i32);
        return Ok(DualityReport {
            x,
            n,
            t,
            dt,
            cap,
            lhs: MCEstimate::exact(value, replicates),
            rhs: MCEstimate::exact(value, replicates),
            z_score: 0.0,
            dt_bias_estimate: 0.0,
            dt_bias_std_err: 0.0,
            cap_bias_bound: 0.0,
            pass: true,
        });
    }

    let pairs = par_replicate_map(replicates, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_DUALITY_X, r);
        moment_pair_sample(&dynamics, x, t, n, dt, &mut rng)
    });
    let fine: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    let lhs = MCEstimate::from_values(&fine, 0);
    let bias = MCEstimate::from_values(&diffs, 0);

    let z_samples = par_replicate_map(replicates, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_DUALITY_Z, r);
        let (state, capped) = ctmc::final_state_fast(params_z, n as u64, t, cap, &mut rng);
        if capped {
            (0.0, 1u64)
        } else {
            (x.powf(state as f64), 0u64)
        }
    });
    let values: Vec<f64> = z_samples.iter().map(|s| s.0).collect();
    let capped: u64 = z_samples.iter().map(|s| s.1).sum();
    let rhs = MCEstimate::from_values(&values, capped);

    let z = z_score(&lhs, &rhs);
    let combined = lhs.std_err.hypot(rhs.std_err);
    let cap_bias = x.powf(cap as f64) * rhs.capped_fraction;
    Ok(DualityReport {
        x,
        n,
        t,
        dt,
        cap,
        lhs,
        rhs,
        z_score: z,
        dt_bias_estimate: bias.mean,
        dt_bias_std_err: bias.std_err,
        cap_bias_bound: cap_bias,
        pass: verdict(z, cap_bias, bias.mean, combined),
    })
}

/// The five models of the standard duality grid.
pub fn standard_grid_models() -> Vec<(String, InteractionParams)> {
    let make = |d: f64, c: f64, pi1: f64, b1: f64, atom: Option<(f64, f64)>| {
        let lambda = match atom {
            Some(a) => LambdaMeasure::new(vec![a]).expect("valid atom"),
            None => LambdaMeasure::empty(),
        };
        let pi = if pi1 > 0.0 { vec![(1, pi1)] } else { vec![] };
        let b = if b1 > 0.0 { vec![(1, b1)] } else { vec![] };
        InteractionParams::new(d, c, 0.0, pi, b, lambda).expect("valid grid model")
    };
    vec![
        ("pure_death".into(), make(1.0, 0.0, 0.0, 0.0, None)),
        ("logistic".into(), make(0.0, 1.0, 1.0, 0.0, None)),
        ("braco".into(), make(0.5, 1.0, 1.0, 0.0, None)),
        ("cooperative".into(), make(0.0, 2.0, 1.0, 1.0, None)),
        (
            "catastrophic".into(),
            make(0.0, 2.0, 1.0, 1.0, Some((0.5, 0.4))),
        ),
    ]
}

/// One cell of the duality grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub model: String,
    pub report: DualityReport,
}

/// Runs the full standard grid: five models × x ∈ {0.2, 0.5, 0.8} ×
/// n ∈ {1, 2, 5} × t ∈ {0.5, 1, 2}.
pub fn duality_grid(replicates: u64, dt: f64, cap: u64, seed: u64) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for (name, params) in standard_grid_models() {
        for &x in &[0.2, 0.5, 0.8] {
            for &n in &[1u32, 2, 5] {
                for &t in &[0.5, 1.0, 2.0] {
                    let cell_seed = splitmix64(seed ^ splitmix64(cell_index));
                    let report = duality_check(&params, x, n, t, replicates, dt, cap, cell_seed)?;
                    cells.push(GridCell {
                        model: name.clone(),
                        report,
                    });
                    cell_index += 1;
                }
            }
        }
    }
    Ok(cells)
}

/// Probe verdicts distinguish a failed check from a sweep whose hypothesis
/// the probe does not cover (conjectural territory).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotAsserted,
}

/// One sweep point of a probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeCell {
    pub sweep: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub replicates: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

/// Sweep report with per-cell estimates, a verdict and a readable summary.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub probe: String,
    pub params_digest: String,
    pub seed: u64,
    pub cells: Vec<ProbeCell>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub summary: String,
}

impl ProbeReport {
    /// CSV of per-cell estimates, header `sweep,estimate,std_err,replicates`.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("sweep,estimate,std_err,replicates\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                cell.sweep, cell.estimate, cell.std_err, cell.replicates
            ));
        }
        out
    }
}

fn digest_of(params: &InteractionParams) -> String {
    crate::digest::digest_value(&params.to_json_value())
}

fn plain_cell(sweep: f64, est: &MCEstimate) -> ProbeCell {
    ProbeCell {
        sweep,
        estimate: est.mean,
        std_err: est.std_err,
        replicates: est.replicates,
        extra: BTreeMap::new(),
    }
}

/// Coming-down-from-infinity probe: `E_n[τ₁]` over a ladder of starting
/// sizes must plateau (each estimate within 3 combined SE of the largest-n
/// estimate) rather than grow, and the plateau sits under the ceiling
/// `2/μ(1)` recorded in the metadata.
pub fn cdi_probe(
    params: &InteractionParams,
    n_list: &[u64],
    horizon: f64,
    cap: u64,
    replicates: u64,
    seed: u64,
) -> Result<ProbeReport> {
    if params.classify_long_term(StartParity::NotApplicable) != LongTermClass::UniqueStationary {
        return Err(Error::Domain(
            "the coming-down probe needs the unique-stationary regime \
             (a = 0, d = 0, rho > 0, subcritical)"
                .into(),
        ));
    }
    if n_list.is_empty() {
        return Err(Error::Domain("n_list must be nonempty".into()));
    }
    let mut cells = Vec::new();
    let mut timeouts = 0u64;
    for (idx, &n0) in n_list.iter().enumerate() {
        let values = par_replicate_map(replicates, |r| {
            let mut rng = replicate_rng(seed, DOMAIN_CDI.wrapping_add(idx as u64), r);
            match ctmc::hitting_time(params, n0, &[1], horizon, cap, &mut rng) {
                HitOutcome::Hit { time, .. } => (time, 0u64),
                _ => (horizon, 1u64),
            }
        });
        timeouts += values.iter().map(|v| v.1).sum::<u64>();
        let times: Vec<f64> = values.iter().map(|v| v.0).collect();
        cells.push(plain_cell(n0 as f64, &MCEstimate::from_values(&times, 0)));
    }
    let last = cells.last().expect("nonempty ladder").clone();
    let plateau = cells.iter().all(|cell| {
        (cell.estimate - last.estimate).abs() <= 3.0 * cell.std_err.hypot(last.std_err)
    });
    let stationary = stationary_numeric(params, 200)?;
    let ceiling = 2.0 / stationary.prob(1);
    let under_ceiling = cells.iter().all(|cell| cell.estimate <= ceiling);
    let mut meta = BTreeMap::new();
    meta.insert("ceiling".into(), ceiling);
    meta.insert("timeouts".into(), timeouts as f64);
    let verdict = if plateau && timeouts == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let summary = format!(
        "E_n[tau_1] plateau {}; ceiling 2/mu(1) = {:.4} {}",
        if plateau { "holds" } else { "fails" },
        ceiling,
        if under_ceiling {
            "respected"
        } else {
            "violated"
        },
    );
    Ok(ProbeReport {
        probe: "cdi".into(),
        params_digest: digest_of(params),
        seed,
        cells,
        meta,
        verdict,
        summary,
    })
}

/// Explosion probe: the fraction of paths that outrun a cap before the
/// horizon must be positive and stable as the cap grows. Catastrophes are
/// permitted in the sweep but leave the verdict unasserted, since nothing is
/// claimed for that combination.
pub fn explosion_probe(
    params: &InteractionParams,
    n0: u64,
    cap_list: &[u64],
    horizon: f64,
    replicates: u64,
    seed: u64,
) -> Result<ProbeReport> {
    if cap_list.is_empty() {
        return Err(Error::Domain("cap_list must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for (idx, &cap) in cap_list.iter().enumerate() {
        if cap <= n0 {
            return Err(Error::Domain(format!("cap {cap} must exceed n0 = {n0}")));
        }
        let values = par_replicate_map(replicates, |r| {
            let mut rng = replicate_rng(seed, DOMAIN_EXPLOSION.wrapping_add(idx as u64), r);
            let (_, capped) = ctmc::final_state_fast(params, n0, horizon, cap, &mut rng);
            if capped {
                1.0
            } else {
                0.0
            }
        });
        cells.push(plain_cell(cap as f64, &MCEstimate::from_values(&values, 0)));
    }
    let positive = cells.iter().all(|c| c.estimate > 0.0);
    let stable = cells
        .windows(2)
        .all(|w| (w[0].estimate - w[1].estimate).abs() <= 3.0 * w[0].std_err.hypot(w[1].std_err));
    let verdict = if !params.lambda().is_empty() {
        Verdict::NotAsserted
    } else if positive && stable {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let summary = format!(
        "capped fractions {:?}; positive: {positive}, stable across caps: {stable}",
        cells.iter().map(|c| c.estimate).collect::<Vec<_>>(),
    );
    Ok(ProbeReport {
        probe: "explosion".into(),
        params_digest: digest_of(params),
        seed,
        cells,
        meta: BTreeMap::new(),
        verdict,
        summary,
    })
}

/// Parity probe: under annihilation with even-only channels every visited
/// state must keep the initial parity, and absorption must land where the
/// classification says.
pub fn parity_probe(
    params: &InteractionParams,
    n0: u64,
    horizon: f64,
    cap: u64,
    replicates: u64,
    seed: u64,
) -> Result<ProbeReport> {
    if params.a() == 0.0 || !params.parity_preserving_channels() {
        return Err(Error::Domain(
            "the parity probe needs a > 0 with even-only jump channels \
             (no catastrophes, no competition, no odd litters)"
                .into(),
        ));
    }
    let expected = params.classify_long_term(StartParity::of(n0));
    let outcomes = par_replicate_map(replicates, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_PARITY, r);
        let path = simulate_z(params, n0, horizon, cap, &mut rng);
        let violations = path.states.iter().filter(|&&s| s % 2 != n0 % 2).count() as u64;
        let absorbed_at = match path.outcome {
            Outcome::AbsorbedAt { state, .. } => Some(state),
            _ => None,
        };
        (violations, absorbed_at, path.final_state())
    });

    let violations: u64 = outcomes.iter().map(|o| o.0).sum();
    let absorbed_at_0 = outcomes.iter().filter(|o| o.1 == Some(0)).count() as u64;
    let absorbed_at_1 = outcomes.iter().filter(|o| o.1 == Some(1)).count() as u64;
    let surviving = replicates - absorbed_at_0 - absorbed_at_1;

    // Empirical law of final states, one cell per observed state.
    let finals: Vec<u64> = outcomes.iter().map(|o| o.2).collect();
    let law = Distribution::empirical(&finals)?;
    let n = replicates as f64;
    let mut cells = Vec::new();
    for state in law.offset()..=law.max_state() {
        let p = law.prob(state);
        if p > 0.0 {
            cells.push(ProbeCell {
                sweep: state as f64,
                estimate: p,
                std_err: (p * (1.0 - p) / n).sqrt(),
                replicates,
                extra: BTreeMap::new(),
            });
        }
    }

    let consistent = match expected {
        LongTermClass::AbsorbedAt0 => absorbed_at_0 == replicates,
        LongTermClass::AbsorbedAt1 => absorbed_at_1 == replicates,
        LongTermClass::UniqueStationaryOddParity => absorbed_at_0 + absorbed_at_1 == 0,
        _ => true,
    };
    let verdict = if violations == 0 && consistent {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut meta = BTreeMap::new();
    meta.insert("parity_violations".into(), violations as f64);
    meta.insert("absorbed_at_0".into(), absorbed_at_0 as f64);
    meta.insert("absorbed_at_1".into(), absorbed_at_1 as f64);
    meta.insert("surviving".into(), surviving as f64);
    let summary = format!(
        "parity violations: {violations}; absorbed at 0: {absorbed_at_0}, at 1: \
         {absorbed_at_1}, surviving: {surviving} (expected {expected:?})"
    );
    Ok(ProbeReport {
        probe: "parity".into(),
        params_digest: digest_of(params),
        seed,
        cells,
        meta,
        verdict,
        summary,
    })
}

/// Uniform-convergence probe: empirical laws from two starting sizes must
/// contract toward each other and toward the stationary law, all three TV
/// distances falling below 0.05 by the largest sampled time.
pub fn uniform_convergence_probe(
    params: &InteractionParams,
    n_pair: (u64, u64),
    t_list: &[f64],
    replicates: u64,
    n_max: usize,
    cap: u64,
    seed: u64,
) -> Result<ProbeReport> {
    if params.classify_long_term(StartParity::NotApplicable) != LongTermClass::UniqueStationary {
        return Err(Error::Domain(
            "the uniform-convergence probe needs the unique-stationary regime".into(),
        ));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("t_list must be strictly increasing".into()));
    }
    let stationary = stationary_numeric(params, n_max)?;
    let run = |n0: u64, domain: u64| -> Vec<Vec<u64>> {
        par_replicate_map(replicates, |r| {
            let mut rng = replicate_rng(seed, domain, r);
            ctmc::states_at_times(params, n0, t_list, cap, &mut rng)
                .expect("subcritical sweep must stay below the cap")
        })
    };
    let states_a = run(n_pair.0, DOMAIN_UNIFORM);
    let states_b = run(n_pair.1, DOMAIN_UNIFORM.wrapping_add(1));

    let mut cells = Vec::new();
    let mut final_tvs = (f64::NAN, f64::NAN, f64::NAN);
    for (ti, &t) in t_list.iter().enumerate() {
        let snap_a: Vec<u64> = states_a.iter().map(|s| s[ti]).collect();
        let snap_b: Vec<u64> = states_b.iter().map(|s| s[ti]).collect();
        let law_a = Distribution::empirical(&snap_a)?;
        let law_b = Distribution::empirical(&snap_b)?;
        let tv_between = law_a.tv_distance(&law_b);
        let tv_a = law_a.tv_distance(&stationary);
        let tv_b = law_b.tv_distance(&stationary);
        let mut extra = BTreeMap::new();
        extra.insert("tv_start_a".into(), tv_a);
        extra.insert("tv_start_b".into(), tv_b);
        cells.push(ProbeCell {
            sweep: t,
            estimate: tv_between,
            std_err: (tv_between * (1.0 - tv_between).max(0.0) / replicates as f64).sqrt(),
            replicates,
            extra,
        });
        final_tvs = (tv_between, tv_a, tv_b);
    }
    let (tv_between, tv_a, tv_b) = final_tvs;
    let ok = tv_between <= 0.05 && tv_a <= 0.05 && tv_b <= 0.05;
    let summary = format!(
        "at t = {}: TV(start {}, start {}) = {tv_between:.4}, TV to stationary = \
         {tv_a:.4} / {tv_b:.4}",
        t_list.last().unwrap(),
        n_pair.0,
        n_pair.1,
    );
    Ok(ProbeReport {
        probe: "uniform_convergence".into(),
        params_digest: digest_of(params),
        seed,
        cells,
        meta: BTreeMap::new(),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        summary,
    })
}
