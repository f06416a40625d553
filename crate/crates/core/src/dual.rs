//! The moment-dual jump-diffusion on `[0, 1]`.
//!
//! Between jumps the state follows `dX = μ(X)dt + σ(X)dB` with
//! `μ(x) = d(1−x) + Σ π_i (x^{i+1} − x)` and
//! `σ²(x) = c(x − x²) + Σ b_i (x^{i+2} − x²)`, stepped by fixed-step
//! Euler–Maruyama and clamped to `[0, 1]`. Jumps arrive from per-atom
//! exponential clocks at rate `w/y²` and are inserted at their exact times:
//! with probability `x` the state moves up by `y(1−x)`, otherwise down to
//! `x(1−y)`. The compensator of the jump integrand averages to zero in `u`,
//! so no drift correction is applied.
//!
//! The dual is only defined without annihilation; all constructors reject
//! `a > 0` because no moment dual is established for that case.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::Serialize;

use crate::model::InteractionParams;
use crate::rng::{exp_rate, replicate_rng};
use crate::stats::{par_replicate_map, MCEstimate};
use crate::{Error, Result};

const DOMAIN_MOMENT: u64 = 0x44_55_41_4c_01;

/// Drift `μ(x) = d(1−x) + Σ π_i (x^{i+1} − x)`; defined for `a = 0`.
pub fn mu_of_x(x: f64, params: &InteractionParams) -> Result<f64> {
    check_unit_interval(x)?;
    reject_annihilation(params)?;
    Ok(mu_raw(x, params))
}

/// Diffusion coefficient `σ²(x) = c(x − x²) + Σ b_i (x^{i+2} − x²)`,
/// nonnegative on `[0, 1]` whenever `ς ≤ 0` and clamped at 0 against
/// rounding.
pub fn sigma2_of_x(x: f64, params: &InteractionParams) -> Result<f64> {
    check_unit_interval(x)?;
    reject_annihilation(params)?;
    if params.derive().sigma_coop > 0.0 {
        return Err(Error::Domain(
            "sigma² can go negative in the supercritical cooperative regime".into(),
        ));
    }
    Ok(sigma2_raw(x, params).max(0.0))
}

fn check_unit_interval(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(())
}

fn reject_annihilation(params: &InteractionParams) -> Result<()> {
    if params.a() > 0.0 {
        return Err(Error::Unsupported(
            "no moment dual is established for annihilation (a > 0); \
             only the integer process can be simulated"
                .into(),
        ));
    }
    Ok(())
}

pub(crate) fn mu_raw(x: f64, params: &InteractionParams) -> f64 {
    let mut total = params.d() * (1.0 - x);
    for &(i, rate) in params.pi() {
        total += rate * (x.powi(i as i32 + 1) - x);
    }
    total
}

pub(crate) fn sigma2_raw(x: f64, params: &InteractionParams) -> f64 {
    let mut total = params.c() * (x - x * x);
    for &(i, rate) in params.b() {
        total += rate * (x.powi(i as i32 + 2) - x * x);
    }
    total
}

/// Upward jump map `x ↦ x + y(1−x)`; maps `[0,1]²` into `[0,1]` exactly.
#[inline]
pub(crate) fn jump_up(x: f64, y: f64) -> f64 {
    x + y * (1.0 - x)
}

/// Downward jump map `x ↦ x(1−y)`; maps `[0,1]²` into `[0,1]` exactly.
#[inline]
pub(crate) fn jump_down(x: f64, y: f64) -> f64 {
    x * (1.0 - y)
}

/// Absorbing boundary of the dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Zero,
    One,
}

impl Boundary {
    pub fn value(self) -> f64 {
        match self {
            Boundary::Zero => 0.0,
            Boundary::One => 1.0,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Boundary::Zero => 0,
            Boundary::One => 1,
        }
    }
}

/// Time-discretized trajectory: grid times interleaved with exact jump
/// times, values clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathX {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// First exact hit of an absorbing boundary, if any.
    pub fixation: Option<(f64, Boundary)>,
    /// Diffusion steps that left `[0, 1]` and were clamped back.
    pub clamp_events: u64,
}

/// Outcome of one fixation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixationResult {
    pub time: f64,
    pub boundary: Option<Boundary>,
    pub timed_out: bool,
}

/// Validated coefficients and jump atoms for the simulator's hot loop.
pub(crate) struct DualDynamics<'a> {
    params: &'a InteractionParams,
    /// `(y, w/y²)` per atom.
    atoms: Vec<(f64, f64)>,
    /// `Σ (w/y²)·y`, the scale of expected jump displacement per unit time.
    jump_intensity_y: f64,
}

impl<'a> DualDynamics<'a> {
    pub fn new(params: &'a InteractionParams) -> Result<Self> {
        reject_annihilation(params)?;
        if params.derive().sigma_coop > 0.0 {
            return Err(Error::Domain(
                "the dual simulator requires the critical or subcritical \
                 cooperative regime (sigma <= 0)"
                    .into(),
            ));
        }
        let atoms: Vec<(f64, f64)> = params
            .lambda()
            .atoms()
            .iter()
            .map(|&(y, w)| (y, w / (y * y)))
            .collect();
        let jump_intensity_y = atoms.iter().map(|&(y, r)| y * r).sum();
        Ok(Self {
            params,
            atoms,
            jump_intensity_y,
        })
    }

    #[inline]
    fn mu(&self, x: f64) -> f64 {
        mu_raw(x, self.params)
    }

    #[inline]
    fn sigma(&self, x: f64) -> f64 {
        sigma2_raw(x, self.params).max(0.0).sqrt()
    }

    /// Exact absorbing states: 1 always, 0 only without mutation pressure.
    #[inline]
    fn absorbed(&self, x: f64) -> bool {
        x == 1.0 || (x == 0.0 && self.params.d() == 0.0)
    }
}

enum XEvent {
    /// Reached a grid time (or the horizon); carries the current time.
    Grid(f64),
    /// A jump fired at the carried time.
    Jump(f64),
    /// The horizon was already reached.
    Done,
}

/// One path of the jump-diffusion, optionally shadowed by a coarse companion
/// that consumes the same Brownian increments pairwise (2·dt steps where the
/// event layout allows) and the same jump draws. The companion's systematic
/// offset estimates the discretization bias of the fine path.
struct XSim<'a, 'r, R: Rng + ?Sized> {
    dynamics: &'a DualDynamics<'a>,
    rng: &'r mut R,
    dt: f64,
    horizon: f64,
    t: f64,
    x: f64,
    grid_steps: u64,
    next_jump: Vec<f64>,
    coarse: Option<CoarseTrack>,
    clamp_events: u64,
}

struct CoarseTrack {
    x: f64,
    pending: Option<(f64, f64)>,
}

impl<'a, 'r, R: Rng + ?Sized> XSim<'a, 'r, R> {
    fn new(
        dynamics: &'a DualDynamics<'a>,
        x0: f64,
        horizon: f64,
        dt: f64,
        with_coarse: bool,
        rng: &'r mut R,
    ) -> Self {
        let next_jump = dynamics
            .atoms
            .iter()
            .map(|&(_, rate)| exp_rate(rng, rate))
            .collect();
        XSim {
            dynamics,
            rng,
            dt,
            horizon,
            t: 0.0,
            x: x0,
            grid_steps: 0,
            next_jump,
            coarse: with_coarse.then_some(CoarseTrack {
                x: x0,
                pending: None,
            }),
            clamp_events: 0,
        }
    }

    fn fully_frozen(&self) -> bool {
        self.dynamics.absorbed(self.x)
            && self
                .coarse
                .as_ref()
                .is_none_or(|c| self.dynamics.absorbed(c.x))
    }

    fn em_value(dynamics: &DualDynamics, x: f64, delta: f64, dw: f64) -> (f64, bool) {
        let next = x + dynamics.mu(x) * delta + dynamics.sigma(x) * dw;
        if next < 0.0 {
            (0.0, true)
        } else if next > 1.0 {
            (1.0, true)
        } else {
            (next, false)
        }
    }

    fn diffuse(&mut self, delta: f64) {
        let fine_active = !self.dynamics.absorbed(self.x);
        let coarse_active = self
            .coarse
            .as_ref()
            .is_some_and(|c| !self.dynamics.absorbed(c.x));
        if !fine_active && !coarse_active {
            return;
        }
        let z: f64 = StandardNormal.sample(self.rng);
        let dw = delta.sqrt() * z;
        if fine_active {
            let (next, clamped) = Self::em_value(self.dynamics, self.x, delta, dw);
            self.x = next;
            if clamped {
                self.clamp_events += 1;
            }
        }
        if let Some(coarse) = self.coarse.as_mut() {
            if coarse_active {
                match coarse.pending.take() {
                    None => coarse.pending = Some((delta, dw)),
                    Some((d0, w0)) => {
                        let (next, _) =
                            Self::em_value(self.dynamics, coarse.x, d0 + delta, w0 + dw);
                        coarse.x = next;
                    }
                }
            } else {
                coarse.pending = None;
            }
        }
    }

    fn flush_coarse(&mut self) {
        if let Some(coarse) = self.coarse.as_mut() {
            if let Some((d0, w0)) = coarse.pending.take() {
                if !self.dynamics.absorbed(coarse.x) {
                    let (next, _) = Self::em_value(self.dynamics, coarse.x, d0, w0);
                    coarse.x = next;
                }
            }
        }
    }

    fn apply_jump(&mut self, atom: usize) {
        let (y, rate) = self.dynamics.atoms[atom];
        self.next_jump[atom] = self.t + exp_rate(self.rng, rate);
        // The coarse companion must be current before seeing the jump.
        self.flush_coarse();
        let u: f64 = self.rng.random();
        self.x = if u < self.x {
            jump_up(self.x, y)
        } else {
            jump_down(self.x, y)
        };
        if let Some(coarse) = self.coarse.as_mut() {
            coarse.x = if u < coarse.x {
                jump_up(coarse.x, y)
            } else {
                jump_down(coarse.x, y)
            };
        }
    }

    fn next_event(&mut self) -> XEvent {
        if self.t >= self.horizon {
            return XEvent::Done;
        }
        let raw_grid = (self.grid_steps + 1) as f64 * self.dt;
        let next_grid = raw_grid.min(self.horizon);
        let jump = self
            .next_jump
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite jump times"))
            .map(|(idx, &tj)| (idx, tj));
        if let Some((idx, tj)) = jump {
            if tj < next_grid && tj < self.horizon {
                self.diffuse(tj - self.t);
                self.t = tj;
                self.apply_jump(idx);
                return XEvent::Jump(self.t);
            }
        }
        self.diffuse(next_grid - self.t);
        self.t = next_grid;
        if raw_grid <= self.horizon {
            self.grid_steps += 1;
        }
        if self.t >= self.horizon {
            self.flush_coarse();
        }
        XEvent::Grid(self.t)
    }

    /// Runs to the horizon, returning final fine and coarse values.
    fn run_to_end(&mut self) -> (f64, f64) {
        loop {
            if self.fully_frozen() {
                break;
            }
            if matches!(self.next_event(), XEvent::Done) {
                break;
            }
        }
        self.flush_coarse();
        let coarse = self.coarse.as_ref().map_or(self.x, |c| c.x);
        (self.x, coarse)
    }
}

fn check_step(dt: f64, horizon: f64) -> Result<()> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Domain("dt must be positive and finite".into()));
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::Domain(
            "horizon must be nonnegative and finite".into(),
        ));
    }
    Ok(())
}

/// Simulates one path to the horizon, recording grid and jump times.
pub fn simulate_x<R: Rng + ?Sized>(
    params: &InteractionParams,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathX> {
    check_unit_interval(x0)?;
    check_step(dt, horizon)?;
    let dynamics = DualDynamics::new(params)?;
    let mut sim = XSim::new(&dynamics, x0, horizon, dt, false, rng);
    let mut times = vec![0.0];
    let mut values = vec![x0];
    let mut fixation = dynamics.absorbed(x0).then_some((
        0.0,
        if x0 == 1.0 {
            Boundary::One
        } else {
            Boundary::Zero
        },
    ));
    loop {
        match sim.next_event() {
            XEvent::Done => break,
            XEvent::Grid(t) | XEvent::Jump(t) => {
                times.push(t);
                values.push(sim.x);
                if fixation.is_none() && dynamics.absorbed(sim.x) {
                    let boundary = if sim.x == 1.0 {
                        Boundary::One
                    } else {
                        Boundary::Zero
                    };
                    fixation = Some((t, boundary));
                }
            }
        }
    }
    Ok(PathX {
        times,
        values,
        fixation,
        clamp_events: sim.clamp_events,
    })
}

/// Monte Carlo estimate of the moment `E_x[X_t^n]`.
pub fn mc_moment(
    params: &InteractionParams,
    x0: f64,
    t: f64,
    n: u32,
    replicates: u64,
    dt: f64,
    seed: u64,
) -> Result<MCEstimate> {
    check_unit_interval(x0)?;
    check_step(dt, t)?;
    if replicates == 0 {
        return Err(Error::Domain("replicates must be at least 1".into()));
    }
    let dynamics = DualDynamics::new(params)?;
    if n == 0 {
        return Ok(MCEstimate::exact(1.0, replicates));
    }
    if t == 0.0 {
        return Ok(MCEstimate::exact(x0.powi(n as i32), replicates));
    }
    let values = par_replicate_map(replicates, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_MOMENT, r);
        let mut sim = XSim::new(&dynamics, x0, t, dt, false, &mut rng);
        let (x_final, _) = sim.run_to_end();
        x_final.powi(n as i32)
    });
    Ok(MCEstimate::from_values(&values, 0))
}

/// One replicate of the moment functional on a coupled fine/coarse pair;
/// returns `(fine, coarse)` values of `X_t^n`.
pub(crate) fn moment_pair_sample<R: Rng + ?Sized>(
    dynamics: &DualDynamics,
    x0: f64,
    t: f64,
    n: u32,
    dt: f64,
    rng: &mut R,
) -> (f64, f64) {
    let mut sim = XSim::new(dynamics, x0, t, dt, true, rng);
    let (fine, coarse) = sim.run_to_end();
    (fine.powi(n as i32), coarse.powi(n as i32))
}

/// Runs until the path is pinned at a boundary: fixation is declared at the
/// first step with `x ≤ eps` (or `x ≥ 1 − eps`) whose local motion scale
/// `|μ|dt + σ√dt` plus the expected jump displacement over the next step is
/// itself below `eps`. Discretized paths reach the boundaries exactly
/// through clamping, where the rule always fires.
pub fn fixation_sample<R: Rng + ?Sized>(
    params: &InteractionParams,
    x0: f64,
    horizon: f64,
    dt: f64,
    eps_fix: f64,
    rng: &mut R,
) -> Result<FixationResult> {
    check_unit_interval(x0)?;
    check_step(dt, horizon)?;
    if !eps_fix.is_finite() || eps_fix <= 0.0 || eps_fix > 1e-3 {
        return Err(Error::Domain(format!(
            "eps_fix = {eps_fix} outside (0, 1e-3]"
        )));
    }
    if params.derive().sigma_coop >= 0.0 {
        return Err(Error::Domain(
            "fixation sampling requires the subcritical cooperative regime".into(),
        ));
    }
    let dynamics = DualDynamics::new(params)?;
    let near = |sim_x: f64, t: f64| -> Option<FixationResult> {
        let toward_zero = sim_x <= eps_fix;
        let toward_one = sim_x >= 1.0 - eps_fix;
        if !toward_zero && !toward_one {
            return None;
        }
        let motion = dynamics.mu(sim_x).abs() * dt
            + dynamics.sigma(sim_x) * dt.sqrt()
            + 2.0 * sim_x.min(1.0 - sim_x) * dynamics.jump_intensity_y * dt;
        if motion < eps_fix {
            Some(FixationResult {
                time: t,
                boundary: Some(if toward_one {
                    Boundary::One
                } else {
                    Boundary::Zero
                }),
                timed_out: false,
            })
        } else {
            None
        }
    };
    if let Some(res) = near(x0, 0.0) {
        return Ok(res);
    }
    let mut sim = XSim::new(&dynamics, x0, horizon, dt, false, rng);
    loop {
        match sim.next_event() {
            XEvent::Done => {
                return Ok(FixationResult {
                    time: horizon,
                    boundary: None,
                    timed_out: true,
                })
            }
            XEvent::Grid(t) | XEvent::Jump(t) => {
                if let Some(res) = near(sim.x, t) {
                    return Ok(res);
                }
            }
        }
    }
}

/// Discrete resource-efficiency chain: given frequency `x`, the next
/// frequency is `Binomial(⌊N/(1 − b₁x)⌋, x)` over the same trial count.
/// Returns the frequency path including the initial value.
pub fn simulate_wf_efficiency<R: Rng + ?Sized>(
    n_resource: u64,
    b1: f64,
    x0: f64,
    generations: u32,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_resource == 0 {
        return Err(Error::Domain("resource units must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&b1) {
        return Err(Error::Domain(format!("b1 = {b1} outside [0, 1)")));
    }
    check_unit_interval(x0)?;
    let mut path = Vec::with_capacity(generations as usize + 1);
    path.push(x0);
    let mut x = x0;
    for _ in 0..generations {
        let trials = (n_resource as f64 / (1.0 - b1 * x)).floor() as u64;
        let successes = rand_distr::Binomial::new(trials, x)
            .map_err(|e| Error::Domain(format!("binomial resampling: {e}")))?
            .sample(rng);
        x = successes as f64 / trials as f64;
        path.push(x);
    }
    Ok(path)
}

/// CSV export of one path, header `time,value`.
pub fn path_csv(path: &PathX) -> String {
    let mut out = String::from("time,value\n");
    for (t, v) in path.times.iter().zip(&path.values) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

/// CSV export of a fixation batch, header `replicate,fixed_at,boundary,time`.
pub fn fixation_batch_csv(results: &[FixationResult]) -> String {
    let mut out = String::from("replicate,fixed_at,boundary,time\n");
    for (r, res) in results.iter().enumerate() {
        match res.boundary {
            Some(boundary) => {
                out.push_str(&format!("{r},1,{},{}\n", boundary.index(), res.time));
            }
            None => out.push_str(&format!("{r},0,,{}\n", res.time)),
        }
    }
    out
}
