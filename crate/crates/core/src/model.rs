//! Model parameters and the per-state transition-rate table.
//!
//! A population of size `n` evolves through five channels:
//!
//! - each individual dies at rate `d` and spawns a litter of size `i` at
//!   rate `π_i`,
//! - each pair of individuals competes at rate `c` (one dies), annihilates
//!   at rate `a` (both die), and cooperates at rate `b_i` (litter of size
//!   `i`); pair channels carry the combinatorial weight `C(n,2)`, the same
//!   weight the `k = 2` catastrophe term shares in the merged channel,
//! - a catastrophe removes `k − 1` of `n` individuals at rate
//!   `C(n,k)·λ_{n,k}`, where `λ_{n,k} = ∫ y^k (1−y)^{n−k} Λ(dy)/y²` for a
//!   finite atomic measure `Λ` on `(0, 1]`.
//!
//! The `C(n,2)` pair weight is what makes the moment duality exact: the
//! dual diffusion's generator carries `σ²(x)/2` against second differences,
//! and a mass-`w` atom of `Λ` pushed to the origin must act like adding `w`
//! to `c`. Everything downstream (simulation, generator matrices, the dual
//! diffusion's coefficients) reads rates from this module, so the merged
//! per-target table here is the single source of truth for the law of the
//! process.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Finite atomic measure on `(0, 1]` driving catastrophes and dual jumps.
///
/// A would-be atom at 0 (a Kingman component) must be folded into the
/// pairwise competition rate `c` by the caller; atoms here are restricted to
/// strictly positive locations so every `λ_{n,k}` is an exact finite sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMeasure {
    atoms: Vec<(f64, f64)>,
}

impl LambdaMeasure {
    /// The zero measure (no catastrophes).
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Builds a measure from `(location, mass)` atoms.
    ///
    /// Locations must lie in `(0, 1]`, masses must be positive, and
    /// locations must be pairwise distinct.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(y, w) in &atoms {
            if !y.is_finite() || y <= 0.0 || y > 1.0 {
                return Err(Error::InvalidParams(format!(
                    "catastrophe atom location {y} outside (0, 1]"
                )));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "catastrophe atom mass {w} must be positive"
                )));
            }
        }
        atoms.sort_unstable_by(|p, q| p.0.partial_cmp(&q.0).expect("finite atom locations"));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParams(
                "catastrophe atoms must have pairwise distinct locations".into(),
            ));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total arrival rate `Σ w_j / y_j²` of the dual's jump clock.
    pub fn total_jump_rate(&self) -> f64 {
        self.atoms.iter().map(|&(y, w)| w / (y * y)).sum()
    }
}

/// Catastrophe rate `λ_{n,k} = Σ_j w_j · y_j^{k−2} (1−y_j)^{n−k}`.
///
/// Exact for atomic measures; errors when `k < 2` or `k > n`.
pub fn lambda_nk(n: u64, k: u64, lambda: &LambdaMeasure) -> Result<f64> {
    if k < 2 || k > n {
        return Err(Error::Domain(format!(
            "lambda_nk requires 2 <= k <= n, got n={n}, k={k}"
        )));
    }
    let mut total = 0.0;
    for &(y, w) in lambda.atoms() {
        total += w * y.powi((k - 2) as i32) * (1.0 - y).powi((n - k) as i32);
    }
    Ok(total)
}

/// Calls `f(k, rate)` with `rate = C(n,k)·λ_{n,k}` for every `k` in `2..=n`
/// whose rate is nonzero.
///
/// The binomial weight is carried in log space so the sweep stays finite for
/// large `n` even when individual binomial coefficients overflow.
pub(crate) fn for_each_catastrophe_rate(
    n: u64,
    lambda: &LambdaMeasure,
    mut f: impl FnMut(u64, f64),
) {
    if n < 2 || lambda.is_empty() {
        return;
    }
    let mut acc = vec![0.0f64; (n - 1) as usize];
    let nf = n as f64;
    for &(y, w) in lambda.atoms() {
        if y == 1.0 {
            // (1−y)^{n−k} vanishes except at k = n, where C(n,n)·λ_{n,n} = w.
            acc[(n - 2) as usize] += w;
            continue;
        }
        let ln_y = y.ln();
        let ln_1my = (1.0 - y).ln();
        let ln_scale = w.ln() - 2.0 * ln_y;
        let mut ln_choose = (nf * (nf - 1.0) / 2.0).ln();
        for k in 2..=n {
            let kf = k as f64;
            let v = (ln_choose + kf * ln_y + (nf - kf) * ln_1my + ln_scale).exp();
            if v > 0.0 {
                acc[(k - 2) as usize] += v;
            }
            if k < n {
                ln_choose += ((nf - kf) / (kf + 1.0)).ln();
            }
        }
    }
    for (idx, &rate) in acc.iter().enumerate() {
        if rate > 0.0 {
            f(idx as u64 + 2, rate);
        }
    }
}

/// All model rates: death `d`, competition `c`, annihilation `a`, branching
/// litters `π_i`, cooperation litters `b_i`, and the catastrophe measure.
///
/// Well-formedness (finite nonnegative rates, litter sizes at least one,
/// valid atoms) is checked once at construction; every downstream operation
/// assumes it. Values are immutable afterwards and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionParams {
    d: f64,
    c: f64,
    a: f64,
    pi: Vec<(u32, f64)>,
    b: Vec<(u32, f64)>,
    lambda: LambdaMeasure,
}

/// Quantities derived from the rates by exact finite sums:
/// `ρ = Σ π_i`, `b_tot = Σ b_i`, `m = −d + Σ i·π_i`,
/// `ς = −c − 2a + Σ i·b_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub rho: f64,
    pub b_tot: f64,
    pub m: f64,
    pub sigma_coop: f64,
}

/// Cooperative regime, determined solely by the sign of `ς`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubcriticalCooperative,
    CriticalCooperative,
    SupercriticalCooperative,
}

/// Parity of the initial population size, needed to classify the
/// annihilation-driven parity-preserving case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartParity {
    Even,
    Odd,
    NotApplicable,
}

impl StartParity {
    pub fn of(n: u64) -> Self {
        if n.is_multiple_of(2) {
            Self::Even
        } else {
            Self::Odd
        }
    }
}

/// Long-term behaviour in the subcritical cooperative regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum LongTermClass {
    AbsorbedAt0,
    AbsorbedAt1,
    AbsorbedIn01,
    UniqueStationary,
    UniqueStationaryOddParity,
    NotClassified(String),
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::InvalidParams(format!(
            "rate {name} = {value} must be finite and nonnegative"
        )));
    }
    Ok(())
}

fn check_litters(name: &str, entries: &[(u32, f64)]) -> Result<Vec<(u32, f64)>> {
    let mut out = Vec::with_capacity(entries.len());
    for &(i, rate) in entries {
        if i == 0 {
            return Err(Error::InvalidParams(format!(
                "{name} litter size must be at least 1"
            )));
        }
        check_rate(&format!("{name}[{i}]"), rate)?;
        if rate > 0.0 {
            out.push((i, rate));
        }
    }
    out.sort_unstable_by_key(|e| e.0);
    if out.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidParams(format!(
            "{name} litter sizes must be distinct"
        )));
    }
    Ok(out)
}

impl InteractionParams {
    pub fn new(
        d: f64,
        c: f64,
        a: f64,
        pi: Vec<(u32, f64)>,
        b: Vec<(u32, f64)>,
        lambda: LambdaMeasure,
    ) -> Result<Self> {
        check_rate("d", d)?;
        check_rate("c", c)?;
        check_rate("a", a)?;
        let pi = check_litters("pi", &pi)?;
        let b = check_litters("b", &b)?;
        Ok(Self {
            d,
            c,
            a,
            pi,
            b,
            lambda,
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Branching litter rates `(i, π_i)`, sorted by litter size; zero-rate
    /// entries are dropped at construction.
    pub fn pi(&self) -> &[(u32, f64)] {
        &self.pi
    }

    /// Cooperation litter rates `(i, b_i)`, sorted by litter size.
    pub fn b(&self) -> &[(u32, f64)] {
        &self.b
    }

    pub fn lambda(&self) -> &LambdaMeasure {
        &self.lambda
    }

    /// Computes `ρ`, `b_tot`, `m` and `ς` by exact finite sums.
    pub fn derive(&self) -> DerivedParams {
        let rho: f64 = self.pi.iter().map(|&(_, r)| r).sum();
        let b_tot: f64 = self.b.iter().map(|&(_, r)| r).sum();
        let m = -self.d + self.pi.iter().map(|&(i, r)| i as f64 * r).sum::<f64>();
        let sigma_coop =
            -self.c - 2.0 * self.a + self.b.iter().map(|&(i, r)| i as f64 * r).sum::<f64>();
        DerivedParams {
            rho,
            b_tot,
            m,
            sigma_coop,
        }
    }

    /// Subcritical, critical or supercritical cooperative, by the sign of `ς`.
    pub fn classify_regime(&self) -> Regime {
        let s = self.derive().sigma_coop;
        if s < 0.0 {
            Regime::SubcriticalCooperative
        } else if s == 0.0 {
            Regime::CriticalCooperative
        } else {
            Regime::SupercriticalCooperative
        }
    }

    /// True when every jump channel preserves the parity of the state:
    /// no catastrophes, no competition, and no odd branching or cooperation
    /// litters. (Death and annihilation are handled by the caller.)
    pub fn parity_preserving_channels(&self) -> bool {
        self.lambda.is_empty()
            && self.c == 0.0
            && self.pi.iter().all(|&(i, _)| i % 2 == 0)
            && self.b.iter().all(|&(i, _)| i % 2 == 0)
    }

    /// Merged per-target transition rates out of state `n`.
    ///
    /// Targets are distinct and sorted ascending, rates strictly positive;
    /// state 0 is absorbing (empty list). Channels sharing a target are
    /// merged: births `n+i` at `n·π_i + C(n,2)·b_i`; `n−1` at
    /// `d·n + C(n,2)(c + λ_{n,2})`; `n−2` at `C(n,2)·a + C(n,3)λ_{n,3}`;
    /// `n−k+1` at `C(n,k)λ_{n,k}` for larger `k`.
    pub fn transition_rates(&self, n: u64) -> Vec<(u64, f64)> {
        let mut entries: Vec<(u64, f64)> = Vec::new();
        if n == 0 {
            return entries;
        }
        let nf = n as f64;
        let pair = nf * (nf - 1.0) / 2.0;
        let mut push = |target: u64, rate: f64| {
            if rate > 0.0 {
                entries.push((target, rate));
            }
        };

        for &(i, rate) in &self.pi {
            push(n + i as u64, nf * rate);
        }
        push(n.saturating_sub(1), self.d * nf);
        if n >= 2 {
            for &(i, rate) in &self.b {
                push(n + i as u64, pair * rate);
            }
            push(n - 1, self.c * pair);
            push(n - 2, self.a * pair);
            for_each_catastrophe_rate(n, &self.lambda, |k, rate| {
                entries.push((n - k + 1, rate));
            });
        }

        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
        for (target, rate) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == target => last.1 += rate,
                _ => merged.push((target, rate)),
            }
        }
        merged
    }

    /// Mean instantaneous displacement `Σ rate·(target − n)` over the
    /// transition table.
    pub fn drift_at(&self, n: u64) -> f64 {
        self.transition_rates(n)
            .iter()
            .map(|&(target, rate)| rate * (target as f64 - n as f64))
            .sum()
    }

    /// Drift in closed form: `n·m + C(n,2)·ς − Σ_{k=2}^n (k−1)C(n,k)λ_{n,k}`,
    /// the pair term carrying the same `C(n,2)` weight as the rate table.
    ///
    /// Must agree with [`drift_at`](Self::drift_at); the pair is the
    /// generator sanity invariant.
    pub fn drift_closed_form(&self, n: u64) -> f64 {
        let derived = self.derive();
        let nf = n as f64;
        let mut catastrophe = 0.0;
        for_each_catastrophe_rate(n, &self.lambda, |k, rate| {
            catastrophe += (k as f64 - 1.0) * rate;
        });
        nf * derived.m + nf * (nf - 1.0) / 2.0 * derived.sigma_coop - catastrophe
    }

    /// Long-term classification in the subcritical cooperative regime.
    ///
    /// `start_parity` is consulted only in the parity-preserving annihilation
    /// case (`a > 0`, `d = 0`, no catastrophes, no competition, no odd
    /// litters); elsewhere it is ignored.
    pub fn classify_long_term(&self, start_parity: StartParity) -> LongTermClass {
        let derived = self.derive();
        if derived.sigma_coop >= 0.0 {
            return LongTermClass::NotClassified(
                "critical or supercritical cooperative regime".into(),
            );
        }
        let rho = derived.rho;
        if self.a == 0.0 {
            if self.d > 0.0 {
                LongTermClass::AbsorbedAt0
            } else if rho == 0.0 {
                LongTermClass::AbsorbedAt1
            } else {
                LongTermClass::UniqueStationary
            }
        } else if self.d > 0.0 {
            LongTermClass::AbsorbedAt0
        } else if self.parity_preserving_channels() {
            match start_parity {
                StartParity::Even => LongTermClass::AbsorbedAt0,
                StartParity::Odd if rho == 0.0 => LongTermClass::AbsorbedAt1,
                StartParity::Odd => LongTermClass::UniqueStationaryOddParity,
                StartParity::NotApplicable => LongTermClass::NotClassified(
                    "start parity required for the parity-preserving annihilation case".into(),
                ),
            }
        } else if rho == 0.0 {
            LongTermClass::AbsorbedIn01
        } else {
            LongTermClass::AbsorbedAt0
        }
    }
}

/// JSON document schema:
/// `{"d":num,"c":num,"a":num,"pi":{"1":num,...},"b":{"1":num,...},"lambda":[[y,w],...]}`
/// with decimal litter-size keys at least 1. All fields optional, defaulting
/// to zero rates.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsJson {
    #[serde(default)]
    d: f64,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    a: f64,
    #[serde(default)]
    pi: BTreeMap<String, f64>,
    #[serde(default)]
    b: BTreeMap<String, f64>,
    #[serde(default)]
    lambda: Vec<(f64, f64)>,
}

fn litters_from_map(name: &str, map: &BTreeMap<String, f64>) -> Result<Vec<(u32, f64)>> {
    let mut out = Vec::with_capacity(map.len());
    for (key, &rate) in map {
        let i: u32 = key.parse().map_err(|_| {
            Error::InvalidParams(format!("{name} key {key:?} is not a litter size"))
        })?;
        out.push((i, rate));
    }
    Ok(out)
}

impl TryFrom<ParamsJson> for InteractionParams {
    type Error = Error;

    fn try_from(raw: ParamsJson) -> Result<Self> {
        let pi = litters_from_map("pi", &raw.pi)?;
        let b = litters_from_map("b", &raw.b)?;
        let lambda = LambdaMeasure::new(raw.lambda)?;
        InteractionParams::new(raw.d, raw.c, raw.a, pi, b, lambda)
    }
}

impl From<&InteractionParams> for ParamsJson {
    fn from(p: &InteractionParams) -> Self {
        ParamsJson {
            d: p.d,
            c: p.c,
            a: p.a,
            pi: p.pi.iter().map(|&(i, r)| (i.to_string(), r)).collect(),
            b: p.b.iter().map(|&(i, r)| (i.to_string(), r)).collect(),
            lambda: p.lambda.atoms().to_vec(),
        }
    }
}

impl Serialize for InteractionParams {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        ParamsJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InteractionParams {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let raw = ParamsJson::deserialize(deserializer)?;
        InteractionParams::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl InteractionParams {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("parameters serialize to JSON")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(
        d: f64,
        c: f64,
        a: f64,
        pi: &[(u32, f64)],
        b: &[(u32, f64)],
        atoms: &[(f64, f64)],
    ) -> InteractionParams {
        InteractionParams::new(
            d,
            c,
            a,
            pi.to_vec(),
            b.to_vec(),
            LambdaMeasure::new(atoms.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn derive_matches_hand_sums() {
        let p = params(0.0, 3.0, 1.0, &[], &[(1, 2.0), (2, 1.0)], &[]);
        let d = p.derive();
        assert_eq!(d.sigma_coop, -1.0);
        assert_eq!(d.m, 0.0);
        assert_eq!(d.rho, 0.0);
        assert_eq!(d.b_tot, 3.0);

        let p = params(1.0, 0.0, 0.0, &[(1, 2.0)], &[], &[]);
        let d = p.derive();
        assert_eq!(d.m, 1.0);
        assert_eq!(d.sigma_coop, 0.0);

        let p = params(0.0, 0.0, 0.0, &[], &[], &[]);
        let d = p.derive();
        assert_eq!((d.rho, d.b_tot, d.m, d.sigma_coop), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn regime_by_sign_of_sigma() {
        let p = params(0.0, 3.0, 1.0, &[], &[(1, 2.0), (2, 1.0)], &[]);
        assert_eq!(p.classify_regime(), Regime::SubcriticalCooperative);
        let p = params(0.0, 1.0, 0.0, &[], &[(1, 1.0)], &[]);
        assert_eq!(p.classify_regime(), Regime::CriticalCooperative);
        let p = params(0.0, 1.0, 0.0, &[], &[(1, 3.0)], &[]);
        assert_eq!(p.classify_regime(), Regime::SupercriticalCooperative);
    }

    #[test]
    fn lambda_nk_atomic_values() {
        let single = LambdaMeasure::new(vec![(0.5, 1.0)]).unwrap();
        assert!((lambda_nk(3, 2, &single).unwrap() - 0.5).abs() < 1e-15);

        let at_one = LambdaMeasure::new(vec![(1.0, 2.0)]).unwrap();
        assert_eq!(lambda_nk(4, 4, &at_one).unwrap(), 2.0);
        assert_eq!(lambda_nk(4, 2, &at_one).unwrap(), 0.0);

        assert_eq!(lambda_nk(10, 5, &LambdaMeasure::empty()).unwrap(), 0.0);
        assert!(lambda_nk(3, 1, &single).is_err());
        assert!(lambda_nk(3, 4, &single).is_err());
    }

    #[test]
    fn transition_rates_merge_channels() {
        let p = params(1.0, 3.0, 1.0, &[(1, 2.0)], &[(1, 4.0)], &[(0.5, 1.0)]);
        let rates = p.transition_rates(2);
        // births 2·2 + C(2,2)·4 = 8; down-1: d·2 + C(2,2)(c + λ_{2,2}) = 2+3+1;
        // down-2: C(2,2)·a = 1.
        assert_eq!(rates.len(), 3);
        assert_eq!(rates[0].0, 0);
        assert!((rates[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(rates[1].0, 1);
        assert!((rates[1].1 - 6.0).abs() < 1e-12);
        assert_eq!(rates[2].0, 3);
        assert!((rates[2].1 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn state_zero_is_absorbing() {
        let p = params(1.0, 2.0, 1.0, &[(1, 5.0)], &[(2, 1.0)], &[(0.3, 0.7)]);
        assert!(p.transition_rates(0).is_empty());
    }

    #[test]
    fn singleton_state_has_no_pair_terms() {
        let p = params(0.0, 7.0, 3.0, &[(1, 5.0)], &[(2, 4.0)], &[(0.9, 2.0)]);
        let rates = p.transition_rates(1);
        assert_eq!(rates, vec![(2, 5.0)]);
    }

    #[test]
    fn drift_examples() {
        // Geometric-law model at n = 2: up 2·1 + C(2,2)·1 = 3, down C(2,2)·2,
        // so the drift is 1 = n·m + C(n,2)·ς.
        let p = params(0.0, 2.0, 0.0, &[(1, 1.0)], &[(1, 1.0)], &[]);
        assert!((p.drift_at(2) - 1.0).abs() < 1e-12);
        assert!((p.drift_closed_form(2) - 1.0).abs() < 1e-12);

        let p = params(0.7, 0.0, 0.0, &[(1, 2.0), (3, 0.5)], &[(2, 1.0)], &[]);
        let m = p.derive().m;
        assert!((p.drift_at(1) - m).abs() < 1e-12);
        assert_eq!(p.drift_at(0), 0.0);
    }

    #[test]
    fn long_term_taxonomy() {
        let p = params(0.0, 2.0, 0.0, &[], &[(1, 1.0)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::AbsorbedAt1
        );

        let p = params(0.0, 0.0, 1.0, &[(2, 1.0)], &[(2, 0.5)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::Even),
            LongTermClass::AbsorbedAt0
        );
        assert_eq!(
            p.classify_long_term(StartParity::Odd),
            LongTermClass::UniqueStationaryOddParity
        );
        assert!(matches!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::NotClassified(_)
        ));

        let p = params(0.0, 2.0, 0.0, &[(1, 1.0)], &[(1, 1.0)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::UniqueStationary
        );

        let p = params(1.0, 2.0, 0.0, &[(1, 1.0)], &[], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::AbsorbedAt0
        );

        // Annihilation with an odd channel present breaks parity.
        let p = params(0.0, 0.0, 1.0, &[], &[(1, 0.5)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::AbsorbedIn01
        );
        let p = params(0.0, 0.0, 1.0, &[(1, 0.2)], &[(1, 0.5)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::NotApplicable),
            LongTermClass::AbsorbedAt0
        );

        let critical = params(0.0, 1.0, 0.0, &[], &[(1, 1.0)], &[]);
        assert!(matches!(
            critical.classify_long_term(StartParity::NotApplicable),
            LongTermClass::NotClassified(_)
        ));
    }

    #[test]
    fn odd_parity_rho_zero_absorbs_at_one() {
        let p = params(0.0, 0.0, 1.0, &[], &[(2, 0.5)], &[]);
        assert_eq!(
            p.classify_long_term(StartParity::Odd),
            LongTermClass::AbsorbedAt1
        );
    }

    #[test]
    fn atom_at_one_forces_total_catastrophe() {
        let lambda = LambdaMeasure::new(vec![(1.0, 2.0)]).unwrap();
        let mut seen = Vec::new();
        for_each_catastrophe_rate(4, &lambda, |k, r| seen.push((k, r)));
        assert_eq!(seen, vec![(4, 2.0)]);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"d":0.5,"c":2.0,"a":0.0,"pi":{"1":1.0,"3":0.25},"b":{"2":0.5},"lambda":[[0.5,0.4]]}"#;
        let p = InteractionParams::from_json_str(text).unwrap();
        assert_eq!(p.d(), 0.5);
        assert_eq!(p.pi(), &[(1, 1.0), (3, 0.25)]);
        assert_eq!(p.b(), &[(2, 0.5)]);
        assert_eq!(p.lambda().atoms(), &[(0.5, 0.4)]);

        let back = InteractionParams::from_json_str(&p.to_json_value().to_string()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_litters() {
        assert!(InteractionParams::from_json_str(r#"{"dd":1.0}"#).is_err());
        assert!(InteractionParams::from_json_str(r#"{"pi":{"0":1.0}}"#).is_err());
        assert!(InteractionParams::from_json_str(r#"{"pi":{"x":1.0}}"#).is_err());
        assert!(InteractionParams::from_json_str(r#"{"lambda":[[0.0,1.0]]}"#).is_err());
        assert!(InteractionParams::from_json_str(r#"{"d":-1.0}"#).is_err());
    }

    prop_compose! {
        fn arb_params()(
            d in 0.0..3.0f64,
            c in 0.0..3.0f64,
            a in 0.0..2.0f64,
            pi in proptest::collection::btree_map(1u32..=4, 0.0..2.0f64, 0..3),
            b in proptest::collection::btree_map(1u32..=3, 0.0..1.5f64, 0..3),
            atoms in proptest::collection::vec((0.05..=1.0f64, 0.01..2.0f64), 0..3),
        ) -> InteractionParams {
            let mut dedup: Vec<(f64, f64)> = Vec::new();
            for (y, w) in atoms {
                if !dedup.iter().any(|&(y0, _)| y0 == y) {
                    dedup.push((y, w));
                }
            }
            InteractionParams::new(
                d, c, a,
                pi.into_iter().collect(),
                b.into_iter().collect(),
                LambdaMeasure::new(dedup).unwrap(),
            ).unwrap()
        }
    }

    proptest! {
        #[test]
        fn drift_identity_holds(p in arb_params(), n in 0u64..=100) {
            let direct = p.drift_at(n);
            let closed = p.drift_closed_form(n);
            let scale: f64 = p
                .transition_rates(n)
                .iter()
                .map(|&(t, r)| r * (t as f64 - n as f64).abs())
                .sum();
            let tol = 1e-12 * scale.max(1.0);
            prop_assert!(
                (direct - closed).abs() <= tol,
                "drift mismatch at n={}: {} vs {}",
                n, direct, closed
            );
        }

        #[test]
        fn transition_table_is_well_formed(p in arb_params(), n in 0u64..=60) {
            let rates = p.transition_rates(n);
            for w in rates.windows(2) {
                prop_assert!(w[0].0 < w[1].0, "duplicate or unsorted targets");
            }
            for &(target, rate) in &rates {
                prop_assert!(rate > 0.0, "zero or negative rate emitted");
                prop_assert!(rate.is_finite());
                // Catastrophes bottom out at one survivor; only death,
                // competition and annihilation reach below.
                prop_assert!(target >= n.saturating_sub(n.max(2)));
            }
            if n == 0 {
                prop_assert!(rates.is_empty());
            }
        }

        #[test]
        fn regime_is_scale_invariant(p in arb_params(), gamma in 0.01..100.0f64) {
            let scaled = InteractionParams::new(
                p.d() * gamma,
                p.c() * gamma,
                p.a() * gamma,
                p.pi().iter().map(|&(i, r)| (i, r * gamma)).collect(),
                p.b().iter().map(|&(i, r)| (i, r * gamma)).collect(),
                LambdaMeasure::new(
                    p.lambda().atoms().iter().map(|&(y, w)| (y, w * gamma)).collect()
                ).unwrap(),
            ).unwrap();
            prop_assert_eq!(p.classify_regime(), scaled.classify_regime());
        }

        #[test]
        fn parity_preserving_targets_keep_parity(
            a in 0.1..2.0f64,
            pi2 in 0.0..1.0f64,
            b2 in 0.0..1.0f64,
            n in 1u64..=40,
        ) {
            let p = params(0.0, 0.0, a, &[(2, pi2)], &[(2, b2)], &[]);
            for &(target, _) in &p.transition_rates(n) {
                prop_assert_eq!(target % 2, n % 2, "parity broken: {} -> {}", n, target);
            }
        }

        #[test]
        fn lambda_diagonal_matches_atom_power(y in 0.05..=1.0f64, w in 0.01..2.0f64, n in 2u64..=40) {
            let lambda = LambdaMeasure::new(vec![(y, w)]).unwrap();
            let diag = lambda_nk(n, n, &lambda).unwrap();
            let expected = w * y.powi((n - 2) as i32);
            prop_assert!((diag - expected).abs() <= 1e-12 * expected.max(1.0));
            let total: f64 = {
                let mut s = 0.0;
                for_each_catastrophe_rate(n, &lambda, |_, r| s += r);
                s
            };
            prop_assert!(total.is_finite());
        }
    }
}
