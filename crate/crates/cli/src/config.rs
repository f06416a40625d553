//! Experiment configuration: one JSON document drives every subcommand.
//!
//! Unknown keys are rejected everywhere so a typo cannot silently fall back
//! to a default. The canonical digest of the effective configuration (after
//! command-line overrides) is embedded in every output file, making mixed
//! outputs detectable.

use std::path::PathBuf;

use bpi_core::model::{InteractionParams, StartParity};
use serde::{Deserialize, Serialize};

fn default_dt() -> f64 {
    1e-3
}

fn default_eps_fix() -> f64 {
    1e-6
}

fn default_cap() -> u64 {
    10_000
}

fn default_walk_cap() -> u64 {
    1_000_000
}

fn default_n_max() -> usize {
    400
}

fn default_refine_levels() -> u32 {
    bpi_core::analysis::DEFAULT_REFINE_LEVELS
}

fn default_panels() -> u32 {
    bpi_core::analysis::DEFAULT_PANELS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_one() -> u64 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: InteractionParams,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<DualConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_func: Option<GenFuncConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixation: Option<FixationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf: Option<WfConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_parity: Option<StartParity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n0: u64,
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default = "default_one")]
    pub replicates: u64,
    /// When present, report first entrance times of this state set instead
    /// of plain trajectories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_targets: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub x0: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_one")]
    pub replicates: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenFuncConfig {
    pub n0: u64,
    pub t: f64,
    pub x: f64,
    pub replicates: u64,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityConfig {
    pub x: f64,
    pub n: u32,
    pub t: f64,
    pub replicates: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub n_max: usize,
    /// Truncation of the closed-form law, emitted when the parameters fall
    /// in the single-litter family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form_k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    #[serde(default = "default_refine_levels")]
    pub refine_levels: u32,
    #[serde(default = "default_panels")]
    pub panels: u32,
    #[serde(default)]
    pub eval_points: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixationConfig {
    pub x: f64,
    /// Monte Carlo fixation replicates; 0 runs the analysis layer only.
    #[serde(default)]
    pub replicates: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_fix_horizon")]
    pub horizon: f64,
    #[serde(default = "default_eps_fix")]
    pub eps_fix: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_fix_horizon() -> f64 {
    50.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdi: Option<CdiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explosion: Option<ExplosionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity: Option<ParityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<UniformConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdiConfig {
    pub n_list: Vec<u64>,
    pub horizon: f64,
    pub replicates: u64,
    #[serde(default = "default_walk_cap")]
    pub cap: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplosionConfig {
    pub n0: u64,
    pub cap_list: Vec<u64>,
    pub horizon: f64,
    pub replicates: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityConfig {
    pub n0: u64,
    pub horizon: f64,
    pub replicates: u64,
    #[serde(default = "default_walk_cap")]
    pub cap: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformConfig {
    pub n_pair: (u64, u64),
    pub t_list: Vec<f64>,
    pub replicates: u64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_walk_cap")]
    pub cap: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WfConfig {
    pub n_resource: u64,
    pub b1: f64,
    pub x0: f64,
    pub generations: u32,
}

/// Structural knob validation; model-dependent preconditions are left to
/// the operations themselves.
pub fn validate(config: &ExperimentConfig) -> Result<(), String> {
    fn positive(name: &str, v: f64) -> Result<(), String> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(format!("{name} must be positive and finite, got {v}"))
        }
    }
    fn unit(name: &str, v: f64) -> Result<(), String> {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(format!("{name} must lie in [0, 1], got {v}"))
        }
    }
    fn at_least_one(name: &str, v: u64) -> Result<(), String> {
        if v >= 1 {
            Ok(())
        } else {
            Err(format!("{name} must be at least 1"))
        }
    }

    if let Some(s) = &config.simulate {
        positive("simulate.horizon", s.horizon)?;
        at_least_one("simulate.replicates", s.replicates)?;
        if s.cap <= s.n0 {
            return Err("simulate.cap must exceed simulate.n0".into());
        }
    }
    if let Some(d) = &config.dual {
        unit("dual.x0", d.x0)?;
        positive("dual.horizon", d.horizon)?;
        positive("dual.dt", d.dt)?;
        at_least_one("dual.replicates", d.replicates)?;
    }
    if let Some(g) = &config.gen_func {
        unit("gen_func.x", g.x)?;
        at_least_one("gen_func.replicates", g.replicates)?;
        if g.t < 0.0 {
            return Err("gen_func.t must be nonnegative".into());
        }
    }
    if let Some(d) = &config.duality {
        unit("duality.x", d.x)?;
        positive("duality.dt", d.dt)?;
        at_least_one("duality.replicates", d.replicates)?;
        if d.t < 0.0 {
            return Err("duality.t must be nonnegative".into());
        }
    }
    if let Some(s) = &config.stationary {
        if s.n_max < 50 {
            return Err("stationary.n_max must be at least 50".into());
        }
    }
    if let Some(s) = &config.scale {
        if s.refine_levels < 1 || s.panels < 2 || s.panels % 2 != 0 {
            return Err("scale grid needs refine_levels >= 1 and an even panel count".into());
        }
        for &x in &s.eval_points {
            unit("scale.eval_points", x)?;
        }
    }
    if let Some(f) = &config.fixation {
        unit("fixation.x", f.x)?;
        positive("fixation.dt", f.dt)?;
        positive("fixation.horizon", f.horizon)?;
        if !(f.eps_fix > 0.0 && f.eps_fix <= 1e-3) {
            return Err("fixation.eps_fix must lie in (0, 1e-3]".into());
        }
    }
    if let Some(p) = &config.probes {
        if let Some(c) = &p.cdi {
            positive("probes.cdi.horizon", c.horizon)?;
            at_least_one("probes.cdi.replicates", c.replicates)?;
            if c.n_list.is_empty() {
                return Err("probes.cdi.n_list must be nonempty".into());
            }
        }
        if let Some(e) = &p.explosion {
            positive("probes.explosion.horizon", e.horizon)?;
            at_least_one("probes.explosion.replicates", e.replicates)?;
            if e.cap_list.is_empty() {
                return Err("probes.explosion.cap_list must be nonempty".into());
            }
        }
        if let Some(q) = &p.parity {
            positive("probes.parity.horizon", q.horizon)?;
            at_least_one("probes.parity.replicates", q.replicates)?;
        }
        if let Some(u) = &p.uniform {
            at_least_one("probes.uniform.replicates", u.replicates)?;
            if u.t_list.is_empty() {
                return Err("probes.uniform.t_list must be nonempty".into());
            }
        }
    }
    if let Some(w) = &config.wf {
        if w.n_resource == 0 {
            return Err("wf.n_resource must be at least 1".into());
        }
        if !(0.0..1.0).contains(&w.b1) {
            return Err("wf.b1 must lie in [0, 1)".into());
        }
        unit("wf.x0", w.x0)?;
    }
    Ok(())
}
