//! Configuration-driven experiment runner.
//!
//! Every subcommand reads one JSON configuration, applies command-line
//! overrides, runs with deterministic seeding, and writes CSV/JSON outputs
//! plus a run manifest into the output directory. Exit codes separate
//! misuse from scientific failure: 1 for configuration errors, 2 for
//! precondition violations (asking the model for something it does not
//! define), 3 for a probe or duality verdict that failed.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use bpi_core::analysis;
use bpi_core::ctmc;
use bpi_core::digest::digest_value;
use bpi_core::dual;
use bpi_core::harness;
use bpi_core::model::StartParity;
use bpi_core::rng::replicate_rng;
use bpi_core::stats::{par_replicate_map, MCEstimate};

use config::ExperimentConfig;

const DOMAIN_CLI_SIMULATE: u64 = 0x43_4c_49_01;
const DOMAIN_CLI_HIT: u64 = 0x43_4c_49_02;
const DOMAIN_CLI_PATH_X: u64 = 0x43_4c_49_03;
const DOMAIN_CLI_FIXATION: u64 = 0x43_4c_49_04;
const DOMAIN_CLI_WF: u64 = 0x43_4c_49_05;

#[derive(Parser)]
#[command(
    name = "bpi",
    about = "Interacting branching processes: exact simulation, moment-dual \
             diffusion, stationary analysis, and verification probes"
)]
struct Cli {
    /// Path to the experiment configuration (JSON).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the replicate count of the invoked subcommand.
    #[arg(long, global = true)]
    replicates: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Print regime and long-term classification as JSON.
    Classify,
    /// Simulate the integer-valued process; batch CSV of outcomes.
    SimulateZ,
    /// Simulate the dual jump-diffusion; one path CSV per replicate.
    SimulateX,
    /// Monte Carlo generating-function estimate of E_n[x^{Z_t}].
    GenFunc,
    /// Stationary distribution, numeric and (when applicable) closed form.
    Stationary,
    /// Numerical scale function table.
    Scale,
    /// Fixation probability, expected time, bound, and optional MC batch.
    Fixation,
    /// Moment-duality check between the two simulators.
    Duality,
    /// Statistical verification probes.
    Probe {
        #[arg(value_enum)]
        kind: ProbeKind,
    },
    /// Discrete resource-efficiency chain path.
    WfEfficiency,
}

#[derive(ValueEnum, Clone, Copy)]
enum ProbeKind {
    Cdi,
    Explosion,
    Parity,
    Uniform,
}

enum CliError {
    Config(String),
    Precondition(String),
    VerdictFailed(String),
}

impl From<bpi_core::Error> for CliError {
    fn from(e: bpi_core::Error) -> Self {
        match e {
            bpi_core::Error::InvalidParams(m) => CliError::Config(m),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Precondition(msg)) => {
            eprintln!("precondition violation: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::VerdictFailed(msg)) => {
            eprintln!("verdict failed: {msg}");
            ExitCode::from(3)
        }
    }
}

struct Runner {
    config: ExperimentConfig,
    digest: String,
    out_dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
    command_label: String,
}

impl Runner {
    fn write_text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(name), body)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let tagged = format!("# config_digest={}\n{body}", self.digest);
        self.write_text(name, &tagged)
    }

    fn write_json(&mut self, name: &str, payload: serde_json::Value) -> Result<(), CliError> {
        let wrapped = json!({
            "config_digest": self.digest,
            "seed": self.config.seed,
            "payload": payload,
        });
        let body = serde_json::to_string_pretty(&wrapped).expect("serializable payload");
        self.write_text(name, &format!("{body}\n"))
    }

    fn finish(self) -> Result<(), CliError> {
        let manifest = json!({
            "command": self.command_label,
            "config_digest": self.digest,
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_ms": self.started.elapsed().as_millis() as u64,
            "outputs": self.outputs,
        });
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join("run_manifest.json"), format!("{body}\n"))?;
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config::validate(&config).map_err(CliError::Config)?;
    Ok(config)
}

fn command_label(command: &Command) -> String {
    match command {
        Command::Classify => "classify".into(),
        Command::SimulateZ => "simulate-z".into(),
        Command::SimulateX => "simulate-x".into(),
        Command::GenFunc => "gen-func".into(),
        Command::Stationary => "stationary".into(),
        Command::Scale => "scale".into(),
        Command::Fixation => "fixation".into(),
        Command::Duality => "duality".into(),
        Command::Probe { kind } => match kind {
            ProbeKind::Cdi => "probe cdi".into(),
            ProbeKind::Explosion => "probe explosion".into(),
            ProbeKind::Parity => "probe parity".into(),
            ProbeKind::Uniform => "probe uniform".into(),
        },
        Command::WfEfficiency => "wf-efficiency".into(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    let digest =
        digest_value(&serde_json::to_value(&config).map_err(|e| CliError::Config(e.to_string()))?);
    let mut runner = Runner {
        out_dir: config.output_dir.clone(),
        digest,
        config,
        outputs: Vec::new(),
        started: Instant::now(),
        command_label: command_label(&cli.command),
    };
    match &cli.command {
        Command::Classify => classify(&mut runner)?,
        Command::SimulateZ => simulate_z(&mut runner, cli.replicates)?,
        Command::SimulateX => simulate_x(&mut runner, cli.replicates)?,
        Command::GenFunc => gen_func(&mut runner, cli.replicates)?,
        Command::Stationary => stationary(&mut runner)?,
        Command::Scale => scale(&mut runner)?,
        Command::Fixation => fixation(&mut runner, cli.replicates)?,
        Command::Duality => duality(&mut runner, cli.replicates)?,
        Command::Probe { kind } => probe(&mut runner, *kind, cli.replicates)?,
        Command::WfEfficiency => wf_efficiency(&mut runner)?,
    }
    runner.finish()
}

fn classify(runner: &mut Runner) -> Result<(), CliError> {
    let params = &runner.config.params;
    let derived = params.derive();
    let parity = runner
        .config
        .classify
        .as_ref()
        .and_then(|c| c.start_parity)
        .unwrap_or(StartParity::NotApplicable);
    let out = json!({
        "regime": params.classify_regime(),
        "sigma": derived.sigma_coop,
        "m": derived.m,
        "long_term": params.classify_long_term(parity),
    });
    println!("{out}");
    runner.write_json("classify.json", out)
}

fn simulate_z(runner: &mut Runner, replicates: Option<u64>) -> Result<(), CliError> {
    let block = runner
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `simulate` block".into()))?;
    let params = runner.config.params.clone();
    let seed = runner.config.seed;
    let reps = replicates.unwrap_or(block.replicates).max(1);
    let (n0, horizon, cap) = (block.n0, block.horizon, block.cap);
    match block.hit_targets.clone() {
        None => {
            let paths: Vec<ctmc::PathZ> = par_replicate_map(reps, |r| {
                let mut rng = replicate_rng(seed, DOMAIN_CLI_SIMULATE, r);
                ctmc::simulate_z(&params, n0, horizon, cap, &mut rng)
            });
            runner.write_csv("simulate_z.csv", &ctmc::batch_csv(&paths))
        }
        Some(targets) => {
            let results: Vec<ctmc::HitOutcome> = par_replicate_map(reps, |r| {
                let mut rng = replicate_rng(seed, DOMAIN_CLI_HIT, r);
                ctmc::hitting_time(&params, n0, &targets, horizon, cap, &mut rng)
            });
            runner.write_csv("hitting_times.csv", &ctmc::hitting_batch_csv(&results))
        }
    }
}

fn simulate_x(runner: &mut Runner, replicates: Option<u64>) -> Result<(), CliError> {
    let block = runner
        .config
        .dual
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `dual` block".into()))?;
    let params = runner.config.params.clone();
    let seed = runner.config.seed;
    let reps = replicates.unwrap_or(block.replicates).max(1);
    let (x0, horizon, dt) = (block.x0, block.horizon, block.dt);
    let paths: Vec<bpi_core::Result<dual::PathX>> = par_replicate_map(reps, |r| {
        let mut rng = replicate_rng(seed, DOMAIN_CLI_PATH_X, r);
        dual::simulate_x(&params, x0, horizon, dt, &mut rng)
    });
    for (r, path) in paths.into_iter().enumerate() {
        let path = path?;
        runner.write_csv(&format!("path_x_{r:04}.csv"), &dual::path_csv(&path))?;
    }
    Ok(())
}

fn gen_func(runner: &mut Runner, replicates: Option<u64>) -> Result<(), CliError> {
    let block = runner
        .config
        .gen_func
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `gen_func` block".into()))?;
    let reps = replicates.unwrap_or(block.replicates).max(1);
    let est = ctmc::mc_generating_function(
        &runner.config.params,
        block.n0,
        block.t,
        block.x,
        reps,
        block.cap,
        runner.config.seed,
    )?;
    let payload = serde_json::to_value(est).expect("estimate serializes");
    println!("{payload}");
    runner.write_json("gen_func.json", payload)
}

fn closed_form_args(params: &bpi_core::model::InteractionParams) -> Option<(f64, f64, f64)> {
    if params.d() != 0.0 || params.a() != 0.0 || !params.lambda().is_empty() {
        return None;
    }
    match (params.pi(), params.b()) {
        ([(1, rho)], [(1, b1)]) if params.c() > *b1 && *rho > 0.0 => Some((*rho, *b1, params.c())),
        _ => None,
    }
}

fn stationary(runner: &mut Runner) -> Result<(), CliError> {
    let block = runner
        .config
        .stationary
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `stationary` block".into()))?;
    let n_max = block.n_max;
    let closed_form_k = block.closed_form_k;
    let params = runner.config.params.clone();
    let numeric = analysis::stationary_numeric(&params, n_max)?;
    runner.write_csv("stationary_numeric.csv", &numeric.csv())?;
    let mut summary = json!({
        "n_max": n_max,
        "mean": numeric.mean(),
        "residual": analysis::stationary_residual(&params, n_max, &numeric)?,
    });
    if let Some((rho, b1, c)) = closed_form_args(&params) {
        let k_max = closed_form_k.unwrap_or(n_max);
        let closed = analysis::stationary_closed_form(rho, b1, c, k_max)?;
        runner.write_csv("stationary_closed_form.csv", &closed.distribution.csv())?;
        summary["closed_form"] = json!({
            "k_max": k_max,
            "truncation_error": closed.truncation_error,
            "tv_to_numeric": numeric.tv_distance(&closed.distribution),
        });
    }
    println!("{summary}");
    runner.write_json("stationary_summary.json", summary)
}

fn scale(runner: &mut Runner) -> Result<(), CliError> {
    let block = runner
        .config
        .scale
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `scale` block".into()))?;
    let (levels, panels, evals) = (block.refine_levels, block.panels, block.eval_points.clone());
    let table = analysis::scale_function(&runner.config.params, levels, panels)?;
    runner.write_csv("scale.csv", &table.csv())?;
    if !evals.is_empty() {
        let rows: Vec<serde_json::Value> = evals
            .iter()
            .map(|&x| json!({"x": x, "S": table.eval(x), "ratio": table.ratio(x)}))
            .collect();
        runner.write_json("scale_evals.json", json!(rows))?;
    }
    Ok(())
}

fn fixation(runner: &mut Runner, replicates: Option<u64>) -> Result<(), CliError> {
    let block = runner
        .config
        .fixation
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `fixation` block".into()))?;
    let (x, dt, horizon, eps, n_max) =
        (block.x, block.dt, block.horizon, block.eps_fix, block.n_max);
    let reps = replicates.unwrap_or(block.replicates);
    let params = runner.config.params.clone();
    let seed = runner.config.seed;
    let mut notes: Vec<String> = Vec::new();
    let mut payload = serde_json::Map::new();
    payload.insert("x".into(), json!(x));

    match analysis::fixation_probability(&params, x) {
        Ok(p) => {
            payload.insert("fixation_probability".into(), json!(p));
        }
        Err(e) => notes.push(format!("fixation_probability: {e}")),
    }
    match analysis::fixation_time_green(&params, x) {
        Ok(t) => {
            payload.insert("expected_time_green".into(), json!(t));
        }
        Err(e) => notes.push(format!("expected_time_green: {e}")),
    }
    match analysis::fixation_time_bound(x, params.c(), params.b()) {
        Ok(b) => {
            payload.insert("time_bound".into(), json!(b));
        }
        Err(e) => notes.push(format!("time_bound: {e}")),
    }
    match analysis::dual_fixation_limit(&params, x, n_max) {
        Ok(l) => {
            payload.insert("dual_fixation_limit".into(), json!(l));
        }
        Err(e) => notes.push(format!("dual_fixation_limit: {e}")),
    }

    if reps > 0 {
        let samples: Vec<bpi_core::Result<dual::FixationResult>> = par_replicate_map(reps, |r| {
            let mut rng = replicate_rng(seed, DOMAIN_CLI_FIXATION, r);
            dual::fixation_sample(&params, x, horizon, dt, eps, &mut rng)
        });
        let samples: Vec<dual::FixationResult> =
            samples.into_iter().collect::<bpi_core::Result<_>>()?;
        runner.write_csv("fixation_batch.csv", &dual::fixation_batch_csv(&samples))?;
        let fixed: Vec<&dual::FixationResult> = samples.iter().filter(|r| !r.timed_out).collect();
        let at_one = fixed
            .iter()
            .filter(|r| r.boundary == Some(dual::Boundary::One))
            .count();
        let times: Vec<f64> = fixed.iter().map(|r| r.time).collect();
        payload.insert(
            "mc".into(),
            json!({
                "replicates": reps,
                "timed_out": samples.len() - fixed.len(),
                "fixed_at_one_fraction": at_one as f64 / reps as f64,
                "mean_time": if times.is_empty() {
                    serde_json::Value::Null
                } else {
                    serde_json::to_value(MCEstimate::from_values(&times, 0))
                        .expect("estimate serializes")
                },
            }),
        );
    } else if payload.len() == 1 {
        // Nothing computable and no sampling requested.
        return Err(CliError::Precondition(notes.join("; ")));
    }
    payload.insert("notes".into(), json!(notes));
    let payload = serde_json::Value::Object(payload);
    println!("{payload}");
    runner.write_json("fixation.json", payload)
}

fn duality(runner: &mut Runner, replicates: Option<u64>) -> Result<(), CliError> {
    let block = runner
        .config
        .duality
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `duality` block".into()))?;
    let reps = replicates.unwrap_or(block.replicates).max(1);
    let report = harness::duality_check(
        &runner.config.params,
        block.x,
        block.n,
        block.t,
        reps,
        block.dt,
        block.cap,
        runner.config.seed,
    )?;
    let payload = serde_json::to_value(&report).expect("report serializes");
    println!("{payload}");
    runner.write_json("duality.json", payload)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::VerdictFailed(format!(
            "duality z = {:.2} (dt bias {:.2e}, cap bias {:.2e})",
            report.z_score, report.dt_bias_estimate, report.cap_bias_bound
        )))
    }
}

fn probe(runner: &mut Runner, kind: ProbeKind, replicates: Option<u64>) -> Result<(), CliError> {
    let probes = runner
        .config
        .probes
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `probes` block".into()))?;
    let params = runner.config.params.clone();
    let seed = runner.config.seed;
    let (name, report) = match kind {
        ProbeKind::Cdi => {
            let c = probes
                .cdi
                .as_ref()
                .ok_or_else(|| CliError::Config("missing `probes.cdi` block".into()))?;
            let reps = replicates.unwrap_or(c.replicates).max(1);
            (
                "cdi",
                harness::cdi_probe(&params, &c.n_list, c.horizon, c.cap, reps, seed)?,
            )
        }
        ProbeKind::Explosion => {
            let e = probes
                .explosion
                .as_ref()
                .ok_or_else(|| CliError::Config("missing `probes.explosion` block".into()))?;
            let reps = replicates.unwrap_or(e.replicates).max(1);
            (
                "explosion",
                harness::explosion_probe(&params, e.n0, &e.cap_list, e.horizon, reps, seed)?,
            )
        }
        ProbeKind::Parity => {
            let p = probes
                .parity
                .as_ref()
                .ok_or_else(|| CliError::Config("missing `probes.parity` block".into()))?;
            let reps = replicates.unwrap_or(p.replicates).max(1);
            (
                "parity",
                harness::parity_probe(&params, p.n0, p.horizon, p.cap, reps, seed)?,
            )
        }
        ProbeKind::Uniform => {
            let u = probes
                .uniform
                .as_ref()
                .ok_or_else(|| CliError::Config("missing `probes.uniform` block".into()))?;
            let reps = replicates.unwrap_or(u.replicates).max(1);
            (
                "uniform",
                harness::uniform_convergence_probe(
                    &params, u.n_pair, &u.t_list, reps, u.n_max, u.cap, seed,
                )?,
            )
        }
    };
    runner.write_csv(&format!("probe_{name}_cells.csv"), &report.cells_csv())?;
    let payload = serde_json::to_value(&report).expect("report serializes");
    println!("{payload}");
    runner.write_json(&format!("probe_{name}.json"), payload)?;
    if report.verdict == harness::Verdict::Fail {
        Err(CliError::VerdictFailed(report.summary))
    } else {
        Ok(())
    }
}

fn wf_efficiency(runner: &mut Runner) -> Result<(), CliError> {
    let block = runner
        .config
        .wf
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `wf` block".into()))?;
    let mut rng = replicate_rng(runner.config.seed, DOMAIN_CLI_WF, 0);
    let path = dual::simulate_wf_efficiency(
        block.n_resource,
        block.b1,
        block.x0,
        block.generations,
        &mut rng,
    )?;
    let mut csv = String::from("generation,frequency\n");
    for (g, x) in path.iter().enumerate() {
        csv.push_str(&format!("{g},{x}\n"));
    }
    runner.write_csv("wf_path.csv", &csv)
}
