//! Command-line entry points.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{PolicyConfig, PolicyName, ScenarioConfig, Seeds};
use crate::demand::{calibrate_distribution, RequestDistribution, SECONDS_PER_DAY};
use crate::error::{CliError, IoError};
use crate::io::{
    load_json, load_requests, load_travel_times, save_json, save_travel_times, write_epochs, write_metrics,
    write_requests, write_snapshots, write_timing, Manifest,
};
use crate::learning::{build_training_set, train, write_trace};
use crate::model::Request;
use crate::policy::PolicySpec;
use crate::sim::{compare_policies, place_fleet, run_simulation, ComparisonRow, Scenario};
use crate::synth::SyntheticWorld;
use crate::travel::TravelTimeProvider;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "AMOD_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "amod", version, about = "Dispatching and rebalancing policies for mobility-on-demand fleets")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario configuration (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Base seed; replaces every seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyName>,
    /// Learned weights for the selected policy.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fleet: Option<usize>,
    #[arg(long, global = true)]
    pub density: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one policy on one scenario.
    Simulate,
    /// Build the imitation training set and fit the policy weights.
    Train,
    /// Compare policies over a grid of fleet sizes and densities.
    Evaluate {
        /// Comma-separated fleet sizes.
        #[arg(long, value_delimiter = ',')]
        fleets: Vec<usize>,
        /// Comma-separated request densities.
        #[arg(long, value_delimiter = ',')]
        densities: Vec<f64>,
    },
    /// Compute the full-information bound of a scenario.
    FullInfo,
    /// Write a synthetic request stream and its travel times.
    Generate {
        /// Number of days to generate.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Estimate the request distribution from a request file.
    Calibrate,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Everything a command needs, with command-line overrides applied.
struct Context {
    cfg: ScenarioConfig,
    config_text: Option<String>,
    out: PathBuf,
    manifest: Manifest,
}

impl Context {
    fn new(common: &Common, command: &str) -> Result<Self, CliError> {
        Self::with_inputs(common, command, true)
    }

    /// `check_inputs` is false for commands that create the input files.
    fn with_inputs(common: &Common, command: &str, check_inputs: bool) -> Result<Self, CliError> {
        let (mut cfg, config_text) = match &common.config {
            Some(p) => (ScenarioConfig::load(p)?, Some(std::fs::read_to_string(p).map_err(|source| IoError::File { path: p.display().to_string(), source })?)),
            None => (ScenarioConfig::default(), None),
        };
        if let Some(s) = common.seed {
            cfg.seeds = Seeds::all(s);
        }
        if let Some(p) = common.policy {
            cfg.policy.kind = p;
        }
        if let Some(m) = &common.model {
            cfg.policy.model = Some(m.clone());
        }
        if let Some(f) = common.fleet {
            cfg.fleet_size = f;
        }
        if let Some(d) = common.density {
            cfg.request_density = d;
        }
        if check_inputs {
            cfg.validate()?;
        }
        let mut manifest = Manifest::new(command);
        manifest.config_sha256 = config_text.as_deref().map(|t| crate::io::sha256_hex(t.as_bytes()));
        manifest.seeds.insert("data".into(), cfg.seeds.data);
        manifest.seeds.insert("fleet".into(), cfg.seeds.fleet);
        manifest.seeds.insert("policy".into(), cfg.seeds.policy);
        manifest.seeds.insert("training".into(), cfg.seeds.training);
        manifest.args = std::env::args().skip(1).collect();
        std::fs::create_dir_all(&common.out).map_err(|source| IoError::File { path: common.out.display().to_string(), source })?;
        Ok(Self { cfg, config_text, out: common.out.clone(), manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn travel_times(&mut self) -> Result<TravelTimeProvider, CliError> {
        let tt = match self.cfg.inputs.travel_times.clone() {
            Some(p) => {
                self.manifest.input(&p)?;
                load_travel_times(&p)?
            }
            None => SyntheticWorld::new(self.cfg.synthetic.clone(), self.cfg.seeds.data).travel_times(),
        };
        self.manifest.travel_times(&tt);
        Ok(tt)
    }

    fn requests(&mut self, density: f64, tt: &TravelTimeProvider) -> Result<Vec<Request>, CliError> {
        match self.cfg.inputs.requests.clone() {
            Some(p) => {
                self.manifest.input(&p)?;
                let loaded = load_requests(&p, density, self.cfg.seeds.data, &self.cfg.objective(), tt)?;
                log::info!("{}: {} rows, {} kept, {} outside the area", p.display(), loaded.rows, loaded.requests.len(), loaded.out_of_area);
                Ok(loaded.requests)
            }
            None => Ok(Vec::new()),
        }
    }

    fn distribution(&mut self, requests: &[Request], tt: &TravelTimeProvider) -> Result<Option<Arc<RequestDistribution>>, CliError> {
        if let Some(p) = self.cfg.inputs.distribution.clone() {
            self.manifest.input(&p)?;
            return Ok(Some(Arc::new(load_json(&p)?)));
        }
        if requests.is_empty() {
            return Ok(None);
        }
        let grid = self.cfg.rebalancing_grid(tt.area());
        Ok(Some(Arc::new(calibrate_distribution(requests, &grid, self.cfg.grid.bin_width_s)?)))
    }

    fn scenario(&self, requests: Vec<Request>, fleet_size: usize, tt: Arc<TravelTimeProvider>, dist: Option<Arc<RequestDistribution>>) -> Scenario {
        let period = self.cfg.period_s;
        let start = self.cfg.start_s.unwrap_or_else(|| requests.first().map_or(0.0, |r| r.start_time));
        let first_epoch = (start / period).floor().max(0.0) as u32;
        let t0 = first_epoch as f64 * period;
        let warmup: Vec<Request> =
            requests.iter().filter(|r| r.start_time >= t0 - self.cfg.warmup_s && r.start_time < t0).copied().collect();
        let fleet = place_fleet(&warmup, fleet_size, tt.area(), self.cfg.seeds.fleet);
        Scenario {
            requests,
            fleet,
            first_epoch,
            epochs: self.cfg.horizon_epochs,
            period_s: period,
            objective: self.cfg.objective(),
            tt,
            dist,
            snapshots: self.cfg.snapshots,
        }
    }

    fn finish(mut self) -> Result<(), CliError> {
        if let Some(p) = self.cfg.policy.model.clone() {
            self.manifest.input(&p)?;
        }
        if let Some(text) = &self.config_text {
            std::fs::write(self.path("config.toml"), text).map_err(|source| IoError::File { path: self.out.display().to_string(), source })?;
        }
        save_json(&self.manifest, &self.path("manifest.json"))?;
        Ok(())
    }
}

fn needs_distribution(kind: PolicyName) -> bool {
    matches!(kind, PolicyName::Sampling | PolicyName::SampleBased | PolicyName::CellBased)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = workers_from_env()? {
        // Fails only when a pool already exists, which is then reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate => simulate(&cli.common, false),
        Command::FullInfo => simulate(&cli.common, true),
        Command::Train => train_cmd(&cli.common),
        Command::Evaluate { fleets, densities } => evaluate(&cli.common, fleets, densities),
        Command::Generate { days } => generate(&cli.common, *days),
        Command::Calibrate => calibrate(&cli.common),
    }
}

fn simulate(common: &Common, full_info: bool) -> Result<(), CliError> {
    let mut ctx = Context::new(common, if full_info { "full-info" } else { "simulate" })?;
    let tt = Arc::new(ctx.travel_times()?);
    let requests = ctx.requests(ctx.cfg.request_density, &tt)?;
    let kind = if full_info { PolicyName::FullInformation } else { ctx.cfg.policy.kind };
    let dist = if needs_distribution(kind) { ctx.distribution(&requests, &tt)? } else { None };
    let policy_cfg = PolicyConfig { kind, ..ctx.cfg.policy.clone() };
    let spec = ctx.cfg.policy_spec(&policy_cfg, tt.area())?;
    let scenario = ctx.scenario(requests, ctx.cfg.fleet_size, tt, dist);
    let outcome = run_simulation(&scenario, &spec)?;
    let m = &outcome.metrics;
    write_metrics(&ctx.path("metrics.csv"), &[m])?;
    write_epochs(&ctx.path("epochs.csv"), m)?;
    if scenario.snapshots {
        write_snapshots(&ctx.path("snapshots.csv"), m)?;
    }
    write_timing(&ctx.path("timing.csv"), &[(spec.name(), outcome.timing)])?;
    if let Some(bound) = outcome.bound {
        save_json(&serde_json::json!({ "bound": bound, "requests": m.requests, "served": m.served }), &ctx.path("full_info.json"))?;
        println!("full-information bound: {bound:.4}");
    }
    println!(
        "{}: reward {:.4}, served {}/{} ({:.4}), km {:.3}",
        m.policy, m.reward, m.served, m.requests, m.service_ratio, m.km
    );
    ctx.finish()
}

/// Groups requests by calendar day (absolute times).
pub fn split_days(requests: &[Request]) -> Vec<Vec<Request>> {
    let mut days: std::collections::BTreeMap<i64, Vec<Request>> = std::collections::BTreeMap::new();
    for r in requests {
        days.entry((r.start_time / SECONDS_PER_DAY).floor() as i64).or_default().push(*r);
    }
    days.into_values().collect()
}

fn train_cmd(common: &Common) -> Result<(), CliError> {
    let mut ctx = Context::new(common, "train")?;
    let tt = ctx.travel_times()?;
    let requests = ctx.requests(ctx.cfg.request_density, &tt)?;
    let dist = ctx.distribution(&requests, &tt)?.ok_or_else(|| CliError::Usage("training needs requests".into()))?;
    let days = split_days(&requests);
    let set_cfg = ctx.cfg.training_set_config(tt.area())?;
    let set = build_training_set(&days, &dist, &tt, &set_cfg)?;
    log::info!("{} instances from {} days ({} moves mapped, {} unmapped)", set.instances.len(), days.len(), set.mapped_moves, set.unmapped_moves);
    let (model, trace) = train(&set.instances, &ctx.cfg.train_config(), set.schema, set.normalization.clone())?;
    model.save(&ctx.path("model.json"))?;
    if ctx.cfg.inputs.distribution.is_none() {
        save_json(&*dist, &ctx.path("distribution.json"))?;
    }
    let f = std::fs::File::create(ctx.path("trace.csv")).map_err(|source| IoError::File { path: ctx.out.display().to_string(), source })?;
    write_trace(&trace, f)?;
    println!("trained {} on {} instances: loss {:.6} after {} iterations", set.schema.name(), set.instances.len(), model.metadata.final_loss, model.metadata.iterations);
    ctx.finish()
}

#[derive(serde::Serialize)]
struct GridRow {
    fleet_size: usize,
    density: f64,
    policy: String,
    reward: f64,
    served: usize,
    service_ratio: f64,
    km_per_request: f64,
    km_per_vehicle: f64,
    reward_ratio: f64,
    served_ratio: f64,
    km_per_request_ratio: f64,
    km_per_vehicle_ratio: f64,
}

impl GridRow {
    fn new(fleet_size: usize, density: f64, r: ComparisonRow) -> Self {
        Self {
            fleet_size,
            density,
            policy: r.policy,
            reward: r.reward,
            served: r.served,
            service_ratio: r.service_ratio,
            km_per_request: r.km_per_request,
            km_per_vehicle: r.km_per_vehicle,
            reward_ratio: r.reward_ratio,
            served_ratio: r.served_ratio,
            km_per_request_ratio: r.km_per_request_ratio,
            km_per_vehicle_ratio: r.km_per_vehicle_ratio,
        }
    }
}

fn evaluate(common: &Common, fleets: &[usize], densities: &[f64]) -> Result<(), CliError> {
    let mut ctx = Context::new(common, "evaluate")?;
    let fleets = [fleets, &ctx.cfg.evaluate.fleet_sizes].into_iter().find(|f| !f.is_empty()).map_or(vec![ctx.cfg.fleet_size], <[usize]>::to_vec);
    let densities =
        [densities, &ctx.cfg.evaluate.densities].into_iter().find(|d| !d.is_empty()).map_or(vec![ctx.cfg.request_density], <[f64]>::to_vec);
    if let Some(d) = densities.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
        return Err(CliError::Usage(format!("density {d} outside (0, 1]")));
    }
    let tt = Arc::new(ctx.travel_times()?);
    let full = ctx.requests(1.0, &tt)?;
    let policies_cfg = ctx.cfg.evaluate.policies.clone();
    let dist = if policies_cfg.iter().any(|p| needs_distribution(p.kind)) { ctx.distribution(&full, &tt)? } else { None };
    let specs: Vec<PolicySpec> = policies_cfg.iter().map(|p| ctx.cfg.policy_spec(p, tt.area())).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &density in &densities {
        let requests = ctx.requests(density, &tt)?;
        for &fleet in &fleets {
            let scenario = ctx.scenario(requests.clone(), fleet, tt.clone(), dist.clone());
            let cmp = compare_policies(&scenario, &specs)?;
            for (row, outcome) in cmp.rows.into_iter().zip(&cmp.outcomes) {
                println!(
                    "fleet {fleet} density {density}: {} reward {:.4} ({:.4} of greedy)",
                    row.policy, row.reward, row.reward_ratio
                );
                timing.push((format!("{}@{fleet}@{density}", row.policy), outcome.timing));
                rows.push(GridRow::new(fleet, density, row));
            }
        }
    }
    let path = ctx.path("comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| IoError::Format(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| IoError::Format(e.to_string()))?;
    }
    w.flush().map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    let timing: Vec<(&str, _)> = timing.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    write_timing(&ctx.path("timing.csv"), &timing)?;
    ctx.finish()
}

fn generate(common: &Common, days: Option<u32>) -> Result<(), CliError> {
    let mut ctx = Context::with_inputs(common, "generate", false)?;
    let mut synth = ctx.cfg.synthetic.clone();
    if let Some(d) = days {
        synth.days = d;
    }
    let world = SyntheticWorld::new(synth, ctx.cfg.seeds.data);
    let requests: Vec<Request> = world.days().into_iter().flatten().collect();
    if requests.is_empty() {
        log::warn!("synthetic demand has zero rate; writing an empty request file");
    }
    write_requests(&ctx.path("requests.csv"), &requests)?;
    let tt = world.travel_times();
    save_travel_times(&tt, &ctx.path("travel_times.json"))?;
    ctx.manifest.travel_times(&tt);
    save_json(&world.hot_cells, &ctx.path("hot_cells.json"))?;
    println!("generated {} requests over {} days", requests.len(), world.config.days);
    ctx.finish()
}

fn calibrate(common: &Common) -> Result<(), CliError> {
    let mut ctx = Context::new(common, "calibrate")?;
    let tt = ctx.travel_times()?;
    let requests = ctx.requests(ctx.cfg.request_density, &tt)?;
    let grid = ctx.cfg.rebalancing_grid(tt.area());
    let dist = calibrate_distribution(&requests, &grid, ctx.cfg.grid.bin_width_s)?;
    save_json(&dist, &ctx.path("distribution.json"))?;
    println!("calibrated {} requests over {} days", dist.total_observed(), dist.days);
    ctx.finish()
}
