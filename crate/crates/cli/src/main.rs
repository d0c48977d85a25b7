use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tilesync_cli::commands::{self, CompareSettings, SweepSpec, EXIT_ERROR};
use tilesync_cli::config::{self, CostOverrides, Flags, ModeName, RunConfig};
use tilesync_core::workloads::PolicyChoice;
use tilesync_core::WaitKernel;

/// Simulate thread-block wave scheduling of dependent GPU kernels.
///
/// Exit codes: 0 success, 1 error, 2 unexpected deadlock, 3 expected
/// deadlock did not occur, 4 trace violations.
#[derive(Parser)]
#[command(name = "tilesync-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and print its metrics.
    Run(RunArgs),
    /// Stream-ordered versus tile-synchronized metrics, one row per preset.
    Compare(CompareArgs),
    /// Cartesian product of presets, policies and options, one CSV row per run.
    Sweep(SweepArgs),
    /// Check an exported trace against the tile dependency graph.
    Validate { trace: PathBuf },
    /// List preset names and the policies each accepts, default first.
    ListPresets,
}

#[derive(Args, Default)]
struct Tuning {
    /// Override the load cost of both operands.
    #[arg(long)]
    load_cost: Option<u64>,
    #[arg(long)]
    compute_cost: Option<u64>,
    #[arg(long)]
    sync_overhead: Option<u64>,
    #[arg(long)]
    epilogue_cost: Option<u64>,
    #[arg(long, value_parser = config::parse_wait_kernel, conflicts_with = "no_wait_kernel")]
    wait_kernel: Option<WaitKernel>,
    /// Same as `--wait-kernel off`.
    #[arg(long)]
    no_wait_kernel: bool,
    #[arg(long)]
    reorder_loads: bool,
    /// Issue consumers before their producers.
    #[arg(long)]
    adversarial_order: bool,
}

impl Tuning {
    fn cost(&self) -> CostOverrides {
        CostOverrides {
            load: self.load_cost,
            compute: self.compute_cost,
            sync_overhead: self.sync_overhead,
            epilogue: self.epilogue_cost,
        }
    }

    fn wait_kernel(&self) -> Option<WaitKernel> {
        if self.no_wait_kernel {
            Some(WaitKernel::Off)
        } else {
            self.wait_kernel
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset name, see `list-presets`.
    #[arg(long)]
    preset: Option<String>,
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = config::parse_mode)]
    mode: Option<ModeName>,
    #[arg(long, value_parser = config::parse_policy)]
    policy: Option<PolicyChoice>,
    #[command(flatten)]
    tuning: Tuning,
    /// Succeed only if the simulation deadlocks.
    #[arg(long)]
    expect_deadlock: bool,
    /// JSONL trace output; with both modes, `.stream`/`.fine` is inserted before the extension.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Seed for the `random` preset.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated preset names.
    #[arg(long, value_delimiter = ',', required_unless_present = "suite")]
    preset: Vec<String>,
    /// table5, table7 or all.
    #[arg(long, conflicts_with = "preset")]
    suite: Option<String>,
    #[arg(long, value_parser = config::parse_policy)]
    policy: Option<PolicyChoice>,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated preset names.
    #[arg(long)]
    presets: Option<String>,
    /// table5, table7, all or random.
    #[arg(long)]
    suite: Option<String>,
    /// Number of scenarios for `--suite random`.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated policies; inapplicable combinations are skipped.
    #[arg(long)]
    policies: Option<String>,
    /// Comma-separated modes.
    #[arg(long, default_value = "fine")]
    modes: String,
    /// Comma-separated on/off/auto.
    #[arg(long)]
    wait_kernels: Option<String>,
    /// Comma-separated on/off.
    #[arg(long)]
    reorder: Option<String>,
    #[arg(long)]
    load_costs: Option<String>,
    #[arg(long)]
    compute_costs: Option<String>,
    #[arg(long)]
    adversarial_order: bool,
    /// Write rows here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn list<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(parse).collect()
}

fn parse_switch(s: &str) -> Result<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => anyhow::bail!("expected on or off, got `{s}`"),
    }
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = SweepSpec { adversarial: a.adversarial_order, ..Default::default() };
    if let Some(p) = &a.presets {
        spec.presets = list(p, |s| Ok(s.to_string()))?;
    }
    match a.suite.as_deref() {
        None => {}
        Some("random") => spec.random = Some((a.seed, a.count)),
        Some(name) => spec.presets.extend(commands::suite(name)?),
    }
    if let Some(p) = &a.policies {
        spec.policies = Some(list(p, config::parse_policy)?);
    }
    spec.modes = Vec::new();
    for m in list(&a.modes, config::parse_mode)?.into_iter().flat_map(ModeName::modes) {
        if !spec.modes.contains(&m) {
            spec.modes.push(m);
        }
    }
    if let Some(w) = &a.wait_kernels {
        spec.wait_kernels = list(w, |s| config::parse_wait_kernel(s).map(Some))?;
    }
    if let Some(r) = &a.reorder {
        spec.reorder = list(r, |s| parse_switch(s).map(Some))?;
    }
    let costs = |s: &str| list(s, |v| Ok(Some(v.parse::<u64>()?)));
    if let Some(c) = &a.load_costs {
        spec.load_costs = costs(c)?;
    }
    if let Some(c) = &a.compute_costs {
        spec.compute_costs = costs(c)?;
    }
    Ok(spec)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Command::Run(a) => {
            let flags = Flags {
                preset: a.preset,
                config: a.config,
                mode: a.mode,
                policy: a.policy,
                wait_kernel: a.tuning.wait_kernel(),
                reorder_loads: a.tuning.reorder_loads,
                adversarial: a.tuning.adversarial_order,
                expect_deadlock: a.expect_deadlock,
                cost: a.tuning.cost(),
                trace: a.trace,
                csv: a.csv,
                seed: a.seed,
            };
            commands::run(&RunConfig::resolve(flags)?, &mut out)?
        }
        Command::Compare(a) => {
            let presets = match &a.suite {
                Some(s) => commands::suite(s)?,
                None => a.preset.clone(),
            };
            let settings = CompareSettings {
                policy: a.policy,
                cost: a.tuning.cost(),
                wait_kernel: a.tuning.wait_kernel(),
                reorder_loads: a.tuning.reorder_loads.then_some(true),
                adversarial: a.tuning.adversarial_order,
                csv: a.csv,
            };
            commands::compare(&presets, &settings, &mut out)?
        }
        Command::Sweep(a) => commands::sweep(&sweep_spec(&a)?, a.csv.as_deref(), &mut out)?,
        Command::Validate { trace } => commands::validate(&trace, &mut out)?,
        Command::ListPresets => commands::list_presets(&mut out)?,
    };
    out.flush()?;
    Ok(code)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
