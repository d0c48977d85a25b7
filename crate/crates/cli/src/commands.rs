//! Subcommand bodies. Each returns the process exit code; hard errors are
//! returned as `Err` and map to [`EXIT_ERROR`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tilesync_core::oracle::{build_dep_dag, validate_trace};
use tilesync_core::trace::{read_jsonl, write_jsonl};
use tilesync_core::workloads::{self, PolicyChoice};
use tilesync_core::{simulate, Mode, Scenario, WaitKernel};

use crate::config::{describe_policies, CostOverrides, RunConfig, Source, RANDOM_PRESET};
use crate::report::{self, Comparison, Row};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DEADLOCK: i32 = 2;
pub const EXIT_NO_DEADLOCK: i32 = 3;
pub const EXIT_VIOLATIONS: i32 = 4;

pub const THREADS_ENV: &str = "TILESYNC_SIM_THREADS";

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// `trace.jsonl` becomes `trace.stream.jsonl` when several modes share one path.
pub fn trace_path_for(base: &Path, mode: Mode, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{mode}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{mode}"),
    };
    base.with_file_name(name)
}

pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let preset = cfg.source.label();
    let policy = cfg.policy_label()?;
    let scenarios: Vec<Scenario> = cfg.modes.iter().map(|&m| cfg.scenario(m)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut deadlocked = false;
    for (i, sc) in scenarios.iter().enumerate() {
        let sim = simulate(sc)?;
        if let Some(base) = &cfg.trace {
            let path = trace_path_for(base, sc.mode, scenarios.len() > 1);
            write_jsonl(create(&path)?, sc, &sim.trace).with_context(|| format!("writing {}", path.display()))?;
        }
        if i > 0 {
            writeln!(out)?;
        }
        write!(out, "{}", report::key_values(&preset, &policy, &sim.metrics))?;
        deadlocked |= sim.metrics.deadlock;
        rows.extend(report::stage_rows(&preset, &policy, &sim.metrics));
    }
    if let Some(path) = &cfg.csv {
        report::write_csv(create(path)?, &rows)?;
    }
    Ok(match (deadlocked, cfg.expect_deadlock) {
        (false, false) | (true, true) => EXIT_OK,
        (true, false) => {
            eprintln!("deadlock: simulation stalled with unfinished blocks");
            EXIT_DEADLOCK
        }
        (false, true) => {
            eprintln!("expected a deadlock, but every run completed");
            EXIT_NO_DEADLOCK
        }
    })
}

/// Settings shared by every preset of a comparison.
#[derive(Debug, Clone, Default)]
pub struct CompareSettings {
    pub policy: Option<PolicyChoice>,
    pub cost: CostOverrides,
    pub wait_kernel: Option<WaitKernel>,
    pub reorder_loads: Option<bool>,
    pub adversarial: bool,
    pub csv: Option<PathBuf>,
}

pub fn suite(name: &str) -> Result<Vec<String>> {
    Ok(match name {
        "table5" | "mlp" => workloads::table5_presets(),
        "table7" | "conv128" => workloads::table7_presets(),
        "all" => workloads::preset_names(),
        _ => bail!("unknown suite `{name}` (expected table5, table7 or all)"),
    })
}

pub fn compare_rows(presets: &[String], s: &CompareSettings) -> Result<Vec<Comparison>> {
    if presets.is_empty() {
        bail!("nothing to compare");
    }
    presets
        .iter()
        .map(|name| {
            let cfg = RunConfig {
                source: Source::Preset(name.clone()),
                modes: vec![Mode::StreamSync, Mode::FineGrained],
                policy: s.policy,
                cost: s.cost,
                wait_kernel: s.wait_kernel,
                reorder_loads: s.reorder_loads,
                adversarial: s.adversarial,
                expect_deadlock: false,
                trace: None,
                csv: None,
                seed: None,
            };
            let stream = simulate(&cfg.scenario(Mode::StreamSync)?)?.metrics;
            let fine = simulate(&cfg.scenario(Mode::FineGrained)?)?.metrics;
            Ok(Comparison::new(name, &cfg.policy_label()?, &stream, &fine))
        })
        .collect()
}

pub fn compare(presets: &[String], s: &CompareSettings, out: &mut dyn Write) -> Result<i32> {
    let rows = compare_rows(presets, s)?;
    write!(out, "{}", report::comparison_table(&rows))?;
    if let Some(path) = &s.csv {
        report::write_csv(create(path)?, &rows)?;
    }
    if rows.iter().any(|r| r.deadlock) {
        eprintln!("deadlock in at least one comparison");
        return Ok(EXIT_DEADLOCK);
    }
    Ok(EXIT_OK)
}

/// Sweep axes. `None` leaves the scenario's own value in place.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub presets: Vec<String>,
    /// Random scenarios appended after the presets: `(seed, count)`.
    pub random: Option<(u64, usize)>,
    pub policies: Option<Vec<PolicyChoice>>,
    pub modes: Vec<Mode>,
    pub wait_kernels: Vec<Option<WaitKernel>>,
    pub reorder: Vec<Option<bool>>,
    pub load_costs: Vec<Option<u64>>,
    pub compute_costs: Vec<Option<u64>>,
    pub adversarial: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            presets: Vec::new(),
            random: None,
            policies: None,
            modes: vec![Mode::FineGrained],
            wait_kernels: vec![None],
            reorder: vec![None],
            load_costs: vec![None],
            compute_costs: vec![None],
            adversarial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub preset: String,
    pub mode: String,
    pub policy: String,
    pub stage: String,
    pub grid_x: Option<u32>,
    pub grid_y: Option<u32>,
    pub grid_z: Option<u32>,
    pub occupancy: Option<u32>,
    pub waves_frac: String,
    pub waves_ceil: u64,
    pub utilization_pct: String,
    pub makespan: u64,
    pub total_wait: u64,
    pub deadlock: bool,
    pub wait_kernel: String,
    pub reorder_loads: bool,
    pub load_cost: Option<u64>,
    pub compute_cost: Option<u64>,
    pub wave_generations: u64,
}

struct Job {
    cfg: RunConfig,
    mode: Mode,
}

fn sweep_jobs(spec: &SweepSpec) -> Result<Vec<Job>> {
    for (axis, empty) in [
        ("modes", spec.modes.is_empty()),
        ("wait-kernels", spec.wait_kernels.is_empty()),
        ("reorder", spec.reorder.is_empty()),
        ("load-costs", spec.load_costs.is_empty()),
        ("compute-costs", spec.compute_costs.is_empty()),
        ("policies", spec.policies.as_ref().is_some_and(Vec::is_empty)),
        ("presets", spec.presets.is_empty() && spec.random.is_none_or(|(_, n)| n == 0)),
    ] {
        if empty {
            bail!("sweep axis `{axis}` is empty");
        }
    }
    let mut sources: Vec<(Source, Vec<Option<PolicyChoice>>)> = Vec::new();
    for name in &spec.presets {
        let applicable = workloads::applicable_policies(name)?;
        let policies = match &spec.policies {
            None => vec![None],
            Some(list) => list.iter().filter(|p| applicable.contains(p)).map(|&p| Some(p)).collect(),
        };
        sources.push((Source::Preset(name.clone()), policies));
    }
    if let Some((seed, count)) = spec.random {
        for sc in workloads::random_suite(seed, count) {
            sources.push((Source::Inline(Box::new(sc)), vec![None]));
        }
    }
    let mut jobs = Vec::new();
    for (source, policies) in &sources {
        for &policy in policies {
            for &mode in &spec.modes {
                for &wait_kernel in &spec.wait_kernels {
                    for &reorder in &spec.reorder {
                        for &load in &spec.load_costs {
                            for &compute in &spec.compute_costs {
                                let cfg = RunConfig {
                                    source: source.clone(),
                                    modes: vec![mode],
                                    policy,
                                    cost: CostOverrides { load, compute, ..Default::default() },
                                    wait_kernel,
                                    reorder_loads: reorder,
                                    adversarial: spec.adversarial,
                                    expect_deadlock: false,
                                    trace: None,
                                    csv: None,
                                    seed: None,
                                };
                                jobs.push(Job { cfg, mode });
                            }
                        }
                    }
                }
            }
        }
    }
    if jobs.is_empty() {
        bail!("no applicable runs: every preset/policy combination was skipped");
    }
    Ok(jobs)
}

fn run_job(job: &Job) -> Result<SweepRow> {
    let sc = job.cfg.scenario(job.mode)?;
    let policy = match job.cfg.policy {
        Some(p) => p.name().to_string(),
        None => describe_policies(&sc),
    };
    let m = simulate(&sc)?.metrics;
    let Row {
        preset,
        mode,
        policy,
        stage,
        grid_x,
        grid_y,
        grid_z,
        occupancy,
        waves_frac,
        waves_ceil,
        utilization_pct,
        makespan,
        total_wait,
        deadlock,
    } = report::combined_row(&job.cfg.source.label(), &policy, &m);
    Ok(SweepRow {
        preset,
        mode,
        policy,
        stage,
        grid_x,
        grid_y,
        grid_z,
        occupancy,
        waves_frac,
        waves_ceil,
        utilization_pct,
        makespan,
        total_wait,
        deadlock,
        wait_kernel: sc.options.wait_kernel.to_string(),
        reorder_loads: sc.options.reorder_loads,
        load_cost: job.cfg.cost.load,
        compute_cost: job.cfg.cost.compute,
        wave_generations: m.wave_generations,
    })
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!("{THREADS_ENV} must be a positive integer, got `{v}`"),
        },
    }
}

/// Runs every combination of the sweep axes. Rows come back in axis order
/// regardless of how many threads ran them.
pub fn sweep_rows(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let jobs = sweep_jobs(spec)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(thread_count()?).build()?;
    pool.install(|| jobs.par_iter().map(run_job).collect())
}

pub fn sweep(spec: &SweepSpec, csv: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let rows = sweep_rows(spec)?;
    match csv {
        Some(path) => {
            report::write_csv(create(path)?, &rows)?;
            writeln!(out, "runs={}", rows.len())?;
        }
        None => report::write_csv(out, &rows)?,
    }
    Ok(EXIT_OK)
}

pub fn validate(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let (scenario, trace) = read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    scenario.validate().context("trace header")?;
    let violations = validate_trace(&scenario, &trace, &build_dep_dag(&scenario))?;
    writeln!(out, "scenario={}", scenario.name)?;
    writeln!(out, "mode={}", scenario.mode)?;
    writeln!(out, "events={}", trace.len())?;
    writeln!(out, "violations={}", violations.len())?;
    for v in &violations {
        writeln!(out, "violation stage={} tile={} k_step={}: {}", v.stage, v.tile, v.k_step, v.reasons.join("; "))?;
    }
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_VIOLATIONS })
}

pub fn list_presets(out: &mut dyn Write) -> Result<i32> {
    for name in workloads::preset_names() {
        let policies: Vec<&str> = workloads::applicable_policies(&name)?.iter().map(|p| p.name()).collect();
        writeln!(out, "{name:<12} {}", policies.join(","))?;
    }
    writeln!(out, "{:<12} seeded random scenario (--seed)", RANDOM_PRESET)?;
    Ok(EXIT_OK)
}
