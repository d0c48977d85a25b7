//! Run configuration: an optional TOML file overlaid by command-line flags.
//!
//! ```toml
//! schema_version = 1
//! preset = "mlp:1024"          # or an inline [scenario] table
//! modes = ["stream", "fine"]
//! policy = "row"
//! wait_kernel = "auto"
//! reorder_loads = false
//! adversarial_order = false
//! expect_deadlock = false
//! trace = "out/trace.jsonl"
//! csv = "out/metrics.csv"
//!
//! [cost]
//! load = 1
//! compute = 1
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tilesync_core::workloads::{self, PolicyChoice};
use tilesync_core::{Mode, Scenario, SyncPolicy, WaitKernel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Stream,
    Fine,
    Both,
}

impl ModeName {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeName::Stream => vec![Mode::StreamSync],
            ModeName::Fine => vec![Mode::FineGrained],
            ModeName::Both => vec![Mode::StreamSync, Mode::FineGrained],
        }
    }
}

pub fn parse_mode(s: &str) -> Result<ModeName> {
    Ok(match s {
        "stream" => ModeName::Stream,
        "fine" => ModeName::Fine,
        "both" => ModeName::Both,
        _ => bail!("unknown mode `{s}` (expected stream, fine or both)"),
    })
}

pub fn parse_policy(s: &str) -> Result<PolicyChoice> {
    PolicyChoice::parse(s).with_context(|| format!("unknown policy `{s}` (expected tile, row, strided or conv2dtile)"))
}

pub fn parse_wait_kernel(s: &str) -> Result<WaitKernel> {
    Ok(match s {
        "on" => WaitKernel::On,
        "off" => WaitKernel::Off,
        "auto" => WaitKernel::Auto,
        _ => bail!("unknown wait-kernel setting `{s}` (expected on, off or auto)"),
    })
}

/// Per-stage cost overrides; unset fields keep the scenario's values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverrides {
    /// Applies to both operands.
    pub load: Option<u64>,
    pub compute: Option<u64>,
    pub sync_overhead: Option<u64>,
    pub epilogue: Option<u64>,
}

impl CostOverrides {
    pub fn merge(self, over: CostOverrides) -> CostOverrides {
        CostOverrides {
            load: over.load.or(self.load),
            compute: over.compute.or(self.compute),
            sync_overhead: over.sync_overhead.or(self.sync_overhead),
            epilogue: over.epilogue.or(self.epilogue),
        }
    }

    pub fn apply(&self, sc: &mut Scenario) {
        for st in &mut sc.stages {
            if let Some(v) = self.load {
                st.cost.load_a = v;
                st.cost.load_b = v;
            }
            if let Some(v) = self.compute {
                st.cost.compute = v;
            }
            if let Some(v) = self.sync_overhead {
                st.cost.sync_overhead = v;
            }
            if let Some(v) = self.epilogue {
                st.cost.epilogue = v;
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub scenario: Option<Scenario>,
    pub modes: Option<Vec<ModeName>>,
    pub policy: Option<String>,
    pub wait_kernel: Option<WaitKernel>,
    pub reorder_loads: Option<bool>,
    pub adversarial_order: Option<bool>,
    pub expect_deadlock: Option<bool>,
    pub cost: Option<CostOverrides>,
    pub trace: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            );
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Preset(String),
    Inline(Box<Scenario>),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Preset(name) => name.clone(),
            Source::Inline(sc) => sc.name.clone(),
        }
    }
}

/// Everything a `run` needs, after merging file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub modes: Vec<Mode>,
    pub policy: Option<PolicyChoice>,
    pub cost: CostOverrides,
    pub wait_kernel: Option<WaitKernel>,
    pub reorder_loads: Option<bool>,
    pub adversarial: bool,
    pub expect_deadlock: bool,
    pub trace: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Command-line values; `None` defers to the config file.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub mode: Option<ModeName>,
    pub policy: Option<PolicyChoice>,
    pub wait_kernel: Option<WaitKernel>,
    pub reorder_loads: bool,
    pub adversarial: bool,
    pub expect_deadlock: bool,
    pub cost: CostOverrides,
    pub trace: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn resolve(flags: Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile { schema_version: SCHEMA_VERSION, ..ConfigFile::default() },
        };
        let seed = flags.seed.or(file.seed);
        let source = match (flags.preset, file.preset, file.scenario) {
            (Some(name), _, _) => preset_source(name, seed),
            (None, Some(_), Some(_)) => bail!("config sets both `preset` and `scenario`"),
            (None, Some(name), None) => preset_source(name, seed),
            (None, None, Some(sc)) => Source::Inline(Box::new(sc)),
            (None, None, None) => bail!("no scenario: pass --preset or --config"),
        };
        let modes = match (flags.mode, file.modes) {
            (Some(m), _) => m.modes(),
            (None, Some(list)) => {
                let mut modes: Vec<Mode> = Vec::new();
                for m in list.into_iter().flat_map(ModeName::modes) {
                    if !modes.contains(&m) {
                        modes.push(m);
                    }
                }
                if modes.is_empty() {
                    bail!("config lists no modes");
                }
                modes
            }
            (None, None) => ModeName::Both.modes(),
        };
        let policy = match (flags.policy, file.policy) {
            (Some(p), _) => Some(p),
            (None, Some(name)) => Some(parse_policy(&name)?),
            (None, None) => None,
        };
        Ok(RunConfig {
            source,
            modes,
            policy,
            cost: file.cost.unwrap_or_default().merge(flags.cost),
            wait_kernel: flags.wait_kernel.or(file.wait_kernel),
            reorder_loads: if flags.reorder_loads { Some(true) } else { file.reorder_loads },
            adversarial: flags.adversarial || file.adversarial_order.unwrap_or(false),
            expect_deadlock: flags.expect_deadlock || file.expect_deadlock.unwrap_or(false),
            trace: flags.trace.or(file.trace),
            csv: flags.csv.or(file.csv),
            seed,
        })
    }

    /// Name of the policy family the scenario runs with.
    pub fn policy_label(&self) -> Result<String> {
        Ok(match (&self.source, self.policy) {
            (_, Some(p)) => p.name().to_string(),
            (Source::Preset(name), None) => workloads::applicable_policies(name)?[0].name().to_string(),
            (Source::Inline(sc), None) => describe_policies(sc),
        })
    }

    pub fn scenario(&self, mode: Mode) -> Result<Scenario> {
        let mut sc = match &self.source {
            Source::Preset(name) => {
                let choice = match self.policy {
                    Some(p) => p,
                    None => workloads::applicable_policies(name)?[0],
                };
                workloads::preset_with(name, choice, mode)?
            }
            Source::Inline(sc) => {
                let mut sc = (**sc).clone().with_mode(mode);
                match self.policy {
                    None => {}
                    Some(PolicyChoice::Tile) => sc = sc.with_policy(SyncPolicy::TileSync),
                    Some(PolicyChoice::Row) => sc = sc.with_policy(SyncPolicy::RowSync),
                    Some(p) => bail!("policy {} needs parameters; set it per dependency in the config", p.name()),
                }
                sc
            }
        };
        self.cost.apply(&mut sc);
        if let Some(wk) = self.wait_kernel {
            sc.options.wait_kernel = wk;
        }
        if let Some(r) = self.reorder_loads {
            sc.options.reorder_loads = r;
        }
        if self.adversarial {
            sc = sc.with_consumer_first_priorities();
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// `random` draws one scenario from the seeded generator.
fn preset_source(name: String, seed: Option<u64>) -> Source {
    if name == RANDOM_PRESET {
        let seed = seed.unwrap_or(0);
        let mut sc = workloads::random_suite(seed, 1).remove(0);
        sc.name = format!("random-{seed}");
        Source::Inline(Box::new(sc))
    } else {
        Source::Preset(name)
    }
}

pub const RANDOM_PRESET: &str = "random";

/// Distinct policy names of a scenario's dependencies, joined by `+`.
pub fn describe_policies(sc: &Scenario) -> String {
    let mut names: Vec<&str> = Vec::new();
    for d in &sc.dependencies {
        if !names.contains(&d.policy.name()) {
            names.push(d.policy.name());
        }
    }
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}
