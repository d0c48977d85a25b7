//! Stages, dependencies and the scenario a simulation runs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::gpu::{GpuConfig, KernelSpec};
use crate::policy::{self, SyncPolicy, TileOrder};

/// Time charged for each part of a tile computation, in abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Loading one tile of operand A, per k-step.
    pub load_a: u64,
    /// Loading one tile of operand B, per k-step.
    pub load_b: u64,
    /// Multiply-accumulate, per k-step.
    pub compute: u64,
    /// Charged once per post and once per wait check.
    pub sync_overhead: u64,
    /// Charged once per tile after the last k-step.
    pub epilogue: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { load_a: 1, load_b: 1, compute: 1, sync_overhead: 0, epilogue: 0 }
    }
}

impl CostModel {
    pub fn load(&self, operand: Operand) -> u64 {
        match operand {
            Operand::A => self.load_a,
            Operand::B => self.load_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    A,
    B,
}

impl Operand {
    pub const ALL: [Operand; 2] = [Operand::A, Operand::B];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub order: TileOrder,
    /// Stream priority; lower values are issued first.
    pub priority: u32,
    #[serde(default)]
    pub cost: CostModel,
}

impl Stage {
    pub fn new(kernel: KernelSpec, priority: u32) -> Self {
        Stage { kernel, order: TileOrder::RowMajor, priority, cost: CostModel::default() }
    }

    pub fn with_order(mut self, order: TileOrder) -> Self {
        self.order = order;
        self
    }
}

/// Operand `operand` of stage `consumer` is produced by stage `producer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    pub producer: usize,
    pub consumer: usize,
    pub operand: Operand,
    pub policy: SyncPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Stages run back to back on one stream.
    StreamSync,
    /// Stages run on separate streams and synchronize per tile.
    FineGrained,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::StreamSync => "stream",
            Mode::FineGrained => "fine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitKernel {
    On,
    Off,
    /// Gate only the dependencies whose two kernels do not fit in one wave.
    #[default]
    Auto,
}

impl fmt::Display for WaitKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaitKernel::On => "on",
            WaitKernel::Off => "off",
            WaitKernel::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub wait_kernel: WaitKernel,
    pub reorder_loads: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub gpu: GpuConfig,
    /// In invocation order.
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    pub mode: Mode,
    #[serde(default)]
    pub options: Options,
}

impl Scenario {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_options(mut self, options: Options) -> Self {
        self.options = options;
        self
    }

    /// Replaces the policy of every dependency.
    pub fn with_policy(mut self, policy: SyncPolicy) -> Self {
        for dep in &mut self.dependencies {
            dep.policy = policy;
        }
        self
    }

    /// Applies `cost` to every stage.
    pub fn with_cost(mut self, cost: CostModel) -> Self {
        for stage in &mut self.stages {
            stage.cost = cost;
        }
        self
    }

    /// Reverses stream priorities so that consumers are issued before their
    /// producers.
    pub fn with_consumer_first_priorities(mut self) -> Self {
        let n = self.stages.len() as u32;
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.priority = n - 1 - i as u32;
        }
        self
    }

    pub fn total_tiles(&self) -> u64 {
        self.stages.iter().map(|s| s.kernel.tbs()).sum()
    }

    /// Dependencies in which `stage` is the consumer.
    pub fn deps_into(&self, stage: usize) -> impl Iterator<Item = (usize, &Dependency)> {
        self.dependencies.iter().enumerate().filter(move |(_, d)| d.consumer == stage)
    }

    /// Dependencies in which `stage` is the producer.
    pub fn deps_from(&self, stage: usize) -> impl Iterator<Item = (usize, &Dependency)> {
        self.dependencies.iter().enumerate().filter(move |(_, d)| d.producer == stage)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.stages.is_empty() {
            return Err(ScenarioError::NoStages);
        }
        if self.gpu.num_sms == 0 {
            return Err(ScenarioError::Params("GPU needs at least one SM".into()));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let k = &stage.kernel;
            KernelSpec::new(k.name.clone(), k.grid, k.occupancy, k.k_steps)
                .map_err(|source| ScenarioError::Kernel { stage: i, source })?;
            policy::validate_order(stage.order, k.grid).map_err(|source| ScenarioError::Order { stage: i, source })?;
        }
        let count = self.stages.len();
        for (i, dep) in self.dependencies.iter().enumerate() {
            for stage in [dep.producer, dep.consumer] {
                if stage >= count {
                    return Err(ScenarioError::UnknownStage { dep: i, stage, count });
                }
            }
            if dep.producer == dep.consumer {
                return Err(ScenarioError::SelfDependency { dep: i, stage: dep.producer });
            }
            policy::validate_dependency(
                dep.policy,
                &self.stages[dep.producer].kernel,
                &self.stages[dep.consumer].kernel,
            )
            .map_err(|source| ScenarioError::Policy { dep: i, source })?;
        }
        self.topological_order().map(|_| ())
    }

    /// Stages ordered so that every producer precedes its consumers.
    pub fn topological_order(&self) -> Result<Vec<usize>, ScenarioError> {
        let n = self.stages.len();
        let mut indegree = vec![0usize; n];
        for dep in &self.dependencies {
            indegree[dep.consumer] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&s| indegree[s] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = ready.pop() {
            order.push(s);
            for dep in self.dependencies.iter().filter(|d| d.producer == s) {
                indegree[dep.consumer] -= 1;
                if indegree[dep.consumer] == 0 {
                    ready.push(dep.consumer);
                }
            }
        }
        match (0..n).find(|&s| indegree[s] > 0) {
            Some(stage) => Err(ScenarioError::Cycle { stage }),
            None => Ok(order),
        }
    }
}
