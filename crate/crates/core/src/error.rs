use thiserror::Error;

use crate::gpu::{Dim3, TileCoord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GpuError {
    #[error("grid extents must be at least 1, got {x}x{y}x{z}")]
    EmptyGrid { x: u32, y: u32, z: u32 },
    #[error("GPU needs at least one SM")]
    NoSms,
    #[error("occupancy must be at least 1")]
    ZeroOccupancy,
    #[error("k_steps must be at least 1")]
    ZeroKSteps,
    #[error("coordinate {coord} outside grid {grid}")]
    OutOfGrid { coord: TileCoord, grid: Dim3 },
    #[error("linear index {index} outside grid of {total} blocks")]
    IndexOutOfRange { index: u64, total: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("stride {stride} does not divide grid.y = {grid_y}")]
    StrideNotDivisor { stride: u32, grid_y: u32 },
    #[error("kk must be at least 1")]
    ZeroKk,
    #[error("kk = {kk} does not divide consumer k_steps = {k_steps}")]
    KkNotDivisor { kk: u32, k_steps: u32 },
    #[error("consumer has {consumer_rows} rows but producer only {producer_rows}")]
    RowMismatch { consumer_rows: u32, producer_rows: u32 },
    #[error("consumer reads {needed} producer column tiles but producer has {available}")]
    ColumnMismatch { needed: u32, available: u32 },
    #[error(transparent)]
    Gpu(#[from] GpuError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario has no stages")]
    NoStages,
    #[error("dependency {dep} references stage {stage}, but only {count} stages exist")]
    UnknownStage { dep: usize, stage: usize, count: usize },
    #[error("dependency {dep} makes stage {stage} depend on itself")]
    SelfDependency { dep: usize, stage: usize },
    #[error("dependency graph has a cycle through stage {stage}")]
    Cycle { stage: usize },
    #[error("dependency {dep}: {source}")]
    Policy { dep: usize, source: PolicyError },
    #[error("stage {stage}: {source}")]
    Order { stage: usize, source: PolicyError },
    #[error("stage {stage}: {source}")]
    Kernel { stage: usize, source: GpuError },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid workload parameters: {0}")]
    Params(String),
}

/// Problems with the structure of a trace, as opposed to dependency
/// violations recorded in it.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("event {index}: time {time} is earlier than the previous event")]
    TimeWentBackwards { index: usize, time: u64 },
    #[error("event {index}: stage {stage} does not exist")]
    UnknownStage { index: usize, stage: usize },
    #[error("event {index}: dependency {dep} does not exist or does not involve stage {stage}")]
    BadDependency { index: usize, dep: usize, stage: usize },
    #[error("event {index}: thread block {stage}/{tb} {what}")]
    BadLifecycle { index: usize, stage: usize, tb: u64, what: &'static str },
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace file has no header line")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("scenario has {tiles} tiles, reference scheduler is capped at {cap}")]
    TooLarge { tiles: u64, cap: u64 },
    #[error("reference scheduler requires sync_overhead = 0 (stage {stage})")]
    SyncOverhead { stage: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
