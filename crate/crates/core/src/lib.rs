//! Discrete-event model of thread-block wave scheduling with tile-level
//! synchronization between dependent GPU kernels.
//!
//! [`simulate`] runs a [`Scenario`] either with whole-kernel stream ordering
//! or with per-tile semaphores, and [`oracle`] checks the resulting traces
//! against an independently built tile dependency graph.

pub mod engine;
pub mod error;
pub mod gpu;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod scenario;
pub mod trace;
pub mod workloads;

pub use engine::{simulate, SimOutput};
pub use error::{GpuError, OracleError, PolicyError, ScenarioError, TraceError};
pub use gpu::{Dim3, GpuConfig, KernelSpec, TileCoord, Waves};
pub use metrics::{Metrics, StageMetrics};
pub use num_rational::Ratio;
pub use policy::{SemaphoreArray, SyncPolicy, TileOrder, WaitSpec};
pub use scenario::{CostModel, Dependency, Mode, Operand, Options, Scenario, Stage, WaitKernel};
pub use trace::{Event, EventKind, SimTrace};
pub use workloads::PolicyChoice;
