//! Scenario constructors and named presets.
//!
//! Preset grids and occupancies are pinned, not derived from tile sizes:
//!
//! | preset      | producer grid | consumer grid | occupancy | policy |
//! |-------------|---------------|---------------|-----------|--------|
//! | `mlp:1-64`  | 1x24x3        | 1x48x1        | 3         | tile   |
//! | `mlp:128`   | 1x48x2        | 1x96x1        | 3         | tile   |
//! | `mlp:256`   | 1x96x2        | 1x96x1        | 2         | tile   |
//! | `mlp:512`   | 2x48x2        | 2x96x1        | 2         | row    |
//! | `mlp:1024`  | 4x48x1        | 4x96x1        | 2         | row    |
//! | `mlp:2048`  | 8x48x1        | 8x96x1        | 2         | row    |
//!
//! `conv128:B` pairs two identical implicit-GeMM convolutions whose k-loop
//! is nine times the producer's column count (3x3 filter).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ScenarioError;
use crate::gpu::{Dim3, GpuConfig, KernelSpec};
use crate::policy::{SyncPolicy, TileOrder};
use crate::scenario::{CostModel, Dependency, Mode, Operand, Options, Scenario, Stage, WaitKernel};

/// Policy family selectable for a preset. Parameters (stride, kk) come from
/// the workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyChoice {
    Tile,
    Row,
    Strided,
    Conv2DTile,
}

impl PolicyChoice {
    pub const ALL: [PolicyChoice; 4] =
        [PolicyChoice::Tile, PolicyChoice::Row, PolicyChoice::Strided, PolicyChoice::Conv2DTile];

    pub fn name(self) -> &'static str {
        match self {
            PolicyChoice::Tile => "tile",
            PolicyChoice::Row => "row",
            PolicyChoice::Strided => "strided",
            PolicyChoice::Conv2DTile => "conv2dtile",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tile" | "tilesync" => Some(PolicyChoice::Tile),
            "row" | "rowsync" => Some(PolicyChoice::Row),
            "strided" | "stridedsync" => Some(PolicyChoice::Strided),
            "conv2dtile" | "conv2dtilesync" => Some(PolicyChoice::Conv2DTile),
            _ => None,
        }
    }
}

fn dim(x: u32, y: u32, z: u32) -> Result<Dim3, ScenarioError> {
    Dim3::new(x, y, z).map_err(|e| ScenarioError::Params(e.to_string()))
}

fn kernel(name: &str, grid: Dim3, occupancy: u32, k_steps: u32) -> Result<KernelSpec, ScenarioError> {
    KernelSpec::new(name, grid, occupancy, k_steps).map_err(|e| ScenarioError::Params(e.to_string()))
}

fn checked(scenario: Scenario) -> Result<Scenario, ScenarioError> {
    scenario.validate()?;
    Ok(scenario)
}

/// Two-GeMM MLP block: `XW1 = X * W1`, then `XW12 = XW1 * W2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpParams {
    pub batch: u32,
    pub hidden: u32,
    pub producer_grid: Dim3,
    pub consumer_grid: Dim3,
    pub occupancy: u32,
    pub num_sms: u32,
}

impl MlpParams {
    pub const GPT3_HIDDEN: u32 = 12288;

    /// Grids from tile sizes for an 8-way model-parallel layer: the
    /// producer is `{B, 4H/8} / tile`, the consumer `{B, H} / tile`.
    pub fn derive(
        batch: u32,
        hidden: u32,
        tile_m: u32,
        tile_n: u32,
        split_k: u32,
        occupancy: u32,
    ) -> Result<Self, ScenarioError> {
        if tile_m == 0 || tile_n == 0 {
            return Err(ScenarioError::Params("tile sizes must be positive".into()));
        }
        let rows = batch.div_ceil(tile_m);
        Ok(MlpParams {
            batch,
            hidden,
            producer_grid: dim(rows, (4 * hidden / 8).div_ceil(tile_n), split_k)?,
            consumer_grid: dim(rows, hidden.div_ceil(tile_n), 1)?,
            occupancy,
            num_sms: GpuConfig::v100().num_sms,
        })
    }
}

pub fn mlp_scenario(p: &MlpParams, policy: SyncPolicy, mode: Mode) -> Result<Scenario, ScenarioError> {
    let k_steps = p.producer_grid.y;
    let producer = kernel("gemm1", p.producer_grid, p.occupancy, k_steps)?;
    let consumer = kernel("gemm2", p.consumer_grid, p.occupancy, k_steps)?;
    checked(Scenario {
        name: format!("mlp-b{}", p.batch),
        gpu: GpuConfig { num_sms: p.num_sms },
        stages: vec![Stage::new(producer, 0), Stage::new(consumer, 1)],
        dependencies: vec![Dependency { producer: 0, consumer: 1, operand: Operand::A, policy }],
        mode,
        options: Options::default(),
    })
}

/// Self-attention: a fused QKV GeMM, a per-head dot product, then the
/// output GeMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub batch: u32,
    pub hidden: u32,
    pub gemm1: Dim3,
    pub dot: Dim3,
    pub gemm2: Dim3,
    pub occupancy: u32,
    pub num_sms: u32,
}

impl AttentionParams {
    /// Six QKV column tiles feeding two dot-product tiles and three output
    /// tiles on a 4-SM GPU.
    pub fn toy() -> Self {
        AttentionParams {
            batch: 1,
            hidden: 0,
            gemm1: Dim3 { x: 1, y: 6, z: 1 },
            dot: Dim3 { x: 1, y: 2, z: 1 },
            gemm2: Dim3 { x: 1, y: 3, z: 1 },
            occupancy: 1,
            num_sms: 4,
        }
    }

    /// 8-way model-parallel layer with column tile width `tile_n`.
    pub fn derive(batch: u32, hidden: u32, tile_m: u32, tile_n: u32, occupancy: u32) -> Result<Self, ScenarioError> {
        if tile_m == 0 || tile_n == 0 || !hidden.is_multiple_of(8 * tile_n) {
            return Err(ScenarioError::Params(format!("hidden size {hidden} is not a multiple of 8 x {tile_n}")));
        }
        let rows = batch.div_ceil(tile_m);
        let stride = hidden / (8 * tile_n);
        Ok(AttentionParams {
            batch,
            hidden,
            gemm1: dim(rows, 3 * stride, 1)?,
            dot: dim(rows, stride, 1)?,
            gemm2: dim(rows, hidden / tile_n, 1)?,
            occupancy,
            num_sms: GpuConfig::v100().num_sms,
        })
    }

    /// Column distance between the Q, K and V tiles of one head.
    pub fn stride(&self) -> Result<u32, ScenarioError> {
        if !self.gemm1.y.is_multiple_of(3) {
            return Err(ScenarioError::Params(format!("QKV grid.y = {} is not divisible by 3", self.gemm1.y)));
        }
        Ok(self.gemm1.y / 3)
    }

    /// Strided sync into the dot product, tile sync out of it.
    pub fn default_chain(&self) -> Result<[SyncPolicy; 2], ScenarioError> {
        Ok([SyncPolicy::StridedSync { stride: self.stride()? }, SyncPolicy::TileSync])
    }
}

pub fn attention_scenario(p: &AttentionParams, chain: [SyncPolicy; 2], mode: Mode) -> Result<Scenario, ScenarioError> {
    let stride = p.stride()?;
    let inner = p.dot.y;
    let stages = vec![
        Stage::new(kernel("qkv", p.gemm1, p.occupancy, inner)?, 0).with_order(TileOrder::StridedRowMajor { stride }),
        Stage::new(kernel("dot", p.dot, p.occupancy, 1)?, 1),
        Stage::new(kernel("out", p.gemm2, p.occupancy, inner)?, 2),
    ];
    checked(Scenario {
        name: format!("attn-b{}", p.batch),
        gpu: GpuConfig { num_sms: p.num_sms },
        stages,
        dependencies: vec![
            Dependency { producer: 0, consumer: 1, operand: Operand::A, policy: chain[0] },
            Dependency { producer: 1, consumer: 2, operand: Operand::A, policy: chain[1] },
        ],
        mode,
        options: Options::default(),
    })
}

/// Two back-to-back 3x3 convolutions computed as implicit GeMMs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvPairParams {
    pub channels: u32,
    pub batch: u32,
    pub grid: Dim3,
    pub kernel_size: u32,
    pub occupancy: u32,
    pub num_sms: u32,
}

impl ConvPairParams {
    pub fn kk(&self) -> u32 {
        self.kernel_size * self.kernel_size
    }
}

pub fn conv_pair_scenario(p: &ConvPairParams, policy: SyncPolicy, mode: Mode) -> Result<Scenario, ScenarioError> {
    if p.kernel_size == 0 {
        return Err(ScenarioError::Params("kernel size must be positive".into()));
    }
    let k_steps = p.kk() * p.grid.y;
    checked(Scenario {
        name: format!("conv{}-b{}", p.channels, p.batch),
        gpu: GpuConfig { num_sms: p.num_sms },
        stages: vec![
            Stage::new(kernel("conv1", p.grid, p.occupancy, k_steps)?, 0),
            Stage::new(kernel("conv2", p.grid, p.occupancy, k_steps)?, 1),
        ],
        dependencies: vec![Dependency { producer: 0, consumer: 1, operand: Operand::A, policy }],
        mode,
        options: Options::default(),
    })
}

/// Two dependent 3x2 GeMMs on four SMs, one block per SM.
pub fn fig2(policy: SyncPolicy, mode: Mode) -> Result<Scenario, ScenarioError> {
    let grid = dim(3, 2, 1)?;
    checked(Scenario {
        name: "fig2".into(),
        gpu: GpuConfig { num_sms: 4 },
        stages: vec![Stage::new(kernel("producer", grid, 1, 2)?, 0), Stage::new(kernel("consumer", grid, 1, 2)?, 1)],
        dependencies: vec![Dependency { producer: 0, consumer: 1, operand: Operand::A, policy }],
        mode,
        options: Options::default(),
    })
}

pub const MLP_BATCHES: [&str; 6] = ["1-64", "128", "256", "512", "1024", "2048"];
pub const CONV128_BATCHES: [u32; 9] = [1, 4, 8, 12, 16, 20, 24, 28, 32];

pub fn mlp_preset_params(batch: &str) -> Option<(MlpParams, PolicyChoice)> {
    let (p, c, occ, choice, b) = match batch {
        "1-64" => ((1, 24, 3), (1, 48, 1), 3, PolicyChoice::Tile, 64),
        "128" => ((1, 48, 2), (1, 96, 1), 3, PolicyChoice::Tile, 128),
        "256" => ((1, 96, 2), (1, 96, 1), 2, PolicyChoice::Tile, 256),
        "512" => ((2, 48, 2), (2, 96, 1), 2, PolicyChoice::Row, 512),
        "1024" => ((4, 48, 1), (4, 96, 1), 2, PolicyChoice::Row, 1024),
        "2048" => ((8, 48, 1), (8, 96, 1), 2, PolicyChoice::Row, 2048),
        _ => return None,
    };
    let params = MlpParams {
        batch: b,
        hidden: MlpParams::GPT3_HIDDEN,
        producer_grid: Dim3 { x: p.0, y: p.1, z: p.2 },
        consumer_grid: Dim3 { x: c.0, y: c.1, z: c.2 },
        occupancy: occ,
        num_sms: 80,
    };
    Some((params, choice))
}

pub fn conv128_preset_params(batch: u32) -> Option<(ConvPairParams, PolicyChoice)> {
    // Batches 1 and 4 use a second grid dimension so that the total block
    // counts (39, 98) match the per-kernel waves at 160 blocks per wave.
    let grid = match batch {
        1 => Dim3 { x: 13, y: 3, z: 1 },
        4 => Dim3 { x: 49, y: 2, z: 1 },
        8 | 12 | 16 | 20 | 24 | 28 | 32 => Dim3 { x: batch / 4 * 49, y: 1, z: 1 },
        _ => return None,
    };
    let choice = if batch <= 4 { PolicyChoice::Conv2DTile } else { PolicyChoice::Row };
    Some((ConvPairParams { channels: 128, batch, grid, kernel_size: 3, occupancy: 2, num_sms: 80 }, choice))
}

/// Every preset name, in listing order.
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["fig2".to_string()];
    names.extend(MLP_BATCHES.iter().map(|b| format!("mlp:{b}")));
    names.extend(CONV128_BATCHES.iter().map(|b| format!("conv128:{b}")));
    names.push("attn:toy".into());
    names
}

pub fn table5_presets() -> Vec<String> {
    MLP_BATCHES.iter().map(|b| format!("mlp:{b}")).collect()
}

pub fn table7_presets() -> Vec<String> {
    CONV128_BATCHES.iter().map(|b| format!("conv128:{b}")).collect()
}

enum Family {
    Fig2,
    Mlp(MlpParams, PolicyChoice),
    Conv(ConvPairParams, PolicyChoice),
    Attn(AttentionParams),
}

fn family(name: &str) -> Result<Family, ScenarioError> {
    let unknown = || ScenarioError::UnknownPreset(name.to_string());
    if name == "fig2" {
        return Ok(Family::Fig2);
    }
    let (kind, arg) = name.split_once(':').ok_or_else(unknown)?;
    match kind {
        "mlp" => mlp_preset_params(arg).map(|(p, c)| Family::Mlp(p, c)).ok_or_else(unknown),
        "conv128" => {
            let b: u32 = arg.parse().map_err(|_| unknown())?;
            conv128_preset_params(b).map(|(p, c)| Family::Conv(p, c)).ok_or_else(unknown)
        }
        "attn" if arg == "toy" => Ok(Family::Attn(AttentionParams::toy())),
        "attn" => {
            let b: u32 = arg.parse().map_err(|_| unknown())?;
            if b == 0 {
                return Err(unknown());
            }
            Ok(Family::Attn(AttentionParams::derive(b, MlpParams::GPT3_HIDDEN, 128, 128, 2)?))
        }
        _ => Err(unknown()),
    }
}

/// Policy families a preset can run with; the first is its default.
pub fn applicable_policies(name: &str) -> Result<Vec<PolicyChoice>, ScenarioError> {
    use PolicyChoice::*;
    Ok(match family(name)? {
        Family::Fig2 => vec![Row, Tile],
        Family::Mlp(_, Tile) => vec![Tile, Row],
        Family::Mlp(..) => vec![Row, Tile],
        Family::Conv(_, Conv2DTile) => vec![Conv2DTile, Row],
        Family::Conv(..) => vec![Row, Conv2DTile],
        Family::Attn(_) => vec![Strided, Row],
    })
}

/// Builds preset `name` in fine-grained mode with its default policy.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let choice = applicable_policies(name)?[0];
    preset_with(name, choice, Mode::FineGrained)
}

/// Builds preset `name` with policy family `choice` in `mode`.
pub fn preset_with(name: &str, choice: PolicyChoice, mode: Mode) -> Result<Scenario, ScenarioError> {
    if !applicable_policies(name)?.contains(&choice) {
        return Err(ScenarioError::Params(format!("policy {} does not apply to {name}", choice.name())));
    }
    let mut sc = match family(name)? {
        Family::Fig2 => fig2(simple_policy(choice), mode)?,
        Family::Mlp(p, _) => mlp_scenario(&p, simple_policy(choice), mode)?,
        Family::Conv(p, _) => {
            let policy = match choice {
                PolicyChoice::Conv2DTile => SyncPolicy::Conv2DTileSync { kk: p.kk() },
                _ => SyncPolicy::RowSync,
            };
            conv_pair_scenario(&p, policy, mode)?
        }
        Family::Attn(p) => {
            let chain = match choice {
                PolicyChoice::Row => [SyncPolicy::RowSync, SyncPolicy::RowSync],
                _ => p.default_chain()?,
            };
            attention_scenario(&p, chain, mode)?
        }
    };
    sc.name = name.to_string();
    Ok(sc)
}

fn simple_policy(choice: PolicyChoice) -> SyncPolicy {
    match choice {
        PolicyChoice::Row => SyncPolicy::RowSync,
        _ => SyncPolicy::TileSync,
    }
}

fn divisors(n: u32) -> Vec<u32> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Random acyclic fine-grained scenario: up to four stages of at most 64
/// tiles, dependencies only on earlier stages, policies chosen among those
/// the grids admit. Consumer-first priorities only appear with the wait
/// kernel forced on.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let n = rng.gen_range(1..=4usize);
    let mut stages = Vec::with_capacity(n);
    for i in 0..n {
        let grid = Dim3 { x: rng.gen_range(1..=4), y: rng.gen_range(1..=8), z: rng.gen_range(1..=2) };
        let k =
            KernelSpec { name: format!("s{i}"), grid, occupancy: rng.gen_range(1..=3), k_steps: rng.gen_range(1..=4) };
        let order = if rng.gen_bool(0.3) {
            TileOrder::StridedRowMajor { stride: *divisors(grid.y).choose(rng).unwrap() }
        } else {
            TileOrder::RowMajor
        };
        let cost = CostModel {
            load_a: rng.gen_range(1..=2),
            load_b: rng.gen_range(1..=2),
            compute: rng.gen_range(1..=2),
            sync_overhead: 0,
            epilogue: rng.gen_range(0..=1),
        };
        stages.push(Stage { kernel: k, order, priority: i as u32, cost });
    }
    let mut dependencies = Vec::new();
    for c in 1..n {
        for operand in Operand::ALL {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let p = rng.gen_range(0..c);
            let (pk, ck) = (&stages[p].kernel, &stages[c].kernel);
            if ck.grid.x > pk.grid.x {
                continue;
            }
            let mut options = vec![SyncPolicy::RowSync];
            if ck.k_steps <= pk.grid.y {
                options.push(SyncPolicy::TileSync);
            }
            for s in divisors(pk.grid.y) {
                options.push(SyncPolicy::StridedSync { stride: s });
            }
            for kk in divisors(ck.k_steps) {
                if ck.k_steps / kk <= pk.grid.y {
                    options.push(SyncPolicy::Conv2DTileSync { kk });
                }
            }
            let policy = *options.choose(rng).unwrap();
            dependencies.push(Dependency { producer: p, consumer: c, operand, policy });
        }
    }
    let wait_kernel = if rng.gen_bool(0.5) { WaitKernel::On } else { WaitKernel::Auto };
    let mut sc = Scenario {
        name: "random".into(),
        gpu: GpuConfig { num_sms: rng.gen_range(1..=6) },
        stages,
        dependencies,
        mode: Mode::FineGrained,
        options: Options { wait_kernel, reorder_loads: rng.gen_bool(0.5) },
    };
    if wait_kernel == WaitKernel::On && rng.gen_bool(0.5) {
        sc = sc.with_consumer_first_priorities();
    }
    sc
}

/// `count` random scenarios from `seed`, named `random-<seed>-<i>`.
pub fn random_suite(seed: u64, count: usize) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut sc = random_scenario(&mut rng);
            sc.name = format!("random-{seed}-{i}");
            sc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_builds() {
        for name in preset_names() {
            for choice in applicable_policies(&name).unwrap() {
                for mode in [Mode::StreamSync, Mode::FineGrained] {
                    let sc = preset_with(&name, choice, mode).unwrap();
                    assert_eq!(sc.name, name);
                }
            }
        }
    }

    #[test]
    fn unknown_presets_are_rejected() {
        for bad in ["mlp:3", "conv128:2", "attn:0", "nope", "conv64:1"] {
            assert!(matches!(preset(bad), Err(ScenarioError::UnknownPreset(_))), "{bad}");
        }
        assert!(preset_with("mlp:1024", PolicyChoice::Strided, Mode::FineGrained).is_err());
    }

    #[test]
    fn mlp_1024_grids() {
        let sc = preset("mlp:1024").unwrap();
        assert_eq!(sc.stages[0].kernel.grid, Dim3 { x: 4, y: 48, z: 1 });
        assert_eq!(sc.stages[1].kernel.grid, Dim3 { x: 4, y: 96, z: 1 });
        assert_eq!(crate::gpu::tbs_per_wave(sc.gpu, sc.stages[0].kernel.occupancy), 160);
    }

    #[test]
    fn attention_strides() {
        assert_eq!(AttentionParams::toy().stride().unwrap(), 2);
        let p = AttentionParams::derive(256, 12288, 128, 128, 2).unwrap();
        assert_eq!(p.stride().unwrap(), 12);
        let mut degenerate = AttentionParams::toy();
        degenerate.gemm1 = Dim3 { x: 1, y: 3, z: 1 };
        assert_eq!(degenerate.stride().unwrap(), 1);
        degenerate.gemm1 = Dim3 { x: 1, y: 4, z: 1 };
        assert!(degenerate.stride().is_err());
    }

    #[test]
    fn mlp_derivation_matches_layer_shapes() {
        let p = MlpParams::derive(1024, 12288, 256, 128, 1, 2).unwrap();
        assert_eq!(p.producer_grid, Dim3 { x: 4, y: 48, z: 1 });
        assert_eq!(p.consumer_grid, Dim3 { x: 4, y: 96, z: 1 });
    }

    #[test]
    fn random_suite_is_reproducible_and_valid() {
        let a = random_suite(7, 200);
        assert_eq!(a, random_suite(7, 200));
        for sc in &a {
            sc.validate().unwrap();
            assert!(sc.stages.len() <= 4);
            assert!(sc.stages.iter().all(|s| s.kernel.tbs() <= 64));
            if sc.stages.iter().enumerate().any(|(i, s)| s.priority != i as u32) {
                assert_eq!(sc.options.wait_kernel, WaitKernel::On);
            }
        }
    }
}
