//! Discrete-event simulation of thread blocks on SM slots.
//!
//! Time is an integer count of cost units. Every block runs a small
//! straight-line program built when it is dispatched: per k-step, the waits
//! and load of each operand followed by the compute, then the epilogue and
//! one post per outgoing dependency. A wait that is not yet satisfied parks
//! the block on its slot until a post wakes it.
//!
//! Within one timestamp all pending events are drained before free slots
//! are handed out, and the two steps repeat until nothing changes, so a
//! block dispatched at `t` sees every post made at `t`.
//!
//! Dispatch in fine-grained mode follows launch order. Stages without a
//! wait-kernel gate launch at time zero by (priority, invocation index);
//! a gated stage launches once every gating producer has started a block.
//! Pending blocks are granted slots by (launch position, issue index) and a
//! head stage that does not fit blocks the ones behind it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::ScenarioError;
use crate::gpu::{self, KernelSpec, TileCoord, Waves};
use crate::metrics::{combined_utilization, combined_waves, Metrics, StageMetrics};
use crate::policy::{self, SemaphoreArray, WaitSpec};
use crate::scenario::{CostModel, Mode, Operand, Scenario, WaitKernel};
use crate::trace::{Event, EventKind, SimTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutput {
    pub trace: SimTrace,
    pub metrics: Metrics,
    /// Final semaphore values, one array per dependency.
    pub semaphores: Vec<Vec<u64>>,
}

/// True when both kernels fit in one combined wave, so every producer block
/// is guaranteed a slot and the wait kernel can be skipped.
pub fn avoid_wait_kernel(producer: &KernelSpec, consumer: &KernelSpec, gpu: gpu::GpuConfig) -> bool {
    let occ = producer.occupancy.min(consumer.occupancy);
    producer.tbs() + consumer.tbs() <= gpu::tbs_per_wave(gpu, occ)
}

/// Producer stages that must have started a block before `stage` may be
/// issued. Empty means the stage is never gated.
pub fn wait_kernel_gate(scenario: &Scenario, stage: usize) -> Vec<usize> {
    if scenario.mode == Mode::StreamSync {
        return Vec::new();
    }
    let consumer = &scenario.stages[stage].kernel;
    let mut gate: Vec<usize> = scenario
        .deps_into(stage)
        .map(|(_, d)| d.producer)
        .filter(|&p| match scenario.options.wait_kernel {
            WaitKernel::On => true,
            WaitKernel::Off => false,
            WaitKernel::Auto => !avoid_wait_kernel(&scenario.stages[p].kernel, consumer, scenario.gpu),
        })
        .collect();
    gate.sort_unstable();
    gate.dedup();
    gate
}

/// Duration of one k-step whose dependent operand `dependent` is ready
/// `wait` units after the step begins.
pub fn reorder_loads_effect(cost: &CostModel, wait: u64, dependent: Operand, reorder: bool) -> u64 {
    let other = match dependent {
        Operand::A => Operand::B,
        Operand::B => Operand::A,
    };
    if reorder {
        wait.max(cost.load(other)) + cost.load(dependent) + cost.compute
    } else {
        wait + cost.load_a + cost.load_b + cost.compute
    }
}

/// A block parked on a semaphore when the event queue ran dry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockedWait {
    pub value: u64,
    pub expected: u64,
    /// Posts to this semaphore still obtainable from blocks that can run.
    pub reachable: u64,
}

/// Engine state at quiescence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EngineSnapshot {
    pub pending_events: usize,
    pub unfinished: u64,
    pub resident: u64,
    pub waits: Vec<BlockedWait>,
    /// Whether some pending block could be granted a slot.
    pub dispatchable: bool,
}

pub fn detect_deadlock(s: &EngineSnapshot) -> bool {
    s.pending_events == 0
        && s.unfinished > 0
        && !s.dispatchable
        && s.waits.len() as u64 == s.resident
        && s.waits.iter().all(|w| w.value + w.reachable < w.expected)
}

pub fn simulate(scenario: &Scenario) -> Result<SimOutput, ScenarioError> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario)?;
    engine.run();
    Ok(engine.finish())
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Delay(u64),
    Wait { dep: usize, sem: usize, expected: u64, k_step: u32 },
    Post { dep: usize, sem: usize },
}

struct Block {
    stage: usize,
    issue: u64,
    tile: TileCoord,
    ops: Vec<Op>,
    pc: usize,
    wave: u64,
    token: usize,
    blocked_since: Option<u64>,
}

struct Engine<'a> {
    sc: &'a Scenario,
    now: u64,
    blocks: Vec<Block>,
    issued: Vec<u64>,
    finished: Vec<u64>,
    resident: Vec<u64>,
    resident_total: u64,
    gates: Vec<Vec<usize>>,
    launched: Vec<bool>,
    launch_order: Vec<usize>,
    sems: Vec<SemaphoreArray>,
    waiters: Vec<Vec<Vec<usize>>>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    seq: u64,
    tokens_created: usize,
    free_tokens: BinaryHeap<Reverse<(u64, usize)>>,
    spare_tokens: BinaryHeap<Reverse<(u64, usize)>>,
    gen_range: Vec<Option<(u64, u64)>>,
    gen_sizes: Vec<u64>,
    stage_wait: Vec<u64>,
    stage_end: Vec<u64>,
    events: Vec<Event>,
    deadlock: bool,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, ScenarioError> {
        let n = sc.stages.len();
        let mut sems = Vec::with_capacity(sc.dependencies.len());
        let mut waiters = Vec::with_capacity(sc.dependencies.len());
        for (i, d) in sc.dependencies.iter().enumerate() {
            let s = SemaphoreArray::for_policy(d.policy, sc.stages[d.producer].kernel.grid)
                .map_err(|source| ScenarioError::Policy { dep: i, source })?;
            waiters.push(vec![Vec::new(); s.len()]);
            sems.push(s);
        }
        let gates: Vec<Vec<usize>> = (0..n).map(|s| wait_kernel_gate(sc, s)).collect();
        let mut engine = Engine {
            sc,
            now: 0,
            blocks: Vec::new(),
            issued: vec![0; n],
            finished: vec![0; n],
            resident: vec![0; n],
            resident_total: 0,
            gates,
            launched: vec![false; n],
            launch_order: Vec::with_capacity(n),
            sems,
            waiters,
            queue: BinaryHeap::new(),
            seq: 0,
            tokens_created: 0,
            free_tokens: BinaryHeap::new(),
            spare_tokens: BinaryHeap::new(),
            gen_range: vec![None; n],
            gen_sizes: Vec::new(),
            stage_wait: vec![0; n],
            stage_end: vec![0; n],
            events: Vec::new(),
            deadlock: false,
        };
        match sc.mode {
            Mode::StreamSync => {
                engine.launch_order = (0..n).collect();
                engine.launched = vec![true; n];
            }
            Mode::FineGrained => engine.open_gates(),
        }
        Ok(engine)
    }

    fn tbs(&self, stage: usize) -> u64 {
        self.sc.stages[stage].kernel.tbs()
    }

    /// Launches every stage whose gate producers have all started.
    fn open_gates(&mut self) {
        let mut ready: Vec<usize> = (0..self.sc.stages.len())
            .filter(|&s| !self.launched[s] && self.gates[s].iter().all(|&p| self.issued[p] > 0))
            .collect();
        ready.sort_by_key(|&s| (self.sc.stages[s].priority, s));
        for s in ready {
            self.launched[s] = true;
            self.launch_order.push(s);
        }
    }

    fn head_stage(&self) -> Option<usize> {
        match self.sc.mode {
            Mode::StreamSync => {
                let s = (0..self.sc.stages.len()).find(|&s| self.finished[s] < self.tbs(s))?;
                (self.issued[s] < self.tbs(s)).then_some(s)
            }
            Mode::FineGrained => self.launch_order.iter().copied().find(|&s| self.issued[s] < self.tbs(s)),
        }
    }

    fn capacity_for(&self, stage: usize) -> u64 {
        let occ = (0..self.sc.stages.len())
            .filter(|&s| self.resident[s] > 0)
            .map(|s| self.sc.stages[s].kernel.occupancy)
            .fold(self.sc.stages[stage].kernel.occupancy, u32::min);
        gpu::tbs_per_wave(self.sc.gpu, occ)
    }

    fn can_dispatch(&self) -> Option<(usize, u64)> {
        let s = self.head_stage()?;
        let cap = self.capacity_for(s);
        (self.resident_total < cap).then_some((s, cap))
    }

    fn push(&mut self, time: u64, block: usize) {
        self.seq += 1;
        self.queue.push(Reverse((time, self.seq, block)));
    }

    fn emit(&mut self, block: usize, kind: EventKind) {
        let b = &self.blocks[block];
        self.events.push(Event { time: self.now, stage: b.stage, tb: b.issue, kind });
    }

    fn run(&mut self) {
        loop {
            let mut changed = true;
            while changed {
                changed = false;
                while let Some(&Reverse((t, _, id))) = self.queue.peek() {
                    if t != self.now {
                        break;
                    }
                    self.queue.pop();
                    self.step(id);
                    changed = true;
                }
                while let Some((stage, cap)) = self.can_dispatch() {
                    self.dispatch(stage, cap);
                    changed = true;
                }
            }
            match self.queue.peek() {
                Some(&Reverse((t, _, _))) => self.now = t,
                None => break,
            }
        }
        let snapshot = self.snapshot();
        self.deadlock = detect_deadlock(&snapshot);
    }

    fn snapshot(&self) -> EngineSnapshot {
        let unfinished = (0..self.sc.stages.len()).map(|s| self.tbs(s) - self.finished[s]).sum();
        let mut waits = Vec::new();
        let running: Vec<&Block> =
            self.blocks.iter().filter(|b| b.pc < b.ops.len() && b.blocked_since.is_none()).collect();
        for b in self.blocks.iter().filter(|b| b.blocked_since.is_some()) {
            if let Op::Wait { dep, sem, expected, .. } = b.ops[b.pc] {
                let reachable = running
                    .iter()
                    .filter(|r| {
                        r.ops[r.pc..]
                            .iter()
                            .any(|op| matches!(op, Op::Post { dep: d, sem: s } if *d == dep && *s == sem))
                    })
                    .count() as u64;
                waits.push(BlockedWait { value: self.sems[dep].value(sem), expected, reachable });
            }
        }
        EngineSnapshot {
            pending_events: self.queue.len(),
            unfinished,
            resident: self.resident_total,
            waits,
            dispatchable: self.can_dispatch().is_some(),
        }
    }

    fn dispatch(&mut self, stage: usize, cap: u64) {
        let st = &self.sc.stages[stage];
        let issue = self.issued[stage];
        let tile = policy::order_tile(st.order, st.kernel.grid, issue)
            .expect("scenario validated: counter within grid and order legal");
        let (token, prev_gen) = self.grant_slot(cap);
        let barrier = match self.sc.mode {
            Mode::StreamSync if stage > 0 => self.gen_range[stage - 1].map_or(0, |r| r.1),
            _ => 0,
        };
        let wave = prev_gen.max(barrier) + 1;
        let ops = self.program(stage, tile);
        self.issued[stage] += 1;
        self.resident[stage] += 1;
        self.resident_total += 1;
        let range = self.gen_range[stage].get_or_insert((wave, wave));
        range.0 = range.0.min(wave);
        range.1 = range.1.max(wave);
        if self.gen_sizes.len() < wave as usize {
            self.gen_sizes.resize(wave as usize, 0);
        }
        self.gen_sizes[wave as usize - 1] += 1;
        let id = self.blocks.len();
        self.blocks.push(Block { stage, issue, tile, ops, pc: 0, wave, token, blocked_since: None });
        self.emit(id, EventKind::Scheduled { tile, wave });
        if issue == 0 && self.sc.mode == Mode::FineGrained {
            self.open_gates();
        }
        self.step(id);
    }

    /// Picks the slot for a new block and returns it with its generation.
    /// Slots beyond the current capacity are parked, least used first.
    fn grant_slot(&mut self, cap: u64) -> (usize, u64) {
        let cap = cap as usize;
        let mut live = self.tokens_created - self.spare_tokens.len();
        while live > cap {
            let Some(t) = self.free_tokens.pop() else { break };
            self.spare_tokens.push(t);
            live -= 1;
        }
        if live < cap {
            if let Some(Reverse((g, t))) = self.spare_tokens.pop() {
                return (t, g);
            }
            self.tokens_created += 1;
            return (self.tokens_created - 1, 0);
        }
        let Reverse((g, t)) = self.free_tokens.pop().expect("a free slot exists below capacity");
        (t, g)
    }

    fn program(&self, stage: usize, tile: TileCoord) -> Vec<Op> {
        let sc = self.sc;
        let st = &sc.stages[stage];
        let cost = st.cost;
        let fine = sc.mode == Mode::FineGrained;
        let mut ops: Vec<Op> = Vec::new();
        let delay = |ops: &mut Vec<Op>, d: u64| {
            if d == 0 {
                return;
            }
            if let Some(Op::Delay(prev)) = ops.last_mut() {
                *prev += d;
            } else {
                ops.push(Op::Delay(d));
            }
        };
        let deps_in: Vec<(usize, &crate::scenario::Dependency)> =
            if fine { sc.deps_into(stage).collect() } else { Vec::new() };
        for k in 0..st.kernel.k_steps {
            let mut waits: [Vec<Op>; 2] = [Vec::new(), Vec::new()];
            for &(d, dep) in &deps_in {
                let pg = sc.stages[dep.producer].kernel.grid;
                if let WaitSpec::Wait { sem, expected } = policy::consumer_wait(dep.policy, tile, k, pg) {
                    waits[dep.operand as usize].push(Op::Wait { dep: d, sem, expected, k_step: k });
                }
            }
            let order = if sc.options.reorder_loads && waits[0].is_empty() != waits[1].is_empty() {
                if waits[0].is_empty() {
                    [Operand::A, Operand::B]
                } else {
                    [Operand::B, Operand::A]
                }
            } else {
                [Operand::A, Operand::B]
            };
            for operand in order {
                for w in &waits[operand as usize] {
                    ops.push(*w);
                    delay(&mut ops, cost.sync_overhead);
                }
                delay(&mut ops, cost.load(operand));
            }
            delay(&mut ops, cost.compute);
        }
        delay(&mut ops, cost.epilogue);
        if fine {
            for (d, dep) in sc.deps_from(stage) {
                let pg = st.kernel.grid;
                delay(&mut ops, cost.sync_overhead);
                ops.push(Op::Post { dep: d, sem: policy::post_target(dep.policy, tile, pg) });
            }
        }
        ops
    }

    /// Advances block `id` at the current time until it sleeps, parks or ends.
    fn step(&mut self, id: usize) {
        if let Some(since) = self.blocks[id].blocked_since.take() {
            let Op::Wait { dep, sem, expected, k_step } = self.blocks[id].ops[self.blocks[id].pc] else {
                unreachable!("blocked block sits on a wait");
            };
            let stage = self.blocks[id].stage;
            self.stage_wait[stage] += self.now - since;
            self.emit(id, EventKind::WaitEnd { dep, sem, expected, k_step });
            self.blocks[id].pc += 1;
        }
        while let Some(&op) = self.blocks[id].ops.get(self.blocks[id].pc) {
            match op {
                Op::Delay(d) => {
                    self.blocks[id].pc += 1;
                    self.push(self.now + d, id);
                    return;
                }
                Op::Wait { dep, sem, expected, k_step } => {
                    self.emit(id, EventKind::WaitBegin { dep, sem, expected, k_step });
                    if self.sems[dep].is_satisfied(sem, expected) {
                        self.emit(id, EventKind::WaitEnd { dep, sem, expected, k_step });
                        self.blocks[id].pc += 1;
                    } else {
                        self.blocks[id].blocked_since = Some(self.now);
                        self.waiters[dep][sem].push(id);
                        return;
                    }
                }
                Op::Post { dep, sem } => {
                    let tile = self.blocks[id].tile;
                    let value = self.sems[dep].post(sem);
                    self.emit(id, EventKind::Post { dep, sem, tile });
                    self.blocks[id].pc += 1;
                    let parked = std::mem::take(&mut self.waiters[dep][sem]);
                    let (wake, keep): (Vec<usize>, Vec<usize>) =
                        parked.into_iter().partition(|&w| match self.blocks[w].ops[self.blocks[w].pc] {
                            Op::Wait { expected, .. } => expected <= value,
                            _ => unreachable!("parked block sits on a wait"),
                        });
                    self.waiters[dep][sem] = keep;
                    for w in wake {
                        self.push(self.now, w);
                    }
                }
            }
        }
        self.retire(id);
    }

    fn retire(&mut self, id: usize) {
        let (stage, wave, token) = {
            let b = &self.blocks[id];
            (b.stage, b.wave, b.token)
        };
        self.emit(id, EventKind::Finished);
        self.finished[stage] += 1;
        self.resident[stage] -= 1;
        self.resident_total -= 1;
        self.stage_end[stage] = self.stage_end[stage].max(self.now);
        self.free_tokens.push(Reverse((wave, token)));
        self.blocks[id].ops = Vec::new();
        self.blocks[id].pc = 0;
    }

    fn finish(self) -> SimOutput {
        let sc = self.sc;
        let mut per_stage = Vec::with_capacity(sc.stages.len());
        let mut stage_waves: Vec<Waves> = Vec::with_capacity(sc.stages.len());
        for (i, st) in sc.stages.iter().enumerate() {
            let k = &st.kernel;
            let w = gpu::waves(k.tbs(), sc.gpu, k.occupancy);
            stage_waves.push(w);
            per_stage.push(StageMetrics {
                name: k.name.clone(),
                grid: k.grid,
                occupancy: k.occupancy,
                tbs: k.tbs(),
                waves: w,
                utilization: gpu::utilization_of(w),
                wave_generations: self.gen_range[i].map_or(0, |(lo, hi)| hi - lo + 1),
                makespan: self.stage_end[i],
                total_wait: self.stage_wait[i],
            });
        }
        let waves = combined_waves(sc.mode, &stage_waves);
        let makespan = if self.deadlock { self.now } else { self.stage_end.iter().copied().max().unwrap_or(0) };
        let metrics = Metrics {
            mode: sc.mode,
            stages: per_stage,
            waves,
            utilization: combined_utilization(waves),
            wave_generations: self.gen_sizes.len() as u64,
            generation_sizes: self.gen_sizes,
            makespan,
            total_wait: self.stage_wait.iter().sum(),
            deadlock: self.deadlock,
        };
        SimOutput {
            trace: SimTrace { events: self.events },
            metrics,
            semaphores: self.sems.iter().map(|s| s.values().to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::SyncPolicy;
    use crate::scenario::Options;
    use crate::workloads;

    fn fig2(mode: Mode) -> Scenario {
        workloads::fig2(SyncPolicy::RowSync, mode).unwrap()
    }

    #[test]
    fn fig2_stream_takes_four_generations() {
        let out = simulate(&fig2(Mode::StreamSync)).unwrap();
        assert_eq!(out.metrics.wave_generations, 4);
        assert_eq!(out.metrics.generation_sizes, vec![4, 2, 4, 2]);
        assert_eq!(out.metrics.makespan, 24);
        assert_eq!(out.metrics.total_wait, 0);
        assert!(!out.metrics.deadlock);
        assert!(out.trace.events.iter().all(|e| !matches!(e.kind, EventKind::Post { .. })));
    }

    #[test]
    fn fig2_fine_fills_three_generations() {
        let out = simulate(&fig2(Mode::FineGrained)).unwrap();
        assert_eq!(out.metrics.wave_generations, 3);
        assert_eq!(out.metrics.generation_sizes, vec![4, 4, 4]);
        assert_eq!(out.metrics.makespan, 18);
        assert_eq!(out.semaphores, vec![vec![2, 2, 2]]);
    }

    #[test]
    fn fig2_gate_off_consumer_first_deadlocks() {
        let sc = fig2(Mode::FineGrained)
            .with_options(Options { wait_kernel: WaitKernel::Off, reorder_loads: false })
            .with_consumer_first_priorities();
        let out = simulate(&sc).unwrap();
        assert!(out.metrics.deadlock);
        assert_eq!(out.metrics.makespan, 0);
        let scheduled: Vec<usize> = out
            .trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Scheduled { .. }))
            .map(|e| e.stage)
            .collect();
        assert_eq!(scheduled, vec![1, 1, 1, 1]);
    }

    #[test]
    fn fig2_gate_on_consumer_first_completes() {
        for wk in [WaitKernel::On, WaitKernel::Auto] {
            let sc = fig2(Mode::FineGrained)
                .with_options(Options { wait_kernel: wk, reorder_loads: false })
                .with_consumer_first_priorities();
            let out = simulate(&sc).unwrap();
            assert!(!out.metrics.deadlock);
            assert_eq!(out.metrics.makespan, 18);
        }
    }

    #[test]
    fn single_stage_gate_is_empty() {
        let mut sc = fig2(Mode::FineGrained);
        sc.stages.truncate(1);
        sc.dependencies.clear();
        sc.options.wait_kernel = WaitKernel::On;
        assert!(wait_kernel_gate(&sc, 0).is_empty());
        assert_eq!(simulate(&sc).unwrap().metrics.makespan, 12);
    }

    #[test]
    fn avoid_wait_kernel_examples() {
        let g = |x, y| crate::gpu::Dim3::new(x, y, 1).unwrap();
        let k = |tbs: u32, occ| KernelSpec::new("k", g(1, tbs), occ, 1).unwrap();
        assert!(avoid_wait_kernel(&k(72, 3), &k(48, 3), gpu::GpuConfig::v100()));
        assert!(!avoid_wait_kernel(&k(96, 1), &k(96, 1), gpu::GpuConfig::v100()));
        assert!(avoid_wait_kernel(&k(1, 1), &k(1, 1), gpu::GpuConfig { num_sms: 2 }));
        assert!(!avoid_wait_kernel(&k(1, 1), &k(1, 1), gpu::GpuConfig { num_sms: 1 }));
    }

    #[test]
    fn reorder_formula_examples() {
        let unit = CostModel::default();
        assert_eq!(reorder_loads_effect(&unit, 3, Operand::A, false), 6);
        assert_eq!(reorder_loads_effect(&unit, 3, Operand::A, true), 5);
        assert_eq!(reorder_loads_effect(&unit, 0, Operand::A, false), 3);
        assert_eq!(reorder_loads_effect(&unit, 0, Operand::A, true), 3);
        let slow_b = CostModel { load_b: 2, ..unit };
        assert_eq!(reorder_loads_effect(&slow_b, 1, Operand::A, true), 4);
    }

    #[test]
    fn reorder_overlaps_the_independent_load() {
        // One producer tile of two k-steps (6 units), one consumer tile that
        // reads it: without reordering the consumer waits 6 then runs 3.
        let mut sc = fig2(Mode::FineGrained);
        for st in &mut sc.stages {
            st.kernel.grid = crate::gpu::Dim3::new(1, 1, 1).unwrap();
            st.kernel.k_steps = 1;
        }
        sc.gpu.num_sms = 2;
        let plain = simulate(&sc).unwrap().metrics;
        sc.options.reorder_loads = true;
        let reordered = simulate(&sc).unwrap().metrics;
        assert_eq!(plain.makespan, 3 + 3);
        assert_eq!(reordered.makespan, 3 + 2);
        assert_eq!(plain.total_wait, 3);
        assert_eq!(reordered.total_wait, 2);
    }

    #[test]
    fn deadlock_predicate() {
        let stuck = EngineSnapshot {
            pending_events: 0,
            unfinished: 6,
            resident: 1,
            waits: vec![BlockedWait { value: 0, expected: 2, reachable: 0 }],
            dispatchable: false,
        };
        assert!(detect_deadlock(&stuck));
        assert!(!detect_deadlock(&EngineSnapshot { dispatchable: true, ..stuck.clone() }));
        assert!(!detect_deadlock(&EngineSnapshot { pending_events: 1, ..stuck.clone() }));
        assert!(!detect_deadlock(&EngineSnapshot { unfinished: 0, ..stuck.clone() }));
        let reachable = vec![BlockedWait { value: 1, expected: 2, reachable: 1 }];
        assert!(!detect_deadlock(&EngineSnapshot { waits: reachable, ..stuck }));
    }

    #[test]
    fn split_k_slices_all_post() {
        let sc = workloads::preset("mlp:1-64").unwrap();
        let out = simulate(&sc).unwrap();
        assert!(!out.metrics.deadlock);
        assert!(out.semaphores[0].iter().all(|&v| v == 3));
    }

    #[test]
    fn mlp_1024_last_generation_runs_96_blocks() {
        let fine = simulate(&workloads::preset("mlp:1024").unwrap()).unwrap().metrics;
        assert_eq!(fine.waves.ceil, 4);
        assert_eq!(fine.generation_sizes, vec![160, 160, 160, 96]);
        let stream = simulate(
            &workloads::preset_with("mlp:1024", crate::workloads::PolicyChoice::Row, Mode::StreamSync).unwrap(),
        )
        .unwrap()
        .metrics;
        assert_eq!(stream.waves.ceil, 5);
        assert_eq!(stream.wave_generations, 5);
    }

    #[test]
    fn simulation_is_deterministic() {
        let sc = workloads::preset("attn:toy").unwrap();
        assert_eq!(simulate(&sc).unwrap(), simulate(&sc).unwrap());
    }
}
