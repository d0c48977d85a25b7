//! Independent checks for simulation traces.
//!
//! The dependency graph here is written from the policy definitions as
//! explicit producer tile sets; nothing in this module calls into the
//! semaphore arithmetic of [`crate::policy`] or the event engine.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{OracleError, TraceError};
use crate::gpu::{Dim3, TileCoord};
use crate::policy::{SyncPolicy, TileOrder};
use crate::scenario::{Mode, Operand, Scenario, WaitKernel};
use crate::trace::{EventKind, SimTrace};

/// Producer tiles a consumer tile must see posted before reading the
/// dependent operand at one k-step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirement {
    pub dep: usize,
    pub consumer: TileCoord,
    pub k_step: u32,
    pub producers: BTreeSet<TileCoord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DepDag {
    reqs: BTreeMap<(usize, TileCoord, u32), BTreeSet<TileCoord>>,
}

impl DepDag {
    pub fn requirement(&self, dep: usize, consumer: TileCoord, k_step: u32) -> Option<&BTreeSet<TileCoord>> {
        self.reqs.get(&(dep, consumer, k_step))
    }

    pub fn requirements(&self) -> impl Iterator<Item = Requirement> + '_ {
        self.reqs.iter().map(|(&(dep, consumer, k_step), producers)| Requirement {
            dep,
            consumer,
            k_step,
            producers: producers.clone(),
        })
    }

    /// Number of (producer tile, consumer tile, k-step) edges.
    pub fn edge_count(&self) -> usize {
        self.reqs.values().map(BTreeSet::len).sum()
    }

    /// Every producer tile `consumer` of dependency `dep` reads at any k-step.
    pub fn producers_of(&self, dep: usize, consumer: TileCoord) -> BTreeSet<TileCoord> {
        self.reqs
            .range((dep, consumer, 0)..=(dep, consumer, u32::MAX))
            .flat_map(|(_, set)| set.iter().copied())
            .collect()
    }
}

fn slices(row: u32, cols: impl Iterator<Item = u32>, z: u32) -> BTreeSet<TileCoord> {
    cols.flat_map(|c| (0..z).map(move |s| TileCoord::new(row, c, s))).collect()
}

pub fn build_dep_dag(scenario: &Scenario) -> DepDag {
    let mut reqs = BTreeMap::new();
    for (d, dep) in scenario.dependencies.iter().enumerate() {
        let pg = scenario.stages[dep.producer].kernel.grid;
        let consumer = &scenario.stages[dep.consumer].kernel;
        for tile in consumer.grid.coords() {
            for k in 0..consumer.k_steps {
                let set = match dep.policy {
                    SyncPolicy::TileSync => Some(slices(tile.x, std::iter::once(k), pg.z)),
                    SyncPolicy::RowSync if k == 0 => Some(slices(tile.x, 0..pg.y, pg.z)),
                    SyncPolicy::StridedSync { stride } if k == 0 => {
                        Some(slices(tile.x, (0..pg.y).filter(|c| c % stride == tile.y % stride), pg.z))
                    }
                    SyncPolicy::Conv2DTileSync { kk } if k % kk == 0 => {
                        Some(slices(tile.x, std::iter::once(k / kk), pg.z))
                    }
                    _ => None,
                };
                if let Some(set) = set {
                    reqs.insert((d, tile, k), set);
                }
            }
        }
    }
    DepDag { reqs }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub stage: usize,
    pub tile: TileCoord,
    pub k_step: u32,
    pub reasons: Vec<String>,
}

#[derive(Default)]
struct BlockLog {
    tile: Option<TileCoord>,
    scheduled: Option<u64>,
    finished: Option<u64>,
    wait_ends: BTreeMap<(usize, u32), u64>,
}

/// Dependency violations in `trace`. Structural problems (time going
/// backwards, unknown stages, lifecycle errors) are reported as errors.
pub fn validate_trace(scenario: &Scenario, trace: &SimTrace, dag: &DepDag) -> Result<Vec<Violation>, TraceError> {
    let n = scenario.stages.len();
    let mut logs: Vec<BTreeMap<u64, BlockLog>> = (0..n).map(|_| BTreeMap::new()).collect();
    let mut posts: BTreeMap<(usize, TileCoord), u64> = BTreeMap::new();
    let mut posted: BTreeMap<(usize, usize), Vec<TileCoord>> = BTreeMap::new();
    let mut violations: BTreeMap<(usize, TileCoord, u32), BTreeSet<String>> = BTreeMap::new();
    let mut last = 0;

    for (i, e) in trace.events.iter().enumerate() {
        if e.time < last {
            return Err(TraceError::TimeWentBackwards { index: i, time: e.time });
        }
        last = e.time;
        let stage = scenario.stages.get(e.stage).ok_or(TraceError::UnknownStage { index: i, stage: e.stage })?;
        let lifecycle = |what| TraceError::BadLifecycle { index: i, stage: e.stage, tb: e.tb, what };
        if e.tb >= stage.kernel.tbs() {
            return Err(lifecycle("is outside its grid"));
        }
        let log = logs[e.stage].entry(e.tb).or_default();
        match &e.kind {
            EventKind::Scheduled { tile, .. } => {
                if log.scheduled.is_some() {
                    return Err(lifecycle("is scheduled twice"));
                }
                if !stage.kernel.grid.contains(*tile) {
                    return Err(lifecycle("draws a tile outside its grid"));
                }
                log.scheduled = Some(e.time);
                log.tile = Some(*tile);
                continue;
            }
            _ if log.scheduled.is_none() => return Err(lifecycle("has an event before it is scheduled")),
            _ if log.finished.is_some() => return Err(lifecycle("has an event after it finished")),
            _ => {}
        }
        let tile = log.tile.expect("set with scheduled");
        let bad_dep = |dep| TraceError::BadDependency { index: i, dep, stage: e.stage };
        match e.kind {
            EventKind::Scheduled { .. } => unreachable!(),
            EventKind::WaitBegin { dep, .. } => {
                if scenario.dependencies.get(dep).is_none_or(|d| d.consumer != e.stage) {
                    return Err(bad_dep(dep));
                }
            }
            EventKind::WaitEnd { dep, sem, expected, k_step } => {
                if scenario.dependencies.get(dep).is_none_or(|d| d.consumer != e.stage) {
                    return Err(bad_dep(dep));
                }
                log.wait_ends.insert((dep, k_step), e.time);
                let mut reasons = Vec::new();
                let seen = posted.get(&(dep, sem)).map_or(&[][..], Vec::as_slice);
                if (seen.len() as u64) < expected {
                    reasons.push(format!(
                        "semaphore {sem} of dependency {dep} replays to {} < expected {expected}",
                        seen.len()
                    ));
                }
                match dag.requirement(dep, tile, k_step) {
                    None => reasons.push(format!("waits on dependency {dep} at a k-step that needs no producer tile")),
                    Some(req) => {
                        if req.len() as u64 != expected {
                            reasons
                                .push(format!("expects {expected} posts but depends on {} producer tiles", req.len()));
                        }
                        let foreign: Vec<_> = seen.iter().filter(|t| !req.contains(t)).collect();
                        if let Some(t) = foreign.first() {
                            reasons.push(format!("semaphore {sem} counts a post from unrelated producer tile {t}"));
                        }
                    }
                }
                if !reasons.is_empty() {
                    violations.entry((e.stage, tile, k_step)).or_default().extend(reasons);
                }
            }
            EventKind::Post { dep, sem, tile: posted_tile } => {
                if scenario.dependencies.get(dep).is_none_or(|d| d.producer != e.stage) {
                    return Err(bad_dep(dep));
                }
                if posted_tile != tile {
                    return Err(lifecycle("posts for a tile it does not own"));
                }
                if posts.insert((dep, tile), e.time).is_some() {
                    return Err(lifecycle("posts twice on one dependency"));
                }
                posted.entry((dep, sem)).or_default().push(tile);
            }
            EventKind::Finished => log.finished = Some(e.time),
        }
    }

    let finished: Vec<BTreeMap<TileCoord, u64>> =
        logs.iter().map(|blocks| blocks.values().filter_map(|b| Some((b.tile?, b.finished?))).collect()).collect();
    for (d, dep) in scenario.dependencies.iter().enumerate() {
        for block in logs[dep.consumer].values() {
            let (Some(tile), Some(scheduled)) = (block.tile, block.scheduled) else { continue };
            for k in 0..scenario.stages[dep.consumer].kernel.k_steps {
                let Some(req) = dag.requirement(d, tile, k) else { continue };
                let read = match block.wait_ends.get(&(d, k)) {
                    Some(&t) => t,
                    None if block.finished.is_some() => scheduled,
                    None => continue,
                };
                if scenario.mode == Mode::FineGrained
                    && block.finished.is_some()
                    && !block.wait_ends.contains_key(&(d, k))
                {
                    violations
                        .entry((dep.consumer, tile, k))
                        .or_default()
                        .insert(format!("reads dependency {d} without waiting"));
                }
                for p in req {
                    let ready = match scenario.mode {
                        Mode::FineGrained => posts.get(&(d, *p)).copied(),
                        Mode::StreamSync => finished[dep.producer].get(p).copied(),
                    };
                    let reason = match ready {
                        None => format!("producer tile {p} of dependency {d} never became available"),
                        Some(t) if t > read => format!("reads producer tile {p} at {read}, available at {t}"),
                        Some(_) => continue,
                    };
                    violations.entry((dep.consumer, tile, k)).or_default().insert(reason);
                }
            }
        }
    }
    Ok(violations
        .into_iter()
        .map(|((stage, tile, k_step), reasons)| Violation {
            stage,
            tile,
            k_step,
            reasons: reasons.into_iter().collect(),
        })
        .collect())
}

/// Largest scenario [`reference_makespan`] accepts, in total tiles.
pub const REFERENCE_TILE_CAP: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceRun {
    /// Completion time, or the stall time when `deadlock` is set.
    pub makespan: u64,
    pub deadlock: bool,
}

struct Segment {
    needs: Vec<(usize, TileCoord)>,
    len: u64,
}

struct Running {
    stage: usize,
    tile: TileCoord,
    segs: Vec<Segment>,
    at: usize,
    left: Option<u64>,
}

fn issue_sequence(grid: Dim3, order: TileOrder) -> Vec<TileCoord> {
    let mut tiles: Vec<TileCoord> = (0..grid.z)
        .flat_map(|z| (0..grid.x).flat_map(move |x| (0..grid.y).map(move |y| TileCoord::new(x, y, z))))
        .collect();
    if let TileOrder::StridedRowMajor { stride } = order {
        tiles.sort_by_key(|t| (t.z, t.x, t.y % stride, t.y / stride));
    }
    tiles
}

/// Makespan from a unit-step list scheduler that releases a block's reads
/// from dependency-graph edges instead of semaphores.
pub fn reference_makespan(scenario: &Scenario) -> Result<ReferenceRun, OracleError> {
    scenario.validate()?;
    let tiles = scenario.total_tiles();
    if tiles > REFERENCE_TILE_CAP {
        return Err(OracleError::TooLarge { tiles, cap: REFERENCE_TILE_CAP });
    }
    if let Some(stage) = scenario.stages.iter().position(|s| s.cost.sync_overhead != 0) {
        return Err(OracleError::SyncOverhead { stage });
    }
    let dag = build_dep_dag(scenario);
    let fine = scenario.mode == Mode::FineGrained;
    let n = scenario.stages.len();
    let queues: Vec<Vec<TileCoord>> = scenario.stages.iter().map(|s| issue_sequence(s.kernel.grid, s.order)).collect();
    let totals: Vec<usize> = queues.iter().map(Vec::len).collect();

    let gated_on: Vec<Vec<usize>> = (0..n)
        .map(|c| {
            scenario
                .dependencies
                .iter()
                .filter(|d| fine && d.consumer == c)
                .filter(|d| {
                    let (p, k) = (&scenario.stages[d.producer].kernel, &scenario.stages[c].kernel);
                    let fits = p.tbs() + k.tbs() <= p.occupancy.min(k.occupancy) as u64 * scenario.gpu.num_sms as u64;
                    match scenario.options.wait_kernel {
                        WaitKernel::On => true,
                        WaitKernel::Off => false,
                        WaitKernel::Auto => !fits,
                    }
                })
                .map(|d| d.producer)
                .collect()
        })
        .collect();

    let program = |stage: usize, tile: TileCoord| -> Vec<Segment> {
        let st = &scenario.stages[stage];
        let mut segs = Vec::new();
        for k in 0..st.kernel.k_steps {
            let mut needs: [Vec<(usize, TileCoord)>; 2] = [Vec::new(), Vec::new()];
            if fine {
                for (d, dep) in scenario.dependencies.iter().enumerate().filter(|(_, d)| d.consumer == stage) {
                    if let Some(req) = dag.requirement(d, tile, k) {
                        needs[dep.operand as usize].extend(req.iter().map(|&p| (dep.producer, p)));
                    }
                }
            }
            let b_first = scenario.options.reorder_loads && !needs[0].is_empty() && needs[1].is_empty();
            let order = if b_first { [Operand::B, Operand::A] } else { [Operand::A, Operand::B] };
            for op in order {
                segs.push(Segment { needs: std::mem::take(&mut needs[op as usize]), len: st.cost.load(op) });
            }
            segs.push(Segment { needs: Vec::new(), len: st.cost.compute });
        }
        segs.push(Segment { needs: Vec::new(), len: st.cost.epilogue });
        segs
    };

    let mut done: BTreeSet<(usize, TileCoord)> = BTreeSet::new();
    let mut done_count = vec![0usize; n];
    let mut next = vec![0usize; n];
    let mut launch: Vec<usize> = Vec::new();
    let mut running: Vec<Running> = Vec::new();
    let mut t = 0u64;
    let mut makespan = 0u64;

    let relaunch = |launch: &mut Vec<usize>, next: &[usize]| {
        let mut fresh: Vec<usize> =
            (0..n).filter(|s| !launch.contains(s) && gated_on[*s].iter().all(|&p| next[p] > 0)).collect();
        fresh.sort_by_key(|&s| (scenario.stages[s].priority, s));
        launch.extend(fresh);
    };
    if fine {
        relaunch(&mut launch, &next);
    } else {
        launch = (0..n).collect();
    }

    loop {
        // Settle everything that can happen at time t, then hand out slots,
        // until neither step changes anything.
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < running.len() {
                let r = &mut running[i];
                loop {
                    match r.left {
                        Some(0) => {
                            r.at += 1;
                            r.left = None;
                            changed = true;
                        }
                        Some(_) => break,
                        None if r.at == r.segs.len() => break,
                        None => {
                            if r.segs[r.at].needs.iter().all(|x| done.contains(x)) {
                                r.left = Some(r.segs[r.at].len);
                                changed = true;
                            } else {
                                break;
                            }
                        }
                    }
                }
                if r.at == r.segs.len() {
                    let r = running.swap_remove(i);
                    done_count[r.stage] += 1;
                    done.insert((r.stage, r.tile));
                    makespan = makespan.max(t);
                    changed = true;
                } else {
                    i += 1;
                }
            }
            let head = if fine {
                launch.iter().copied().find(|&s| next[s] < totals[s])
            } else {
                (0..n).find(|&s| done_count[s] < totals[s]).filter(|&s| next[s] < totals[s])
            };
            if let Some(s) = head {
                let occ = running
                    .iter()
                    .map(|r| scenario.stages[r.stage].kernel.occupancy)
                    .fold(scenario.stages[s].kernel.occupancy, u32::min);
                if (running.len() as u64) < occ as u64 * scenario.gpu.num_sms as u64 {
                    let tile = queues[s][next[s]];
                    next[s] += 1;
                    running.push(Running { stage: s, tile, segs: program(s, tile), at: 0, left: None });
                    if fine && next[s] == 1 {
                        relaunch(&mut launch, &next);
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let all_done = (0..n).all(|s| done_count[s] == totals[s]);
        if all_done {
            return Ok(ReferenceRun { makespan, deadlock: false });
        }
        if running.iter().all(|r| r.left.is_none()) {
            return Ok(ReferenceRun { makespan: t, deadlock: true });
        }
        t += 1;
        for r in &mut running {
            if let Some(left) = r.left.as_mut() {
                *left -= 1;
            }
        }
    }
}
