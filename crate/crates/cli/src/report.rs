//! Metric records and their CSV and text renderings.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;
use tilesync_core::gpu::format_ratio;
use tilesync_core::{Metrics, Mode, Ratio};

/// One CSV row. Stage rows carry grid and occupancy; the combined row leaves
/// them empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
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
}

pub const COMBINED: &str = "combined";

pub fn stage_rows(preset: &str, policy: &str, m: &Metrics) -> Vec<Row> {
    let mut rows: Vec<Row> = m
        .stages
        .iter()
        .map(|s| Row {
            preset: preset.into(),
            mode: m.mode.to_string(),
            policy: policy.into(),
            stage: s.name.clone(),
            grid_x: Some(s.grid.x),
            grid_y: Some(s.grid.y),
            grid_z: Some(s.grid.z),
            occupancy: Some(s.occupancy),
            waves_frac: format_ratio(s.waves.fractional),
            waves_ceil: s.waves.ceil,
            utilization_pct: format_ratio(s.utilization),
            makespan: s.makespan,
            total_wait: s.total_wait,
            deadlock: m.deadlock,
        })
        .collect();
    rows.push(combined_row(preset, policy, m));
    rows
}

pub fn combined_row(preset: &str, policy: &str, m: &Metrics) -> Row {
    Row {
        preset: preset.into(),
        mode: m.mode.to_string(),
        policy: policy.into(),
        stage: COMBINED.into(),
        grid_x: None,
        grid_y: None,
        grid_z: None,
        occupancy: None,
        waves_frac: format_ratio(m.waves.fractional),
        waves_ceil: m.waves.ceil,
        utilization_pct: format_ratio(m.utilization),
        makespan: m.makespan,
        total_wait: m.total_wait,
        deadlock: m.deadlock,
    }
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` block for one run, prefixed with its preset and policy.
pub fn key_values(preset: &str, policy: &str, m: &Metrics) -> String {
    let mut s = format!("preset={preset}\npolicy={policy}\n");
    for (k, v) in m.to_key_values() {
        s.push_str(&format!("{k}={v}\n"));
    }
    s
}

/// Side-by-side metrics of one preset in both modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub preset: String,
    pub policy: String,
    /// Per-stage grids, `->` separated.
    pub grids: String,
    /// Per-stage fractional waves, `+` separated.
    pub stage_waves: String,
    pub stream_waves: u64,
    pub fine_waves_frac: String,
    pub fine_waves_ceil: u64,
    pub stream_generations: u64,
    pub fine_generations: u64,
    pub generation_ratio: String,
    pub stream_makespan: u64,
    pub fine_makespan: u64,
    pub speedup: String,
    pub deadlock: bool,
}

impl Comparison {
    pub fn new(preset: &str, policy: &str, stream: &Metrics, fine: &Metrics) -> Self {
        debug_assert_eq!((stream.mode, fine.mode), (Mode::StreamSync, Mode::FineGrained));
        let grids = fine.stages.iter().map(|s| s.grid.to_string()).collect::<Vec<_>>().join("->");
        let stage_waves = fine.stages.iter().map(|s| format_ratio(s.waves.fractional)).collect::<Vec<_>>().join("+");
        Comparison {
            preset: preset.into(),
            policy: policy.into(),
            grids,
            stage_waves,
            stream_waves: stream.waves.ceil,
            fine_waves_frac: format_ratio(fine.waves.fractional),
            fine_waves_ceil: fine.waves.ceil,
            stream_generations: stream.wave_generations,
            fine_generations: fine.wave_generations,
            generation_ratio: ratio_text(stream.wave_generations, fine.wave_generations),
            stream_makespan: stream.makespan,
            fine_makespan: fine.makespan,
            speedup: ratio_text(stream.makespan, fine.makespan),
            deadlock: stream.deadlock || fine.deadlock,
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.preset.clone(),
            self.policy.clone(),
            self.grids.clone(),
            self.stage_waves.clone(),
            self.stream_waves.to_string(),
            format!("{} ({})", self.fine_waves_frac, self.fine_waves_ceil),
            format!("{}/{}", self.stream_generations, self.fine_generations),
            self.generation_ratio.clone(),
            format!("{}/{}", self.stream_makespan, self.fine_makespan),
            self.speedup.clone(),
        ]
    }
}

const TEXT_HEADER: [&str; 10] = [
    "preset",
    "policy",
    "grids",
    "stage waves",
    "stream waves",
    "fine waves",
    "generations",
    "gen ratio",
    "makespan",
    "speedup",
];

/// Reduced fraction followed by its two-decimal value, e.g. `4/3 (1.33)`.
pub fn ratio_text(num: u64, den: u64) -> String {
    if den == 0 {
        return "n/a".into();
    }
    let r = Ratio::new(num, den);
    format!("{r} ({})", format_ratio(r))
}

pub fn comparison_table(rows: &[Comparison]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(Comparison::cells).collect();
    let mut widths: Vec<usize> = TEXT_HEADER.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let header: Vec<String> = TEXT_HEADER.iter().map(|h| h.to_string()).collect();
    for row in std::iter::once(&header).chain(&cells) {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
