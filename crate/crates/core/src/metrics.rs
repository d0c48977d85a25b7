use num_rational::Ratio;

use crate::gpu::{self, format_ratio, Dim3, Waves};
use crate::scenario::Mode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMetrics {
    pub name: String,
    pub grid: Dim3,
    pub occupancy: u32,
    pub tbs: u64,
    /// Closed-form waves of the stage run alone.
    pub waves: Waves,
    pub utilization: Ratio<u64>,
    /// Distinct slot generations this stage's blocks were issued in.
    pub wave_generations: u64,
    /// Finish time of the stage's last block.
    pub makespan: u64,
    pub total_wait: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    pub mode: Mode,
    pub stages: Vec<StageMetrics>,
    /// Combined closed-form waves. StreamSync sums per-stage ceilings;
    /// fine-grained sums fractions and rounds the total up.
    pub waves: Waves,
    pub utilization: Ratio<u64>,
    /// Slot-grant generations observed in the simulation.
    pub wave_generations: u64,
    /// Blocks issued in each generation, first generation first.
    pub generation_sizes: Vec<u64>,
    /// Finish time of the last block, or the stall time on deadlock.
    pub makespan: u64,
    pub total_wait: u64,
    pub deadlock: bool,
}

impl Metrics {
    pub fn last_wave_tbs(&self) -> u64 {
        self.generation_sizes.last().copied().unwrap_or(0)
    }

    /// Flat `key=value` record.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("mode".to_string(), self.mode.to_string()),
            ("waves_frac".into(), format_ratio(self.waves.fractional)),
            ("waves_ceil".into(), self.waves.ceil.to_string()),
            ("utilization_pct".into(), format_ratio(self.utilization)),
            ("wave_generations".into(), self.wave_generations.to_string()),
            ("last_wave_tbs".into(), self.last_wave_tbs().to_string()),
            ("makespan".into(), self.makespan.to_string()),
            ("total_wait".into(), self.total_wait.to_string()),
            ("deadlock".into(), self.deadlock.to_string()),
        ];
        for (i, s) in self.stages.iter().enumerate() {
            let p = format!("stage{i}");
            kv.push((format!("{p}.name"), s.name.clone()));
            kv.push((format!("{p}.grid"), s.grid.to_string()));
            kv.push((format!("{p}.waves_frac"), format_ratio(s.waves.fractional)));
            kv.push((format!("{p}.waves_ceil"), s.waves.ceil.to_string()));
            kv.push((format!("{p}.wave_generations"), s.wave_generations.to_string()));
            kv.push((format!("{p}.makespan"), s.makespan.to_string()));
            kv.push((format!("{p}.total_wait"), s.total_wait.to_string()));
        }
        kv
    }
}

/// Combined closed-form waves for a set of stages run in `mode`.
pub fn combined_waves(mode: Mode, stages: &[Waves]) -> Waves {
    let fractional = stages.iter().fold(Ratio::from_integer(0), |acc, w| acc + w.fractional);
    let ceil = match mode {
        Mode::StreamSync => stages.iter().map(|w| w.ceil).sum(),
        Mode::FineGrained => fractional.ceil().to_integer(),
    };
    Waves { fractional, ceil }
}

pub fn combined_utilization(w: Waves) -> Ratio<u64> {
    gpu::utilization_of(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpu::{waves, GpuConfig};

    #[test]
    fn combined_wave_semantics() {
        let v = GpuConfig::v100();
        let per = [waves(192, v, 2), waves(384, v, 2)];
        let s = combined_waves(Mode::StreamSync, &per);
        assert_eq!(s.ceil, 5);
        let f = combined_waves(Mode::FineGrained, &per);
        assert_eq!(f.fractional, Ratio::new(18, 5));
        assert_eq!(f.ceil, 4);
        assert_eq!(combined_utilization(f), Ratio::from_integer(90));
    }
}
