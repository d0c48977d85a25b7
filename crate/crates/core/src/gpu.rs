//! Grid, occupancy and wave arithmetic.
//!
//! A kernel launched with `tbs` thread blocks on a GPU with `num_sms`
//! multiprocessors, each able to host `occupancy` blocks of that kernel,
//! runs in `ceil(tbs / (occupancy * num_sms))` waves. Fractional waves are
//! kept as exact rationals so that table comparisons never depend on
//! floating point rounding.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::GpuError;

/// Extent of a 3-D launch grid. Every component is at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 3]", into = "[u32; 3]")]
pub struct Dim3 {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Dim3 {
    pub fn new(x: u32, y: u32, z: u32) -> Result<Self, GpuError> {
        if x == 0 || y == 0 || z == 0 {
            return Err(GpuError::EmptyGrid { x, y, z });
        }
        Ok(Dim3 { x, y, z })
    }

    /// Number of thread blocks in the grid.
    pub fn total(&self) -> u64 {
        self.x as u64 * self.y as u64 * self.z as u64
    }

    pub fn contains(&self, c: TileCoord) -> bool {
        c.x < self.x && c.y < self.y && c.z < self.z
    }

    /// All coordinates of the grid, x fastest.
    pub fn coords(&self) -> impl Iterator<Item = TileCoord> + '_ {
        (0..self.z).flat_map(move |z| (0..self.y).flat_map(move |y| (0..self.x).map(move |x| TileCoord { x, y, z })))
    }
}

impl TryFrom<[u32; 3]> for Dim3 {
    type Error = GpuError;

    fn try_from(v: [u32; 3]) -> Result<Self, Self::Error> {
        Dim3::new(v[0], v[1], v[2])
    }
}

impl From<Dim3> for [u32; 3] {
    fn from(d: Dim3) -> Self {
        [d.x, d.y, d.z]
    }
}

impl fmt::Display for Dim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// Index of a tile inside a grid: `x` is the row, `y` the column and `z`
/// the split-k slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct TileCoord {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl TileCoord {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        TileCoord { x, y, z }
    }
}

impl From<[u32; 3]> for TileCoord {
    fn from(v: [u32; 3]) -> Self {
        TileCoord::new(v[0], v[1], v[2])
    }
}

impl From<TileCoord> for [u32; 3] {
    fn from(c: TileCoord) -> Self {
        [c.x, c.y, c.z]
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuConfig {
    pub num_sms: u32,
}

impl GpuConfig {
    pub fn new(num_sms: u32) -> Result<Self, GpuError> {
        if num_sms == 0 {
            return Err(GpuError::NoSms);
        }
        Ok(GpuConfig { num_sms })
    }

    /// Tesla V100.
    pub fn v100() -> Self {
        GpuConfig { num_sms: 80 }
    }
}

/// Launch shape of one kernel. Occupancy is an input here, not derived from
/// register or shared-memory usage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    pub grid: Dim3,
    /// Thread blocks of this kernel resident per SM.
    pub occupancy: u32,
    /// Inner-loop iterations over the reduction dimension.
    pub k_steps: u32,
}

impl KernelSpec {
    pub fn new(name: impl Into<String>, grid: Dim3, occupancy: u32, k_steps: u32) -> Result<Self, GpuError> {
        if occupancy == 0 {
            return Err(GpuError::ZeroOccupancy);
        }
        if k_steps == 0 {
            return Err(GpuError::ZeroKSteps);
        }
        Ok(KernelSpec { name: name.into(), grid, occupancy, k_steps })
    }

    pub fn tbs(&self) -> u64 {
        self.grid.total()
    }
}

/// Hardware linear index of a block: x varies fastest, then y, then z.
pub fn linearize(grid: Dim3, c: TileCoord) -> Result<u64, GpuError> {
    if !grid.contains(c) {
        return Err(GpuError::OutOfGrid { coord: c, grid });
    }
    let (gx, gy) = (grid.x as u64, grid.y as u64);
    Ok(c.x as u64 + c.y as u64 * gx + c.z as u64 * gx * gy)
}

/// Inverse of [`linearize`].
pub fn delinearize(grid: Dim3, index: u64) -> Result<TileCoord, GpuError> {
    if index >= grid.total() {
        return Err(GpuError::IndexOutOfRange { index, total: grid.total() });
    }
    let (gx, gy) = (grid.x as u64, grid.y as u64);
    Ok(TileCoord::new((index % gx) as u32, ((index / gx) % gy) as u32, (index / (gx * gy)) as u32))
}

pub fn tbs_per_wave(cfg: GpuConfig, occupancy: u32) -> u64 {
    occupancy as u64 * cfg.num_sms as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Waves {
    pub fractional: Ratio<u64>,
    pub ceil: u64,
}

pub fn waves(tbs: u64, cfg: GpuConfig, occupancy: u32) -> Waves {
    let fractional = Ratio::new(tbs, tbs_per_wave(cfg, occupancy));
    Waves { fractional, ceil: fractional.ceil().to_integer() }
}

/// Share of launched slots doing work over all waves, in percent.
///
/// `tbs / (ceil_waves * tbs_per_wave) * 100`. This is the reading that
/// reproduces every row of the V100 MLP utilization table; no closed form
/// is given alongside it.
pub fn utilization(tbs: u64, cfg: GpuConfig, occupancy: u32) -> Ratio<u64> {
    let w = waves(tbs, cfg, occupancy);
    utilization_of(w)
}

/// Utilization of an already computed wave count: `fractional / ceil`.
pub fn utilization_of(w: Waves) -> Ratio<u64> {
    if w.ceil == 0 {
        return Ratio::from_integer(0);
    }
    w.fractional / Ratio::from_integer(w.ceil) * Ratio::from_integer(100)
}

/// Renders a ratio with exactly two decimals, rounding half away from zero.
pub fn format_ratio(r: Ratio<u64>) -> String {
    let hundredths = (r * Ratio::from_integer(100)).round().to_integer();
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}
