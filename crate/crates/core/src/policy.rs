//! Tile synchronization policies.
//!
//! A policy decides three things for one producer/consumer dependency:
//! how many semaphores exist, which semaphore a finished producer tile
//! increments, and which semaphore (and target value) a consumer waits on
//! before it reads the dependent operand at a given k-step.
//!
//! All split-k slices of a producer tile post to the same semaphore and
//! every expected value is scaled by the producer's `grid.z`, so a tile only
//! counts as ready once every slice has been written.

use serde::{Deserialize, Serialize};

use crate::error::{GpuError, PolicyError};
use crate::gpu::{Dim3, KernelSpec, TileCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SyncPolicy {
    /// One semaphore per producer tile.
    TileSync,
    /// One semaphore per producer row; consumers wait once for the full row.
    RowSync,
    /// Producer tiles `stride` columns apart share a semaphore.
    StridedSync { stride: u32 },
    /// Implicit-GeMM convolution: consumer k-steps `kk * j .. kk * (j + 1)`
    /// read producer column tile `j`.
    Conv2DTileSync { kk: u32 },
}

impl SyncPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SyncPolicy::TileSync => "tile",
            SyncPolicy::RowSync => "row",
            SyncPolicy::StridedSync { .. } => "strided",
            SyncPolicy::Conv2DTileSync { .. } => "conv2dtile",
        }
    }
}

/// Order in which a stage hands out tiles from its counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TileOrder {
    /// Columns fastest, then rows, then split-k slices.
    #[default]
    RowMajor,
    /// Like `RowMajor`, but columns `stride` apart are handed out back to back.
    StridedRowMajor { stride: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaitSpec {
    NoWait,
    Wait { sem: usize, expected: u64 },
}

impl WaitSpec {
    pub fn is_wait(&self) -> bool {
        matches!(self, WaitSpec::Wait { .. })
    }
}

/// Monotone counters, all starting at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemaphoreArray {
    values: Vec<u64>,
}

impl SemaphoreArray {
    pub fn new(len: usize) -> Self {
        SemaphoreArray { values: vec![0; len] }
    }

    pub fn for_policy(policy: SyncPolicy, producer_grid: Dim3) -> Result<Self, PolicyError> {
        Ok(Self::new(sem_count(policy, producer_grid)?))
    }

    /// Increments semaphore `index` and returns its new value.
    pub fn post(&mut self, index: usize) -> u64 {
        self.values[index] += 1;
        self.values[index]
    }

    pub fn value(&self, index: usize) -> u64 {
        self.values[index]
    }

    pub fn is_satisfied(&self, index: usize, expected: u64) -> bool {
        self.values[index] >= expected
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_stride(stride: u32, grid_y: u32) -> Result<(), PolicyError> {
    if stride == 0 {
        return Err(PolicyError::ZeroStride);
    }
    if !grid_y.is_multiple_of(stride) {
        return Err(PolicyError::StrideNotDivisor { stride, grid_y });
    }
    Ok(())
}

pub fn sem_count(policy: SyncPolicy, producer_grid: Dim3) -> Result<usize, PolicyError> {
    let rows = producer_grid.x as usize;
    let cols = producer_grid.y as usize;
    Ok(match policy {
        SyncPolicy::TileSync => rows * cols,
        SyncPolicy::RowSync => rows,
        SyncPolicy::StridedSync { stride } => {
            check_stride(stride, producer_grid.y)?;
            rows * stride as usize
        }
        SyncPolicy::Conv2DTileSync { kk } => {
            if kk == 0 {
                return Err(PolicyError::ZeroKk);
            }
            rows * cols
        }
    })
}

/// Semaphore incremented when `tile` of the producer finishes.
pub fn post_target(policy: SyncPolicy, tile: TileCoord, producer_grid: Dim3) -> usize {
    let (row, col) = (tile.x as usize, tile.y as usize);
    match policy {
        SyncPolicy::TileSync | SyncPolicy::Conv2DTileSync { .. } => row * producer_grid.y as usize + col,
        SyncPolicy::RowSync => row,
        SyncPolicy::StridedSync { stride } => {
            let stride = stride as usize;
            row * stride + col % stride
        }
    }
}

/// Wait a consumer tile performs before reading the dependent operand at
/// `k_step`.
pub fn consumer_wait(policy: SyncPolicy, tile: TileCoord, k_step: u32, producer_grid: Dim3) -> WaitSpec {
    let slices = producer_grid.z as u64;
    let row = tile.x;
    match policy {
        SyncPolicy::TileSync => {
            WaitSpec::Wait { sem: post_target(policy, TileCoord::new(row, k_step, 0), producer_grid), expected: slices }
        }
        SyncPolicy::RowSync if k_step == 0 => {
            WaitSpec::Wait { sem: row as usize, expected: producer_grid.y as u64 * slices }
        }
        SyncPolicy::StridedSync { stride } if k_step == 0 => WaitSpec::Wait {
            sem: post_target(policy, TileCoord::new(row, tile.y, 0), producer_grid),
            expected: (producer_grid.y / stride) as u64 * slices,
        },
        SyncPolicy::Conv2DTileSync { kk } if k_step.is_multiple_of(kk) => WaitSpec::Wait {
            sem: post_target(policy, TileCoord::new(row, k_step / kk, 0), producer_grid),
            expected: slices,
        },
        _ => WaitSpec::NoWait,
    }
}

/// Checks that `policy` can connect `producer` to `consumer`: every wait the
/// consumer issues must name a semaphore that exists.
pub fn validate_dependency(
    policy: SyncPolicy,
    producer: &KernelSpec,
    consumer: &KernelSpec,
) -> Result<(), PolicyError> {
    let pg = producer.grid;
    sem_count(policy, pg)?;
    if consumer.grid.x > pg.x {
        return Err(PolicyError::RowMismatch { consumer_rows: consumer.grid.x, producer_rows: pg.x });
    }
    match policy {
        SyncPolicy::TileSync if consumer.k_steps > pg.y => {
            Err(PolicyError::ColumnMismatch { needed: consumer.k_steps, available: pg.y })
        }
        SyncPolicy::Conv2DTileSync { kk } => {
            if !consumer.k_steps.is_multiple_of(kk) {
                return Err(PolicyError::KkNotDivisor { kk, k_steps: consumer.k_steps });
            }
            if consumer.k_steps / kk > pg.y {
                return Err(PolicyError::ColumnMismatch { needed: consumer.k_steps / kk, available: pg.y });
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn validate_order(order: TileOrder, grid: Dim3) -> Result<(), PolicyError> {
    match order {
        TileOrder::RowMajor => Ok(()),
        TileOrder::StridedRowMajor { stride } => check_stride(stride, grid.y),
    }
}

/// Tile handed out for the `counter`-th request against a stage.
pub fn order_tile(order: TileOrder, grid: Dim3, counter: u64) -> Result<TileCoord, PolicyError> {
    if counter >= grid.total() {
        return Err(GpuError::IndexOutOfRange { index: counter, total: grid.total() }.into());
    }
    let (gx, gy) = (grid.x as u64, grid.y as u64);
    let col = counter % gy;
    let row = ((counter / gy) % gx) as u32;
    let slice = (counter / (gx * gy)) as u32;
    let col = match order {
        TileOrder::RowMajor => col,
        TileOrder::StridedRowMajor { stride } => {
            check_stride(stride, grid.y)?;
            // `col` is the position in the transformed column space; undo
            // y' = (y % stride) * group + y / stride.
            let stride = stride as u64;
            let group = gy / stride;
            (col % group) * stride + col / group
        }
    };
    Ok(TileCoord::new(row, col as u32, slice))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: u32, y: u32, z: u32) -> Dim3 {
        Dim3::new(x, y, z).unwrap()
    }

    fn kernel(grid: Dim3, k_steps: u32) -> KernelSpec {
        KernelSpec::new("k", grid, 1, k_steps).unwrap()
    }

    #[test]
    fn sem_count_examples() {
        assert_eq!(sem_count(SyncPolicy::TileSync, d(3, 2, 1)).unwrap(), 6);
        assert_eq!(sem_count(SyncPolicy::RowSync, d(3, 2, 1)).unwrap(), 3);
        // Groups by column mod 2 on a 1x6 grid: {0,2,4} and {1,3,5}.
        let groups: std::collections::BTreeSet<u32> = (0..6).map(|c| c % 2).collect();
        assert_eq!(groups.len(), 2);
        assert_eq!(sem_count(SyncPolicy::StridedSync { stride: 2 }, d(1, 6, 1)).unwrap(), 2);
        assert_eq!(sem_count(SyncPolicy::Conv2DTileSync { kk: 9 }, d(4, 2, 1)).unwrap(), 8);
    }

    #[test]
    fn sem_count_rejects_bad_parameters() {
        assert_eq!(
            sem_count(SyncPolicy::StridedSync { stride: 4 }, d(1, 6, 1)),
            Err(PolicyError::StrideNotDivisor { stride: 4, grid_y: 6 })
        );
        assert_eq!(sem_count(SyncPolicy::StridedSync { stride: 0 }, d(1, 6, 1)), Err(PolicyError::ZeroStride));
        assert_eq!(sem_count(SyncPolicy::Conv2DTileSync { kk: 0 }, d(1, 6, 1)), Err(PolicyError::ZeroKk));
    }

    #[test]
    fn post_target_examples() {
        assert_eq!(post_target(SyncPolicy::TileSync, TileCoord::new(1, 1, 0), d(3, 2, 1)), 3);
        assert_eq!(post_target(SyncPolicy::RowSync, TileCoord::new(2, 0, 0), d(3, 2, 1)), 2);
        assert_eq!(post_target(SyncPolicy::StridedSync { stride: 2 }, TileCoord::new(0, 4, 0), d(1, 6, 1)), 0);
        // Split-k slices share the semaphore of their tile.
        assert_eq!(post_target(SyncPolicy::TileSync, TileCoord::new(0, 5, 2), d(1, 24, 3)), 5);
    }

    #[test]
    fn consumer_wait_examples() {
        assert_eq!(
            consumer_wait(SyncPolicy::RowSync, TileCoord::new(1, 0, 0), 0, d(3, 2, 1)),
            WaitSpec::Wait { sem: 1, expected: 2 }
        );
        assert_eq!(
            consumer_wait(SyncPolicy::TileSync, TileCoord::new(0, 3, 0), 1, d(1, 6, 1)),
            WaitSpec::Wait { sem: 1, expected: 1 }
        );
        assert_eq!(
            consumer_wait(SyncPolicy::Conv2DTileSync { kk: 9 }, TileCoord::new(2, 0, 0), 10, d(4, 2, 1)),
            WaitSpec::NoWait
        );
        assert_eq!(
            consumer_wait(SyncPolicy::StridedSync { stride: 2 }, TileCoord::new(0, 1, 0), 0, d(1, 6, 1)),
            WaitSpec::Wait { sem: 1, expected: 3 }
        );
    }

    #[test]
    fn consumer_wait_only_on_gated_steps() {
        assert_eq!(consumer_wait(SyncPolicy::RowSync, TileCoord::new(1, 0, 0), 1, d(3, 2, 1)), WaitSpec::NoWait);
        assert_eq!(
            consumer_wait(SyncPolicy::StridedSync { stride: 2 }, TileCoord::new(0, 1, 0), 1, d(1, 6, 1)),
            WaitSpec::NoWait
        );
        // k-step 9 with kk = 9 reads producer column tile 1.
        assert_eq!(
            consumer_wait(SyncPolicy::Conv2DTileSync { kk: 9 }, TileCoord::new(2, 0, 0), 9, d(4, 2, 1)),
            WaitSpec::Wait { sem: 2 * 2 + 1, expected: 1 }
        );
        // Split-k producer: wait for every slice.
        assert_eq!(
            consumer_wait(SyncPolicy::TileSync, TileCoord::new(0, 7, 0), 4, d(1, 24, 3)),
            WaitSpec::Wait { sem: 4, expected: 3 }
        );
    }

    #[test]
    fn order_tile_examples() {
        assert_eq!(order_tile(TileOrder::RowMajor, d(3, 2, 1), 3).unwrap(), TileCoord::new(1, 1, 0));
        assert_eq!(order_tile(TileOrder::RowMajor, d(1, 1, 1), 0).unwrap(), TileCoord::new(0, 0, 0));
        let cols: Vec<u32> =
            (0..6).map(|c| order_tile(TileOrder::StridedRowMajor { stride: 2 }, d(1, 6, 1), c).unwrap().y).collect();
        assert_eq!(cols, vec![0, 2, 4, 1, 3, 5]);
    }

    #[test]
    fn order_tile_rejects_exhausted_counter() {
        assert!(order_tile(TileOrder::RowMajor, d(3, 2, 1), 6).is_err());
        assert!(order_tile(TileOrder::StridedRowMajor { stride: 4 }, d(1, 6, 1), 0).is_err());
    }

    #[test]
    fn dependency_validation() {
        let p = kernel(d(3, 2, 1), 2);
        assert!(validate_dependency(SyncPolicy::TileSync, &p, &kernel(d(3, 2, 1), 2)).is_ok());
        assert!(matches!(
            validate_dependency(SyncPolicy::TileSync, &p, &kernel(d(3, 2, 1), 3)),
            Err(PolicyError::ColumnMismatch { .. })
        ));
        assert!(matches!(
            validate_dependency(SyncPolicy::RowSync, &p, &kernel(d(4, 2, 1), 2)),
            Err(PolicyError::RowMismatch { .. })
        ));
        assert!(matches!(
            validate_dependency(SyncPolicy::Conv2DTileSync { kk: 9 }, &p, &kernel(d(3, 1, 1), 10)),
            Err(PolicyError::KkNotDivisor { .. })
        ));
        assert!(validate_dependency(SyncPolicy::Conv2DTileSync { kk: 9 }, &p, &kernel(d(3, 1, 1), 18)).is_ok());
        assert!(validate_dependency(SyncPolicy::Conv2DTileSync { kk: 9 }, &p, &kernel(d(3, 1, 1), 27)).is_err());
    }

    #[test]
    fn semaphores_are_monotone_counters() {
        let mut s = SemaphoreArray::for_policy(SyncPolicy::RowSync, d(2, 3, 1)).unwrap();
        assert_eq!(s.values(), &[0, 0]);
        assert_eq!(s.post(1), 1);
        assert_eq!(s.post(1), 2);
        assert!(s.is_satisfied(1, 2));
        assert!(!s.is_satisfied(0, 1));
    }

    #[test]
    fn policy_serde_shape() {
        let p: SyncPolicy = serde_json::from_str(r#"{"strided_sync":{"stride":2}}"#).unwrap();
        assert_eq!(p, SyncPolicy::StridedSync { stride: 2 });
        let p: SyncPolicy = serde_json::from_str(r#""row_sync""#).unwrap();
        assert_eq!(p, SyncPolicy::RowSync);
    }
}
