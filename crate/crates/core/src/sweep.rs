//! Configuration sweeps and the layer-condition plane-size scan.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::EstimateError;
use crate::hardware::HardwareModel;
use crate::kernel::{Coord, KernelSpec, LaunchConfig, ThreadFolding};
use crate::perf::{self, Estimate};

pub const XY_SIZES: [i64; 11] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];
pub const Z_SIZES: [i64; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Block sizes `(x, y, z)` with power-of-two extents and `x * y * z == n`,
/// ordered lexicographically.
pub fn block_sizes(n: i64) -> Vec<Coord> {
    let mut out = Vec::new();
    for x in XY_SIZES {
        for y in XY_SIZES {
            for z in Z_SIZES {
                if x * y * z == n {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

pub fn default_folds(spec: &KernelSpec) -> Vec<ThreadFolding> {
    spec.sweep_folds
        .clone()
        .unwrap_or_else(|| vec![ThreadFolding::NONE])
}

/// All `(block, folding)` pairs of a sweep.
pub fn sweep_configs(n: i64, folds: &[ThreadFolding]) -> Vec<(Coord, ThreadFolding)> {
    block_sizes(n)
        .into_iter()
        .flat_map(|b| folds.iter().map(move |&f| (b, f)))
        .collect()
}

/// Evaluates and ranks every configuration.
pub fn sweep(
    spec: &KernelSpec,
    hw: &HardwareModel,
    n: i64,
    folds: &[ThreadFolding],
) -> Result<Vec<Estimate>, EstimateError> {
    perf::rank(&sweep_configs(n, folds), spec, hw)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub plane: i64,
    pub depth: i64,
    pub dram_load_per_lup: f64,
    pub dram_store_per_lup: f64,
    pub layer_oversubscription_z: f64,
}

/// Total cell count held fixed by [`lcscan`].
pub const LCSCAN_CELLS: i64 = 512 * 1024 * 1024;

/// Predicted DRAM volume for quadratic `plane x plane` domains whose depth
/// keeps the total size at `total_cells` (rounded down).
pub fn lcscan(
    spec: &KernelSpec,
    hw: &HardwareModel,
    block: Coord,
    planes: &[i64],
    total_cells: i64,
) -> Result<Vec<ScanRow>, EstimateError> {
    planes
        .par_iter()
        .map(|&p| {
            let depth = (total_cells / (p * p)).max(1);
            if total_cells % (p * p) != 0 {
                log::info!("plane {p}: depth rounded down to {depth}");
            }
            let k = spec.with_domain_size([p, p, depth]);
            let launch = LaunchConfig::for_kernel(&k, block)?;
            let e = perf::estimate(&k, &launch, hw)?;
            Ok(ScanRow {
                plane: p,
                depth,
                dram_load_per_lup: e.dram.load_per_lup(),
                dram_store_per_lup: e.dram.store_per_lup(),
                layer_oversubscription_z: e.dram.layer_oversubscription[2],
            })
        })
        .collect()
}

/// First plane past the scan minimum whose load volume exceeds the minimum by
/// 3% of the scan's total rise (and by at least 2% of the minimum).
pub fn transition_onset(rows: &[ScanRow]) -> Option<i64> {
    let (argmin, min) = rows
        .iter()
        .map(|r| r.dram_load_per_lup)
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let max = rows
        .iter()
        .map(|r| r.dram_load_per_lup)
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = min + (0.03 * (max - min)).max(0.02 * min);
    rows.iter()
        .skip(argmin)
        .find(|r| r.dram_load_per_lup > threshold)
        .map(|r| r.plane)
}
