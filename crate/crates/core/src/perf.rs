//! Four-limiter performance bound.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::EstimateError;
use crate::hardware::HardwareModel;
use crate::kernel::{Coord, KernelSpec, LaunchConfig, ThreadFolding};
use crate::l1::{self, L1Cost};
use crate::volume::{self, DramOptions, VolumeBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    Dram,
    L2,
    L1,
    Fp,
}

impl Limiter {
    pub fn label(self) -> &'static str {
        match self {
            Limiter::Dram => "DRAM",
            Limiter::L2 => "L2",
            Limiter::L1 => "L1",
            Limiter::Fp => "FP",
        }
    }
}

/// Seconds per lattice update for each limiter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfPrediction {
    pub t_dram: f64,
    pub t_l2: f64,
    pub t_l1: f64,
    pub t_fp: f64,
    pub limiter: Limiter,
    pub glups: f64,
}

impl PerfPrediction {
    pub fn from_times(t_dram: f64, t_l2: f64, t_l1: f64, t_fp: f64) -> Self {
        let times = [
            (Limiter::Dram, t_dram),
            (Limiter::L2, t_l2),
            (Limiter::L1, t_l1),
            (Limiter::Fp, t_fp),
        ];
        let (limiter, t_max) = times
            .into_iter()
            .fold(times[0], |best, x| if x.1 > best.1 { x } else { best });
        Self {
            t_dram,
            t_l2,
            t_l1,
            t_fp,
            limiter,
            glups: 1e-9 / t_max,
        }
    }

    /// Bound from per-Lup volumes (bytes), L1 cycles and flops.
    pub fn from_rates(
        dram_bytes: f64,
        l2_bytes: f64,
        l1_cycles: f64,
        flops: f64,
        hw: &HardwareModel,
    ) -> Self {
        Self::from_times(
            dram_bytes / (hw.dram_bw_gbps * 1e9),
            l2_bytes / (hw.l2_bw_gbps * 1e9),
            l1_cycles / (hw.sm_count as f64 * hw.clock_ghz * 1e9),
            flops / (hw.fp64_peak_gflops * 1e9),
        )
    }
}

/// Everything predicted for one kernel configuration.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub kernel: String,
    pub block: Coord,
    pub grid: Coord,
    pub folding: ThreadFolding,
    pub l1_cycles_per_lup: f64,
    pub l2: VolumeBreakdown,
    pub dram: VolumeBreakdown,
    pub perf: PerfPrediction,
}

pub fn estimate(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<Estimate, EstimateError> {
    estimate_with(spec, launch, hw, DramOptions::default())
}

pub fn estimate_with(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
    opts: DramOptions,
) -> Result<Estimate, EstimateError> {
    let cost: L1Cost = l1::l1_cost(spec, launch, hw)?;
    let fp = l1::block_footprint(spec, launch, hw)?;
    let l2 = volume::l2_from_parts(spec, launch, hw, &cost, &fp);
    let dram = volume::estimate_dram_volume_with(spec, launch, hw, &cost, opts)?;
    let perf = PerfPrediction::from_rates(
        dram.total_per_lup(),
        l2.total_per_lup(),
        cost.cycles_per_lup,
        spec.flops_per_lup,
        hw,
    );
    Ok(Estimate {
        kernel: spec.name.clone(),
        block: launch.block,
        grid: launch.grid,
        folding: spec.folding,
        l1_cycles_per_lup: cost.cycles_per_lup,
        l2,
        dram,
        perf,
    })
}

pub fn predict(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<PerfPrediction, EstimateError> {
    Ok(estimate(spec, launch, hw)?.perf)
}

/// Descending throughput, then lower DRAM traffic, then block dimensions and
/// folding factors, both compared lexicographically in descending order.
pub fn rank_order(a: &Estimate, b: &Estimate) -> Ordering {
    b.perf
        .glups
        .partial_cmp(&a.perf.glups)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            a.dram
                .total_per_lup()
                .partial_cmp(&b.dram.total_per_lup())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| b.block.cmp(&a.block))
        .then_with(|| b.folding.cmp(&a.folding))
}

/// Evaluates and ranks `(block, folding)` configurations of an unfolded kernel.
pub fn rank(
    configs: &[(Coord, ThreadFolding)],
    spec: &KernelSpec,
    hw: &HardwareModel,
) -> Result<Vec<Estimate>, EstimateError> {
    let mut out = configs
        .par_iter()
        .map(|&(block, folding)| {
            let k = spec.with_folding(folding);
            let launch = LaunchConfig::for_kernel(&k, block)?;
            estimate(&k, &launch, hw)
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(rank_order);
    Ok(out)
}
