//! GPU hardware descriptors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HardwareError {
    #[error("hardware descriptor syntax error: {0}")]
    Syntax(String),
    #[error("invalid hardware descriptor: {0}")]
    Invalid(String),
}

/// Sigmoid hit-rate curve `a * exp(-b * exp(-c * o))` over the
/// oversubscription ratio `o`. A negative `c` makes it fall towards zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gompertz {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Gompertz {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn eval(&self, o: f64) -> f64 {
        let o = o.max(0.0);
        let r = self.a * (-self.b * (-self.c * o).exp()).exp();
        if r.is_finite() {
            r.clamp(0.0, self.a)
        } else {
            0.0
        }
    }

    fn check(&self, name: &str) -> Result<(), HardwareError> {
        let ok = (0.0..=1.0).contains(&self.a) && self.b >= 0.0 && self.c <= 0.0;
        if ok && self.b.is_finite() && self.c.is_finite() {
            Ok(())
        } else {
            Err(HardwareError::Invalid(format!(
                "hit-rate curve `{name}` needs 0 <= a <= 1, b >= 0, c <= 0 (got {self:?})"
            )))
        }
    }
}

/// Hit-rate curves for L1 capacity misses, L2 reuse across the y and z layer
/// sets, and L2 retention of partially written sectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitRateModel {
    pub l1: Gompertz,
    pub l2_over_y: Gompertz,
    pub l2_over_z: Gompertz,
    pub l2_store: Gompertz,
}

impl Default for HitRateModel {
    fn default() -> Self {
        Self {
            l1: Gompertz::new(1.0, 0.001, -1.5),
            l2_over_y: Gompertz::new(1.0, 0.02, -1.5),
            l2_over_z: Gompertz::new(1.0, 0.000674, -5.0),
            l2_store: Gompertz::new(1.0, 0.05, -2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareModel {
    pub name: String,
    pub sm_count: i64,
    pub clock_ghz: f64,
    pub l1_capacity_bytes: i64,
    pub l2_effective_bytes: i64,
    pub dram_bw_gbps: f64,
    pub l2_bw_gbps: f64,
    pub fp64_peak_gflops: f64,
    pub cache_line_bytes: i64,
    pub sector_bytes: i64,
    pub banks: i64,
    pub bank_width_bytes: i64,
    pub half_warp: i64,
    pub wavefront_pair_window_bytes: i64,
    pub max_threads_per_sm: i64,
    pub max_blocks_per_sm: i64,
    pub max_threads_per_block: i64,
    pub hit_rates: HitRateModel,
}

impl HardwareModel {
    pub fn parse(text: &str) -> Result<Self, HardwareError> {
        let hw: Self = toml::from_str(text).map_err(|e| HardwareError::Syntax(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("hardware model serializes")
    }

    pub fn validate(&self) -> Result<(), HardwareError> {
        let ints = [
            ("sm_count", self.sm_count),
            ("l1_capacity_bytes", self.l1_capacity_bytes),
            ("l2_effective_bytes", self.l2_effective_bytes),
            ("cache_line_bytes", self.cache_line_bytes),
            ("sector_bytes", self.sector_bytes),
            ("banks", self.banks),
            ("bank_width_bytes", self.bank_width_bytes),
            ("half_warp", self.half_warp),
            ("wavefront_pair_window_bytes", self.wavefront_pair_window_bytes),
            ("max_threads_per_sm", self.max_threads_per_sm),
            ("max_blocks_per_sm", self.max_blocks_per_sm),
            ("max_threads_per_block", self.max_threads_per_block),
        ];
        if let Some((k, _)) = ints.iter().find(|(_, v)| *v <= 0) {
            return Err(HardwareError::Invalid(format!("`{k}` must be positive")));
        }
        let floats = [
            ("clock_ghz", self.clock_ghz),
            ("dram_bw_gbps", self.dram_bw_gbps),
            ("l2_bw_gbps", self.l2_bw_gbps),
            ("fp64_peak_gflops", self.fp64_peak_gflops),
        ];
        if let Some((k, _)) = floats.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(HardwareError::Invalid(format!("`{k}` must be positive")));
        }
        if self.cache_line_bytes % self.sector_bytes != 0 {
            return Err(HardwareError::Invalid(
                "sector_bytes must divide cache_line_bytes".into(),
            ));
        }
        if self.banks * self.bank_width_bytes != self.cache_line_bytes {
            return Err(HardwareError::Invalid(
                "banks * bank_width_bytes must equal cache_line_bytes".into(),
            ));
        }
        let h = &self.hit_rates;
        h.l1.check("l1")?;
        h.l2_over_y.check("l2_over_y")?;
        h.l2_over_z.check("l2_over_z")?;
        h.l2_store.check("l2_store")?;
        Ok(())
    }

    /// Thread blocks that fit on one SM at once.
    pub fn resident_blocks_per_sm(&self, block_threads: i64) -> i64 {
        (self.max_threads_per_sm / block_threads.max(1))
            .min(self.max_blocks_per_sm)
            .max(1)
    }

    pub fn wave_blocks(&self, block_threads: i64) -> i64 {
        self.sm_count * self.resident_blocks_per_sm(block_threads)
    }

    /// Same machine with every bandwidth and the clock multiplied by `k`.
    pub fn scaled_throughput(&self, k: f64) -> Self {
        Self {
            clock_ghz: self.clock_ghz * k,
            dram_bw_gbps: self.dram_bw_gbps * k,
            l2_bw_gbps: self.l2_bw_gbps * k,
            fp64_peak_gflops: self.fp64_peak_gflops * k,
            ..self.clone()
        }
    }
}
