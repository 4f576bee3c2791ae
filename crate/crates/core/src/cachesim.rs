//! Sectored, fully associative LRU cache replaying explicit address streams.
//!
//! Used as ground truth for compulsory volumes and to produce hit-rate
//! samples for calibration; it is not a timing model.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::hardware::HardwareModel;
use crate::kernel::{AccessKind, Coord, KernelSpec, LaunchConfig};
use crate::l1::{check_launch, Instruction};

/// Each field lives in its own address range starting at `field << FIELD_SHIFT`.
const FIELD_SHIFT: u32 = 40;

/// Upper bound on generated addresses per simulation.
pub const MAX_ADDRESSES: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation needs {0} addresses, above the limit of {MAX_ADDRESSES}")]
    ScaleLimit(u64),
    #[error(transparent)]
    Estimate(#[from] crate::error::EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimLevel {
    /// Write-through, no allocation on store.
    L1,
    /// Write-back with write-allocate; partially written sectors are read
    /// back on eviction.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrder {
    /// One block after another.
    Sequential,
    /// Groups of this many blocks advance one instruction at a time.
    RoundRobin(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub level: SimLevel,
    /// `None` for unbounded capacity.
    pub capacity_bytes: Option<u64>,
    pub order: BlockOrder,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimResult {
    pub up_volume_bytes: u64,
    pub down_volume_bytes: u64,
    pub compulsory_bytes: u64,
    pub store_up_bytes: u64,
    pub store_down_bytes: u64,
    pub write_back_bytes: u64,
    pub partial_line_fill_bytes: u64,
    pub lines_allocated: u64,
}

impl SimResult {
    /// `1 - V_cap / V_red` for loads.
    pub fn r_hit(&self) -> f64 {
        let red = self.up_volume_bytes.saturating_sub(self.compulsory_bytes);
        if red == 0 {
            return 1.0;
        }
        let cap = self.down_volume_bytes.saturating_sub(self.compulsory_bytes);
        (1.0 - cap as f64 / red as f64).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Default)]
struct Line {
    stamp: u64,
    valid: u8,
    written: u128,
}

pub struct SimCache {
    capacity_lines: u64,
    line_bytes: i64,
    sector_bytes: i64,
    level: SimLevel,
    lines: HashMap<i64, Line>,
    lru: BTreeMap<u64, i64>,
    clock: u64,
    seen: HashSet<i64>,
    result: SimResult,
}

impl SimCache {
    pub fn new(hw: &HardwareModel, level: SimLevel, capacity_bytes: Option<u64>) -> Self {
        let line = hw.cache_line_bytes;
        Self {
            capacity_lines: capacity_bytes.map_or(u64::MAX, |c| (c / line as u64).max(1)),
            line_bytes: line,
            sector_bytes: hw.sector_bytes,
            level,
            lines: HashMap::new(),
            lru: BTreeMap::new(),
            clock: 0,
            seen: HashSet::new(),
            result: SimResult::default(),
        }
    }

    fn sectors_per_line(&self) -> i64 {
        self.line_bytes / self.sector_bytes
    }

    fn sector_mask(&self, s: i64) -> u128 {
        let per = self.sector_bytes as u32;
        let ones = if per >= 128 { u128::MAX } else { (1u128 << per) - 1 };
        ones << (s as u32 * per)
    }

    fn touch(&mut self, line: i64) -> &mut Line {
        self.clock += 1;
        let stamp = self.clock;
        if !self.lines.contains_key(&line) {
            if self.lines.len() as u64 >= self.capacity_lines {
                let (_, victim) = self.lru.pop_first().expect("full cache has lines");
                let evicted = self.lines.remove(&victim).expect("lru entry is resident");
                self.retire(evicted);
            }
            self.result.lines_allocated += 1;
            self.lines.insert(line, Line::default());
        } else {
            let old = self.lines[&line].stamp;
            self.lru.remove(&old);
        }
        self.lru.insert(stamp, line);
        let entry = self.lines.get_mut(&line).expect("just inserted");
        entry.stamp = stamp;
        entry
    }

    fn retire(&mut self, l: Line) {
        let sb = self.sector_bytes as u64;
        for s in 0..self.sectors_per_line() {
            let m = self.sector_mask(s);
            let w = l.written & m;
            if w == 0 {
                continue;
            }
            self.result.write_back_bytes += sb;
            if w != m && l.valid & (1 << s) == 0 {
                self.result.partial_line_fill_bytes += sb;
            }
        }
    }

    /// One sector-sized load request.
    pub fn load(&mut self, sector: i64) {
        let sb = self.sector_bytes as u64;
        self.result.up_volume_bytes += sb;
        if self.seen.insert(sector) {
            self.result.compulsory_bytes += sb;
        }
        let per = self.sectors_per_line();
        let (line, s) = (sector.div_euclid(per), sector.rem_euclid(per));
        let mask = self.sector_mask(s);
        let entry = self.touch(line);
        let present = entry.valid & (1 << s) != 0 || entry.written & mask == mask;
        if !present {
            entry.valid |= 1 << s;
            self.result.down_volume_bytes += sb;
        }
    }

    /// One store request covering `bytes` (a mask within the sector).
    pub fn store(&mut self, sector: i64, bytes: u32) {
        let sb = self.sector_bytes as u64;
        self.result.store_up_bytes += sb;
        match self.level {
            SimLevel::L1 => self.result.store_down_bytes += sb,
            SimLevel::L2 => {
                let per = self.sectors_per_line();
                let (line, s) = (sector.div_euclid(per), sector.rem_euclid(per));
                let shift = s as u32 * self.sector_bytes as u32;
                let entry = self.touch(line);
                entry.written |= u128::from(bytes) << shift;
            }
        }
    }

    /// Writes back everything still resident and returns the totals.
    pub fn finish(mut self) -> SimResult {
        let lines: Vec<Line> = self.lines.drain().map(|(_, l)| l).collect();
        for l in lines {
            self.retire(l);
        }
        if self.level == SimLevel::L2 {
            self.result.store_down_bytes = self.result.write_back_bytes;
        }
        self.result
    }
}

/// Instructions with the fold index whose cell guards them.
fn guarded_instructions(spec: &KernelSpec) -> Vec<(Instruction, Coord)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for k in spec.folding.indices() {
        for a in &spec.accesses {
            let instr = Instruction {
                field: a.field,
                kind: a.kind,
                scale: a.scale,
                offsets: std::array::from_fn(|d| a.offsets[d] + a.scale[d] * k[d]),
            };
            if seen.insert(instr.clone()) {
                out.push((instr, k));
            }
        }
    }
    out.sort_by_key(|(i, _)| i.field);
    out
}

fn in_domain(spec: &KernelSpec, cell: Coord) -> bool {
    (0..3).all(|d| cell[d] >= spec.domain.lo[d] && cell[d] < spec.domain.hi[d])
}

struct Replayer<'a> {
    spec: &'a KernelSpec,
    launch: &'a LaunchConfig,
    half_warp: usize,
    sector: i64,
    element_mask: u32,
    instrs: Vec<(Instruction, Coord)>,
    sectors: Vec<(i64, u32)>,
}

impl Replayer<'_> {
    fn threads_of(&self, block: Coord) -> Vec<Coord> {
        crate::l1::ThreadGroup::block(self.launch, block).threads
    }

    fn issue(&mut self, cache: &mut SimCache, idx: usize, threads: &[Coord]) {
        let (instr, k) = &self.instrs[idx];
        let es = self.spec.fields[instr.field].element_size;
        for chunk in threads.chunks(self.half_warp) {
            self.sectors.clear();
            for &t in chunk {
                let cell = std::array::from_fn(|d| {
                    self.spec.domain.lo[d] + self.spec.cell_step[d] * t[d] + k[d]
                });
                if !in_domain(self.spec, cell) {
                    continue;
                }
                let addr = instr.address(self.spec, t) + ((instr.field as i64) << FIELD_SHIFT);
                let within = addr.rem_euclid(self.sector) as u32;
                let bytes = if es >= 32 {
                    u32::MAX
                } else {
                    self.element_mask << within
                };
                self.sectors.push((addr.div_euclid(self.sector), bytes));
            }
            self.sectors.sort_unstable_by_key(|s| s.0);
            let mut i = 0;
            while i < self.sectors.len() {
                let s = self.sectors[i].0;
                let mut bytes = 0u32;
                while i < self.sectors.len() && self.sectors[i].0 == s {
                    bytes |= self.sectors[i].1;
                    i += 1;
                }
                match instr.kind {
                    AccessKind::Load => cache.load(s),
                    AccessKind::Store => cache.store(s, bytes),
                }
            }
        }
    }
}

/// Replays the blocks with x-major linear indices in `blocks` (the whole grid
/// if `None`). Threads whose cell lies outside the domain issue nothing.
pub fn simulate(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
    cfg: SimConfig,
    blocks: Option<std::ops::Range<i64>>,
) -> Result<SimResult, SimError> {
    check_launch(launch, hw)?;
    let blocks = blocks.unwrap_or(0..launch.grid_blocks());
    let instrs = guarded_instructions(spec);
    let n = (blocks.end - blocks.start).max(0) as u64
        * launch.block_threads() as u64
        * instrs.len() as u64;
    if n > MAX_ADDRESSES {
        return Err(SimError::ScaleLimit(n));
    }
    let es = spec.fields.iter().map(|f| f.element_size).max().unwrap_or(8);
    let mut r = Replayer {
        spec,
        launch,
        half_warp: hw.half_warp as usize,
        sector: hw.sector_bytes,
        element_mask: if es >= 32 { u32::MAX } else { (1u32 << es) - 1 },
        instrs,
        sectors: Vec::new(),
    };
    let mut cache = SimCache::new(hw, cfg.level, cfg.capacity_bytes);
    let group = match cfg.order {
        BlockOrder::Sequential => 1,
        BlockOrder::RoundRobin(g) => g.max(1),
    };
    let ids: Vec<i64> = blocks.collect();
    for chunk in ids.chunks(group) {
        let threads: Vec<Vec<Coord>> = chunk
            .iter()
            .map(|&b| r.threads_of(launch.block_coord(b)))
            .collect();
        if group == 1 {
            for i in 0..r.instrs.len() {
                r.issue(&mut cache, i, &threads[0]);
            }
        } else {
            for i in 0..r.instrs.len() {
                for t in &threads {
                    r.issue(&mut cache, i, t);
                }
            }
        }
    }
    Ok(cache.finish())
}

/// One point of a hit-rate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub curve: String,
    pub o: f64,
    pub r: f64,
}

/// Hit-rate samples over a range of capacities: for each factor `f` the
/// cache holds `allocated / f` bytes, so the oversubscription is `f`.
pub fn capacity_samples(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
    level: SimLevel,
    curve: &str,
    factors: &[f64],
) -> Result<Vec<Sample>, SimError> {
    let cold = simulate(
        spec,
        launch,
        hw,
        SimConfig {
            level,
            capacity_bytes: None,
            order: BlockOrder::Sequential,
        },
        None,
    )?;
    let allocated = cold.lines_allocated * hw.cache_line_bytes as u64;
    factors
        .iter()
        .map(|&f| {
            let cap = (allocated as f64 / f).round().max(hw.cache_line_bytes as f64) as u64;
            let res = simulate(
                spec,
                launch,
                hw,
                SimConfig {
                    level,
                    capacity_bytes: Some(cap),
                    order: BlockOrder::Sequential,
                },
                None,
            )?;
            Ok(Sample {
                curve: curve.to_owned(),
                o: allocated as f64 / cap as f64,
                r: res.r_hit(),
            })
        })
        .collect()
}
