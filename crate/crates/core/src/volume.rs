//! Data volumes between L1, L2 and DRAM: waves of simultaneously resident
//! blocks, layer-condition reuse sets, and capacity misses.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::EstimateError;
use crate::hardware::{Gompertz, HardwareModel};
use crate::kernel::{AccessKind, Coord, KernelSpec, LaunchConfig};
use crate::l1::{self, check_launch};
use crate::set::{AffineMap, AffineSet, Piece, Progression, QuasiAffine, SetError};

/// How addresses are turned into cache granules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddressMode {
    /// Granules are (row-local granule, y, z) tuples; rows never share a granule.
    #[default]
    Multidim,
    /// Granules are taken over the linear byte address.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindFilter {
    Loads,
    Stores,
    All,
}

impl KindFilter {
    fn admits(self, kind: AccessKind) -> bool {
        match self {
            KindFilter::Loads => kind == AccessKind::Load,
            KindFilter::Stores => kind == AccessKind::Store,
            KindFilter::All => true,
        }
    }
}

pub type BlockBox = (Coord, Coord);

/// Splits the x-major linear block range `[a, b)` into at most five boxes.
pub fn block_range_boxes(grid: Coord, a: i64, b: i64) -> Vec<BlockBox> {
    let (gx, gy) = (grid[0], grid[1]);
    let plane = gx * gy;
    let at = |i: i64| [i % gx, (i / gx) % gy, i / plane];
    let mut out = Vec::new();
    let mut a = a;
    let row_end = |i: i64| (i / gx + 1) * gx;
    if a < b && a % gx != 0 {
        let e = b.min(row_end(a));
        let s = at(a);
        out.push(([s[0], s[1], s[2]], [s[0] + e - a, s[1] + 1, s[2] + 1]));
        a = e;
    }
    if a < b && a % plane != 0 {
        let e = ((b / gx) * gx).min((a / plane + 1) * plane);
        if e > a {
            let s = at(a);
            out.push(([0, s[1], s[2]], [gx, s[1] + (e - a) / gx, s[2] + 1]));
            a = e;
        }
    }
    let e = (b / plane) * plane;
    if e > a {
        out.push(([0, 0, a / plane], [gx, gy, e / plane]));
        a = e;
    }
    let e = (b / gx) * gx;
    if e > a {
        let s = at(a);
        out.push(([0, s[1], s[2]], [gx, s[1] + (e - a) / gx, s[2] + 1]));
        a = e;
    }
    if a < b {
        let s = at(a);
        out.push(([0, s[1], s[2]], [b - a, s[1] + 1, s[2] + 1]));
    }
    out
}

/// Cells updated by the threads of a set of block boxes, clipped to the
/// domain.
pub fn cells_of_blocks(spec: &KernelSpec, launch: &LaunchConfig, boxes: &[BlockBox]) -> AffineSet {
    let dom = &spec.domain;
    let domain = AffineSet::from_box(&dom.lo, &dom.hi);
    let mut pieces = Vec::new();
    for (lo, hi) in boxes {
        let mut dims: Vec<Vec<Progression>> = Vec::with_capacity(3);
        for d in 0..3 {
            let step = spec.cell_step[d];
            let fold = spec.folding.0[d];
            let t0 = lo[d] * launch.block[d];
            let n = (hi[d] - lo[d]) * launch.block[d];
            let base = dom.lo[d] + step * t0;
            let per_dim = if fold == step {
                Progression::range(base, base + step * n).into_iter().collect()
            } else {
                (0..fold)
                    .filter_map(|k| Progression::new(base + k, step, n))
                    .collect()
            };
            dims.push(per_dim);
        }
        for px in &dims[0] {
            for py in &dims[1] {
                for pz in &dims[2] {
                    pieces.push(Piece(vec![*px, *py, *pz]));
                }
            }
        }
    }
    AffineSet::from_pieces(3, pieces)
        .intersect(&domain)
        .expect("three-dimensional sets")
}

/// Lattice updates represented by a cell set built by [`cells_of_blocks`].
pub fn lups_of_cells(spec: &KernelSpec, cells: &AffineSet) -> f64 {
    let per_cell = spec.work_per_thread() / spec.folding.replication();
    cells.cardinality() as f64 * per_cell as f64
}

fn access_map(
    spec: &KernelSpec,
    access: &crate::kernel::Access,
    granularity: i64,
    mode: AddressMode,
) -> AffineMap {
    let f = &spec.fields[access.field];
    let es = f.element_size;
    let outputs = match mode {
        AddressMode::Multidim => vec![
            QuasiAffine {
                coeffs: vec![es * f.strides[0] * access.scale[0], 0, 0],
                constant: f.alignment + es * f.strides[0] * access.offsets[0],
                divisor: granularity,
            },
            QuasiAffine {
                coeffs: vec![0, access.scale[1], 0],
                constant: access.offsets[1],
                divisor: 1,
            },
            QuasiAffine {
                coeffs: vec![0, 0, access.scale[2]],
                constant: access.offsets[2],
                divisor: 1,
            },
        ],
        AddressMode::Linear => vec![QuasiAffine {
            coeffs: (0..3).map(|d| es * f.strides[d] * access.scale[d]).collect(),
            constant: f.alignment
                + es * (0..3).map(|d| f.strides[d] * access.offsets[d]).sum::<i64>(),
            divisor: granularity,
        }],
    };
    AffineMap::new(3, outputs).expect("well-formed access map")
}

/// Unique granules touched from `cells`, one set per field (in field order).
pub fn footprint(
    spec: &KernelSpec,
    cells: &AffineSet,
    kinds: KindFilter,
    granularity: i64,
    mode: AddressMode,
) -> Result<Vec<AffineSet>, SetError> {
    let out_dim = match mode {
        AddressMode::Multidim => 3,
        AddressMode::Linear => 1,
    };
    let mut per_field = vec![AffineSet::empty(out_dim); spec.fields.len()];
    if cells.is_empty() {
        return Ok(per_field);
    }
    for a in spec.accesses.iter().filter(|a| kinds.admits(a.kind)) {
        let image = cells.apply(&access_map(spec, a, granularity, mode))?;
        per_field[a.field] = per_field[a.field].union(&image)?;
    }
    Ok(per_field.into_iter().map(|s| s.normalized()).collect())
}

fn total_count(sets: &[AffineSet]) -> u64 {
    sets.iter().map(AffineSet::cardinality).sum()
}

/// Blocks resident on the whole GPU at once. The wave is taken from the middle
/// of the grid: whole block planes if it spans a plane, otherwise whole rows
/// inside the middle plane, otherwise blocks inside the middle row.
#[derive(Debug, Clone)]
pub struct Wave {
    pub first_block: i64,
    pub blocks: i64,
    pub size_blocks: i64,
    pub block_boxes: Vec<BlockBox>,
    pub cells: AffineSet,
    pub lups: f64,
}

pub fn build_wave(spec: &KernelSpec, launch: &LaunchConfig, hw: &HardwareModel) -> Wave {
    let total = launch.grid_blocks();
    let size = hw.wave_blocks(launch.block_threads());
    let (first, blocks) = if total <= size {
        (0, total)
    } else {
        let [gx, gy, gz] = launch.grid;
        let plane = gx * gy;
        let first = if size >= plane {
            ((total - size) / 2) / plane * plane
        } else if size >= gx {
            gz / 2 * plane + ((plane - size) / 2) / gx * gx
        } else {
            gz / 2 * plane + gy / 2 * gx + (gx - size) / 2
        };
        (first, size)
    };
    let block_boxes = block_range_boxes(launch.grid, first, first + blocks);
    let cells = cells_of_blocks(spec, launch, &block_boxes);
    let lups = lups_of_cells(spec, &cells);
    Wave {
        first_block: first,
        blocks,
        size_blocks: size,
        block_boxes,
        cells,
        lups,
    }
}

/// Blocks scheduled shortly before a wave, one shell per dimension.
#[derive(Debug, Clone)]
pub struct LayerSets {
    pub block_boxes: [Vec<BlockBox>; 3],
    pub cells: [AffineSet; 3],
}

impl LayerSets {
    pub fn is_empty(&self, d: usize) -> bool {
        self.cells[d].is_empty()
    }
}

/// The x shell is the block just before the wave, the y shell the rest of the
/// preceding block row, the z shell the rest of the preceding block plane.
/// A shell is empty when the wave already covers that reuse distance.
pub fn layer_sets(spec: &KernelSpec, launch: &LaunchConfig, wave: &Wave) -> LayerSets {
    let [gx, gy, _] = launch.grid;
    let reach = [1, gx, gx * gy];
    let a = wave.first_block;
    let mut prev_start = a;
    let mut boxes: [Vec<BlockBox>; 3] = Default::default();
    for d in 0..3 {
        let spans = d < 2 && wave.blocks >= reach[d + 1];
        let start = (a - reach[d]).max(0);
        if !spans && start < prev_start {
            boxes[d] = block_range_boxes(launch.grid, start, prev_start);
            prev_start = start;
        }
    }
    let cells = boxes
        .clone()
        .map(|b| cells_of_blocks(spec, launch, &b));
    LayerSets {
        block_boxes: boxes,
        cells,
    }
}

/// `(1 - r) * (v_up - v_comp)`, never negative.
pub fn capacity_volume(v_up: f64, v_comp: f64, r: f64) -> f64 {
    if v_up < v_comp {
        log::debug!("request volume {v_up} below compulsory volume {v_comp}; no redundancy");
        return 0.0;
    }
    ((1.0 - r) * (v_up - v_comp)).max(0.0)
}

pub fn gompertz(params: &Gompertz, o: f64) -> f64 {
    params.eval(o)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FieldVolumes {
    pub load_up: f64,
    pub load_comp: f64,
    pub load_down: f64,
    pub store: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Traffic between L1 and L2, per representative block.
    L2L1,
    /// Traffic between L2 and DRAM, per representative wave.
    DramL2,
}

impl Level {
    pub fn label(self) -> &'static str {
        match self {
            Level::L2L1 => "l2_l1",
            Level::DramL2 => "dram_l2",
        }
    }
}

/// Volumes at one memory level, in bytes for `lups` lattice updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeBreakdown {
    pub level: Level,
    pub lups: f64,
    pub v_up: f64,
    pub v_comp: f64,
    pub v_red: f64,
    pub v_cap: f64,
    pub v_alloc: f64,
    pub oversubscription: f64,
    /// Loaded bytes crossing into this level from below.
    pub v_down: f64,
    pub overlap: [f64; 3],
    pub overlap_hits: [f64; 3],
    pub layer_oversubscription: [f64; 3],
    pub store_unique: f64,
    pub store_redundant: f64,
    pub store_readback: f64,
    /// Stored bytes leaving towards the lower level.
    pub store_down: f64,
    pub per_field: BTreeMap<String, FieldVolumes>,
}

impl VolumeBreakdown {
    fn new(level: Level, lups: f64) -> Self {
        Self {
            level,
            lups,
            v_up: 0.0,
            v_comp: 0.0,
            v_red: 0.0,
            v_cap: 0.0,
            v_alloc: 0.0,
            oversubscription: 0.0,
            v_down: 0.0,
            overlap: [0.0; 3],
            overlap_hits: [0.0; 3],
            layer_oversubscription: [0.0; 3],
            store_unique: 0.0,
            store_redundant: 0.0,
            store_readback: 0.0,
            store_down: 0.0,
            per_field: BTreeMap::new(),
        }
    }

    pub fn per_lup(&self, bytes: f64) -> f64 {
        bytes / self.lups
    }

    pub fn load_per_lup(&self) -> f64 {
        self.per_lup(self.v_down)
    }

    pub fn store_per_lup(&self) -> f64 {
        self.per_lup(self.store_down)
    }

    pub fn total_per_lup(&self) -> f64 {
        self.per_lup(self.v_down + self.store_down)
    }
}

pub fn estimate_l2_volume(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<VolumeBreakdown, EstimateError> {
    let cost = l1::l1_cost(spec, launch, hw)?;
    let fp = l1::block_footprint(spec, launch, hw)?;
    Ok(l2_from_parts(spec, launch, hw, &cost, &fp))
}

pub(crate) fn l2_from_parts(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
    cost: &l1::L1Cost,
    fp: &l1::BlockFootprint,
) -> VolumeBreakdown {
    let sector = hw.sector_bytes as f64;
    let line = hw.cache_line_bytes as f64;
    let total = fp.total();
    let mut v = VolumeBreakdown::new(Level::L2L1, cost.lups_per_block as f64);
    v.v_comp = total.loads.sectors as f64 * sector;
    v.v_up = cost.load_volume_sectors as f64 * sector;
    v.v_red = (v.v_up - v.v_comp).max(0.0);
    let resident = hw.resident_blocks_per_sm(launch.block_threads()) as f64;
    v.v_alloc = total.all.lines as f64 * line * resident;
    v.oversubscription = v.v_alloc / hw.l1_capacity_bytes as f64;
    let r = hw.hit_rates.l1.eval(v.oversubscription);
    v.v_cap = capacity_volume(v.v_up, v.v_comp, r);
    v.v_down = v.v_comp + v.v_cap;
    v.store_down = cost.store_volume_sectors as f64 * sector;
    v.store_unique = total.stores.sectors as f64 * sector;
    v.store_redundant = v.store_down - v.store_unique;

    let per_instr = per_field_request_sectors(spec, launch, hw);
    for (name, f) in &fp.per_field {
        let (up, st) = per_instr.get(name).copied().unwrap_or_default();
        let comp = f.loads.sectors as f64 * sector;
        let up = up as f64 * sector;
        v.per_field.insert(
            name.clone(),
            FieldVolumes {
                load_up: up,
                load_comp: comp,
                load_down: comp + capacity_volume(up, comp, r),
                store: st as f64 * sector,
            },
        );
    }
    v
}

fn per_field_request_sectors(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> BTreeMap<String, (u64, u64)> {
    struct V<'a> {
        spec: &'a KernelSpec,
        sector: i64,
        out: BTreeMap<String, (u64, u64)>,
    }
    impl l1::GridVisitor for V<'_> {
        fn visit(&mut self, instr: &l1::Instruction, _: usize, addrs: &[i64]) {
            let mut s: Vec<i64> = addrs.iter().map(|a| a.div_euclid(self.sector)).collect();
            s.sort_unstable();
            s.dedup();
            let e = self
                .out
                .entry(self.spec.fields[instr.field].name.clone())
                .or_default();
            match instr.kind {
                AccessKind::Load => e.0 += s.len() as u64,
                AccessKind::Store => e.1 += s.len() as u64,
            }
        }
    }
    let mut v = V {
        spec,
        sector: hw.sector_bytes,
        out: BTreeMap::new(),
    };
    l1::grid_iteration(spec, &l1::ThreadGroup::representative(launch), hw.half_warp as usize, &mut v);
    v.out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DramOptions {
    pub mode: AddressMode,
    /// Ignore reuse from previously scheduled blocks.
    pub no_layer_reuse: bool,
}

pub fn estimate_dram_volume(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<VolumeBreakdown, EstimateError> {
    let cost = l1::l1_cost(spec, launch, hw)?;
    estimate_dram_volume_with(spec, launch, hw, &cost, DramOptions::default())
}

pub fn estimate_dram_volume_with(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
    cost: &l1::L1Cost,
    opts: DramOptions,
) -> Result<VolumeBreakdown, EstimateError> {
    check_launch(launch, hw)?;
    let sector = hw.sector_bytes;
    let line = hw.cache_line_bytes;
    let l2 = hw.l2_effective_bytes as f64;
    let wave = build_wave(spec, launch, hw);
    let layers = layer_sets(spec, launch, &wave);
    let mut v = VolumeBreakdown::new(Level::DramL2, wave.lups);

    let wave_loads = footprint(spec, &wave.cells, KindFilter::Loads, sector, opts.mode)?;
    let wave_stores = footprint(spec, &wave.cells, KindFilter::Stores, sector, opts.mode)?;
    let wave_all_lines = footprint(spec, &wave.cells, KindFilter::All, line, opts.mode)?;
    let wave_store_lines = footprint(spec, &wave.cells, KindFilter::Stores, line, opts.mode)?;

    let sb = sector as f64;
    v.v_comp = total_count(&wave_loads) as f64 * sb;
    v.v_alloc = total_count(&wave_all_lines) as f64 * line as f64;
    v.oversubscription = v.v_alloc / l2;
    // Every L1 load request sector reaches L2.
    v.v_up = cost.load_volume_sectors as f64 * sb / cost.lups_per_block as f64 * wave.lups;
    v.v_red = (v.v_up - v.v_comp).max(0.0);

    let curves = [
        hw.hit_rates.l2_over_y,
        hw.hit_rates.l2_over_y,
        hw.hit_rates.l2_over_z,
    ];
    let mut field_hits = vec![0.0; spec.fields.len()];
    let mut seen: Vec<AffineSet> = wave_loads.iter().map(|s| AffineSet::empty(s.dim())).collect();
    for d in 0..3 {
        if layers.is_empty(d) {
            continue;
        }
        let layer_loads = footprint(spec, &layers.cells[d], KindFilter::Loads, sector, opts.mode)?;
        let layer_lines = footprint(spec, &layers.cells[d], KindFilter::All, line, opts.mode)?;
        let o = total_count(&layer_lines) as f64 * line as f64 / l2;
        let r = if opts.no_layer_reuse { 0.0 } else { curves[d].eval(o) };
        v.layer_oversubscription[d] = o;
        for (f, (w, l)) in wave_loads.iter().zip(&layer_loads).enumerate() {
            let fresh = w.intersect(l)?.subtract(&seen[f])?;
            let bytes = fresh.cardinality() as f64 * sb;
            v.overlap[d] += bytes;
            v.overlap_hits[d] += bytes * r;
            field_hits[f] += bytes * r;
            seen[f] = seen[f].union(l)?;
        }
    }

    v.store_unique = total_count(&wave_stores) as f64 * sb;
    let touches = cost.store_volume_sectors as f64 * sb / cost.lups_per_block as f64 * wave.lups;
    v.store_redundant = (touches - v.store_unique).max(0.0);
    let o_store = total_count(&wave_store_lines) as f64 * line as f64 / l2;
    v.store_readback = (1.0 - hw.hit_rates.l2_store.eval(o_store)) * v.store_redundant;
    v.store_down = v.store_unique;

    let hits: f64 = v.overlap_hits.iter().sum();
    v.v_cap = 0.0;
    v.v_down = (v.v_comp - hits).max(0.0) + v.store_readback;

    for (f, field) in spec.fields.iter().enumerate() {
        let comp = wave_loads[f].cardinality() as f64 * sb;
        let store = wave_stores[f].cardinality() as f64 * sb;
        if comp == 0.0 && store == 0.0 {
            continue;
        }
        v.per_field.insert(
            field.name.clone(),
            FieldVolumes {
                load_up: comp,
                load_comp: comp,
                load_down: (comp - field_hits[f]).max(0.0),
                store,
            },
        );
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn brute_range(grid: Coord, a: i64, b: i64) -> Vec<Coord> {
        let mut v: Vec<Coord> = (a..b)
            .map(|i| [i % grid[0], (i / grid[0]) % grid[1], i / (grid[0] * grid[1])])
            .collect();
        v.sort();
        v
    }

    #[test]
    fn block_ranges_decompose_exactly() {
        let grid = [5, 4, 6];
        let total = 120;
        for a in 0..total {
            for b in a..=total {
                let boxes = block_range_boxes(grid, a, b);
                assert!(boxes.len() <= 5);
                let mut pts = Vec::new();
                for (lo, hi) in &boxes {
                    for z in lo[2]..hi[2] {
                        for y in lo[1]..hi[1] {
                            for x in lo[0]..hi[0] {
                                pts.push([x, y, z]);
                            }
                        }
                    }
                }
                pts.sort();
                assert_eq!(pts, brute_range(grid, a, b), "range {a}..{b}");
            }
        }
    }

    #[test]
    fn wave_sizes() {
        let hw = bundled::hardware("a100").unwrap();
        let k = bundled::kernel("copy").unwrap().unwrap();
        let l = LaunchConfig::for_kernel(&k, [1024, 1, 1]).unwrap();
        let w = build_wave(&k, &l, &hw);
        assert_eq!(w.blocks, 216);
        assert_eq!(w.lups, 216.0 * 1024.0);

        let small = k.with_domain_size([1024, 100, 1]);
        let l = LaunchConfig::for_kernel(&small, [1024, 1, 1]).unwrap();
        let w = build_wave(&small, &l, &hw);
        assert_eq!((w.first_block, w.blocks), (0, 100));
    }

    #[test]
    fn wave_clipped_at_domain_edge() {
        let hw = bundled::hardware("a100").unwrap();
        let k = bundled::kernel("3d25pt_r4").unwrap().unwrap();
        let l = LaunchConfig::for_kernel(&k, [512, 1, 1]).unwrap();
        assert_eq!(l.grid[0], 2);
        let w = build_wave(&k, &l, &hw);
        // 432 blocks cover 216 rows of 640 cells.
        assert_eq!(w.lups, 216.0 * 640.0);
    }

    #[test]
    fn copy_volumes() {
        let hw = bundled::hardware("a100").unwrap();
        let k = bundled::kernel("copy").unwrap().unwrap();
        let l = LaunchConfig::for_kernel(&k, [1024, 1, 1]).unwrap();
        let d = estimate_dram_volume(&k, &l, &hw).unwrap();
        assert_eq!(d.v_comp, 216.0 * 1024.0 * 8.0);
        assert_eq!(d.overlap, [0.0; 3]);
        assert_eq!(d.load_per_lup(), 8.0);
        assert_eq!(d.store_per_lup(), 8.0);
        assert_eq!(d.store_readback, 0.0);
        let u = estimate_l2_volume(&k, &l, &hw).unwrap();
        assert_eq!(u.v_red, 0.0);
        assert_eq!(u.v_down, u.v_comp);
        assert_eq!(u.load_per_lup(), 8.0);
    }

    #[test]
    fn capacity_volume_arithmetic() {
        assert_eq!(capacity_volume(100.0, 60.0, 0.75), 10.0);
        assert_eq!(capacity_volume(100.0, 60.0, 1.0), 0.0);
        assert_eq!(capacity_volume(100.0, 60.0, 0.0), 40.0);
        assert_eq!(capacity_volume(50.0, 60.0, 0.0), 0.0);
    }

    #[test]
    fn layer_sets_empty_for_spanning_or_single_block() {
        let hw = bundled::hardware("a100").unwrap();
        let k = bundled::kernel("copy").unwrap().unwrap().with_domain_size([64, 64, 64]);
        let l = LaunchConfig::for_kernel(&k, [64, 4, 1]).unwrap();
        let w = build_wave(&k, &l, &hw);
        let ls = layer_sets(&k, &l, &w);
        assert!(ls.is_empty(0) && ls.is_empty(1));
        assert_eq!(w.first_block % 16, 0);
        assert_eq!(ls.block_boxes[2], vec![([0, 0, w.first_block / 16 - 1], [1, 16, w.first_block / 16])]);
        let one = k.with_domain_size([16, 1, 1]);
        let l = LaunchConfig::for_kernel(&one, [16, 1, 1]).unwrap();
        let w = build_wave(&one, &l, &hw);
        let ls = layer_sets(&one, &l, &w);
        assert!((0..3).all(|d| ls.is_empty(d)));
    }
}
