//! Explicit enumeration over one representative thread block: L1 bank
//! conflicts and unique sector/line footprints.

use std::collections::{BTreeMap, HashSet};

use crate::error::EstimateError;
use crate::hardware::HardwareModel;
use crate::kernel::{AccessKind, Coord, KernelSpec, LaunchConfig};

/// One memory instruction after folding replication and register reuse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instruction {
    pub field: usize,
    pub kind: AccessKind,
    pub scale: Coord,
    pub offsets: Coord,
}

/// Distinct instructions of a kernel; accesses that coincide after folding
/// expansion are served from registers and issue only once.
pub fn instructions(spec: &KernelSpec) -> Vec<Instruction> {
    let expanded = spec.expand_folding();
    let mut seen = HashSet::new();
    expanded
        .accesses
        .iter()
        .map(|a| Instruction {
            field: a.field,
            kind: a.kind,
            scale: a.scale,
            offsets: a.offsets,
        })
        .filter(|i| seen.insert(i.clone()))
        .collect()
}

impl Instruction {
    pub fn address(&self, spec: &KernelSpec, thread: Coord) -> i64 {
        let f = &spec.fields[self.field];
        let cell = spec.cell_of(thread, [0; 3]);
        let linear: i64 = (0..3)
            .map(|d| f.strides[d] * (self.scale[d] * cell[d] + self.offsets[d]))
            .sum();
        f.alignment + f.element_size * linear
    }
}

/// Global thread coordinates in x-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadGroup {
    pub threads: Vec<Coord>,
}

impl ThreadGroup {
    pub fn block(launch: &LaunchConfig, block: Coord) -> Self {
        let [bx, by, bz] = launch.block;
        let mut threads = Vec::with_capacity(launch.block_threads() as usize);
        for z in 0..bz {
            for y in 0..by {
                for x in 0..bx {
                    threads.push([block[0] * bx + x, block[1] * by + y, block[2] * bz + z]);
                }
            }
        }
        Self { threads }
    }

    /// The block in the middle of the grid.
    pub fn representative(launch: &LaunchConfig) -> Self {
        Self::block(launch, std::array::from_fn(|d| launch.grid[d] / 2))
    }
}

pub trait GridVisitor {
    /// Addresses of one instruction for one half-warp.
    fn visit(&mut self, instruction: &Instruction, half_warp: usize, addresses: &[i64]);
}

/// Feeds every instruction's addresses to `visitor`, field by field,
/// instruction by instruction, half-warp by half-warp.
pub fn grid_iteration<V: GridVisitor>(
    spec: &KernelSpec,
    group: &ThreadGroup,
    half_warp: usize,
    visitor: &mut V,
) {
    let mut instrs = instructions(spec);
    instrs.sort_by_key(|i| i.field);
    let mut buf = Vec::with_capacity(half_warp);
    for instr in &instrs {
        for (hw_idx, chunk) in group.threads.chunks(half_warp).enumerate() {
            buf.clear();
            buf.extend(chunk.iter().map(|&t| instr.address(spec, t)));
            visitor.visit(instr, hw_idx, &buf);
        }
    }
}

/// Number of wavefronts needed to serve one half-warp instruction.
pub fn bank_conflict_cycles(addresses: &[i64], hw: &HardwareModel) -> u32 {
    let width = hw.bank_width_bytes;
    let mut words: Vec<i64> = addresses.iter().map(|a| a.div_euclid(width)).collect();
    words.sort_unstable();
    words.dedup();
    // (first word, bank occupancy mask)
    let mut fronts: Vec<(i64, u64)> = Vec::new();
    let window = hw.wavefront_pair_window_bytes / width;
    for w in words {
        let bank = 1u64 << w.rem_euclid(hw.banks);
        match fronts
            .iter_mut()
            .find(|(first, mask)| w - *first <= window && mask & bank == 0)
        {
            Some((_, mask)) => *mask |= bank,
            None => fronts.push((w, bank)),
        }
    }
    fronts.len() as u32
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct L1Cost {
    pub cycles_per_lup: f64,
    pub wavefronts_total: u64,
    /// Per-instruction unique sectors per half-warp, summed over the block.
    pub load_volume_sectors: u64,
    pub store_volume_sectors: u64,
    pub lups_per_block: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Granules {
    pub sectors: u64,
    pub lines: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FieldFootprint {
    pub loads: Granules,
    pub stores: Granules,
    pub all: Granules,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockFootprint {
    pub per_field: BTreeMap<String, FieldFootprint>,
}

impl BlockFootprint {
    pub fn total(&self) -> FieldFootprint {
        let mut t = FieldFootprint::default();
        for f in self.per_field.values() {
            for (acc, add) in [
                (&mut t.loads, f.loads),
                (&mut t.stores, f.stores),
                (&mut t.all, f.all),
            ] {
                acc.sectors += add.sectors;
                acc.lines += add.lines;
            }
        }
        t
    }
}

pub fn check_launch(launch: &LaunchConfig, hw: &HardwareModel) -> Result<(), EstimateError> {
    let threads = launch.block_threads();
    if threads > hw.max_threads_per_block {
        return Err(EstimateError::BlockTooLarge {
            threads,
            limit: hw.max_threads_per_block,
        });
    }
    Ok(())
}

struct CostVisitor<'a> {
    hw: &'a HardwareModel,
    wavefronts: u64,
    load_sectors: u64,
    store_sectors: u64,
    scratch: Vec<i64>,
}

impl GridVisitor for CostVisitor<'_> {
    fn visit(&mut self, instr: &Instruction, _half_warp: usize, addresses: &[i64]) {
        self.wavefronts += u64::from(bank_conflict_cycles(addresses, self.hw));
        self.scratch.clear();
        self.scratch
            .extend(addresses.iter().map(|a| a.div_euclid(self.hw.sector_bytes)));
        self.scratch.sort_unstable();
        self.scratch.dedup();
        let n = self.scratch.len() as u64;
        match instr.kind {
            AccessKind::Load => self.load_sectors += n,
            AccessKind::Store => self.store_sectors += n,
        }
    }
}

pub fn l1_cost(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<L1Cost, EstimateError> {
    check_launch(launch, hw)?;
    let group = ThreadGroup::representative(launch);
    let mut v = CostVisitor {
        hw,
        wavefronts: 0,
        load_sectors: 0,
        store_sectors: 0,
        scratch: Vec::new(),
    };
    grid_iteration(spec, &group, hw.half_warp as usize, &mut v);
    let lups = launch.block_threads() * spec.work_per_thread();
    Ok(L1Cost {
        cycles_per_lup: v.wavefronts as f64 / lups as f64,
        wavefronts_total: v.wavefronts,
        load_volume_sectors: v.load_sectors,
        store_volume_sectors: v.store_sectors,
        lups_per_block: lups,
    })
}

#[derive(Default)]
struct FieldSets {
    load_sectors: HashSet<i64>,
    load_lines: HashSet<i64>,
    store_sectors: HashSet<i64>,
    store_lines: HashSet<i64>,
}

struct FootprintVisitor {
    sector: i64,
    line: i64,
    fields: BTreeMap<usize, FieldSets>,
}

impl GridVisitor for FootprintVisitor {
    fn visit(&mut self, instr: &Instruction, _half_warp: usize, addresses: &[i64]) {
        let f = self.fields.entry(instr.field).or_default();
        let (sectors, lines) = match instr.kind {
            AccessKind::Load => (&mut f.load_sectors, &mut f.load_lines),
            AccessKind::Store => (&mut f.store_sectors, &mut f.store_lines),
        };
        for &a in addresses {
            sectors.insert(a.div_euclid(self.sector));
            lines.insert(a.div_euclid(self.line));
        }
    }
}

/// Unique sectors and lines touched by one thread group, per field.
pub fn group_footprint(
    spec: &KernelSpec,
    group: &ThreadGroup,
    hw: &HardwareModel,
) -> BlockFootprint {
    let mut v = FootprintVisitor {
        sector: hw.sector_bytes,
        line: hw.cache_line_bytes,
        fields: BTreeMap::new(),
    };
    grid_iteration(spec, group, hw.half_warp as usize, &mut v);
    let per_field = v
        .fields
        .into_iter()
        .map(|(idx, s)| {
            let fp = FieldFootprint {
                loads: Granules {
                    sectors: s.load_sectors.len() as u64,
                    lines: s.load_lines.len() as u64,
                },
                stores: Granules {
                    sectors: s.store_sectors.len() as u64,
                    lines: s.store_lines.len() as u64,
                },
                all: Granules {
                    sectors: s.load_sectors.union(&s.store_sectors).count() as u64,
                    lines: s.load_lines.union(&s.store_lines).count() as u64,
                },
            };
            (spec.fields[idx].name.clone(), fp)
        })
        .collect();
    BlockFootprint { per_field }
}

/// Footprint of the representative block.
pub fn block_footprint(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    hw: &HardwareModel,
) -> Result<BlockFootprint, EstimateError> {
    check_launch(launch, hw)?;
    Ok(group_footprint(spec, &ThreadGroup::representative(launch), hw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn a100() -> HardwareModel {
        bundled::hardware("a100").unwrap()
    }

    fn strided(stride: i64) -> Vec<i64> {
        (0..16).map(|t| t * stride * 8).collect()
    }

    #[test]
    fn bank_conflict_examples() {
        let hw = a100();
        assert_eq!(bank_conflict_cycles(&strided(1), &hw), 1);
        assert_eq!(bank_conflict_cycles(&strided(2), &hw), 2);
        assert_eq!(bank_conflict_cycles(&strided(16), &hw), 16);
        assert_eq!(bank_conflict_cycles(&[], &hw), 0);
        let split: Vec<i64> = (0..8).map(|i| i * 8).chain((0..8).map(|i| 4096 + 64 + i * 8)).collect();
        assert_eq!(bank_conflict_cycles(&split, &hw), 2);
        // Duplicates collapse to one word.
        assert_eq!(bank_conflict_cycles(&[64; 16], &hw), 1);
    }

    #[test]
    fn copy_kernel_cost() {
        let hw = a100();
        let k = bundled::kernel("copy").unwrap().unwrap();
        let l = LaunchConfig::for_kernel(&k, [256, 1, 1]).unwrap();
        let c = l1_cost(&k, &l, &hw).unwrap();
        assert_eq!(c.cycles_per_lup, 0.125);
        assert_eq!(c.load_volume_sectors, 64);
        assert_eq!(c.store_volume_sectors, 64);
    }

    #[test]
    fn oversized_block_rejected() {
        let hw = a100();
        let k = bundled::kernel("copy").unwrap().unwrap();
        let l = LaunchConfig::for_kernel(&k, [1024, 2, 1]).unwrap();
        assert!(matches!(
            l1_cost(&k, &l, &hw),
            Err(EstimateError::BlockTooLarge { threads: 2048, .. })
        ));
    }

    #[test]
    fn aligned_and_straddling_rows() {
        let hw = a100();
        let mut k = bundled::kernel("copy").unwrap().unwrap();
        k.accesses.truncate(1);
        let l = LaunchConfig::for_kernel(&k, [32, 1, 1]).unwrap();
        let t = block_footprint(&k, &l, &hw).unwrap().total();
        assert_eq!(t.loads, Granules { sectors: 8, lines: 2 });
        let src = k.field_index("src").unwrap();
        k.fields[src].alignment = 8;
        let t = block_footprint(&k, &l, &hw).unwrap().total();
        assert_eq!(t.loads, Granules { sectors: 9, lines: 3 });
    }

    #[test]
    fn four_point_two_by_two() {
        struct Count(usize, usize);
        impl GridVisitor for Count {
            fn visit(&mut self, _: &Instruction, _: usize, a: &[i64]) {
                self.0 += 1;
                self.1 += a.len();
            }
        }
        let mut k = bundled::kernel("2d5pt").unwrap().unwrap();
        k.accesses.retain(|a| a.kind == AccessKind::Load && a.offsets != [0; 3]);
        let l = LaunchConfig::for_kernel(&k, [2, 2, 1]).unwrap();
        let mut c = Count(0, 0);
        grid_iteration(&k, &ThreadGroup::representative(&l), 16, &mut c);
        assert_eq!((c.0, c.1), (4, 16));
    }

    #[test]
    fn folding_reuses_registers() {
        let k = bundled::kernel("3d25pt_r4").unwrap().unwrap();
        assert_eq!(instructions(&k).len(), 26);
        let k2 = k.with_folding(crate::ThreadFolding([1, 1, 2]));
        // 50 load replicas, 8 coincide along z; 2 stores.
        assert_eq!(instructions(&k2).len(), 44);
    }
}
