//! Independent oracles shared by the integration tests. Everything here works
//! by explicit enumeration and does not call into the set engine.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use warpvol_core::kernel::{AccessKind, Coord, KernelSpec, LaunchConfig};
use warpvol_core::set::{Piece, Progression};
use warpvol_core::{AffineMap, AffineSet, HardwareModel, QuasiAffine};

pub type Points = BTreeSet<Vec<i64>>;

pub fn a100() -> HardwareModel {
    warpvol_core::bundled::hardware("a100").unwrap()
}

pub fn kernel(name: &str) -> KernelSpec {
    warpvol_core::bundled::kernel(name).unwrap().unwrap()
}

fn progression_values(p: &Progression) -> impl Iterator<Item = i64> + '_ {
    (0..p.count).map(move |i| p.start + p.step * i)
}

/// Every point of every piece.
pub fn points(set: &AffineSet) -> Points {
    let mut out = Points::new();
    for piece in set.pieces() {
        let mut acc: Vec<Vec<i64>> = vec![Vec::new()];
        for p in &piece.0 {
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    progression_values(p).map(move |v| {
                        let mut q = prefix.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out.extend(acc);
    }
    out
}

pub fn image(pts: &Points, map: &AffineMap) -> Points {
    pts.iter()
        .map(|p| {
            map.outputs()
                .iter()
                .map(|o| {
                    let s: i64 = o.coeffs.iter().zip(p).map(|(a, x)| a * x).sum();
                    (s + o.constant).div_euclid(o.divisor)
                })
                .collect()
        })
        .collect()
}

pub fn random_progression(rng: &mut impl Rng) -> Progression {
    let start = rng.random_range(-12..12);
    let step = if rng.random_bool(0.5) { 1 } else { rng.random_range(1..5) };
    let count = rng.random_range(1..14);
    Progression::new(start, step, count).unwrap()
}

pub fn random_set(rng: &mut impl Rng, dim: usize) -> AffineSet {
    let n = rng.random_range(0..4);
    let pieces = (0..n)
        .map(|_| Piece((0..dim).map(|_| random_progression(rng)).collect()))
        .collect();
    AffineSet::from_pieces(dim, pieces)
}

pub fn random_map(rng: &mut impl Rng, in_dim: usize) -> AffineMap {
    let out_dim = rng.random_range(1..=3);
    let outputs = (0..out_dim)
        .map(|_| QuasiAffine {
            coeffs: (0..in_dim)
                .map(|_| match rng.random_range(0..10) {
                    0..=3 => 0,
                    4 => [8, 16, -8][rng.random_range(0..3)],
                    _ => rng.random_range(-3..=3),
                })
                .collect(),
            constant: rng.random_range(-40..=40),
            divisor: [1, 2, 3, 4, 8, 32, 128][rng.random_range(0..7)],
        })
        .collect();
    AffineMap::new(in_dim, outputs).unwrap()
}

fn in_domain(spec: &KernelSpec, cell: Coord) -> bool {
    (0..3).all(|d| cell[d] >= spec.domain.lo[d] && cell[d] < spec.domain.hi[d])
}

fn block_threads(launch: &LaunchConfig, b: i64) -> Vec<Coord> {
    let [gx, gy, _] = launch.grid;
    let block = [b % gx, (b / gx) % gy, b / (gx * gy)];
    let [bx, by, bz] = launch.block;
    let mut out = Vec::new();
    for z in 0..bz {
        for y in 0..by {
            for x in 0..bx {
                out.push([block[0] * bx + x, block[1] * by + y, block[2] * bz + z]);
            }
        }
    }
    out
}

/// `(field, granule)` pairs touched by the blocks with linear indices in
/// `blocks`, computed straight from the access definitions.
pub fn granules(
    spec: &KernelSpec,
    launch: &LaunchConfig,
    blocks: std::ops::Range<i64>,
    kind: Option<AccessKind>,
    granularity: i64,
) -> BTreeSet<(usize, i64)> {
    let mut out = BTreeSet::new();
    let f = spec.folding.0;
    for b in blocks {
        for t in block_threads(launch, b) {
            for kz in 0..f[2] {
                for ky in 0..f[1] {
                    for kx in 0..f[0] {
                        let k = [kx, ky, kz];
                        let cell: Coord = std::array::from_fn(|d| {
                            spec.domain.lo[d] + spec.cell_step[d] * t[d] + k[d]
                        });
                        if !in_domain(spec, cell) {
                            continue;
                        }
                        for a in &spec.accesses {
                            if kind.is_some_and(|kd| kd != a.kind) {
                                continue;
                            }
                            let fld = &spec.fields[a.field];
                            let lin: i64 = (0..3)
                                .map(|d| fld.strides[d] * (a.scale[d] * cell[d] + a.offsets[d]))
                                .sum();
                            let addr = fld.alignment + fld.element_size * lin;
                            out.insert((a.field, addr.div_euclid(granularity)));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Smallest number of wavefronts for one half-warp: exhaustive search over
/// partitions of the distinct words into groups with distinct banks and a
/// span within the pairing window.
pub fn min_wavefronts(addresses: &[i64], hw: &HardwareModel) -> u32 {
    let w = hw.bank_width_bytes;
    let window = hw.wavefront_pair_window_bytes / w;
    let mut words: Vec<i64> = addresses.iter().map(|a| a.div_euclid(w)).collect();
    words.sort_unstable();
    words.dedup();
    let banks = hw.banks;
    fn fits(group: &[i64], word: i64, banks: i64, window: i64) -> bool {
        group.iter().all(|&g| {
            g.rem_euclid(banks) != word.rem_euclid(banks) && (g - word).abs() <= window
        })
    }
    fn go(i: usize, words: &[i64], groups: &mut Vec<Vec<i64>>, best: &mut usize, b: i64, win: i64) {
        if groups.len() >= *best {
            return;
        }
        if i == words.len() {
            *best = groups.len();
            return;
        }
        for g in 0..groups.len() {
            if fits(&groups[g], words[i], b, win) {
                groups[g].push(words[i]);
                go(i + 1, words, groups, best, b, win);
                groups[g].pop();
            }
        }
        groups.push(vec![words[i]]);
        go(i + 1, words, groups, best, b, win);
        groups.pop();
    }
    let mut best = words.len().max(1);
    go(0, &words, &mut Vec::new(), &mut best, banks, window);
    best as u32
}

pub fn gompertz(a: f64, b: f64, c: f64, o: f64) -> f64 {
    a * (-b * (-c * o).exp()).exp()
}

/// Byte addresses of a half-warp reading doubles `stride` elements apart.
pub fn strided(stride: i64) -> Vec<i64> {
    (0..16).map(|t| t * stride * 8).collect()
}
