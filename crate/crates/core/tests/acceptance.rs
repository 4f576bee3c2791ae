//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the summary always shows up in `cargo test` output.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{a100, granules, kernel, points, random_map, random_set, strided};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpvol_core::cachesim::{simulate, BlockOrder, SimConfig, SimLevel};
use warpvol_core::calibrate::fit_gompertz;
use warpvol_core::kernel::{parse_kernel_spec, AccessKind};
use warpvol_core::l1::{bank_conflict_cycles, block_footprint, l1_cost};
use warpvol_core::perf::predict;
use warpvol_core::set::{Piece, Progression};
use warpvol_core::sweep::{block_sizes, default_folds, lcscan, sweep, sweep_configs, transition_onset, LCSCAN_CELLS};
use warpvol_core::volume::{build_wave, footprint, KindFilter};
use warpvol_core::{
    AddressMode, AffineMap, AffineSet, Estimate, Gompertz, HardwareModel, LaunchConfig,
    PerfPrediction, ThreadFolding,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------------------
// 1. Set engine exactness

fn pack(p: &[i64]) -> i64 {
    p.iter().fold(0, |acc, &v| (acc << 21) | (v + (1 << 20)))
}

fn packed(set: &AffineSet) -> Vec<i64> {
    let mut v: Vec<i64> = Vec::new();
    for piece in set.pieces() {
        let mut acc = vec![0i64];
        for p in &piece.0 {
            let next: Vec<i64> = acc
                .iter()
                .flat_map(|&a| (0..p.count).map(move |i| (a << 21) | (p.start + p.step * i + (1 << 20))))
                .collect();
            acc = next;
        }
        v.extend(acc);
    }
    v.sort_unstable();
    v.dedup();
    v
}

fn merge(a: &[i64], b: &[i64], keep: fn(bool, bool) -> bool) -> Vec<i64> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() || j < b.len() {
        let (x, y) = (a.get(i), b.get(j));
        let v = match (x, y) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let (ia, ib) = (x == Some(&v), y == Some(&v));
        if keep(ia, ib) {
            out.push(v);
        }
        i += usize::from(ia);
        j += usize::from(ib);
    }
    out
}

fn large_set(rng: &mut ChaCha8Rng, dim: usize) -> AffineSet {
    // At most 3 * 69^3 < 10^6 points.
    let n = rng.random_range(1..4);
    let pieces = (0..n)
        .map(|_| {
            Piece(
                (0..dim)
                    .map(|_| {
                        let count = rng.random_range(1..=69);
                        Progression::new(rng.random_range(-50..50), rng.random_range(1..4), count).unwrap()
                    })
                    .collect(),
            )
        })
        .collect();
    AffineSet::from_pieces(dim, pieces)
}

fn image_packed(set: &AffineSet, map: &AffineMap) -> Vec<i64> {
    let mut out = Vec::new();
    let mut q = vec![0i64; set.dim()];
    for piece in set.pieces() {
        let dims = &piece.0;
        let mut idx = vec![0i64; dims.len()];
        'points: loop {
            for (d, p) in dims.iter().enumerate() {
                q[d] = p.start + p.step * idx[d];
            }
            out.push(pack(&map.eval(&q)));
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d].count {
                    continue 'points;
                }
                idx[d] = 0;
            }
            break;
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn set_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e7);
    let (mut cases, mut largest) = (0, 0usize);
    for case in 0..1100 {
        let dim = rng.random_range(1..=3);
        let big = case % 20 == 0;
        let (a, b) = if big {
            (large_set(&mut rng, dim), large_set(&mut rng, dim))
        } else {
            (random_set(&mut rng, dim), random_set(&mut rng, dim))
        };
        let map = random_map(&mut rng, dim);
        let (pa, pb) = (packed(&a), packed(&b));
        let img = a.apply(&map).unwrap();
        let expected_img = image_packed(&a, &map);
        largest = largest.max(pa.len()).max(pb.len());
        let checks = [
            ("cardinality", a.cardinality() as usize == pa.len()),
            ("union", packed(&a.union(&b).unwrap()) == merge(&pa, &pb, |x, y| x || y)),
            ("intersect", packed(&a.intersect(&b).unwrap()) == merge(&pa, &pb, |x, y| x && y)),
            ("subtract", packed(&a.subtract(&b).unwrap()) == merge(&pa, &pb, |x, y| x && !y)),
            ("image", packed(&img) == expected_img),
            ("image cardinality", img.cardinality() as usize == expected_img.len()),
        ];
        for (what, ok) in checks {
            ensure!(ok, "case {case}: {what} differs from enumeration");
        }
        if !big {
            ensure!(points(&a).len() == pa.len(), "case {case}: oracle mismatch");
        }
        cases += 1;
    }
    Ok(format!("{cases} random cases, largest operand {largest} points"))
}

// ---------------------------------------------------------------------------
// 2. Bank conflicts

fn bank_table() -> Outcome {
    let hw = a100();
    let got: Vec<u32> = [1, 2, 16].iter().map(|&s| bank_conflict_cycles(&strided(s), &hw)).collect();
    ensure!(got == [1, 2, 16], "strides 1/2/16 gave {got:?} cycles");
    Ok(format!("strides 1/2/16 -> {got:?} cycles"))
}

// ---------------------------------------------------------------------------
// 3. Wave-depth asymptotics

fn wave_depth() -> Outcome {
    let base = a100();
    let plane = 2048;
    let k = kernel("3d25pt_r4").with_domain_size([plane, plane, 128]);
    let block = [1024, 1, 1];
    let mut got = Vec::new();
    for (depth, want) in [(1, 72.0), (2, 40.0), (4, 24.0), (8, 16.0), (32, 10.0)] {
        // Enough SMs that one wave covers `depth` whole block planes.
        let blocks_per_plane = plane * plane / 1024;
        let resident = base.resident_blocks_per_sm(1024);
        let hw = HardwareModel {
            sm_count: depth * blocks_per_plane / resident,
            ..base.clone()
        };
        let l = LaunchConfig::for_kernel(&k, block).unwrap();
        let e = warpvol_core::perf::estimate(&k, &l, &hw).map_err(|e| e.to_string())?;
        let hits: f64 = e.dram.overlap_hits.iter().sum();
        ensure!(hits == 0.0, "depth {depth}: layer reuse still hits ({hits} B)");
        let v = e.dram.load_per_lup();
        ensure!(
            (v - want).abs() <= 0.05 * want,
            "depth {depth}: {v:.2} B/Lup, expected {want} +-5%"
        );
        got.push(format!("{depth}:{v:.1}"));
    }
    Ok(format!("B/Lup by wave depth {}", got.join(" ")))
}

// ---------------------------------------------------------------------------
// 4. Layer-condition transition

fn layer_condition() -> Outcome {
    let hw = a100();
    let k = kernel("3d25pt_r4");
    let planes: Vec<i64> = (16..=64).map(|i| i * 16).collect();
    let rows = lcscan(&k, &hw, [512, 2, 1], &planes, LCSCAN_CELLS).map_err(|e| e.to_string())?;
    for r in &rows {
        if r.plane <= 350 {
            ensure!(r.dram_load_per_lup <= 12.0, "plane {}: {:.2} B/Lup > 12", r.plane, r.dram_load_per_lup);
        }
        if r.plane >= 800 {
            ensure!(r.dram_load_per_lup >= 50.0, "plane {}: {:.2} B/Lup < 50", r.plane, r.dram_load_per_lup);
        }
    }
    let onset = transition_onset(&rows).ok_or("no transition found")?;
    ensure!((381..=500).contains(&onset), "onset at {onset}^2, outside [381^2, 500^2]");
    let at = |p: i64| rows.iter().find(|r| r.plane == p).unwrap().dram_load_per_lup;
    Ok(format!(
        "256^2 {:.1}, 800^2 {:.1}, 1024^2 {:.1} B/Lup, onset {onset}^2",
        at(256),
        at(800),
        at(1024)
    ))
}

// ---------------------------------------------------------------------------
// 5. LBM floors

fn lbm_sweep() -> Result<Vec<Estimate>, String> {
    let k = kernel("d3q15_acm");
    sweep(&k, &a100(), k.sweep_n.unwrap(), &default_folds(&k)).map_err(|e| e.to_string())
}

fn lbm_floors() -> Outcome {
    let rows = lbm_sweep()?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for e in &rows {
        let load = e.dram.load_per_lup();
        let total = e.dram.total_per_lup();
        ensure!(load >= 120.0, "{:?}: load {load:.1} < 120", e.block);
        ensure!(total >= 240.0, "{:?}: total {total:.1} < 240", e.block);
        if e.block[0] >= 32 {
            ensure!((128.0..=170.0).contains(&load), "{:?}: load {load:.1} outside [128, 170]", e.block);
            lo = lo.min(load);
            hi = hi.max(load);
        }
    }
    Ok(format!("{} configs; width >= 32 loads span {lo:.1}..{hi:.1} B/Lup", rows.len()))
}

// ---------------------------------------------------------------------------
// 6. Sweep cardinality

fn sweep_cardinality() -> Outcome {
    let stencil = kernel("3d25pt_r4");
    let lbm = kernel("d3q15_acm");
    let s = block_sizes(stencil.sweep_n.unwrap()).len();
    let rows = sweep_configs(stencil.sweep_n.unwrap(), &default_folds(&stencil)).len();
    let l = sweep_configs(lbm.sweep_n.unwrap(), &default_folds(&lbm)).len();
    ensure!((s, rows, l) == (56, 168, 49), "got {s} / {rows} / {l}");
    Ok(format!("stencil {s} blocks x 3 folds = {rows}, LBM {l}"))
}

// ---------------------------------------------------------------------------
// 7. Ranking sanity

fn ranking() -> Outcome {
    let k = kernel("3d25pt_r4");
    let rows = sweep(&k, &a100(), k.sweep_n.unwrap(), &default_folds(&k)).map_err(|e| e.to_string())?;
    let top = &rows[0];
    let [x, y, z] = top.block;
    ensure!(
        x >= 16 && z >= 16 && y <= 4 && top.folding == ThreadFolding([1, 1, 2]),
        "stencil top is {:?} {}",
        top.block,
        top.folding.label()
    );
    let lbm = lbm_sweep()?;
    let bottom = &lbm[lbm.len() - 10..];
    ensure!(
        bottom.iter().all(|e| e.block[0] <= 2),
        "LBM bottom 10 include {:?}",
        bottom.iter().find(|e| e.block[0] > 2).unwrap().block
    );
    Ok(format!(
        "stencil best {:?} {} at {:.1} GLup/s; LBM bottom 10 all x <= 2",
        top.block,
        top.folding.label(),
        top.perf.glups
    ))
}

// ---------------------------------------------------------------------------
// 8. Oracle agreement

fn oracle_agreement() -> Outcome {
    let unbounded = |level| SimConfig {
        level,
        capacity_bytes: None,
        order: BlockOrder::Sequential,
    };
    let small = HardwareModel {
        sm_count: 4,
        ..a100()
    };
    let s = kernel("3d25pt_r4").with_domain_size([64, 64, 64]);
    let cases = [
        (s.clone(), [32, 4, 2]),
        (s.clone(), [64, 2, 1]),
        (s.clone(), [1, 16, 16]),
        (s.with_folding(ThreadFolding([1, 1, 2])), [16, 2, 4]),
        (s.with_folding(ThreadFolding([1, 2, 1])), [8, 8, 4]),
        (kernel("d3q15_acm").with_domain_size([64, 32, 32]), [32, 2, 2]),
        (kernel("d3q15_acm").with_domain_size([64, 32, 32]), [2, 8, 8]),
        (kernel("2d5pt").with_domain_size([64, 64, 1]), [16, 16, 1]),
        (kernel("copy").with_domain_size([64, 64, 64]), [32, 2, 1]),
    ];
    let mut checked = 0;
    for (k, b) in &cases {
        let l = LaunchConfig::for_kernel(k, *b).unwrap();
        let [gx, gy, gz] = l.grid;
        let c = (gz / 2 * gy + gy / 2) * gx + gx / 2;
        let hw = a100();
        let block = simulate(k, &l, &hw, unbounded(SimLevel::L1), Some(c..c + 1)).map_err(|e| e.to_string())?;
        let fp = block_footprint(k, &l, &hw).unwrap().total();
        ensure!(
            block.compulsory_bytes == fp.loads.sectors * 32,
            "{} {b:?}: block footprint {} B vs simulated {} B",
            k.name,
            fp.loads.sectors * 32,
            block.compulsory_bytes
        );
        let cost = l1_cost(k, &l, &hw).unwrap();
        ensure!(
            block.store_up_bytes == cost.store_volume_sectors * 32,
            "{} {b:?}: store volume {} B vs simulated {} B",
            k.name,
            cost.store_volume_sectors * 32,
            block.store_up_bytes
        );
        let w = build_wave(k, &l, &small);
        let range = w.first_block..w.first_block + w.blocks;
        let sim = simulate(k, &l, &small, unbounded(SimLevel::L2), Some(range.clone())).map_err(|e| e.to_string())?;
        let loads: u64 = footprint(k, &w.cells, KindFilter::Loads, 32, AddressMode::Linear)
            .unwrap()
            .iter()
            .map(|s| s.cardinality())
            .sum();
        ensure!(
            sim.compulsory_bytes == loads * 32,
            "{} {b:?}: wave footprint {} B vs simulated {} B",
            k.name,
            loads * 32,
            sim.compulsory_bytes
        );
        let stores = granules(k, &l, range, Some(AccessKind::Store), 32).len() as u64;
        ensure!(sim.write_back_bytes == stores * 32, "{} {b:?}: wave store footprint", k.name);
        checked += 1;
    }
    Ok(format!("{checked} kernel/block cases, block and wave footprints and store volumes exact"))
}

// ---------------------------------------------------------------------------
// 9. Capacity-model properties

fn capacity_model() -> Outcome {
    let hw = a100();
    let k = kernel("3d25pt_r4");
    let mut rows = sweep(&k, &hw, k.sweep_n.unwrap(), &default_folds(&k)).map_err(|e| e.to_string())?;
    rows.extend(lbm_sweep()?);
    for e in &rows {
        for v in [&e.l2, &e.dram] {
            ensure!(
                v.v_cap >= 0.0 && v.v_cap <= v.v_red * (1.0 + 1e-12),
                "{} {:?}: V_cap {} outside [0, {}]",
                e.kernel,
                e.block,
                v.v_cap,
                v.v_red
            );
        }
    }
    let curves = {
        let h = hw.hit_rates;
        [h.l1, h.l2_over_y, h.l2_over_z, h.l2_store, Gompertz::new(0.7, 3.0, -0.5)]
    };
    for g in curves {
        let vals: Vec<f64> = (0..=400).map(|i| g.eval(i as f64 * 0.025)).collect();
        ensure!(vals.windows(2).all(|w| w[1] <= w[0]), "{g:?} is not monotone");
    }
    let truth = Gompertz::new(1.0, 5.0, -2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pts: Vec<(f64, f64)> = (0..16)
        .map(|i| i as f64 * 0.1)
        .map(|o| (o, truth.eval(o) * (1.0 + 0.01 * rng.random_range(-1.0..1.0) * 3f64.sqrt())))
        .collect();
    let f = fit_gompertz("l2_over_z", &pts).map_err(|e| e.to_string())?.params;
    let close = |x: f64, y: f64| (x - y).abs() <= 0.05 * y.abs();
    ensure!(
        close(f.a, 1.0) && close(f.b, 5.0) && close(f.c, -2.0),
        "recovered {f:?} from (1, 5, -2)"
    );
    Ok(format!(
        "{} configs x 2 levels; fit ({:.3}, {:.3}, {:.3})",
        rows.len(),
        f.a,
        f.b,
        f.c
    ))
}

// ---------------------------------------------------------------------------
// 10. Performance-model properties

const STREAM_LOAD: &str = r#"
[kernel]
name = "stream_load"
flops_per_lup = 0

[domain]
lo = [0, 0, 0]
hi = [1024, 512, 64]

[field.a]
element_size = 8
extents = [1024, 512, 64]

[[access]]
field = "a"
kind = "load"
offsets = [0, 0, 0]
"#;

fn perf_model() -> Outcome {
    let hw = a100();
    let p = PerfPrediction::from_times(2e-12, 5e-12, 1e-12, 3e-12);
    ensure!(p.glups == 1e-9 / 5e-12, "glups {} is not 1/max time", p.glups);
    let k = parse_kernel_spec(STREAM_LOAD).map_err(|e| e.to_string())?;
    let l = LaunchConfig::for_kernel(&k, [256, 1, 1]).unwrap();
    let e = warpvol_core::perf::estimate(&k, &l, &hw).map_err(|e| e.to_string())?;
    ensure!(e.dram.total_per_lup() == 8.0, "synthetic input moves {} B/Lup", e.dram.total_per_lup());
    let p = predict(&k, &l, &hw).map_err(|e| e.to_string())?;
    ensure!((p.glups - 175.0).abs() < 1e-9, "8 B/Lup bound is {} GLup/s", p.glups);
    let t = p.t_dram.max(p.t_l2).max(p.t_l1).max(p.t_fp);
    ensure!(p.glups == 1e-9 / t, "glups is not 1/max limiter time");
    Ok(format!("8 B/Lup -> {:.6} GLup/s ({} bound)", p.glups, p.limiter.label()))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("set engine exactness", set_engine, Duration::from_secs(30)),
        ("bank-conflict table", bank_table, Duration::from_secs(1)),
        ("wave-depth asymptotics", wave_depth, Duration::from_secs(10)),
        ("layer-condition transition", layer_condition, Duration::from_secs(30)),
        ("LBM volume floors", lbm_floors, Duration::from_secs(60)),
        ("sweep cardinality", sweep_cardinality, Duration::from_secs(1)),
        ("ranking sanity", ranking, Duration::from_secs(60)),
        ("oracle agreement", oracle_agreement, Duration::from_secs(120)),
        ("capacity-model properties", capacity_model, Duration::from_secs(120)),
        ("performance-model properties", perf_model, Duration::from_secs(10)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > *limit => Err(format!("took {took:.1?}, limit {limit:?}")),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!("criterion {:>2} {tag} {name}: {detail} [{took:.2?}]", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
