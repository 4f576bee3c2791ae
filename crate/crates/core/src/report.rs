//! Flat records for CSV and JSON output. All floats are rounded to four
//! significant digits so output is stable across platforms.

use serde::Serialize;

use crate::calibrate::Fit;
use crate::perf::Estimate;
use crate::sweep::ScanRow;
use crate::volume::VolumeBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (csv, json)")),
        }
    }
}

/// Rounds to four significant digits.
pub fn sig4(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn block_label(b: [i64; 3]) -> String {
    format!("{}x{}x{}", b[0], b[1], b[2])
}

/// One configuration at one memory level; volumes in bytes per lattice
/// update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub kernel: String,
    pub block: String,
    pub folding: String,
    pub glups: f64,
    pub limiter: String,
    pub l1_cycles: f64,
    pub level: String,
    pub v_up: f64,
    pub v_comp: f64,
    pub v_red: f64,
    pub v_cap: f64,
    pub v_alloc: f64,
    pub oversubscription: f64,
    pub overlap_x: f64,
    pub overlap_y: f64,
    pub overlap_z: f64,
    pub hits_x: f64,
    pub hits_y: f64,
    pub hits_z: f64,
    pub layer_o_x: f64,
    pub layer_o_y: f64,
    pub layer_o_z: f64,
    pub store_unique: f64,
    pub store_redundant: f64,
    pub readback: f64,
    pub load: f64,
    pub store: f64,
    pub total: f64,
}

fn level_record(e: &Estimate, v: &VolumeBreakdown) -> LevelRecord {
    let per = |x: f64| sig4(v.per_lup(x));
    LevelRecord {
        kernel: e.kernel.clone(),
        block: block_label(e.block),
        folding: e.folding.label(),
        glups: sig4(e.perf.glups),
        limiter: e.perf.limiter.label().to_owned(),
        l1_cycles: sig4(e.l1_cycles_per_lup),
        level: v.level.label().to_owned(),
        v_up: per(v.v_up),
        v_comp: per(v.v_comp),
        v_red: per(v.v_red),
        v_cap: per(v.v_cap),
        v_alloc: per(v.v_alloc),
        oversubscription: sig4(v.oversubscription),
        overlap_x: per(v.overlap[0]),
        overlap_y: per(v.overlap[1]),
        overlap_z: per(v.overlap[2]),
        hits_x: per(v.overlap_hits[0]),
        hits_y: per(v.overlap_hits[1]),
        hits_z: per(v.overlap_hits[2]),
        layer_o_x: sig4(v.layer_oversubscription[0]),
        layer_o_y: sig4(v.layer_oversubscription[1]),
        layer_o_z: sig4(v.layer_oversubscription[2]),
        store_unique: per(v.store_unique),
        store_redundant: per(v.store_redundant),
        readback: per(v.store_readback),
        load: sig4(v.load_per_lup()),
        store: sig4(v.store_per_lup()),
        total: sig4(v.total_per_lup()),
    }
}

/// L2->L1 and DRAM->L2 rows of one estimate.
pub fn level_records(e: &Estimate) -> Vec<LevelRecord> {
    vec![level_record(e, &e.l2), level_record(e, &e.dram)]
}

/// One ranked configuration. Limiter times are picoseconds per lattice
/// update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub rank: usize,
    pub kernel: String,
    pub block: String,
    pub folding: String,
    pub glups: f64,
    pub limiter: String,
    pub t_dram_ps: f64,
    pub t_l2_ps: f64,
    pub t_l1_ps: f64,
    pub t_fp_ps: f64,
    pub l1_cycles: f64,
    pub l2_request: f64,
    pub l2_comp: f64,
    pub l2_cap: f64,
    pub l2_load: f64,
    pub l2_store: f64,
    pub dram_comp: f64,
    pub dram_hits: f64,
    pub dram_readback: f64,
    pub dram_load: f64,
    pub dram_store: f64,
    pub dram_total: f64,
}

pub fn sweep_record(rank: usize, e: &Estimate) -> SweepRecord {
    let ps = |t: f64| sig4(t * 1e12);
    let (l2, d) = (&e.l2, &e.dram);
    SweepRecord {
        rank,
        kernel: e.kernel.clone(),
        block: block_label(e.block),
        folding: e.folding.label(),
        glups: sig4(e.perf.glups),
        limiter: e.perf.limiter.label().to_owned(),
        t_dram_ps: ps(e.perf.t_dram),
        t_l2_ps: ps(e.perf.t_l2),
        t_l1_ps: ps(e.perf.t_l1),
        t_fp_ps: ps(e.perf.t_fp),
        l1_cycles: sig4(e.l1_cycles_per_lup),
        l2_request: sig4(l2.per_lup(l2.v_up)),
        l2_comp: sig4(l2.per_lup(l2.v_comp)),
        l2_cap: sig4(l2.per_lup(l2.v_cap)),
        l2_load: sig4(l2.load_per_lup()),
        l2_store: sig4(l2.store_per_lup()),
        dram_comp: sig4(d.per_lup(d.v_comp)),
        dram_hits: sig4(d.per_lup(d.overlap_hits.iter().sum())),
        dram_readback: sig4(d.per_lup(d.store_readback)),
        dram_load: sig4(d.load_per_lup()),
        dram_store: sig4(d.store_per_lup()),
        dram_total: sig4(d.total_per_lup()),
    }
}

/// Ranked rows, best first; `estimates` must already be ranked.
pub fn sweep_records(estimates: &[Estimate]) -> Vec<SweepRecord> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| sweep_record(i + 1, e))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub plane: i64,
    pub depth: i64,
    pub dram_load: f64,
    pub dram_store: f64,
    pub layer_o_z: f64,
}

pub fn scan_records(rows: &[ScanRow]) -> Vec<ScanRecord> {
    rows.iter()
        .map(|r| ScanRecord {
            plane: r.plane,
            depth: r.depth,
            dram_load: sig4(r.dram_load_per_lup),
            dram_store: sig4(r.dram_store_per_lup),
            layer_o_z: sig4(r.layer_oversubscription_z),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub curve: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rmse: f64,
    pub samples: usize,
    pub low_confidence: bool,
}

pub fn fit_records(fits: &[Fit]) -> Vec<FitRecord> {
    fits.iter()
        .map(|f| FitRecord {
            curve: f.curve.clone(),
            a: sig4(f.params.a),
            b: sig4(f.params.b),
            c: sig4(f.params.c),
            rmse: sig4(f.rmse),
            samples: f.samples,
            low_confidence: f.low_confidence,
        })
        .collect()
}

pub fn to_csv<T: Serialize>(records: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("records serialize to csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("records serialize to json") + "\n"
}

pub fn render<T: Serialize>(records: &[T], format: Format) -> String {
    match format {
        Format::Csv => to_csv(records),
        Format::Json => to_json(records),
    }
}
