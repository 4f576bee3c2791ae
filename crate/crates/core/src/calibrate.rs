//! Least-squares fits of hit-rate curves to `(oversubscription, hit rate)`
//! samples.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cachesim::Sample;
use crate::hardware::{Gompertz, HitRateModel};

pub const MIN_SAMPLES: usize = 5;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("curve `{curve}`: {count} samples, at least {MIN_SAMPLES} needed")]
    TooFewSamples { curve: String, count: usize },
    #[error("curve `{0}`: all samples share one oversubscription value")]
    Degenerate(String),
    #[error("unknown curve `{0}` (expected l1, l2_over_y, l2_over_z or l2_store)")]
    UnknownCurve(String),
    #[error("sample file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct Fit {
    pub curve: String,
    pub params: Gompertz,
    pub rmse: f64,
    pub samples: usize,
    /// Samples barely vary, so `b` and `c` are poorly determined.
    pub low_confidence: bool,
}

#[derive(Deserialize)]
struct Row {
    curve: String,
    o: f64,
    r: f64,
}

/// Reads `curve,o,r` records.
pub fn read_samples<R: Read>(input: R) -> Result<Vec<Sample>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    rdr.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(Sample {
                curve: row.curve,
                o: row.o,
                r: row.r,
            })
        })
        .collect()
}

pub fn write_samples<W: std::io::Write>(out: W, samples: &[Sample]) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve", "o", "r"])?;
    for s in samples {
        w.write_record([s.curve.clone(), format!("{}", s.o), format!("{}", s.r)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Best `a` in `[0, 1]` for fixed `b`, `c`, and the resulting squared error.
fn profile(pts: &[(f64, f64)], b: f64, c: f64) -> (f64, f64) {
    let shape: Vec<f64> = pts.iter().map(|&(o, _)| (-b * (-c * o).exp()).exp()).collect();
    let ff: f64 = shape.iter().map(|f| f * f).sum();
    let fr: f64 = shape.iter().zip(pts).map(|(f, p)| f * p.1).sum();
    let a = if ff > 0.0 { (fr / ff).clamp(0.0, 1.0) } else { 0.0 };
    let sse = shape.iter().zip(pts).map(|(f, p)| (a * f - p.1).powi(2)).sum();
    (a, sse)
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> [f64; 2] {
    let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut vals = simplex.map(&f);
    for _ in 0..400 {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= 1e-14 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid = [0, 1].map(|d| (simplex[0][d] + simplex[1][d]) / 2.0);
        let along = |t: f64| [0, 1].map(|d| centroid[d] + t * (simplex[2][d] - centroid[d]));
        let refl = along(-1.0);
        let fr = f(refl);
        if fr < vals[0] {
            let exp = along(-2.0);
            let fe = f(exp);
            (simplex[2], vals[2]) = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < vals[1] {
            (simplex[2], vals[2]) = (refl, fr);
        } else {
            let con = along(0.5);
            let fc = f(con);
            if fc < vals[2] {
                (simplex[2], vals[2]) = (con, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = [0, 1].map(|d| (simplex[0][d] + simplex[i][d]) / 2.0);
                    vals[i] = f(simplex[i]);
                }
            }
        }
    }
    simplex[0]
}

/// Best `(ln a, b)` with `ln a <= 0`, `b >= 0` for `ln r = ln a - b * u`, and
/// the squared error in log space.
fn log_profile(pts: &[(f64, f64)], c: f64) -> (f64, f64, f64) {
    let u: Vec<f64> = pts.iter().map(|&(o, _)| (-c * o).exp()).collect();
    let y: Vec<f64> = pts.iter().map(|&(_, r)| r.ln()).collect();
    let sse = |la: f64, b: f64| -> f64 {
        u.iter().zip(&y).map(|(u, y)| (la - b * u - y).powi(2)).sum()
    };
    let n = u.len() as f64;
    let (su, sy) = (u.iter().sum::<f64>(), y.iter().sum::<f64>());
    let suu: f64 = u.iter().map(|u| u * u).sum();
    let suy: f64 = u.iter().zip(&y).map(|(u, y)| u * y).sum();
    let det = n * suu - su * su;
    let mut cands = Vec::new();
    if det.abs() > 1e-300 {
        let slope = (n * suy - su * sy) / det;
        let la = (sy - slope * su) / n;
        cands.push((la, -slope));
    }
    cands.push(((sy / n).min(0.0), 0.0));
    if suu > 0.0 {
        cands.push((0.0, (-suy / suu).max(0.0)));
    }
    cands
        .into_iter()
        .filter(|&(la, b)| la <= 0.0 && b >= 0.0 && la.is_finite() && b.is_finite())
        .map(|(la, b)| (la, b, sse(la, b)))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .unwrap_or((0.0, 0.0, f64::INFINITY))
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Relative-error fit for strictly positive hit rates: for each `c` the
/// log-linear problem in `(ln a, b)` is solved exactly, `c` itself by grid
/// search and golden-section refinement.
fn fit_log(samples: &[(f64, f64)], c_scale: f64) -> (f64, f64, f64) {
    let cost = |c: f64| log_profile(samples, c).2;
    let grid: Vec<f64> = (0..=400).map(|i| -c_scale * 0.05 * i as f64).collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| cost(grid[i]).total_cmp(&cost(grid[j])))
        .unwrap();
    let lo = grid[(best + 1).min(grid.len() - 1)];
    let hi = grid[best.saturating_sub(1)];
    let c = golden(cost, lo, hi).min(0.0);
    let (la, b, _) = log_profile(samples, c);
    (la.exp(), b, c)
}

/// Absolute-error fit; used when some hit rates are zero.
fn fit_linear(samples: &[(f64, f64)], c_scale: f64) -> (f64, f64, f64) {
    // Search over (ln b, c); `a` is solved exactly for each candidate.
    let sse = |p: [f64; 2]| profile(samples, p[0].exp(), p[1].min(0.0)).1;
    let mut best = ([0.0, -c_scale], f64::INFINITY);
    for i in 0..=40 {
        let lb = -14.0 + 0.5 * i as f64;
        for j in 1..=40 {
            let c = -c_scale * 0.5 * j as f64;
            let v = sse([lb, c]);
            if v < best.1 {
                best = ([lb, c], v);
            }
        }
    }
    let p = nelder_mead(sse, best.0, [0.25, 0.25 * c_scale]);
    let (b, c) = (p[0].exp(), p[1].min(0.0));
    (profile(samples, b, c).0, b, c)
}

/// Fits `a * exp(-b * exp(-c * o))` with `0 <= a <= 1`, `b >= 0`, `c <= 0`.
/// Strictly positive samples are fitted in log space (relative error),
/// anything containing zeros in linear space.
pub fn fit_gompertz(curve: &str, samples: &[(f64, f64)]) -> Result<Fit, CalibrationError> {
    if samples.len() < MIN_SAMPLES {
        return Err(CalibrationError::TooFewSamples {
            curve: curve.to_owned(),
            count: samples.len(),
        });
    }
    let o_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let o_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if o_max - o_min <= 1e-12 * o_max.abs().max(1.0) {
        return Err(CalibrationError::Degenerate(curve.to_owned()));
    }
    let c_scale = 1.0 / (o_max - o_min);
    let (a, b, c) = if samples.iter().all(|s| s.1 > 0.0) {
        fit_log(samples, c_scale)
    } else {
        fit_linear(samples, c_scale)
    };
    let g = Gompertz::new(a, b, c);
    let err: f64 = samples.iter().map(|&(o, r)| (g.eval(o) - r).powi(2)).sum();
    let r_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let r_max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(Fit {
        curve: curve.to_owned(),
        params: g,
        rmse: (err / samples.len() as f64).sqrt(),
        samples: samples.len(),
        low_confidence: r_max - r_min < 0.05,
    })
}

/// Fits every curve present in `samples` and overlays the results on `base`.
pub fn calibrate(
    samples: &[Sample],
    base: &HitRateModel,
) -> Result<(HitRateModel, Vec<Fit>), CalibrationError> {
    let mut by_curve: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        by_curve.entry(&s.curve).or_default().push((s.o, s.r));
    }
    let mut model = *base;
    let mut fits = Vec::new();
    for (curve, pts) in by_curve {
        let slot = match curve {
            "l1" => &mut model.l1,
            "l2_over_y" => &mut model.l2_over_y,
            "l2_over_z" => &mut model.l2_over_z,
            "l2_store" => &mut model.l2_store,
            other => return Err(CalibrationError::UnknownCurve(other.to_owned())),
        };
        let fit = fit_gompertz(curve, &pts)?;
        if fit.low_confidence {
            log::warn!("curve {curve}: hit rates are nearly flat, fit is low confidence");
        }
        *slot = fit.params;
        fits.push(fit);
    }
    Ok((model, fits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_curve() {
        let g = Gompertz::new(0.95, 0.2, -1.3);
        let pts: Vec<_> = (0..20).map(|i| i as f64 * 0.25).map(|o| (o, g.eval(o))).collect();
        let f = fit_gompertz("l1", &pts).unwrap();
        assert!((f.params.a - 0.95).abs() < 1e-3, "{f:?}");
        assert!((f.params.b - 0.2).abs() < 1e-3, "{f:?}");
        assert!((f.params.c + 1.3).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let pts = [(1.0, 0.5); 6];
        assert!(matches!(fit_gompertz("l1", &pts), Err(CalibrationError::Degenerate(_))));
        assert!(matches!(
            fit_gompertz("l1", &pts[..3]),
            Err(CalibrationError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = vec![Sample { curve: "l1".into(), o: 0.5, r: 0.9 }];
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        assert_eq!(read_samples(&buf[..]).unwrap(), s);
    }
}
