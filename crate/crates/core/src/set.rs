//! Implicit integer sets.
//!
//! An [`AffineSet`] is a finite union of *pieces*. Each piece is a product of
//! one arithmetic progression per dimension (a "strided box"); plain boxes are
//! the unit-stride special case. [`AffineMap`] outputs are quasi-affine
//! expressions `floor((sum a_i x_i + c) / q)`.
//!
//! Images of pieces are computed exactly: a piece is split along input
//! variables until every output depends on at most one input (and vice versa),
//! then each output's one-dimensional image is decomposed by residue classes of
//! the divisor. Counting never enumerates points for unit-stride unions; it uses
//! inclusion-exclusion for small unions and a slab sweep otherwise.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

/// Unions with at most this many pieces are counted by inclusion-exclusion.
const INCLUSION_EXCLUSION_MAX_PIECES: usize = 16;

/// Upper bound on sub-pieces created while splitting a non-separable image.
const MAX_SPLIT_PIECES: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("set has {count} points, enumeration limit is {limit}")]
    LimitExceeded { count: u64, limit: u64 },
    #[error("image computation would need more than {0} sub-pieces")]
    TooManyPieces(usize),
    #[error("divisor must be positive, got {0}")]
    BadDivisor(i64),
}

/// `{start + step * i : 0 <= i < count}` with `step >= 1` and `count >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Progression {
    pub start: i64,
    pub step: i64,
    pub count: i64,
}

impl Progression {
    pub fn new(start: i64, step: i64, count: i64) -> Option<Self> {
        if count <= 0 {
            return None;
        }
        let step = if count == 1 { 1 } else { step };
        assert!(step >= 1, "progression step must be positive");
        Some(Self { start, step, count })
    }

    /// Half-open range `[lo, hi)`.
    pub fn range(lo: i64, hi: i64) -> Option<Self> {
        Self::new(lo, 1, hi - lo)
    }

    pub fn last(&self) -> i64 {
        self.start + self.step * (self.count - 1)
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.start && v <= self.last() && (v - self.start) % self.step == 0
    }

    pub fn is_unit(&self) -> bool {
        self.step == 1
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.start.max(other.start);
        let hi = self.last().min(other.last());
        if lo > hi {
            return None;
        }
        if self.step == 1 && other.step == 1 {
            return Self::range(lo, hi + 1);
        }
        let (t1, t2) = (self.step as i128, other.step as i128);
        let g = gcd(t1, t2);
        let diff = other.start as i128 - self.start as i128;
        if diff % g != 0 {
            return None;
        }
        let m2 = t2 / g;
        let k = (diff / g).rem_euclid(m2) * mod_inverse(t1 / g, m2) % m2;
        let x0 = self.start as i128 + t1 * k;
        let l = t1 / g * t2;
        let first = x0 + ceil_div(lo as i128 - x0, l) * l;
        if first > hi as i128 {
            return None;
        }
        let count = (hi as i128 - first) / l + 1;
        Self::new(first as i64, l as i64, count as i64)
    }

    /// `self \ sub` where `sub` is a subset of `self` (as returned by
    /// [`Progression::intersect`]). The parts are pairwise disjoint.
    fn minus_subset(&self, sub: &Self) -> Vec<Self> {
        let n = self.count;
        let i0 = (sub.start - self.start) / self.step;
        let m = if sub.count == 1 { 1 } else { sub.step / self.step };
        let last_idx = i0 + m * (sub.count - 1);
        let mut parts = Vec::new();
        parts.extend(Self::new(self.start, self.step, i0));
        parts.extend(Self::new(
            self.start + self.step * (last_idx + 1),
            self.step,
            n - 1 - last_idx,
        ));
        if sub.count >= 2 {
            for s in 1..m {
                parts.extend(Self::new(
                    self.start + self.step * (i0 + s),
                    sub.step,
                    sub.count - 1,
                ));
            }
        }
        parts
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn gcd64(a: i64, b: i64) -> i64 {
    gcd(a as i128, b as i128) as i64
}

/// Inverse of `a` modulo `m` for coprime `a`, `m`.
fn mod_inverse(a: i128, m: i128) -> i128 {
    if m == 1 {
        return 0;
    }
    let (mut old_r, mut r) = (a.rem_euclid(m), m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    old_s.rem_euclid(m)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -((-a).div_euclid(b))
}

/// Product of one progression per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Piece(pub Vec<Progression>);

impl Piece {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self) -> u64 {
        self.0.iter().map(|p| p.count as u64).product()
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        self.0.iter().zip(point).all(|(p, &v)| p.contains(v))
    }

    fn is_unit(&self) -> bool {
        self.0.iter().all(Progression::is_unit)
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()
            .map(Piece)
    }

    /// `self \ other` as pairwise disjoint pieces.
    pub fn minus(&self, other: &Self) -> Vec<Self> {
        let Some(common) = self.intersect(other) else {
            return vec![self.clone()];
        };
        let mut out = Vec::new();
        for d in 0..self.dim() {
            for part in self.0[d].minus_subset(&common.0[d]) {
                let mut dims = Vec::with_capacity(self.dim());
                dims.extend_from_slice(&common.0[..d]);
                dims.push(part);
                dims.extend_from_slice(&self.0[d + 1..]);
                out.push(Piece(dims));
            }
        }
        out
    }

    fn for_each_point(&self, f: &mut impl FnMut(&[i64])) {
        let mut idx = vec![0i64; self.dim()];
        let mut point: Vec<i64> = self.0.iter().map(|p| p.start).collect();
        loop {
            f(&point);
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.0[d].count {
                    point[d] += self.0[d].step;
                    break;
                }
                idx[d] = 0;
                point[d] = self.0[d].start;
            }
        }
    }
}

/// Finite union of pieces of a fixed dimensionality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineSet {
    dim: usize,
    pieces: Vec<Piece>,
    /// Pieces are known to be pairwise disjoint.
    disjoint: bool,
}

impl AffineSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            pieces: Vec::new(),
            disjoint: true,
        }
    }

    /// Box `lo[d] <= x_d < hi[d]`. Empty if any range is empty.
    pub fn from_box(lo: &[i64], hi: &[i64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let dims = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| Progression::range(l, h))
            .collect::<Option<Vec<_>>>();
        let mut set = Self::empty(lo.len());
        if let Some(dims) = dims {
            set.pieces.push(Piece(dims));
        }
        set
    }

    pub fn from_piece(piece: Piece) -> Self {
        Self {
            dim: piece.dim(),
            pieces: vec![piece],
            disjoint: true,
        }
    }

    pub fn from_pieces(dim: usize, pieces: Vec<Piece>) -> Self {
        assert!(pieces.iter().all(|p| p.dim() == dim));
        let disjoint = pieces.len() <= 1;
        Self {
            dim,
            pieces,
            disjoint,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.len() == self.dim && self.pieces.iter().any(|p| p.contains(point))
    }

    fn check_dim(&self, other: &Self) -> Result<(), SetError> {
        if self.dim != other.dim {
            return Err(SetError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self, SetError> {
        self.check_dim(other)?;
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        let mut pieces = self.pieces.clone();
        pieces.extend_from_slice(&other.pieces);
        Ok(Self {
            dim: self.dim,
            pieces,
            disjoint: false,
        })
    }

    pub fn intersect(&self, other: &Self) -> Result<Self, SetError> {
        self.check_dim(other)?;
        let mut pieces = Vec::new();
        for a in &self.pieces {
            for b in &other.pieces {
                pieces.extend(a.intersect(b));
            }
        }
        Ok(Self {
            dim: self.dim,
            pieces,
            disjoint: self.disjoint && other.disjoint,
        })
    }

    pub fn subtract(&self, other: &Self) -> Result<Self, SetError> {
        self.check_dim(other)?;
        let other = if other.pieces.len() > INCLUSION_EXCLUSION_MAX_PIECES {
            other.normalized()
        } else {
            other.clone()
        };
        let mut pieces = Vec::new();
        for a in &self.pieces {
            let mut frags = vec![a.clone()];
            for b in &other.pieces {
                frags = frags.iter().flat_map(|f| f.minus(b)).collect();
                if frags.is_empty() {
                    break;
                }
            }
            pieces.extend(frags);
        }
        Ok(Self {
            dim: self.dim,
            pieces,
            disjoint: self.disjoint,
        })
    }

    /// Exact number of integer points.
    pub fn cardinality(&self) -> u64 {
        if self.disjoint {
            return self.pieces.iter().map(Piece::count).sum();
        }
        if self.pieces.len() <= INCLUSION_EXCLUSION_MAX_PIECES {
            return inclusion_exclusion(&self.pieces);
        }
        self.normalized().cardinality()
    }

    /// Equivalent set with pairwise disjoint pieces. Unit-stride unions are
    /// swept into coalesced slabs; strided unions by a residue-aware sweep.
    pub fn normalized(&self) -> Self {
        if self.disjoint {
            return self.clone();
        }
        let pieces = if self.pieces.iter().all(Piece::is_unit) {
            let boxes: Vec<Vec<(i64, i64)>> = self
                .pieces
                .iter()
                .map(|p| p.0.iter().map(|r| (r.start, r.start + r.count)).collect())
                .collect();
            let refs: Vec<&[(i64, i64)]> = boxes.iter().map(Vec::as_slice).collect();
            sweep(&refs, self.dim - 1)
                .into_iter()
                .map(|b| {
                    Piece(
                        b.into_iter()
                            .map(|(l, h)| Progression::range(l, h).expect("non-empty slab"))
                            .collect(),
                    )
                })
                .collect()
        } else {
            let ids: Vec<usize> = (0..self.pieces.len()).collect();
            let mut memo = HashMap::new();
            sweep_strided(&self.pieces, &ids, self.dim - 1, &mut memo)
                .iter()
                .map(|p| Piece(p.clone()))
                .collect()
        };
        Self {
            dim: self.dim,
            pieces,
            disjoint: true,
        }
    }

    /// All member tuples in lexicographic order.
    pub fn enumerate(&self, limit: u64) -> Result<Vec<Vec<i64>>, SetError> {
        let count = self.cardinality();
        if count > limit {
            return Err(SetError::LimitExceeded { count, limit });
        }
        let mut points = Vec::with_capacity(count as usize);
        for piece in &self.pieces {
            piece.for_each_point(&mut |p| points.push(p.to_vec()));
        }
        points.sort_unstable();
        points.dedup();
        Ok(points)
    }

    /// Image of the set under `map`.
    pub fn apply(&self, map: &AffineMap) -> Result<Self, SetError> {
        if map.in_dim() != self.dim {
            return Err(SetError::DimensionMismatch {
                expected: map.in_dim(),
                found: self.dim,
            });
        }
        let mut pieces = Vec::new();
        for piece in &self.pieces {
            image_of_piece(map, piece, &mut pieces)?;
        }
        let disjoint = pieces.len() <= 1;
        Ok(Self {
            dim: map.out_dim(),
            pieces,
            disjoint,
        })
    }

    /// One constraint conjunction per line.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AffineSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return writeln!(f, "false");
        }
        for piece in &self.pieces {
            let terms: Vec<String> = piece
                .0
                .iter()
                .enumerate()
                .map(|(d, p)| {
                    if p.is_unit() {
                        format!("{} <= x{d} < {}", p.start, p.start + p.count)
                    } else {
                        format!(
                            "{} <= x{d} <= {} and x{d} = {} mod {}",
                            p.start,
                            p.last(),
                            p.start.rem_euclid(p.step),
                            p.step
                        )
                    }
                })
                .collect();
            writeln!(f, "{}", terms.join(" and "))?;
        }
        Ok(())
    }
}

fn inclusion_exclusion(pieces: &[Piece]) -> u64 {
    fn go(pieces: &[Piece], start: usize, current: &Piece, sign: i128, total: &mut i128) {
        for i in start..pieces.len() {
            if let Some(inter) = current.intersect(&pieces[i]) {
                *total += sign * inter.count() as i128;
                go(pieces, i + 1, &inter, -sign, total);
            }
        }
    }
    let mut total = 0i128;
    for (i, p) in pieces.iter().enumerate() {
        total += p.count() as i128;
        go(pieces, i + 1, p, -1, &mut total);
    }
    total as u64
}

/// Disjoint, coalesced decomposition of a union of half-open boxes over
/// dimensions `0..=d`, sweeping from the highest dimension down.
fn sweep(boxes: &[&[(i64, i64)]], d: usize) -> Vec<Vec<(i64, i64)>> {
    if d == 0 {
        let mut iv: Vec<(i64, i64)> = boxes.iter().map(|b| b[0]).collect();
        iv.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::new();
        for (lo, hi) in iv {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        return merged.into_iter().map(|r| vec![r]).collect();
    }
    let mut cuts: Vec<i64> = boxes.iter().flat_map(|b| [b[d].0, b[d].1]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut slabs: Vec<(i64, i64, Vec<Vec<(i64, i64)>>)> = Vec::new();
    let mut active: Vec<&[(i64, i64)]> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        active.clear();
        active.extend(boxes.iter().filter(|b| b[d].0 <= lo && b[d].1 >= hi));
        if active.is_empty() {
            continue;
        }
        let sub = sweep(&active, d - 1);
        match slabs.last_mut() {
            Some(last) if last.1 == lo && last.2 == sub => last.1 = hi,
            _ => slabs.push((lo, hi, sub)),
        }
    }
    let mut out = Vec::new();
    for (lo, hi, sub) in slabs {
        for mut b in sub {
            b.push((lo, hi));
            out.push(b);
        }
    }
    out
}

type Decomposition = Vec<Vec<Progression>>;

/// Disjoint decomposition of a union of strided pieces over dimensions
/// `0..=d`. Inside one slab of dimension `d`, whether a coordinate belongs to
/// a piece depends only on its residue modulo the lcm of the active steps, so
/// each residue class is resolved once. Lower-dimensional results are
/// memoized by the subset of pieces involved.
fn sweep_strided(
    pieces: &[Piece],
    ids: &[usize],
    d: usize,
    memo: &mut HashMap<(usize, Vec<usize>), Rc<Decomposition>>,
) -> Rc<Decomposition> {
    let key = (d, ids.to_vec());
    if let Some(r) = memo.get(&key) {
        return Rc::clone(r);
    }
    let unit: Rc<Decomposition> = Rc::new(vec![Vec::new()]);
    let mut cuts: Vec<i64> = ids
        .iter()
        .flat_map(|&i| {
            let p = &pieces[i].0[d];
            [p.start, p.last() + 1]
        })
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut out: Decomposition = Vec::new();
    let mut runs: Vec<(Rc<Decomposition>, i64, i64)> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let width = hi - lo;
        let active: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&i| pieces[i].0[d].start <= lo && pieces[i].0[d].last() >= hi - 1)
            .collect();
        if active.is_empty() {
            continue;
        }
        // lcm of the active steps, saturated just above the slab width.
        let mut period = 1i64;
        for &i in &active {
            let t = pieces[i].0[d].step;
            period = period / gcd64(period, t) * t;
            if period > width {
                break;
            }
        }
        let periodic = period <= width;
        let span = period.min(width);
        let mut groups: Vec<(Rc<Decomposition>, Vec<i64>)> = Vec::new();
        for r in 0..span {
            let x = lo + r;
            let members: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| pieces[i].0[d].contains(x))
                .collect();
            if members.is_empty() {
                continue;
            }
            let sub = if d == 0 {
                Rc::clone(&unit)
            } else {
                sweep_strided(pieces, &members, d - 1, memo)
            };
            if sub.is_empty() {
                continue;
            }
            match groups.iter_mut().find(|g| Rc::ptr_eq(&g.0, &sub)) {
                Some(g) => g.1.push(r),
                None => groups.push((sub, vec![r])),
            }
        }
        for (sub, residues) in groups {
            if residues.len() as i64 == span {
                match runs.iter_mut().find(|run| Rc::ptr_eq(&run.0, &sub) && run.2 == lo) {
                    Some(run) => run.2 = hi,
                    None => runs.push((sub, lo, hi)),
                }
                continue;
            }
            for r in residues {
                let x0 = lo + r;
                let count = if periodic { (hi - 1 - x0) / period + 1 } else { 1 };
                let prog = Progression::new(x0, period, count).expect("non-empty class");
                for s in sub.iter() {
                    let mut v = s.clone();
                    v.push(prog);
                    out.push(v);
                }
            }
        }
    }
    for (sub, lo, hi) in runs {
        let prog = Progression::range(lo, hi).expect("non-empty run");
        for s in sub.iter() {
            let mut v = s.clone();
            v.push(prog);
            out.push(v);
        }
    }
    let res = Rc::new(out);
    memo.insert(key, Rc::clone(&res));
    res
}

/// `floor((sum coeffs[i] * x_i + constant) / divisor)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuasiAffine {
    pub coeffs: Vec<i64>,
    pub constant: i64,
    pub divisor: i64,
}

impl QuasiAffine {
    pub fn eval(&self, point: &[i64]) -> i64 {
        let sum: i64 = self.coeffs.iter().zip(point).map(|(a, x)| a * x).sum();
        (sum + self.constant).div_euclid(self.divisor)
    }
}

/// Map from `in_dim`-tuples to tuples of quasi-affine outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineMap {
    in_dim: usize,
    outputs: Vec<QuasiAffine>,
}

impl AffineMap {
    pub fn new(in_dim: usize, outputs: Vec<QuasiAffine>) -> Result<Self, SetError> {
        for out in &outputs {
            if out.coeffs.len() != in_dim {
                return Err(SetError::DimensionMismatch {
                    expected: in_dim,
                    found: out.coeffs.len(),
                });
            }
            if out.divisor < 1 {
                return Err(SetError::BadDivisor(out.divisor));
            }
        }
        Ok(Self { in_dim, outputs })
    }

    pub fn identity(dim: usize) -> Self {
        let outputs = (0..dim)
            .map(|d| QuasiAffine {
                coeffs: (0..dim).map(|i| i64::from(i == d)).collect(),
                constant: 0,
                divisor: 1,
            })
            .collect();
        Self {
            in_dim: dim,
            outputs,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[QuasiAffine] {
        &self.outputs
    }

    pub fn eval(&self, point: &[i64]) -> Vec<i64> {
        self.outputs.iter().map(|o| o.eval(point)).collect()
    }
}

fn image_of_piece(map: &AffineMap, piece: &Piece, out: &mut Vec<Piece>) -> Result<(), SetError> {
    let mut work = vec![piece.clone()];
    let mut created = 1usize;
    while let Some(p) = work.pop() {
        match split_variable(map, &p) {
            None => out.extend(separable_image(map, &p)),
            Some(var) => {
                let prog = p.0[var];
                created += prog.count as usize;
                if created > MAX_SPLIT_PIECES {
                    return Err(SetError::TooManyPieces(MAX_SPLIT_PIECES));
                }
                for i in 0..prog.count {
                    let mut q = p.clone();
                    q.0[var] = Progression::new(prog.start + prog.step * i, 1, 1).unwrap();
                    work.push(q);
                }
            }
        }
    }
    Ok(())
}

/// Input variable to split on, or `None` if the image of `piece` is a product
/// of independent one-dimensional images.
fn split_variable(map: &AffineMap, piece: &Piece) -> Option<usize> {
    let active = |o: &QuasiAffine, i: usize| o.coeffs[i] != 0 && piece.0[i].count > 1;
    let mut uses = vec![0usize; map.in_dim];
    let mut conflicted = vec![false; map.in_dim];
    for o in &map.outputs {
        let vars: Vec<usize> = (0..map.in_dim).filter(|&i| active(o, i)).collect();
        for &i in &vars {
            uses[i] += 1;
            if vars.len() > 1 {
                conflicted[i] = true;
            }
        }
    }
    (0..map.in_dim)
        .filter(|&i| conflicted[i] || uses[i] > 1)
        .min_by_key(|&i| piece.0[i].count)
}

fn separable_image(map: &AffineMap, piece: &Piece) -> Vec<Piece> {
    let per_output: Vec<Vec<Progression>> = map
        .outputs
        .iter()
        .map(|o| {
            // Substitute x_i = start_i + step_i * j_i.
            let mut constant = o.constant;
            let mut var = None;
            for (i, prog) in piece.0.iter().enumerate() {
                constant += o.coeffs[i] * prog.start;
                if o.coeffs[i] != 0 && prog.count > 1 {
                    var = Some((o.coeffs[i] * prog.step, prog.count));
                }
            }
            match var {
                None => vec![Progression::new(constant.div_euclid(o.divisor), 1, 1).unwrap()],
                Some((a, n)) => progression_image(a, constant, o.divisor, n),
            }
        })
        .collect();

    let mut result = vec![Vec::with_capacity(per_output.len())];
    for options in &per_output {
        let mut next = Vec::with_capacity(result.len() * options.len());
        for prefix in &result {
            for p in options {
                let mut v: Vec<Progression> = prefix.clone();
                v.push(*p);
                next.push(v);
            }
        }
        result = next;
    }
    result.into_iter().map(Piece).collect()
}

/// Image of `j in [0, n)` under `floor((a * j + c) / q)`, `a != 0`, as
/// disjoint progressions.
fn progression_image(a: i64, c: i64, q: i64, n: i64) -> Vec<Progression> {
    let (a, c) = if a < 0 { (-a, a * (n - 1) + c) } else { (a, c) };
    let f = |j: i64| (a * j + c).div_euclid(q);
    if a <= q {
        let (lo, hi) = (f(0), f(n - 1));
        return vec![Progression::range(lo, hi + 1).unwrap()];
    }
    let g = gcd64(a, q);
    let period = q / g;
    let step = a / g;
    (0..period.min(n))
        .map(|r| Progression::new(f(r), step, (n - r + period - 1) / period).unwrap())
        .collect()
}
