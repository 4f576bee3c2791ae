//! Kernel descriptions: fields, affine accesses, iteration domain, folding.
//!
//! Everything is three-dimensional internally; one- and two-dimensional
//! kernels pad the missing trailing dimensions with extent 1.
//!
//! A cell coordinate is derived from a global thread coordinate `t` and a fold
//! index `k` as `cell[d] = domain.lo[d] + cell_step[d] * t[d] + k[d]`, and an
//! access touches element `scale[d] * cell[d] + offset[d]` of its field.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DIMS: usize = 3;

pub type Coord = [i64; DIMS];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("access references undeclared field `{0}`")]
    UndeclaredField(String),
    #[error("non-affine index expression `{0}`")]
    NonAffine(String),
    #[error("field `{field}` has zero or negative extent in dimension {dim}")]
    ZeroExtent { field: String, dim: usize },
    #[error("kernel has no memory accesses")]
    NoAccesses,
    #[error("invalid kernel: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub element_size: i64,
    pub extents: Coord,
    /// Element strides per dimension, innermost first.
    pub strides: Coord,
    /// Byte offset standing in for the unknown base pointer.
    pub alignment: i64,
}

impl Field {
    /// Field with the default linearized layout.
    pub fn new(name: &str, element_size: i64, extents: Coord, alignment: i64) -> Self {
        Self {
            name: name.to_owned(),
            element_size,
            extents,
            strides: dense_strides(extents),
            alignment,
        }
    }

    fn has_dense_strides(&self) -> bool {
        self.strides == dense_strides(self.extents)
    }
}

pub fn dense_strides(extents: Coord) -> Coord {
    [1, extents[0], extents[0] * extents[1]]
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Access {
    pub field: usize,
    pub kind: AccessKind,
    pub scale: Coord,
    pub offsets: Coord,
}

impl Access {
    pub fn element_index(&self, cell: Coord) -> Coord {
        std::array::from_fn(|d| self.scale[d] * cell[d] + self.offsets[d])
    }
}

/// Valid cell range `lo <= cell < hi` per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    pub lo: Coord,
    pub hi: Coord,
}

impl Domain {
    pub fn extent(&self) -> Coord {
        std::array::from_fn(|d| self.hi[d] - self.lo[d])
    }

    pub fn cells(&self) -> i64 {
        self.extent().iter().product()
    }
}

/// Consecutive cells per thread in each dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThreadFolding(pub Coord);

impl ThreadFolding {
    pub const NONE: Self = Self([1, 1, 1]);

    pub fn replication(&self) -> i64 {
        self.0.iter().product()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" | "1" => Some(Self::NONE),
            "2x" => Some(Self([2, 1, 1])),
            "2y" => Some(Self([1, 2, 1])),
            "2z" => Some(Self([1, 1, 2])),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self.0 {
            [1, 1, 1] => "none".into(),
            [f, 1, 1] => format!("{f}x"),
            [1, f, 1] => format!("{f}y"),
            [1, 1, f] => format!("{f}z"),
            [x, y, z] => format!("{x}x{y}x{z}"),
        }
    }

    /// All fold indices in x-major order.
    pub fn indices(&self) -> impl Iterator<Item = Coord> + '_ {
        let [fx, fy, fz] = self.0;
        (0..fz).flat_map(move |z| (0..fy).flat_map(move |y| (0..fx).map(move |x| [x, y, z])))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub name: String,
    pub fields: Vec<Field>,
    pub accesses: Vec<Access>,
    pub domain: Domain,
    /// Replication factors still to be expanded into accesses.
    pub folding: ThreadFolding,
    /// Cells covered by one thread per dimension; unchanged by
    /// [`KernelSpec::expand_folding`].
    pub cell_step: Coord,
    pub flops_per_lup: f64,
    pub sweep_n: Option<i64>,
    pub sweep_folds: Option<Vec<ThreadFolding>>,
}

impl KernelSpec {
    /// Lattice updates per thread.
    pub fn work_per_thread(&self) -> i64 {
        self.cell_step.iter().product()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn loads(&self) -> impl Iterator<Item = &Access> {
        self.accesses.iter().filter(|a| a.kind == AccessKind::Load)
    }

    pub fn stores(&self) -> impl Iterator<Item = &Access> {
        self.accesses.iter().filter(|a| a.kind == AccessKind::Store)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.accesses.is_empty() {
            return Err(KernelError::NoAccesses);
        }
        for f in &self.fields {
            if f.element_size <= 0 {
                return Err(KernelError::Invalid(format!(
                    "field `{}` has non-positive element size",
                    f.name
                )));
            }
            if let Some(dim) = f.extents.iter().position(|&e| e <= 0) {
                return Err(KernelError::ZeroExtent {
                    field: f.name.clone(),
                    dim,
                });
            }
            if !(0..128).contains(&f.alignment) {
                return Err(KernelError::Invalid(format!(
                    "field `{}` alignment {} outside [0, 128)",
                    f.name, f.alignment
                )));
            }
        }
        if let Some(a) = self.accesses.iter().find(|a| a.field >= self.fields.len()) {
            return Err(KernelError::Invalid(format!("access field index {}", a.field)));
        }
        if self.domain.extent().iter().any(|&e| e <= 0) {
            return Err(KernelError::Invalid("empty domain".into()));
        }
        if self.folding.0.iter().chain(&self.cell_step).any(|&f| f < 1) {
            return Err(KernelError::Invalid("folding factors must be >= 1".into()));
        }
        if !(self.flops_per_lup >= 0.0) {
            return Err(KernelError::Invalid("flops_per_lup must be >= 0".into()));
        }
        Ok(())
    }

    /// Byte address touched by `access` for a global thread coordinate.
    pub fn address_of(&self, access: &Access, thread: Coord, fold_index: Coord) -> i64 {
        let field = &self.fields[access.field];
        let cell = self.cell_of(thread, fold_index);
        let idx = access.element_index(cell);
        let linear: i64 = (0..DIMS).map(|d| field.strides[d] * idx[d]).sum();
        field.alignment + field.element_size * linear
    }

    pub fn cell_of(&self, thread: Coord, fold_index: Coord) -> Coord {
        std::array::from_fn(|d| self.domain.lo[d] + self.cell_step[d] * thread[d] + fold_index[d])
    }

    /// Replicates every access once per fold index; folding factors become 1
    /// while `cell_step` keeps the per-thread work.
    pub fn expand_folding(&self) -> KernelSpec {
        let mut out = self.clone();
        out.accesses = self
            .folding
            .indices()
            .flat_map(|k| {
                self.accesses.iter().map(move |a| Access {
                    offsets: std::array::from_fn(|d| a.offsets[d] + a.scale[d] * k[d]),
                    ..a.clone()
                })
            })
            .collect();
        out.folding = ThreadFolding::NONE;
        out
    }

    /// Same kernel with a different folding; the cell step follows.
    pub fn with_folding(&self, folding: ThreadFolding) -> KernelSpec {
        assert_eq!(
            self.folding.0, self.cell_step,
            "with_folding needs an unexpanded kernel"
        );
        KernelSpec {
            folding,
            cell_step: folding.0,
            ..self.clone()
        }
    }

    /// Resizes the domain, keeping each field's ghost padding.
    pub fn with_domain_size(&self, size: Coord) -> KernelSpec {
        let old = self.domain.extent();
        let mut out = self.clone();
        out.domain.hi = std::array::from_fn(|d| self.domain.lo[d] + size[d]);
        for f in &mut out.fields {
            let dense = f.has_dense_strides();
            f.extents = std::array::from_fn(|d| f.extents[d] - old[d] + size[d]);
            if dense {
                f.strides = dense_strides(f.extents);
            }
        }
        out
    }

    /// Renders the kernel in the file format accepted by [`parse_kernel_spec`].
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[kernel]");
        let _ = writeln!(s, "name = {:?}", self.name);
        let _ = writeln!(s, "flops_per_lup = {:?}", self.flops_per_lup);
        let _ = writeln!(s, "folding = {:?}", self.folding.0);
        if self.cell_step != self.folding.0 {
            let _ = writeln!(s, "cell_step = {:?}", self.cell_step);
        }
        if let Some(n) = self.sweep_n {
            let _ = writeln!(s, "sweep_n = {n}");
        }
        if let Some(folds) = &self.sweep_folds {
            let labels: Vec<String> = folds.iter().map(|f| f.label()).collect();
            let _ = writeln!(s, "sweep_folds = {labels:?}");
        }
        let _ = writeln!(s, "\n[domain]");
        let _ = writeln!(s, "lo = {:?}", self.domain.lo);
        let _ = writeln!(s, "hi = {:?}", self.domain.hi);
        for f in &self.fields {
            let _ = writeln!(s, "\n[field.{}]", f.name);
            let _ = writeln!(s, "element_size = {}", f.element_size);
            let _ = writeln!(s, "extents = {:?}", f.extents);
            let _ = writeln!(s, "alignment = {}", f.alignment);
            if !f.has_dense_strides() {
                let _ = writeln!(s, "strides = {:?}", f.strides);
            }
        }
        for a in &self.accesses {
            let kind = match a.kind {
                AccessKind::Load => "load",
                AccessKind::Store => "store",
            };
            let _ = writeln!(s, "\n[[access]]");
            let _ = writeln!(s, "field = {:?}", self.fields[a.field].name);
            let _ = writeln!(s, "kind = \"{kind}\"");
            let _ = writeln!(s, "offsets = {:?}", a.offsets);
            if a.scale != [1, 1, 1] {
                let _ = writeln!(s, "scale = {:?}", a.scale);
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFile {
    kernel: KernelSection,
    domain: DomainSection,
    #[serde(default)]
    field: BTreeMap<String, FieldSection>,
    #[serde(default)]
    access: Vec<AccessSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    name: String,
    flops_per_lup: f64,
    #[serde(default)]
    folding: Option<Vec<i64>>,
    #[serde(default)]
    cell_step: Option<Vec<i64>>,
    #[serde(default)]
    sweep_n: Option<i64>,
    #[serde(default)]
    sweep_folds: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSection {
    element_size: i64,
    extents: Vec<i64>,
    #[serde(default)]
    alignment: i64,
    #[serde(default)]
    strides: Option<Vec<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccessSection {
    field: String,
    kind: AccessKind,
    #[serde(default)]
    offsets: Option<Vec<i64>>,
    #[serde(default)]
    scale: Option<Vec<i64>>,
    /// Alternative to offsets/scale: one expression per dimension over the
    /// cell coordinate of that dimension, e.g. `["x+1", "y", "2*z-3"]`.
    #[serde(default)]
    index: Option<Vec<String>>,
}

fn pad(v: &[i64], fill: i64, what: &str) -> Result<Coord, KernelError> {
    if v.is_empty() || v.len() > DIMS {
        return Err(KernelError::Invalid(format!(
            "`{what}` needs 1 to {DIMS} entries, got {}",
            v.len()
        )));
    }
    let mut out = [fill; DIMS];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

/// Parses `[c*]var[+-c]`-style terms for dimension `dim`; returns `(scale, offset)`.
fn parse_index_expr(expr: &str, dim: usize) -> Result<(i64, i64), KernelError> {
    let var = ["x", "y", "z"][dim];
    let bad = || KernelError::NonAffine(expr.to_owned());
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(bad());
    }
    let mut terms = Vec::new();
    let mut start = 0;
    for (i, ch) in compact.char_indices() {
        if (ch == '+' || ch == '-') && i > 0 {
            terms.push(&compact[start..i]);
            start = i;
        }
    }
    terms.push(&compact[start..]);
    let (mut scale, mut offset) = (0i64, 0i64);
    for term in terms {
        let (sign, body) = match term.strip_prefix('-') {
            Some(rest) => (-1, rest),
            None => (1, term.strip_prefix('+').unwrap_or(term)),
        };
        let factors: Vec<&str> = body.split('*').collect();
        let mut coeff = sign;
        let mut has_var = false;
        for f in factors {
            if f == var {
                if has_var {
                    return Err(bad());
                }
                has_var = true;
            } else {
                coeff *= f.parse::<i64>().map_err(|_| bad())?;
            }
        }
        if has_var {
            scale += coeff;
        } else {
            offset += coeff;
        }
    }
    Ok((scale, offset))
}

fn syntax_error(text: &str, err: &toml::de::Error) -> KernelError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    KernelError::Syntax {
        line,
        column,
        message: err.message().to_owned(),
    }
}

/// Parses and validates a kernel description.
pub fn parse_kernel_spec(text: &str) -> Result<KernelSpec, KernelError> {
    let file: KernelFile = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;

    let mut fields = Vec::with_capacity(file.field.len());
    for (name, f) in &file.field {
        let extents = pad(&f.extents, 1, "extents")?;
        if let Some(dim) = extents.iter().position(|&e| e <= 0) {
            return Err(KernelError::ZeroExtent {
                field: name.clone(),
                dim,
            });
        }
        let strides = match &f.strides {
            Some(s) => pad(s, 0, "strides")?,
            None => dense_strides(extents),
        };
        fields.push(Field {
            name: name.clone(),
            element_size: f.element_size,
            extents,
            strides,
            alignment: f.alignment,
        });
    }

    let mut accesses = Vec::with_capacity(file.access.len());
    for a in &file.access {
        let field = fields
            .iter()
            .position(|f| f.name == a.field)
            .ok_or_else(|| KernelError::UndeclaredField(a.field.clone()))?;
        let (scale, offsets) = match (&a.index, &a.offsets, &a.scale) {
            (Some(exprs), None, None) => {
                if exprs.is_empty() || exprs.len() > DIMS {
                    return Err(KernelError::Invalid("`index` needs 1 to 3 entries".into()));
                }
                let mut scale = [1; DIMS];
                let mut offsets = [0; DIMS];
                for (d, e) in exprs.iter().enumerate() {
                    (scale[d], offsets[d]) = parse_index_expr(e, d)?;
                }
                (scale, offsets)
            }
            (Some(_), _, _) => {
                return Err(KernelError::Invalid(
                    "`index` cannot be combined with `offsets` or `scale`".into(),
                ))
            }
            (None, offsets, scale) => (
                match scale {
                    Some(s) => pad(s, 1, "scale")?,
                    None => [1; DIMS],
                },
                match offsets {
                    Some(o) => pad(o, 0, "offsets")?,
                    None => [0; DIMS],
                },
            ),
        };
        accesses.push(Access {
            field,
            kind: a.kind,
            scale,
            offsets,
        });
    }

    let folding = ThreadFolding(match &file.kernel.folding {
        Some(f) => pad(f, 1, "folding")?,
        None => [1; DIMS],
    });
    let cell_step = match &file.kernel.cell_step {
        Some(s) => pad(s, 1, "cell_step")?,
        None => folding.0,
    };
    let sweep_folds = match &file.kernel.sweep_folds {
        Some(labels) => Some(
            labels
                .iter()
                .map(|l| {
                    ThreadFolding::parse(l)
                        .ok_or_else(|| KernelError::Invalid(format!("unknown folding `{l}`")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let spec = KernelSpec {
        name: file.kernel.name,
        fields,
        accesses,
        domain: Domain {
            lo: pad(&file.domain.lo, 0, "domain.lo")?,
            hi: pad(&file.domain.hi, 1, "domain.hi")?,
        },
        folding,
        cell_step,
        flops_per_lup: file.kernel.flops_per_lup,
        sweep_n: file.kernel.sweep_n,
        sweep_folds,
    };
    spec.validate()?;
    Ok(spec)
}

/// Block and grid dimensions of a launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaunchConfig {
    pub block: Coord,
    pub grid: Coord,
}

impl LaunchConfig {
    /// Grid sized to cover the kernel's domain.
    pub fn for_kernel(spec: &KernelSpec, block: Coord) -> Result<Self, KernelError> {
        if block.iter().any(|&b| b < 1) {
            return Err(KernelError::Invalid(format!(
                "block dimensions must be >= 1, got {block:?}"
            )));
        }
        let ext = spec.domain.extent();
        let grid = std::array::from_fn(|d| {
            let per_block = block[d] * spec.cell_step[d];
            (ext[d] + per_block - 1) / per_block
        });
        Ok(Self { block, grid })
    }

    pub fn block_threads(&self) -> i64 {
        self.block.iter().product()
    }

    pub fn grid_blocks(&self) -> i64 {
        self.grid.iter().product()
    }

    /// Block coordinate of an x-major linear block index.
    pub fn block_coord(&self, linear: i64) -> Coord {
        [
            linear % self.grid[0],
            (linear / self.grid[0]) % self.grid[1],
            linear / (self.grid[0] * self.grid[1]),
        ]
    }
}
