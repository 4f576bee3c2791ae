//! Kernels and hardware descriptors shipped with the crate.

use crate::hardware::{HardwareError, HardwareModel};
use crate::kernel::{parse_kernel_spec, KernelError, KernelSpec};

pub const KERNELS: &[(&str, &str)] = &[
    ("2d5pt", include_str!("../data/2d5pt.kernel")),
    ("3d25pt_r4", include_str!("../data/3d25pt_r4.kernel")),
    ("d3q15_acm", include_str!("../data/d3q15_acm.kernel")),
    ("copy", include_str!("../data/copy.kernel")),
];

pub const HARDWARE: &[(&str, &str)] = &[
    ("a100", include_str!("../data/a100.hw")),
    ("v100", include_str!("../data/v100.hw")),
];

/// Short names accepted in place of bundled names.
const ALIASES: &[(&str, &str)] = &[("3d25pt", "3d25pt_r4"), ("lbm", "d3q15_acm")];

fn lookup<'a>(table: &'a [(&str, &str)], name: &str) -> Option<&'a str> {
    let name = name.trim_end_matches(".kernel").trim_end_matches(".hw");
    let name = ALIASES
        .iter()
        .find(|(a, _)| a.eq_ignore_ascii_case(name))
        .map_or(name, |(_, n)| *n);
    table
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, text)| *text)
}

/// Bundled kernel by name; `None` if unknown.
pub fn kernel(name: &str) -> Option<Result<KernelSpec, KernelError>> {
    lookup(KERNELS, name).map(parse_kernel_spec)
}

/// Bundled hardware descriptor by name; `None` if unknown.
pub fn hardware(name: &str) -> Option<HardwareModel> {
    lookup(HARDWARE, name).map(|t| HardwareModel::parse(t).expect("bundled descriptor is valid"))
}

pub fn hardware_text(name: &str) -> Result<&'static str, HardwareError> {
    lookup(HARDWARE, name).ok_or_else(|| HardwareError::Invalid(format!("no bundled `{name}`")))
}
