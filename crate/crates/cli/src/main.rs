use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use warpvol_core::cachesim::{self, SimError, SimLevel};
use warpvol_core::calibrate::{self, CalibrationError};
use warpvol_core::hardware::HardwareError;
use warpvol_core::kernel::{parse_kernel_spec, Coord, KernelError};
use warpvol_core::report::{self, Format};
use warpvol_core::{bundled, perf, sweep};
use warpvol_core::{EstimateError, HardwareModel, KernelSpec, LaunchConfig, ThreadFolding};

#[derive(Parser)]
#[command(name = "warpvol", version, about = "Cache and memory volume estimates for GPU stencil kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Volumes, L1 cost and performance bound for one launch configuration.
    Estimate {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_parser = parse_coord, default_value = "256,1,1")]
        block: Coord,
        #[arg(long, value_parser = parse_fold, default_value = "none")]
        fold: ThreadFolding,
        #[command(flatten)]
        out: Output,
    },
    /// Ranks all power-of-two block shapes of a thread count.
    Sweep {
        #[command(flatten)]
        target: Target,
        /// Threads per block; defaults to the kernel's `sweep_n`, else 1024.
        #[arg(long = "sweep-n")]
        n: Option<i64>,
        /// Comma-separated foldings (none, 2x, 2y, 2z); defaults to the
        /// kernel's `sweep_folds`.
        #[arg(long, value_delimiter = ',', value_parser = parse_fold)]
        folds: Vec<ThreadFolding>,
        /// Keep only the best rows.
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Fits hit-rate curves to `curve,o,r` samples.
    Calibrate {
        samples: PathBuf,
        /// Base hardware descriptor.
        #[arg(long, default_value = "a100")]
        hw: String,
        /// Writes the base descriptor with fitted curves to this path.
        #[arg(long)]
        write_hw: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// DRAM volume over quadratic plane sizes at constant total size.
    Lcscan {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_parser = parse_coord, default_value = "256,1,1")]
        block: Coord,
        /// Plane sizes as start:end:step (inclusive).
        #[arg(long, default_value = "256:1024:16")]
        planes: String,
        /// Total cell count held fixed.
        #[arg(long, default_value_t = sweep::LCSCAN_CELLS)]
        total: i64,
        #[command(flatten)]
        out: Output,
    },
    /// Replays a configuration through the cache simulator and emits
    /// hit-rate samples for calibration.
    Simulate {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_parser = parse_coord, default_value = "256,1,1")]
        block: Coord,
        #[arg(long, value_parser = parse_fold, default_value = "none")]
        fold: ThreadFolding,
        #[arg(long, value_enum, default_value = "l2")]
        level: Level,
        /// Curve name written to the samples.
        #[arg(long, default_value = "l2_over_z")]
        curve: String,
        /// Oversubscription factors; capacity is allocated bytes / factor.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
        factors: Vec<f64>,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lists bundled kernels and hardware descriptors, or prints one.
    Kernels {
        name: Option<String>,
    },
}

#[derive(Args)]
struct Target {
    /// Kernel file or bundled kernel name.
    kernel: String,
    /// Hardware descriptor file or bundled name.
    #[arg(default_value = "a100")]
    hw: String,
    /// Overrides the domain size.
    #[arg(long, value_parser = parse_coord)]
    domain: Option<Coord>,
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    L1,
    L2,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        Failure::input(format!("kernel: {e}"))
    }
}

impl From<HardwareError> for Failure {
    fn from(e: HardwareError) -> Self {
        Failure::input(format!("hardware descriptor: {e}"))
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        Failure::input(format!("calibration: {e}"))
    }
}

impl From<EstimateError> for Failure {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::BlockTooLarge { .. } => Self { code: 3, message: e.to_string() },
            EstimateError::Kernel(k) => k.into(),
            other => Self { code: 1, message: other.to_string() },
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Estimate(inner) => inner.into(),
            other => Self { code: 1, message: other.to_string() },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

fn parse_coord(s: &str) -> Result<Coord, String> {
    let v: Vec<i64> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if x > 0 && y > 0 && z > 0 => Ok([x, y, z]),
        _ => Err(format!("expected three positive integers x,y,z, got `{s}`")),
    }
}

fn parse_fold(s: &str) -> Result<ThreadFolding, String> {
    ThreadFolding::parse(s).ok_or_else(|| format!("unknown folding `{s}` (none, 2x, 2y, 2z)"))
}

fn parse_planes(s: &str) -> Result<Vec<i64>, Failure> {
    let v: Vec<i64> = s
        .split(':')
        .map(|p| p.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::input(format!("--planes `{s}`: {e}")))?;
    let (lo, hi, step) = match v[..] {
        [p] => (p, p, 1),
        [lo, hi] => (lo, hi, 1),
        [lo, hi, step] => (lo, hi, step),
        _ => return Err(Failure::input(format!("--planes `{s}`: expected start:end:step"))),
    };
    if lo < 1 || step < 1 || hi < lo {
        return Err(Failure::input(format!("--planes `{s}`: empty or invalid range")));
    }
    Ok((lo..=hi).step_by(step as usize).collect())
}

fn load_kernel(arg: &str) -> Result<KernelSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Ok(parse_kernel_spec(&text)?);
    }
    match bundled::kernel(arg) {
        Some(k) => Ok(k?),
        None => Err(Failure::input(format!("kernel not found: {arg}"))),
    }
}

fn load_hardware(arg: &str) -> Result<HardwareModel, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Ok(HardwareModel::parse(&text)?);
    }
    bundled::hardware(arg).ok_or_else(|| Failure::input(format!("hardware descriptor not found: {arg}")))
}

impl Target {
    fn load(&self) -> Result<(KernelSpec, HardwareModel), Failure> {
        let mut k = load_kernel(&self.kernel)?;
        let hw = load_hardware(&self.hw)?;
        if let Some(d) = self.domain {
            k = k.with_domain_size(d);
        }
        Ok((k, hw))
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Estimate { target, block, fold, out } => {
            let (k, hw) = target.load()?;
            let k = k.with_folding(fold);
            let launch = LaunchConfig::for_kernel(&k, block)?;
            let e = perf::estimate(&k, &launch, &hw)?;
            emit(&report::render(&report::level_records(&e), out.format), out.out.as_deref())
        }
        Command::Sweep { target, n, folds, top, out } => {
            let (k, hw) = target.load()?;
            let n = n.or(k.sweep_n).unwrap_or(1024);
            let folds = if folds.is_empty() { sweep::default_folds(&k) } else { folds };
            if sweep::block_sizes(n).is_empty() {
                return Err(Failure::input(format!("no power-of-two block shapes with {n} threads")));
            }
            if n > hw.max_threads_per_block {
                return Err(EstimateError::BlockTooLarge { threads: n, limit: hw.max_threads_per_block }.into());
            }
            let ranked = sweep::sweep(&k, &hw, n, &folds)?;
            let mut rows = report::sweep_records(&ranked);
            if let Some(t) = top {
                rows.truncate(t);
            }
            emit(&report::render(&rows, out.format), out.out.as_deref())
        }
        Command::Calibrate { samples, hw, write_hw, out } => {
            let base = load_hardware(&hw)?;
            let file = std::fs::File::open(&samples)
                .map_err(|e| Failure::input(format!("{}: {e}", samples.display())))?;
            let samples = calibrate::read_samples(file)?;
            let (model, fits) = calibrate::calibrate(&samples, &base.hit_rates)?;
            if let Some(path) = write_hw {
                let fitted = HardwareModel { hit_rates: model, ..base };
                std::fs::write(&path, fitted.to_toml())?;
                log::info!("wrote {}", path.display());
            }
            emit(&report::render(&report::fit_records(&fits), out.format), out.out.as_deref())
        }
        Command::Lcscan { target, block, planes, total, out } => {
            let (k, hw) = target.load()?;
            let planes = parse_planes(&planes)?;
            let rows = sweep::lcscan(&k, &hw, block, &planes, total)?;
            let rounded = rows.iter().filter(|r| r.plane * r.plane * r.depth != total).count();
            if rounded > 0 {
                eprintln!("note: depth rounded down for {rounded} of {} plane sizes", rows.len());
            }
            let onset = sweep::transition_onset(&rows);
            let records = report::scan_records(&rows);
            let text = match out.format {
                Format::Csv => {
                    match onset {
                        Some(p) => eprintln!("note: layer condition breaks at plane {p}"),
                        None => eprintln!("note: no layer condition transition in range"),
                    }
                    report::to_csv(&records)
                }
                Format::Json => {
                    report::to_json(&serde_json::json!({ "rows": records, "onset": onset }))
                }
            };
            emit(&text, out.out.as_deref())
        }
        Command::Simulate { target, block, fold, level, curve, factors, out } => {
            let (k, hw) = target.load()?;
            let k = k.with_folding(fold);
            let launch = LaunchConfig::for_kernel(&k, block)?;
            let level = match level {
                Level::L1 => SimLevel::L1,
                Level::L2 => SimLevel::L2,
            };
            if factors.iter().any(|f| f.is_nan() || *f <= 0.0) {
                return Err(Failure::input("--factors must be positive"));
            }
            let samples = cachesim::capacity_samples(&k, &launch, &hw, level, &curve, &factors)?;
            let mut buf = Vec::new();
            calibrate::write_samples(&mut buf, &samples)?;
            emit(&String::from_utf8_lossy(&buf), out.as_deref())
        }
        Command::Kernels { name } => match name {
            Some(n) => {
                if let Some(k) = bundled::kernel(&n) {
                    print!("{}", k?.to_toml());
                } else {
                    print!("{}", bundled::hardware_text(&n).map_err(|_| {
                        Failure::input(format!("no bundled kernel or hardware named `{n}`"))
                    })?);
                }
                Ok(())
            }
            None => {
                for (n, _) in bundled::KERNELS {
                    println!("kernel {n}");
                }
                for (n, _) in bundled::HARDWARE {
                    println!("hardware {n}");
                }
                Ok(())
            }
        },
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("WARPVOL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Failure::input(format!("WARPVOL_THREADS=`{v}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: 1, message: e.to_string() })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
