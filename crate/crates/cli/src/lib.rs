//! `ldo` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 input validation, 3 I/O.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ldo_core::heights::{height_histogram, layer_coverage};
use ldo_core::ingest::{load_scene, IngestError};
use ldo_core::voxelizer::{build_ldo, read_occupancy, write_occupancy, LdoGrid};
use ldo_core::{evaluate, PipelineConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ldo", version, about = "Local-density-aware dense occupancy tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an occupancy file from a scene manifest.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
    },
    /// Print occupancy counts, a height histogram and layer coverage.
    Stats {
        #[arg(long)]
        occ: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        bin_size: f64,
        /// Supplies the height intervals for layer coverage.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare a predicted occupancy file against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        classes: u16,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    PipelineConfig::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Builds the occupancy grid a `generate` run would write.
pub fn generate_grid(manifest: &Path, config: &PipelineConfig, jobs: Option<usize>) -> Result<LdoGrid, CliError> {
    let work = || -> Result<LdoGrid, CliError> {
        let scene = load_scene(manifest)?;
        if scene.class_count() != config.class_count {
            return Err(CliError::Validation(format!(
                "{}: manifest class_count {} differs from config class_count {}",
                manifest.display(),
                scene.class_count(),
                config.class_count
            )));
        }
        build_ldo(&scene, &config.grid, &config.options)
            .map_err(|e| CliError::Validation(format!("{}: {e}", manifest.display())))
    };
    match jobs {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
    }
}

fn cmd_generate(
    manifest: &Path,
    config: &Path,
    out_path: &Path,
    jobs: Option<u16>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let config = load_config(config)?;
    let grid = generate_grid(manifest, &config, jobs.map(usize::from))?;
    write_occupancy(out_path, &grid)?;
    writeln!(
        out,
        "wrote {} occupied voxels of {:?} to {}",
        grid.occupied_count(),
        grid.dims(),
        out_path.display()
    )
    .map_err(io_err(out_path))
}

/// The `stats` report for an occupancy grid.
pub fn stats_report(grid: &LdoGrid, bin_size: f64, config: &PipelineConfig) -> Result<String, CliError> {
    let hist = height_histogram(grid, bin_size).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut per_class: BTreeMap<u16, u64> = BTreeMap::new();
    for (_, label, _) in grid.occupied() {
        *per_class.entry(label).or_default() += 1;
    }
    let mut s = String::new();
    let occupied = grid.occupied_count();
    s += &format!("dims {:?}\n", grid.dims());
    s += &format!("occupied {occupied}\n");
    for (class, count) in &per_class {
        s += &format!("class {class} {count}\n");
    }
    s += &format!("histogram bin_size {bin_size}\n");
    s += &hist.to_string();
    for (layer, covered) in layer_coverage(grid, &config.intervals) {
        s += &format!("layer {layer} {covered} / {occupied}\n");
    }
    Ok(s)
}

fn cmd_stats(occ: &Path, bin_size: f64, config: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    let grid = read_occupancy(occ)?;
    let report = stats_report(&grid, bin_size, &config)?;
    out.write_all(report.as_bytes()).map_err(io_err(occ))
}

fn cmd_metrics(pred: &Path, gt: &Path, classes: u16, out: &mut dyn Write) -> Result<(), CliError> {
    let p = read_occupancy(pred)?;
    let g = read_occupancy(gt)?;
    let report = evaluate(p.label_view(), g.label_view(), classes)
        .map_err(|e| CliError::Validation(format!("{} vs {}: {e}", pred.display(), gt.display())))?;
    write!(out, "{report}").map_err(io_err(pred))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate {
            manifest,
            config,
            out: out_path,
            jobs,
        } => cmd_generate(manifest, config, out_path, *jobs, out),
        Command::Stats { occ, bin_size, config } => cmd_stats(occ, *bin_size, config.as_deref(), out),
        Command::Metrics { pred, gt, classes } => cmd_metrics(pred, gt, *classes, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
