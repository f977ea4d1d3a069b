use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use augsim::background::CleanParams;
use augsim::demo::{write_demo, DemoParams};
use augsim::pipeline::{cmd_build_map, cmd_calibrate, cmd_clean_background, cmd_simulate, cmd_stats, MapParams, PipelineError};
use augsim::placement::{AreaBounds, GaussianTemplate};

/// LiDAR data generation from labeled background scans and obstacle models.
///
/// Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
/// The frame worker count can be overridden with AUGSIM_WORKERS.
#[derive(Parser)]
#[command(name = "augsim", version)]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove movable objects from a labeled scan and fill the ground holes.
    CleanBackground {
        /// Labeled scan (.ply or .pcd with a `label` field).
        input: PathBuf,
        /// Output background directory.
        #[arg(short, long)]
        out: PathBuf,
        /// Ground height-field cell size, meters.
        #[arg(long, default_value_t = CleanParams::default().ground_cell)]
        ground_cell: f64,
        /// Spacing of synthetic ground points, meters.
        #[arg(long, default_value_t = CleanParams::default().fill_spacing)]
        fill_spacing: f64,
        /// Neighbor index cell size, meters.
        #[arg(long, default_value_t = CleanParams::default().index_cell)]
        index_cell: f64,
    },
    /// Build one placement probability map per annotated category.
    BuildMap {
        /// Annotation file: `category x y yaw` per line.
        annotations: PathBuf,
        /// Output directory for `<category>.pmap` files.
        #[arg(short, long)]
        out: PathBuf,
        /// Map cell size, meters.
        #[arg(long, default_value_t = 0.5)]
        cell: f64,
        /// Template half width in cells.
        #[arg(long, default_value_t = 2)]
        half_width: usize,
        /// Template standard deviation in cells.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Margin around the annotations, meters (ignored with --bounds).
        #[arg(long, default_value_t = 5.0)]
        margin: f64,
        /// Explicit map area: min_x,min_y,max_x,max_y.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        bounds: Option<Vec<f64>>,
    },
    /// Fit per-beam vertical angles and noise from a calibration scan.
    Calibrate {
        /// CSV with columns beam,x,y,z, or a .ply/.pcd whose label is the beam.
        input: PathBuf,
        /// Output beam table CSV.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Simulate the frames described by a run config.
    Simulate {
        /// Run config TOML.
        config: PathBuf,
    },
    /// Summarize frame bundles.
    Stats {
        /// Run output directory, its frames/ directory, or one frame.
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = StatsFormat::Text)]
        format: StatsFormat,
    },
    /// Write a synthetic demo workspace (scan, annotations, library, configs).
    Demo {
        /// Output directory.
        out: PathBuf,
        /// Frames in the generated run config.
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Half side of the square scene, meters.
        #[arg(long, default_value_t = DemoParams::default().half_extent)]
        half_extent: f64,
        /// Point spacing, meters.
        #[arg(long, default_value_t = DemoParams::default().spacing)]
        spacing: f64,
        #[arg(long, default_value_t = DemoParams::default().seed)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Text,
    Csv,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::CleanBackground {
            input,
            out,
            ground_cell,
            fill_spacing,
            index_cell,
        } => {
            let params = CleanParams {
                ground_cell,
                fill_spacing,
                index_cell,
            };
            let stats = cmd_clean_background(&input, &out, &params)?;
            println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
        }
        Command::BuildMap {
            annotations,
            out,
            cell,
            half_width,
            sigma,
            margin,
            bounds,
        } => {
            let template =
                GaussianTemplate::from_sigma(half_width, sigma).map_err(|e| PipelineError::Validation(e.to_string()))?;
            let bounds = bounds.map(|b| AreaBounds {
                min: [b[0], b[1]],
                max: [b[2], b[3]],
            });
            let params = MapParams {
                cell_size: cell,
                template,
                margin,
                bounds,
            };
            for p in cmd_build_map(&annotations, &out, &params)? {
                println!("{}", p.display());
            }
        }
        Command::Calibrate { input, out } => {
            let table = cmd_calibrate(&input, &out)?;
            print!("{}", table.to_csv());
        }
        Command::Simulate { config } => {
            let m = cmd_simulate(&config)?;
            let points: usize = m.frames.iter().map(|f| f.points).sum();
            println!("{} frames, {points} points, config {}", m.frames.len(), m.config_hash);
        }
        Command::Stats { dir, format } => {
            let r = cmd_stats(&dir)?;
            match format {
                StatsFormat::Text => print!("{}", r.to_text()),
                StatsFormat::Csv => print!("{}", r.to_csv()),
            }
        }
        Command::Demo {
            out,
            frames,
            half_extent,
            spacing,
            seed,
        } => {
            if !(half_extent > 10.0 && spacing > 0.0) {
                return Err(PipelineError::Validation(
                    "demo needs half_extent > 10 and a positive spacing".into(),
                ));
            }
            let params = DemoParams {
                half_extent,
                spacing,
                seed,
            };
            let run = write_demo(&out, &params, frames).map_err(|e| PipelineError::Runtime(e.to_string()))?;
            println!("{}", run.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
