//! `fspd`: foveated single-photon depth-imaging simulations from the
//! command line.

mod commands;
mod config;
mod error;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AnalyzeKind, FoveateOverrides};

#[derive(Parser)]
#[command(
    name = "fspd",
    version,
    about = "Foveated SPAD depth imaging simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capture a full-resolution photon cube for a scene.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a foveation policy on a single frame: depth map, plan, reports.
    Foveate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Window fraction of the full bin budget.
        #[arg(long)]
        fraction: Option<f64>,
        /// Foveation mode: memory or depth.
        #[arg(long)]
        mode: Option<String>,
        /// Sub-bin count for depth mode / limited-bins baselines.
        #[arg(long = "nprime")]
        n_prime: Option<u32>,
        /// Bucket count for quantized spatio-temporal sampling.
        #[arg(long)]
        buckets: Option<u32>,
        /// Samples per bucket for quantized spatio-temporal sampling.
        #[arg(long = "samples-per-bucket")]
        samples_per_bucket: Option<usize>,
        /// Target segment count for superpixel sampling.
        #[arg(long)]
        segments: Option<u32>,
        /// Noise-floor threshold for the flow policy.
        #[arg(long = "floor-tau")]
        floor_tau: Option<f64>,
    },
    /// Evaluate a predicted depth container against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form analyses: worst-case limits, SNR, SBR.
    Analyze {
        #[command(subcommand)]
        kind: AnalyzeCommand,
    },
    /// Run a parameter sweep described by a JSON grid config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a policy over a moving sequence with running-average metrics.
    Sequence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Stationary points and p_worst of the worst-case detection model.
    Worstcase(WorstcaseArgs),
    /// SNR of all capture regimes at one (N, M, C).
    Snr(SnrArgs),
    /// SBR of one regime at one operating point.
    Sbr(SbrArgs),
}

#[derive(Args)]
struct WorstcaseArgs {
    /// Foveation window size in bins.
    #[arg(long = "M")]
    m_bins: u32,
    /// Multipath detection probability.
    #[arg(long)]
    pmp: f64,
    /// Probability of a clean noise floor.
    #[arg(long, default_value_t = 1.0)]
    pfloor: f64,
    /// Pixel count of the array.
    #[arg(long = "S", default_value_t = 1000)]
    pixels: u64,
    /// Optional p_gt at which to also evaluate the model.
    #[arg(long)]
    pgt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[arg(long = "N")]
    n_bins: u32,
    #[arg(long = "M")]
    m_bins: u32,
    /// Temporal volume T in seconds.
    #[arg(long = "T")]
    temporal_volume_s: f64,
    #[arg(long = "C")]
    cycles: u64,
    #[arg(long = "Cnew")]
    cycles_new: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SbrArgs {
    /// conventional | memory | perfect | depth
    #[arg(long)]
    regime: String,
    #[arg(long = "phi-sig")]
    phi_sig: f64,
    #[arg(long = "phi-bkg")]
    phi_bkg: f64,
    /// Peak bin (zero-based).
    #[arg(long = "i")]
    peak_bin: u32,
    /// Window start bin (zero-based).
    #[arg(long = "j", default_value_t = 0)]
    window_start: u32,
    #[arg(long = "N")]
    n_bins: u32,
    #[arg(long = "M")]
    m_bins: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// FSPD_THREADS caps internal parallelism; 0 or unset picks the default.
fn init_threads() {
    if let Ok(text) = std::env::var("FSPD_THREADS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out } => commands::cmd_simulate(config, out.as_deref()),
        Command::Foveate {
            config,
            out,
            fraction,
            mode,
            n_prime,
            buckets,
            samples_per_bucket,
            segments,
            floor_tau,
        } => commands::cmd_foveate(
            config,
            out.as_deref(),
            &FoveateOverrides {
                fraction: *fraction,
                mode: mode.clone(),
                n_prime: *n_prime,
                buckets: *buckets,
                samples_per_bucket: *samples_per_bucket,
                segments: *segments,
                floor_tau: *floor_tau,
            },
        ),
        Command::Metrics { pred, gt, out } => commands::cmd_metrics(pred, gt, out.as_deref()),
        Command::Analyze { kind } => {
            let (kind, out) = match kind {
                AnalyzeCommand::Worstcase(a) => (
                    AnalyzeKind::Worstcase {
                        m_bins: a.m_bins,
                        p_multipath: a.pmp,
                        p_floor: a.pfloor,
                        pixels: a.pixels,
                        p_gt: a.pgt,
                    },
                    a.out.as_deref(),
                ),
                AnalyzeCommand::Snr(a) => (
                    AnalyzeKind::Snr {
                        n_bins: a.n_bins,
                        m_bins: a.m_bins,
                        temporal_volume_s: a.temporal_volume_s,
                        cycles: a.cycles,
                        cycles_new: a.cycles_new,
                    },
                    a.out.as_deref(),
                ),
                AnalyzeCommand::Sbr(a) => (
                    AnalyzeKind::Sbr {
                        regime: a.regime.clone(),
                        phi_sig: a.phi_sig,
                        phi_bkg: a.phi_bkg,
                        peak_bin: a.peak_bin,
                        window_start: a.window_start,
                        n_bins: a.n_bins,
                        m_bins: a.m_bins,
                    },
                    a.out.as_deref(),
                ),
            };
            commands::cmd_analyze(&kind, out)
        }
        Command::Sweep { config, out } => commands::cmd_sweep(config, out),
        Command::Sequence { config, out } => commands::cmd_sequence(config, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fspd: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
