mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use angmf::synth::NoiseConfig;
use angmf::Vec3;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "angmf",
    version,
    about = "Angular-error distributions, robust estimators and uncertainty metrics for surface normals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Angular-error metrics between a predicted and a ground-truth normal map.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Sparsification curves ranked by the expected angular error of a κ map.
    Sparsify {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        kappa: PathBuf,
        /// mean, median, rmse, or pct_<threshold> such as pct_11_25.
        #[arg(long, default_value = "mean")]
        metric: String,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Draws directions from an AngMF or vonMF distribution.
    Sample {
        /// Mean direction as x,y,z; normalized on input.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        mu: Vec3,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Dist::Angmf)]
        dist: Dist,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Estimates a direction, and κ for mle, from a CSV of samples.
    Fit {
        #[arg(long)]
        samples_csv: PathBuf,
        #[arg(long, value_enum)]
        estimator: Estimator,
        #[arg(long, default_value_t = angmf::estimators::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Expected angular error in degrees for each κ.
    ExpectedError {
        #[arg(long, required = true, num_args = 1..)]
        kappa: Vec<f64>,
    },
    /// Uncertainty-guided training pixel selection over a κ map.
    SelectPixels {
        #[arg(long)]
        kappa_map: PathBuf,
        #[arg(long, default_value_t = angmf::pixel_select::DEFAULT_RS)]
        rs: f64,
        #[arg(long, default_value_t = angmf::pixel_select::DEFAULT_BETA)]
        beta: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Median versus mean on simulated two-plane boundary pixels.
    SimulateBoundary {
        /// Dominant plane normal as x,y,z.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,1")]
        normal_a: Vec3,
        /// Angle between the two plane normals, in degrees.
        #[arg(long, default_value_t = 60.0)]
        separation_deg: f64,
        #[arg(long, default_value_t = 0.2)]
        contamination: f64,
        /// Per-sample jitter concentration; `inf` disables jitter.
        #[arg(long, default_value_t = 50.0)]
        jitter_kappa: f64,
        /// Samples per trial.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Trains the refinement MLP on synthetic frames.
    RefineDemo {
        #[command(flatten)]
        frames: FrameArgs,
        /// Number of training frames.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Extra frames held out for evaluation.
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = angmf::refine::DEFAULT_HIDDEN)]
        hidden: usize,
        #[arg(long, default_value_t = angmf::pixel_select::DEFAULT_RS)]
        rs: f64,
        #[arg(long, default_value_t = angmf::pixel_select::DEFAULT_BETA)]
        beta: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_weights: Option<PathBuf>,
        /// Per-epoch history.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Writes one synthetic frame as normal maps, optionally refined by trained weights.
    SynthFrame {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_gt: PathBuf,
        #[arg(long)]
        out_pred: PathBuf,
        /// Predict with these weights instead of the coarse input.
        #[arg(long, requires = "out_kappa")]
        weights: Option<PathBuf>,
        #[arg(long, requires = "weights")]
        out_kappa: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dist {
    Angmf,
    Vonmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Mean,
    Median,
    Mle,
}

#[derive(Debug, Clone, Args)]
struct FrameArgs {
    #[arg(long, default_value_t = 48)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Planes per frame.
    #[arg(long, default_value_t = 2)]
    planes: usize,
    /// Ground-truth jitter concentration; `inf` disables jitter.
    #[arg(long, default_value_t = NoiseConfig::default().jitter_kappa)]
    jitter_kappa: f64,
    /// Boundary contamination probability.
    #[arg(long, default_value_t = NoiseConfig::default().contamination)]
    contamination: f64,
    #[arg(long, default_value_t = NoiseConfig::default().prediction_noise)]
    prediction_noise: f64,
    #[arg(long, default_value_t = NoiseConfig::default().hint_noise)]
    hint_noise: f64,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("bad number {p:?}"))?;
    }
    Ok(Vec3::from_array(v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
