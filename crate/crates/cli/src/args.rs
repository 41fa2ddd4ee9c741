//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "jpmap",
    about = "Joint posterior maximization with an autoencoding prior: train the VAE, \
             restore degraded digits, and reproduce the validation experiments.",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled digit dataset in IDX format.
    GenData(GenDataArgs),
    /// Train the VAE prior and write model + loss-curve files.
    Train(TrainArgs),
    /// Restore degraded test digits with one of the solvers.
    Restore(RestoreArgs),
    /// Sweep measurement counts and compare against the CSGM baseline.
    Sweep(SweepArgs),
    /// Multi-start validation of the z-descent (energy/distance traces).
    ValidateA2(ValidateArgs),
    /// Export a 2D latent slice of both coupling terms.
    Slice(SliceArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Directory for the IDX files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training images to generate.
    #[arg(long, default_value_t = 10_000)]
    pub train: usize,
    /// Test images to generate.
    #[arg(long, default_value_t = 1_000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// 20 epochs on a 10k subset — minutes on a laptop.
    Desk,
    /// 400 epochs on the full train split.
    Paper,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (falls back to $JPMAP_DATA_DIR).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output model stem; writes <stem>.manifest, <stem>.blob, <stem>.curve.csv.
    #[arg(long, default_value = "out/vae")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the profile's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Override the lr-halving period (epochs).
    #[arg(long)]
    pub halve_every: Option<usize>,
    /// Train on the first N images only.
    #[arg(long)]
    pub subset: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Denoise,
    Inpainting,
    Cs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Alg1,
    Alg2,
    Alg3,
    Csgm,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Alg1 => "alg1",
            SolverKind::Alg2 => "alg2",
            SolverKind::Alg3 => "alg3",
            SolverKind::Csgm => "csgm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZInitKind {
    Encoder,
    Zeros,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct SolverOpts {
    /// Algorithm 3 fast-branch limit.
    #[arg(long, default_value_t = 5)]
    pub n_min: usize,
    /// Outer iterations.
    #[arg(long, default_value_t = 30)]
    pub n_max: usize,
    /// Learning rate of the inner z-descent.
    #[arg(long, default_value_t = 0.01)]
    pub gd_lr: f64,
    /// Iteration budget of the inner z-descent.
    #[arg(long, default_value_t = 200)]
    pub gd_iters: usize,
    /// Windowed relative-energy stop of the inner z-descent (0 disables).
    #[arg(long, default_value_t = 1e-6)]
    pub gd_tol: f64,
    /// Regularized pseudo-inverse strength for x0.
    #[arg(long, default_value_t = 1e-3)]
    pub pinv_eps: f64,
    #[arg(long, value_enum, default_value_t = ZInitKind::Encoder)]
    pub z_init: ZInitKind,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    /// Model stem written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Task::Cs)]
    pub task: Task,
    /// Known-pixel count for inpainting.
    #[arg(long, default_value_t = 100)]
    pub known: usize,
    /// Known-pixel fraction for inpainting (overrides --known when set).
    #[arg(long)]
    pub known_fraction: Option<f64>,
    /// Measurement count for compressed sensing.
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Noise standard deviation on the [0,1] pixel scale.
    #[arg(long, default_value_t = 2.0 / 255.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = SolverKind::Alg3)]
    pub solver: SolverKind,
    /// Number of test digits to restore.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/restore")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub solver_opts: SolverOpts,
    /// CSGM latent penalty weight (0.5 recovers the plain joint-MAP form).
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// CSGM restarts.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Comma-separated measurement counts.
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200,400")]
    pub m_list: Vec<usize>,
    /// Test digits per measurement count.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 2.0 / 255.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/sweep.csv")]
    pub out: PathBuf,
    /// CSGM restarts (1 mirrors the single-descent comparison).
    #[arg(long, default_value_t = 1)]
    pub fair_restarts: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver_opts: SolverOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Gaussian,
    Encoder,
    Both,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub starts: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Both)]
    pub init: InitKind,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Descent iterations per start (the stop tolerance is disabled so
    /// plateaus remain visible in the traces).
    #[arg(long, default_value_t = 400)]
    pub iters: usize,
    /// Test image to validate on (default: first after the seeded shuffle).
    #[arg(long)]
    pub image_index: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/validate")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub image_index: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    /// Half-width of the slice in posterior standard deviations.
    #[arg(long, default_value_t = 2.0)]
    pub span: f64,
    #[arg(long, default_value = "out/slice.csv")]
    pub out: PathBuf,
}
