//! Command-line definitions.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use lapmc::descriptor::{NeighborMetric, DEFAULT_BINS, DEFAULT_K_V};
use lapmc::eval::{PlantedConfig, DEFAULT_GRID};
use lapmc::graph::DEFAULT_K_S;
use lapmc::ingest::{MaskMode, MatrixFormat};
use lapmc::pipeline::{Method, DEFAULT_ENERGY};
use lapmc::SolverConfig;

#[derive(Debug, Parser)]
#[command(
    name = "lapmc",
    version,
    about = "Graph-regularized low-rank multi-label learning",
    args_override_self = true
)]
pub struct Cli {
    /// `key = value` file of default flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (defaults next to the main output).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Matrix file format for inputs (default: by extension).
    #[arg(long, global = true, value_name = "FORMAT")]
    pub format: Option<MatrixFormat>,
    /// Label files use −1/0/+1 (negative/unobserved/positive).
    #[arg(long, global = true)]
    pub signed_labels: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted dataset into a directory.
    Synth(SynthArgs),
    /// Reveal ω% of a fully observed label matrix.
    Mask(MaskArgs),
    /// Build semantic descriptors, the semantic graph and whitened features.
    Prepare(PrepareArgs),
    /// Select hyperparameters by cross-validation.
    Cv(CvArgs),
    /// Fit one model.
    Train(TrainArgs),
    /// Score models on test data and write a mAP report.
    Evaluate(EvaluateArgs),
    /// mask → prepare → cv → train → evaluate for every method.
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Mask(_) => "mask",
            Command::Prepare(_) => "prepare",
            Command::Cv(_) => "cv",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

/// Comma-separated list, given as a single flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<T>().map_err(|e| format!("'{t}': {e}")))
            .collect::<Result<Vec<T>, String>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err("empty list".to_string())
                } else {
                    Ok(List(v))
                }
            })
    }
}

impl<T: std::fmt::Display> std::fmt::Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

pub fn default_grid() -> List<f64> {
    List(DEFAULT_GRID.to_vec())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PlantedConfig::default().n)]
    pub n: usize,
    #[arg(long, default_value_t = PlantedConfig::default().n_test)]
    pub n_test: usize,
    #[arg(long, default_value_t = PlantedConfig::default().d)]
    pub d: usize,
    #[arg(long, default_value_t = PlantedConfig::default().c)]
    pub c: usize,
    #[arg(long, default_value_t = PlantedConfig::default().rank)]
    pub rank: usize,
    /// Noise level σ relative to the unit-scale planted scores.
    #[arg(long, default_value_t = PlantedConfig::default().noise)]
    pub noise: f64,
    /// Fraction of positives per label.
    #[arg(long, default_value_t = PlantedConfig::default().label_sparsity)]
    pub label_sparsity: f64,
    /// Uninformative concept columns.
    #[arg(long, default_value_t = PlantedConfig::default().distractors)]
    pub distractors: usize,
    #[arg(long, default_value_t = PlantedConfig::default().concept_noise)]
    pub concept_noise: f64,
    #[arg(long, default_value_t = PlantedConfig::default().low_dim)]
    pub low_dim: usize,
    #[arg(long, default_value_t = PlantedConfig::default().low_dim_noise)]
    pub low_dim_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    /// Fully observed training labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Observed rate in percent, in (0, 100].
    #[arg(long, default_value_t = 20.0)]
    pub omega: f64,
    #[arg(long, default_value_t = MaskMode::default())]
    pub mask_mode: MaskMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Masked labels (triplet text).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DescriptorArgs {
    /// Concepts kept for the global descriptor (default: ⌈c/2⌉).
    #[arg(long)]
    pub s_tilde: Option<usize>,
    /// Visual neighbors pooled by the local descriptor.
    #[arg(long, default_value_t = DEFAULT_K_V)]
    pub k_v: usize,
    /// Histogram bins for mutual information.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = NeighborMetric::Euclidean)]
    pub metric: NeighborMetric,
    /// Neighbors per instance in the semantic graph.
    #[arg(long, default_value_t = DEFAULT_K_S)]
    pub k_s: usize,
    /// Fraction of feature energy kept by whitening.
    #[arg(long, default_value_t = DEFAULT_ENERGY)]
    pub energy: f64,
    /// Do not append the constant column after whitening.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Descriptors for neighbor search (default: --features).
    #[arg(long)]
    pub low_dim_features: Option<PathBuf>,
    /// Concept posterior scores.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Observed training labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Test features to whiten with the training map.
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    #[command(flatten)]
    pub descriptor: DescriptorArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative-decrease stopping tolerance.
    #[arg(long, default_value_t = SolverConfig::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    pub max_iters: usize,
    /// Curvature growth factor of the line search.
    #[arg(long, default_value_t = SolverConfig::default().rho)]
    pub rho: f64,
    /// Initial curvature estimate.
    #[arg(long, default_value_t = SolverConfig::default().lipschitz_init)]
    pub lipschitz_init: f64,
    #[arg(long, default_value_t = SolverConfig::default().theta_init)]
    pub theta_init: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            lipschitz_init: self.lipschitz_init,
            rho: self.rho,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            theta_init: self.theta_init,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = default_grid())]
    pub lambdas: List<f64>,
    #[arg(long, default_value_t = default_grid())]
    pub gammas: List<f64>,
    /// Ridge penalties.
    #[arg(long, default_value_t = default_grid())]
    pub alphas: List<f64>,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    /// Whitened training features.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Semantic graph (needed by apg-graph).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = Method::ApgGraph)]
    pub method: Method,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Selected parameters (`key = value`).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Whitened training features.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Semantic graph (needed by apg-graph).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = Method::ApgGraph)]
    pub method: Method,
    /// Parameters written by `cv`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma_s: Option<f64>,
    /// Ridge penalty.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model coefficients (raw binary, with a `.meta` sidecar).
    #[arg(long)]
    pub output: PathBuf,
    /// Per-iteration solver trace (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Comma-separated model files written by `train`.
    #[arg(long)]
    pub models: List<PathBuf>,
    /// Whitened test features.
    #[arg(long)]
    pub test_features: PathBuf,
    /// Fully observed test labels.
    #[arg(long)]
    pub test_labels: PathBuf,
    /// Observed rate recorded in the report.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Report CSV.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Dataset directory laid out like the output of `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for every intermediate file and the report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub omega: f64,
    #[arg(long, default_value_t = MaskMode::default())]
    pub mask_mode: MaskMode,
    #[arg(long, default_value_t = List(Method::ALL.to_vec()))]
    pub methods: List<Method>,
    #[command(flatten)]
    pub descriptor: DescriptorArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Fixed λ; giving any of --lambda/--gamma-s/--alpha skips cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma_s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}
