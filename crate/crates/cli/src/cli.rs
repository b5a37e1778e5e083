use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Seed used when neither `--seed` nor `GG_PRIVACY_SEED` is given.
pub const DEFAULT_SEED: u64 = 20_240_501;

#[derive(Debug, Parser)]
#[command(name = "ggdp", version, about = "Generalized Gaussian mechanisms and sampled PRV accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Account a (possibly subsampled, composed) GG mechanism.
    Epsilon(EpsilonArgs),
    /// Find the smallest σ meeting an (ε, δ) target.
    SolveSigma(SolveSigmaArgs),
    /// Equal-privacy σ for each β of a grid.
    Family(FamilyArgs),
    /// Tail weights Pr[|Z| > τ] along an equal-privacy family.
    TailWeight(TailWeightArgs),
    /// Hardmax utility of GGNMax on constructed vote histograms.
    SimulateArgmax(SimulateArgmaxArgs),
    /// GGNMax label accuracy on a histogram CSV.
    PateLabel(PateLabelArgs),
    /// Train a toy model with β-DP-SGD.
    Train(TrainArgs),
    /// Draw GG samples.
    Sample(SampleArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Epsilon(_) => "epsilon",
            Command::SolveSigma(_) => "solve-sigma",
            Command::Family(_) => "family",
            Command::TailWeight(_) => "tail-weight",
            Command::SimulateArgmax(_) => "simulate-argmax",
            Command::PateLabel(_) => "pate-label",
            Command::Train(_) => "train",
            Command::Sample(_) => "sample",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Flat TOML file of flag values; flags on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "GG_PRIVACY_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AccountFlags {
    /// Monte Carlo samples per PRV direction.
    #[arg(long, default_value_t = 5_000_000)]
    pub samples: usize,
    /// Grid points on each side of zero.
    #[arg(long, default_value_t = 1 << 18)]
    pub mesh_bins: usize,
    /// Truncation half-width L (default: chosen from a pilot sample).
    #[arg(long)]
    pub trunc: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EpsilonArgs {
    #[arg(long)]
    pub beta: f64,
    /// Noise scale σ (absolute, not a multiple of the sensitivity).
    #[arg(long)]
    pub sigma: f64,
    /// Report ε at this δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Report δ at this ε instead of ε at a δ.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sensitivity: f64,
    #[arg(long, default_value_t = 1)]
    pub compositions: usize,
    /// Poisson sampling rate q.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[command(flatten)]
    pub account: AccountFlags,
    /// Curve JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TargetFlags {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub delta: f64,
    /// Accepted gap between the target and the achieved ε.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub compositions: usize,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sensitivity: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveSigmaArgs {
    #[arg(long)]
    pub beta: f64,
    #[command(flatten)]
    pub target: TargetFlags,
    #[command(flatten)]
    pub account: AccountFlags,
    /// Solve record JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FamilyArgs {
    /// β grid: `start:stop:step` or a comma list.
    #[arg(long, default_value = "1:4:0.5", value_parser = grid_arg)]
    pub betas: String,
    #[command(flatten)]
    pub target: TargetFlags,
    #[command(flatten)]
    pub account: AccountFlags,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TailWeightArgs {
    #[arg(long, default_value = "1:4:0.25", value_parser = grid_arg)]
    pub betas: String,
    /// Cutoffs τ: `start:stop:step` or a comma list.
    #[arg(long, default_value = "1,2,4", value_parser = grid_arg)]
    pub cutoffs: String,
    /// Add a Savitzky-Golay smoothed column.
    #[arg(long)]
    pub smooth: bool,
    #[command(flatten)]
    pub target: TargetFlags,
    #[command(flatten)]
    pub account: AccountFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgmaxArgs {
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 1000)]
    pub votes: u64,
    /// Histograms per runner-up parameter.
    #[arg(long, default_value_t = 500)]
    pub histograms: usize,
    /// Noisy argmax draws per histogram.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Runner-up parameters r (default: 0.001 and 0.005 to 0.2 by 0.005).
    #[arg(long, value_parser = grid_arg)]
    pub gaps: Option<String>,
    #[arg(long, default_value = "1:4:0.5", value_parser = grid_arg)]
    pub betas: String,
    #[command(flatten)]
    pub target: TargetFlags,
    #[command(flatten)]
    pub account: AccountFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PateLabelArgs {
    /// CSV with header class_0,...,class_{N-1},true_label.
    #[arg(long)]
    pub histograms: PathBuf,
    #[arg(long, default_value = "1:4:0.5", value_parser = grid_arg)]
    pub betas: String,
    #[arg(long, default_value_t = 25)]
    pub trials: usize,
    #[command(flatten)]
    pub target: TargetFlags,
    #[command(flatten)]
    pub account: AccountFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// `synthetic` or a CSV path (features then an integer label per row).
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    /// `logistic` or `mlp`.
    #[arg(long, default_value = "logistic")]
    pub model: String,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Noise multiplier: the sum of clipped gradients gets GG(β, σ·C) noise.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Expected Poisson batch size.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// Stop before the accountant would exceed this ε.
    #[arg(long)]
    pub target_epsilon: Option<f64>,
    /// Train without clipping or noise.
    #[arg(long)]
    pub nonprivate: bool,
    /// Rows of the synthetic dataset.
    #[arg(long, default_value_t = 2000)]
    pub rows: usize,
    /// Feature dimension of the synthetic dataset.
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Distance between the synthetic class means.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1 << 14)]
    pub mesh_bins: usize,
    #[arg(long)]
    pub trunc: Option<f64>,
    /// JSON-lines log destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(short = 'n', long, default_value_t = 10)]
    pub count: usize,
    /// One value per line (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// A `*.manifest.json` written by an earlier run.
    pub manifest: PathBuf,
    /// Write the output here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// The full command tree; numeric flags accept negative values so that
/// domain checks, not the parser, reject them.
pub fn command() -> clap::Command {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    for name in subcommand_names(&cmd) {
        cmd = cmd.mut_subcommand(name, |s| s.allow_negative_numbers(true));
    }
    cmd
}

/// Same as [`command`] with every argument optional, for a first pass
/// that only needs to locate `--config`.
pub fn lenient_command() -> clap::Command {
    let mut cmd = command();
    for name in subcommand_names(&cmd) {
        cmd = cmd.mut_subcommand(name, |mut s| {
            let ids: Vec<String> = s.get_arguments().map(|a| a.get_id().to_string()).collect();
            for id in ids {
                s = s.mut_arg(id, |a| a.required(false));
            }
            s
        });
    }
    cmd
}

fn subcommand_names(cmd: &clap::Command) -> Vec<String> {
    cmd.get_subcommands().map(|s| s.get_name().to_string()).collect()
}

/// Parses `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    let out = match parts.as_slice() {
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            if !(c > 0.0) || b < a {
                return Err(format!("range '{s}' needs start <= stop and a positive step"));
            }
            let n = ((b - a) / c + 1e-9).floor() as usize;
            (0..=n).map(|i| a + i as f64 * c).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("'{s}' is neither start:stop:step nor a comma list")),
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(format!("'{s}' has a non-finite entry"));
    }
    Ok(out)
}

fn grid_arg(s: &str) -> Result<String, String> {
    parse_grid(s).map(|_| s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:4:0.5").unwrap(), vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(parse_grid("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(parse_grid("0:0.3:0.1").unwrap().len(), 4);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn definition_is_consistent() {
        command().debug_assert();
        lenient_command().debug_assert();
    }
}
