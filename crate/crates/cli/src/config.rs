//! Run settings: command-line flags over a JSON config file over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use efold::efold::{DEFAULT_ALPHA, DEFAULT_CONFIDENCE, DEFAULT_E_MIN};
use efold::models::DEFAULT_NEIGHBORS;
use efold::simulator::DEFAULT_PERMUTATIONS;
use efold::EfoldConfig;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_CUTOFF: usize = 10;

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for partition plans and permutation sampling [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of folds [default: 10]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Stopping-criterion sensitivity [default: 0.001]
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Confidence level of the running interval [default: 0.95]
    #[arg(long, global = true)]
    pub confidence: Option<f64>,
    /// Earliest fold at which stopping is allowed [default: 3]
    #[arg(long, global = true)]
    pub e_min: Option<usize>,
    /// NDCG cutoff [default: 10]
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Permutations replayed by `simulate` [default: 5000]
    #[arg(long, global = true)]
    pub perms: Option<usize>,
    /// Directory for generated files [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON file with defaults for any of the above
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub confidence: Option<f64>,
    pub e_min: Option<usize>,
    pub n: Option<usize>,
    pub perms: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub neighbors: Option<usize>,
    pub cache: Option<PathBuf>,
    /// `NAME=PATH` entries, as for `--dataset`.
    #[serde(default)]
    pub datasets: Vec<String>,
    /// Algorithm specs, as for `--algorithm`.
    #[serde(default)]
    pub algorithms: Vec<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub k: usize,
    pub alpha: f64,
    pub confidence: f64,
    pub e_min: usize,
    pub n: usize,
    pub perms: usize,
    pub out_dir: PathBuf,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(flags: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let settings = Self {
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            k: flags.k.or(file.k).unwrap_or(DEFAULT_K),
            alpha: flags.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            confidence: flags
                .confidence
                .or(file.confidence)
                .unwrap_or(DEFAULT_CONFIDENCE),
            e_min: flags.e_min.or(file.e_min).unwrap_or(DEFAULT_E_MIN),
            n: flags.n.or(file.n).unwrap_or(DEFAULT_CUTOFF),
            perms: flags.perms.or(file.perms).unwrap_or(DEFAULT_PERMUTATIONS),
            out_dir: flags
                .out_dir
                .clone()
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(".")),
            file,
        };
        if settings.k < 2 {
            return Err(CliError::Usage(format!(
                "k must be at least 2, got {}",
                settings.k
            )));
        }
        if settings.n < 1 {
            return Err(CliError::Usage("metric cutoff n must be at least 1".into()));
        }
        Ok(settings)
    }

    pub fn efold_config(&self) -> EfoldConfig {
        EfoldConfig {
            alpha: self.alpha,
            confidence_level: self.confidence,
            e_min: self.e_min,
            k_max: self.k,
        }
    }

    pub fn neighbors(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.neighbors).unwrap_or(DEFAULT_NEIGHBORS)
    }

    pub fn metric(&self) -> String {
        efold::metrics::metric_name(self.n)
    }
}
