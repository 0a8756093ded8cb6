//! The `explainkit` command-line tool.
//!
//! Every subcommand resolves its settings from flags, an optional
//! `--config` file of `key = value` lines, the `EXPLAINKIT_SEED` variable
//! (seed only) and built-in defaults, in that order, and writes the resolved
//! settings to `<out-dir>/<command>.resolved.conf` next to its outputs.

pub mod config;
pub mod reasons;
pub mod svg;

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "explainkit", version, about = "Train and explain tree-ensemble classifiers")]
pub struct Cli {
    /// Settings file of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Seed for every random choice (falls back to EXPLAINKIT_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives every output file.
    #[arg(long, global = true)]
    pub out_dir: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated dataset with four signal and eight noise features.
    Simulate(SimulateArgs),
    /// Train a gradient-boosted model with optional monotone constraints.
    Train(TrainArgs),
    /// Fit a shallow surrogate tree to the model's scores.
    Surrogate(SurrogateArgs),
    /// Partial dependence for one feature, or two with --feature-b.
    Pd(PdArgs),
    /// ICE curves with the partial dependence overlaid.
    Ice(IceArgs),
    /// Sparse local linear explanation of one row.
    Lime(LimeArgs),
    /// Shapley attributions for one row.
    Shap(ShapArgs),
    /// Mean absolute Shapley values over many rows.
    Summary(SummaryArgs),
    /// Reason codes for one row.
    Reasons(ReasonsArgs),
    /// Exact, sampled and path attributions side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub rows: Option<usize>,
    /// Fraction of labels flipped.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// uniform or normal
    #[arg(long)]
    pub distribution: Option<Distribution>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Output CSV (relative paths land in --out-dir).
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: Option<String>,
    /// Label column (default `label`).
    #[arg(long)]
    pub target: Option<String>,
    /// Identifier column to drop.
    #[arg(long)]
    pub id_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct RowArgs {
    /// Zero-based data row to explain.
    #[arg(long)]
    pub row: Option<usize>,
    /// Pick the row at this score percentile instead (default 0.5).
    #[arg(long)]
    pub percentile: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// auto (signs of training correlations) or none
    #[arg(long)]
    pub monotone: Option<Monotone>,
    /// Correlations smaller than this leave a feature unconstrained.
    #[arg(long)]
    pub min_abs_corr: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub colsample: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub early_stopping: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// Model JSON path (metrics go to metrics.json beside it).
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// probability or logodds
    #[arg(long)]
    pub link: Option<Link>,
}

#[derive(Debug, Args)]
pub struct PdArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[arg(long)]
    pub feature: Option<String>,
    /// Second feature for a two-way partial dependence table.
    #[arg(long)]
    pub feature_b: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IceArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Comma-separated rows (default: min, deciles and max of the score).
    #[arg(long)]
    pub rows: Option<String>,
}

#[derive(Debug, Args)]
pub struct LimeArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[command(flatten)]
    pub row: RowArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long)]
    pub target_nonzero: Option<usize>,
    /// Comma-separated feature names to bin.
    #[arg(long)]
    pub discretize: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Re-run with this many derived seeds and report contribution spread.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShapleyArgs {
    /// exact, sampled or path
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// path-dependent or interventional
    #[arg(long)]
    pub marginalization: Option<Marginal>,
    /// Reference rows drawn for interventional marginalization.
    #[arg(long)]
    pub reference_rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShapArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[command(flatten)]
    pub row: RowArgs,
    #[command(flatten)]
    pub shapley: ShapleyArgs,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[command(flatten)]
    pub shapley: ShapleyArgs,
    /// Explain at most this many rows.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReasonsArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[command(flatten)]
    pub row: RowArgs,
    #[command(flatten)]
    pub shapley: ShapleyArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// CSV `feature,value,label` giving text for coded values.
    #[arg(long)]
    pub codebook: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: ModelArgs,
    #[command(flatten)]
    pub row: RowArgs,
    #[arg(long)]
    pub permutations: Option<usize>,
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!(
                        "`{other}` is not one of: {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
    };
}

keyword_enum!(Distribution { Uniform => "uniform", Normal => "normal" });
keyword_enum!(Monotone { Auto => "auto", None => "none" });
keyword_enum!(Link { Probability => "probability", LogOdds => "logodds" });
keyword_enum!(Method { Exact => "exact", Sampled => "sampled", Path => "path" });
keyword_enum!(Marginal { PathDependent => "path-dependent", Interventional => "interventional" });

/// Run the tool on `args` (program name first) and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_round_trip() {
        for m in [Method::Exact, Method::Sampled, Method::Path] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!(" Interventional ".parse::<Marginal>().unwrap(), Marginal::Interventional);
        assert!("often".parse::<Monotone>().is_err());
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["explainkit", "simulate", "--rows", "5", "--seed", "3"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        match cli.command {
            Command::Simulate(a) => assert_eq!(a.rows, Some(5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_subcommand_fails() {
        assert_ne!(run(["explainkit", "explode"]), 0);
        assert_ne!(run(["explainkit", "simulate", "--bogus", "1"]), 0);
    }
}
