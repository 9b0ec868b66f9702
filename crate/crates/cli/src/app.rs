//! Argument parsing and output formatting for the `gdnn` binary.

use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gdnn_core::TargetKind;

use crate::commands::{cmd_encode, cmd_eval, cmd_gradcheck, cmd_predict, cmd_train};
use crate::config::LoadedConfig;
use crate::error::{CliError, Result};
use crate::import::{import_raw, import_split, ImportOptions};
use crate::sweep::cmd_sweep;

#[derive(Debug, Parser)]
#[command(name = "gdnn", version, about = "Link prediction with distance-encoded message passing")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Use this single seed for target selection and training.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (for `import`, the split directory to write).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Densify node ids and write a split directory.
    Import {
        /// One raw edge list to split.
        #[arg(long, value_name = "FILE", conflicts_with = "split_dir", required_unless_present = "split_dir")]
        edges: Option<PathBuf>,
        /// An existing directory of the five split files to relabel.
        #[arg(long, value_name = "DIR")]
        split_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        valid_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
    },
    /// Select targets and write the distance feature file.
    Encode,
    /// Train every configured seed.
    Train,
    /// Score a checkpoint on the validation and test splits.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Split directory (defaults to the configured one).
        #[arg(long, value_name = "DIR")]
        split: Option<PathBuf>,
    },
    /// Print `u v probability` for each pair in a file.
    Predict {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
    },
    /// Finite-difference check of every gradient on a built-in fixture.
    Gradcheck,
    /// Train over a grid of target counts and strategies.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 32, 128])]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = TargetKind::ALL.map(|k| k.as_str().to_string()))]
        strategies: Vec<String>,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("GDNN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GDNN_THREADS must be a positive integer, got `{value}`")))?;
    // A pool may already exist when running in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let loaded = LoadedConfig::with_overrides(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let say = |out: &mut BufWriter<_>, line: String| writeln!(out, "{line}").map_err(CliError::io("<stdout>".as_ref()));

    match cli.command {
        Command::Import {
            edges,
            split_dir,
            valid_fraction,
            test_fraction,
        } => {
            let dest = match &cli.out {
                Some(_) => loaded.output_dir(),
                None => loaded.split_dir(),
            };
            let summary = match (edges, split_dir) {
                (Some(e), _) => {
                    let options = ImportOptions {
                        seed: cli.seed.unwrap_or(loaded.config.encode.seed),
                        valid_fraction,
                        test_fraction,
                        ..ImportOptions::default()
                    };
                    import_raw(&e, &dest, &options)?
                }
                (None, Some(d)) => import_split(&d, &dest)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            say(
                &mut out,
                format!(
                    "{}: {} nodes, {} train / {} valid / {} test edges, {} negatives",
                    dest.display(),
                    summary.num_nodes,
                    summary.train,
                    summary.valid,
                    summary.test,
                    summary.negatives
                ),
            )?;
        }
        Command::Encode => {
            let (path, f) = cmd_encode(&loaded)?;
            say(&mut out, format!("{}: {} nodes x {} targets", path.display(), f.num_nodes(), f.dim()))?;
        }
        Command::Train => {
            let report = cmd_train(&loaded)?;
            for s in &report.seeds {
                say(
                    &mut out,
                    format!(
                        "seed {}: best epoch {}, valid {:.4}, test {:.4}",
                        s.seed, s.best_epoch, s.valid_hits_at_k, s.test_hits_at_k
                    ),
                )?;
            }
            let a = &report.aggregate;
            let k = loaded.config.train.hits_k;
            say(
                &mut out,
                format!(
                    "valid Hits@{k} {:.4} ± {:.4}, test Hits@{k} {:.4} ± {:.4} over {} seed(s)",
                    a.valid_hits_mean, a.valid_hits_std, a.test_hits_mean, a.test_hits_std, a.num_seeds
                ),
            )?;
        }
        Command::Eval { checkpoint, split } => {
            let line = cmd_eval(&loaded, checkpoint.as_deref(), split.as_deref())?;
            say(&mut out, serde_json::to_string(&line).expect("plain struct"))?;
        }
        Command::Predict { checkpoint, pairs } => {
            for (u, v, p) in cmd_predict(&loaded, checkpoint.as_deref(), &pairs)? {
                say(&mut out, format!("{u} {v} {p}"))?;
            }
        }
        Command::Gradcheck => {
            let cases = cmd_gradcheck()?;
            let mut failed = Vec::new();
            for c in &cases {
                let r = &c.report;
                let (name, index) = r.worst.clone().unwrap_or_default();
                say(
                    &mut out,
                    format!(
                        "{} {:<22} max rel err {:.3e} over {} coords (worst {name}[{index}])",
                        if c.passed() { "PASS" } else { "FAIL" },
                        c.name,
                        r.max_rel_error,
                        r.coordinates
                    ),
                )?;
                if !c.passed() {
                    failed.push(c.name.clone());
                }
            }
            if !failed.is_empty() {
                out.flush().ok();
                return Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))));
            }
        }
        Command::Sweep { ks, strategies } => {
            let strategies = strategies
                .iter()
                .map(|s| s.parse::<TargetKind>())
                .collect::<gdnn_core::Result<Vec<_>>>()?;
            let (path, rows) = cmd_sweep(&loaded, &ks, &strategies)?;
            say(&mut out, format!("{}: {} rows", path.display(), rows.len()))?;
        }
    }
    out.flush().map_err(CliError::io("<stdout>".as_ref()))
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
