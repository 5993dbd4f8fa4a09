use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saa_harness::{run, Command, HarnessConfig, HarnessError, Settings};

/// Experiments for selective aggregation attention.
///
/// Settings come from `--config FILE` (flat `key = value` lines, keys named
/// like the flags) and are overridden by flags. Exit status: 0 on success,
/// 1 when a check fails, 2 on usage, configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "saa", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Cluster tokens; writes assignment.csv and centers.csv to --out.
    Cluster,
    /// Check that keeping every token reproduces vanilla attention.
    Equivalence,
    /// Error and analytic cost across keep ratios and seeds.
    SweepRatio,
    /// Median attention runtime at growing N with fixed K.
    Bench,
    /// Time every method on one input.
    Compare,
}

#[derive(Debug, Args)]
struct Opts {
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Token file (.csv or binary).
    #[arg(long, global = true)]
    input: Option<String>,
    /// Synthetic tokens: N,C,gaussian | N,C,clustered[:GROUPS:SPREAD].
    #[arg(long, global = true, value_name = "N,C,DIST")]
    synthetic: Option<String>,
    /// Feature map shape, used for center coordinates and window attention.
    #[arg(long, global = true, value_name = "HxW")]
    map: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    keep_ratio: Option<String>,
    /// Subsampling factor (sample size = beta * K).
    #[arg(long, global = true)]
    beta: Option<String>,
    /// Aggregation temperature.
    #[arg(long, global = true)]
    tau: Option<String>,
    /// Neighbours used for local density.
    #[arg(long, global = true)]
    m: Option<String>,
    /// Feature norm restoration.
    #[arg(long, global = true, value_name = "on|off")]
    fnr: Option<String>,
    /// Channel scaling ratio; enables channel scaling.
    #[arg(long, global = true)]
    rc: Option<String>,
    /// Head dimension (defaults to C).
    #[arg(long, global = true)]
    d: Option<String>,
    /// Timed repetitions.
    #[arg(long, global = true)]
    reps: Option<String>,
    /// Untimed warm-up runs.
    #[arg(long, global = true)]
    warmup: Option<String>,
    /// Output file (directory for cluster); stdout otherwise.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Token counts, comma separated.
    #[arg(long, global = true)]
    sizes: Option<String>,
    /// Random instances per size (equivalence).
    #[arg(long, global = true)]
    instances: Option<String>,
    /// Keep ratios, comma separated (sweep-ratio).
    #[arg(long, global = true)]
    ratios: Option<String>,
    /// Number of seeds (sweep-ratio).
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Record runtimes in the sweep CSV.
    #[arg(long, global = true, value_name = "on|off")]
    timing: Option<String>,
    /// Fixed cluster count (bench).
    #[arg(long, global = true)]
    k: Option<String>,
    /// Methods, comma separated: dta,dpc_knn,kmeans,vanilla,window.
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Window side for window attention.
    #[arg(long, global = true)]
    window: Option<String>,
    /// K-means iterations.
    #[arg(long, global = true)]
    iters: Option<String>,
}

impl Opts {
    fn settings(self) -> Result<Settings, HarnessError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let flags = [
            ("input", self.input),
            ("synthetic", self.synthetic),
            ("map", self.map),
            ("seed", self.seed),
            ("keep_ratio", self.keep_ratio),
            ("beta", self.beta),
            ("tau", self.tau),
            ("m", self.m),
            ("fnr", self.fnr),
            ("rc", self.rc),
            ("d", self.d),
            ("reps", self.reps),
            ("warmup", self.warmup),
            ("out", self.out),
            ("sizes", self.sizes),
            ("instances", self.instances),
            ("ratios", self.ratios),
            ("seeds", self.seeds),
            ("timing", self.timing),
            ("k", self.k),
            ("methods", self.methods),
            ("window", self.window),
            ("iters", self.iters),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v);
            }
        }
        Ok(s)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Cluster => Command::Cluster,
        Cmd::Equivalence => Command::Equivalence,
        Cmd::SweepRatio => Command::SweepRatio,
        Cmd::Bench => Command::Bench,
        Cmd::Compare => Command::Compare,
    };
    let outcome = cli.opts.settings().and_then(|s| HarnessConfig::resolve(&s)).and_then(|cfg| run(command, &cfg));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("saa: {e}");
            ExitCode::from(2)
        }
    }
}
