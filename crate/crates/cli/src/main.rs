use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mpmc_cli::config::{parse_variant, Experiment, ExperimentConfig, FamilySpec};
use mpmc_cli::runner;

#[derive(Parser)]
#[command(name = "mpmc", version, about = "Adaptive mixture importance sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quality of fixed proposals for the bimodal toy target.
    Table1(Overrides),
    /// Outcome counts of repeated adaptation runs for four algorithm variants.
    Table2(Overrides),
    /// Posterior of the probit model on the Pima data.
    Pima(Overrides),
    /// A single adaptation run described by a config file and/or flags.
    Run {
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    components: Option<usize>,
    /// Seeds per proposal (table1) or runs per variant (table2).
    #[arg(long)]
    runs: Option<usize>,
    /// `plain` or `rb`.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<mpmc::Variant>,
    /// Weight of the frozen defensive component.
    #[arg(long, value_name = "ALPHA0")]
    defensive: Option<f64>,
    /// `gauss` or `t:<nu,...>`.
    #[arg(long)]
    family: Option<FamilySpec>,
    /// Probit data CSV (defaults to the bundled Pima data).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f { cfg.$g = v; })* };
        }
        set!(seed => seed, particles => particles, iters => iters, components => components, runs => runs,
             variant => variant, family => family, out => out);
        if self.defensive.is_some() {
            cfg.defensive = self.defensive;
        }
        if self.data.is_some() {
            cfg.data = self.data;
        }
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (mut cfg, overrides) = match cli.command {
        Command::Table1(o) => (ExperimentConfig::defaults(Experiment::Table1), o),
        Command::Table2(o) => (ExperimentConfig::defaults(Experiment::Table2), o),
        Command::Pima(o) => (ExperimentConfig::defaults(Experiment::Pima), o),
        Command::Run { config, overrides } => {
            let cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => ExperimentConfig::defaults(Experiment::Run),
            };
            (cfg, overrides)
        }
    };
    overrides.apply(&mut cfg);
    runner::execute(&cfg)
}
