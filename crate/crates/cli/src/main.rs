use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divrank_cli::commands::{
    cmd_cluster, cmd_eval, cmd_rerank, cmd_sweep, cmd_synth, cmd_train, RerankArgs, SweepArgs, TrainSettings,
};
use divrank_cli::exit_code;
use divrank_cli::synth::SyntheticSpec;
use divrank_core::data::validate_config;
use divrank_core::{ExperimentConfig, Result};

#[derive(Parser, Debug)]
#[command(name = "divrank", version, about = "Diversity-aware re-ranking pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML file with experiment hyperparameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage derives its own from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Write each user's kernel matrix as CSV
    #[arg(long, global = true)]
    dump_kernel: bool,
    /// Seed the first pick by the diversity term alone
    #[arg(long, global = true)]
    paper_literal_init: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world
    Synth(SynthArgs),
    /// Cluster the user–item history graph
    Cluster {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        behaviors: PathBuf,
    },
    /// Train interest extraction and the context-aware scorer
    TrainCae {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        behaviors: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, default_value_t = TrainSettings::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainSettings::default().lr)]
        lr: f64,
    },
    /// Re-rank every candidate list
    Rerank {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Score re-ranked lists against labels
    Eval {
        #[arg(long)]
        rerank: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        items: PathBuf,
    },
    /// Accuracy–diversity sweep over α for BS-DPP, fixed-score DPP and MMR
    Sweep {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1,2,4")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Also write per-method wall time
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = SyntheticSpec::default().clusters)]
    clusters: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().items_per_cluster)]
    items_per_cluster: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().users)]
    users: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().behaviors_per_user)]
    behaviors_per_user: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().impressions_per_user)]
    impressions_per_user: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().candidates_per_user)]
    candidates_per_user: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().sharpness)]
    sharpness: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().score_noise)]
    score_noise: f64,
}

impl SynthArgs {
    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            clusters: self.clusters,
            items_per_cluster: self.items_per_cluster,
            dim: self.dim,
            noise: self.noise,
            users: self.users,
            behaviors_per_user: self.behaviors_per_user,
            impressions_per_user: self.impressions_per_user,
            candidates_per_user: self.candidates_per_user,
            sharpness: self.sharpness,
            score_noise: self.score_noise,
            seed,
        }
    }
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = g.alpha {
        cfg.alpha = a;
    }
    if let Some(k) = g.k {
        cfg.k = k;
    }
    cfg.paper_literal_init |= g.paper_literal_init;
    validate_config(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = config(g)?;
    let out: &Path = &g.out;
    match cli.command {
        Command::Synth(args) => cmd_synth(&args.spec(g.seed), out),
        Command::Cluster { items, behaviors } => {
            let s = cmd_cluster(&items, &behaviors, g.seed, out)?;
            eprintln!("{} clusters, modularity {:.4}", s.clusters, s.modularity);
            Ok(())
        }
        Command::TrainCae {
            items,
            behaviors,
            clusters,
            epochs,
            lr,
        } => {
            let curve = cmd_train(
                &items,
                &behaviors,
                &clusters,
                &cfg,
                &TrainSettings { lr, epochs },
                g.seed,
                out,
            )?;
            if let Some(last) = curve.last() {
                eprintln!("epoch {}: loss {:.4}, auc {:.4}", last.epoch, last.loss, last.auc);
            }
            Ok(())
        }
        Command::Rerank {
            candidates,
            profiles,
            params,
        } => {
            let args = RerankArgs {
                candidates,
                profiles,
                params,
                dump_kernel: g.dump_kernel,
            };
            let results = cmd_rerank(&args, &cfg, out)?;
            let truncated = results.iter().filter(|r| r.truncated).count();
            eprintln!("re-ranked {} lists ({truncated} truncated)", results.len());
            Ok(())
        }
        Command::Eval { rerank, labels, items } => {
            for r in cmd_eval(&rerank, &labels, &items, cfg.k, out)? {
                println!("{}@{} = {:.4}", r.metric, r.k, r.value);
            }
            Ok(())
        }
        Command::Sweep {
            candidates,
            labels,
            profiles,
            params,
            alphas,
            runs,
            timing,
        } => {
            let args = SweepArgs {
                candidates,
                labels,
                profiles,
                params,
                alphas,
                runs,
                timing,
            };
            cmd_sweep(&args, &cfg, g.seed, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
