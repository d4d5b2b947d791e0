use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use leaklab::dataset::{generate, index_by_id, ingest_manifest, write_manifest, GeneratorConfig};
use leaklab::harness::{run_matrix, summarize, write_outputs, HarnessConfig, ProtocolId};
use leaklab::report::{render_table, write_report, TableFormat};
use leaklab::splitter::{audit, audit_lists, split_clean, split_ft_leaky, SplitOptions, SplitPlan};
use leaklab::cache::FeatureCache;

#[derive(Parser)]
#[command(name = "leaklab", version, about = "Split-protocol leakage experiments for two-stage video quality models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as a manifest plus binary frame matrices.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON generator config; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a split plan for a manifest.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pool frames of fine-tuning videos before the train/val split.
        #[arg(long)]
        leaky: bool,
        #[arg(long, default_value_t = 0.2)]
        frame_fraction: f64,
    },
    /// Recompute the leakage flags of a split plan.
    Audit {
        #[arg(long)]
        plan: PathBuf,
        /// Manifest to check frame references against.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the protocol matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one protocol.
        #[arg(long)]
        protocol: Option<ProtocolId>,
        /// Number of random splits.
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
    },
    /// Render the table and figure data of a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "text")]
        format: TableFormat,
    },
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.csv")
    } else {
        data.to_path_buf()
    }
}

fn gen_data(out: &Path, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<GeneratorConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let videos = generate(&cfg)?;
    write_manifest(out, &videos)?;
    fs::write(out.join("generator.json"), serde_json::to_string_pretty(&cfg)?)?;
    println!("wrote {} videos to {}", videos.len(), out.display());
    Ok(())
}

fn split(data: &Path, out: &Path, seed: u64, leaky: bool, frame_fraction: f64) -> Result<()> {
    let videos = ingest_manifest(&manifest_path(data))?;
    let opts = SplitOptions { frame_fraction, ..Default::default() };
    let plan = if leaky { split_ft_leaky(&videos, &opts, seed)? } else { split_clean(&videos, &opts, seed)? };
    fs::write(out, plan.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "train {} / val {} / test {} videos, {} + {} frames -> {}",
        plan.train_videos.len(),
        plan.val_videos.len(),
        plan.test_videos.len(),
        plan.train_frames.len(),
        plan.val_frames.len(),
        out.display()
    );
    Ok(())
}

fn run_audit(plan_path: &Path, data: Option<&Path>) -> Result<bool> {
    let text = fs::read_to_string(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let plan = SplitPlan::from_json(&text)?;
    let report = match data {
        Some(d) => {
            let videos = ingest_manifest(&manifest_path(d))?;
            log::debug!("audit against {} videos", index_by_id(&videos).len());
            audit(&plan, &videos)?
        }
        None => audit_lists(&plan),
    };
    println!("{report}");
    Ok(report.flags_consistent())
}

fn run(config: &Path, out: &Path, protocol: Option<ProtocolId>, seeds: Option<usize>, parallel: usize) -> Result<()> {
    let mut cfg = HarnessConfig::load(config)?;
    if let Some(p) = protocol {
        cfg.protocols.ids = vec![p];
    }
    if let Some(n) = seeds {
        cfg.splits.n_splits = n;
    }
    let videos = cfg.load_videos(config.parent())?;
    if videos.is_empty() {
        bail!("dataset is empty");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cache = if cfg.cache { Some(FeatureCache::open(out.join("cache"))?) } else { None };
    let start = Instant::now();
    let output = run_matrix(&videos, &cfg, parallel, cache.as_ref())?;
    write_outputs(out, &output)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    print!("{}", render_table(&summarize(&output.results))?.to_text());
    println!("\n{} runs in {:.1}s -> {}", output.results.len(), start.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData { out, seed, config } => gen_data(&out, seed, config.as_deref()),
        Command::Split { data, out, seed, leaky, frame_fraction } => split(&data, &out, seed, leaky, frame_fraction),
        Command::Audit { plan, data } => match run_audit(&plan, data.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: declared leakage flags do not match the plan");
                std::process::exit(2);
            }
            Err(e) => Err(e),
        },
        Command::Run { config, out, protocol, seeds, parallel } => run(&config, &out, protocol, seeds, parallel),
        Command::Report { input, out, format } => write_report(&input, &out, format).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }).map_err(Into::into),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
