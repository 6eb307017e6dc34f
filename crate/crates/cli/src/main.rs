use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use contagion_core::report::{self, PipelineConfig};
use contagion_core::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "contagion", version, about = "Wavelet-quantile contagion detection and channel attribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sub-period names to process
    #[arg(long, value_delimiter = ',')]
    periods: Option<Vec<String>>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load inputs and write aligned returns, channel composites and period sizes
    Ingest(Common),
    /// Stage 1: WQTE tensors, thresholded networks and summaries
    Detect(Common),
    /// Stage 2: structural channel attribution for detected links
    Attribute(Common),
    /// Both stages, network analysis and the run manifest
    Pipeline(Common),
    /// Write a synthetic fixture (prices, channels, classes, config)
    Synth(Common),
    /// Print the headline tables of an output directory
    Report(Common),
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let path = common.config.as_ref().context("--config is required")?;
    let mut cfg = PipelineConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&PipelineConfig>) -> Result<PathBuf> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    match cfg.and_then(|c| c.output_dir.as_ref().map(|p| c.resolve(p))) {
        Some(p) => Ok(p),
        None => bail!("no output directory: pass --out or set output_dir in the config"),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
        None => f(),
    }
}

fn announce(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, Some(&cfg))?;
            let inputs = with_threads(c.threads, || Ok(report::load_inputs(&cfg)?))?;
            announce(&report::write_inputs(&out, &inputs)?);
        }
        Command::Detect(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, Some(&cfg))?;
            let detection = with_threads(c.threads, || {
                let inputs = report::load_inputs(&cfg)?;
                Ok(report::run_detection(&cfg, &inputs, c.periods.as_deref())?)
            })?;
            fs::create_dir_all(&out)?;
            announce(&report::write_detection(&out, &detection)?);
        }
        Command::Attribute(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, Some(&cfg))?;
            let periods = with_threads(c.threads, || {
                let inputs = report::load_inputs(&cfg)?;
                let detection = report::run_detection(&cfg, &inputs, c.periods.as_deref())?;
                Ok(report::run_attribution(&cfg, &inputs, &detection)?)
            })?;
            fs::create_dir_all(&out)?;
            announce(&report::write_attribution(&out, &cfg, &periods)?);
        }
        Command::Pipeline(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, Some(&cfg))?;
            let rep = with_threads(c.threads, || Ok(report::run_pipeline(&cfg, c.periods.as_deref())?))?;
            for n in rep.notices() {
                log::warn!("{n}");
            }
            announce(&report::write_report(&out, &cfg, &rep)?);
        }
        Command::Synth(c) => {
            let mut cfg = match &c.config {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            let out = c.out.clone().context("--out is required")?;
            synth::write_fixture(&out, &cfg)?;
            for f in ["prices.csv", "channels.csv", "classes.csv", "config.json"] {
                println!("{}", out.join(f).display());
            }
        }
        Command::Report(c) => {
            let cfg = c.config.as_ref().map(|_| load_config(&c)).transpose()?;
            let out = out_dir(&c, cfg.as_ref())?;
            if let Some(cfg) = &cfg {
                let rep = with_threads(c.threads, || Ok(report::run_pipeline(cfg, c.periods.as_deref())?))?;
                report::write_report(&out, cfg, &rep)?;
            }
            print_report(&out)?;
        }
    }
    Ok(())
}

fn print_table(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0; width];
    for r in &rows {
        for (i, cell) in r.iter().enumerate() {
            widths[i] = widths[i].max(cell.len().min(12));
        }
    }
    println!("{}", path.file_name().unwrap_or_default().to_string_lossy());
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let c = if c.len() > 12 { &c[..12] } else { c };
                format!("{c:<w$}", w = widths[i])
            })
            .collect();
        println!("  {}", line.join("  ").trim_end());
    }
    println!();
    Ok(())
}

fn print_report(dir: &Path) -> Result<()> {
    if !dir.join("stage1_summary.csv").exists() {
        bail!("{} does not contain pipeline output", dir.display());
    }
    for name in ["stage1_summary.csv", "shares_iv.csv", "diagnostics.csv", "identification_status.csv"] {
        let p = dir.join(name);
        if p.exists() {
            print_table(&p)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
