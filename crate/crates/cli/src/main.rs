//! `mmda`: the direct assessment pipeline from corpus to report.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmda_core::hitgen::Condition;

use crate::config::{FileConfig, Settings};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "mmda", version, about = "Direct assessment campaigns for machine translation, text-only and spoken")]
struct Cli {
    /// TOML config file; flags override it, it overrides built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Root seed from which sampling, hitgen and simulation seeds derive.
    #[arg(long, global = true)]
    root_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a test set and system outputs and copy them into the workdir.
    Ingest(IngestArgs),
    /// Draw a domain-balanced, document-preserving sample.
    Sample(SampleArgs),
    /// Pack sampled segments into HITs with quality-control items.
    BuildHits(BuildHitsArgs),
    /// Render audio for a multimodal campaign.
    SynthAudio(SynthArgs),
    /// Run the HTTP campaign service.
    Serve(ServeArgs),
    /// Generate sessions from simulated annotator personas.
    SimulateWorkers(SimulateArgs),
    /// Quality control: reliability test, heuristics, standardization.
    Filter(FilterArgs),
    /// Per-system scores and ranking.
    Rank(CampaignArgs),
    /// Pairwise significance matrix.
    Sigtest(SigtestArgs),
    /// Correlate two campaigns' system scores.
    ReplicateCompare(ReplicateArgs),
    /// Write the full report bundle.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, conflicts_with = "synthetic_systems")]
    testset: Option<PathBuf>,
    /// Directory of `<system>.tsv` files.
    #[arg(long, conflicts_with = "synthetic_systems")]
    outputs: Option<PathBuf>,
    /// Generate a WMT-shaped synthetic corpus with this many systems instead.
    #[arg(long)]
    synthetic_systems: Option<usize>,
    /// Quality gap between adjacent synthetic systems.
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BuildHitsArgs {
    #[arg(long)]
    condition: Condition,
    /// Defaults to the condition name.
    #[arg(long)]
    campaign: Option<String>,
    #[arg(long)]
    qc_ratio: Option<f64>,
    #[arg(long)]
    hit_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "multimodal")]
    campaign: String,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    voice: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    lease_ms: Option<u64>,
    /// Prebuilt annotator UI served under /ui/.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    campaign: String,
    #[arg(long, default_value_t = 0)]
    reliable: usize,
    #[arg(long, default_value_t = 0)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    constant: usize,
    #[arg(long)]
    hits_per_worker: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    campaign: String,
    #[arg(long)]
    alpha: Option<f64>,
    /// JSON map of worker id to {verdict, reason}.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[arg(long)]
    campaign: String,
}

#[derive(Debug, Args)]
struct SigtestArgs {
    #[arg(long)]
    campaign: String,
    /// Star thresholds, e.g. 0.05,0.01,0.001.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Campaigns to include; all filtered campaigns when omitted.
    #[arg(long)]
    campaign: Vec<String>,
}

fn settings(cli: &Cli, patch: impl FnOnce(&mut FileConfig)) -> CliResult<Settings> {
    let mut file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(w) = &cli.workdir {
        file.paths.workdir = Some(w.clone());
    }
    if let Some(s) = cli.root_seed {
        file.run.seed = Some(s);
    }
    patch(&mut file);
    Settings::resolve(file)
}

fn run(cli: Cli) -> CliResult<()> {
    use commands as c;
    match &cli.command {
        Command::Ingest(a) => {
            let s = settings(&cli, |f| {
                if a.testset.is_some() {
                    f.paths.testset = a.testset.clone();
                }
                if a.outputs.is_some() {
                    f.paths.outputs = a.outputs.clone();
                }
                if a.spacing.is_some() {
                    f.simulation.quality_spacing = a.spacing;
                }
            })?;
            c::ingest(&s, a.synthetic_systems)
        }
        Command::Sample(a) => {
            let s = settings(&cli, |f| {
                f.sampling.target = a.target.or(f.sampling.target);
                f.sampling.seed = a.seed.or(f.sampling.seed);
            })?;
            c::sample(&s)
        }
        Command::BuildHits(a) => {
            let s = settings(&cli, |f| {
                f.hitgen.qc_ratio = a.qc_ratio.or(f.hitgen.qc_ratio);
                f.hitgen.hit_size = a.hit_size.or(f.hitgen.hit_size);
                f.hitgen.seed = a.seed.or(f.hitgen.seed);
            })?;
            let campaign = a.campaign.clone().unwrap_or_else(|| a.condition.as_str().to_string());
            c::build_hits(&s, a.condition, &campaign)
        }
        Command::SynthAudio(a) => {
            let s = settings(&cli, |f| {
                f.tts.provider = a.provider.clone().or(f.tts.provider.take());
                f.tts.voice = a.voice.clone().or(f.tts.voice.take());
                f.tts.endpoint = a.endpoint.clone().or(f.tts.endpoint.take());
                f.tts.parallelism = a.parallelism.or(f.tts.parallelism);
            })?;
            c::synth_audio(&s, &a.campaign)
        }
        Command::Serve(a) => {
            let s = settings(&cli, |f| {
                f.service.bind = a.bind.clone().or(f.service.bind.take());
                f.service.port = a.port.or(f.service.port);
                f.service.lease_ms = a.lease_ms.or(f.service.lease_ms);
            })?;
            c::serve(&s, a.static_dir.as_deref())
        }
        Command::SimulateWorkers(a) => {
            let s = settings(&cli, |f| {
                f.simulation.seed = a.seed.or(f.simulation.seed);
                f.simulation.noise_sd = a.noise_sd.or(f.simulation.noise_sd);
                f.simulation.hits_per_worker = a.hits_per_worker.or(f.simulation.hits_per_worker);
            })?;
            c::simulate_workers(&s, &a.campaign, a.reliable, a.random, a.constant)
        }
        Command::Filter(a) => {
            let s = settings(&cli, |f| f.qc.alpha = a.alpha.or(f.qc.alpha))?;
            c::filter(&s, &a.campaign, a.overrides.as_deref())
        }
        Command::Rank(a) => c::rank(&settings(&cli, |_| {})?, &a.campaign),
        Command::Sigtest(a) => c::sigtest(&settings(&cli, |_| {})?, &a.campaign, a.levels.as_deref()),
        Command::ReplicateCompare(a) => c::replicate_compare(&settings(&cli, |_| {})?, &a.a, &a.b),
        Command::Report(a) => c::report(&settings(&cli, |_| {})?, &a.campaign),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mmda: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
