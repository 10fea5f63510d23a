//! Flag parsing and settings resolution: flags override the TOML config
//! file, which overrides built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use plancode_core::datasets::Format;
use plancode_core::domain::{AgentToggles, PipelineMode, Preset, RunConfig};
use plancode_core::eval::Estimator;

#[derive(Debug, Parser)]
#[command(name = "plancode", version, about = "Plan, code and debug benchmark problems with an LLM")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every problem of a dataset and append run records.
    Run(Box<RunArgs>),
    /// Summarize a run-record file. Never calls a model or runs code.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// normalized | humaneval | mbpp | contest
    #[arg(long)]
    pub format: Option<String>,
    /// mapcoder | direct
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long = "timeout-ms")]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run-record file (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue a run, skipping problems that already have every attempt.
    #[arg(long)]
    pub resume: bool,
    #[arg(long = "disable-agent", value_parser = ["retrieval", "planning", "debugging"])]
    pub disable_agent: Vec<String>,
    /// Directory of prompt templates overriding the builtin ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Seed for the MBPP sample split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated k values for Pass@k, e.g. "1,5".
    #[arg(long = "pass-at")]
    pub pass_at: Option<String>,
    /// plain | unbiased
    #[arg(long)]
    pub estimator: Option<String>,
    /// humaneval | standard; picks the default k and t.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with any of the settings above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON file of canned model responses used instead of a live model.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "base-url")]
    pub base_url: Option<String>,
    /// Sustained model calls per minute across all workers.
    #[arg(long)]
    pub rpm: Option<u32>,
    /// Solution language tag.
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long = "memory-mb")]
    pub memory_mb: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct ReportArgs {
    /// Run-record file written by `plancode run`.
    pub records: PathBuf,
    #[arg(long = "pass-at", default_value = "1")]
    pub pass_at: String,
    #[arg(long, default_value = "plain")]
    pub estimator: String,
    /// Emit the full JSON report instead of the text table.
    #[arg(long)]
    pub json: bool,
}

/// Config-file mirror of [`RunArgs`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub temperature: Option<f64>,
    pub timeout_ms: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: Option<bool>,
    pub disable_agent: Option<Vec<String>>,
    pub templates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub pass_at: Option<String>,
    pub estimator: Option<String>,
    pub preset: Option<String>,
    pub script: Option<PathBuf>,
    pub model: Option<String>,
    pub base_url: Option<String>,
    pub rpm: Option<u32>,
    pub language: Option<String>,
    pub memory_mb: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub dataset: PathBuf,
    pub format: Format,
    pub run: RunConfig,
    pub workers: usize,
    pub out: PathBuf,
    pub resume: bool,
    pub templates: Option<PathBuf>,
    pub seed: u64,
    pub pass_at: Vec<usize>,
    pub estimator: Estimator,
    pub script: Option<PathBuf>,
    pub model: Option<String>,
    pub base_url: Option<String>,
    pub rpm: u32,
    pub language: String,
    pub memory_mb: Option<u64>,
}

impl Settings {
    /// Attempts per problem: the largest requested k.
    pub fn attempts(&self) -> usize {
        self.pass_at.iter().copied().max().unwrap_or(1)
    }
}

pub fn parse_pass_at(s: &str) -> Result<Vec<usize>, String> {
    let mut ks: Vec<usize> = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| format!("bad pass@k value {x:?}"))
        })
        .collect::<Result<_, _>>()?;
    if ks.is_empty() {
        return Err("--pass-at needs at least one k".into());
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

pub fn parse_estimator(s: &str) -> Result<Estimator, String> {
    Estimator::parse(s).ok_or_else(|| format!("unknown estimator {s:?} (plain|unbiased)"))
}

pub fn resolve(args: &RunArgs) -> Result<Settings, String> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    resolve_with(args, file)
}

pub fn resolve_with(args: &RunArgs, file: FileConfig) -> Result<Settings, String> {
    macro_rules! pick {
        ($f:ident) => {
            args.$f.clone().or(file.$f.clone())
        };
    }
    let dataset = pick!(dataset).ok_or("--dataset is required")?;
    let format_name = pick!(format).unwrap_or_else(|| "normalized".into());
    let format = Format::parse(&format_name).ok_or_else(|| format!("unknown format {format_name:?}"))?;
    let preset = match pick!(preset) {
        Some(p) => Preset::parse(&p).ok_or_else(|| format!("unknown preset {p:?}"))?,
        None if format == Format::HumanEvalJsonl => Preset::HumanEval,
        None => Preset::Standard,
    };
    let mut run = RunConfig::preset(preset);
    if let Some(k) = pick!(k) {
        run.k = k;
    }
    if let Some(t) = pick!(t) {
        run.t = t;
    }
    if let Some(x) = pick!(temperature) {
        run.temperature = x;
    }
    if let Some(ms) = pick!(timeout_ms) {
        run.per_test_timeout_ms = ms;
    }
    run.mode = match pick!(mode).as_deref() {
        None | Some("mapcoder") => PipelineMode::MapCoder,
        Some("direct") => PipelineMode::Direct,
        Some(other) => return Err(format!("unknown mode {other:?} (mapcoder|direct)")),
    };
    let disabled = if args.disable_agent.is_empty() {
        file.disable_agent.clone().unwrap_or_default()
    } else {
        args.disable_agent.clone()
    };
    run.agent_toggles = AgentToggles::default();
    for a in &disabled {
        match a.as_str() {
            "retrieval" => run.agent_toggles.retrieval = false,
            "planning" => run.agent_toggles.planning = false,
            "debugging" => run.agent_toggles.debugging = false,
            other => return Err(format!("cannot disable agent {other:?}")),
        }
    }
    run.validate()?;
    let pass_at = parse_pass_at(&pick!(pass_at).unwrap_or_else(|| "1".into()))?;
    let estimator = parse_estimator(&pick!(estimator).unwrap_or_else(|| "plain".into()))?;
    let workers = pick!(workers).unwrap_or(1);
    if workers == 0 {
        return Err("--workers must be at least 1".into());
    }
    Ok(Settings {
        dataset,
        format,
        run,
        workers,
        out: pick!(out).unwrap_or_else(|| PathBuf::from("run.jsonl")),
        resume: args.resume || file.resume.unwrap_or(false),
        templates: pick!(templates),
        seed: pick!(seed).unwrap_or(0),
        pass_at,
        estimator,
        script: pick!(script),
        model: pick!(model),
        base_url: pick!(base_url),
        rpm: pick!(rpm).unwrap_or(60),
        language: pick!(language).unwrap_or_else(|| "python".into()),
        memory_mb: pick!(memory_mb),
    })
}
