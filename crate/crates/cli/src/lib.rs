//! `subweave` command line: `run`, `validate`, `eval` and `kb check`.
//!
//! Exit codes: 0 success, 1 pipeline or data error, 2 usage error
//! (including a missing or malformed config file).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use subweave::eval::{bleu, suber_lite, Tokenizer};
use subweave::memory::KnowledgeBase;
use subweave::pipeline::{run_file, PipelineConfig};
use subweave::srt::{parse_srt_with_warnings, validate_timeline_with, SubtitleFile};

#[derive(Debug, Parser)]
#[command(name = "subweave", version, about = "Context-aware subtitling for long videos")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Subtitle and translate a media file.
    Run(RunArgs),
    /// Check an SRT file's timeline.
    Validate {
        srt: PathBuf,
        /// Report gaps at or above this many milliseconds.
        #[arg(long, default_value_t = 0)]
        gap_ms: u64,
    },
    /// Score a hypothesis SRT against a reference SRT.
    Eval(EvalArgs),
    /// Knowledge-base tools.
    Kb {
        #[command(subcommand)]
        command: KbCmd,
    },
}

#[derive(Debug, Subcommand)]
enum KbCmd {
    /// Parse every document under a directory and report term counts.
    Check { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Feature {
    Proofreader,
    DomainMemory,
    Vision,
    Web,
}

#[derive(Debug, Args)]
struct RunArgs {
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long = "src")]
    source_language: Option<String>,
    #[arg(long = "tgt")]
    target_language: Option<String>,
    #[arg(long)]
    instruction: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Disable an agent feature (repeatable).
    #[arg(long, value_enum)]
    without: Vec<Feature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Bleu,
    Suber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TokenizerArg {
    Auto,
    Whitespace,
    Character,
}

impl From<TokenizerArg> for Tokenizer {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Auto => Tokenizer::Auto,
            TokenizerArg::Whitespace => Tokenizer::Whitespace,
            TokenizerArg::Character => Tokenizer::Character,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Bleu)]
    metric: Metric,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Auto)]
    tokenizer: TokenizerArg,
}

enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

fn read_srt(path: &Path) -> anyhow::Result<SubtitleFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (file, warnings) = parse_srt_with_warnings(&text).with_context(|| format!("parsing {}", path.display()))?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(file)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut cfg = PipelineConfig::load(&args.config)
        .map_err(|e| Failure::Usage(anyhow::Error::new(e).context("loading config")))?;
    if let Some(d) = args.domain {
        cfg.job.domain = d;
    }
    if let Some(l) = args.source_language {
        cfg.job.source_language = l;
    }
    if let Some(l) = args.target_language {
        cfg.job.target_language = l;
    }
    if args.instruction.is_some() {
        cfg.job.user_instruction = args.instruction;
    }
    if let Some(o) = args.output {
        cfg.output_dir = std::env::current_dir()?.join(o);
    }
    for f in args.without {
        match f {
            Feature::Proofreader => cfg.features.proofreader = false,
            Feature::DomainMemory => cfg.features.domain_memory = false,
            Feature::Vision => cfg.features.vision = false,
            Feature::Web => cfg.features.web = false,
        }
    }
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;

    let (result, paths) = run_file(&args.input, &cfg)?;
    writeln!(out, "segments: {}", result.records.len())?;
    writeln!(out, "source:   {}", paths.source_srt.display())?;
    writeln!(out, "target:   {}", paths.target_srt.display())?;
    writeln!(out, "report:   {}", paths.report.display())?;
    if let Some(p) = &paths.term_patch {
        writeln!(out, "terms:    {}", p.display())?;
    }
    if let Some(v) = &result.muxed_video_path {
        writeln!(out, "video:    {}", v.display())?;
    }
    if !result.report.warnings.is_empty() {
        writeln!(out, "warnings: {}", result.report.warnings.len())?;
    }
    Ok(0)
}

fn cmd_validate(srt: &Path, gap_ms: u64, out: &mut dyn Write) -> Result<i32, Failure> {
    let file = read_srt(srt)?;
    let report = validate_timeline_with(&file, gap_ms);
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(if report.is_clean() { 0 } else { 1 })
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let hyp = read_srt(&args.hyp)?;
    let reference = read_srt(&args.reference)?;
    let score = match args.metric {
        Metric::Bleu => {
            let text = |f: &SubtitleFile| f.entries().iter().map(|e| e.lines().join(" ")).collect::<Vec<_>>();
            bleu(&text(&hyp), &text(&reference), args.tokenizer.into())?
        }
        Metric::Suber => suber_lite(&hyp, &reference, args.tokenizer.into())?,
    };
    writeln!(out, "{}", serde_json::to_string(&score)?)?;
    Ok(0)
}

fn cmd_kb_check(dir: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Usage(anyhow::anyhow!("{} is not a directory", dir.display())));
    }
    let kb = KnowledgeBase::load(&[dir.to_path_buf()])?;
    for d in kb.docs() {
        writeln!(out, "{}\t{} term(s)\t{}", d.id, d.terms.len(), d.title)?;
    }
    writeln!(out, "{} document(s), {} term(s)", kb.docs().len(), kb.source_terms().len())?;
    Ok(0)
}

/// Parses `argv` (program name first) and runs the command, writing
/// results to `out` and diagnostics to stderr.
pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a, out),
        Cmd::Validate { srt, gap_ms } => cmd_validate(&srt, gap_ms, out),
        Cmd::Eval(a) => cmd_eval(a, out),
        Cmd::Kb {
            command: KbCmd::Check { dir },
        } => cmd_kb_check(&dir, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("see `subweave --help`");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout())
}
