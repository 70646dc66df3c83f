//! Command-line front end: trace generation, exact and sampled detection,
//! profile merging, reporting, and multi-run benches.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::RangedU64ValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wastefinder::classify::{EqualityConfig, PairKind};
use wastefinder::detector::{run_sampled, DetectorConfig};
use wastefinder::gen::{gen_dead_store_loop, gen_silent_call_args, gen_two_pass_scan};
use wastefinder::manifest::RunManifest;
use wastefinder::oracle::detect_exact;
use wastefinder::profile::{compute_metrics, confidence_interval, merge, Profile};
use wastefinder::report::{render_json, render_text};
use wastefinder::trace::{parse_trace, serialize_trace, Trace};

const EXIT_USAGE: u8 = 64;
const EXIT_TRACE: u8 = 65;
const EXIT_IO: u8 = 74;
const EXIT_REPORT_PARSE: u8 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Trace(String),
    Io(String),
    ReportParse(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Trace(_) => EXIT_TRACE,
            CliError::Io(_) => EXIT_IO,
            CliError::ReportParse(_) => EXIT_REPORT_PARSE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Trace(m) | CliError::Io(m) | CliError::ReportParse(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "wastefinder", version, about = "Find wasteful memory operations in access traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    DeadStore,
    SilentStore,
    SilentLoad,
}

impl From<Mode> for PairKind {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::DeadStore => PairKind::DeadStore,
            Mode::SilentStore => PairKind::SilentStore,
            Mode::SilentLoad => PairKind::SilentLoad,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Pattern {
    TwoPassScan,
    DeadStoreLoop,
    SilentCallArgs,
}

impl Pattern {
    fn name(self) -> &'static str {
        match self {
            Pattern::TwoPassScan => "two-pass-scan",
            Pattern::DeadStoreLoop => "dead-store-loop",
            Pattern::SilentCallArgs => "silent-call-args",
        }
    }
}

#[derive(Args, Debug)]
struct DetectionFlags {
    /// Which redundancy kind to detect.
    #[arg(long, value_enum)]
    mode: Mode,
    /// Input trace (JSON Lines).
    #[arg(long)]
    trace: PathBuf,
    /// PMU sampling period in subscribed events.
    #[arg(long, default_value_t = 5_000_000, value_parser = RangedU64ValueParser::<u64>::new().range(1..))]
    period: u64,
    /// Initial sample counter offset.
    #[arg(long, default_value_t = 0)]
    phase: u64,
    /// Debug registers per thread.
    #[arg(long, default_value_t = 4, value_parser = RangedU64ValueParser::<u64>::new().range(1..=16))]
    registers: u64,
    /// Seed for the reservoir replacement decisions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative threshold for floating-point value equality.
    #[arg(long, default_value_t = 0.01)]
    fp_threshold: f64,
}

impl DetectionFlags {
    fn detector_config(&self) -> Result<DetectorConfig, CliError> {
        let equality = EqualityConfig::new(self.fp_threshold)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        DetectorConfig::new(
            self.mode.into(),
            self.period,
            self.phase,
            self.registers as usize,
            self.seed,
            equality,
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }

    fn fill_manifest(&self, manifest: &mut RunManifest) {
        manifest.mode = Some(self.mode.into());
        manifest.trace = Some(self.trace.display().to_string());
        manifest.period = Some(self.period);
        manifest.phase = Some(self.phase);
        manifest.registers = Some(self.registers as usize);
        manifest.seed = Some(self.seed);
        manifest.fp_threshold = Some(self.fp_threshold);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace exhibiting a known inefficiency pattern.
    Gen {
        #[arg(value_enum)]
        pattern: Pattern,
        /// Elements for two-pass-scan, iterations otherwise.
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output trace path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run sampled (or exact) detection over a trace.
    Detect {
        #[command(flatten)]
        flags: DetectionFlags,
        /// Run the exhaustive oracle instead of the sampled pipeline.
        #[arg(long)]
        exact: bool,
        /// Profile output path; defaults to <trace>.<mode>.profile.json.
        #[arg(long)]
        out_profile: Option<PathBuf>,
        /// Text report output path; defaults to <trace>.<mode>.report.txt.
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Pairs to include in the text report.
        #[arg(long, default_value_t = 10, value_parser = RangedU64ValueParser::<u64>::new().range(1..))]
        top: u64,
    },
    /// Render a saved profile against its trace's contexts.
    Report {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = RangedU64ValueParser::<u64>::new().range(1..))]
        top: u64,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Merge profiles of the same kind into one.
    Merge {
        #[arg(short, long)]
        out: PathBuf,
        /// Profile files to merge.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Repeat sampled detection across seeds and report mean +/- CI
    /// against the oracle.
    Bench {
        #[command(flatten)]
        flags: DetectionFlags,
        /// Number of runs; seeds are seed..seed+runs-1.
        #[arg(long, value_parser = RangedU64ValueParser::<u32>::new().range(2..))]
        runs: u32,
    },
}

/// File layout shared by profile outputs: the manifest leads.
#[derive(Serialize)]
struct ProfileFile<'a> {
    manifest: &'a RunManifest,
    profile: &'a Profile,
}

/// Leading record of generated traces; parsers skip it.
#[derive(Serialize)]
struct MetaLine<'a> {
    t: &'static str,
    manifest: &'a RunManifest,
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Trace(format!("{}: {e}", path.display())))?;
    parse_trace(&bytes).map_err(|e| CliError::Trace(format!("{}: {e}", path.display())))
}

fn load_profile(path: &Path) -> Result<(Profile, serde_json::Value), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::ReportParse(format!("{}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::ReportParse(format!("{}: {e}", path.display())))?;
    let profile_value = doc
        .get("profile")
        .cloned()
        .ok_or_else(|| CliError::ReportParse(format!("{}: missing profile field", path.display())))?;
    let profile: Profile = serde_json::from_value(profile_value)
        .map_err(|e| CliError::ReportParse(format!("{}: {e}", path.display())))?;
    Ok((profile, doc))
}

fn cmd_gen(pattern: Pattern, n: u64, seed: u64, out: &Path) -> Result<(), CliError> {
    let trace = match pattern {
        Pattern::TwoPassScan => gen_two_pass_scan(n, seed),
        Pattern::DeadStoreLoop => gen_dead_store_loop(n, seed),
        Pattern::SilentCallArgs => gen_silent_call_args(n, seed),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let mut manifest = RunManifest::new("gen");
    manifest.pattern = Some(pattern.name().to_string());
    manifest.n = Some(n);
    manifest.seed = Some(seed);

    let meta = MetaLine {
        t: "meta",
        manifest: &manifest,
    };
    let mut contents = serde_json::to_string(&meta).expect("manifest serializes");
    contents.push('\n');
    contents.push_str(&serialize_trace(&trace));
    write_atomic(out, &contents)?;
    println!(
        "wrote {} ({} events, {} contexts)",
        out.display(),
        trace.event_count(),
        trace.contexts.len()
    );
    Ok(())
}

fn cmd_detect(
    flags: &DetectionFlags,
    exact: bool,
    out_profile: Option<&Path>,
    out_report: Option<&Path>,
    top: usize,
) -> Result<(), CliError> {
    let cfg = flags.detector_config()?;
    let trace = load_trace(&flags.trace)?;

    let profile = if exact {
        detect_exact(&trace, cfg.kind, cfg.equality).to_profile()
    } else {
        run_sampled(&trace, &cfg)
    };

    let mut manifest = RunManifest::new("detect");
    flags.fill_manifest(&mut manifest);
    manifest.exact = Some(exact);
    manifest.top = Some(top);

    let summary = compute_metrics(&profile);
    let default_profile_path = sibling_path(&flags.trace, cfg.kind, "profile.json");
    let default_report_path = sibling_path(&flags.trace, cfg.kind, "report.txt");
    let profile_path = out_profile.unwrap_or(&default_profile_path);
    let report_path = out_report.unwrap_or(&default_report_path);

    let profile_json = serde_json::to_string(&ProfileFile {
        manifest: &manifest,
        profile: &profile,
    })
    .expect("profile serializes");
    write_atomic(profile_path, &profile_json)?;

    let body = render_text(&summary, &trace.contexts, top)
        .map_err(|e| CliError::Trace(e.to_string()))?;
    let report = format!("{}\n{}", manifest.text_line(), body);
    write_atomic(report_path, &report)?;

    println!(
        "{} program waste fraction: {:.2}%",
        cfg.kind,
        summary.program_fraction * 100.0
    );
    Ok(())
}

fn sibling_path(trace: &Path, kind: PairKind, suffix: &str) -> PathBuf {
    let mut name = trace
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_string());
    name.push_str(&format!(".{kind}.{suffix}"));
    trace.with_file_name(name)
}

fn cmd_report(profile_path: &Path, trace_path: &Path, top: usize, json: bool) -> Result<(), CliError> {
    let (profile, doc) = load_profile(profile_path)?;
    let trace = fs::read(trace_path)
        .map_err(|e| CliError::ReportParse(format!("{}: {e}", trace_path.display())))
        .and_then(|bytes| {
            parse_trace(&bytes)
                .map_err(|e| CliError::ReportParse(format!("{}: {e}", trace_path.display())))
        })?;
    let summary = compute_metrics(&profile);

    let mut manifest = RunManifest::new("report");
    manifest.mode = Some(profile.kind);
    manifest.trace = Some(trace_path.display().to_string());
    manifest.top = Some(top);

    if json {
        let body = render_json(&summary, &trace.contexts)
            .map_err(|e| CliError::ReportParse(e.to_string()))?;
        let wrapped = serde_json::json!({
            "manifest": manifest,
            "source_manifest": doc.get("manifest"),
            "report": serde_json::from_str::<serde_json::Value>(&body).expect("report is JSON"),
        });
        println!("{}", serde_json::to_string(&wrapped).expect("report serializes"));
    } else {
        let body = render_text(&summary, &trace.contexts, top)
            .map_err(|e| CliError::ReportParse(e.to_string()))?;
        println!("{}", manifest.text_line());
        print!("{body}");
    }
    Ok(())
}

fn cmd_merge(out: &Path, inputs: &[PathBuf]) -> Result<(), CliError> {
    let mut profiles = Vec::with_capacity(inputs.len());
    for path in inputs {
        let (profile, _) = load_profile(path).map_err(|e| CliError::Trace(e.message().to_string()))?;
        profiles.push(profile);
    }
    let kind = profiles[0].kind;
    let merged = merge(kind, &profiles).map_err(|e| CliError::Trace(e.to_string()))?;

    let mut manifest = RunManifest::new("merge");
    manifest.mode = Some(kind);

    let json = serde_json::to_string(&ProfileFile {
        manifest: &manifest,
        profile: &merged,
    })
    .expect("profile serializes");
    write_atomic(out, &json)?;
    println!(
        "merged {} profiles into {} ({} pairs)",
        profiles.len(),
        out.display(),
        merged.pairs().len()
    );
    Ok(())
}

fn cmd_bench(flags: &DetectionFlags, runs: u32) -> Result<(), CliError> {
    let cfg = flags.detector_config()?;
    let trace = load_trace(&flags.trace)?;

    let mut manifest = RunManifest::new("bench");
    flags.fill_manifest(&mut manifest);
    manifest.runs = Some(runs);

    let oracle = detect_exact(&trace, cfg.kind, cfg.equality);
    let fractions: Vec<f64> = (0..runs as u64)
        .map(|i| {
            let mut run_cfg = cfg;
            run_cfg.seed = flags.seed.wrapping_add(i);
            run_sampled(&trace, &run_cfg).fraction()
        })
        .collect();
    let (mean, half_width) =
        confidence_interval(&fractions, 1.96).map_err(|e| CliError::Usage(e.to_string()))?;

    println!("{}", manifest.text_line());
    println!("oracle fraction: {}", oracle.fraction());
    println!("sampled mean fraction over {runs} runs: {mean} +/- {half_width} (95% CI)");
    let lo = mean - half_width;
    let hi = mean + half_width;
    println!("ci: [{lo}, {hi}]");
    println!("ci contains oracle: {}", lo <= oracle.fraction() && oracle.fraction() <= hi);
    Ok(())
}

fn configure_workers() -> Result<(), CliError> {
    match std::env::var("WASTEFINDER_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let workers: usize = raw
                .parse()
                .map_err(|_| CliError::Usage(format!("WASTEFINDER_THREADS={raw} is not a number")))?;
            if workers == 0 {
                return Ok(()); // auto
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match cli.command {
        Command::Gen { pattern, n, seed, out } => cmd_gen(pattern, n, seed, &out),
        Command::Detect {
            flags,
            exact,
            out_profile,
            out_report,
            top,
        } => cmd_detect(
            &flags,
            exact,
            out_profile.as_deref(),
            out_report.as_deref(),
            top as usize,
        ),
        Command::Report {
            profile,
            trace,
            top,
            json,
        } => cmd_report(&profile, &trace, top as usize, json),
        Command::Merge { out, inputs } => cmd_merge(&out, &inputs),
        Command::Bench { flags, runs } => cmd_bench(&flags, runs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wastefinder: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
