//! Command-line surface: corpus synthesis, training, enhancement,
//! evaluation, and figure emission.
//!
//! Every command reads an optional JSON settings file, applies dotted-key
//! `--set` overrides, then applies dedicated flags, and echoes the
//! effective settings into the output directory so a run is reproducible
//! from its artifacts alone. Exit codes: 0 success, 1 input error,
//! 2 numeric failure, 64 usage.

mod figures;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::{
    generate_demo_corpus, list_wavs, synthesize_corpus, validate_manifest,
    validate_manifest_entries, CorpusManifest, DemoSpec, Split, SplitMode, SynthesisOptions,
    UtteranceRecord, MANIFEST_NAME,
};
use crate::dsp::{read_wav, write_wav, StftConfig, Waveform};
use crate::metrics::{
    evaluate_pairs, CompositeCoefficients, EvalOptions, EvalUtterance, PesqSource,
};
use crate::models::load_checkpoint;
use crate::training::{self, Enhancer, TrainConfig, TrainError, TrainMode};

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => input(e),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "nitcg",
    version,
    about = "Noise-informed CycleGAN speech enhancement toolkit",
    after_help = "Settings precedence: --config file, then --set overrides, then dedicated flags.\n\
                  NITCG_THREADS caps worker threads for synthesis and evaluation."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mix clean and noise recordings into a noisy corpus with a manifest
    SynthData(SynthArgs),
    /// Train the cycle-consistent enhancement models on a manifest
    Train(TrainArgs),
    /// Run the noisy-to-clean generator over WAV files
    Enhance(EnhanceArgs),
    /// Score enhanced audio against its clean references
    Eval(EvalArgs),
    /// Turn evaluation tables into grouped-bar CSV and SVG figures
    Plot(PlotArgs),
}

/// Entry point for the binary; parses, dispatches, and maps errors to
/// exit codes. Help and version requests exit 0, parse errors exit 64.
pub fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => match dispatch(cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.code())
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData(args) => cmd_synth_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Enhance(args) => cmd_enhance(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

/// Worker-thread budget: NITCG_THREADS when set, else capped parallelism.
fn worker_threads() -> Result<usize> {
    match std::env::var("NITCG_THREADS") {
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8)),
        Ok(raw) => raw.trim().parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::Input(format!("NITCG_THREADS must be a positive integer, got {raw:?}"))
        }),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Set one dotted key in a JSON tree. The value text is parsed as JSON
/// when possible and falls back to a plain string, so `--set seed=7` and
/// `--set mode=nit` both do the obvious thing.
fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, text) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let mut node = &mut *root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("--set {key}: {part} is not an object")))?
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    let leaf: serde_json::Value =
        serde_json::from_str(text).unwrap_or_else(|_| serde_json::Value::String(text.to_string()));
    node.as_object_mut()
        .ok_or_else(|| CliError::Input(format!("--set {key}: parent is not an object")))?
        .insert(parts.last().expect("split yields at least one part").to_string(), leaf);
    Ok(())
}

/// Merge config file and --set overrides into a settings value. Unknown
/// keys are rejected by the target type's deserializer.
fn load_settings<T: DeserializeOwned + Default>(
    config: Option<&Path>,
    sets: &[String],
) -> Result<T> {
    let mut value = match config {
        None => serde_json::json!({}),
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
    };
    for assignment in sets {
        apply_override(&mut value, assignment)?;
    }
    serde_json::from_value(value).map_err(input)
}

fn echo_settings<T: Serialize>(settings: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(settings).map_err(input)?;
    write_bytes(path, format!("{text}\n").as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitFlag {
    Paired,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitSelect {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Baseline,
    Nit,
}

#[derive(Debug, Parser)]
struct SynthArgs {
    /// Output directory for the corpus (manifest.jsonl, clean/, noisy/)
    #[arg(long)]
    out: PathBuf,
    /// Directory of clean 16 kHz mono WAV files
    #[arg(long, required_unless_present = "demo")]
    clean: Option<PathBuf>,
    /// Directory of noise WAV files, one per noise type
    #[arg(long, required_unless_present = "demo")]
    noise: Option<PathBuf>,
    /// JSON settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. --set stft.frame_ms=8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Mixing SNRs in dB
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snrs: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    split: Option<SplitFlag>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plan the corpus without reading or writing any audio
    #[arg(long)]
    manifest_only: bool,
    /// Generate a synthetic demo corpus instead of reading input dirs
    #[arg(long)]
    demo: bool,
    #[arg(long, value_name = "N", requires = "demo")]
    demo_clean: Option<usize>,
    #[arg(long, value_name = "N", requires = "demo")]
    demo_noise: Option<usize>,
    #[arg(long, value_name = "SECONDS", requires = "demo")]
    demo_secs: Option<f64>,
}

/// Effective synth-data settings, echoed to `synth_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSettings {
    snrs: Vec<f64>,
    split_mode: SplitMode,
    seed: u64,
    stft: StftConfig,
    manifest_only: bool,
    demo: Option<DemoSpec>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            snrs: vec![-5.0, 0.0, 5.0],
            split_mode: SplitMode::PairedContent,
            seed: 0,
            stft: StftConfig::default(),
            manifest_only: false,
            demo: None,
        }
    }
}

fn cmd_synth_data(args: SynthArgs) -> Result<()> {
    let mut settings: SynthSettings = load_settings(args.config.as_deref(), &args.sets)?;
    if let Some(snrs) = args.snrs {
        settings.snrs = snrs;
    }
    if let Some(split) = args.split {
        settings.split_mode = match split {
            SplitFlag::Paired => SplitMode::PairedContent,
            SplitFlag::Disjoint => SplitMode::DisjointContent,
        };
    }
    if let Some(seed) = args.seed {
        settings.seed = seed;
    }
    if args.manifest_only {
        settings.manifest_only = true;
    }
    if args.demo && settings.demo.is_none() {
        settings.demo = Some(DemoSpec::default());
    }
    if let Some(demo) = settings.demo.as_mut() {
        demo.seed = settings.seed;
        if let Some(n) = args.demo_clean {
            demo.n_clean = n;
        }
        if let Some(n) = args.demo_noise {
            demo.n_noise = n;
        }
        if let Some(secs) = args.demo_secs {
            demo.duration_secs = secs;
        }
    }

    create_dir(&args.out)?;
    echo_settings(&settings, &args.out.join("synth_config.json"))?;

    let (clean_files, noise_files) = match &settings.demo {
        Some(spec) => generate_demo_corpus(&args.out.join("demo-inputs"), spec).map_err(input)?,
        None => {
            let clean_dir = args.clean.expect("clap enforces --clean without --demo");
            let noise_dir = args.noise.expect("clap enforces --noise without --demo");
            (list_wavs(&clean_dir).map_err(input)?, list_wavs(&noise_dir).map_err(input)?)
        }
    };

    let opts = SynthesisOptions {
        snrs: settings.snrs.clone(),
        split_mode: settings.split_mode,
        seed: settings.seed,
        stft: settings.stft,
        render_audio: !settings.manifest_only,
        threads: worker_threads()?,
    };
    let manifest =
        synthesize_corpus(&clean_files, &noise_files, &args.out, &opts).map_err(input)?;
    if settings.manifest_only {
        // The planner itself touches no disk in this mode; the command
        // still persists the plan, which is its whole point here.
        manifest.save(&args.out.join(MANIFEST_NAME)).map_err(input)?;
    }

    let report = if settings.manifest_only {
        validate_manifest_entries(&manifest)
    } else {
        validate_manifest(&manifest)
    };
    if !report.passed() {
        for failure in &report.failures {
            eprintln!("manifest check failed: {failure}");
        }
        return Err(CliError::Input("synthesized manifest failed validation".into()));
    }

    let mut counts: BTreeMap<&str, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    let mut clean_count = 0usize;
    for record in &manifest.records {
        if record.is_clean() {
            clean_count += 1;
        } else if let Some(snr) = record.snr_db {
            let by_snr = counts.entry(record.domain.as_str()).or_default();
            let slot = by_snr.entry(snr.to_bits()).or_insert((snr, 0));
            slot.1 += 1;
        }
    }
    println!("clean utterances: {clean_count}");
    let mut noisy_total = 0usize;
    for (noise, by_snr) in &counts {
        let mut pairs: Vec<&(f64, usize)> = by_snr.values().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (snr, count) in pairs {
            println!("{noise} @ {snr} dB: {count}");
            noisy_total += count;
        }
    }
    println!("noisy utterances: {noisy_total}");
    println!("manifest: {}", args.out.join(MANIFEST_NAME).display());
    Ok(())
}

#[derive(Debug, Parser)]
struct TrainArgs {
    /// Corpus manifest produced by synth-data
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory for checkpoints, losses.csv, and the config echo
    #[arg(long)]
    out: PathBuf,
    /// JSON training configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. --set weights.lambda_cyc=12
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeFlag>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Continue from a checkpoint, keeping step and epoch numbering
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config: TrainConfig = load_settings(args.config.as_deref(), &args.sets)?;
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeFlag::Baseline => TrainMode::Baseline,
            ModeFlag::Nit => TrainMode::Nit,
        };
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.max_steps {
        config.max_steps = Some(steps);
    }
    if let Some(every) = args.checkpoint_every {
        config.checkpoint_every = every;
    }

    let manifest = CorpusManifest::load(&args.manifest).map_err(input)?;
    let outcome = match &args.resume {
        Some(ckpt) => training::resume(&config, &manifest, ckpt, &args.out)?,
        None => training::train(&config, &manifest, &args.out)?,
    };
    println!(
        "trained through epoch {} ({} steps); losses: {}",
        outcome.state.epoch,
        outcome.state.step,
        outcome.csv_path.display()
    );
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}

#[derive(Debug, Parser)]
struct EnhanceArgs {
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input WAV file or directory of WAV files
    #[arg(long)]
    input: PathBuf,
    /// Output directory; each input keeps its file name
    #[arg(long)]
    out: PathBuf,
}

fn cmd_enhance(args: EnhanceArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint).map_err(input)?;
    let enhancer = Enhancer::from_checkpoint(&ckpt)?;
    let inputs = if args.input.is_dir() {
        list_wavs(&args.input).map_err(input)?
    } else {
        vec![args.input.clone()]
    };
    if inputs.is_empty() {
        return Err(CliError::Input(format!("no wav files under {}", args.input.display())));
    }
    create_dir(&args.out)?;
    let mut enhanced = 0usize;
    for path in &inputs {
        let target = args.out.join(path.file_name().expect("wav paths have file names"));
        if target == *path {
            return Err(CliError::Input(format!(
                "{} would overwrite its own input",
                target.display()
            )));
        }
        let result =
            read_wav(path).map_err(TrainError::from).and_then(|wave| enhancer.enhance(&wave));
        match result {
            Ok(wave) => {
                write_wav(&target, &wave).map_err(input)?;
                enhanced += 1;
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    println!("enhanced {enhanced} of {} file(s) into {}", inputs.len(), args.out.display());
    if enhanced == 0 {
        return Err(CliError::Input("every input file failed".into()));
    }
    Ok(())
}

#[derive(Debug, Parser)]
struct EvalArgs {
    /// Corpus manifest with the clean references and noisy originals
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of enhanced WAVs named like the noisy originals
    #[arg(long)]
    enhanced: PathBuf,
    /// Output directory for report CSVs
    #[arg(long)]
    out: PathBuf,
    /// JSON settings file (composite coefficients, split)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Which manifest split to evaluate
    #[arg(long, value_enum)]
    split: Option<SplitSelect>,
    /// External PESQ tool: `<cmd> <clean.wav> <degraded.wav>` prints a score
    #[arg(long, conflicts_with = "pesq_csv")]
    pesq_cmd: Option<String>,
    /// Precomputed PESQ scores as an `id,system,pesq` CSV
    #[arg(long)]
    pesq_csv: Option<PathBuf>,
}

/// Effective eval settings, echoed to `eval_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSettings {
    coefficients: CompositeCoefficients,
    split: Split,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { coefficients: CompositeCoefficients::default(), split: Split::Train }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut settings: EvalSettings = load_settings(args.config.as_deref(), &args.sets)?;
    if let Some(split) = args.split {
        settings.split = match split {
            SplitSelect::Train => Split::Train,
            SplitSelect::Test => Split::Test,
        };
    }
    let manifest = CorpusManifest::load(&args.manifest).map_err(input)?;
    let noisy_records = manifest.noisy_pool(settings.split);
    if noisy_records.is_empty() {
        return Err(CliError::Input(
            "manifest holds no noisy records in the requested split".into(),
        ));
    }
    let clean_by_id: BTreeMap<&str, &UtteranceRecord> =
        manifest.records.iter().filter(|r| r.is_clean()).map(|r| (r.id.as_str(), r)).collect();

    let mut utterances = Vec::new();
    for record in noisy_records {
        match load_triple(&manifest, &clean_by_id, record, &args.enhanced) {
            Ok(utt) => utterances.push(utt),
            Err(reason) => eprintln!("warning: skipping {}: {reason}", record.id),
        }
    }
    if utterances.is_empty() {
        return Err(CliError::Input(
            "no utterance had a readable clean/noisy/enhanced triple".into(),
        ));
    }

    let pesq = match (&args.pesq_cmd, &args.pesq_csv) {
        (Some(cmd), _) => PesqSource::Command(cmd.clone()),
        (None, Some(csv)) => PesqSource::from_csv(csv).map_err(input)?,
        (None, None) => {
            eprintln!("notice: no PESQ provider given; CSIG/CBAK/COVL columns stay empty");
            PesqSource::None
        }
    };

    let options = EvalOptions { coefficients: settings.coefficients, threads: worker_threads()? };
    let report = evaluate_pairs(&utterances, &pesq, &options).map_err(input)?;
    if report.skipped > 0 {
        eprintln!("notice: {} comparison(s) were skipped; see the note column", report.skipped);
    }

    create_dir(&args.out)?;
    echo_settings(&settings, &args.out.join("eval_config.json"))?;
    write_bytes(&args.out.join("eval_per_utterance.csv"), report.per_utterance_csv().as_bytes())?;
    write_bytes(&args.out.join("eval_conditions.csv"), report.conditions_csv().as_bytes())?;
    write_bytes(&args.out.join("eval_tables.csv"), report.tables_csv().as_bytes())?;
    print!("{}", report.tables_csv());
    println!("reports written to {}", args.out.display());
    Ok(())
}

fn load_triple(
    manifest: &CorpusManifest,
    clean_by_id: &BTreeMap<&str, &UtteranceRecord>,
    record: &UtteranceRecord,
    enhanced_dir: &Path,
) -> std::result::Result<EvalUtterance, String> {
    let source_id = record
        .source_clean_id
        .as_deref()
        .ok_or_else(|| "record lacks a clean source".to_string())?;
    let clean_record =
        clean_by_id.get(source_id).ok_or_else(|| format!("clean source {source_id} not found"))?;
    let file_name = Path::new(&record.path)
        .file_name()
        .ok_or_else(|| format!("record path {} has no file name", record.path))?;
    let enhanced_path = enhanced_dir.join(file_name);
    let read = |path: &Path| -> std::result::Result<Waveform, String> {
        read_wav(path).map_err(|e| format!("{}: {e}", path.display()))
    };
    Ok(EvalUtterance {
        id: record.id.clone(),
        noise: record.domain.clone(),
        snr_db: record.snr_db.unwrap_or(0.0),
        clean: read(&manifest.resolve(clean_record))?,
        noisy: read(&manifest.resolve(record))?,
        enhanced: read(&enhanced_path)?,
    })
}

/// Metric selector shared by the plot flag, settings file, and CSV
/// column names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PlotMetric {
    Pesq,
    Csig,
    Cbak,
    Covl,
    SegSnr,
    Llr,
    Wss,
}

impl PlotMetric {
    fn column(self) -> &'static str {
        match self {
            PlotMetric::Pesq => "pesq",
            PlotMetric::Csig => "csig",
            PlotMetric::Cbak => "cbak",
            PlotMetric::Covl => "covl",
            PlotMetric::SegSnr => "seg_snr",
            PlotMetric::Llr => "llr",
            PlotMetric::Wss => "wss",
        }
    }
}

#[derive(Debug, Parser)]
struct PlotArgs {
    /// Per-condition CSV written by eval (eval_conditions.csv)
    #[arg(long)]
    conditions: PathBuf,
    /// Output directory for the figure CSV and SVG
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Metric to plot; defaults to pesq, falling back to seg_snr when no
    /// PESQ scores exist
    #[arg(long, value_enum)]
    metric: Option<PlotMetric>,
}

/// Effective plot settings, echoed to `plot_config.json`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlotSettings {
    metric: Option<PlotMetric>,
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let mut settings: PlotSettings = load_settings(args.config.as_deref(), &args.sets)?;
    if args.metric.is_some() {
        settings.metric = args.metric;
    }
    let rows = figures::parse_conditions_csv(&read_to_string(&args.conditions)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.conditions.display())))?;

    let requested = settings.metric;
    let mut metric = requested.unwrap_or(PlotMetric::Pesq);
    let mut fig = figures::figure_data(&rows, metric.column());
    if !fig.has_values() {
        let fallback = figures::figure_data(&rows, PlotMetric::SegSnr.column());
        if requested.is_none() && fallback.has_values() {
            eprintln!("notice: no PESQ scores in the conditions table; plotting seg_snr instead");
            metric = PlotMetric::SegSnr;
            fig = fallback;
        } else {
            return Err(CliError::Input(format!(
                "conditions table has no {} values to plot",
                metric.column()
            )));
        }
    }

    create_dir(&args.out)?;
    echo_settings(&PlotSettings { metric: Some(metric) }, &args.out.join("plot_config.json"))?;
    let csv_path = args.out.join(format!("plot_{}.csv", metric.column()));
    let svg_path = args.out.join(format!("plot_{}.svg", metric.column()));
    write_bytes(&csv_path, figures::grouped_bar_csv(&fig).as_bytes())?;
    write_bytes(&svg_path, figures::grouped_bar_svg(&fig).as_bytes())?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}
