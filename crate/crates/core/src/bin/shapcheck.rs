use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shapcheck::bridge::{ImageMaskPolicy, MaskPolicy, TilingConfig};
use shapcheck::ccshap::Similarity;
use shapcheck::mmshap::{score_episode, AggregationMode};
use shapcheck::runner::{self, open_backend, BackendSpec, HeatmapData, RunConfig, RunMeasure, RunOutput};
use shapcheck::shapley::{attribute, ShapleyConfig, DEFAULT_BUDGET};
use shapcheck::tasks::TaskSetting;
use shapcheck::{Bridge, Error, MeasureKind, Result, Session};

#[derive(Parser)]
#[command(name = "shapcheck", version, about = "Modality attribution and self-consistency checks for vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// mock:linear, mock:scripted, mock:textonly, bridge[:command] or tcp:host:port.
    /// Plain `bridge` runs the command in SHAPCHECK_BRIDGE_CMD.
    #[arg(long, default_value = "mock:linear")]
    backend: BackendSpec,
    /// Model file for the mock backends.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, default_value = "zeros")]
    image_mask: ImageMaskPolicy,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    /// Coalition budget; exact enumeration when 2^p fits.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed patch grid side; negotiated from the prompt length by default.
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long, default_value = "ratio")]
    agg_mode: AggregationMode,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// JSONL manifest of foil or question-answer samples.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "pairwise")]
    setting: TaskSetting,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[arg(long, default_value_t = runner::DEFAULT_LIMIT)]
    limit: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write per-sample SVG heatmaps.
    #[arg(long)]
    heatmaps: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Recompute everything instead of reusing records on disk.
    #[arg(long)]
    fresh: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CcMode {
    Posthoc,
    Cot,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute one generation to prompt words and image patches.
    Attribute {
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        image: String,
        #[arg(long, default_value_t = 12)]
        max_tokens: usize,
        /// Also write an SVG heatmap here.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// T-SHAP / V-SHAP over a manifest.
    Mmshap(RunArgs),
    /// CC-SHAP self-consistency over a manifest.
    Ccshap {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "both")]
        mode: CcMode,
        #[arg(long, default_value = "cosine")]
        similarity: Similarity,
    },
    /// Edit-based self-consistency tests over a manifest.
    Tests {
        #[command(flatten)]
        run: RunArgs,
        /// Tests to run (default: all six).
        #[arg(long = "test", value_parser = parse_edit_test)]
        tests: Vec<MeasureKind>,
        #[arg(long, default_value_t = shapcheck::consistency::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: usize,
        /// Directory with replacement word lists.
        #[arg(long)]
        words: Option<PathBuf>,
    },
    /// Foil-benchmark accuracy metrics over a manifest.
    Bench(RunArgs),
    /// Rebuild the summary of a finished run.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        heatmaps: bool,
    },
    /// Answer protocol requests for a mock backend on stdin/stdout until end of input.
    ServeMock {
        #[command(flatten)]
        backend: BackendArgs,
    },
}

fn parse_edit_test(s: &str) -> Result<MeasureKind> {
    match s.parse::<RunMeasure>()? {
        RunMeasure::Consistency(k) if !k.is_cc_shap() => Ok(k),
        _ => Err(Error::invalid(format!("{s:?} is not an edit test"))),
    }
}

fn config(args: RunArgs, measures: Vec<RunMeasure>) -> RunConfig {
    let mut c = RunConfig::new(args.backend.backend, args.manifest, args.out);
    c.fixture = args.backend.fixture;
    c.image_mask = args.backend.image_mask;
    c.setting = args.setting;
    c.measures = measures;
    c.budget = args.estimator.budget;
    c.seed = args.estimator.seed;
    c.patches = args.estimator.patches;
    c.agg_mode = args.estimator.agg_mode;
    c.repeat = args.repeat;
    c.limit = args.limit;
    c.heatmaps = args.heatmaps;
    c.workers = args.workers;
    c.fresh = args.fresh;
    c
}

fn report_run(out: &RunOutput) {
    println!("records  {}", out.records.display());
    println!("summary  {}", out.summary.display());
    println!("meta     {}", out.meta.display());
    if !out.heatmaps.is_empty() {
        println!("heatmaps {}", out.heatmaps.len());
    }
    println!("computed {}  reused {}  failed {}", out.computed, out.reused, out.failed);
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
}

fn bridge(args: &BackendArgs) -> Result<Bridge> {
    let backend = open_backend(&args.backend, args.fixture.as_deref())?;
    let bridge = Bridge::new(backend).with_mask_policy(MaskPolicy {
        image: args.image_mask,
        ..MaskPolicy::default()
    });
    bridge
        .handshake()
        .map_err(|e| Error::BackendLaunch(format!("handshake with {} failed: {e}", args.backend)))?;
    Ok(bridge)
}

fn attribute_one(
    backend: BackendArgs,
    est: EstimatorArgs,
    prompt: String,
    image: String,
    max_tokens: usize,
    heatmap: Option<PathBuf>,
) -> Result<()> {
    let bridge = bridge(&backend)?;
    let mut session = Session::new(&bridge);
    session.shapley = ShapleyConfig {
        budget: est.budget,
        seed: est.seed,
    };
    if let Some(side) = est.patches {
        session.tiling = TilingConfig::fixed(side);
    }
    session.agg_mode = est.agg_mode;
    let generation = session.generate(&prompt, &image, max_tokens, None)?;
    let episode = session.episode(&generation, &image)?;
    let attribution = attribute(&episode, &bridge, &session.shapley)?;
    let (agg, score) = score_episode(&attribution.matrix, &episode.input, session.agg_mode)?;
    let n_text = episode.input.text_len();
    if let Some(path) = heatmap {
        runner::write_heatmap(
            &HeatmapData {
                title: prompt.clone(),
                tokens: episode.input.surfaces(),
                text_values: agg.phi_bar[..n_text].to_vec(),
                grid_side: episode.input.grid_side(),
                patch_values: agg.phi_bar[n_text..].to_vec(),
            },
            &path,
        )?;
    }
    let out = serde_json::json!({
        "prompt": prompt,
        "output_tokens": episode.output_tokens,
        "text_tokens": episode.input.surfaces(),
        "grid_side": episode.input.grid_side(),
        "attribution": attribution.matrix,
        "aggregated": agg.phi_bar,
        "score": score,
        "provenance": attribution.provenance,
    });
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn serve_mock(args: BackendArgs) -> Result<()> {
    match args.backend {
        BackendSpec::MockLinear | BackendSpec::MockScripted | BackendSpec::MockTextOnly => {}
        other => return Err(Error::invalid(format!("serve-mock needs a mock backend, not {other}"))),
    }
    let backend = open_backend(&args.backend, args.fixture.as_deref())?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    shapcheck::bridge::serve(backend.as_ref(), stdin, stdout)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Attribute {
            backend,
            estimator,
            prompt,
            image,
            max_tokens,
            heatmap,
        } => attribute_one(backend, estimator, prompt, image, max_tokens, heatmap),
        Command::Mmshap(run) => {
            report_run(&runner::run(&config(run, vec![RunMeasure::MmShap]))?);
            Ok(())
        }
        Command::Ccshap { run, mode, similarity } => {
            let measures = match mode {
                CcMode::Posthoc => vec![RunMeasure::Consistency(MeasureKind::CcShapPosthoc)],
                CcMode::Cot => vec![RunMeasure::Consistency(MeasureKind::CcShapCot)],
                CcMode::Both => vec![
                    RunMeasure::Consistency(MeasureKind::CcShapPosthoc),
                    RunMeasure::Consistency(MeasureKind::CcShapCot),
                ],
            };
            let mut c = config(run, measures);
            c.similarity = similarity;
            report_run(&runner::run(&c)?);
            Ok(())
        }
        Command::Tests {
            run,
            tests,
            max_attempts,
            words,
        } => {
            let measures = if tests.is_empty() {
                RunMeasure::edit_tests()
            } else {
                tests.into_iter().map(RunMeasure::Consistency).collect()
            };
            let mut c = config(run, measures);
            c.max_attempts = max_attempts;
            c.words_dir = words;
            report_run(&runner::run(&c)?);
            Ok(())
        }
        Command::Bench(run) => {
            report_run(&runner::run(&config(run, vec![RunMeasure::Metrics]))?);
            Ok(())
        }
        Command::Report { out, heatmaps } => {
            let (summary, svgs) = runner::report(&out, heatmaps)?;
            println!("summary  {}", summary.display());
            if heatmaps {
                println!("heatmaps {}", svgs.len());
            }
            Ok(())
        }
        Command::ServeMock { backend } => serve_mock(backend),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
