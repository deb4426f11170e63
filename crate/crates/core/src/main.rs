use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use timerbed::anchors::{builtin_anchor_table, AnchorTable};
use timerbed::config::RunConfig;
use timerbed::eval::{build_report, load_records, write_report, ReportFormat, ReportOptions};
use timerbed::ingest::load_dataset;
use timerbed::llm::build_provider;
use timerbed::prompt::PlanFallback;
use timerbed::runner::{self, PlanOutcome, RunError};
use timerbed::task::{builtin_task_registry, Modeling, ReasoningStrategy, TaskSpec};
use timerbed::viz::{render, Colormap, Domain, ImageDetail, ImageSidecar, ImageTokenRule, RenderConfig};

#[derive(Parser)]
#[command(name = "timerbed", version, about = "Time-series reasoning evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check dataset directories against their manifests.
    Validate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Render samples to PNG with token-estimate sidecars.
    Visualize(VisualizeArgs),
    /// Run the planning stage for a task and store its plan.
    Plan(PlanArgs),
    /// Evaluate every task × provider × strategy × run cell.
    Run(RunArgs),
    /// Aggregate record files into reports.
    Report(ReportArgs),
}

#[derive(Args)]
struct RenderFlags {
    #[arg(long)]
    mode: Option<Domain>,
    #[arg(long)]
    detail: Option<ImageDetail>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    channel: Option<usize>,
    #[arg(long)]
    colormap: Option<Colormap>,
    #[arg(long)]
    no_legend: bool,
    #[arg(long)]
    no_timestamps: bool,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "id", required = true)]
    ids: Vec<String>,
    #[arg(long, default_value = "viz")]
    out: PathBuf,
    #[command(flatten)]
    render: RenderFlags,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    task: String,
    /// Model id of the provider to ask; defaults to the first multimodal one.
    #[arg(long)]
    provider: Option<String>,
    /// Plan JSON or free text to store instead of asking a provider.
    #[arg(long)]
    manual: Option<PathBuf>,
    #[arg(long)]
    fallback: Option<PlanFallback>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<ReasoningStrategy>>,
    #[arg(long)]
    modeling: Option<ModelingArg>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    precision: Option<u8>,
    #[arg(long)]
    retry_cap: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long)]
    skip_planning: bool,
    #[arg(long)]
    no_legend: bool,
    #[arg(long)]
    no_timestamps: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelingArg {
    Numeric,
    Visual,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Run config supplying prices and baselines; defaults to the
    /// `effective_config.json` of the first results directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<ReportFormat>>,
    /// Extra baseline, `method=baseline_method`.
    #[arg(long = "baseline")]
    baselines: Vec<String>,
    #[arg(long)]
    chart: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) | RunError::Ingest { .. } | RunError::MissingPlan(_) | RunError::Prompt(_) => {
                Failure::Validation(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_anchors(path: Option<&Path>) -> Result<AnchorTable, Failure> {
    let table = builtin_anchor_table();
    match path {
        Some(p) => table.with_overrides(p).map_err(validation),
        None => Ok(table),
    }
}

fn cmd_validate(dirs: &[PathBuf]) -> Result<(), Failure> {
    let mut failed = 0;
    for dir in dirs {
        match load_dataset(dir) {
            Ok(ds) => println!("{}", ds.summary()),
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} dataset(s) failed validation")));
    }
    Ok(())
}

fn apply_render_flags(c: &mut RenderConfig, f: &RenderFlags) {
    if let Some(m) = f.mode {
        c.mode = m;
    }
    if let Some(d) = f.detail {
        c.detail = d;
    }
    if let Some(w) = f.width {
        c.width_px = w;
    }
    if let Some(h) = f.height {
        c.height_px = h;
    }
    if f.channel.is_some() {
        c.channel = f.channel;
    }
    if let Some(m) = f.colormap {
        c.colormap = m;
    }
    if f.no_legend {
        c.show_legend = false;
    }
    if f.no_timestamps {
        c.show_timestamps = false;
    }
}

fn cmd_visualize(args: &VisualizeArgs) -> Result<(), Failure> {
    let ds = load_dataset(&args.dataset).map_err(validation)?;
    let mut config = RenderConfig::for_task(&ds.spec);
    apply_render_flags(&mut config, &args.render);
    config.validate().map_err(validation)?;
    fs::create_dir_all(&args.out).map_err(runtime)?;
    let rule = ImageTokenRule::default();
    for id in &args.ids {
        let sample = ds
            .sample(id)
            .ok_or_else(|| Failure::Validation(format!("no sample with id {id}")))?;
        let image = render(sample, &ds.spec, &config).map_err(runtime)?;
        let sidecar = ImageSidecar::new(&image, config.mode, &rule);
        let stem: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let png = args.out.join(format!("{stem}.png"));
        fs::write(&png, &image.png_bytes).map_err(runtime)?;
        let mut meta = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        meta.push('\n');
        fs::write(args.out.join(format!("{stem}.json")), meta).map_err(runtime)?;
        println!(
            "{} {}x{} {} {} tokens={}",
            png.display(),
            sidecar.width,
            sidecar.height,
            sidecar.mode,
            sidecar.detail,
            sidecar.estimated_tokens
        );
    }
    Ok(())
}

fn task_spec(config: &RunConfig, task: &str) -> Result<TaskSpec, Failure> {
    let dir = config.dataset_dir(task);
    if dir.join(timerbed::ingest::MANIFEST_FILE).is_file() {
        return load_dataset(&dir).map(|d| d.spec).map_err(validation);
    }
    builtin_task_registry()
        .remove(task)
        .ok_or_else(|| Failure::Validation(format!("unknown task {task} and no dataset at {}", dir.display())))
}

fn cmd_plan(args: &PlanArgs) -> Result<(), Failure> {
    let (config, _) = RunConfig::load(&args.config).map_err(validation)?;
    let spec = task_spec(&config, &args.task)?;
    let fallback = args.fallback.unwrap_or(config.plan_fallback);
    let outcome = if let Some(manual) = &args.manual {
        let text = fs::read_to_string(manual).map_err(|e| Failure::Validation(format!("{}: {e}", manual.display())))?;
        runner::manual_plan(&spec, &config.plans_dir, &text, fallback, args.force)?
    } else {
        let pcfg = match &args.provider {
            Some(id) => config.providers.iter().find(|p| &p.model_id == id),
            None => config.providers.iter().find(|p| p.multimodal),
        }
        .ok_or_else(|| Failure::Validation("no matching provider in config".into()))?;
        let provider = build_provider(pcfg, Path::new(".")).map_err(validation)?;
        runner::plan_task(&spec, &config.plans_dir, provider.as_ref(), pcfg, fallback, args.force)?
    };
    match outcome {
        PlanOutcome::Existing(path) => println!("plan exists: {} (use --force to replace)", path.display()),
        PlanOutcome::Written(path, stored) => println!(
            "{}: {} domain, hints: {} ({})",
            path.display(),
            stored.plan.domain_choice,
            stored.plan.hints,
            match stored.source {
                timerbed::prompt::PlanSource::Llm => "llm",
                timerbed::prompt::PlanSource::Manual => "manual",
            }
        ),
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let (mut config, raw) = RunConfig::load(&args.config).map_err(validation)?;
    if let Some(t) = &args.tasks {
        config.tasks = t.clone();
    }
    if let Some(s) = &args.strategies {
        config.strategies = s.clone();
    }
    if let Some(m) = args.modeling {
        config.modeling = match m {
            ModelingArg::Numeric => Modeling::Numeric,
            ModelingArg::Visual => Modeling::Visual,
        };
    }
    if let Some(v) = args.runs {
        config.runs = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.per_class {
        config.per_class = v;
    }
    if let Some(v) = args.precision {
        config.precision = v;
    }
    if let Some(v) = args.retry_cap {
        config.answer_retry_cap = v;
    }
    if let Some(v) = args.parallelism {
        config.providers.iter_mut().for_each(|p| p.parallelism = v);
    }
    if let Some(v) = &args.output_dir {
        config.output_dir = v.clone();
    }
    if args.skip_planning {
        config.skip_planning = true;
    }
    if args.no_legend {
        config.render.show_legend = Some(false);
    }
    if args.no_timestamps {
        config.render.show_timestamps = Some(false);
    }
    let anchors = load_anchors(args.anchors.as_deref())?;
    let summary = runner::run(&config, &raw, &anchors)?;
    for c in &summary.cells {
        let status = match &c.error {
            Some(e) => format!("FAILED: {e}"),
            None => "ok".into(),
        };
        println!(
            "{} {} run{}: {} samples ({} resumed, {} abstained) {status}",
            c.cell.task,
            c.cell.method(),
            c.run_index,
            c.samples,
            c.resumed,
            c.abstained
        );
    }
    println!("results: {}", summary.out_dir.display());
    for f in &summary.report_files {
        println!("wrote {}", f.display());
    }
    match summary.failed_cells() {
        0 => Ok(()),
        n => Err(Failure::Runtime(format!("{n} cell(s) failed"))),
    }
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let config = match &args.config {
        Some(p) => Some(RunConfig::load(p).map_err(validation)?.0),
        None => {
            let eff = args.results[0].join("effective_config.json");
            match fs::read_to_string(&eff) {
                Ok(t) => Some(serde_json::from_str::<RunConfig>(&t).map_err(|e| {
                    Failure::Validation(format!("{}: {e}", eff.display()))
                })?),
                Err(_) => None,
            }
        }
    };
    let mut options = config.as_ref().map(runner::report_options).unwrap_or_else(ReportOptions::default);
    for b in &args.baselines {
        let (m, base) = b
            .split_once('=')
            .ok_or_else(|| Failure::Validation(format!("--baseline expects method=baseline, got {b:?}")))?;
        options.baselines.insert(m.to_string(), base.to_string());
    }
    let mut records = Vec::new();
    for dir in &args.results {
        records.extend(load_records(dir).map_err(runtime)?);
    }
    let anchors = load_anchors(args.anchors.as_deref())?;
    let report = build_report(&records, &anchors, &options).map_err(runtime)?;
    let formats = args.format.clone().unwrap_or_else(|| {
        config
            .as_ref()
            .map(|c| c.report.formats.clone())
            .unwrap_or_else(|| vec![ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json])
    });
    let chart = args.chart || config.as_ref().is_some_and(|c| c.report.chart);
    let out = args.out.clone().unwrap_or_else(|| args.results[0].clone());
    for f in write_report(&out, &report, &anchors, &formats, chart).map_err(runtime)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { dirs } => cmd_validate(dirs),
        Command::Visualize(a) => cmd_visualize(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
