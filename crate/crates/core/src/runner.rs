//! Evaluation orchestration: task × provider × strategy × run cells, a bounded
//! worker pool per cell and a single ordered writer per record file.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anchors::AnchorTable;
use crate::config::{ConfigError, RunConfig};
use crate::eval::record::{read_record_file, record_line_json};
use crate::eval::{
    build_report, load_records, parse_answer, write_report, CellKey, EvalError, RecordLine,
    ReportOptions, SampleOutcome,
};
use crate::ingest::{dataset_digest, draw_demo_set, draw_eval_subset, load_dataset, Dataset, IngestError};
use crate::llm::{
    build_provider, query_until_answer, send_with_backoff, Backoff, ChatProvider, LlmError, ProviderConfig,
};
use crate::prompt::{
    build_cot, build_icl, build_planning_prompt, build_solving_prompt, build_zst, load_plan, parse_plan,
    plan_path, save_plan, serialize_numeric, DemoInput, Demos, Part, PlanError, PlanFallback, PlanSource,
    PromptBundle, PromptError, StoredPlan, VisualizationPlan,
};
use crate::rng::derive_seed;
use crate::task::{Modeling, ReasoningStrategy, TaskSpec, TimeSeriesSample};
use crate::viz::{render, Domain, RenderConfig, VizError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task {task}: {source}")]
    Ingest {
        task: String,
        #[source]
        source: IngestError,
    },
    #[error("no visualization plan for task {0}; run `timerbed plan` first (or pass --skip-planning)")]
    MissingPlan(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: CellKey,
    pub run_index: u32,
    pub samples: usize,
    /// Samples already present from an earlier, interrupted execution.
    pub resumed: usize,
    pub abstained: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub out_dir: PathBuf,
    pub cells: Vec<CellSummary>,
    pub report_files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    run_id: &'a str,
    seed: u64,
    dataset_digests: &'a BTreeMap<String, String>,
    plans: BTreeMap<&'a str, &'a VisualizationPlan>,
}

/// Identity of a run: SHA-256 over the configuration (with filesystem paths
/// blanked, so a moved checkout keeps its id), the dataset digests and the
/// plans in use.
pub fn run_id(
    config: &RunConfig,
    digests: &BTreeMap<String, String>,
    plans: &BTreeMap<&str, &VisualizationPlan>,
) -> String {
    let mut c = config.clone();
    c.data_dir = PathBuf::new();
    c.output_dir = PathBuf::new();
    c.plans_dir = PathBuf::new();
    c.datasets.values_mut().for_each(|p| *p = PathBuf::new());
    c.providers.iter_mut().for_each(|p| p.mock_script = None);
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&c).expect("config serializes").as_bytes());
    h.update(serde_json::to_string(digests).expect("digests serialize").as_bytes());
    h.update(serde_json::to_string(plans).expect("plans serialize").as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

struct TaskInput {
    dataset: Dataset,
    plan: Option<VisualizationPlan>,
    render: RenderConfig,
}

fn render_config_for(config: &RunConfig, spec: &TaskSpec, plan: Option<&VisualizationPlan>) -> RenderConfig {
    let mut r = RenderConfig::for_task(spec);
    config.render.apply(&mut r);
    if config.skip_planning {
        r.mode = Domain::Time;
    } else if let Some(p) = plan {
        r.mode = p.domain_choice;
    }
    r
}

fn data_part(
    sample: &TimeSeriesSample,
    input: &TaskInput,
    modeling: Modeling,
    precision: u8,
) -> Result<Part, RunError> {
    Ok(match modeling {
        Modeling::Numeric => Part::Text(serialize_numeric(sample, &input.dataset.spec, precision)?),
        Modeling::Visual => Part::Image(render(sample, &input.dataset.spec, &input.render)?),
    })
}

fn build_bundle(
    sample: &TimeSeriesSample,
    input: &TaskInput,
    cell: &CellKey,
    demos: Option<&Demos>,
    precision: u8,
) -> Result<PromptBundle, RunError> {
    let spec = &input.dataset.spec;
    let target = data_part(sample, input, cell.modeling, precision)?;
    let mut bundle = match (cell.modeling, cell.strategy, &target) {
        (Modeling::Numeric, ReasoningStrategy::Zst, _) => build_zst(&target, spec)?,
        (Modeling::Numeric, ReasoningStrategy::Cot, _) => build_cot(&target, spec)?,
        (Modeling::Numeric, ReasoningStrategy::Icl { .. }, _) => {
            build_icl(demos.expect("demos drawn for icl"), &target, spec)?
        }
        // the solving prompt already carries the step-by-step line, so the
        // zero-shot and chain-of-thought cells send the same request
        (Modeling::Visual, ReasoningStrategy::Zst | ReasoningStrategy::Cot, Part::Image(img)) => {
            let mut b = build_solving_prompt(img, spec, input.plan.as_ref(), None)?;
            b.strategy = cell.strategy;
            b
        }
        (Modeling::Visual, ReasoningStrategy::Icl { .. }, Part::Image(img)) => {
            build_solving_prompt(img, spec, input.plan.as_ref(), demos)?
        }
        (Modeling::Visual, _, Part::Text(_)) => unreachable!("visual parts are images"),
    };
    bundle.target_id = Some(sample.id.clone());
    Ok(bundle)
}

fn outcome_for(
    sample: &TimeSeriesSample,
    input: &TaskInput,
    cell: &CellKey,
    demos: Option<&Demos>,
    config: &RunConfig,
    provider: &dyn ChatProvider,
    pcfg: &ProviderConfig,
) -> Result<SampleOutcome, RunError> {
    let bundle = build_bundle(sample, input, cell, demos, config.precision)?;
    let spec = &input.dataset.spec;
    let backoff = Backoff::default();
    let result = query_until_answer(
        &bundle,
        config.answer_retry_cap,
        |b| send_with_backoff(provider, b, pcfg.max_retries, &backoff, &thread::sleep),
        |text| parse_answer(text, spec).ok(),
    );
    match result {
        Ok((trace, completion)) => Ok(SampleOutcome {
            id: sample.id.clone(),
            gold: sample.label,
            predicted: trace.parsed_choice,
            retries: trace.retries_used,
            usage: completion.usage,
            latency_ms: completion.latency_ms,
            response: trace.raw_response,
        }),
        Err(LlmError::ExhaustedRetries {
            last_raw,
            attempts,
            usage,
        }) => Ok(SampleOutcome {
            id: sample.id.clone(),
            gold: sample.label,
            predicted: None,
            retries: attempts.saturating_sub(1),
            usage,
            latency_ms: 0,
            response: last_raw,
        }),
        Err(e) => Err(e.into()),
    }
}

fn demos_for(
    input: &TaskInput,
    modeling: Modeling,
    n: u8,
    seed: u64,
    precision: u8,
) -> Result<Demos, RunError> {
    let set = draw_demo_set(&input.dataset, n as usize, seed).map_err(|source| RunError::Ingest {
        task: input.dataset.spec.name.clone(),
        source,
    })?;
    let items = set
        .demos
        .iter()
        .map(|(s, label)| {
            Ok(DemoInput {
                id: s.id.clone(),
                data: data_part(s, input, modeling, precision)?,
                answer: *label,
            })
        })
        .collect::<Result<_, RunError>>()?;
    Ok(Demos {
        items,
        demos_per_class: n,
    })
}

struct CellJob<'a> {
    cell: CellKey,
    run_index: u32,
    seed: u64,
    samples: Vec<TimeSeriesSample>,
    demos: Option<Demos>,
    input: &'a TaskInput,
    path: PathBuf,
}

/// Runs one cell. Completed ids already on disk are skipped; new lines are
/// appended strictly in subset order, so an interrupted file is always a
/// prefix of the finished one.
fn run_cell(
    job: CellJob<'_>,
    config: &RunConfig,
    provider: &dyn ChatProvider,
    pcfg: &ProviderConfig,
) -> Result<CellSummary, RunError> {
    let mut done: HashSet<String> = HashSet::new();
    let mut abstained = 0;
    if job.path.is_file() {
        let existing = read_record_file(&job.path)?;
        if existing.truncated {
            let f = OpenOptions::new().write(true).open(&job.path).map_err(io_err(&job.path))?;
            f.set_len(existing.valid_len).map_err(io_err(&job.path))?;
        }
        for l in existing.lines {
            abstained += usize::from(l.outcome.predicted.is_none());
            done.insert(l.outcome.id);
        }
    }
    let resumed = done.len();
    let todo: Vec<&TimeSeriesSample> = job.samples.iter().filter(|s| !done.contains(&s.id)).collect();
    let mut summary = CellSummary {
        cell: job.cell.clone(),
        run_index: job.run_index,
        samples: job.samples.len(),
        resumed,
        abstained,
        error: None,
    };
    if todo.is_empty() {
        return Ok(summary);
    }
    let allowed = config
        .abstention_quota
        .map(|q| (q * job.samples.len() as f64).floor() as usize);

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&job.path)
        .map_err(io_err(&job.path))?;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = pcfg.parallelism.max(1).min(todo.len());
    let (tx, rx) = mpsc::channel::<(usize, Result<SampleOutcome, RunError>)>();

    thread::scope(|scope| -> Result<(), RunError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, todo, job) = (&next, &stop, &todo, &job);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = todo.get(i) else { break };
                let r = outcome_for(sample, job.input, &job.cell, job.demos.as_ref(), config, provider, pcfg);
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, SampleOutcome> = BTreeMap::new();
        let mut write_pos = 0;
        for (i, r) in rx {
            if summary.error.is_some() {
                continue;
            }
            match r {
                Ok(outcome) => {
                    pending.insert(i, outcome);
                }
                Err(e) => {
                    summary.error = Some(e.to_string());
                    stop.store(true, Ordering::SeqCst);
                    continue;
                }
            }
            while let Some(outcome) = pending.remove(&write_pos) {
                let abstain = outcome.predicted.is_none();
                let line = RecordLine {
                    cell: job.cell.clone(),
                    seed: job.seed,
                    run_index: job.run_index,
                    outcome,
                };
                file.write_all(record_line_json(&line).as_bytes())
                    .map_err(io_err(&job.path))?;
                write_pos += 1;
                if abstain {
                    summary.abstained += 1;
                    if allowed.is_some_and(|a| summary.abstained > a) {
                        summary.error = Some(format!(
                            "abstention quota exceeded: {} of {} samples unanswered",
                            summary.abstained,
                            job.samples.len()
                        ));
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            }
        }
        Ok(())
    })?;
    file.flush().map_err(io_err(&job.path))?;
    Ok(summary)
}

/// Inputs per task, and dataset digests per task.
type LoadedInputs = (BTreeMap<String, TaskInput>, BTreeMap<String, String>);

fn load_inputs(config: &RunConfig) -> Result<LoadedInputs, RunError> {
    let mut inputs = BTreeMap::new();
    let mut digests = BTreeMap::new();
    for task in &config.tasks {
        let dir = config.dataset_dir(task);
        let ingest = |source| RunError::Ingest {
            task: task.clone(),
            source,
        };
        let dataset = load_dataset(&dir).map_err(ingest)?;
        if &dataset.spec.name != task {
            return Err(RunError::Config(ConfigError::Invalid(format!(
                "dataset at {} is for task {}, not {task}",
                dir.display(),
                dataset.spec.name
            ))));
        }
        digests.insert(task.clone(), dataset_digest(&dir).map_err(ingest)?);
        let plan = if config.modeling == Modeling::Visual && !config.skip_planning {
            let stored = load_plan(&config.plans_dir, task)?.ok_or_else(|| RunError::MissingPlan(task.clone()))?;
            Some(stored.plan)
        } else {
            None
        };
        let render = render_config_for(config, &dataset.spec, plan.as_ref());
        render.validate()?;
        if render.mode == Domain::Frequency {
            let spec = &dataset.spec;
            let problem = if spec.num_variables > 1 && render.channel.is_none() {
                Some(format!("{} has {} channels; set render.channel", task, spec.num_variables))
            } else if spec.series_length < render.stft.window_len {
                Some(format!(
                    "{task} series ({} points) are shorter than the STFT window ({})",
                    spec.series_length, render.stft.window_len
                ))
            } else {
                None
            };
            if let Some(p) = problem {
                return Err(RunError::Config(ConfigError::Invalid(format!(
                    "frequency-domain rendering is not possible: {p}"
                ))));
            }
        }
        inputs.insert(task.clone(), TaskInput { dataset, plan, render });
    }
    Ok((inputs, digests))
}

pub fn report_options(config: &RunConfig) -> ReportOptions {
    ReportOptions {
        baselines: config.report.baselines.clone(),
        prices: config
            .providers
            .iter()
            .map(|p| (p.model_id.clone(), p.price))
            .collect(),
    }
}

/// Builds providers from the config and runs every cell.
pub fn run(config: &RunConfig, raw_config: &str, anchors: &AnchorTable) -> Result<RunSummary, RunError> {
    config.validate()?;
    let providers = config
        .providers
        .iter()
        .map(|p| build_provider(p, Path::new(".")))
        .collect::<Result<Vec<_>, _>>()?;
    run_with_providers(config, raw_config, anchors, &providers)
}

/// Like [`run`] with caller-supplied providers, one per `config.providers`
/// entry.
pub fn run_with_providers(
    config: &RunConfig,
    raw_config: &str,
    anchors: &AnchorTable,
    providers: &[Arc<dyn ChatProvider>],
) -> Result<RunSummary, RunError> {
    config.validate()?;
    assert_eq!(providers.len(), config.providers.len(), "one provider per config entry");
    let (inputs, digests) = load_inputs(config)?;
    let plans: BTreeMap<&str, &VisualizationPlan> = inputs
        .iter()
        .filter_map(|(t, i)| i.plan.as_ref().map(|p| (t.as_str(), p)))
        .collect();
    let id = run_id(config, &digests, &plans);
    let out_dir = config.output_dir.join(&id);
    let records_dir = out_dir.join("records");
    fs::create_dir_all(&records_dir).map_err(io_err(&records_dir))?;
    let echo = out_dir.join("config.toml");
    fs::write(&echo, raw_config).map_err(io_err(&echo))?;
    let effective = out_dir.join("effective_config.json");
    let mut eff = serde_json::to_string_pretty(config).expect("config serializes");
    eff.push('\n');
    fs::write(&effective, eff).map_err(io_err(&effective))?;
    let manifest = out_dir.join("run.json");
    let mut m = serde_json::to_string_pretty(&RunManifest {
        run_id: &id,
        seed: config.seed,
        dataset_digests: &digests,
        plans,
    })
    .expect("manifest serializes");
    m.push('\n');
    fs::write(&manifest, m).map_err(io_err(&manifest))?;

    let mut cells = Vec::new();
    for task in &config.tasks {
        let input = &inputs[task];
        for run_index in 1..=config.runs {
            let subset_seed = config.seed.wrapping_add(run_index as u64);
            let subset = draw_eval_subset(&input.dataset, config.per_class, subset_seed).map_err(|source| {
                RunError::Ingest {
                    task: task.clone(),
                    source,
                }
            })?;
            let demo_seed = derive_seed(subset_seed, &format!("demos:{task}"));
            let mut demo_cache: BTreeMap<u8, Demos> = BTreeMap::new();
            for (pcfg, provider) in config.providers.iter().zip(providers) {
                for &strategy in &config.strategies {
                    let demos = match strategy {
                        ReasoningStrategy::Icl { demos_per_class: n } => {
                            let d = match demo_cache.entry(n) {
                                Entry::Occupied(e) => e.into_mut(),
                                Entry::Vacant(e) => {
                                    e.insert(demos_for(input, config.modeling, n, demo_seed, config.precision)?)
                                }
                            };
                            Some(d.clone())
                        }
                        _ => None,
                    };
                    let cell = CellKey {
                        task: task.clone(),
                        model_id: pcfg.model_id.clone(),
                        modeling: config.modeling,
                        strategy,
                    };
                    let job = CellJob {
                        path: records_dir.join(cell.file_name(run_index)),
                        cell,
                        run_index,
                        seed: subset_seed,
                        samples: subset.samples.clone(),
                        demos,
                        input,
                    };
                    cells.push(run_cell(job, config, provider.as_ref(), pcfg)?);
                }
            }
        }
    }

    let report_files = match load_records(&records_dir) {
        Ok(records) => {
            let report = build_report(&records, anchors, &report_options(config))?;
            write_report(&out_dir, &report, anchors, &config.report.formats, config.report.chart)?
        }
        Err(EvalError::NoRecords(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(RunSummary {
        run_id: id,
        out_dir,
        cells,
        report_files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    /// A plan already existed and `force` was not set.
    Existing(PathBuf),
    Written(PathBuf, StoredPlan),
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs the planning stage for `spec` once and stores the plan. An
/// unparseable response is saved next to the plan as `<task>.raw.txt` for
/// hand editing.
pub fn plan_task(
    spec: &TaskSpec,
    plans_dir: &Path,
    provider: &dyn ChatProvider,
    pcfg: &ProviderConfig,
    fallback: PlanFallback,
    force: bool,
) -> Result<PlanOutcome, RunError> {
    let path = plan_path(plans_dir, &spec.name);
    if !force && path.is_file() {
        return Ok(PlanOutcome::Existing(path));
    }
    let bundle = build_planning_prompt(spec)?;
    let completion = send_with_backoff(provider, &bundle, pcfg.max_retries, &Backoff::default(), &thread::sleep)?;
    let plan = match parse_plan(&completion.text, &spec.name, fallback) {
        Ok(p) => p,
        Err(e) => {
            fs::create_dir_all(plans_dir).map_err(io_err(plans_dir))?;
            let raw = plans_dir.join(format!("{}.raw.txt", spec.name));
            fs::write(&raw, &completion.text).map_err(io_err(&raw))?;
            return Err(e.into());
        }
    };
    let stored = StoredPlan {
        plan,
        source: PlanSource::Llm,
        created_at: now_rfc3339(),
    };
    let path = save_plan(plans_dir, &stored)?;
    Ok(PlanOutcome::Written(path, stored))
}

/// Stores a hand-written plan. `text` is either a plan JSON object or free
/// text parsed like a planning response, with `fallback` deciding the domain
/// when the text names none.
pub fn manual_plan(
    spec: &TaskSpec,
    plans_dir: &Path,
    text: &str,
    fallback: PlanFallback,
    force: bool,
) -> Result<PlanOutcome, RunError> {
    let path = plan_path(plans_dir, &spec.name);
    if !force && path.is_file() {
        return Ok(PlanOutcome::Existing(path));
    }
    let plan = match serde_json::from_str::<VisualizationPlan>(text) {
        Ok(p) => VisualizationPlan {
            task: spec.name.clone(),
            ..p
        },
        Err(_) => parse_plan(text, &spec.name, fallback)?,
    };
    let stored = StoredPlan {
        plan,
        source: PlanSource::Manual,
        created_at: now_rfc3339(),
    };
    let path = save_plan(plans_dir, &stored)?;
    Ok(PlanOutcome::Written(path, stored))
}
