//! The file-facing operations behind the `dtpp` binary: run a scenario and
//! write its artifacts, replay a trace, validate a scenario, dump a task's
//! value tables.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::momdp::{build_grid_momdp, TransitionMode};
use crate::render::render_frame;
use crate::scenario::{load_scenario, ScenarioConfig};
use crate::sim::{run_episode_with, EpisodeSummary, TraceRecord};
use crate::trace::{create_trace_file, read_trace_file, replay, ReplayReport};
use crate::values::solve_frozen;
use crate::values::FrozenMdp;
use crate::{Error, Result, TaskId};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace: bool,
    pub render: bool,
    pub max_steps: Option<usize>,
    pub maxsum_iters: Option<usize>,
    pub dp_horizon: Option<usize>,
    pub forbid_swaps: bool,
    pub verbosity: u8,
}

impl RunOptions {
    pub fn new(scenario: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunOptions { scenario: scenario.into(), out: out.into(), ..RunOptions::default() }
    }

    /// Applies command-line overrides to a loaded scenario.
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.max_steps {
            config.params.max_steps = n;
        }
        if let Some(n) = self.maxsum_iters {
            config.params.maxsum_iters = n;
        }
        if let Some(n) = self.dp_horizon {
            config.params.dp_horizon = n;
        }
        if self.forbid_swaps {
            config.params.forbid_swaps = true;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub summary: EpisodeSummary,
}

pub fn metrics_header() -> &'static str {
    "t,expected_pure_reward,step_cost,step_collected,realized,active_tasks,commitments,maxsum_iterations,maxsum_converged"
}

/// One metrics row. Commitments are listed per agent, `-` for none.
pub fn metrics_row(r: &TraceRecord) -> String {
    let commitments: Vec<String> = r
        .commitments
        .iter()
        .map(|c| c.map_or_else(|| "-".to_string(), |k| k.to_string()))
        .collect();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.t,
        r.expected_pure_reward,
        r.costs.iter().fold(0.0, |acc, c| acc + c),
        r.collected.iter().fold(0.0, |acc, c| acc + c.reward),
        r.realized,
        r.tasks.len(),
        commitments.join(";"),
        r.maxsum.iterations,
        r.maxsum.converged
    )
}

/// Loads the scenario, runs the episode and writes the metrics table, an
/// episode summary, and optionally the trace and SVG frames into `out`.
pub fn run(opts: &RunOptions) -> Result<RunReport> {
    let mut config = load_scenario(&opts.scenario)?;
    opts.apply(&mut config);
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidScenario(problems));
    }
    run_config(&config, opts)
}

/// Like [`run`] but with an already loaded scenario.
pub fn run_config(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    fs::create_dir_all(&opts.out)?;
    let spec = config.grid_spec();
    let mut trace = if opts.trace {
        Some(create_trace_file(&opts.out.join(TRACE_FILE), config)?)
    } else {
        None
    };
    let frames = opts.out.join(FRAMES_DIR);
    if opts.render {
        fs::create_dir_all(&frames)?;
    }
    let mut metrics = std::io::BufWriter::new(fs::File::create(opts.out.join(METRICS_FILE))?);
    writeln!(metrics, "{}", metrics_header())?;

    let summary = run_episode_with(config, |r| {
        writeln!(metrics, "{}", metrics_row(r))?;
        if let Some(w) = trace.as_mut() {
            w.record(r)?;
        }
        if opts.render {
            fs::write(frames.join(format!("step_{:04}.svg", r.t)), render_frame(&spec, r))?;
        }
        log::info!(
            "t={} actions={:?} commitments={:?} realized={}",
            r.t,
            r.actions,
            r.commitments,
            r.realized
        );
        Ok(())
    })?;
    metrics.flush()?;
    if let Some(w) = trace {
        w.finish(&summary)?;
    }
    let report = RunReport { seed: config.seed, summary };
    fs::write(opts.out.join(SUMMARY_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

pub fn replay_file(path: &Path) -> Result<ReplayReport> {
    replay(&read_trace_file(path)?)
}

pub fn validate_file(path: &Path) -> Result<ScenarioConfig> {
    load_scenario(path)
}

/// Text dump of a scheduled task's reach-probability and cost-to-go
/// tables, solved for the scenario's initial belief.
pub fn solve_values_dump(config: &ScenarioConfig, task: TaskId) -> Result<String> {
    let k = config
        .tasks
        .iter()
        .find(|k| k.id == task)
        .ok_or_else(|| Error::MalformedTask(format!("scenario has no task {task}")))?;
    let spec = config.grid_spec();
    let model = build_grid_momdp(&spec, TransitionMode::Planning)?;
    let frozen = FrozenMdp::new(&model, &config.initial_belief()?)?;
    let goal: Vec<usize> = k.goal.iter().map(|&c| spec.state_of(c)).collect();
    let tables = solve_frozen(frozen.into(), &goal, k.end - k.start, config.params.tie_eps)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# task {} goal {:?} window [{}, {}] grid {}x{} (state = y * width + x)",
        k.id, k.goal, k.start, k.end, spec.width, spec.height
    );
    out.push_str(&tables.dump());
    Ok(out)
}
