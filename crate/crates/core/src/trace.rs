//! Line-delimited JSON traces: a header with the scenario, one record per
//! step, and a closing summary. A trace without its summary line is
//! treated as truncated.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::momdp::GridAction;
use crate::scenario::ScenarioConfig;
use crate::sim::{EpisodeSummary, TraceRecord};
use crate::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

/// Conservation checks tolerate this much floating-point drift.
pub const ACCOUNTING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step(TraceRecord),
    Summary(EpisodeSummary),
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, scenario: &ScenarioConfig) -> Result<Self> {
        let header = TraceLine::Header(TraceHeader { version: TRACE_VERSION, scenario: scenario.clone() });
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        Ok(TraceWriter { out })
    }

    pub fn record(&mut self, record: &TraceRecord) -> Result<()> {
        write_line(&mut self.out, &TraceLine::Step(record.clone()))
    }

    pub fn finish(mut self, summary: &EpisodeSummary) -> Result<W> {
        write_line(&mut self.out, &TraceLine::Summary(summary.clone()))?;
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<W: Write>(out: &mut W, line: &TraceLine) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn create_trace_file(path: &Path, scenario: &ScenarioConfig) -> Result<TraceWriter<BufWriter<File>>> {
    TraceWriter::new(BufWriter::new(File::create(path)?), scenario)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub summary: EpisodeSummary,
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Trace> {
    let mut header = None;
    let mut records = Vec::new();
    let mut summary = None;
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| Error::CorruptTrace { line: line_no, message };
        if summary.is_some() {
            return Err(corrupt("content after the summary line".into()));
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        match parsed {
            TraceLine::Header(h) => {
                if header.is_some() {
                    return Err(corrupt("second header".into()));
                }
                if h.version != TRACE_VERSION {
                    return Err(corrupt(format!("unsupported trace version {}", h.version)));
                }
                header = Some(h);
            }
            TraceLine::Step(r) => {
                if header.is_none() {
                    return Err(corrupt("step record before the header".into()));
                }
                records.push(r);
            }
            TraceLine::Summary(s) => summary = Some(s),
        }
    }
    let header = header.ok_or(Error::CorruptTrace { line: 1, message: "missing header".into() })?;
    let summary = summary.ok_or(Error::CorruptTrace {
        line: last_line,
        message: "missing summary line (truncated trace?)".into(),
    })?;
    Ok(Trace { header, records, summary })
}

pub fn read_trace_file(path: &Path) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: usize,
    pub agents: usize,
    pub collected: f64,
    pub cost: f64,
    pub realized: f64,
}

/// Re-checks a trace using nothing but its own contents: distinct
/// positions, moves consistent with the recorded ground truth, costs and
/// reward accounting, and the summary totals.
pub fn replay(trace: &Trace) -> Result<ReplayReport> {
    let cfg = &trace.header.scenario;
    let spec = cfg.grid_spec();
    let n = cfg.agents.len();
    let mut collected = 0.0;
    let mut cost = 0.0;
    let mut prev_next = None;

    for (k, r) in trace.records.iter().enumerate() {
        let step = r.t;
        let fail = |message: String| Err(Error::TraceViolation { step, message });
        if r.t != k {
            return fail(format!("expected t = {k}, found {}", r.t));
        }
        if [r.states.len(), r.next_states.len(), r.actions.len(), r.costs.len(), r.commitments.len()]
            .iter()
            .any(|&len| len != n)
        {
            return fail(format!("per-agent fields do not all have {n} entries"));
        }
        if r.env.len() != spec.uncertain_cells.len() {
            return fail("ground-truth vector has the wrong length".into());
        }
        match prev_next {
            Some(ref p) if *p != r.states => {
                return fail("states do not continue the previous step".into());
            }
            None if r.states != cfg.agents.iter().map(|a| a.start).collect::<Vec<_>>() => {
                return fail("first step does not start at the scenario starts".into());
            }
            _ => {}
        }
        for (label, cells) in [("t", &r.states), ("t+1", &r.next_states)] {
            for i in 0..n {
                for j in i + 1..n {
                    if cells[i] == cells[j] {
                        return fail(format!(
                            "collision at {label}: agents {i} and {j} both at {}",
                            cells[i]
                        ));
                    }
                }
            }
        }
        let env: usize = r.env.iter().enumerate().map(|(i, &b)| usize::from(b) << i).sum();
        for i in 0..n {
            let c = r.states[i];
            if !spec.in_bounds(c) || spec.is_static_obstacle(c) {
                return fail(format!("agent {i} at invalid cell {c}"));
            }
            let expect = spec.cell_of(spec.step(spec.state_of(c), r.actions[i], env));
            if expect != r.next_states[i] {
                return fail(format!(
                    "agent {i}: {} from {c} should reach {expect}, trace says {}",
                    r.actions[i], r.next_states[i]
                ));
            }
            let step_cost = if r.actions[i] == GridAction::Idle { 0.0 } else { spec.move_cost };
            if r.costs[i] != step_cost {
                return fail(format!("agent {i}: cost {} but expected {step_cost}", r.costs[i]));
            }
        }
        let sum: f64 = r.belief.iter().sum();
        if r.belief.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ACCOUNTING_TOL {
            return fail("belief is not a distribution".into());
        }
        if r.occupancy.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("occupancy marginal outside [0, 1]".into());
        }
        cost += r.costs.iter().sum::<f64>();
        collected += r.collected.iter().map(|c| c.reward).sum::<f64>();
        if (collected - cost - r.realized).abs() > ACCOUNTING_TOL {
            return fail(format!(
                "realized {} but collected {collected} minus cost {cost} is {}",
                r.realized,
                collected - cost
            ));
        }
        prev_next = Some(r.next_states.clone());
    }

    let s = &trace.summary;
    let step = trace.records.len();
    let fail = |message: String| Err(Error::TraceViolation { step, message });
    if s.steps != trace.records.len() {
        return fail(format!("summary counts {} steps, trace has {}", s.steps, trace.records.len()));
    }
    if (s.collected - collected).abs() > ACCOUNTING_TOL
        || (s.cost - cost).abs() > ACCOUNTING_TOL
        || (s.realized - (collected - cost)).abs() > ACCOUNTING_TOL
    {
        return fail("summary totals disagree with the step records".into());
    }
    Ok(ReplayReport { steps: step, agents: n, collected, cost, realized: collected - cost })
}
