//! Scenario files: grid, agents, task schedule and planner parameters,
//! stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::momdp::{Belief, Cell, GridWorldSpec, ObservationBands, MAX_UNCERTAIN_CELLS};
use crate::resolution::{LocalConfig, DEFAULT_LOOKAHEAD};
use crate::task::CandidateFilter;
use crate::values::DEFAULT_TIE_EPS;
use crate::{AgentId, Error, Result, TaskId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub agents: Vec<AgentConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncertain: Vec<UncertainCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainCell {
    pub cell: Cell,
    /// Initial belief that the cell is occupied.
    pub prior: f64,
    /// Ground truth at `t = 0`; sampled from `prior` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupied: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub start: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: TaskId,
    pub goal: Vec<Cell>,
    /// Arrival time; also the start of the window.
    pub start: usize,
    pub end: usize,
    /// `rewards[n]` is paid when `n` agents arrived.
    pub rewards: Vec<f64>,
    /// Defaults to every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<AgentId>>,
}

/// Seeded random tasks: one goal cell drawn uniformly from the free
/// cells, horizon drawn uniformly from `[horizon_min, horizon_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Total number of tasks to generate.
    pub count: usize,
    /// Generated tasks kept active at once.
    #[serde(default = "one")]
    pub active: usize,
    /// Reward table, padded with its last entry (or cut) to one entry per
    /// possible arrival count.
    pub rewards: Vec<f64>,
    #[serde(default = "horizon_min")]
    pub horizon_min: usize,
    #[serde(default = "horizon_max")]
    pub horizon_max: usize,
}

fn one() -> usize {
    1
}
fn horizon_min() -> usize {
    5
}
fn horizon_max() -> usize {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub slip_prob: f64,
    pub flip_prob: f64,
    pub bands: ObservationBands,
    pub move_cost: f64,
    pub maxsum_iters: usize,
    pub damping: f64,
    pub dp_horizon: usize,
    pub tie_eps: f64,
    pub forbid_swaps: bool,
    pub max_steps: usize,
    /// Stop early once no task is active and none is scheduled.
    pub stop_when_done: bool,
    pub candidate_filter: CandidateFilter,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            slip_prob: 0.1,
            flip_prob: 0.05,
            bands: ObservationBands::default(),
            move_cost: 1.0,
            maxsum_iters: 50,
            damping: 0.0,
            dp_horizon: DEFAULT_LOOKAHEAD,
            tie_eps: DEFAULT_TIE_EPS,
            forbid_swaps: false,
            max_steps: 100,
            stop_when_done: true,
            candidate_filter: CandidateFilter::default(),
        }
    }
}

impl Params {
    pub fn local_config(&self) -> LocalConfig {
        LocalConfig {
            lookahead: self.dp_horizon,
            forbid_swaps: self.forbid_swaps,
            trim_dominated: true,
        }
    }
}

impl ScenarioConfig {
    pub fn grid_spec(&self) -> GridWorldSpec {
        GridWorldSpec {
            width: self.grid.width,
            height: self.grid.height,
            static_obstacles: self.grid.obstacles.clone(),
            uncertain_cells: self.grid.uncertain.iter().map(|u| u.cell).collect(),
            slip_prob: self.params.slip_prob,
            flip_prob: self.params.flip_prob,
            bands: self.params.bands,
            move_cost: self.params.move_cost,
        }
    }

    pub fn initial_belief(&self) -> Result<Belief> {
        let priors: Vec<f64> = self.grid.uncertain.iter().map(|u| u.prior).collect();
        self.grid_spec().belief_from_priors(&priors)
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Every invariant violation, each prefixed with its field path.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g = &self.grid;
        let in_bounds = |c: Cell| c.x < g.width && c.y < g.height;
        if g.width == 0 || g.height == 0 {
            out.push(format!("grid: size {}x{} is empty", g.width, g.height));
        }
        for (i, c) in g.obstacles.iter().enumerate() {
            if !in_bounds(*c) {
                out.push(format!("grid.obstacles[{i}]: cell {c} is outside the grid"));
            }
        }
        if g.uncertain.len() > MAX_UNCERTAIN_CELLS {
            out.push(format!(
                "grid.uncertain: {} cells exceeds the limit of {MAX_UNCERTAIN_CELLS}",
                g.uncertain.len()
            ));
        }
        for (i, u) in g.uncertain.iter().enumerate() {
            let path = format!("grid.uncertain[{i}]");
            if !in_bounds(u.cell) {
                out.push(format!("{path}.cell: cell {} is outside the grid", u.cell));
            }
            if g.obstacles.contains(&u.cell) {
                out.push(format!("{path}.cell: cell {} is also a static obstacle", u.cell));
            }
            if g.uncertain[..i].iter().any(|v| v.cell == u.cell) {
                out.push(format!("{path}.cell: cell {} listed twice", u.cell));
            }
            if !(0.0..=1.0).contains(&u.prior) {
                out.push(format!("{path}.prior: {} is not a probability", u.prior));
            }
            match u.occupied {
                Some(true) if u.prior == 0.0 => {
                    out.push(format!("{path}: occupied but prior is 0"));
                }
                Some(false) if u.prior == 1.0 => {
                    out.push(format!("{path}: free but prior is 1"));
                }
                _ => {}
            }
        }

        if self.agents.is_empty() {
            out.push("agents: at least one agent is required".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}].start");
            let c = a.start;
            if !in_bounds(c) {
                out.push(format!("{path}: cell {c} is outside the grid"));
            } else if g.obstacles.contains(&c) {
                out.push(format!("{path}: cell {c} is a static obstacle"));
            } else if g.uncertain.iter().any(|u| u.cell == c) {
                out.push(format!("{path}: cell {c} is an uncertain cell"));
            }
            if let Some(j) = self.agents[..i].iter().position(|b| b.start == c) {
                out.push(format!("{path}: cell {c} is also the start of agent {j}"));
            }
        }

        for (i, t) in self.tasks.iter().enumerate() {
            let path = format!("tasks[{i}]");
            if self.tasks[..i].iter().any(|u| u.id == t.id) {
                out.push(format!("{path}.id: duplicate task id {}", t.id));
            }
            if t.goal.is_empty() {
                out.push(format!("{path}.goal: empty goal region"));
            }
            for (j, c) in t.goal.iter().enumerate() {
                if !in_bounds(*c) {
                    out.push(format!("{path}.goal[{j}]: cell {c} is outside the grid"));
                }
            }
            if t.start >= t.end {
                out.push(format!("{path}: start {} must be before end {}", t.start, t.end));
            }
            if t.start >= self.params.max_steps {
                out.push(format!(
                    "{path}.start: {} is past max_steps {}",
                    t.start, self.params.max_steps
                ));
            }
            let n = t.candidates.as_ref().map_or(self.agents.len(), Vec::len);
            if t.rewards.len() != n + 1 {
                out.push(format!(
                    "{path}.rewards: expected {} entries for {n} candidates, found {}",
                    n + 1,
                    t.rewards.len()
                ));
            }
            if t.rewards.iter().any(|r| !r.is_finite()) {
                out.push(format!("{path}.rewards: entries must be finite"));
            }
            if let Some(cands) = &t.candidates {
                if cands.is_empty() {
                    out.push(format!("{path}.candidates: empty"));
                }
                for (j, a) in cands.iter().enumerate() {
                    if *a >= self.agents.len() {
                        out.push(format!("{path}.candidates[{j}]: no agent {a}"));
                    }
                    if cands[..j].contains(a) {
                        out.push(format!("{path}.candidates[{j}]: agent {a} listed twice"));
                    }
                }
            }
        }

        if let Some(gen) = &self.generator {
            if gen.rewards.is_empty() || gen.rewards.iter().any(|r| !r.is_finite()) {
                out.push("generator.rewards: need at least one finite entry".into());
            }
            if gen.horizon_min == 0 || gen.horizon_min > gen.horizon_max {
                out.push(format!(
                    "generator: horizon range [{}, {}] is empty or starts at 0",
                    gen.horizon_min, gen.horizon_max
                ));
            }
            if gen.active == 0 && gen.count > 0 {
                out.push("generator.active: must be at least 1".into());
            }
        }

        let p = &self.params;
        for (name, v) in [
            ("slip_prob", p.slip_prob),
            ("flip_prob", p.flip_prob),
            ("bands.near", p.bands.near),
            ("bands.mid", p.bands.mid),
            ("bands.far", p.bands.far),
            ("damping", p.damping),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("params.{name}: {v} is not in [0, 1]"));
            }
        }
        if p.damping >= 1.0 {
            out.push("params.damping: must be below 1".into());
        }
        if !(p.move_cost.is_finite() && p.move_cost >= 0.0) {
            out.push(format!("params.move_cost: {} must be finite and nonnegative", p.move_cost));
        }
        if !(p.tie_eps.is_finite() && p.tie_eps >= 0.0) {
            out.push(format!("params.tie_eps: {} must be finite and nonnegative", p.tie_eps));
        }
        if p.dp_horizon == 0 {
            out.push("params.dp_horizon: must be at least 1".into());
        }
        if p.maxsum_iters == 0 {
            out.push("params.maxsum_iters: must be at least 1".into());
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
        let problems = config.validate();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::InvalidScenario(problems))
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ScenarioParse(e.to_string()))
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text).map_err(|e| match e {
        Error::ScenarioParse(msg) => Error::ScenarioParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_scenario(path: &Path, config: &ScenarioConfig) -> Result<()> {
    std::fs::write(path, config.to_toml_string()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"
seed = 7

[grid]
width = 7
height = 5
obstacles = [[3, 0], [3, 1]]
uncertain = [{ cell = [3, 3], prior = 0.8, occupied = false }]

[[agents]]
start = [0, 2]

[[agents]]
start = [0, 4]

[[tasks]]
id = 0
goal = [[6, 3]]
start = 0
end = 12
rewards = [0.0, 50.0, 50.0]
"#;

    #[test]
    fn seven_by_five_is_valid() {
        let cfg = ScenarioConfig::from_toml_str(FIG3).unwrap();
        assert_eq!(cfg.num_agents(), 2);
        assert_eq!(cfg.tasks[0].rewards, vec![0.0, 50.0, 50.0]);
        assert_eq!(cfg.params, Params::default());
        assert!((cfg.initial_belief().unwrap().get(1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn start_on_obstacle_names_the_cell() {
        let text = FIG3.replace("start = [0, 2]", "start = [3, 1]");
        let Err(Error::InvalidScenario(list)) = ScenarioConfig::from_toml_str(&text) else {
            panic!("expected validation failure");
        };
        assert_eq!(list.len(), 1);
        assert!(list[0].starts_with("agents[0].start"), "{list:?}");
        assert!(list[0].contains("(3, 1)"), "{list:?}");
    }

    #[test]
    fn negative_slip_is_rejected() {
        let text = format!("{FIG3}\n[params]\nslip_prob = -0.1\n");
        let Err(Error::InvalidScenario(list)) = ScenarioConfig::from_toml_str(&text) else {
            panic!("expected validation failure");
        };
        assert!(list.iter().any(|m| m.starts_with("params.slip_prob")), "{list:?}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_toml_str("[grid]\nwidth = \"wide\"\n").unwrap_err();
        assert!(matches!(err, Error::ScenarioParse(_)));
        assert!(err.to_string().contains("line"), "{err}");
        let err = ScenarioConfig::from_toml_str(&format!("{FIG3}\nbogus = 1\n")).unwrap_err();
        assert!(matches!(err, Error::ScenarioParse(_)));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::from_toml_str(FIG3).unwrap();
        cfg.generator = Some(GeneratorConfig {
            count: 3,
            active: 2,
            rewards: vec![0.0, 10.0],
            horizon_min: 5,
            horizon_max: 9,
        });
        cfg.tasks[0].candidates = Some(vec![1, 0]);
        cfg.params.slip_prob = 0.15;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn reward_length_checked_against_candidates() {
        let text = FIG3.replace("rewards = [0.0, 50.0, 50.0]", "rewards = [0.0, 50.0]");
        let Err(Error::InvalidScenario(list)) = ScenarioConfig::from_toml_str(&text) else {
            panic!("expected validation failure");
        };
        assert!(list[0].starts_with("tasks[0].rewards"), "{list:?}");
    }
}
