//! Grid-world instance of the model: positions are the observable state,
//! the occupancy of a few uncertain cells is the hidden state.
//!
//! Cells are `(x, y)` with `y = 0` the top row; north decreases `y`.
//! State index is `y * width + x`. Bit `i` of an environment (or
//! observation) index is the occupancy of `uncertain_cells[i]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Belief, MomdpModel};
use crate::{ActionId, Error, Result, StateId};

/// Uncertain cells are frozen while an agent is at most this far away.
pub const FREEZE_RADIUS: usize = 2;

/// Dense tables grow as `4^N_u`; beyond this they stop being desk-sized.
pub const MAX_UNCERTAIN_CELLS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl From<(usize, usize)> for Cell {
    fn from((x, y): (usize, usize)) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GridAction {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "W")]
    West,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "IDLE")]
    Idle,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::North,
        GridAction::South,
        GridAction::West,
        GridAction::East,
        GridAction::Idle,
    ];
    pub const IDLE: ActionId = 4;

    pub fn index(self) -> ActionId {
        self as ActionId
    }

    pub fn from_index(a: ActionId) -> Option<GridAction> {
        GridAction::ALL.get(a).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::North => (0, -1),
            GridAction::South => (0, 1),
            GridAction::West => (-1, 0),
            GridAction::East => (1, 0),
            GridAction::Idle => (0, 0),
        }
    }
}

impl fmt::Display for GridAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GridAction::North => "N",
            GridAction::South => "S",
            GridAction::West => "W",
            GridAction::East => "E",
            GridAction::Idle => "IDLE",
        };
        f.write_str(name)
    }
}

/// Probability of observing an uncertain cell correctly, by Manhattan
/// distance band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationBands {
    /// `d <= 1`
    pub near: f64,
    /// `d == 2`
    pub mid: f64,
    /// `d > 2`
    pub far: f64,
}

impl Default for ObservationBands {
    fn default() -> Self {
        ObservationBands { near: 1.0, mid: 0.8, far: 0.5 }
    }
}

impl ObservationBands {
    pub fn correct_probability(&self, distance: usize) -> f64 {
        match distance {
            0 | 1 => self.near,
            2 => self.mid,
            _ => self.far,
        }
    }
}

/// Whether transitions model execution (deterministic) or planning (moves
/// may slip and leave the agent in place).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    Execution,
    Planning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub static_obstacles: Vec<Cell>,
    pub uncertain_cells: Vec<Cell>,
    /// Planning-model probability that a move leaves the agent in place.
    pub slip_prob: f64,
    pub flip_prob: f64,
    pub bands: ObservationBands,
    pub move_cost: f64,
}

impl GridWorldSpec {
    pub fn new(width: usize, height: usize) -> Self {
        GridWorldSpec {
            width,
            height,
            static_obstacles: Vec::new(),
            uncertain_cells: Vec::new(),
            slip_prob: 0.1,
            flip_prob: 0.05,
            bands: ObservationBands::default(),
            move_cost: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.width == 0 || self.height == 0 {
            problems.push(format!("grid is {}x{}", self.width, self.height));
        }
        for c in self.static_obstacles.iter().chain(&self.uncertain_cells) {
            if !self.in_bounds(*c) {
                problems.push(format!("cell {c} is outside the {}x{} grid", self.width, self.height));
            }
        }
        for c in &self.uncertain_cells {
            if self.static_obstacles.contains(c) {
                problems.push(format!("uncertain cell {c} is also a static obstacle"));
            }
        }
        for (i, c) in self.uncertain_cells.iter().enumerate() {
            if self.uncertain_cells[..i].contains(c) {
                problems.push(format!("uncertain cell {c} listed twice"));
            }
        }
        if self.uncertain_cells.len() > MAX_UNCERTAIN_CELLS {
            problems.push(format!(
                "{} uncertain cells exceeds the limit of {MAX_UNCERTAIN_CELLS}",
                self.uncertain_cells.len()
            ));
        }
        for (name, p) in [
            ("slip_prob", self.slip_prob),
            ("flip_prob", self.flip_prob),
            ("bands.near", self.bands.near),
            ("bands.mid", self.bands.mid),
            ("bands.far", self.bands.far),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} = {p} is not a probability"));
            }
        }
        if !self.move_cost.is_finite() || self.move_cost < 0.0 {
            problems.push(format!("move_cost = {} must be finite and nonnegative", self.move_cost));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems.join("; ")))
        }
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn num_env_states(&self) -> usize {
        1 << self.uncertain_cells.len()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn state_of(&self, c: Cell) -> StateId {
        c.y * self.width + c.x
    }

    pub fn cell_of(&self, s: StateId) -> Cell {
        Cell::new(s % self.width, s / self.width)
    }

    pub fn is_static_obstacle(&self, c: Cell) -> bool {
        self.static_obstacles.contains(&c)
    }

    pub fn uncertain_index(&self, c: Cell) -> Option<usize> {
        self.uncertain_cells.iter().position(|u| *u == c)
    }

    /// Cells that are neither static obstacles nor uncertain.
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.num_states())
            .map(|s| self.cell_of(s))
            .filter(|c| !self.is_static_obstacle(*c) && self.uncertain_index(*c).is_none())
            .collect()
    }

    /// Where action `a` would take an agent at `s` if nothing blocks it.
    fn target(&self, s: StateId, a: GridAction) -> Option<Cell> {
        let c = self.cell_of(s);
        let (dx, dy) = a.delta();
        let x = c.x.checked_add_signed(dx)?;
        let y = c.y.checked_add_signed(dy)?;
        let t = Cell::new(x, y);
        self.in_bounds(t).then_some(t)
    }

    /// Deterministic successor of `s` under `a` when the hidden state is `e`.
    pub fn step(&self, s: StateId, a: GridAction, e: usize) -> StateId {
        match self.target(s, a) {
            Some(t) if self.is_static_obstacle(t) => s,
            Some(t) => match self.uncertain_index(t) {
                Some(i) if e >> i & 1 == 1 => s,
                _ => self.state_of(t),
            },
            None => s,
        }
    }

    /// Bitmask of uncertain cells within the freeze radius of any of `states`.
    pub fn frozen_mask<I: IntoIterator<Item = StateId>>(&self, states: I) -> usize {
        let mut mask = 0;
        for s in states {
            let c = self.cell_of(s);
            for (i, u) in self.uncertain_cells.iter().enumerate() {
                if c.manhattan(*u) <= FREEZE_RADIUS {
                    mask |= 1 << i;
                }
            }
        }
        mask
    }

    /// Distribution of the next hidden state from `e`, with cells in
    /// `frozen` held fixed and every other cell flipping independently.
    pub fn env_transition_row(&self, e: usize, frozen: usize) -> Vec<f64> {
        let n = self.uncertain_cells.len();
        (0..self.num_env_states())
            .map(|next| {
                (0..n)
                    .map(|i| {
                        let same = (e ^ next) >> i & 1 == 0;
                        if frozen >> i & 1 == 1 {
                            if same { 1.0 } else { 0.0 }
                        } else if same {
                            1.0 - self.flip_prob
                        } else {
                            self.flip_prob
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Predicts the belief one step ahead under the environment dynamics
    /// with the given frozen cells.
    pub fn predict_env(&self, weights: &[f64], frozen: usize) -> Vec<f64> {
        let mut out = vec![0.0; weights.len()];
        for (e, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (slot, p) in out.iter_mut().zip(self.env_transition_row(e, frozen)) {
                *slot += w * p;
            }
        }
        out
    }

    /// Initial joint belief from per-cell obstacle priors.
    pub fn belief_from_priors(&self, priors: &[f64]) -> Result<Belief> {
        if priors.len() != self.uncertain_cells.len() {
            return Err(Error::InvalidBelief(format!(
                "{} priors for {} uncertain cells",
                priors.len(),
                self.uncertain_cells.len()
            )));
        }
        Belief::from_bit_marginals(priors)
    }
}

/// Probability of observation `o` from position `s` when the hidden state
/// is `e`: independent per-cell readings, each correct with the distance
/// band probability.
pub fn observation_likelihood(spec: &GridWorldSpec, s: StateId, e: usize, o: usize) -> f64 {
    let pos = spec.cell_of(s);
    spec.uncertain_cells
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let p = spec.bands.correct_probability(pos.manhattan(*u));
            if (e ^ o) >> i & 1 == 0 { p } else { 1.0 - p }
        })
        .product()
}

/// Builds the dense grid model. Actions are `N, S, W, E, IDLE` in that
/// index order.
pub fn build_grid_momdp(spec: &GridWorldSpec, mode: TransitionMode) -> Result<MomdpModel> {
    spec.validate()?;
    let ns = spec.num_states();
    let ne = spec.num_env_states();
    let na = GridAction::ALL.len();
    let no = ne;
    let mut m = MomdpModel::zeroed(ns, ne, na, no, GridAction::IDLE);

    for s in 0..ns {
        let frozen = spec.frozen_mask([s]);
        for e in 0..ne {
            let env_row = spec.env_transition_row(e, frozen);
            for action in GridAction::ALL {
                let a = action.index();
                let next = spec.step(s, action, e);
                if mode == TransitionMode::Planning && next != s && action != GridAction::Idle {
                    let i = m.ts_index(s, a, e, next);
                    m.trans_s[i] = 1.0 - spec.slip_prob;
                    let i = m.ts_index(s, a, e, s);
                    m.trans_s[i] += spec.slip_prob;
                } else {
                    let i = m.ts_index(s, a, e, next);
                    m.trans_s[i] = 1.0;
                }
                let start = m.te_index(s, e, a, 0);
                m.trans_e[start..start + ne].copy_from_slice(&env_row);
            }
        }
    }

    // observation depends only on the arrival state and the hidden state
    for next in 0..ns {
        for e in 0..ne {
            let row: Vec<f64> = (0..no).map(|o| observation_likelihood(spec, next, e, o)).collect();
            for a in 0..na {
                let start = m.obs_index(next, e, a, 0);
                m.obs_fn[start..start + no].copy_from_slice(&row);
            }
        }
    }

    for s in 0..ns {
        for action in GridAction::ALL {
            if action == GridAction::Idle {
                continue;
            }
            let a = action.index();
            for next in 0..ns {
                let start = m.cost_index(s, a, next, 0);
                m.cost[start..start + no].fill(spec.move_cost);
            }
        }
    }
    Ok(m)
}
