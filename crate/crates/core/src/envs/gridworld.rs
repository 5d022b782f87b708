//! Grid World Maze: reach the treasure while avoiding pits and fires.
//!
//! Rewards for entering a cell: treasure +200, pit -2500, fire -500,
//! fire-adjacent -250, anything else -1. Episodes end on the treasure, in a
//! pit, or after 50 actions. Moves are deterministic; a move off the grid
//! leaves the agent in place and costs -1.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Action, CurriculumEnv, DoneReason, StateKey, StepOutcome, Transition};
use crate::error::{Error, Result};
use crate::mapping::{gridworld_start_for_distance, TaskParameters};

pub const TREASURE_REWARD: f64 = 200.0;
pub const PIT_REWARD: f64 = -2500.0;
pub const FIRE_REWARD: f64 = -500.0;
pub const FIRE_ADJACENT_REWARD: f64 = -250.0;
pub const STEP_REWARD: f64 = -1.0;
pub const MAX_ACTIONS: u32 = 50;

/// Name of the mapped parameter holding the start distance.
pub const START_DISTANCE: &str = "start_distance";

const DEFAULT_MAZE: &str = include_str!("../../layouts/grid_maze.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Plain,
    Pit,
    Fire,
    FireAdjacent,
    Treasure,
}

impl CellKind {
    pub fn entry_reward(self) -> f64 {
        match self {
            CellKind::Plain => STEP_REWARD,
            CellKind::Pit => PIT_REWARD,
            CellKind::Fire => FIRE_REWARD,
            CellKind::FireAdjacent => FIRE_ADJACENT_REWARD,
            CellKind::Treasure => TREASURE_REWARD,
        }
    }
}

/// Static maze description. Fire halos and treasure distances are derived
/// on load.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldLayout {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    start: Cell,
    treasure: Cell,
    distances: Vec<Option<u32>>,
    eligible: Vec<(Cell, u32)>,
}

impl GridWorldLayout {
    /// Parses the text format: one row per line, `.` plain, `P` pit,
    /// `F` fire, `T` treasure, `S` start. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        if height == 0 {
            return Err(Error::Layout("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        let mut treasure = None;
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::Layout(format!(
                    "row {r} has {} cells, expected {width}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                let kind = match ch {
                    '.' => CellKind::Plain,
                    'P' => CellKind::Pit,
                    'F' => CellKind::Fire,
                    'T' => {
                        if treasure.replace(Cell::new(r, c)).is_some() {
                            return Err(Error::Layout("more than one treasure".into()));
                        }
                        CellKind::Treasure
                    }
                    'S' => {
                        if start.replace(Cell::new(r, c)).is_some() {
                            return Err(Error::Layout("more than one start".into()));
                        }
                        CellKind::Plain
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "unknown cell `{other}` at row {r}, column {c}"
                        )))
                    }
                };
                cells.push(kind);
            }
        }
        let treasure = treasure.ok_or_else(|| Error::Layout("no treasure".into()))?;
        let start = start.ok_or_else(|| Error::Layout("no start".into()))?;

        let mut layout = Self {
            width,
            height,
            cells,
            start,
            treasure,
            distances: Vec::new(),
            eligible: Vec::new(),
        };
        layout.mark_fire_halos();
        if layout.kind(start) != CellKind::Plain {
            return Err(Error::Layout(format!("start {start} touches a fire")));
        }
        layout.distances = layout.bfs_from_treasure();
        if layout.distance(start).is_none() {
            return Err(Error::Layout("start cannot reach the treasure".into()));
        }
        layout.eligible = layout
            .cells()
            .filter(|&c| layout.kind(c) == CellKind::Plain)
            .filter_map(|c| layout.distance(c).map(|d| (c, d)))
            .collect();
        Ok(layout)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The maze shipped with the crate (`layouts/grid_maze.txt`).
    pub fn default_maze() -> Self {
        Self::parse(DEFAULT_MAZE).expect("bundled maze is valid")
    }

    fn mark_fire_halos(&mut self) {
        let fires: Vec<Cell> = self
            .cells()
            .filter(|&c| self.kind(c) == CellKind::Fire)
            .collect();
        for fire in fires {
            for action in Action::ALL {
                if let Some(n) = self.neighbor(fire, action) {
                    let idx = self.index(n);
                    if self.cells[idx] == CellKind::Plain {
                        self.cells[idx] = CellKind::FireAdjacent;
                    }
                }
            }
        }
    }

    // Shortest path through every non-pit cell.
    fn bfs_from_treasure(&self) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.cells.len()];
        let mut queue = VecDeque::new();
        dist[self.index(self.treasure)] = Some(0);
        queue.push_back(self.treasure);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].expect("queued cells have a distance");
            for action in Action::ALL {
                if let Some(n) = self.neighbor(cell, action) {
                    let idx = self.index(n);
                    if dist[idx].is_none() && self.cells[idx] != CellKind::Pit {
                        dist[idx] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn treasure(&self) -> Cell {
        self.treasure
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn kind(&self, cell: Cell) -> CellKind {
        self.cells[self.index(cell)]
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Cell::new(r, c)))
    }

    /// Shortest-path distance to the treasure avoiding pits.
    pub fn distance(&self, cell: Cell) -> Option<u32> {
        self.distances[self.index(cell)]
    }

    /// Plain cells that can reach the treasure, with their distance.
    pub fn eligible_starts(&self) -> &[(Cell, u32)] {
        &self.eligible
    }

    pub fn neighbor(&self, cell: Cell, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let r = cell.row as i64 + dr as i64;
        let c = cell.col as i64 + dc as i64;
        (r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width)
            .then(|| Cell::new(r as usize, c as usize))
    }

    /// Best return of an episode from `from` that reaches the treasure within
    /// the action limit, or `None` if no such episode exists.
    pub fn best_successful_return(&self, from: Cell) -> Option<f64> {
        // best[c]: highest reward sum of a path ending at c without having
        // reached a terminal cell, after k actions.
        let n = self.cells.len();
        let mut best = vec![f64::NEG_INFINITY; n];
        best[self.index(from)] = 0.0;
        let mut found = f64::NEG_INFINITY;
        for _ in 0..MAX_ACTIONS {
            let mut next = vec![f64::NEG_INFINITY; n];
            for cell in self.cells() {
                let here = best[self.index(cell)];
                if here == f64::NEG_INFINITY {
                    continue;
                }
                for action in Action::ALL {
                    let dest = self.neighbor(cell, action).unwrap_or(cell);
                    let kind = self.kind(dest);
                    let total = here + kind.entry_reward();
                    match kind {
                        CellKind::Treasure => found = found.max(total),
                        CellKind::Pit => {}
                        _ => {
                            let slot = &mut next[self.index(dest)];
                            *slot = slot.max(total);
                        }
                    }
                }
            }
            best = next;
        }
        (found > f64::NEG_INFINITY).then_some(found)
    }

    pub fn state_key(&self, cell: Cell) -> StateKey {
        StateKey(self.index(cell) as u64)
    }
}

impl fmt::Display for GridWorldLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                let ch = if cell == self.start {
                    'S'
                } else {
                    match self.kind(cell) {
                        CellKind::Plain | CellKind::FireAdjacent => '.',
                        CellKind::Pit => 'P',
                        CellKind::Fire => 'F',
                        CellKind::Treasure => 'T',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridWorldState {
    pub agent: Cell,
    pub steps_taken: u32,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    layout: Arc<GridWorldLayout>,
    state: GridWorldState,
    finished: bool,
}

impl GridWorld {
    pub fn new(layout: Arc<GridWorldLayout>) -> Self {
        let start = layout.start();
        Self {
            layout,
            state: GridWorldState {
                agent: start,
                steps_taken: 0,
            },
            finished: true,
        }
    }

    pub fn layout(&self) -> &GridWorldLayout {
        &self.layout
    }

    pub fn state(&self) -> GridWorldState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Places the agent at the start distance requested by `task`.
    pub fn reset<R: RngCore + ?Sized>(
        &mut self,
        task: &TaskParameters,
        rng: &mut R,
    ) -> Result<GridWorldState> {
        let d = task.get(START_DISTANCE)?;
        let cell = gridworld_start_for_distance(&self.layout, d, rng)?;
        Ok(self.reset_at(cell))
    }

    pub fn reset_at(&mut self, cell: Cell) -> GridWorldState {
        self.state = GridWorldState {
            agent: cell,
            steps_taken: 0,
        };
        self.finished = false;
        self.state
    }

    pub fn step(&mut self, action: Action) -> Result<Transition<GridWorldState>> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        let dest = self
            .layout
            .neighbor(self.state.agent, action)
            .unwrap_or(self.state.agent);
        let kind = self.layout.kind(dest);
        self.state.agent = dest;
        self.state.steps_taken += 1;

        let done_reason = match kind {
            CellKind::Treasure => Some(DoneReason::Treasure),
            CellKind::Pit => Some(DoneReason::Pit),
            _ if self.state.steps_taken >= MAX_ACTIONS => Some(DoneReason::StepLimit),
            _ => None,
        };
        self.finished = done_reason.is_some();
        Ok(Transition {
            next_state: self.state,
            reward: kind.entry_reward(),
            done: self.finished,
            done_reason,
        })
    }
}

impl CurriculumEnv for GridWorld {
    fn reset_task(&mut self, task: &TaskParameters, rng: &mut dyn RngCore) -> Result<StateKey> {
        let s = self.reset(task, rng)?;
        Ok(self.layout.state_key(s.agent))
    }

    fn reset_final(&mut self, _rng: &mut dyn RngCore) -> Result<StateKey> {
        let s = self.reset_at(self.layout.start());
        Ok(self.layout.state_key(s.agent))
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let t = GridWorld::step(self, action)?;
        Ok(StepOutcome {
            key: self.layout.state_key(t.next_state.agent),
            reward: t.reward,
            done: t.done,
            reached_goal: t.done_reason == Some(DoneReason::Treasure),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{map_complexity, MappingSpec, ParameterSpec};
    use crate::progression::Complexity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: &str = "\
S.F.
....
P..T
";

    fn small() -> Arc<GridWorldLayout> {
        Arc::new(GridWorldLayout::parse(SMALL).unwrap())
    }

    #[test]
    fn parse_derives_fire_halo() {
        let l = small();
        assert_eq!(l.kind(Cell::new(0, 1)), CellKind::FireAdjacent);
        assert_eq!(l.kind(Cell::new(0, 3)), CellKind::FireAdjacent);
        assert_eq!(l.kind(Cell::new(1, 2)), CellKind::FireAdjacent);
        assert_eq!(l.kind(Cell::new(0, 0)), CellKind::Plain);
        assert_eq!(l.kind(Cell::new(2, 0)), CellKind::Pit);
        assert_eq!(l.distance(Cell::new(2, 2)), Some(1));
        assert_eq!(l.distance(Cell::new(0, 0)), Some(5));
        assert_eq!(l.distance(Cell::new(2, 0)), None);
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(GridWorldLayout::parse("").is_err());
        assert!(GridWorldLayout::parse("S.\n.").is_err());
        assert!(GridWorldLayout::parse("S.T\nT..").is_err());
        assert!(GridWorldLayout::parse("S..").is_err());
        assert!(GridWorldLayout::parse("S.X\n..T").is_err());
        assert!(GridWorldLayout::parse("SF.\n..T").is_err());
        assert!(GridWorldLayout::parse("SP.\nP.T").is_err());
    }

    #[test]
    fn display_round_trips() {
        let l = GridWorldLayout::default_maze();
        assert_eq!(GridWorldLayout::parse(&l.to_string()).unwrap(), l);
    }

    #[test]
    fn default_maze_start_is_farthest_eligible() {
        let l = GridWorldLayout::default_maze();
        let s = l.distance(l.start()).unwrap();
        assert!(l.eligible_starts().iter().all(|&(_, d)| d <= s));
        // every shortest route crosses a fire halo; the clean detour is two moves longer
        assert_eq!(s, 21);
        assert_eq!(
            l.best_successful_return(l.start()),
            Some(TREASURE_REWARD - 22.0)
        );
    }

    #[test]
    fn scripted_rewards() {
        let l = small();
        let mut env = GridWorld::new(l.clone());
        env.reset_at(Cell::new(0, 0));
        let t = env.step(Action::North).unwrap();
        assert_eq!(
            (t.reward, t.done, t.next_state.agent),
            (-1.0, false, Cell::new(0, 0))
        );
        let t = env.step(Action::East).unwrap();
        assert_eq!(t.reward, FIRE_ADJACENT_REWARD);
        let t = env.step(Action::East).unwrap();
        assert_eq!((t.reward, t.done), (FIRE_REWARD, false));
        let t = env.step(Action::South).unwrap();
        assert_eq!(t.reward, FIRE_ADJACENT_REWARD);
        let t = env.step(Action::South).unwrap();
        assert_eq!(t.reward, STEP_REWARD);
        let t = env.step(Action::East).unwrap();
        assert_eq!(
            (t.reward, t.done, t.done_reason),
            (TREASURE_REWARD, true, Some(DoneReason::Treasure))
        );
        assert!(matches!(
            env.step(Action::East),
            Err(Error::EpisodeFinished)
        ));

        env.reset_at(Cell::new(1, 0));
        let t = env.step(Action::South).unwrap();
        assert_eq!(
            (t.reward, t.done, t.done_reason),
            (PIT_REWARD, true, Some(DoneReason::Pit))
        );
    }

    #[test]
    fn fiftieth_action_ends_episode() {
        let mut env = GridWorld::new(small());
        env.reset_at(Cell::new(0, 0));
        for k in 1..=MAX_ACTIONS {
            let t = env.step(Action::West).unwrap();
            assert_eq!(t.reward, STEP_REWARD);
            assert_eq!(t.done, k == MAX_ACTIONS);
            assert_eq!(t.done_reason.is_some(), t.done);
        }
        assert!(env.step(Action::West).is_err());
    }

    #[test]
    fn reset_follows_mapping() {
        let layout = Arc::new(GridWorldLayout::default_maze());
        let max = layout.distance(layout.start()).unwrap() as f64;
        let mapping = MappingSpec::new(
            "gridworld",
            vec![ParameterSpec::continuous(START_DISTANCE, 1.0, max).unwrap()],
        )
        .unwrap();
        let mut env = GridWorld::new(layout.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hard = map_complexity(&mapping, Complexity::FINAL);
        assert_eq!(env.reset(&hard, &mut rng).unwrap().agent, layout.start());
        let easy = map_complexity(&mapping, Complexity::EASIEST);
        for _ in 0..20 {
            let s = env.reset(&easy, &mut rng).unwrap();
            assert_eq!(layout.distance(s.agent), Some(1));
            assert_eq!(s.steps_taken, 0);
        }
        for k in 0..=20 {
            let task = map_complexity(&mapping, Complexity::new(k as f64 / 20.0).unwrap());
            let s = env.reset(&task, &mut rng).unwrap();
            assert_eq!(layout.kind(s.agent), CellKind::Plain);
        }
    }
}
