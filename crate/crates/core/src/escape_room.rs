//! The escape-room evaluation domain: grid mazes with marked contingency
//! cells that may be dangerous.
//!
//! The human believes every non-wall cell is traversable; the robot knows
//! which marked cells are dangerous. Each dangerous cell is one unit change
//! (its `clear` fact is removed from the human's initial state).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::irl::{soft_policy, Provenance, Trace};
use crate::mdp::{build_mdp, ExplanationMdp, MdpConfig, SpatialLayout, WeightVector};
use crate::model::{Action, FeatureChange, Model, ModelFeature};
use crate::planner::Planner;
use crate::reconciliation::{minimal_complete_subset, ReconciliationProblem, DEFAULT_MCE_LIMIT};

/// Letters usable for marked cells (`S` and `G` mark start and goal).
pub const MARK_LETTERS: &str = "ABCDEFHIJKLMNOPQRTUVWXYZ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
    Marked(char),
}

impl Cell {
    pub fn from_char(c: char) -> Option<Cell> {
        match c {
            '#' => Some(Cell::Wall),
            '.' => Some(Cell::Free),
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Goal),
            c if MARK_LETTERS.contains(c) => Some(Cell::Marked(c)),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Free => '.',
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Marked(c) => c,
        }
    }

    pub fn is_wall(self) -> bool {
        self == Cell::Wall
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contingency {
    pub x: usize,
    pub y: usize,
    pub dangerous: bool,
}

/// A maze; `x` is the column and `y` the row, both from the top-left corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub id: String,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    contingencies: BTreeMap<char, Contingency>,
}

impl Scenario {
    /// Builds a scenario from grid rows (`#` wall, `.` free, `S`, `G`, marked
    /// letters) and the set of dangerous letters.
    pub fn from_rows<S: AsRef<str>>(id: impl Into<String>, rows: &[S], dangerous: &BTreeSet<char>) -> Result<Self> {
        let id = id.into();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().chars().count());
        if width == 0 || height == 0 {
            return Err(Error::InvalidScenario(format!("scenario `{id}` has an empty grid")));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut contingencies = BTreeMap::new();
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::InvalidScenario(format!("row {y} of `{id}` is not {width} cells wide")));
            }
            for (x, c) in row.chars().enumerate() {
                let cell = Cell::from_char(c)
                    .ok_or_else(|| Error::InvalidScenario(format!("unknown cell `{c}` at ({x}, {y})")))?;
                if let Cell::Marked(letter) = cell {
                    let fresh = Contingency { x, y, dangerous: dangerous.contains(&letter) };
                    if contingencies.insert(letter, fresh).is_some() {
                        return Err(Error::InvalidScenario(format!("letter `{letter}` marks two cells")));
                    }
                }
                cells.push(cell);
            }
        }
        if let Some(letter) = dangerous.iter().find(|l| !contingencies.contains_key(l)) {
            return Err(Error::InvalidScenario(format!("dangerous letter `{letter}` is not on the grid")));
        }
        let scenario = Scenario { id, width, height, cells, contingencies };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        for (kind, cell) in [("start", Cell::Start), ("goal", Cell::Goal)] {
            let count = self.cells.iter().filter(|c| **c == cell).count();
            if count != 1 {
                return Err(Error::InvalidScenario(format!("`{}` has {count} {kind} cells", self.id)));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn contingencies(&self) -> &BTreeMap<char, Contingency> {
        &self.contingencies
    }

    pub fn dangerous(&self) -> BTreeSet<char> {
        self.contingencies.iter().filter(|(_, c)| c.dangerous).map(|(l, _)| *l).collect()
    }

    fn find(&self, target: Cell) -> (usize, usize) {
        let i = self.cells.iter().position(|c| *c == target).expect("validated scenario");
        (i % self.width, i / self.width)
    }

    pub fn start(&self) -> (usize, usize) {
        self.find(Cell::Start)
    }

    pub fn goal(&self) -> (usize, usize) {
        self.find(Cell::Goal)
    }

    pub fn rows(&self) -> Vec<String> {
        self.cells.chunks(self.width).map(|row| row.iter().map(|c| c.to_char()).collect()).collect()
    }

    /// Non-wall cells in row-major order.
    pub fn open_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cells.len()).filter(|&i| !self.cells[i].is_wall()).map(|i| (i % self.width, i / self.width))
    }

    pub fn neighbours(&self, (x, y): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let candidates = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        candidates
            .into_iter()
            .filter(|&(nx, ny)| nx < self.width && ny < self.height && !self.cell(nx, ny).is_wall())
    }

    /// Cells of one shortest start-to-goal path avoiding `blocked` marked
    /// cells, by breadth-first search.
    pub fn shortest_path(&self, blocked: &BTreeSet<char>) -> Option<Vec<(usize, usize)>> {
        let passable = |(x, y): (usize, usize)| match self.cell(x, y) {
            Cell::Marked(l) => !blocked.contains(&l),
            _ => true,
        };
        let start = self.start();
        let goal = self.goal();
        let mut parent = vec![usize::MAX; self.cells.len()];
        let mut queue = VecDeque::from([start]);
        parent[start.1 * self.width + start.0] = start.1 * self.width + start.0;
        while let Some(cell) = queue.pop_front() {
            if cell == goal {
                let mut path = vec![cell];
                let mut i = cell.1 * self.width + cell.0;
                while parent[i] != i {
                    i = parent[i];
                    path.push((i % self.width, i / self.width));
                }
                path.reverse();
                return Some(path);
            }
            for next in self.neighbours(cell) {
                let j = next.1 * self.width + next.0;
                if parent[j] == usize::MAX && passable(next) {
                    parent[j] = cell.1 * self.width + cell.0;
                    queue.push_back(next);
                }
            }
        }
        None
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Which marked cells become changes of the explanation lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LatticeScope {
    /// Only the dangerous cells (the complete model difference).
    #[default]
    Dangerous,
    /// Every marked cell; safe cells become confirmation facts that never
    /// affect a plan.
    AllMarked,
}

/// Which complete explanation the lattice is built over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExplanationChoice {
    Minimal,
    #[default]
    FullDelta,
}

pub fn at(x: usize, y: usize) -> String {
    format!("at-{x}-{y}")
}

pub fn clear(x: usize, y: usize) -> String {
    format!("clear-{x}-{y}")
}

pub fn confirmed_safe(x: usize, y: usize) -> String {
    format!("safe-{x}-{y}")
}

/// Robot and human models of a scenario and the change for each letter.
#[derive(Clone, Debug)]
pub struct CompiledPair {
    pub scenario_id: String,
    pub problem: ReconciliationProblem,
    pub change_catalog: BTreeMap<char, FeatureChange>,
}

impl CompiledPair {
    pub fn robot_model(&self) -> &Model {
        &self.problem.robot_model
    }

    pub fn human_model(&self) -> &Model {
        &self.problem.human_model
    }

    /// All catalog changes, sorted by letter.
    pub fn catalog_changes(&self) -> Vec<FeatureChange> {
        self.change_catalog.values().cloned().collect()
    }

    /// The smallest complete subset of the catalog; ties go to the
    /// lexicographically least letters.
    pub fn minimal_explanation(&self, limit: usize) -> Result<Vec<FeatureChange>> {
        minimal_complete_subset(&self.problem, &self.catalog_changes(), limit)
    }

    pub fn explanation(&self, choice: ExplanationChoice, limit: usize) -> Result<Vec<FeatureChange>> {
        match choice {
            ExplanationChoice::Minimal => self.minimal_explanation(limit),
            ExplanationChoice::FullDelta => Ok(self.catalog_changes()),
        }
    }
}

/// Compiles a scenario into a planning-model pair: one unit-cost move per
/// directed grid edge, a `clear` fact per traversable cell.
pub fn compile(scenario: &Scenario, scope: LatticeScope) -> Result<CompiledPair> {
    let mut actions = Vec::new();
    let mut clear_all = Vec::new();
    for (x, y) in scenario.open_cells() {
        clear_all.push(clear(x, y));
        for (nx, ny) in scenario.neighbours((x, y)) {
            actions.push(
                Action::new(format!("move-{x}-{y}-{nx}-{ny}"), 1.0)
                    .pre([at(x, y), clear(nx, ny)])
                    .add([at(nx, ny)])
                    .del([at(x, y)]),
            );
        }
    }
    let (sx, sy) = scenario.start();
    let (gx, gy) = scenario.goal();
    let goal = [at(gx, gy)];

    let mut human_init = clear_all.clone();
    human_init.push(at(sx, sy));
    let mut robot_init: BTreeSet<String> = human_init.iter().cloned().collect();
    let mut catalog = BTreeMap::new();
    for (&letter, c) in scenario.contingencies() {
        let id = letter.to_string();
        if c.dangerous {
            robot_init.remove(&clear(c.x, c.y));
            catalog.insert(letter, FeatureChange::remove(ModelFeature::InitHas(clear(c.x, c.y))).with_id(id));
        } else if scope == LatticeScope::AllMarked {
            robot_init.insert(confirmed_safe(c.x, c.y));
            catalog.insert(letter, FeatureChange::add(ModelFeature::InitHas(confirmed_safe(c.x, c.y))).with_id(id));
        }
    }

    let human = Model::new(human_init, goal.clone(), actions.clone())?;
    let robot = Model::new(robot_init, goal, actions)?;
    let problem = ReconciliationProblem::new(robot, human, Planner::new())
        .map_err(|_| Error::UnsolvableScenario(scenario.id.clone()))?;
    Ok(CompiledPair { scenario_id: scenario.id.clone(), problem, change_catalog: catalog })
}

/// Grid geometry of a scenario's marked cells, keyed by letter.
pub fn layout(scenario: &Scenario) -> SpatialLayout {
    SpatialLayout {
        width: scenario.width(),
        height: scenario.height(),
        start: scenario.start(),
        positions: scenario.contingencies().iter().map(|(l, c)| (l.to_string(), (c.x, c.y))).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeOptions {
    pub scope: LatticeScope,
    pub explanation: ExplanationChoice,
    pub lattice_limit: usize,
    pub mce_limit: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            scope: LatticeScope::Dangerous,
            explanation: ExplanationChoice::FullDelta,
            lattice_limit: crate::mdp::DEFAULT_LATTICE_LIMIT,
            mce_limit: DEFAULT_MCE_LIMIT,
        }
    }
}

/// Compiles a scenario and builds the explanation lattice over the chosen
/// complete explanation, with position features.
pub fn scenario_mdp(scenario: &Scenario, options: &LatticeOptions) -> Result<ExplanationMdp> {
    let pair = compile(scenario, options.scope)?;
    let mut explanation = pair.explanation(options.explanation, options.mce_limit)?;
    if options.scope == LatticeScope::AllMarked && options.explanation == ExplanationChoice::Minimal {
        // confirmations never change a plan, so the minimal set omits them;
        // the all-marked lattice adds them back
        let chosen: BTreeSet<String> = explanation.iter().map(|c| c.id.clone()).collect();
        explanation.extend(
            pair.catalog_changes()
                .into_iter()
                .filter(|c| !chosen.contains(&c.id) && c.direction == crate::model::Direction::Add),
        );
    }
    let config = MdpConfig {
        scenario_id: scenario.id.clone(),
        limit: options.lattice_limit,
        layout: Some(layout(scenario)),
        ..MdpConfig::default()
    };
    build_mdp(&pair.problem, &explanation, &config)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub contingencies: usize,
    pub danger_probability: f64,
    pub seed: u64,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            count: 8,
            width: 11,
            height: 11,
            contingencies: 7,
            danger_probability: 0.5,
            seed: 0,
            max_attempts: 10_000,
        }
    }
}

/// Rejection-samples braided mazes whose robot maze (dangerous cells
/// removed) still connects start and goal. Every intermediate human model
/// then keeps the robot's path, so every lattice state is solvable.
pub fn generate_scenarios(config: &GeneratorConfig) -> Result<Vec<Scenario>> {
    if config.width < 5 || config.height < 5 {
        return Err(Error::InvalidConfig("grid must be at least 5x5".into()));
    }
    if !(0.0..=1.0).contains(&config.danger_probability) {
        return Err(Error::InvalidConfig("danger probability must lie in [0, 1]".into()));
    }
    if config.contingencies > MARK_LETTERS.len() {
        return Err(Error::InvalidConfig(format!("at most {} contingencies", MARK_LETTERS.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scenarios = Vec::with_capacity(config.count);
    let mut attempts = 0;
    while scenarios.len() < config.count {
        if attempts >= config.max_attempts {
            return Err(Error::GenerationExhausted { attempts });
        }
        attempts += 1;
        let id = format!("scn-{:03}", scenarios.len());
        if let Some(scenario) = sample_scenario(&id, config, &mut rng) {
            scenarios.push(scenario);
        }
    }
    Ok(scenarios)
}

fn carve_maze(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    let mut open = vec![vec![false; width]; height];
    let cols = (width - 1) / 2;
    let rows = (height - 1) / 2;
    let mut visited = vec![vec![false; cols]; rows];
    let mut stack = vec![(rng.gen_range(0..cols), rng.gen_range(0..rows))];
    visited[stack[0].1][stack[0].0] = true;
    open[2 * stack[0].1 + 1][2 * stack[0].0 + 1] = true;
    while let Some(&(cx, cy)) = stack.last() {
        let mut next: Vec<(usize, usize)> = [(0, 1), (2, 1), (1, 0), (1, 2)]
            .iter()
            .filter_map(|&(dx, dy)| {
                let nx = (cx + dx).checked_sub(1)?;
                let ny = (cy + dy).checked_sub(1)?;
                (nx < cols && ny < rows && !visited[ny][nx]).then_some((nx, ny))
            })
            .collect();
        if next.is_empty() {
            stack.pop();
            continue;
        }
        next.shuffle(rng);
        let (nx, ny) = next[0];
        visited[ny][nx] = true;
        open[2 * ny + 1][2 * nx + 1] = true;
        open[cy + ny + 1][cx + nx + 1] = true;
        stack.push((nx, ny));
    }
    // braid: knock out some interior walls between two open cells to create loops
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            if open[y][x] {
                continue;
            }
            let horizontal = open[y][x - 1] && open[y][x + 1];
            let vertical = open[y - 1][x] && open[y + 1][x];
            if (horizontal ^ vertical) && rng.gen_bool(0.25) {
                open[y][x] = true;
            }
        }
    }
    open
}

fn sample_scenario(id: &str, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<Scenario> {
    let (w, h) = (config.width, config.height);
    let open = carve_maze(w, h, rng);
    let cells: Vec<(usize, usize)> =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| open[y][x]).collect();
    if cells.len() < config.contingencies + 2 {
        return None;
    }
    let start = *cells.choose(rng)?;
    let far: Vec<_> = cells
        .iter()
        .copied()
        .filter(|&(x, y)| x.abs_diff(start.0) + y.abs_diff(start.1) >= (w + h) / 2)
        .collect();
    let goal = *far.choose(rng)?;

    let mut grid: Vec<Vec<char>> =
        open.iter().map(|row| row.iter().map(|&o| if o { '.' } else { '#' }).collect()).collect();
    grid[start.1][start.0] = 'S';
    grid[goal.1][goal.0] = 'G';

    // favour cells on the human's initial route so contingencies matter
    let plain = Scenario::from_rows(id, &to_rows(&grid), &BTreeSet::new()).ok()?;
    let route: BTreeSet<(usize, usize)> = plain.shortest_path(&BTreeSet::new())?.into_iter().collect();
    let candidates: Vec<(usize, usize)> = cells.iter().copied().filter(|c| *c != start && *c != goal).collect();
    let mut chosen = Vec::with_capacity(config.contingencies);
    while chosen.len() < config.contingencies {
        let cell = *candidates
            .choose_weighted(rng, |c| {
                if chosen.contains(c) {
                    0.0
                } else if route.contains(c) {
                    4.0
                } else {
                    1.0
                }
            })
            .ok()?;
        chosen.push(cell);
    }
    let mut dangerous = BTreeSet::new();
    for (&(x, y), letter) in chosen.iter().zip(MARK_LETTERS.chars()) {
        grid[y][x] = letter;
        if rng.gen_bool(config.danger_probability) {
            dangerous.insert(letter);
        }
    }
    let scenario = Scenario::from_rows(id, &to_rows(&grid), &dangerous).ok()?;
    scenario.shortest_path(&dangerous)?;
    Some(scenario)
}

fn to_rows(grid: &[Vec<char>]) -> Vec<String> {
    grid.iter().map(|row| row.iter().collect()).collect()
}

/// Samples `per_scenario` orderings for each lattice from the maximum-entropy
/// distribution under `weights`, by rolling out the soft policy.
pub fn synthesize_traces<'a>(
    mdps: impl IntoIterator<Item = &'a ExplanationMdp>,
    weights: &WeightVector,
    per_scenario: usize,
    seed: u64,
) -> Result<Vec<Trace>> {
    let mut traces = Vec::new();
    for (stream, mdp) in mdps.into_iter().enumerate() {
        if mdp.n() > crate::mdp::DEFAULT_LATTICE_LIMIT {
            return Err(Error::LatticeTooLarge { size: mdp.n(), limit: crate::mdp::DEFAULT_LATTICE_LIMIT });
        }
        let policy = soft_policy(weights, mdp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        for _ in 0..per_scenario {
            let order = policy.sample(mdp, &mut rng);
            traces.push(Trace {
                scenario_id: mdp.scenario_id().to_string(),
                steps: mdp.ids(&order),
                provenance: Provenance::Synthetic,
            });
        }
    }
    Ok(traces)
}

/// A hand-drawn maze in the spirit of the study's nuclear-plant layout:
/// seven marked gateway cells between the start and the exit.
pub fn reference_scenario() -> Scenario {
    let rows = [
        "#############",
        "#S...A.....##",
        "#.###.###.#.#",
        "#.#...#B..#.#",
        "#C#.###.#####",
        "#.#...D.....#",
        "#.###.#####E#",
        "#...F.....#.#",
        "###.#####H#.#",
        "#...........#",
        "#.#########.#",
        "#..........G#",
        "#############",
    ];
    let dangerous: BTreeSet<char> = ['C', 'D', 'F', 'H'].into_iter().collect();
    Scenario::from_rows("reference", &rows, &dangerous).expect("reference maze is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ACTION_DISTANCE;
    use crate::model::delta;
    use crate::planner::PlanStatus;
    use crate::reconciliation::{id_set, is_complete};
    use crate::search::peg_order;

    fn scenario(rows: &[&str], dangerous: &str) -> Scenario {
        Scenario::from_rows("t", rows, &dangerous.chars().collect()).unwrap()
    }

    #[test]
    fn parse_rejects_bad_grids() {
        let none: BTreeSet<char> = BTreeSet::new();
        assert!(Scenario::from_rows("x", &["S.G", "..S"], &none).is_err());
        assert!(Scenario::from_rows("x", &["S..", "..."], &none).is_err());
        assert!(Scenario::from_rows("x", &["SAA", "..G"], &none).is_err());
        assert!(Scenario::from_rows("x", &["S.?", "..G"], &none).is_err());
        assert!(Scenario::from_rows("x", &["S.A", "..G"], &['B'].into()).is_err());
        assert!(Scenario::from_rows("x", &["S.A", "..G."], &none).is_err());
    }

    #[test]
    fn no_danger_means_no_explanation() {
        let s = scenario(&["S.A", "..G"], "");
        let pair = compile(&s, LatticeScope::Dangerous).unwrap();
        assert!(delta(pair.robot_model(), pair.human_model()).is_empty());
        assert!(pair.minimal_explanation(DEFAULT_MCE_LIMIT).unwrap().is_empty());
    }

    #[test]
    fn delta_matches_dangerous_letters() {
        let s = reference_scenario();
        let pair = compile(&s, LatticeScope::Dangerous).unwrap();
        let robot_delta = delta(pair.robot_model(), pair.human_model());
        assert_eq!(robot_delta.len(), s.dangerous().len());
        let catalog: BTreeSet<_> = pair.catalog_changes().into_iter().map(|c| c.feature).collect();
        assert_eq!(robot_delta.into_iter().map(|c| c.feature).collect::<BTreeSet<_>>(), catalog);
        let letters: Vec<char> = pair.change_catalog.keys().copied().collect();
        assert_eq!(letters, vec!['C', 'D', 'F', 'H']);
    }

    #[test]
    fn all_marked_scope_covers_every_letter() {
        let s = reference_scenario();
        let pair = compile(&s, LatticeScope::AllMarked).unwrap();
        assert_eq!(pair.change_catalog.len(), 7);
        assert_eq!(delta(pair.robot_model(), pair.human_model()).len(), 7);
        let options = LatticeOptions {
            scope: LatticeScope::AllMarked,
            explanation: ExplanationChoice::FullDelta,
            ..LatticeOptions::default()
        };
        let mdp = scenario_mdp(&s, &options).unwrap();
        assert_eq!(mdp.state_count(), 128);
        // confirming a safe cell never changes the plan
        let b = mdp.index_of("B").unwrap();
        for mask in 0..128u32 {
            if mask & (1 << b) == 0 {
                assert_eq!(mdp.features(mask, b)[ACTION_DISTANCE], 0.0);
            }
        }
    }

    #[test]
    fn single_blocker_on_unique_route_is_the_mce() {
        // 5x5 corridor: the only short route passes A; the detour is longer
        let s = scenario(&["#####", "#SAG#", "#.#.#", "#...#", "#####"], "A");
        let pair = compile(&s, LatticeScope::Dangerous).unwrap();
        assert_eq!(pair.problem.robot_plan.total_cost, 6.0);
        let mce = pair.minimal_explanation(DEFAULT_MCE_LIMIT).unwrap();
        assert_eq!(mce.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), vec!["A"]);
    }

    #[test]
    fn mce_keeps_only_path_relevant_dangers() {
        let s = reference_scenario();
        let pair = compile(&s, LatticeScope::Dangerous).unwrap();
        let mce = pair.minimal_explanation(DEFAULT_MCE_LIMIT).unwrap();
        let full = pair.catalog_changes();
        assert!(id_set(&mce).is_subset(&id_set(&full)));
        assert!(is_complete(&pair.problem, &mce).unwrap());
    }

    #[test]
    fn robot_plan_stays_valid_across_the_lattice() {
        let s = reference_scenario();
        let options = LatticeOptions { explanation: ExplanationChoice::FullDelta, ..LatticeOptions::default() };
        let mdp = scenario_mdp(&s, &options).unwrap();
        let pair = compile(&s, LatticeScope::Dangerous).unwrap();
        for state in mdp.states() {
            assert!(state.plan.is_some());
            let outcome = Planner::new().plan_cost_in(&pair.problem.robot_plan, &state.model);
            assert_ne!(outcome.status, PlanStatus::Invalid);
        }
        // cost never drops as dangers are revealed
        for (mask, i) in mdp.edges() {
            assert!(mdp.state(mdp.next(mask, i)).cost >= mdp.state(mask).cost);
        }
        assert_eq!(mdp.state(mdp.goal()).cost, pair.problem.robot_plan.total_cost);
    }

    #[test]
    fn applying_the_catalog_yields_the_robot_maze() {
        for s in generate_scenarios(&GeneratorConfig { count: 6, seed: 4, ..GeneratorConfig::default() }).unwrap() {
            let pair = compile(&s, LatticeScope::Dangerous).unwrap();
            let edited = crate::model::apply_all(pair.human_model(), &pair.catalog_changes()).unwrap();
            assert_eq!(&edited, pair.robot_model());
        }
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let config = GeneratorConfig { count: 8, seed: 11, ..GeneratorConfig::default() };
        let first = generate_scenarios(&config).unwrap();
        assert_eq!(first, generate_scenarios(&config).unwrap());
        assert_eq!(first.len(), 8);
        for s in &first {
            assert_eq!(s.contingencies().len(), 7);
            assert!(s.shortest_path(&s.dangerous()).is_some());
        }
        let other = generate_scenarios(&GeneratorConfig { seed: 12, ..config.clone() }).unwrap();
        assert_ne!(first, other);
    }

    #[test]
    fn zero_danger_probability_generates_empty_deltas() {
        let config = GeneratorConfig { count: 5, danger_probability: 0.0, ..GeneratorConfig::default() };
        for s in generate_scenarios(&config).unwrap() {
            assert!(s.dangerous().is_empty());
            let pair = compile(&s, LatticeScope::Dangerous).unwrap();
            assert!(delta(pair.robot_model(), pair.human_model()).is_empty());
        }
    }

    #[test]
    fn generator_gives_up() {
        let config = GeneratorConfig { contingencies: 20, width: 5, height: 5, max_attempts: 3, ..GeneratorConfig::default() };
        assert_eq!(generate_scenarios(&config), Err(Error::GenerationExhausted { attempts: 3 }));
    }

    #[test]
    fn synthesized_trace_counts_and_uniformity() {
        let config = GeneratorConfig { count: 5, seed: 3, danger_probability: 0.6, ..GeneratorConfig::default() };
        let options = LatticeOptions { explanation: ExplanationChoice::FullDelta, ..LatticeOptions::default() };
        let mdps: Vec<_> = generate_scenarios(&config)
            .unwrap()
            .iter()
            .map(|s| scenario_mdp(s, &options).unwrap())
            .collect();
        let traces = synthesize_traces(&mdps, &WeightVector::zeros(), 5, 1).unwrap();
        assert_eq!(traces.len(), 25);
        assert!(traces.iter().all(|t| t.provenance == Provenance::Synthetic));
        assert_eq!(traces, synthesize_traces(&mdps, &WeightVector::zeros(), 5, 1).unwrap());
    }

    #[test]
    fn peaked_weights_make_the_peg_order_modal() {
        let s = reference_scenario();
        let options = LatticeOptions { explanation: ExplanationChoice::FullDelta, ..LatticeOptions::default() };
        let mdp = scenario_mdp(&s, &options).unwrap();
        let w = WeightVector::new(vec![-1.0, -1.0, -1.0, -1.0, 0.0, -8.0]);
        let traces = synthesize_traces([&mdp], &w, 1000, 5).unwrap();
        let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for t in traces {
            *counts.entry(t.steps).or_default() += 1;
        }
        let mode = counts.iter().max_by_key(|(_, c)| **c).unwrap().0;
        let best = peg_order(&mdp, &w).unwrap().total_reward;
        let mode_reward = crate::irl::trace_reward(&w, &mdp.resolve(mode).unwrap(), &mdp).unwrap();
        assert!((mode_reward - best).abs() < 1e-9, "{mode_reward} vs {best}");
    }
}
