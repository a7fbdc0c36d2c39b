//! Optimal planning by uniform-cost search over grounded states.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::model::Model;

/// Cost sentinel for unsolvable models and inapplicable plans.
pub const INFINITE_COST: f64 = f64::INFINITY;

const COST_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub steps: Vec<String>,
    pub total_cost: f64,
}

impl Plan {
    pub fn empty() -> Self {
        Plan { steps: Vec::new(), total_cost: 0.0 }
    }

    /// The plan's actions as a set (order and repetition ignored).
    pub fn action_set(&self) -> BTreeSet<&str> {
        self.steps.iter().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanStatus {
    Optimal,
    ValidSuboptimal,
    Invalid,
    Unsolvable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanOutcome {
    pub status: PlanStatus,
    pub cost: f64,
}

/// `a - b` under sentinel arithmetic: infinity minus anything finite is
/// infinity, and two infinities are treated as an infinite gap.
pub fn gap(plan_cost: f64, optimal_cost: f64) -> f64 {
    if plan_cost.is_infinite() {
        INFINITE_COST
    } else {
        (plan_cost - optimal_cost).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Bits(Box<[u64]>);

impl Bits {
    fn zeros(words: usize) -> Self {
        Bits(vec![0; words].into_boxed_slice())
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    fn contains_all(&self, other: &Bits) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(s, o)| s & o == *o)
    }

    fn apply(&self, add: &Bits, del: &Bits) -> Bits {
        let words = self
            .0
            .iter()
            .zip(add.0.iter())
            .zip(del.0.iter())
            .map(|((s, a), d)| (s & !d) | a)
            .collect();
        Bits(words)
    }
}

struct GroundAction {
    name: String,
    pre: Bits,
    soft: Vec<usize>,
    add: Bits,
    del: Bits,
    cost: f64,
}

struct Grounded {
    actions: Vec<GroundAction>,
    by_name: HashMap<String, usize>,
    init: Bits,
    goal: Bits,
}

impl Grounded {
    fn new(model: &Model) -> Self {
        let index: BTreeMap<&str, usize> =
            model.predicates().into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        let words = index.len().div_ceil(64).max(1);
        let bits = |preds: &mut dyn Iterator<Item = &str>| {
            let mut b = Bits::zeros(words);
            for p in preds {
                b.set(index[p]);
            }
            b
        };
        let init = bits(&mut model.init().into_iter());
        let goal = bits(&mut model.goal().into_iter());
        // `Model::actions` yields actions sorted by name
        let actions: Vec<GroundAction> = model
            .actions()
            .into_iter()
            .map(|a| GroundAction {
                pre: bits(&mut a.preconditions.iter().map(String::as_str)),
                soft: a.soft_preconditions.iter().map(|p| index[p.as_str()]).collect(),
                add: bits(&mut a.add_effects.iter().map(String::as_str)),
                del: bits(&mut a.del_effects.iter().map(String::as_str)),
                cost: a.cost,
                name: a.name,
            })
            .collect();
        let by_name = actions.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
        Grounded { actions, by_name, init, goal }
    }

    fn step_cost(&self, action: &GroundAction, state: &Bits, soft_penalty: f64) -> f64 {
        if soft_penalty == 0.0 {
            return action.cost;
        }
        let violated = action.soft.iter().filter(|&&p| !state.get(p)).count();
        action.cost + soft_penalty * violated as f64
    }
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    state: Bits,
    action: Option<usize>,
    parent: usize,
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.state.cmp(&other.state))
            .then_with(|| self.action.cmp(&other.action))
            .then_with(|| self.parent.cmp(&other.parent))
    }
}

/// Uniform-cost planner. Ties among equal-cost frontier nodes are broken by
/// state encoding, then by action name, so plans are deterministic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Planner {
    soft_penalty: f64,
}

impl Planner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Penalty added to an action's cost per unsatisfied soft precondition.
    pub fn with_soft_penalty(mut self, penalty: f64) -> Self {
        self.soft_penalty = penalty;
        self
    }

    pub fn soft_penalty(&self) -> f64 {
        self.soft_penalty
    }

    /// A minimum-cost plan from the model's initial state to its goal.
    pub fn optimal_plan(&self, model: &Model) -> Result<Plan> {
        let task = Grounded::new(model);
        // node: (parent, action)
        let mut nodes: Vec<(usize, Option<usize>)> = Vec::new();
        let mut closed: HashSet<Bits> = HashSet::new();
        let mut best: HashMap<Bits, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(task.init.clone(), 0.0);
        heap.push(Reverse(Frontier { cost: 0.0, state: task.init.clone(), action: None, parent: 0 }));

        while let Some(Reverse(entry)) = heap.pop() {
            if !closed.insert(entry.state.clone()) {
                continue;
            }
            let id = nodes.len();
            nodes.push((entry.parent, entry.action));
            if entry.state.contains_all(&task.goal) {
                let mut steps = Vec::new();
                let mut cursor = id;
                while let (parent, Some(action)) = nodes[cursor] {
                    steps.push(task.actions[action].name.clone());
                    cursor = parent;
                }
                steps.reverse();
                return Ok(Plan { steps, total_cost: entry.cost });
            }
            for (i, action) in task.actions.iter().enumerate() {
                if !entry.state.contains_all(&action.pre) {
                    continue;
                }
                let next = entry.state.apply(&action.add, &action.del);
                if closed.contains(&next) {
                    continue;
                }
                let cost = entry.cost + task.step_cost(action, &entry.state, self.soft_penalty);
                let improves = match best.get(&next) {
                    Some(&known) => cost <= known,
                    None => true,
                };
                if improves {
                    best.insert(next.clone(), cost);
                    heap.push(Reverse(Frontier { cost, state: next, action: Some(i), parent: id }));
                }
            }
        }
        Err(Error::Unsolvable)
    }

    /// Optimal cost, or [`INFINITE_COST`] for unsolvable models.
    pub fn optimal_cost(&self, model: &Model) -> f64 {
        self.optimal_plan(model).map_or(INFINITE_COST, |p| p.total_cost)
    }

    /// Executes `steps` in `model`; the cost if every step applies and the
    /// goal holds at the end.
    pub fn execute(&self, steps: &[String], model: &Model) -> Option<f64> {
        let task = Grounded::new(model);
        let mut state = task.init.clone();
        let mut cost = 0.0;
        for name in steps {
            let action = &task.actions[*task.by_name.get(name)?];
            if !state.contains_all(&action.pre) {
                return None;
            }
            cost += task.step_cost(action, &state, self.soft_penalty);
            state = state.apply(&action.add, &action.del);
        }
        state.contains_all(&task.goal).then_some(cost)
    }

    /// Cost and status of a fixed plan evaluated in `model`.
    pub fn plan_cost_in(&self, plan: &Plan, model: &Model) -> PlanOutcome {
        let optimal = self.optimal_cost(model);
        if optimal.is_infinite() {
            return PlanOutcome { status: PlanStatus::Unsolvable, cost: INFINITE_COST };
        }
        match self.execute(&plan.steps, model) {
            None => PlanOutcome { status: PlanStatus::Invalid, cost: INFINITE_COST },
            Some(cost) if cost <= optimal + COST_EPS => PlanOutcome { status: PlanStatus::Optimal, cost },
            Some(cost) => PlanOutcome { status: PlanStatus::ValidSuboptimal, cost },
        }
    }

    /// `cost(plan, model) - cost*(model)` under sentinel arithmetic.
    pub fn optimality_gap(&self, plan: &Plan, model: &Model) -> f64 {
        let optimal = self.optimal_cost(model);
        let cost = self.execute(&plan.steps, model).unwrap_or(INFINITE_COST);
        let g = gap(cost, optimal);
        if g.is_finite() && g <= COST_EPS {
            0.0
        } else {
            g
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{amy, monica, OUTLET, PARK};
    use crate::model::Action;

    fn chain(n: usize) -> Model {
        let actions = (0..n).map(|i| {
            Action::new(format!("step{i}"), 1.0)
                .pre([format!("p{i}")])
                .add([format!("p{}", i + 1)])
                .del([format!("p{i}")])
        });
        Model::new(["p0"], [format!("p{n}")], actions).unwrap()
    }

    #[test]
    fn chain_plan_is_linear() {
        let plan = Planner::new().optimal_plan(&chain(4)).unwrap();
        assert_eq!(plan.steps, vec!["step0", "step1", "step2", "step3"]);
        assert_eq!(plan.total_cost, 4.0);
    }

    #[test]
    fn goal_in_init_gives_empty_plan() {
        let model = Model::new(["p"], ["p"], vec![Action::new("noop", 1.0).pre(["p"]).add(["q"])]).unwrap();
        let plan = Planner::new().optimal_plan(&model).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.total_cost, 0.0);
    }

    #[test]
    fn unreachable_goal_is_unsolvable() {
        let model = Model::new(["p"], ["g"], vec![Action::new("a", 1.0).pre(["p"]).add(["q"])]).unwrap();
        assert_eq!(Planner::new().optimal_plan(&model), Err(Error::Unsolvable));
        assert_eq!(Planner::new().optimal_cost(&model), INFINITE_COST);
    }

    #[test]
    fn amy_prefers_outlet_and_monica_the_park() {
        let planner = Planner::new();
        assert_eq!(planner.optimal_plan(&amy()).unwrap().steps, vec![OUTLET]);
        let robot = planner.optimal_plan(&monica()).unwrap();
        assert_eq!(robot.steps, vec![PARK]);
        assert_eq!(planner.plan_cost_in(&robot, &monica()).status, PlanStatus::Optimal);
        let in_amy = planner.plan_cost_in(&robot, &amy());
        assert_eq!(in_amy, PlanOutcome { status: PlanStatus::ValidSuboptimal, cost: 2.0 });
        assert_eq!(planner.optimality_gap(&robot, &amy()), 1.0);
    }

    #[test]
    fn soft_penalty_charges_violations() {
        let planner = Planner::new().with_soft_penalty(0.5);
        // both soft preconditions violated in Amy's initial state
        assert_eq!(planner.optimal_cost(&amy()), 2.0);
        assert_eq!(planner.optimal_cost(&monica()), 2.0);
    }

    #[test]
    fn unknown_action_is_invalid() {
        let plan = Plan { steps: vec!["FLY".into()], total_cost: 1.0 };
        let outcome = Planner::new().plan_cost_in(&plan, &amy());
        assert_eq!(outcome.status, PlanStatus::Invalid);
        assert!(outcome.cost.is_infinite());
    }

    #[test]
    fn inapplicable_step_is_invalid() {
        let plan = Plan { steps: vec![OUTLET.into()], total_cost: 1.0 };
        assert_eq!(Planner::new().plan_cost_in(&plan, &monica()).status, PlanStatus::Invalid);
        assert!(Planner::new().optimality_gap(&plan, &monica()).is_infinite());
    }

    #[test]
    fn gap_sentinel_arithmetic() {
        assert_eq!(gap(5.0, 3.0), 2.0);
        assert!(gap(INFINITE_COST, 3.0).is_infinite());
        assert!(gap(INFINITE_COST, INFINITE_COST).is_infinite());
        assert!(!(gap(INFINITE_COST, INFINITE_COST) < gap(INFINITE_COST, INFINITE_COST)));
    }

    #[test]
    fn planning_is_deterministic_among_equal_cost_routes() {
        // two symmetric routes from s to g
        let actions = vec![
            Action::new("via-b-1", 1.0).pre(["s"]).add(["b"]).del(["s"]),
            Action::new("via-a-1", 1.0).pre(["s"]).add(["a"]).del(["s"]),
            Action::new("via-a-2", 1.0).pre(["a"]).add(["g"]).del(["a"]),
            Action::new("via-b-2", 1.0).pre(["b"]).add(["g"]).del(["b"]),
        ];
        let model = Model::new(["s"], ["g"], actions).unwrap();
        let first = Planner::new().optimal_plan(&model).unwrap();
        for _ in 0..5 {
            assert_eq!(Planner::new().optimal_plan(&model).unwrap(), first);
        }
        assert_eq!(first.total_cost, 2.0);
    }
}
