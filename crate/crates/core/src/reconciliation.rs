//! Explanation validity, completeness and minimally complete explanations.

use std::collections::BTreeSet;

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{apply_all, delta, gamma, FeatureChange, Model};
use crate::planner::{Plan, Planner};

/// Default cap on the model difference searched for an MCE.
pub const DEFAULT_MCE_LIMIT: usize = 16;

/// A robot model, a human model and the robot plan to explain.
#[derive(Clone, Debug)]
pub struct ReconciliationProblem {
    pub robot_model: Model,
    pub human_model: Model,
    pub robot_plan: Plan,
    pub planner: Planner,
}

impl ReconciliationProblem {
    /// Plans in the robot model to obtain the plan to explain.
    pub fn new(robot_model: Model, human_model: Model, planner: Planner) -> Result<Self> {
        let robot_plan = planner.optimal_plan(&robot_model)?;
        Ok(ReconciliationProblem { robot_model, human_model, robot_plan, planner })
    }

    /// Uses a given robot plan, which must be optimal in the robot model.
    pub fn with_plan(robot_model: Model, human_model: Model, robot_plan: Plan, planner: Planner) -> Result<Self> {
        let optimal = planner.optimal_cost(&robot_model);
        let cost = planner.execute(&robot_plan.steps, &robot_model).unwrap_or(f64::INFINITY);
        if !(cost.is_finite() && (cost - optimal).abs() <= 1e-9) {
            return Err(Error::RobotPlanNotOptimal { plan_cost: cost, optimal_cost: optimal });
        }
        Ok(ReconciliationProblem { robot_model, human_model, robot_plan, planner })
    }

    /// `Δ(M^R, M^H)`: the changes that carry the human model to the robot's.
    pub fn delta(&self) -> Vec<FeatureChange> {
        delta(&self.robot_model, &self.human_model)
    }

    /// Optimality gap of the robot plan in `model`.
    pub fn gap_in(&self, model: &Model) -> f64 {
        self.planner.optimality_gap(&self.robot_plan, model)
    }

    pub fn initial_gap(&self) -> f64 {
        self.gap_in(&self.human_model)
    }

    pub fn gap_after(&self, changes: &[FeatureChange]) -> Result<f64> {
        Ok(self.gap_in(&apply_all(&self.human_model, changes)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationSet {
    pub changes: Vec<FeatureChange>,
    pub complete: bool,
}

impl ExplanationSet {
    pub fn ids(&self) -> Vec<&str> {
        self.changes.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

/// Whether `changes` is an explanation: every feature it adds to the human
/// model belongs to the robot model, and the robot plan's optimality gap
/// strictly shrinks.
pub fn is_valid_explanation(problem: &ReconciliationProblem, changes: &[FeatureChange]) -> Result<bool> {
    let edited = apply_all(&problem.human_model, changes)?;
    let robot = gamma(&problem.robot_model);
    let human = gamma(&problem.human_model);
    if !gamma(&edited).difference(&human).all(|f| robot.contains(f)) {
        return Ok(false);
    }
    Ok(problem.gap_in(&edited) < problem.initial_gap())
}

/// Whether the robot plan is optimal in the edited human model.
pub fn is_complete(problem: &ReconciliationProblem, changes: &[FeatureChange]) -> Result<bool> {
    Ok(problem.gap_after(changes)? == 0.0)
}

/// The smallest complete explanation, found breadth-first over subset size.
/// Among equal-size candidates the one whose sorted ids are lexicographically
/// least wins.
pub fn minimally_complete_explanation(problem: &ReconciliationProblem, limit: usize) -> Result<ExplanationSet> {
    let changes = minimal_complete_subset(problem, &problem.delta(), limit)?;
    Ok(ExplanationSet { changes, complete: true })
}

/// Smallest complete subset of `candidates`, least by sorted ids among ties.
pub fn minimal_complete_subset(
    problem: &ReconciliationProblem,
    candidates: &[FeatureChange],
    limit: usize,
) -> Result<Vec<FeatureChange>> {
    if candidates.len() > limit {
        return Err(Error::LatticeTooLarge { size: candidates.len(), limit });
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for size in 0..=sorted.len() {
        // combinations of an id-sorted list come out in lexicographic order
        let subsets: Vec<Vec<usize>> = (0..sorted.len()).combinations(size).collect();
        let found = subsets.par_iter().find_first(|subset| {
            let chosen: Vec<FeatureChange> = subset.iter().map(|&i| sorted[i].clone()).collect();
            matches!(is_complete(problem, &chosen), Ok(true))
        });
        if let Some(subset) = found {
            return Ok(subset.iter().map(|&i| sorted[i].clone()).collect());
        }
    }
    Err(Error::NoCompleteExplanation)
}

/// The full model difference as an explanation set.
pub fn full_explanation(problem: &ReconciliationProblem) -> Result<ExplanationSet> {
    let changes = problem.delta();
    let complete = is_complete(problem, &changes)?;
    Ok(ExplanationSet { changes, complete })
}

/// Ids of a change list as a set, for order-insensitive comparisons.
pub fn id_set(changes: &[FeatureChange]) -> BTreeSet<&str> {
    changes.iter().map(|c| c.id.as_str()).collect()
}
