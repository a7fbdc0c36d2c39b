//! The goal-based MDP over human models reached by applying subsets of an
//! explanation, and the per-transition feature vector `Ψ(M, M')`.
//!
//! States are indexed by a bitmask over the explanation's changes (sorted by
//! id), so the state reached by applying change `i` in state `s` is
//! `s | 1 << i` and the goal is the all-ones mask.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{apply_all, FeatureChange, Model};
use crate::planner::Plan;
use crate::reconciliation::ReconciliationProblem;

pub const DEFAULT_LATTICE_LIMIT: usize = 14;

pub const FEATURE_COUNT: usize = 6;

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["x_min", "y_min", "x_max", "y_max", "cost_distance_sq", "action_distance"];

pub const X_MIN: usize = 0;
pub const Y_MIN: usize = 1;
pub const X_MAX: usize = 2;
pub const Y_MAX: usize = 3;
pub const COST_DISTANCE_SQ: usize = 4;
pub const ACTION_DISTANCE: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Learned weights `Θ`, aligned with [`FEATURE_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Scenario ids the weights were trained on.
    pub scenarios: Vec<String>,
    pub iterations: usize,
}

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        WeightVector {
            names: FEATURE_NAMES.iter().map(ToString::to_string).collect(),
            values,
            scenarios: Vec::new(),
            iterations: 0,
        }
    }

    pub fn zeros() -> Self {
        Self::new(vec![0.0; FEATURE_COUNT])
    }

    pub fn one_hot(index: usize) -> Self {
        let mut w = Self::zeros();
        w.values[index] = 1.0;
        w
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut w = self.clone();
        w.values.iter_mut().for_each(|v| *v *= factor);
        w
    }

    /// Weights divided by their largest absolute entry (all zeros stays zero).
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| v / max).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.values.len() != FEATURE_COUNT {
            return Err(Error::LengthMismatch { expected: FEATURE_COUNT, found: self.values.len() });
        }
        if self.names.len() != FEATURE_COUNT {
            return Err(Error::LengthMismatch { expected: FEATURE_COUNT, found: self.names.len() });
        }
        Ok(())
    }
}

/// The model distance metric `ρ = Θᵀ Ψ`.
pub fn rho(weights: &WeightVector, features: &FeatureVector) -> Result<f64> {
    weights.check()?;
    Ok(weights.values.iter().zip(features.0.iter()).map(|(w, f)| w * f).sum())
}

/// Jaccard distance between the action sets of two plans. Two empty plans
/// are at distance 0.
pub fn action_distance(p1: &Plan, p2: &Plan) -> f64 {
    let a = p1.action_set();
    let b = p2.action_set();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(&b).count() as f64 / union as f64
}

/// Squared optimal-cost difference divided by `normalizer`.
pub fn cost_distance_sq(cost1: f64, cost2: f64, normalizer: f64) -> f64 {
    let d = cost1 - cost2;
    d * d / normalizer
}

/// Grid geometry used by the position features.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialLayout {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    /// Cell of each change, keyed by change id.
    pub positions: BTreeMap<String, (usize, usize)>,
}

impl SpatialLayout {
    pub fn position(&self, id: &str) -> Result<(usize, usize)> {
        self.positions.get(id).copied().ok_or_else(|| Error::UnknownContingency(id.to_string()))
    }

    /// How far the new cell lies outside the bounding box of the cells
    /// explained so far (the start cell when none), per side, normalized by
    /// the grid size: `[x_min, y_min, x_max, y_max]`.
    pub fn features<'a>(
        &self,
        applied: impl IntoIterator<Item = &'a str>,
        change: &str,
    ) -> Result<[f64; 4]> {
        let (x, y) = self.position(change)?;
        let mut cells = applied.into_iter().map(|id| self.position(id)).collect::<Result<Vec<_>>>()?;
        if cells.is_empty() {
            cells.push(self.start);
        }
        let min_x = cells.iter().map(|c| c.0).min().unwrap_or(0);
        let max_x = cells.iter().map(|c| c.0).max().unwrap_or(0);
        let min_y = cells.iter().map(|c| c.1).min().unwrap_or(0);
        let max_y = cells.iter().map(|c| c.1).max().unwrap_or(0);
        let w = self.width as f64;
        let h = self.height as f64;
        Ok([
            min_x.saturating_sub(x) as f64 / w,
            min_y.saturating_sub(y) as f64 / h,
            x.saturating_sub(max_x) as f64 / w,
            y.saturating_sub(max_y) as f64 / h,
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostNormalizer {
    /// Largest squared optimal-cost difference over the lattice's transitions.
    LatticeMax,
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct MdpConfig {
    pub scenario_id: String,
    pub limit: usize,
    pub discount: f64,
    pub cost_normalizer: CostNormalizer,
    pub layout: Option<SpatialLayout>,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            scenario_id: String::new(),
            limit: DEFAULT_LATTICE_LIMIT,
            discount: 1.0,
            cost_normalizer: CostNormalizer::LatticeMax,
            layout: None,
        }
    }
}

/// One human model in the lattice.
#[derive(Clone, Debug)]
pub struct LatticeState {
    /// Bitmask of the applied changes.
    pub applied: u32,
    pub model: Model,
    /// Optimal plan, `None` when the model is unsolvable.
    pub plan: Option<Plan>,
    /// Optimal cost, or the lattice's finite surrogate when unsolvable.
    pub cost: f64,
}

impl PartialEq for LatticeState {
    fn eq(&self, other: &Self) -> bool {
        self.applied == other.applied
    }
}

#[derive(Clone, Debug)]
pub struct ExplanationMdp {
    scenario_id: String,
    changes: Vec<FeatureChange>,
    states: Vec<LatticeState>,
    features: Vec<FeatureVector>,
    discount: f64,
    cost_normalizer: f64,
    layout: Option<SpatialLayout>,
}

/// Enumerates the subset lattice of `explanation` over the problem's human
/// model, caching each state's model and optimal plan, and computes `Ψ` for
/// every transition.
pub fn build_mdp(
    problem: &ReconciliationProblem,
    explanation: &[FeatureChange],
    config: &MdpConfig,
) -> Result<ExplanationMdp> {
    let n = explanation.len();
    if n > config.limit || n >= 32 {
        return Err(Error::LatticeTooLarge { size: n, limit: config.limit.min(31) });
    }
    if !(config.discount > 0.0 && config.discount <= 1.0) {
        return Err(Error::InvalidConfig(format!("discount {} not in (0, 1]", config.discount)));
    }
    let mut changes = explanation.to_vec();
    changes.sort_by(|a, b| a.id.cmp(&b.id));
    if changes.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidConfig("explanation has duplicate change ids".into()));
    }
    if let Some(layout) = &config.layout {
        for change in &changes {
            layout.position(&change.id)?;
        }
    }

    let planner = problem.planner;
    let mut states = (0..1u32 << n)
        .into_par_iter()
        .map(|mask| {
            let chosen = changes.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| c);
            let model = apply_all(&problem.human_model, chosen)?;
            let plan = planner.optimal_plan(&model).ok();
            let cost = plan.as_ref().map_or(f64::INFINITY, |p| p.total_cost);
            Ok(LatticeState { applied: mask, model, plan, cost })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_solvable = states.iter().map(|s| s.cost).filter(|c| c.is_finite()).fold(0.0, f64::max);
    let traversal = match &config.layout {
        Some(layout) => (layout.width * layout.height) as f64,
        None => max_solvable.max(1.0),
    };
    for state in &mut states {
        if state.plan.is_none() {
            state.cost = max_solvable + traversal;
        }
    }

    let mut mdp = ExplanationMdp {
        scenario_id: config.scenario_id.clone(),
        changes,
        states,
        features: Vec::new(),
        discount: config.discount,
        cost_normalizer: 1.0,
        layout: config.layout.clone(),
    };
    mdp.cost_normalizer = match config.cost_normalizer {
        CostNormalizer::Fixed(v) if v > 0.0 => v,
        CostNormalizer::Fixed(v) => {
            return Err(Error::InvalidConfig(format!("cost normalizer {v} must be positive")))
        }
        CostNormalizer::LatticeMax => {
            let max = mdp
                .edges()
                .map(|(s, i)| {
                    let d = mdp.states[s as usize].cost - mdp.states[mdp.next(s, i) as usize].cost;
                    d * d
                })
                .fold(0.0, f64::max);
            if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };
    let features = (0..mdp.states.len() as u32)
        .into_par_iter()
        .flat_map_iter(|s| (0..n).map(move |i| (s, i)))
        .map(|(s, i)| {
            if s & (1 << i) != 0 {
                Ok(FeatureVector::default())
            } else {
                mdp.compute_features(s, i)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    mdp.features = features;
    Ok(mdp)
}

impl ExplanationMdp {
    fn compute_features(&self, state: u32, change: usize) -> Result<FeatureVector> {
        let before = &self.states[state as usize];
        let after = &self.states[self.next(state, change) as usize];
        let empty = Plan::empty();
        let mut v = [0.0; FEATURE_COUNT];
        v[ACTION_DISTANCE] =
            action_distance(before.plan.as_ref().unwrap_or(&empty), after.plan.as_ref().unwrap_or(&empty));
        v[COST_DISTANCE_SQ] = cost_distance_sq(before.cost, after.cost, self.cost_normalizer);
        if let Some(layout) = &self.layout {
            let applied = self.applied_ids(state);
            let [x_min, y_min, x_max, y_max] = layout.features(applied, &self.changes[change].id)?;
            v[X_MIN] = x_min;
            v[Y_MIN] = y_min;
            v[X_MAX] = x_max;
            v[Y_MAX] = y_max;
        }
        Ok(FeatureVector(v))
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    /// Number of changes in the explanation.
    pub fn n(&self) -> usize {
        self.changes.len()
    }

    /// The explanation's changes, sorted by id; index `i` is bit `i`.
    pub fn changes(&self) -> &[FeatureChange] {
        &self.changes
    }

    pub fn states(&self) -> &[LatticeState] {
        &self.states
    }

    pub fn state(&self, mask: u32) -> &LatticeState {
        &self.states[mask as usize]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn cost_normalizer(&self) -> f64 {
        self.cost_normalizer
    }

    pub fn layout(&self) -> Option<&SpatialLayout> {
        self.layout.as_ref()
    }

    pub fn initial(&self) -> u32 {
        0
    }

    pub fn goal(&self) -> u32 {
        ((1u64 << self.n()) - 1) as u32
    }

    pub fn is_goal(&self, mask: u32) -> bool {
        mask == self.goal()
    }

    /// Changes not yet applied in `mask`.
    pub fn enabled(&self, mask: u32) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.n()).filter(move |i| mask & (1 << i) == 0)
    }

    pub fn next(&self, mask: u32, change: usize) -> u32 {
        mask | (1 << change)
    }

    /// Deterministic transition; applying an already-applied change (in
    /// particular any change at the goal) leaves the state unchanged.
    pub fn transition(&self, mask: u32, change: usize) -> u32 {
        self.next(mask, change)
    }

    /// All enabled `(state, change)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        (0..self.states.len() as u32).flat_map(move |s| self.enabled(s).map(move |i| (s, i)))
    }

    pub fn transition_count(&self) -> usize {
        self.n() * self.states.len() / 2
    }

    pub fn features(&self, mask: u32, change: usize) -> &FeatureVector {
        &self.features[mask as usize * self.n() + change]
    }

    pub fn applied_ids(&self, mask: u32) -> impl Iterator<Item = &str> + '_ {
        self.changes
            .iter()
            .enumerate()
            .filter(move |(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| c.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.changes.binary_search_by(|c| c.id.as_str().cmp(id)).ok()
    }

    /// Maps a sequence of change ids onto change indices, requiring a
    /// complete ordering of the explanation.
    pub fn resolve(&self, ids: &[String]) -> Result<Vec<usize>> {
        let invalid = |reason: String| Error::InvalidTrace { scenario: self.scenario_id.clone(), reason };
        let mut seen = BTreeSet::new();
        let mut order = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self.index_of(id).ok_or_else(|| invalid(format!("unknown change `{id}`")))?;
            if !seen.insert(i) {
                return Err(invalid(format!("change `{id}` repeated")));
            }
            order.push(i);
        }
        if order.len() != self.n() {
            return Err(invalid(format!("{} of {} changes explained", order.len(), self.n())));
        }
        Ok(order)
    }

    /// Ids for an ordering given as change indices.
    pub fn ids(&self, order: &[usize]) -> Vec<String> {
        order.iter().map(|&i| self.changes[i].id.clone()).collect()
    }

    /// Per-transition discount factor `γ^t` for a transition out of `mask`.
    pub fn discount_at(&self, mask: u32) -> f64 {
        if self.discount == 1.0 {
            1.0
        } else {
            self.discount.powi(mask.count_ones() as i32)
        }
    }

    /// Discounted reward of applying `change` in `mask`.
    pub fn reward(&self, weights: &WeightVector, mask: u32, change: usize) -> Result<f64> {
        Ok(self.discount_at(mask) * rho(weights, self.features(mask, change))?)
    }

    /// Discounted feature vector of a transition.
    pub fn discounted_features(&self, mask: u32, change: usize) -> [f64; FEATURE_COUNT] {
        let d = self.discount_at(mask);
        self.features(mask, change).0.map(|v| v * d)
    }
}
