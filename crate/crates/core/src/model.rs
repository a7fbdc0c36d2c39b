//! STRIPS-style planning models viewed as sets of model features.
//!
//! A [`Model`] is stored as its feature set, so [`gamma`] is the identity on
//! the representation and two models are equal exactly when their feature
//! sets are. Structured views ([`Model::actions`], [`Model::init`], ...) are
//! derived on demand.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Nonnegative, finite action cost with a total order.
#[derive(Clone, Copy, Debug)]
pub struct Cost(f64);

impl Cost {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidModel(format!("action cost {value} must be finite and >= 0")));
        }
        // collapse -0.0 so equal costs hash equally
        Ok(Cost(value + 0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Cost {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Hash for Cost {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    InitHas,
    GoalHas,
    ActionHasPrecondition,
    ActionHasSoftPrecondition,
    ActionHasAddEffect,
    ActionHasDelEffect,
    ActionHasCost,
}

/// One atomic fact about a model.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelFeature {
    InitHas(String),
    GoalHas(String),
    Precondition { action: String, predicate: String },
    /// Preferred-but-optional precondition; violating it costs the planner's soft penalty.
    SoftPrecondition { action: String, predicate: String },
    AddEffect { action: String, predicate: String },
    DelEffect { action: String, predicate: String },
    Cost { action: String, cost: Cost },
}

impl ModelFeature {
    pub fn kind(&self) -> FeatureKind {
        match self {
            ModelFeature::InitHas(_) => FeatureKind::InitHas,
            ModelFeature::GoalHas(_) => FeatureKind::GoalHas,
            ModelFeature::Precondition { .. } => FeatureKind::ActionHasPrecondition,
            ModelFeature::SoftPrecondition { .. } => FeatureKind::ActionHasSoftPrecondition,
            ModelFeature::AddEffect { .. } => FeatureKind::ActionHasAddEffect,
            ModelFeature::DelEffect { .. } => FeatureKind::ActionHasDelEffect,
            ModelFeature::Cost { .. } => FeatureKind::ActionHasCost,
        }
    }

    pub fn action(&self) -> Option<&str> {
        match self {
            ModelFeature::InitHas(_) | ModelFeature::GoalHas(_) => None,
            ModelFeature::Precondition { action, .. }
            | ModelFeature::SoftPrecondition { action, .. }
            | ModelFeature::AddEffect { action, .. }
            | ModelFeature::DelEffect { action, .. }
            | ModelFeature::Cost { action, .. } => Some(action),
        }
    }

    pub fn predicate(&self) -> Option<&str> {
        match self {
            ModelFeature::InitHas(p) | ModelFeature::GoalHas(p) => Some(p),
            ModelFeature::Precondition { predicate, .. }
            | ModelFeature::SoftPrecondition { predicate, .. }
            | ModelFeature::AddEffect { predicate, .. }
            | ModelFeature::DelEffect { predicate, .. } => Some(predicate),
            ModelFeature::Cost { .. } => None,
        }
    }
}

impl fmt::Display for ModelFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFeature::InitHas(p) => write!(f, "init-has-{p}"),
            ModelFeature::GoalHas(p) => write!(f, "goal-has-{p}"),
            ModelFeature::Precondition { action, predicate } => {
                write!(f, "{action}-has-precondition-{predicate}")
            }
            ModelFeature::SoftPrecondition { action, predicate } => {
                write!(f, "{action}-has-soft-precondition-{predicate}")
            }
            ModelFeature::AddEffect { action, predicate } => {
                write!(f, "{action}-has-add-effect-{predicate}")
            }
            ModelFeature::DelEffect { action, predicate } => {
                write!(f, "{action}-has-del-effect-{predicate}")
            }
            ModelFeature::Cost { action, cost } => write!(f, "{action}-has-cost-{cost}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Add,
    Remove,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Add => Direction::Remove,
            Direction::Remove => Direction::Add,
        }
    }
}

/// A unit edit of a model's feature set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureChange {
    pub direction: Direction,
    pub feature: ModelFeature,
    pub id: String,
}

impl FeatureChange {
    /// Creates a change whose id is the canonical serialization `+feature` / `-feature`.
    pub fn new(direction: Direction, feature: ModelFeature) -> Self {
        let id = Self::canonical_id(direction, &feature);
        FeatureChange { direction, feature, id }
    }

    pub fn add(feature: ModelFeature) -> Self {
        Self::new(Direction::Add, feature)
    }

    pub fn remove(feature: ModelFeature) -> Self {
        Self::new(Direction::Remove, feature)
    }

    pub fn canonical_id(direction: Direction, feature: &ModelFeature) -> String {
        match direction {
            Direction::Add => format!("+{feature}"),
            Direction::Remove => format!("-{feature}"),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// The change that undoes this one (canonical id).
    pub fn inverse(&self) -> Self {
        Self::new(self.direction.flipped(), self.feature.clone())
    }
}

impl fmt::Display for FeatureChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Structured view of one action.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub name: String,
    pub preconditions: BTreeSet<String>,
    pub soft_preconditions: BTreeSet<String>,
    pub add_effects: BTreeSet<String>,
    pub del_effects: BTreeSet<String>,
    pub cost: f64,
}

fn strings<I, S>(items: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    items.into_iter().map(Into::into).collect()
}

impl Action {
    pub fn new(name: impl Into<String>, cost: f64) -> Self {
        Action {
            name: name.into(),
            preconditions: BTreeSet::new(),
            soft_preconditions: BTreeSet::new(),
            add_effects: BTreeSet::new(),
            del_effects: BTreeSet::new(),
            cost,
        }
    }

    pub fn pre<I: IntoIterator<Item = S>, S: Into<String>>(mut self, items: I) -> Self {
        self.preconditions.extend(strings(items));
        self
    }

    pub fn soft<I: IntoIterator<Item = S>, S: Into<String>>(mut self, items: I) -> Self {
        self.soft_preconditions.extend(strings(items));
        self
    }

    pub fn add<I: IntoIterator<Item = S>, S: Into<String>>(mut self, items: I) -> Self {
        self.add_effects.extend(strings(items));
        self
    }

    pub fn del<I: IntoIterator<Item = S>, S: Into<String>>(mut self, items: I) -> Self {
        self.del_effects.extend(strings(items));
        self
    }

    fn features(&self) -> Result<Vec<ModelFeature>> {
        if self.name.is_empty() {
            return Err(Error::InvalidModel("action with empty name".into()));
        }
        if let Some(p) = self.add_effects.intersection(&self.del_effects).next() {
            return Err(Error::InvalidModel(format!(
                "action `{}` both adds and deletes `{p}`",
                self.name
            )));
        }
        let action = || self.name.clone();
        let mut out = vec![ModelFeature::Cost { action: action(), cost: Cost::new(self.cost)? }];
        out.extend(self.preconditions.iter().map(|p| ModelFeature::Precondition {
            action: action(),
            predicate: p.clone(),
        }));
        out.extend(self.soft_preconditions.iter().map(|p| ModelFeature::SoftPrecondition {
            action: action(),
            predicate: p.clone(),
        }));
        out.extend(self.add_effects.iter().map(|p| ModelFeature::AddEffect {
            action: action(),
            predicate: p.clone(),
        }));
        out.extend(self.del_effects.iter().map(|p| ModelFeature::DelEffect {
            action: action(),
            predicate: p.clone(),
        }));
        Ok(out)
    }
}

/// A planning model `(D, I, G)` held as its feature set.
///
/// Declared predicates are the predicates referenced by any feature; they
/// are not stored separately, which keeps the feature map injective.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Model {
    features: BTreeSet<ModelFeature>,
}

impl Model {
    /// Builds a well-formed model from its components.
    pub fn new<I, G, S, T>(init: I, goal: G, actions: impl IntoIterator<Item = Action>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        G: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut features = BTreeSet::new();
        features.extend(init.into_iter().map(|p| ModelFeature::InitHas(p.into())));
        features.extend(goal.into_iter().map(|p| ModelFeature::GoalHas(p.into())));
        let mut names = BTreeSet::new();
        for action in actions {
            if !names.insert(action.name.clone()) {
                return Err(Error::InvalidModel(format!("duplicate action `{}`", action.name)));
            }
            features.extend(action.features()?);
        }
        Ok(Model { features })
    }

    /// Wraps a raw feature set without validation. Intermediate models of an
    /// explanation may be transiently ill-formed (e.g. mid cost edit).
    pub fn from_features(features: BTreeSet<ModelFeature>) -> Self {
        Model { features }
    }

    pub fn features(&self) -> &BTreeSet<ModelFeature> {
        &self.features
    }

    pub fn into_features(self) -> BTreeSet<ModelFeature> {
        self.features
    }

    pub fn contains(&self, feature: &ModelFeature) -> bool {
        self.features.contains(feature)
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn init(&self) -> BTreeSet<&str> {
        self.features
            .iter()
            .filter_map(|f| match f {
                ModelFeature::InitHas(p) => Some(p.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn goal(&self) -> BTreeSet<&str> {
        self.features
            .iter()
            .filter_map(|f| match f {
                ModelFeature::GoalHas(p) => Some(p.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn predicates(&self) -> BTreeSet<&str> {
        self.features.iter().filter_map(ModelFeature::predicate).collect()
    }

    /// Structured action view. An action without a cost feature costs 0; one
    /// carrying several (mid cost edit) costs the largest of them.
    pub fn actions(&self) -> Vec<Action> {
        let mut by_name: BTreeMap<&str, Action> = BTreeMap::new();
        let mut costs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for feature in &self.features {
            let Some(name) = feature.action() else { continue };
            let action = by_name.entry(name).or_insert_with(|| Action::new(name, 0.0));
            match feature {
                ModelFeature::Precondition { predicate, .. } => {
                    action.preconditions.insert(predicate.clone());
                }
                ModelFeature::SoftPrecondition { predicate, .. } => {
                    action.soft_preconditions.insert(predicate.clone());
                }
                ModelFeature::AddEffect { predicate, .. } => {
                    action.add_effects.insert(predicate.clone());
                }
                ModelFeature::DelEffect { predicate, .. } => {
                    action.del_effects.insert(predicate.clone());
                }
                ModelFeature::Cost { cost, .. } => costs.entry(name).or_default().push(cost.value()),
                ModelFeature::InitHas(_) | ModelFeature::GoalHas(_) => unreachable!(),
            }
        }
        for (name, values) in costs {
            if let Some(action) = by_name.get_mut(name) {
                action.cost = values.into_iter().fold(0.0, f64::max);
            }
        }
        by_name.into_values().collect()
    }

    pub fn action(&self, name: &str) -> Option<Action> {
        self.actions().into_iter().find(|a| a.name == name)
    }

    /// Checks the well-formedness invariants: each action has exactly one
    /// cost and disjoint add/delete effects.
    pub fn validate(&self) -> Result<()> {
        let mut cost_count: BTreeMap<&str, usize> = BTreeMap::new();
        for feature in &self.features {
            if let Some(name) = feature.action() {
                let count = cost_count.entry(name).or_default();
                if feature.kind() == FeatureKind::ActionHasCost {
                    *count += 1;
                }
            }
        }
        if let Some((name, count)) = cost_count.iter().find(|(_, c)| **c != 1) {
            return Err(Error::InvalidModel(format!("action `{name}` has {count} cost features")));
        }
        for action in self.actions() {
            if let Some(p) = action.add_effects.intersection(&action.del_effects).next() {
                return Err(Error::InvalidModel(format!(
                    "action `{}` both adds and deletes `{p}`",
                    action.name
                )));
            }
        }
        Ok(())
    }
}

/// The model feature function: the complete feature set of `model`.
pub fn gamma(model: &Model) -> BTreeSet<ModelFeature> {
    model.features.clone()
}

/// The unit changes that turn `m2` into `m1`, sorted by id.
///
/// Features only in `m1` become `Add` changes, features only in `m2` become
/// `Remove` changes.
pub fn delta(m1: &Model, m2: &Model) -> Vec<FeatureChange> {
    let mut changes: Vec<FeatureChange> = m1
        .features
        .difference(&m2.features)
        .map(|f| FeatureChange::add(f.clone()))
        .chain(m2.features.difference(&m1.features).map(|f| FeatureChange::remove(f.clone())))
        .collect();
    changes.sort_by(|a, b| a.id.cmp(&b.id));
    changes
}

pub fn apply_change(model: &Model, change: &FeatureChange) -> Result<Model> {
    let mut features = model.features.clone();
    let applicable = match change.direction {
        Direction::Add => features.insert(change.feature.clone()),
        Direction::Remove => features.remove(&change.feature),
    };
    if !applicable {
        return Err(Error::InapplicableChange(change.id.clone()));
    }
    Ok(Model { features })
}

pub fn apply_all<'a>(
    model: &Model,
    changes: impl IntoIterator<Item = &'a FeatureChange>,
) -> Result<Model> {
    let mut features = model.features.clone();
    for change in changes {
        let applicable = match change.direction {
            Direction::Add => features.insert(change.feature.clone()),
            Direction::Remove => features.remove(&change.feature),
        };
        if !applicable {
            return Err(Error::InapplicableChange(change.id.clone()));
        }
    }
    Ok(Model { features })
}

/// Model distance as the number of unit feature changes.
pub fn model_distance_count(m1: &Model, m2: &Model) -> usize {
    m1.features.symmetric_difference(&m2.features).count()
}
