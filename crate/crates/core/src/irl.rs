//! Maximum-entropy inverse reinforcement learning over explanation lattices.
//!
//! For one scenario, a trace is a complete ordering of the explanation and
//! `P(trace | Θ) ∝ exp(Σ ρ)`. The partition function is computed backwards
//! over the subset lattice (log domain), which yields the stochastic policy
//! `P(f | M)`; pushing the first-step distribution forward through that
//! policy gives the expected model-pair visitation (MPOF) used in the
//! gradient.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{ExplanationMdp, WeightVector, FEATURE_COUNT};

/// Largest explanation whose `n!` orderings we enumerate explicitly.
pub const ENUMERATION_LIMIT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Human,
    Synthetic,
}

/// An ordered explanation for one scenario, as change ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub scenario_id: String,
    pub steps: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub convergence_tolerance: f64,
    /// Traces sampled per iteration to estimate the first-step distribution
    /// when `exact_first_step` is off.
    pub sample_count: usize,
    pub exact_first_step: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            iterations: 500,
            convergence_tolerance: 1e-5,
            sample_count: 1000,
            exact_first_step: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.convergence_tolerance > 0.0) {
            return Err(Error::InvalidConfig("learning rate and tolerance must be positive".into()));
        }
        if self.iterations == 0 || self.sample_count == 0 {
            return Err(Error::InvalidConfig("iterations and sample count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrlResult {
    pub weights: WeightVector,
    pub log_likelihood_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub converged: bool,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Discounted reward of an ordering (or a prefix of one).
pub fn trace_reward(weights: &WeightVector, order: &[usize], mdp: &ExplanationMdp) -> Result<f64> {
    let mut state = mdp.initial();
    let mut total = 0.0;
    for &change in order {
        if change >= mdp.n() || state & (1 << change) != 0 {
            return Err(Error::InvalidTrace {
                scenario: mdp.scenario_id().to_string(),
                reason: format!("change index {change} is not enabled"),
            });
        }
        total += mdp.reward(weights, state, change)?;
        state = mdp.next(state, change);
    }
    Ok(total)
}

fn trace_features(order: &[usize], mdp: &ExplanationMdp) -> [f64; FEATURE_COUNT] {
    let mut state = mdp.initial();
    let mut sum = [0.0; FEATURE_COUNT];
    for &change in order {
        for (s, v) in sum.iter_mut().zip(mdp.discounted_features(state, change)) {
            *s += v;
        }
        state = mdp.next(state, change);
    }
    sum
}

/// The explicit maximum-entropy distribution over all complete orderings,
/// listed in lexicographic order of change indices.
pub fn trace_distribution(weights: &WeightVector, mdp: &ExplanationMdp) -> Result<Vec<(Vec<usize>, f64)>> {
    if mdp.n() > ENUMERATION_LIMIT {
        return Err(Error::LatticeTooLarge { size: mdp.n(), limit: ENUMERATION_LIMIT });
    }
    let orders: Vec<Vec<usize>> = (0..mdp.n()).permutations(mdp.n()).collect();
    let rewards = orders.iter().map(|o| trace_reward(weights, o, mdp)).collect::<Result<Vec<_>>>()?;
    let log_z = log_sum_exp(rewards.iter().copied());
    Ok(orders.into_iter().zip(rewards).map(|(o, r)| (o, (r - log_z).exp())).collect())
}

/// `P(f | M)` for every lattice state together with `log Z(M)`.
#[derive(Clone, Debug)]
pub struct SoftPolicy {
    n: usize,
    log_z: Vec<f64>,
    probs: Vec<f64>,
}

impl SoftPolicy {
    pub fn prob(&self, mask: u32, change: usize) -> f64 {
        self.probs[mask as usize * self.n + change]
    }

    pub fn row(&self, mask: u32) -> &[f64] {
        let start = mask as usize * self.n;
        &self.probs[start..start + self.n]
    }

    pub fn log_partition(&self, mask: u32) -> f64 {
        self.log_z[mask as usize]
    }

    /// `log Σ_traces exp(ρ(trace))` from the initial state.
    pub fn log_z(&self) -> f64 {
        self.log_z[0]
    }

    /// Probability of a complete ordering as a product of policy steps.
    pub fn trace_probability(&self, order: &[usize]) -> f64 {
        let mut state = 0u32;
        let mut p = 1.0;
        for &change in order {
            p *= self.prob(state, change);
            state |= 1 << change;
        }
        p
    }

    /// Samples a complete ordering by rolling the policy out from the start.
    pub fn sample<R: Rng>(&self, mdp: &ExplanationMdp, rng: &mut R) -> Vec<usize> {
        let mut state = mdp.initial();
        let mut order = Vec::with_capacity(mdp.n());
        while !mdp.is_goal(state) {
            let change = sample_index(self.row(state), rng);
            order.push(change);
            state = mdp.next(state, change);
        }
        order
    }
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Backward partition-function recursion over the lattice:
/// `Z(goal) = 1`, `Z(M) = Σ_f e^{ρ(M, M_f)} Z(M_f)`,
/// `P(f | M) = e^{ρ(M, M_f)} Z(M_f) / Z(M)`.
pub fn soft_policy(weights: &WeightVector, mdp: &ExplanationMdp) -> Result<SoftPolicy> {
    weights.check()?;
    let n = mdp.n();
    let count = mdp.state_count();
    let mut log_z = vec![0.0; count];
    let mut probs = vec![0.0; count * n];
    let mut scores = vec![0.0; n];
    // successors have larger masks, so a descending sweep sees them first
    for mask in (0..count as u32).rev() {
        if mdp.is_goal(mask) {
            continue;
        }
        for i in mdp.enabled(mask) {
            scores[i] = mdp.reward(weights, mask, i)? + log_z[mdp.next(mask, i) as usize];
        }
        let lz = log_sum_exp(mdp.enabled(mask).map(|i| scores[i]));
        log_z[mask as usize] = lz;
        for i in mdp.enabled(mask) {
            probs[mask as usize * n + i] = (scores[i] - lz).exp();
        }
    }
    Ok(SoftPolicy { n, log_z, probs })
}

/// Expected model-pair visitation.
#[derive(Clone, Debug)]
pub struct Mpof {
    n: usize,
    /// `P(M, M' | Θ) = Σ_t μ_t(M, M')`, indexed `mask * n + change`.
    total: Vec<f64>,
}

impl Mpof {
    pub fn get(&self, mask: u32, change: usize) -> f64 {
        self.total[mask as usize * self.n + change]
    }

    /// `μ_t` for a transition; each lattice edge lives at exactly one step,
    /// `t = |M| + 1`.
    pub fn at_step(&self, t: usize, mask: u32, change: usize) -> f64 {
        if mask.count_ones() as usize + 1 == t {
            self.get(mask, change)
        } else {
            0.0
        }
    }

    /// Total mass of `μ_t` summed over pairs.
    pub fn step_mass(&self, t: usize) -> f64 {
        (0..self.total.len())
            .filter(|&k| (k / self.n) as u32 & (1 << (k % self.n)) == 0)
            .map(|k| self.at_step(t, (k / self.n) as u32, k % self.n))
            .sum()
    }
}

/// Forward recursion
/// `μ_{t+1}(M, M') = Σ_f Σ_{M''} μ_t(M'', M) P(f | M) P(M' | M, f)`
/// seeded with `first_step[i] = μ_1(M_0, M_0 + f_i)`.
pub fn mpof(policy: &SoftPolicy, mdp: &ExplanationMdp, first_step: &[f64]) -> Mpof {
    let n = mdp.n();
    let count = mdp.state_count();
    let mut total = vec![0.0; count * n];
    let mut inflow = vec![0.0; count];
    if n == 0 {
        return Mpof { n, total };
    }
    for i in 0..n {
        total[i] = first_step[i];
        inflow[mdp.next(0, i) as usize] += first_step[i];
    }
    // predecessors have smaller masks, so an ascending sweep is layered
    for mask in 1..count as u32 {
        let mass = inflow[mask as usize];
        if mass == 0.0 || mdp.is_goal(mask) {
            continue;
        }
        for i in mdp.enabled(mask) {
            let mu = mass * policy.prob(mask, i);
            total[mask as usize * n + i] = mu;
            inflow[mdp.next(mask, i) as usize] += mu;
        }
    }
    Mpof { n, total }
}

/// Exact first-step distribution: the policy's row at the initial state.
pub fn exact_first_step(policy: &SoftPolicy, mdp: &ExplanationMdp) -> Vec<f64> {
    if mdp.n() == 0 {
        return Vec::new();
    }
    policy.row(mdp.initial()).to_vec()
}

/// First-step distribution estimated from `samples` policy rollouts.
pub fn sampled_first_step<R: Rng>(policy: &SoftPolicy, mdp: &ExplanationMdp, samples: usize, rng: &mut R) -> Vec<f64> {
    let mut counts = vec![0.0; mdp.n()];
    if mdp.n() == 0 {
        return counts;
    }
    for _ in 0..samples {
        counts[sample_index(policy.row(mdp.initial()), rng)] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= samples as f64);
    counts
}

/// Expected discounted feature counts under an MPOF.
pub fn expected_features(visits: &Mpof, mdp: &ExplanationMdp) -> [f64; FEATURE_COUNT] {
    let mut sum = [0.0; FEATURE_COUNT];
    for (mask, i) in mdp.edges() {
        let p = visits.get(mask, i);
        if p == 0.0 {
            continue;
        }
        for (s, v) in sum.iter_mut().zip(mdp.discounted_features(mask, i)) {
            *s += p * v;
        }
    }
    sum
}

/// Demonstrated orderings for one scenario's lattice.
#[derive(Clone, Debug)]
pub struct Demonstrations<'a> {
    pub mdp: &'a ExplanationMdp,
    pub traces: Vec<Vec<usize>>,
}

/// Groups traces by scenario (sorted by scenario id) and resolves their ids.
pub fn group_traces<'a>(
    traces: &[Trace],
    mdps: &'a BTreeMap<String, ExplanationMdp>,
) -> Result<Vec<Demonstrations<'a>>> {
    let mut groups: BTreeMap<&str, Demonstrations<'a>> = BTreeMap::new();
    for trace in traces {
        let mdp = mdps.get(&trace.scenario_id).ok_or_else(|| Error::InvalidTrace {
            scenario: trace.scenario_id.clone(),
            reason: "unknown scenario".into(),
        })?;
        let order = mdp.resolve(&trace.steps)?;
        groups
            .entry(mdp.scenario_id())
            .or_insert_with(|| Demonstrations { mdp, traces: Vec::new() })
            .traces
            .push(order);
    }
    Ok(groups.into_values().collect())
}

fn trace_count(data: &[Demonstrations<'_>]) -> Result<usize> {
    let total: usize = data.iter().map(|d| d.traces.len()).sum();
    if total == 0 {
        return Err(Error::InvalidTrace { scenario: String::new(), reason: "no traces".into() });
    }
    Ok(total)
}

/// Average log-likelihood `1/|D| Σ (ρ(trace) − log Z)`.
pub fn log_likelihood(weights: &WeightVector, data: &[Demonstrations<'_>]) -> Result<f64> {
    let total = trace_count(data)?;
    let mut sum = 0.0;
    for demo in data {
        let log_z = soft_policy(weights, demo.mdp)?.log_z();
        for order in &demo.traces {
            sum += trace_reward(weights, order, demo.mdp)? - log_z;
        }
    }
    Ok(sum / total as f64)
}

struct GroupStats {
    log_likelihood_sum: f64,
    gradient_sum: [f64; FEATURE_COUNT],
}

fn group_stats(weights: &WeightVector, demo: &Demonstrations<'_>, first_step: Option<Vec<f64>>) -> Result<GroupStats> {
    let policy = soft_policy(weights, demo.mdp)?;
    let first = first_step.unwrap_or_else(|| exact_first_step(&policy, demo.mdp));
    let expected = expected_features(&mpof(&policy, demo.mdp, &first), demo.mdp);
    let count = demo.traces.len() as f64;
    let mut gradient_sum = expected.map(|e| -count * e);
    let mut log_likelihood_sum = -count * policy.log_z();
    for order in &demo.traces {
        log_likelihood_sum += trace_reward(weights, order, demo.mdp)?;
        for (g, v) in gradient_sum.iter_mut().zip(trace_features(order, demo.mdp)) {
            *g += v;
        }
    }
    Ok(GroupStats { log_likelihood_sum, gradient_sum })
}

/// Empirical minus expected feature counts, averaged over all traces.
pub fn irl_gradient(weights: &WeightVector, data: &[Demonstrations<'_>]) -> Result<Vec<f64>> {
    Ok(evaluate(weights, data, |_, _| None)?.1)
}

fn evaluate(
    weights: &WeightVector,
    data: &[Demonstrations<'_>],
    first_step: impl Fn(usize, &SoftPolicy) -> Option<Vec<f64>> + Sync,
) -> Result<(f64, Vec<f64>)> {
    let total = trace_count(data)? as f64;
    let stats = data
        .par_iter()
        .enumerate()
        .map(|(g, demo)| {
            let first = if demo.mdp.n() == 0 {
                None
            } else {
                soft_policy(weights, demo.mdp).ok().and_then(|p| first_step(g, &p))
            };
            group_stats(weights, demo, first)
        })
        .collect::<Result<Vec<_>>>()?;
    // fixed summation order: groups are sorted by scenario id
    let mut ll = 0.0;
    let mut grad = vec![0.0; FEATURE_COUNT];
    for s in &stats {
        ll += s.log_likelihood_sum;
        for (g, v) in grad.iter_mut().zip(s.gradient_sum) {
            *g += v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= total);
    Ok((ll / total, grad))
}

const DIVERGENCE_STREAK: usize = 10;

/// Gradient ascent on the trace log-likelihood from `Θ = 0`.
pub fn train(traces: &[Trace], mdps: &BTreeMap<String, ExplanationMdp>, config: &TrainingConfig) -> Result<IrlResult> {
    config.check()?;
    let data = group_traces(traces, mdps)?;
    train_on(&data, config)
}

pub fn train_on(data: &[Demonstrations<'_>], config: &TrainingConfig) -> Result<IrlResult> {
    config.check()?;
    let mut weights = WeightVector::zeros();
    weights.scenarios = data.iter().map(|d| d.mdp.scenario_id().to_string()).collect();
    let mut ll_history = Vec::new();
    let mut grad_history = Vec::new();
    let mut converged = false;
    let mut streak = 0;

    for iteration in 0..config.iterations {
        let (ll, grad) = evaluate(&weights, data, |group, policy| {
            if config.exact_first_step {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((iteration as u64) << 32) | group as u64);
            Some(sampled_first_step(policy, data[group].mdp, config.sample_count, &mut rng))
        })?;
        let norm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if let Some(&previous) = ll_history.last() {
            streak = if ll < previous - 1e-12 { streak + 1 } else { 0 };
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::Diverged { iteration, streak });
            }
        }
        ll_history.push(ll);
        grad_history.push(norm);
        if norm < config.convergence_tolerance {
            converged = true;
            break;
        }
        for (w, g) in weights.values.iter_mut().zip(&grad) {
            *w += config.learning_rate * g;
        }
        weights.iterations = iteration + 1;
    }
    Ok(IrlResult { weights, log_likelihood_history: ll_history, gradient_norm_history: grad_history, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_mdp, MdpConfig, ACTION_DISTANCE};
    use crate::model::{Action, Model};
    use crate::planner::Planner;
    use crate::reconciliation::ReconciliationProblem;

    /// A lattice whose changes are independent route closures: closing
    /// route `k` (cost `k + 1`) pushes the planner to the next one.
    pub(crate) fn routes_mdp(n: usize) -> ExplanationMdp {
        let routes = |closed: usize| -> Vec<Action> {
            (0..=n)
                .map(|k| {
                    let mut a = Action::new(format!("route{k}"), (k + 1) as f64).pre(["s"]).add(["g"]);
                    if k < closed {
                        a = a.pre([format!("open{k}")]);
                    }
                    a
                })
                .collect()
        };
        let robot = Model::new(["s"], ["g"], routes(n)).unwrap();
        let human = Model::new(["s"], ["g"], routes(0)).unwrap();
        let problem = ReconciliationProblem::new(robot, human, Planner::new()).unwrap();
        build_mdp(&problem, &problem.delta(), &MdpConfig::default()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_distributions() {
        let mdp = routes_mdp(3);
        let dist = trace_distribution(&WeightVector::zeros(), &mdp).unwrap();
        assert_eq!(dist.len(), 6);
        for (_, p) in &dist {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        let policy = soft_policy(&WeightVector::zeros(), &mdp).unwrap();
        assert!((policy.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((policy.prob(0b001, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trace_reward_sums_transitions() {
        let mdp = routes_mdp(3);
        let w = WeightVector::new(vec![0.0, 0.0, 0.0, 0.0, -0.7, 1.3]);
        assert_eq!(trace_reward(&WeightVector::zeros(), &[2, 0, 1], &mdp).unwrap(), 0.0);
        let single = trace_reward(&w, &[1], &mdp).unwrap();
        assert_eq!(single, mdp.reward(&w, 0, 1).unwrap());
        let by_hand = mdp.reward(&w, 0, 2).unwrap() + mdp.reward(&w, 0b100, 0).unwrap() + mdp.reward(&w, 0b101, 1).unwrap();
        assert!((trace_reward(&w, &[2, 0, 1], &mdp).unwrap() - by_hand).abs() < 1e-15);
        assert!(trace_reward(&w, &[2, 2], &mdp).is_err());
    }

    #[test]
    fn policy_rows_normalize() {
        let mdp = routes_mdp(4);
        let w = WeightVector::new(vec![0.0, 0.0, 0.0, 0.0, 2.0, -3.0]);
        let policy = soft_policy(&w, &mdp).unwrap();
        for mask in 0..mdp.state_count() as u32 {
            if !mdp.is_goal(mask) {
                let s: f64 = policy.row(mask).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_change_mpof_is_first_step() {
        let mdp = routes_mdp(1);
        let policy = soft_policy(&WeightVector::zeros(), &mdp).unwrap();
        let visits = mpof(&policy, &mdp, &[1.0]);
        assert_eq!(visits.get(0, 0), 1.0);
        assert_eq!(visits.step_mass(1), 1.0);
    }

    #[test]
    fn zero_weight_mpof_counts_orderings() {
        let mdp = routes_mdp(3);
        let policy = soft_policy(&WeightVector::zeros(), &mdp).unwrap();
        let visits = mpof(&policy, &mdp, &exact_first_step(&policy, &mdp));
        // brute force: each of the 6 orderings has probability 1/6
        let mut counts = vec![0.0; mdp.state_count() * 3];
        for order in (0..3).permutations(3) {
            let mut s = 0u32;
            for &i in &order {
                counts[s as usize * 3 + i] += 1.0 / 6.0;
                s |= 1 << i;
            }
        }
        for (mask, i) in mdp.edges() {
            assert!((visits.get(mask, i) - counts[mask as usize * 3 + i]).abs() < 1e-15);
        }
        for t in 1..=3 {
            assert!((visits.step_mass(t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_preference_dominates_distribution() {
        let mdp = routes_mdp(3);
        // rewarding plan changes favours closing the cheapest open route first
        let w = WeightVector::one_hot(ACTION_DISTANCE).scaled(5.0);
        let dist = trace_distribution(&w, &mdp).unwrap();
        let (best, p) = dist.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(best, &vec![0, 1, 2]);
        assert!(dist.iter().filter(|(o, _)| o != best).all(|(_, q)| q < p));
    }

    #[test]
    fn flat_objective_converges_at_zero() {
        let mdp = routes_mdp(2);
        // both orderings of a pair of changes with identical features
        let mut mdps = BTreeMap::new();
        mdps.insert(String::new(), mdp);
        let data = vec![Demonstrations { mdp: &mdps[""], traces: vec![vec![0, 1], vec![1, 0]] }];
        let flat = train_on(&data, &TrainingConfig::default()).unwrap();
        assert!(flat.converged);
        assert_eq!(flat.weights.values, vec![0.0; FEATURE_COUNT]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mdp = routes_mdp(1);
        let data = vec![Demonstrations { mdp: &mdp, traces: vec![vec![0]] }];
        let config = TrainingConfig { learning_rate: 0.0, ..TrainingConfig::default() };
        assert!(matches!(train_on(&data, &config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unknown_scenario_is_invalid_trace() {
        let mdps = BTreeMap::new();
        let trace = Trace { scenario_id: "nope".into(), steps: vec![], provenance: Provenance::Human };
        assert!(matches!(group_traces(&[trace], &mdps), Err(Error::InvalidTrace { .. })));
    }
}
