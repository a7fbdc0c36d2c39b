//! Replanning evaluation of ordering methods over a scenario suite.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use peg_core::mdp::{ExplanationMdp, WeightVector};
use peg_core::search::{
    manhattan_order, peg_order, random_order, replanning_profile, OrderedExplanation, OrderingMethod,
};
use peg_core::Result;

use crate::formats::OrderingRecord;

pub const DEFAULT_RANDOM_SAMPLES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationConfig {
    pub methods: Vec<OrderingMethod>,
    /// Random permutations drawn per scenario.
    pub random_samples: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            methods: OrderingMethod::BASELINES.to_vec(),
            random_samples: DEFAULT_RANDOM_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub method: OrderingMethod,
    /// One record for deterministic methods, one per sample for random.
    pub records: Vec<OrderingRecord>,
    /// Per-step action distance averaged over the records.
    pub mean_profile: Vec<f64>,
    /// Cumulative action distance averaged over the records.
    pub mean_total: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEvaluation {
    pub scenario_id: String,
    pub outcome: std::result::Result<(usize, Vec<MethodResult>), String>,
}

impl ScenarioEvaluation {
    pub fn result(&self, method: OrderingMethod) -> Option<&MethodResult> {
        self.outcome.as_ref().ok()?.1.iter().find(|r| r.method == method)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedComparison {
    pub first: OrderingMethod,
    pub second: OrderingMethod,
    pub scenarios: usize,
    /// Mean of `first − second` cumulative action distance.
    pub mean_difference: f64,
    /// Scenarios where `first` needs less replanning.
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub config: EvaluationConfig,
    pub scenarios: Vec<ScenarioEvaluation>,
}

fn mix(seed: u64, scenario: usize, sample: usize) -> u64 {
    // splitmix64 finalizer over the three coordinates
    let mut z = seed ^ ((scenario as u64) << 32) ^ sample as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn record(order: OrderedExplanation, mdp: &ExplanationMdp) -> Result<OrderingRecord> {
    let profile = replanning_profile(&order, mdp)?;
    Ok(OrderingRecord { explanation: order, action_distance: profile.per_step })
}

fn summarize(method: OrderingMethod, records: Vec<OrderingRecord>, n: usize) -> MethodResult {
    let count = records.len().max(1) as f64;
    let mut mean_profile = vec![0.0; n];
    for r in &records {
        for (m, d) in mean_profile.iter_mut().zip(&r.action_distance) {
            *m += d / count;
        }
    }
    let mean_total = records.iter().map(OrderingRecord::total_action_distance).sum::<f64>() / count;
    let mean_reward = records.iter().map(|r| r.explanation.total_reward).sum::<f64>() / count;
    MethodResult { method, records, mean_profile, mean_total, mean_reward }
}

/// Orders one scenario's explanation with every requested method.
pub fn evaluate_scenario(
    mdp: &ExplanationMdp,
    weights: &WeightVector,
    config: &EvaluationConfig,
    index: usize,
) -> Result<Vec<MethodResult>> {
    let mut results = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let records = match method {
            OrderingMethod::Peg => vec![record(peg_order(mdp, weights)?, mdp)?],
            OrderingMethod::Manhattan => vec![record(manhattan_order(mdp, weights)?, mdp)?],
            OrderingMethod::Random => (0..config.random_samples)
                .map(|k| record(random_order(mdp, weights, mix(config.seed, index, k))?, mdp))
                .collect::<Result<_>>()?,
            OrderingMethod::Custom => continue,
        };
        results.push(summarize(method, records, mdp.n()));
    }
    Ok(results)
}

/// Evaluates a suite; lattices that failed to build are carried through as
/// failures.
pub fn evaluate(
    suite: &[(String, std::result::Result<ExplanationMdp, String>)],
    weights: &WeightVector,
    config: &EvaluationConfig,
) -> Evaluation {
    let scenarios = suite
        .iter()
        .enumerate()
        .map(|(index, (id, mdp))| {
            let outcome = mdp.clone().and_then(|mdp| {
                evaluate_scenario(&mdp, weights, config, index).map(|r| (mdp.n(), r)).map_err(|e| e.to_string())
            });
            ScenarioEvaluation { scenario_id: id.clone(), outcome }
        })
        .collect();
    Evaluation { config: config.clone(), scenarios }
}

impl Evaluation {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.scenarios.iter().filter_map(|s| s.outcome.as_ref().err().map(|e| (s.scenario_id.as_str(), e.as_str())))
    }

    /// Mean over successful scenarios of the method's cumulative action
    /// distance.
    pub fn mean_total(&self, method: OrderingMethod) -> Option<f64> {
        let totals: Vec<f64> = self.scenarios.iter().filter_map(|s| s.result(method)).map(|r| r.mean_total).collect();
        (!totals.is_empty()).then(|| totals.iter().sum::<f64>() / totals.len() as f64)
    }

    pub fn compare(&self, first: OrderingMethod, second: OrderingMethod) -> PairedComparison {
        let mut c = PairedComparison { first, second, scenarios: 0, mean_difference: 0.0, wins: 0, ties: 0, losses: 0 };
        for s in &self.scenarios {
            let (Some(a), Some(b)) = (s.result(first), s.result(second)) else { continue };
            let diff = a.mean_total - b.mean_total;
            c.scenarios += 1;
            c.mean_difference += diff;
            if diff.abs() <= 1e-12 {
                c.ties += 1;
            } else if diff < 0.0 {
                c.wins += 1;
            } else {
                c.losses += 1;
            }
        }
        if c.scenarios > 0 {
            c.mean_difference /= c.scenarios as f64;
        }
        c
    }

    /// Every pair of requested methods, in request order.
    pub fn comparisons(&self) -> Vec<PairedComparison> {
        let methods = &self.config.methods;
        let mut out = Vec::new();
        for (i, &a) in methods.iter().enumerate() {
            for &b in &methods[i + 1..] {
                out.push(self.compare(a, b));
            }
        }
        out
    }

    /// Per-record profiles: `scenario, method, sample, step, action_distance`.
    pub fn profiles_tsv(&self) -> String {
        let mut out = String::from("scenario\tmethod\tsample\tstep\taction_distance\n");
        for s in &self.scenarios {
            let Ok((_, results)) = &s.outcome else { continue };
            for r in results {
                for (k, rec) in r.records.iter().enumerate() {
                    for (step, d) in rec.action_distance.iter().enumerate() {
                        let _ = writeln!(out, "{}\t{}\t{k}\t{}\t{d}", s.scenario_id, r.method, step + 1);
                    }
                }
            }
        }
        out
    }

    /// Mean action distance at each step across scenarios, per method.
    pub fn steps_tsv(&self) -> String {
        let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for s in &self.scenarios {
            let Ok((_, results)) = &s.outcome else { continue };
            for r in results {
                let m = self.config.methods.iter().position(|&m| m == r.method).unwrap_or(0);
                for (step, d) in r.mean_profile.iter().enumerate() {
                    let e = sums.entry((m, step + 1)).or_default();
                    e.0 += d;
                    e.1 += 1;
                }
            }
        }
        let mut out = String::from("step\tmethod\taction_distance\tscenarios\n");
        for ((m, step), (sum, count)) in sums {
            let _ = writeln!(out, "{step}\t{}\t{}\t{count}", self.config.methods[m], sum / count as f64);
        }
        out
    }

    /// Per-scenario totals; failed scenarios keep a row with the reason.
    pub fn totals_tsv(&self) -> String {
        let mut out = String::from("scenario\tn\tmethod\tcumulative_action_distance\ttotal_reward\tstatus\n");
        for s in &self.scenarios {
            match &s.outcome {
                Ok((n, results)) => {
                    for r in results {
                        let _ = writeln!(out, "{}\t{n}\t{}\t{}\t{}\tok", s.scenario_id, r.method, r.mean_total, r.mean_reward);
                    }
                }
                Err(reason) => {
                    let _ = writeln!(out, "{}\t-\t-\t-\t-\tfailed: {}", s.scenario_id, reason.replace('\t', " "));
                }
            }
        }
        out
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("method\tscenarios\tmean_cumulative_action_distance\n");
        for &m in &self.config.methods {
            let count = self.scenarios.iter().filter(|s| s.result(m).is_some()).count();
            match self.mean_total(m) {
                Some(mean) => writeln!(out, "{m}\t{count}\t{mean}"),
                None => writeln!(out, "{m}\t0\t-"),
            }
            .expect("writing to a string");
        }
        out
    }

    pub fn comparisons_tsv(&self) -> String {
        let mut out = String::from("first\tsecond\tscenarios\tmean_difference\twins\tties\tlosses\n");
        for c in self.comparisons() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.first, c.second, c.scenarios, c.mean_difference, c.wins, c.ties, c.losses
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use peg_core::escape_room::{generate_scenarios, reference_scenario, scenario_mdp, GeneratorConfig, LatticeOptions};

    fn weights() -> WeightVector {
        WeightVector::new(vec![-0.75, -0.81, -0.79, -0.87, 0.02, -1.0])
    }

    #[test]
    fn single_scenario_profiles_have_length_n() {
        let mdp = scenario_mdp(&reference_scenario(), &LatticeOptions::default()).unwrap();
        let config = EvaluationConfig { methods: vec![OrderingMethod::Peg], ..Default::default() };
        let eval = evaluate(&[("reference".into(), Ok(mdp.clone()))], &weights(), &config);
        let r = eval.scenarios[0].result(OrderingMethod::Peg).unwrap();
        assert_eq!(r.mean_profile.len(), mdp.n());
        assert_eq!(r.records.len(), 1);
        assert_eq!(eval.profiles_tsv().lines().count(), 1 + mdp.n());
    }

    #[test]
    fn all_three_methods_reported() {
        let suite: Vec<_> = generate_scenarios(&GeneratorConfig { count: 3, seed: 9, ..Default::default() })
            .unwrap()
            .iter()
            .map(|s| (s.id.clone(), scenario_mdp(s, &LatticeOptions::default()).map_err(|e| e.to_string())))
            .collect();
        let eval = evaluate(&suite, &weights(), &EvaluationConfig::default());
        let summary = eval.summary_tsv();
        for m in ["peg", "random", "manhattan"] {
            assert!(summary.lines().any(|l| l.starts_with(m)), "{summary}");
        }
        for s in &eval.scenarios {
            assert_eq!(s.result(OrderingMethod::Random).unwrap().records.len(), DEFAULT_RANDOM_SAMPLES);
        }
        assert_eq!(eval.comparisons().len(), 3);
        assert_eq!(eval, evaluate(&suite, &weights(), &EvaluationConfig::default()));
    }

    #[test]
    fn failures_are_kept_as_rows() {
        let eval = evaluate(&[("broken".into(), Err("lattice too large".into()))], &weights(), &EvaluationConfig::default());
        assert_eq!(eval.failures().count(), 1);
        assert!(eval.totals_tsv().contains("broken\t-\t-\t-\t-\tfailed: lattice too large"));
        assert_eq!(eval.mean_total(OrderingMethod::Peg), None);
    }

    #[test]
    fn comparison_counts() {
        let mdp = scenario_mdp(&reference_scenario(), &LatticeOptions::default()).unwrap();
        let eval = evaluate(&[("r".into(), Ok(mdp))], &weights(), &EvaluationConfig::default());
        let c = eval.compare(OrderingMethod::Peg, OrderingMethod::Peg);
        assert_eq!((c.wins, c.ties, c.losses, c.mean_difference), (0, 1, 0, 0.0));
    }
}
