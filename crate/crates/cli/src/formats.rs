//! Plain-text file formats: scenarios, traces, weights, orderings and
//! planning models.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use peg_core::escape_room::Scenario;
use peg_core::irl::{Provenance, Trace};
use peg_core::mdp::{WeightVector, FEATURE_COUNT, FEATURE_NAMES};
use peg_core::model::{Action, Model};
use peg_core::search::{OrderedExplanation, OrderingMethod};

/// A parse failure with its 1-based line number (0 when the whole file is at
/// fault).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        FormatError { line, message: message.into() }
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for FormatError {}

type Parsed<T> = Result<T, FormatError>;

fn parse_f64(line: usize, field: &str) -> Parsed<f64> {
    field.trim().parse().map_err(|_| FormatError::new(line, format!("`{field}` is not a number")))
}

fn letters(line: usize, list: &str) -> Parsed<BTreeSet<char>> {
    list.split_whitespace()
        .map(|tok| {
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(FormatError::new(line, format!("`{tok}` is not a single letter"))),
            }
        })
        .collect()
}

// ---- scenarios ----

/// Grid rows, then `dangerous: A C`, then `id: name`.
pub fn emit_scenario(scenario: &Scenario) -> String {
    let mut out = String::new();
    for row in scenario.rows() {
        out.push_str(&row);
        out.push('\n');
    }
    out.push_str("dangerous:");
    for letter in scenario.dangerous() {
        out.push(' ');
        out.push(letter);
    }
    let _ = writeln!(out, "\nid: {}", scenario.id);
    out
}

pub fn parse_scenario(text: &str) -> Parsed<Scenario> {
    let mut rows = Vec::new();
    let mut dangerous = None;
    let mut id = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end();
        if let Some(rest) = trimmed.strip_prefix("dangerous:") {
            if dangerous.is_some() {
                return Err(FormatError::new(line, "second `dangerous:` line"));
            }
            dangerous = Some(letters(line, rest)?);
        } else if let Some(rest) = trimmed.strip_prefix("id:") {
            if dangerous.is_none() {
                return Err(FormatError::new(line, "`id:` must follow `dangerous:`"));
            }
            let name = rest.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(FormatError::new(line, "scenario id must be a single token"));
            }
            id = Some(name.to_string());
        } else if trimmed.is_empty() {
            continue;
        } else if dangerous.is_some() {
            return Err(FormatError::new(line, "unexpected text after the grid"));
        } else {
            rows.push(trimmed.to_string());
        }
    }
    let dangerous = dangerous.ok_or_else(|| FormatError::new(0, "missing `dangerous:` line"))?;
    let id = id.ok_or_else(|| FormatError::new(0, "missing `id:` line"))?;
    Scenario::from_rows(id, &rows, &dangerous).map_err(|e| FormatError::new(0, e.to_string()))
}

// ---- traces ----

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::Human => "human",
        Provenance::Synthetic => "synthetic",
    }
}

/// One `scenario_id: A C B` line per trace; `# provenance: …` directives
/// apply to the lines after them (human by default).
pub fn emit_traces(traces: &[Trace]) -> String {
    let mut out = String::new();
    let mut current = None;
    for trace in traces {
        if current != Some(trace.provenance) {
            let _ = writeln!(out, "# provenance: {}", provenance_name(trace.provenance));
            current = Some(trace.provenance);
        }
        if trace.steps.is_empty() {
            let _ = writeln!(out, "{}:", trace.scenario_id);
        } else {
            let _ = writeln!(out, "{}: {}", trace.scenario_id, trace.steps.join(" "));
        }
    }
    out
}

/// Traces with the line each was read from.
pub fn parse_traces(text: &str) -> Parsed<Vec<(usize, Trace)>> {
    let mut provenance = Provenance::Human;
    let mut traces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("provenance:") {
                provenance = match value.trim() {
                    "human" => Provenance::Human,
                    "synthetic" => Provenance::Synthetic,
                    other => return Err(FormatError::new(line, format!("unknown provenance `{other}`"))),
                };
            }
            continue;
        }
        let (scenario, steps) =
            trimmed.split_once(':').ok_or_else(|| FormatError::new(line, "expected `scenario_id: steps`"))?;
        let scenario = scenario.trim();
        if scenario.is_empty() || scenario.contains(char::is_whitespace) {
            return Err(FormatError::new(line, "scenario id must be a single token"));
        }
        traces.push((
            line,
            Trace {
                scenario_id: scenario.to_string(),
                steps: steps.split_whitespace().map(str::to_string).collect(),
                provenance,
            },
        ));
    }
    Ok(traces)
}

// ---- weights ----

/// Metadata header, then `feature <tab> raw <tab> normalized` rows.
pub fn emit_weights(weights: &WeightVector) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# scenarios: {}", weights.scenarios.join(" "));
    let _ = writeln!(out, "# iterations: {}", weights.iterations);
    let _ = writeln!(out, "# feature\traw\tnormalized");
    for ((name, raw), normalized) in weights.names.iter().zip(&weights.values).zip(weights.normalized()) {
        let _ = writeln!(out, "{name}\t{raw}\t{normalized}");
    }
    out
}

pub fn parse_weights(text: &str) -> Parsed<WeightVector> {
    let mut scenarios = Vec::new();
    let mut iterations = 0;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim() {
                    "scenarios" => scenarios = value.split_whitespace().map(str::to_string).collect(),
                    "iterations" => {
                        iterations = value
                            .trim()
                            .parse()
                            .map_err(|_| FormatError::new(line, "iterations must be an integer"))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(FormatError::new(line, "expected `feature<TAB>raw<TAB>normalized`"));
        }
        let expected = FEATURE_NAMES
            .get(values.len())
            .ok_or_else(|| FormatError::new(line, format!("more than {FEATURE_COUNT} features")))?;
        if fields[0] != *expected {
            return Err(FormatError::new(line, format!("expected feature `{expected}`, found `{}`", fields[0])));
        }
        values.push(parse_f64(line, fields[1])?);
        parse_f64(line, fields[2])?;
    }
    if values.len() != FEATURE_COUNT {
        return Err(FormatError::new(0, format!("expected {FEATURE_COUNT} features, found {}", values.len())));
    }
    let mut weights = WeightVector::new(values);
    weights.scenarios = scenarios;
    weights.iterations = iterations;
    Ok(weights)
}

// ---- orderings ----

/// An ordering with the simulated human's per-step action distance.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderingRecord {
    pub explanation: OrderedExplanation,
    pub action_distance: Vec<f64>,
}

impl OrderingRecord {
    pub fn total_action_distance(&self) -> f64 {
        self.action_distance.iter().sum()
    }
}

pub fn emit_ordering(record: &OrderingRecord) -> String {
    let e = &record.explanation;
    let mut out = String::new();
    let _ = writeln!(out, "# scenario: {}", e.scenario_id);
    let _ = writeln!(out, "# method: {}", e.method);
    let _ = writeln!(out, "# total_reward: {}", e.total_reward);
    let _ = writeln!(out, "# total_action_distance: {}", record.total_action_distance());
    let _ = writeln!(out, "step\tchange\treward\taction_distance");
    for (k, ((id, reward), distance)) in e.steps.iter().zip(&e.step_rewards).zip(&record.action_distance).enumerate() {
        let _ = writeln!(out, "{}\t{id}\t{reward}\t{distance}", k + 1);
    }
    out
}

pub fn parse_ordering(text: &str) -> Parsed<OrderingRecord> {
    let mut header = BTreeMap::new();
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    let mut distances = Vec::new();
    let mut seen_columns = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                header.insert(key.trim().to_string(), (line, value.trim().to_string()));
            }
            continue;
        }
        if !seen_columns {
            if trimmed != "step\tchange\treward\taction_distance" {
                return Err(FormatError::new(line, "missing column header"));
            }
            seen_columns = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(FormatError::new(line, "expected four tab-separated fields"));
        }
        if fields[0].parse::<usize>() != Ok(steps.len() + 1) {
            return Err(FormatError::new(line, format!("expected step {}", steps.len() + 1)));
        }
        steps.push(fields[1].to_string());
        rewards.push(parse_f64(line, fields[2])?);
        distances.push(parse_f64(line, fields[3])?);
    }
    let get = |key: &str| header.get(key).ok_or_else(|| FormatError::new(0, format!("missing `# {key}:` header")));
    let scenario_id = get("scenario")?.1.clone();
    let (line, method) = get("method")?;
    let method: OrderingMethod = method.parse().map_err(|_| FormatError::new(*line, format!("unknown method `{method}`")))?;
    let (line, total) = get("total_reward")?;
    let total_reward = parse_f64(*line, total)?;
    Ok(OrderingRecord {
        explanation: OrderedExplanation { scenario_id, steps, step_rewards: rewards, total_reward, method },
        action_distance: distances,
    })
}

// ---- planning models ----

/// Line-oriented model text:
///
/// ```text
/// predicates: p q r      (optional; when present every use is checked)
/// init: p
/// goal: r
/// action NAME
///   pre: p
///   soft: q
///   add: r
///   del: p
///   cost: 1
/// ```
pub fn parse_model(text: &str) -> Parsed<Model> {
    let mut declared: Option<BTreeSet<String>> = None;
    let mut init = Vec::new();
    let mut goal = Vec::new();
    let mut actions: Vec<Action> = Vec::new();
    let mut used: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.split('#').next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix("action ") {
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(FormatError::new(line, "action name must be a single token"));
            }
            actions.push(Action::new(name, 0.0));
            continue;
        }
        let (key, rest) = trimmed
            .split_once(':')
            .ok_or_else(|| FormatError::new(line, format!("cannot read `{trimmed}`")))?;
        let items: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        let key = key.trim();
        if key != "cost" && key != "predicates" {
            used.extend(items.iter().map(|p| (line, p.clone())));
        }
        match key {
            "predicates" => declared = Some(items.into_iter().collect()),
            "init" => init.extend(items),
            "goal" => goal.extend(items),
            "pre" | "soft" | "add" | "del" | "cost" => {
                let action =
                    actions.last_mut().ok_or_else(|| FormatError::new(line, format!("`{key}:` outside an action")))?;
                let taken = std::mem::replace(action, Action::new("", 0.0));
                *action = match key {
                    "pre" => taken.pre(items),
                    "soft" => taken.soft(items),
                    "add" => taken.add(items),
                    "del" => taken.del(items),
                    _ => {
                        let [value] = items.as_slice() else {
                            return Err(FormatError::new(line, "`cost:` takes one number"));
                        };
                        Action { cost: parse_f64(line, value)?, ..taken }
                    }
                };
            }
            other => return Err(FormatError::new(line, format!("unknown clause `{other}:`"))),
        }
    }
    if let Some(declared) = &declared {
        if let Some((line, p)) = used.iter().find(|(_, p)| !declared.contains(p)) {
            return Err(FormatError::new(*line, format!("predicate `{p}` is not declared")));
        }
    }
    Model::new(init, goal, actions).map_err(|e| FormatError::new(0, e.to_string()))
}

pub fn emit_model(model: &Model) -> String {
    fn join<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> String {
        items.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().join(" ")
    }
    let mut out = String::new();
    let _ = writeln!(out, "predicates: {}", join(model.predicates()));
    let _ = writeln!(out, "init: {}", join(model.init()));
    let _ = writeln!(out, "goal: {}", join(model.goal()));
    for action in model.actions() {
        let _ = writeln!(out, "action {}", action.name);
        let _ = writeln!(out, "  pre: {}", join(&action.preconditions));
        let _ = writeln!(out, "  soft: {}", join(&action.soft_preconditions));
        let _ = writeln!(out, "  add: {}", join(&action.add_effects));
        let _ = writeln!(out, "  del: {}", join(&action.del_effects));
        let _ = writeln!(out, "  cost: {}", action.cost);
    }
    out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
}

/// A plan file: one action name per line.
pub fn parse_plan(text: &str) -> Vec<String> {
    text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use peg_core::escape_room::{generate_scenarios, reference_scenario, GeneratorConfig};
    use proptest::prelude::*;

    #[test]
    fn scenario_round_trip() {
        let s = reference_scenario();
        let text = emit_scenario(&s);
        assert!(text.ends_with("dangerous: C D F H\nid: reference\n"));
        assert_eq!(parse_scenario(&text).unwrap(), s);
        for s in generate_scenarios(&GeneratorConfig { count: 4, danger_probability: 0.0, ..Default::default() }).unwrap() {
            let text = emit_scenario(&s);
            assert!(text.contains("\ndangerous:\n"));
            assert_eq!(parse_scenario(&text).unwrap(), s);
        }
    }

    #[test]
    fn scenario_errors_carry_lines() {
        assert_eq!(parse_scenario("S.G\nid: x\n").unwrap_err().line, 2);
        assert!(parse_scenario("S.G\n").is_err());
        assert_eq!(parse_scenario("S.G\ndangerous: AB\nid: x\n").unwrap_err().line, 2);
        assert_eq!(parse_scenario("S.G\ndangerous:\n...\nid: x\n").unwrap_err().line, 3);
    }

    #[test]
    fn trace_lines_and_provenance() {
        let text = "# provenance: synthetic\ns1: A C B\n\n# provenance: human\ns2:\n";
        let parsed = parse_traces(text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].0, 2);
        assert_eq!(parsed[0].1.steps, vec!["A", "C", "B"]);
        assert_eq!(parsed[0].1.provenance, Provenance::Synthetic);
        assert_eq!(parsed[1].0, 5);
        assert!(parsed[1].1.steps.is_empty());
        assert_eq!(parse_traces("s1 A B\n").unwrap_err().line, 1);
        assert_eq!(parse_traces("# provenance: alien\n").unwrap_err().line, 1);
    }

    #[test]
    fn weights_file_layout() {
        let mut w = WeightVector::new(vec![0.75, 0.81, 0.79, 0.87, -0.02, 1.0]);
        w.scenarios = vec!["a".into(), "b".into()];
        w.iterations = 12;
        let text = emit_weights(&w);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[5], "action_distance\t1\t1");
        assert_eq!(rows[4], "cost_distance_sq\t-0.02\t-0.02");
        assert_eq!(parse_weights(&text).unwrap(), w);
    }

    #[test]
    fn weights_reject_misordered_features() {
        let text = "y_min\t1\t1\n";
        assert_eq!(parse_weights(text).unwrap_err().line, 1);
        assert!(parse_weights("x_min\t1\t1\n").is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let text = "\
# shopping trip
init: not-holiday
goal: happy
action OUTLET-SHOPPING
  pre: not-holiday
  soft: car-ready is-sunny
  add: happy
  cost: 1
action VISIT-PARK
  soft: car-ready is-sunny
  add: happy
  cost: 2
";
        let model = parse_model(text).unwrap();
        assert_eq!(model.actions().len(), 2);
        assert_eq!(parse_model(&emit_model(&model)).unwrap(), model);
        assert_eq!(parse_model("pre: x\n").unwrap_err().line, 1);
        assert_eq!(parse_model("predicates: a\ninit: b\n").unwrap_err().line, 2);
        assert_eq!(parse_model("action A\n  cost: 1 2\n").unwrap_err().line, 2);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
    }

    fn token() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_-]{0,8}"
    }

    proptest! {
        #[test]
        fn weights_round_trip(values in proptest::collection::vec(finite(), 6), scenarios in proptest::collection::vec(token(), 0..4), iterations in 0usize..10_000) {
            let mut w = WeightVector::new(values);
            w.scenarios = scenarios;
            w.iterations = iterations;
            prop_assert_eq!(parse_weights(&emit_weights(&w)).unwrap(), w);
        }

        #[test]
        fn traces_round_trip(raw in proptest::collection::vec((token(), proptest::collection::vec("[A-Z]", 0..7), any::<bool>()), 0..10)) {
            let traces: Vec<Trace> = raw.into_iter().map(|(id, steps, human)| Trace {
                scenario_id: id,
                steps,
                provenance: if human { Provenance::Human } else { Provenance::Synthetic },
            }).collect();
            let parsed: Vec<Trace> = parse_traces(&emit_traces(&traces)).unwrap().into_iter().map(|(_, t)| t).collect();
            prop_assert_eq!(parsed, traces);
        }

        #[test]
        fn orderings_round_trip(id in token(), rows in proptest::collection::vec(("[A-Z]", finite(), 0.0..1.0f64), 0..8), method in 0usize..4, total in finite()) {
            let method = [OrderingMethod::Peg, OrderingMethod::Random, OrderingMethod::Manhattan, OrderingMethod::Custom][method];
            let record = OrderingRecord {
                explanation: OrderedExplanation {
                    scenario_id: id,
                    steps: rows.iter().map(|r| r.0.clone()).collect(),
                    step_rewards: rows.iter().map(|r| r.1).collect(),
                    total_reward: total,
                    method,
                },
                action_distance: rows.iter().map(|r| r.2).collect(),
            };
            prop_assert_eq!(parse_ordering(&emit_ordering(&record)).unwrap(), record);
        }

        #[test]
        fn generated_scenarios_round_trip(seed in 0u64..500, danger in 0.0..1.0f64) {
            let config = GeneratorConfig { count: 1, seed, danger_probability: danger, ..Default::default() };
            let s = &generate_scenarios(&config).unwrap()[0];
            prop_assert_eq!(&parse_scenario(&emit_scenario(s)).unwrap(), s);
        }
    }
}
