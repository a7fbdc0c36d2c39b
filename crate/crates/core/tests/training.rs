use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peg_core::escape_room::{generate_scenarios, scenario_mdp, GeneratorConfig, LatticeOptions, LatticeScope};
use peg_core::irl::{irl_gradient, soft_policy, train_on, Demonstrations, TrainingConfig};
use peg_core::mdp::{ExplanationMdp, WeightVector, FEATURE_COUNT};

fn lattice(n: usize, seed: u64) -> ExplanationMdp {
    let config = GeneratorConfig { count: 1, contingencies: n, seed, ..GeneratorConfig::default() };
    let scenario = generate_scenarios(&config).unwrap().remove(0);
    let options = LatticeOptions { scope: LatticeScope::AllMarked, ..LatticeOptions::default() };
    let mdp = scenario_mdp(&scenario, &options).unwrap();
    assert_eq!(mdp.n(), n);
    mdp
}

#[test]
fn uniform_orderings_learn_near_zero_weights() {
    let mdp = lattice(4, 11);
    // every ordering exactly eight times; the likelihood is flat enough along
    // some feature directions that even a few surplus orderings shift Θ by 0.1
    let orderings: Vec<Vec<usize>> = (0..4).permutations(4).collect();
    let traces: Vec<Vec<usize>> = orderings.iter().cycle().take(8 * 24).cloned().collect();
    let data = [Demonstrations { mdp: &mdp, traces }];
    let config = TrainingConfig { learning_rate: 0.1, iterations: 300, ..TrainingConfig::default() };
    let result = train_on(&data, &config).unwrap();
    for w in &result.weights.values {
        assert!(w.abs() < 0.05, "weights {:?}", result.weights.values);
    }
}

#[test]
fn gradient_vanishes_on_own_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (n, seed) in [(3, 12), (5, 13)] {
        let mdp = lattice(n, seed);
        let weights = WeightVector::new((0..FEATURE_COUNT).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let policy = soft_policy(&weights, &mdp).unwrap();
        let traces = (0..10_000).map(|_| policy.sample(&mdp, &mut rng)).collect();
        let grad = irl_gradient(&weights, &[Demonstrations { mdp: &mdp, traces }]).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 0.02, "n={n}: gradient {grad:?}");
    }
}

#[test]
fn small_steps_never_lower_the_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let truth = WeightVector::new(vec![-2.0, -1.0, -1.5, 0.5, 0.0, -1.0]);
    let mdps = [lattice(3, 21), lattice(4, 22)];
    let data: Vec<Demonstrations> = mdps
        .iter()
        .map(|mdp| {
            let policy = soft_policy(&truth, mdp).unwrap();
            Demonstrations { mdp, traces: (0..30).map(|_| policy.sample(mdp, &mut rng)).collect() }
        })
        .collect();
    let config = TrainingConfig { learning_rate: 0.02, iterations: 200, ..TrainingConfig::default() };
    let history = train_on(&data, &config).unwrap().log_likelihood_history;
    for pair in history.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-12, "likelihood fell from {} to {}", pair[0], pair[1]);
    }
    assert!(history.last().unwrap() > history.first().unwrap());
}
