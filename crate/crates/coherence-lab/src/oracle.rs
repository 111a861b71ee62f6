//! Random problem instances and the cross-checking property suite.
//!
//! The generator rejects instances whose optimal-continuation values have
//! near-ties (other than exact ones), so that iterated conditioning provably
//! separates the argmax set within a couple hundred steps. Near-ties are a
//! numerical no-man's land: the limit masks them out at tolerance 1e-12
//! while the iteration crawls through them at a rate set by the Q-ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conditioning::{
    expected_return, goal_condition, incoherence, kl_policy_divergence_max, limit_policy,
    optimal_backward_induction,
};
use crate::mdp::{enumerate_trajectories, reachable, FiniteMdp, TimedPolicy};

/// Bounds for random instances. The defaults match the enumerable regime
/// (|S| ≤ 6, |A| ≤ 3, T ≤ 4).
#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
    /// Maximum allowed ratio of second-best to best optimal continuation
    /// value at any (t, s); larger ratios are resampled.
    pub q_gap_ratio: f64,
    /// Minimum optimal value from the start state.
    pub min_value: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            max_states: 6,
            max_actions: 3,
            max_horizon: 4,
            q_gap_ratio: 0.85,
            min_value: 0.1,
        }
    }
}

/// Draws a random MDP satisfying the gap constraints, by rejection.
pub fn random_mdp(rng: &mut ChaCha8Rng, params: &InstanceParams) -> FiniteMdp {
    loop {
        let ns = rng.gen_range(2..=params.max_states);
        let na = rng.gen_range(2..=params.max_actions);
        let horizon = rng.gen_range(1..=params.max_horizon);
        let transition: Vec<Vec<Vec<(usize, f64)>>> = (0..ns)
            .map(|_| (0..na).map(|_| random_row(rng, ns)).collect())
            .collect();
        let terminal_reward: Vec<Vec<f64>> = (0..ns)
            .map(|_| (0..na).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let mdp = FiniteMdp::new(
            (0..ns).map(|s| format!("s{s}")).collect(),
            (0..na).map(|a| format!("a{a}")).collect(),
            horizon,
            0,
            transition,
            terminal_reward,
        )
        .expect("randomly generated rows are normalized");
        if well_separated(&mdp, params) {
            return mdp;
        }
    }
}

fn random_row(rng: &mut ChaCha8Rng, ns: usize) -> Vec<(usize, f64)> {
    // Dirichlet-ish via exponential weights, dropping near-zero entries to
    // exercise the sparse representation.
    let mut weights: Vec<f64> = (0..ns).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    for w in weights.iter_mut() {
        if *w < 0.05 {
            *w = 0.0;
        }
    }
    if weights.iter().all(|&w| w == 0.0) {
        weights[rng.gen_range(0..ns)] = 1.0;
    }
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, &w)| (s, w / total))
        .collect()
}

fn well_separated(mdp: &FiniteMdp, params: &InstanceParams) -> bool {
    let (ns, na, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon);
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut qs: Vec<f64> = (0..na)
                .map(|a| {
                    if t + 1 == horizon {
                        mdp.terminal_reward[s][a]
                    } else {
                        mdp.transition[s][a]
                            .iter()
                            .map(|&(s2, p)| p * v[t + 1][s2])
                            .sum()
                    }
                })
                .collect();
            qs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if qs[0] > 0.0 && qs[1] / qs[0] > params.q_gap_ratio {
                return false;
            }
            v[t][s] = qs[0];
        }
    }
    v[0][mdp.start] >= params.min_value
}

/// Draws a full-support random policy with exponential weights.
pub fn random_policy(rng: &mut ChaCha8Rng, mdp: &FiniteMdp) -> TimedPolicy {
    let probs = (0..mdp.horizon)
        .map(|_| {
            (0..mdp.n_states())
                .map(|_| {
                    let w: Vec<f64> = (0..mdp.n_actions())
                        .map(|_| -rng.gen::<f64>().max(1e-12).ln() + 0.05)
                        .collect();
                    let total: f64 = w.iter().sum();
                    w.iter().map(|x| x / total).collect()
                })
                .collect()
        })
        .collect();
    TimedPolicy { probs }
}

/// Result of one checked property across a batch of instances.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Worst slack observed (property-specific; ≤ 0 means all margins held).
    pub worst: f64,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const ENUM_BUDGET: usize = 2_000_000;

/// Runs every cross-check on `n` random instances. Deterministic per seed.
pub fn run_property_suite(n: usize, seed: u64) -> Vec<PropertyOutcome> {
    let params = InstanceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monotone = PropertyOutcome {
        name: "monotone-improvement".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut enum_sum = PropertyOutcome {
        name: "enumeration-sums-to-one".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut reach = PropertyOutcome {
        name: "reachable-matches-enumeration".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut ret = PropertyOutcome {
        name: "return-matches-enumeration".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut conv = PropertyOutcome {
        name: "converges-to-limit".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut kappa = PropertyOutcome {
        name: "incoherence-vanishes".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut optimal = PropertyOutcome {
        name: "limit-achieves-optimum".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };
    let mut fixed = PropertyOutcome {
        name: "limit-is-fixed-point".into(),
        instances: 0,
        failures: 0,
        worst: f64::NEG_INFINITY,
    };

    for _ in 0..n {
        let mdp = random_mdp(&mut rng, &params);
        let pi0 = random_policy(&mut rng, &mdp);

        // Monotone improvement of one conditioning step.
        let slack = expected_return(&mdp, &pi0) - expected_return(&mdp, &goal_condition(&mdp, &pi0));
        record(&mut monotone, slack, slack > 1e-10);

        // Enumeration oracle agreements.
        let trajs = enumerate_trajectories(&mdp, &pi0, ENUM_BUDGET)
            .expect("instances are enumerable by construction");
        let total: f64 = trajs.iter().map(|(_, p)| p).sum();
        record(&mut enum_sum, (total - 1.0).abs(), (total - 1.0).abs() > 1e-9);

        let j_enum: f64 = trajs.iter().filter(|(t, _)| t.reward).map(|(_, p)| p).sum();
        let j_dp = expected_return(&mdp, &pi0);
        record(&mut ret, (j_dp - j_enum).abs(), (j_dp - j_enum).abs() > 1e-10);

        let visits = reachable(&mdp, &pi0);
        let mut worst_marginal = 0.0f64;
        for t in 0..mdp.horizon {
            for s in 0..mdp.n_states() {
                let from_enum: f64 = trajs
                    .iter()
                    .filter(|(traj, _)| traj.states[t] == s)
                    .map(|(_, p)| p)
                    .sum();
                worst_marginal = worst_marginal.max((visits[t][s] - from_enum).abs());
            }
        }
        record(&mut reach, worst_marginal, worst_marginal > 1e-9);

        // Theorem reproduction: convergence, vanishing incoherence, optimum.
        let star = limit_policy(&mdp, &pi0).expect("random policies have full support");
        let mut pi = pi0.clone();
        let mut kl = f64::INFINITY;
        for _ in 0..200 {
            pi = goal_condition(&mdp, &pi);
            kl = kl_policy_divergence_max(&mdp, &star, &pi);
            if kl < 1e-6 {
                break;
            }
        }
        record(&mut conv, kl, !(kl < 1e-6));

        let k = incoherence(&mdp, &pi);
        record(&mut kappa, k, !(k < 1e-6));

        let (_, v_opt) = optimal_backward_induction(&mdp);
        let gap = (expected_return(&mdp, &star) - v_opt).abs();
        record(&mut optimal, gap, gap > 1e-9);

        let star2 = goal_condition(&mdp, &star);
        let mut worst_fix = 0.0f64;
        let star_visits = reachable(&mdp, &star);
        for t in 0..mdp.horizon {
            for s in 0..mdp.n_states() {
                if star_visits[t][s] > 0.0 {
                    for a in 0..mdp.n_actions() {
                        worst_fix =
                            worst_fix.max((star2.probs[t][s][a] - star.probs[t][s][a]).abs());
                    }
                }
            }
        }
        record(&mut fixed, worst_fix, worst_fix > 1e-9);
    }

    vec![monotone, enum_sum, reach, ret, conv, kappa, optimal, fixed]
}

fn record(outcome: &mut PropertyOutcome, slack: f64, failed: bool) {
    outcome.instances += 1;
    outcome.worst = outcome.worst.max(slack);
    if failed {
        outcome.failures += 1;
    }
}

/// Exhaustive search over deterministic time-indexed policies; cross-checks
/// backward induction on small instances.
pub fn exhaustive_optimal_value(mdp: &FiniteMdp) -> f64 {
    let cells = mdp.horizon * mdp.n_states();
    let combos = (mdp.n_actions() as u64).checked_pow(cells as u32);
    let combos = combos.expect("instance too large for exhaustive search");
    assert!(combos <= 1 << 22, "instance too large for exhaustive search");
    let mut best = 0.0f64;
    for mut code in 0..combos {
        let mut probs = vec![vec![vec![0.0; mdp.n_actions()]; mdp.n_states()]; mdp.horizon];
        for slice in probs.iter_mut() {
            for row in slice.iter_mut() {
                row[(code % mdp.n_actions() as u64) as usize] = 1.0;
                code /= mdp.n_actions() as u64;
            }
        }
        best = best.max(expected_return(mdp, &TimedPolicy { probs }));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_batch() {
        for outcome in run_property_suite(25, 17) {
            assert!(
                outcome.passed(),
                "{}: {} failures, worst {}",
                outcome.name,
                outcome.failures,
                outcome.worst
            );
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let a = run_property_suite(5, 3);
        let b = run_property_suite(5, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.worst.to_bits(), y.worst.to_bits());
        }
    }

    #[test]
    fn backward_induction_matches_exhaustive_search() {
        let params = InstanceParams {
            max_states: 4,
            max_actions: 2,
            max_horizon: 3,
            ..InstanceParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, &params);
            let (_, v) = optimal_backward_induction(&mdp);
            assert!((v - exhaustive_optimal_value(&mdp)).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_operator_fails_monotonicity() {
        // Mutation check: conditioning on the *previous* policy's posterior
        // but renormalizing against a shifted time index breaks improvement.
        let params = InstanceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut violated = false;
        for _ in 0..100 {
            let mdp = random_mdp(&mut rng, &params);
            if mdp.horizon < 2 {
                continue;
            }
            let pi = random_policy(&mut rng, &mdp);
            let mut bad = goal_condition(&mdp, &pi);
            // Off-by-one: shift every conditioned slice one step late.
            bad.probs.rotate_right(1);
            if expected_return(&mdp, &bad) < expected_return(&mdp, &pi) - 1e-10 {
                violated = true;
                break;
            }
        }
        assert!(violated, "mutated operator should violate monotonicity");
    }
}
