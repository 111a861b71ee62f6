//! The goal-conditioning operator, its iterated fixed point, incoherence and
//! KL diagnostics, and an independent backward-induction optimum.

use serde::Serialize;
use thiserror::Error;

use crate::mdp::{reachable, FiniteMdp, TimedPolicy};

/// Absolute tolerance for argmax ties when masking onto optimal actions.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error("limit policy requires a full-support starting policy")]
    NotFullSupport,
}

/// Backward dynamic program of success probabilities under a policy.
///
/// `q[t][s][a]` is the probability of `R = 1` when taking `a` in `s` at time
/// `t` and following the policy afterwards; `v[t][s]` averages over actions.
#[derive(Debug, Clone)]
pub struct SuccessTable {
    pub q: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
}

pub fn success_probability(mdp: &FiniteMdp, policy: &TimedPolicy) -> SuccessTable {
    let (ns, na, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon);
    let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut v = vec![vec![0.0; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                q[t][s][a] = if t + 1 == horizon {
                    mdp.terminal_reward[s][a]
                } else {
                    mdp.transition[s][a]
                        .iter()
                        .map(|&(s2, p)| p * v[t + 1][s2])
                        .sum()
                };
            }
            v[t][s] = (0..na).map(|a| policy.prob(t, s, a) * q[t][s][a]).sum();
        }
    }
    SuccessTable { q, v }
}

/// Expected return `J(pi) = p_pi(R = 1)`.
pub fn expected_return(mdp: &FiniteMdp, policy: &TimedPolicy) -> f64 {
    success_probability(mdp, policy).v[0][mdp.start]
}

/// One application of the goal-conditioning operator:
/// `G(pi)(a | s, t) ∝ pi(a | s, t) * Q[t][s][a]`.
///
/// At `(t, s)` pairs where the success posterior is identically zero the
/// operator copies the input row, which keeps it total.
pub fn goal_condition(mdp: &FiniteMdp, policy: &TimedPolicy) -> TimedPolicy {
    let table = success_probability(mdp, policy);
    let mut probs = policy.probs.clone();
    for (t, slice) in probs.iter_mut().enumerate() {
        for (s, row) in slice.iter_mut().enumerate() {
            let denom: f64 = row
                .iter()
                .enumerate()
                .map(|(a, &p)| p * table.q[t][s][a])
                .sum();
            if denom > 0.0 {
                for (a, p) in row.iter_mut().enumerate() {
                    *p = *p * table.q[t][s][a] / denom;
                }
            }
        }
    }
    TimedPolicy { probs }
}

/// KL divergence between two finite distributions, natural log,
/// with the convention `0 * ln(0 / q) = 0`. Returns infinity when `p` puts
/// mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

/// Incoherence `kappa(pi)`: summed KL between `G(pi)` and `pi` over all
/// `(t, s)` pairs reachable under `pi`.
pub fn incoherence(mdp: &FiniteMdp, policy: &TimedPolicy) -> f64 {
    let conditioned = goal_condition(mdp, policy);
    let visits = reachable(mdp, policy);
    let mut total = 0.0;
    for t in 0..mdp.horizon {
        for s in 0..mdp.n_states() {
            if visits[t][s] > 0.0 {
                let kl = kl_divergence(&conditioned.probs[t][s], &policy.probs[t][s]);
                // G multiplies pi pointwise, so absolute continuity holds.
                debug_assert!(kl.is_finite());
                total += kl;
            }
        }
    }
    total
}

/// How per-state KL terms are aggregated across reachable `(t, s)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlWeighting {
    /// Flat sum over every pair reachable under the reference policy `q`.
    UniformOverReachable,
    /// Visit-probability-weighted sum under the reference policy `q`.
    VisitWeighted,
}

/// Aggregated `D_KL(p || q)` over `(t, s)` pairs reachable under `q`.
/// Infinity is a value, not an error.
pub fn kl_policy_divergence(
    mdp: &FiniteMdp,
    p: &TimedPolicy,
    q: &TimedPolicy,
    weighting: KlWeighting,
) -> f64 {
    let visits = reachable(mdp, q);
    let mut total = 0.0;
    for t in 0..mdp.horizon {
        for s in 0..mdp.n_states() {
            if visits[t][s] > 0.0 {
                let kl = kl_divergence(&p.probs[t][s], &q.probs[t][s]);
                total += match weighting {
                    KlWeighting::UniformOverReachable => kl,
                    KlWeighting::VisitWeighted => visits[t][s] * kl,
                };
            }
        }
    }
    total
}

/// Maximum per-state `D_KL(p || q)` over `(t, s)` pairs reachable under `q`.
pub fn kl_policy_divergence_max(mdp: &FiniteMdp, p: &TimedPolicy, q: &TimedPolicy) -> f64 {
    let visits = reachable(mdp, q);
    let mut worst: f64 = 0.0;
    for t in 0..mdp.horizon {
        for s in 0..mdp.n_states() {
            if visits[t][s] > 0.0 {
                worst = worst.max(kl_divergence(&p.probs[t][s], &q.probs[t][s]));
            }
        }
    }
    worst
}

/// Trace of the iterated fine-tuning sequence `pi_0, G(pi_0), G^2(pi_0), ...`
/// with per-iterate diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub policies: Vec<TimedPolicy>,
    pub returns: Vec<f64>,
    pub incoherences: Vec<f64>,
    /// `D_KL(pi* || pi_i)` summed over reachable states; `NaN` when the
    /// starting policy has no support-restricted limit diagnostic.
    pub kl_to_limit: Vec<f64>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// CSV export with columns `(iteration, return, incoherence, kl_to_limit)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,return,incoherence,kl_to_limit\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i, self.returns[i], self.incoherences[i], self.kl_to_limit[i]
            ));
        }
        out
    }

    /// JSON export including full per-state policies.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }
}

/// Runs `k` applications of the goal-conditioning operator, recording the
/// return, incoherence, and KL-to-limit of every iterate.
pub fn iterate(mdp: &FiniteMdp, policy0: &TimedPolicy, k: usize) -> IterationTrace {
    let limit = support_limit(mdp, policy0);
    let mut policies = vec![policy0.clone()];
    for _ in 0..k {
        let next = goal_condition(mdp, policies.last().unwrap());
        policies.push(next);
    }
    let returns: Vec<f64> = policies.iter().map(|p| expected_return(mdp, p)).collect();
    let incoherences: Vec<f64> = policies.iter().map(|p| incoherence(mdp, p)).collect();
    let kl_to_limit: Vec<f64> = policies
        .iter()
        .map(|p| kl_policy_divergence(mdp, &limit, p, KlWeighting::UniformOverReachable))
        .collect();
    IterationTrace { policies, returns, incoherences, kl_to_limit }
}

/// Optimal success probabilities restricted to the support of `policy0`:
/// `v[t][s] = max over supported a` of the one-step lookahead.
fn support_optimal_q(mdp: &FiniteMdp, policy0: &TimedPolicy) -> Vec<Vec<Vec<f64>>> {
    let (ns, na, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon);
    let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut v = vec![vec![0.0; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut best = 0.0f64;
            for a in 0..na {
                q[t][s][a] = if t + 1 == horizon {
                    mdp.terminal_reward[s][a]
                } else {
                    mdp.transition[s][a]
                        .iter()
                        .map(|&(s2, p)| p * v[t + 1][s2])
                        .sum()
                };
                if policy0.prob(t, s, a) > 0.0 {
                    best = best.max(q[t][s][a]);
                }
            }
            v[t][s] = best;
        }
    }
    q
}

/// Limit of the iterated operator for an arbitrary-support starting policy:
/// per `(t, s)`, mask `pi_0` onto the actions (within its support) whose
/// optimal continuation value is maximal, then renormalize.
pub(crate) fn support_limit(mdp: &FiniteMdp, policy0: &TimedPolicy) -> TimedPolicy {
    let q = support_optimal_q(mdp, policy0);
    let mut probs = policy0.probs.clone();
    for (t, slice) in probs.iter_mut().enumerate() {
        for (s, row) in slice.iter_mut().enumerate() {
            let best = row
                .iter()
                .enumerate()
                .filter(|&(_, &p)| p > 0.0)
                .map(|(a, _)| q[t][s][a])
                .fold(0.0f64, f64::max);
            let mut denom = 0.0;
            for (a, p) in row.iter_mut().enumerate() {
                if *p > 0.0 && q[t][s][a] >= best - TIE_TOL {
                    denom += *p;
                } else {
                    *p = 0.0;
                }
            }
            if denom > 0.0 {
                for p in row.iter_mut() {
                    *p /= denom;
                }
            } else {
                // All continuations worthless: the operator never moves
                // this row, so the limit keeps the starting row.
                row.clone_from(&policy0.probs[t][s]);
            }
        }
    }
    TimedPolicy { probs }
}

/// The limiting policy of iterated goal conditioning: the starting policy
/// masked onto optimal-continuation actions and renormalized.
///
/// Requires a full-support starting policy.
pub fn limit_policy(mdp: &FiniteMdp, policy0: &TimedPolicy) -> Result<TimedPolicy, ConditioningError> {
    if !policy0.is_full_support() {
        return Err(ConditioningError::NotFullSupport);
    }
    Ok(support_limit(mdp, policy0))
}

/// Standard max-over-actions backward induction; returns a deterministic
/// policy (first argmax index) and the optimal value from the start state.
pub fn optimal_backward_induction(mdp: &FiniteMdp) -> (TimedPolicy, f64) {
    let (ns, na, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon);
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut probs = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..na {
                let q = if t + 1 == horizon {
                    mdp.terminal_reward[s][a]
                } else {
                    mdp.transition[s][a]
                        .iter()
                        .map(|&(s2, p)| p * v[t + 1][s2])
                        .sum()
                };
                if q > best {
                    best = q;
                    arg = a;
                }
            }
            v[t][s] = best;
            probs[t][s][arg] = 1.0;
        }
    }
    (TimedPolicy { probs }, v[0][mdp.start])
}
