//! Finite-horizon MDPs/POMDPs with stochastic binary terminal reward,
//! time-indexed policies, and exact trajectory enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for row normalization checks at construction time.
pub const ROW_TOL: f64 = 1e-12;
/// Tolerance for aggregate probability checks (e.g. enumeration sums).
pub const AGG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid model: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("trajectory length {got} does not match horizon {want}")]
    HorizonMismatch { got: usize, want: usize },
    #[error("trajectory budget of {0} exceeded")]
    BudgetExceeded(usize),
}

/// A single invariant violation, naming the offending table cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Sparse transition row: list of `(next_state, probability)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Finite-horizon MDP with a stochastic binary terminal reward.
///
/// The terminal reward table gives the probability that the binary reward
/// `R = 1` given the final state/action pair; draws are encoded as `r = 1/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub horizon: usize,
    pub start: usize,
    /// `transition[s][a]` is a sparse probability row over next states.
    pub transition: Vec<Vec<SparseRow>>,
    /// `terminal_reward[s][a]` is `P(R = 1 | s_T = s, a_T = a)`.
    pub terminal_reward: Vec<Vec<f64>>,
}

impl FiniteMdp {
    /// Validating constructor. Returns every violation at once on failure.
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        horizon: usize,
        start: usize,
        transition: Vec<Vec<SparseRow>>,
        terminal_reward: Vec<Vec<f64>>,
    ) -> Result<Self, MdpError> {
        let mdp = Self { states, actions, horizon, start, transition, terminal_reward };
        let report = mdp.validate();
        if report.is_empty() {
            Ok(mdp)
        } else {
            Err(MdpError::Invalid(report))
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Checks every type invariant; an empty report means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ns = self.n_states();
        let na = self.n_actions();
        if ns == 0 {
            out.push(Violation { location: "states".into(), message: "empty state set".into() });
        }
        if na == 0 {
            out.push(Violation { location: "actions".into(), message: "empty action set".into() });
        }
        if self.horizon == 0 {
            out.push(Violation { location: "horizon".into(), message: "horizon must be >= 1".into() });
        }
        if self.start >= ns {
            out.push(Violation {
                location: "start".into(),
                message: format!("start index {} out of range", self.start),
            });
        }
        if self.transition.len() != ns {
            out.push(Violation {
                location: "transition".into(),
                message: format!("expected {ns} state rows, got {}", self.transition.len()),
            });
        }
        if self.terminal_reward.len() != ns {
            out.push(Violation {
                location: "terminal_reward".into(),
                message: format!("expected {ns} state rows, got {}", self.terminal_reward.len()),
            });
        }
        for (s, rows) in self.transition.iter().enumerate() {
            if rows.len() != na {
                out.push(Violation {
                    location: format!("transition[{s}]"),
                    message: format!("expected {na} action rows, got {}", rows.len()),
                });
                continue;
            }
            for (a, row) in rows.iter().enumerate() {
                let mut sum = 0.0;
                for &(s2, p) in row {
                    if s2 >= ns {
                        out.push(Violation {
                            location: format!("transition[{s}][{a}]"),
                            message: format!("next-state index {s2} out of range"),
                        });
                    }
                    if p < 0.0 {
                        out.push(Violation {
                            location: format!("transition[{s}][{a}]"),
                            message: format!("negative probability {p}"),
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_TOL {
                    out.push(Violation {
                        location: format!("transition[{s}][{a}]"),
                        message: format!("row sums to {sum}, expected 1"),
                    });
                }
            }
        }
        for (s, rows) in self.terminal_reward.iter().enumerate() {
            if rows.len() != na {
                out.push(Violation {
                    location: format!("terminal_reward[{s}]"),
                    message: format!("expected {na} entries, got {}", rows.len()),
                });
                continue;
            }
            for (a, &r) in rows.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation {
                        location: format!("terminal_reward[{s}][{a}]"),
                        message: format!("reward probability {r} outside [0, 1]"),
                    });
                }
            }
        }
        out
    }

    /// Transition probability `tau(s2 | s, a)`.
    pub fn trans_prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[s][a]
            .iter()
            .find(|&&(t, _)| t == s2)
            .map_or(0.0, |&(_, p)| p)
    }
}

/// Time-indexed stochastic policy `pi_t(a | s)` for `t in 0..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPolicy {
    /// `probs[t][s]` is a probability vector over actions.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TimedPolicy {
    /// Uniform policy over all actions at every state and time step.
    pub fn uniform(mdp: &FiniteMdp) -> Self {
        let row = vec![1.0 / mdp.n_actions() as f64; mdp.n_actions()];
        Self { probs: vec![vec![row; mdp.n_states()]; mdp.horizon] }
    }

    /// Replicates a stationary rule `pi(a | s)` across all time steps.
    pub fn stationary(rows: Vec<Vec<f64>>, horizon: usize) -> Self {
        Self { probs: vec![rows; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[t][s][a]
    }

    pub fn validate(&self, mdp: &FiniteMdp) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.probs.len() != mdp.horizon {
            out.push(Violation {
                location: "policy".into(),
                message: format!("expected {} time slices, got {}", mdp.horizon, self.probs.len()),
            });
            return out;
        }
        for (t, slice) in self.probs.iter().enumerate() {
            for (s, row) in slice.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    out.push(Violation {
                        location: format!("policy[{t}][{s}]"),
                        message: format!("row sums to {sum}, expected 1"),
                    });
                }
                if row.iter().any(|&p| p < 0.0) {
                    out.push(Violation {
                        location: format!("policy[{t}][{s}]"),
                        message: "negative probability".into(),
                    });
                }
            }
        }
        out
    }

    /// True iff every `(t, s)` row puts positive mass on every action.
    pub fn is_full_support(&self) -> bool {
        self.probs
            .iter()
            .flatten()
            .all(|row| row.iter().all(|&p| p > 0.0))
    }
}

/// Finite POMDP: an MDP plus an observation alphabet and emission table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinitePomdp {
    #[serde(flatten)]
    pub base: FiniteMdp,
    pub observations: Vec<String>,
    /// `emit[s]` is a probability vector over observations.
    pub emit: Vec<Vec<f64>>,
}

impl FinitePomdp {
    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.base.validate();
        if self.emit.len() != self.base.n_states() {
            out.push(Violation {
                location: "emit".into(),
                message: format!(
                    "expected {} state rows, got {}",
                    self.base.n_states(),
                    self.emit.len()
                ),
            });
            return out;
        }
        for (s, row) in self.emit.iter().enumerate() {
            if row.len() != self.n_observations() {
                out.push(Violation {
                    location: format!("emit[{s}]"),
                    message: format!("expected {} entries, got {}", self.n_observations(), row.len()),
                });
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                out.push(Violation {
                    location: format!("emit[{s}]"),
                    message: format!("row sums to {sum}, expected 1"),
                });
            }
            if row.iter().any(|&p| p < 0.0) {
                out.push(Violation {
                    location: format!("emit[{s}]"),
                    message: "negative probability".into(),
                });
            }
        }
        out
    }
}

/// One complete trajectory `(s_1, a_1, ..., s_T, a_T)` with its reward bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub reward: bool,
}

/// Exact probability of a trajectory under `(mdp, policy)`, including the
/// reward-bit factor `r` or `1 - r`.
pub fn trajectory_probability(
    mdp: &FiniteMdp,
    policy: &TimedPolicy,
    traj: &Trajectory,
) -> Result<f64, MdpError> {
    if traj.states.len() != mdp.horizon || traj.actions.len() != mdp.horizon {
        return Err(MdpError::HorizonMismatch {
            got: traj.states.len().min(traj.actions.len()),
            want: mdp.horizon,
        });
    }
    let mut p = if traj.states[0] == mdp.start { 1.0 } else { 0.0 };
    for t in 0..mdp.horizon {
        p *= policy.prob(t, traj.states[t], traj.actions[t]);
        if t + 1 < mdp.horizon {
            p *= mdp.trans_prob(traj.states[t], traj.actions[t], traj.states[t + 1]);
        }
    }
    let last = mdp.horizon - 1;
    let r = mdp.terminal_reward[traj.states[last]][traj.actions[last]];
    p *= if traj.reward { r } else { 1.0 - r };
    Ok(p)
}

/// Enumerates the exact support of the trajectory distribution.
///
/// Only positive-probability trajectories are listed; a final `(s, a)` pair
/// with `r` strictly inside `(0, 1)` contributes both reward bits.
pub fn enumerate_trajectories(
    mdp: &FiniteMdp,
    policy: &TimedPolicy,
    budget: usize,
) -> Result<Vec<(Trajectory, f64)>, MdpError> {
    let mut out = Vec::new();
    let mut states = vec![mdp.start];
    let mut actions = Vec::new();
    walk(mdp, policy, 1.0, &mut states, &mut actions, &mut out, budget)?;
    Ok(out)
}

fn walk(
    mdp: &FiniteMdp,
    policy: &TimedPolicy,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<(Trajectory, f64)>,
    budget: usize,
) -> Result<(), MdpError> {
    let t = actions.len();
    let s = *states.last().unwrap();
    for a in 0..mdp.n_actions() {
        let pa = policy.prob(t, s, a) * prob;
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        if t + 1 == mdp.horizon {
            let r = mdp.terminal_reward[s][a];
            for (bit, pr) in [(true, r), (false, 1.0 - r)] {
                if pr > 0.0 {
                    if out.len() >= budget {
                        return Err(MdpError::BudgetExceeded(budget));
                    }
                    out.push((
                        Trajectory { states: states.clone(), actions: actions.clone(), reward: bit },
                        pa * pr,
                    ));
                }
            }
        } else {
            for &(s2, pt) in &mdp.transition[s][a] {
                if pt == 0.0 {
                    continue;
                }
                states.push(s2);
                walk(mdp, policy, pa * pt, states, actions, out, budget)?;
                states.pop();
            }
        }
        actions.pop();
    }
    Ok(())
}

/// Forward dynamic program: `reachable[t][s]` is the probability of being in
/// state `s` at time step `t` (0-based) under the policy.
pub fn reachable(mdp: &FiniteMdp, policy: &TimedPolicy) -> Vec<Vec<f64>> {
    let ns = mdp.n_states();
    let mut table = vec![vec![0.0; ns]; mdp.horizon];
    table[0][mdp.start] = 1.0;
    for t in 0..mdp.horizon - 1 {
        for s in 0..ns {
            let ps = table[t][s];
            if ps == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions() {
                let pa = ps * policy.prob(t, s, a);
                if pa == 0.0 {
                    continue;
                }
                for &(s2, pt) in &mdp.transition[s][a] {
                    table[t + 1][s2] += pa * pt;
                }
            }
        }
    }
    table
}

/// Serializes an MDP to its JSON document form.
pub fn mdp_to_json(mdp: &FiniteMdp) -> String {
    serde_json::to_string_pretty(mdp).expect("MDP serialization cannot fail")
}

pub fn mdp_from_json(text: &str) -> Result<FiniteMdp, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn pomdp_to_json(pomdp: &FinitePomdp) -> String {
    serde_json::to_string_pretty(pomdp).expect("POMDP serialization cannot fail")
}

pub fn pomdp_from_json(text: &str) -> Result<FinitePomdp, serde_json::Error> {
    serde_json::from_str(text)
}
