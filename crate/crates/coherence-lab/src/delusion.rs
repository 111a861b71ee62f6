//! Auto-suggestive delusion laboratory: an exact history predictor fitted to
//! expert demonstrations over a latent-state environment, simulation with
//! that predictor, delusion measurement, and the de-confounding refit.
//!
//! The confounded predictor treats the agent's own actions as evidence about
//! the hidden state, because in the expert data actions really did carry that
//! information. The refit predictor models the same action process but lets
//! only observations update the latent belief.

use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::kl_divergence;
use crate::mdp::{FinitePomdp, TimedPolicy, Violation, ROW_TOL};

#[derive(Debug, Error)]
pub enum DelusionError {
    #[error("invalid latent environment: {0:?}")]
    InvalidEnvironment(Vec<Violation>),
    #[error("probe history has zero probability under the predictor")]
    ProbeUnreachable,
    #[error("rollout set is empty")]
    EmptyRollouts,
    #[error("enumeration budget of {budget} histories exceeded")]
    BudgetExceeded { budget: usize },
    #[error("JSONL line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A POMDP bundled with a latent prior and an expert policy that reads the
/// true state. Training data hides the state, which creates the confounder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentEnvironment {
    pub pomdp: FinitePomdp,
    /// Distribution of the initial (hidden) state.
    pub latent_prior: Vec<f64>,
    /// The demonstrator; its rows condition on the true state.
    pub expert: TimedPolicy,
    /// The observation index that signals success; an episode's reward is 1
    /// exactly when this observation occurs within the horizon.
    pub success_obs: usize,
}

impl LatentEnvironment {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.pomdp.validate();
        out.extend(self.expert.validate(&self.pomdp.base));
        let total: f64 = self.latent_prior.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            out.push(Violation {
                location: "latent_prior".into(),
                message: format!("sums to {total}, expected 1"),
            });
        }
        if self.success_obs >= self.pomdp.n_observations() {
            out.push(Violation {
                location: "success_obs".into(),
                message: "index out of range".into(),
            });
        }
        out
    }
}

/// One element of an observation/action history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    Obs(usize),
    Act(usize),
}

/// A history predictor: next-action and next-observation conditionals given
/// an event history.
pub trait Predictor {
    fn action_dist(&self, history: &[Event]) -> Vec<f64>;
    fn obs_dist(&self, history: &[Event], action: usize) -> Vec<f64>;
}

/// Whether the belief that drives observation forecasts treats actions as
/// evidence about the latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorMode {
    /// Actions multiply the belief by the expert likelihood — the exact
    /// conditional of the expert-generated training process.
    Confounded,
    /// Actions move the state but carry no evidence — the exact conditional
    /// of the (predictor-actions, true-environment) process.
    Refit,
}

/// Exact Bayesian-filter predictor over a latent environment.
///
/// The next-action rule always reproduces the training process (actions as
/// evidence); the mode only changes the belief behind observation forecasts.
#[derive(Debug, Clone)]
pub struct ExactPredictor {
    pub env: LatentEnvironment,
    pub mode: PredictorMode,
}

/// Fits the exact conditional of the expert-generated observable process.
pub fn fit_exact_predictor(env: &LatentEnvironment) -> ExactPredictor {
    ExactPredictor { env: env.clone(), mode: PredictorMode::Confounded }
}

/// De-confounds a predictor exactly: the action process is unchanged, the
/// observation forecasts use an observations-only belief. Idempotent.
pub fn refit_exact(predictor: &ExactPredictor) -> ExactPredictor {
    ExactPredictor { env: predictor.env.clone(), mode: PredictorMode::Refit }
}

impl ExactPredictor {
    /// Runs the filter, returning (confounded belief, observations-only
    /// belief, number of actions consumed). Beliefs are unnormalized; a zero
    /// confounded belief marks a history the training process never produces.
    fn filter(&self, history: &[Event]) -> (Vec<f64>, Vec<f64>, usize) {
        let env = &self.env;
        let mut conf = env.latent_prior.clone();
        let mut refit = env.latent_prior.clone();
        let mut t = 0usize;
        for ev in history {
            match *ev {
                Event::Obs(o) => {
                    for (s, b) in conf.iter_mut().enumerate() {
                        *b *= env.pomdp.emit[s][o];
                    }
                    for (s, b) in refit.iter_mut().enumerate() {
                        *b *= env.pomdp.emit[s][o];
                    }
                }
                Event::Act(a) => {
                    let te = t.min(env.expert.horizon() - 1);
                    for (s, b) in conf.iter_mut().enumerate() {
                        *b *= env.expert.prob(te, s, a);
                    }
                    conf = push(&env.pomdp, &conf, a);
                    refit = push(&env.pomdp, &refit, a);
                    t += 1;
                }
            }
        }
        (conf, refit, t)
    }

    /// Posterior over the latent state held by the mode's belief, with a
    /// trailing action applying its evidence but not its state change.
    /// This isolates the delusion mechanism: after (o_before, a_buy) the
    /// confounded belief is a point mass while the refit belief is the prior.
    pub fn latent_posterior(&self, history: &[Event]) -> Vec<f64> {
        let (prefix, tail_act) = match history.split_last() {
            Some((&Event::Act(a), rest)) => (rest, Some(a)),
            _ => (history, None),
        };
        let (conf, refit, t) = self.filter(prefix);
        let mut belief = match self.mode {
            PredictorMode::Confounded => conf,
            PredictorMode::Refit => refit,
        };
        if let (Some(a), PredictorMode::Confounded) = (tail_act, self.mode) {
            let te = t.min(self.env.expert.horizon() - 1);
            for (s, b) in belief.iter_mut().enumerate() {
                *b *= self.env.expert.prob(te, s, a);
            }
        }
        normalize(belief)
    }
}

fn push(pomdp: &FinitePomdp, belief: &[f64], action: usize) -> Vec<f64> {
    let mut next = vec![0.0; belief.len()];
    for (s, &b) in belief.iter().enumerate() {
        if b > 0.0 {
            for &(s2, p) in &pomdp.base.transition[s][action] {
                next[s2] += b * p;
            }
        }
    }
    next
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
    v
}

impl Predictor for ExactPredictor {
    fn action_dist(&self, history: &[Event]) -> Vec<f64> {
        let (conf, _, t) = self.filter(history);
        let belief = normalize(conf);
        let te = t.min(self.env.expert.horizon() - 1);
        let na = self.env.pomdp.base.n_actions();
        let dist: Vec<f64> = (0..na)
            .map(|a| {
                belief
                    .iter()
                    .enumerate()
                    .map(|(s, &b)| b * self.env.expert.prob(te, s, a))
                    .sum()
            })
            .collect();
        normalize(dist)
    }

    fn obs_dist(&self, history: &[Event], action: usize) -> Vec<f64> {
        let (conf, refit, t) = self.filter(history);
        let mut belief = match self.mode {
            PredictorMode::Confounded => conf,
            PredictorMode::Refit => refit,
        };
        if self.mode == PredictorMode::Confounded {
            let te = t.min(self.env.expert.horizon() - 1);
            for (s, b) in belief.iter_mut().enumerate() {
                *b *= self.env.expert.prob(te, s, action);
            }
        }
        belief = normalize(belief);
        let after = push(&self.env.pomdp, &belief, action);
        let no = self.env.pomdp.n_observations();
        let dist: Vec<f64> = (0..no)
            .map(|o| {
                after
                    .iter()
                    .enumerate()
                    .map(|(s, &b)| b * self.env.pomdp.emit[s][o])
                    .sum()
            })
            .collect();
        normalize(dist)
    }
}

/// One simulated episode over observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub reward: bool,
    /// True when the horizon elapsed without the success observation.
    pub truncated: bool,
    /// Hidden state sequence, kept for diagnostics; not part of the
    /// on-disk schema.
    #[serde(skip)]
    pub states: Vec<usize>,
}

/// Where a rollout batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Expert,
    SimulatedAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSet {
    pub rollouts: Vec<Rollout>,
    pub provenance: Provenance,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RolloutLine<'a> {
    schema_version: u32,
    observations: std::borrow::Cow<'a, [usize]>,
    actions: std::borrow::Cow<'a, [usize]>,
    reward: bool,
    truncated: bool,
    provenance: Provenance,
    seed: u64,
}

const ROLLOUT_SCHEMA_VERSION: u32 = 1;

impl RolloutSet {
    pub fn to_jsonl<W: Write>(&self, mut w: W) -> Result<(), DelusionError> {
        for r in &self.rollouts {
            let line = RolloutLine {
                schema_version: ROLLOUT_SCHEMA_VERSION,
                observations: (&r.observations[..]).into(),
                actions: (&r.actions[..]).into(),
                reward: r.reward,
                truncated: r.truncated,
                provenance: self.provenance,
                seed: self.seed,
            };
            serde_json::to_writer(&mut w, &line)
                .map_err(|e| DelusionError::Jsonl { line: 0, message: e.to_string() })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_jsonl<R: BufRead>(r: R) -> Result<RolloutSet, DelusionError> {
        let mut rollouts = Vec::new();
        let mut provenance = Provenance::SimulatedAgent;
        let mut seed = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RolloutLine =
                serde_json::from_str(&line).map_err(|e| DelusionError::Jsonl {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if parsed.schema_version != ROLLOUT_SCHEMA_VERSION {
                return Err(DelusionError::Jsonl {
                    line: i + 1,
                    message: format!(
                        "schema version {} not supported (expected {})",
                        parsed.schema_version, ROLLOUT_SCHEMA_VERSION
                    ),
                });
            }
            provenance = parsed.provenance;
            seed = parsed.seed;
            rollouts.push(Rollout {
                observations: parsed.observations.into_owned(),
                actions: parsed.actions.into_owned(),
                reward: parsed.reward,
                truncated: parsed.truncated,
                states: Vec::new(),
            });
        }
        Ok(RolloutSet { rollouts, provenance, seed })
    }
}

fn sample_from(rng: &mut impl Rng, dist: &[f64]) -> usize {
    WeightedIndex::new(dist).map(|d| d.sample(rng)).unwrap_or(0)
}

fn sample_sparse(rng: &mut impl Rng, row: &[(usize, f64)]) -> usize {
    let mut u: f64 = rng.gen();
    for &(s, p) in row {
        u -= p;
        if u <= 0.0 {
            return s;
        }
    }
    row.last().map(|&(s, _)| s).unwrap_or(0)
}

fn run_episode<P: Predictor>(
    predictor: &P,
    env: &LatentEnvironment,
    horizon: usize,
    expert_actions: bool,
    rng: &mut impl Rng,
) -> Rollout {
    let prior: Vec<f64> = env.latent_prior.clone();
    let mut state = sample_from(rng, &prior);
    let mut obs = sample_from(rng, &env.pomdp.emit[state]);
    let mut rollout = Rollout {
        observations: vec![obs],
        actions: Vec::new(),
        reward: obs == env.success_obs,
        truncated: false,
        states: vec![state],
    };
    let mut history = vec![Event::Obs(obs)];
    let mut t = 0;
    while !rollout.reward && t < horizon {
        let a = if expert_actions {
            let te = t.min(env.expert.horizon() - 1);
            sample_from(rng, &env.expert.probs[te][state])
        } else {
            sample_from(rng, &predictor.action_dist(&history))
        };
        state = sample_sparse(rng, &env.pomdp.base.transition[state][a]);
        obs = sample_from(rng, &env.pomdp.emit[state]);
        rollout.actions.push(a);
        rollout.observations.push(obs);
        rollout.states.push(state);
        history.push(Event::Act(a));
        history.push(Event::Obs(obs));
        t += 1;
        if obs == env.success_obs {
            rollout.reward = true;
        }
    }
    rollout.truncated = !rollout.reward;
    rollout
}

/// Simulates the (predictor-actions, true-environment) process. Actions come
/// from the predictor given the observable history; the latent state is
/// fixed at episode start and evolves under the true dynamics, never under
/// the predictor's belief. Episodes end at the success observation or after
/// `horizon` actions. Deterministic given the seed and independent of the
/// worker count (per-episode RNG streams).
pub fn simulate<P: Predictor + Sync>(
    predictor: &P,
    env: &LatentEnvironment,
    n: usize,
    horizon: usize,
    seed: u64,
) -> RolloutSet {
    let rollouts: Vec<Rollout> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            run_episode(predictor, env, horizon, false, &mut rng)
        })
        .collect();
    RolloutSet { rollouts, provenance: Provenance::SimulatedAgent, seed }
}

/// Replays the expert itself (actions read the true state).
pub fn simulate_expert(env: &LatentEnvironment, n: usize, horizon: usize, seed: u64) -> RolloutSet {
    let dummy = fit_exact_predictor(env);
    let rollouts: Vec<Rollout> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            run_episode(&dummy, env, horizon, true, &mut rng)
        })
        .collect();
    RolloutSet { rollouts, provenance: Provenance::Expert, seed }
}

/// Exact success probability of the (predictor-actions, true-environment)
/// process by joint enumeration over latent states and observable histories.
pub fn exact_simulated_return<P: Predictor>(
    predictor: &P,
    env: &LatentEnvironment,
    horizon: usize,
    budget: usize,
) -> Result<f64, DelusionError> {
    struct Walker<'a, P: Predictor> {
        predictor: &'a P,
        env: &'a LatentEnvironment,
        horizon: usize,
        budget: usize,
        visited: usize,
        total: f64,
    }
    impl<P: Predictor> Walker<'_, P> {
        // `joint[s]` is the joint probability of (state = s, history).
        fn walk(
            &mut self,
            joint: Vec<f64>,
            history: &mut Vec<Event>,
            t: usize,
        ) -> Result<(), DelusionError> {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(DelusionError::BudgetExceeded { budget: self.budget });
            }
            if t == self.horizon {
                return Ok(());
            }
            let actions = self.predictor.action_dist(history);
            for (a, &pa) in actions.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                let mut next = push(&self.env.pomdp, &joint, a);
                for x in next.iter_mut() {
                    *x *= pa;
                }
                for o in 0..self.env.pomdp.n_observations() {
                    let branch: Vec<f64> = next
                        .iter()
                        .enumerate()
                        .map(|(s, &p)| p * self.env.pomdp.emit[s][o])
                        .collect();
                    let mass: f64 = branch.iter().sum();
                    if mass <= 0.0 {
                        continue;
                    }
                    if o == self.env.success_obs {
                        self.total += mass;
                        continue;
                    }
                    history.push(Event::Act(a));
                    history.push(Event::Obs(o));
                    self.walk(branch, history, t + 1)?;
                    history.pop();
                    history.pop();
                }
            }
            Ok(())
        }
    }

    let mut walker =
        Walker { predictor, env, horizon, budget, visited: 0, total: 0.0 };
    for o in 0..env.pomdp.n_observations() {
        let joint: Vec<f64> = env
            .latent_prior
            .iter()
            .enumerate()
            .map(|(s, &p)| p * env.pomdp.emit[s][o])
            .collect();
        let mass: f64 = joint.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        if o == env.success_obs {
            walker.total += mass;
            continue;
        }
        let mut history = vec![Event::Obs(o)];
        walker.walk(joint, &mut history, 0)?;
    }
    Ok(walker.total)
}

/// Action delusion λ: expected KL between the expert's latent-conditional
/// action rule and the latent-marginal action rule at the first decision.
/// Returns the infinity marker if absolute continuity fails.
pub fn action_delusion(env: &LatentEnvironment) -> f64 {
    let na = env.pomdp.base.n_actions();
    let marginal: Vec<f64> = (0..na)
        .map(|a| {
            env.latent_prior
                .iter()
                .enumerate()
                .map(|(s, &p)| p * env.expert.prob(0, s, a))
                .sum()
        })
        .collect();
    env.latent_prior
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * kl_divergence(&env.expert.probs[0][s], &marginal))
        .sum()
}

/// A probe: an initial observation plus a planned action sequence, with no
/// intermediate observations treated as evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbePoint {
    pub init_obs: usize,
    pub actions: Vec<usize>,
}

/// Success-step forecast: `result[k]` for `k < actions.len()` is the
/// probability that the success observation first occurs right after the
/// `(k+1)`-th planned action; the last entry is the probability it never
/// occurs within the plan.
///
/// Implemented as a forward filter over (latent state, first-success step)
/// pairs. In confounded mode every planned action additionally multiplies
/// the belief by the expert likelihood — the predictor reads the plan as if
/// an expert had chosen it, which is precisely the delusion under
/// measurement. In refit mode actions only move the state.
pub fn success_step_forecast(
    predictor: &ExactPredictor,
    probe: &ProbePoint,
) -> Result<Vec<f64>, DelusionError> {
    let env = &predictor.env;
    let horizon = probe.actions.len();
    let ns = env.pomdp.base.n_states();
    // belief[tag][s]; tag = horizon means "no success yet".
    let mut belief = vec![vec![0.0; ns]; horizon + 1];
    for (s, &p) in env.latent_prior.iter().enumerate() {
        belief[horizon][s] = p * env.pomdp.emit[s][probe.init_obs];
    }
    for (t, &a) in probe.actions.iter().enumerate() {
        for slice in belief.iter_mut() {
            if predictor.mode == PredictorMode::Confounded {
                let te = t.min(env.expert.horizon() - 1);
                for (s, b) in slice.iter_mut().enumerate() {
                    *b *= env.expert.prob(te, s, a);
                }
            }
            *slice = push(&env.pomdp, slice, a);
        }
        // Untagged mass that now emits the success observation gets the tag.
        for s in 0..ns {
            let p_succ = env.pomdp.emit[s][env.success_obs];
            if p_succ > 0.0 {
                let moved = belief[horizon][s] * p_succ;
                belief[t][s] += moved;
                belief[horizon][s] -= moved;
            }
        }
    }
    let mut steps: Vec<f64> = belief.iter().map(|slice| slice.iter().sum()).collect();
    let total: f64 = steps.iter().sum();
    if total <= 0.0 {
        return Err(DelusionError::ProbeUnreachable);
    }
    for x in steps.iter_mut() {
        *x /= total;
    }
    Ok(steps)
}

/// Forecast delusion at a probe point: KL between the predictor's
/// success-step forecast and the exact refit's forecast (the true
/// distribution of the simulated process), model ‖ ideal direction.
pub fn forecast_delusion(
    predictor: &ExactPredictor,
    probe: &ProbePoint,
) -> Result<f64, DelusionError> {
    let model = success_step_forecast(predictor, probe)?;
    let ideal = success_step_forecast(&refit_exact(predictor), probe)?;
    Ok(kl_divergence(&model, &ideal))
}

/// Count-based predictor refit from sampled rollouts, with additive-ε
/// smoothing and a uniform fallback at unseen histories.
pub struct CountPredictor {
    n_actions: usize,
    n_observations: usize,
    epsilon: f64,
    action_counts: std::collections::HashMap<Vec<Event>, Vec<u64>>,
    obs_counts: std::collections::HashMap<(Vec<Event>, usize), Vec<u64>>,
}

pub fn refit_from_samples(
    rollouts: &RolloutSet,
    env: &LatentEnvironment,
    epsilon: f64,
) -> Result<CountPredictor, DelusionError> {
    if rollouts.rollouts.is_empty() {
        return Err(DelusionError::EmptyRollouts);
    }
    let mut cp = CountPredictor {
        n_actions: env.pomdp.base.n_actions(),
        n_observations: env.pomdp.n_observations(),
        epsilon,
        action_counts: Default::default(),
        obs_counts: Default::default(),
    };
    for r in &rollouts.rollouts {
        let mut history: Vec<Event> = vec![Event::Obs(r.observations[0])];
        for (i, &a) in r.actions.iter().enumerate() {
            cp.action_counts
                .entry(history.clone())
                .or_insert_with(|| vec![0; cp.n_actions])[a] += 1;
            let o = r.observations[i + 1];
            cp.obs_counts
                .entry((history.clone(), a))
                .or_insert_with(|| vec![0; cp.n_observations])[o] += 1;
            history.push(Event::Act(a));
            history.push(Event::Obs(o));
        }
    }
    Ok(cp)
}

fn counts_to_dist(counts: Option<&Vec<u64>>, n: usize, epsilon: f64) -> Vec<f64> {
    match counts {
        Some(c) if c.iter().sum::<u64>() > 0 || epsilon > 0.0 => {
            let total = c.iter().sum::<u64>() as f64 + epsilon * n as f64;
            c.iter().map(|&x| (x as f64 + epsilon) / total).collect()
        }
        _ => vec![1.0 / n as f64; n],
    }
}

impl Predictor for CountPredictor {
    fn action_dist(&self, history: &[Event]) -> Vec<f64> {
        counts_to_dist(self.action_counts.get(history), self.n_actions, self.epsilon)
    }

    fn obs_dist(&self, history: &[Event], action: usize) -> Vec<f64> {
        counts_to_dist(
            self.obs_counts.get(&(history.to_vec(), action)),
            self.n_observations,
            self.epsilon,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{padlock, stock_trader, PadlockConfig};

    const LN2: f64 = std::f64::consts::LN_2;

    // Stock trader indices: states (s_up, s_down, s_profit, s_loss),
    // actions (buy, sell), observations (o_before, o_profit, o_loss).

    #[test]
    fn stock_trader_expert_conditionals() {
        let env = stock_trader();
        assert!(env.validate().is_empty());
        let p = fit_exact_predictor(&env);
        let a = p.action_dist(&[Event::Obs(0)]);
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert!((a[1] - 0.5).abs() < 1e-15);
        let o = p.obs_dist(&[Event::Obs(0)], 0);
        assert!((o[1] - 1.0).abs() < 1e-15, "profit certain after buy: {o:?}");
    }

    #[test]
    fn stock_trader_evidence_asymmetry() {
        let env = stock_trader();
        let conf = fit_exact_predictor(&env);
        let refit = refit_exact(&conf);
        let h = [Event::Obs(0), Event::Act(0)];
        let b_conf = conf.latent_posterior(&h);
        let b_refit = refit.latent_posterior(&h);
        assert!((b_conf[0] - 1.0).abs() < 1e-15, "confounded: point mass on s_up");
        assert!((b_refit[0] - 0.5).abs() < 1e-15, "refit: prior preserved");
        assert!((b_refit[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stock_trader_refit_profit_is_half() {
        let env = stock_trader();
        let refit = refit_exact(&fit_exact_predictor(&env));
        for a in 0..2 {
            let o = refit.obs_dist(&[Event::Obs(0)], a);
            assert!((o[1] - 0.5).abs() < 1e-12, "a={a}: {o:?}");
        }
    }

    #[test]
    fn stock_trader_exact_return_is_half() {
        let env = stock_trader();
        let p = fit_exact_predictor(&env);
        let j = exact_simulated_return(&p, &env, 1, 10_000).unwrap();
        assert!((j - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stock_trader_delusions() {
        let env = stock_trader();
        assert!((action_delusion(&env) - LN2).abs() < 1e-15);
        let probe = ProbePoint { init_obs: 0, actions: vec![0] };
        let conf = fit_exact_predictor(&env);
        assert!((forecast_delusion(&conf, &probe).unwrap() - LN2).abs() < 1e-12);
        assert!(forecast_delusion(&refit_exact(&conf), &probe).unwrap() < 1e-12);
    }

    #[test]
    fn refit_is_idempotent() {
        let env = stock_trader();
        let once = refit_exact(&fit_exact_predictor(&env));
        let twice = refit_exact(&once);
        for a in 0..2 {
            let d1 = once.obs_dist(&[Event::Obs(0)], a);
            let d2 = twice.obs_dist(&[Event::Obs(0)], a);
            for (x, y) in d1.iter().zip(&d2) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulate_is_reproducible_and_half_successful() {
        let env = stock_trader();
        let p = fit_exact_predictor(&env);
        let a = simulate(&p, &env, 4000, 1, 7);
        let b = simulate(&p, &env, 4000, 1, 7);
        assert_eq!(a, b);
        let wins = a.rollouts.iter().filter(|r| r.reward).count() as f64;
        let rate = wins / 4000.0;
        // 3-sigma binomial band around 1/2.
        assert!((rate - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt(), "rate {rate}");
    }

    #[test]
    fn padlock_expert_never_repeats_a_lever() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        assert!(env.validate().is_empty());
        let p = fit_exact_predictor(&env);
        // Start with the fixed zone already matching so the expert's first
        // flip can be random-zone lever 3; observation index = config.
        let c0 = 0b01_101usize;
        let h = [Event::Obs(c0), Event::Act(3), Event::Obs(c0 ^ (1 << 3))];
        let a = p.action_dist(&h);
        assert_eq!(a[3], 0.0, "expert never undoes a flip: {a:?}");
    }

    #[test]
    fn padlock_expert_solves_within_lever_count() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        let set = simulate_expert(&env, 500, 7, 11);
        for r in &set.rollouts {
            assert!(r.reward);
            assert!(r.actions.len() <= 5, "{:?}", r.actions);
        }
    }

    #[test]
    fn padlock_forecast_delusion_ln4_then_zero() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        let probe = crate::envs::padlock_search_probe(&cfg);
        let conf = fit_exact_predictor(&env);
        let d = forecast_delusion(&conf, &probe).unwrap();
        assert!((d - 4.0f64.ln()).abs() < 1e-9, "delusion {d}");
        let d2 = forecast_delusion(&refit_exact(&conf), &probe).unwrap();
        assert!(d2.abs() < 1e-9);
    }

    #[test]
    fn padlock_action_delusion_single_random_lever() {
        let cfg = PadlockConfig::new(0, 1, 0, 2);
        let env = padlock(&cfg, 0);
        assert!((action_delusion(&env) - LN2).abs() < 1e-12);
    }

    #[test]
    fn unreachable_probe_is_an_error() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        let conf = fit_exact_predictor(&env);
        // The expert never flips a matching fixed-zone lever twice in a row.
        let probe = ProbePoint { init_obs: 0b00_101, actions: vec![3, 3] };
        assert!(matches!(
            forecast_delusion(&conf, &probe),
            Err(DelusionError::ProbeUnreachable)
        ));
    }

    #[test]
    fn refit_from_samples_recovers_stock_trader() {
        let env = stock_trader();
        let p = fit_exact_predictor(&env);
        let rollouts = simulate(&p, &env, 100_000, 1, 3);
        let refit = refit_from_samples(&rollouts, &env, 0.5).unwrap();
        let o = refit.obs_dist(&[Event::Obs(0)], 0);
        // Converges to the de-confounded conditional, not the expert's.
        assert!((o[1] - 0.5).abs() < 0.02, "{o:?}");
        let a = refit.action_dist(&[Event::Obs(0)]);
        assert!((a[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn empty_rollouts_error() {
        let env = stock_trader();
        let empty = RolloutSet {
            rollouts: vec![],
            provenance: Provenance::SimulatedAgent,
            seed: 0,
        };
        assert!(matches!(
            refit_from_samples(&empty, &env, 0.0),
            Err(DelusionError::EmptyRollouts)
        ));
    }

    #[test]
    fn rollout_jsonl_roundtrip() {
        let env = stock_trader();
        let p = fit_exact_predictor(&env);
        let set = simulate(&p, &env, 50, 1, 5);
        let mut buf = Vec::new();
        set.to_jsonl(&mut buf).unwrap();
        let back = RolloutSet::from_jsonl(&buf[..]).unwrap();
        assert_eq!(back.rollouts.len(), 50);
        for (a, b) in set.rollouts.iter().zip(&back.rollouts) {
            assert_eq!(a.observations, b.observations);
            assert_eq!(a.actions, b.actions);
            assert_eq!(a.reward, b.reward);
        }
    }

    #[test]
    fn malformed_jsonl_reports_line_number() {
        let text = "{\"schema_version\":1,\"observations\":[0],\"actions\":[],\"reward\":false,\"truncated\":true,\"provenance\":\"expert\",\"seed\":1}\nnot json\n";
        match RolloutSet::from_jsonl(text.as_bytes()) {
            Err(DelusionError::Jsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }
}
