//! The padlock: n binary levers, a target combination whose fixed zone is
//! constant across episodes and whose random zone is re-drawn per episode.
//! The demonstrating expert knows the full target and flips exactly the
//! differing levers in ascending index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delusion::{LatentEnvironment, ProbePoint};
use crate::mdp::{FiniteMdp, FinitePomdp, TimedPolicy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PadlockConfig {
    pub n_fixed: usize,
    pub n_random: usize,
    /// Target bits of the fixed zone; drawn from the constructor seed when
    /// absent.
    pub fixed_code: Option<u32>,
    /// Maximum number of moves per episode.
    pub horizon: usize,
}

impl PadlockConfig {
    pub fn new(n_fixed: usize, n_random: usize, fixed_code: u32, horizon: usize) -> Self {
        let cfg = PadlockConfig { n_fixed, n_random, fixed_code: Some(fixed_code), horizon };
        cfg.assert_valid();
        cfg
    }

    pub fn n_levers(&self) -> usize {
        self.n_fixed + self.n_random
    }

    fn assert_valid(&self) {
        assert!(self.n_fixed + self.n_random >= 1, "at least one lever");
        assert!(
            self.n_fixed + self.n_random <= 12,
            "random-zone enumeration is capped at 12 levers"
        );
        assert!(
            self.horizon + 1 >= self.n_fixed + (1usize << self.n_random),
            "horizon {} too short for exhaustive single-flip search",
            self.horizon
        );
        if let Some(code) = self.fixed_code {
            assert!(
                (code as usize) < (1usize << self.n_fixed.max(1)),
                "fixed_code wider than the fixed zone"
            );
        }
    }
}

/// Builds the latent environment. The hidden variable is the random-zone
/// target; the state couples it with the visible lever configuration.
/// States are indexed `config * 2^n_random + target`, with one extra
/// absorbing "solved" state; observations are the configuration indices plus
/// one success observation emitted whenever the lock is open.
pub fn padlock(config: &PadlockConfig, seed: u64) -> LatentEnvironment {
    config.assert_valid();
    let n = config.n_levers();
    let m = config.n_random;
    let fixed_code = config.fixed_code.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if config.n_fixed == 0 { 0 } else { rng.gen_range(0..1u32 << config.n_fixed) }
    }) as usize;
    let n_configs = 1usize << n;
    let n_targets = 1usize << m;
    let solved = n_configs * n_targets;
    let n_states = solved + 1;
    let n_actions = n + 1; // one flip per lever plus stop
    let stop = n;
    let target_full = |g: usize| fixed_code | (g << config.n_fixed);
    let matched = |c: usize, g: usize| c == target_full(g);

    let mut states = Vec::with_capacity(n_states);
    let mut transition = Vec::with_capacity(n_states);
    let mut terminal_reward = Vec::with_capacity(n_states);
    let mut emit = Vec::with_capacity(n_states);
    let mut expert_rows = Vec::with_capacity(n_states);
    let success_obs = n_configs;

    for c in 0..n_configs {
        for g in 0..n_targets {
            states.push(format!("c={c:0w$b},g={g:0v$b}", w = n.max(1), v = m.max(1)));
            let mut trans_row = Vec::with_capacity(n_actions);
            let mut reward_row = Vec::with_capacity(n_actions);
            let mut expert = vec![0.0; n_actions];
            if matched(c, g) {
                // The lock is open; every action closes the episode.
                for _ in 0..n_actions {
                    trans_row.push(vec![(solved, 1.0)]);
                    reward_row.push(1.0);
                }
                expert[stop] = 1.0;
            } else {
                for lever in 0..n {
                    let c2 = c ^ (1 << lever);
                    trans_row.push(vec![(c2 * n_targets + g, 1.0)]);
                    reward_row.push(if matched(c2, g) { 1.0 } else { 0.0 });
                }
                trans_row.push(vec![(c * n_targets + g, 1.0)]);
                reward_row.push(0.0);
                let diff = c ^ target_full(g);
                expert[diff.trailing_zeros() as usize] = 1.0;
            }
            transition.push(trans_row);
            terminal_reward.push(reward_row);
            emit.push(obs_row(n_configs + 1, if matched(c, g) { success_obs } else { c }));
            expert_rows.push(expert);
        }
    }
    states.push("solved".to_string());
    transition.push(vec![vec![(solved, 1.0)]; n_actions]);
    terminal_reward.push(vec![1.0; n_actions]);
    emit.push(obs_row(n_configs + 1, success_obs));
    let mut expert_solved = vec![0.0; n_actions];
    expert_solved[stop] = 1.0;
    expert_rows.push(expert_solved);

    let actions = (0..n)
        .map(|i| format!("flip{i}"))
        .chain(std::iter::once("stop".to_string()))
        .collect();
    let observations = (0..n_configs)
        .map(|c| format!("levers={c:0w$b}", w = n.max(1)))
        .chain(std::iter::once("open".to_string()))
        .collect();
    let base = FiniteMdp::new(states, actions, config.horizon, 0, transition, terminal_reward)
        .expect("padlock construction is valid by build");
    let pomdp = FinitePomdp { base, observations, emit };
    let prior = 1.0 / solved as f64;
    let mut latent_prior = vec![prior; solved];
    latent_prior.push(0.0);
    LatentEnvironment {
        pomdp,
        latent_prior,
        expert: TimedPolicy::stationary(expert_rows, config.horizon),
        success_obs,
    }
}

fn obs_row(n_obs: usize, o: usize) -> Vec<f64> {
    let mut row = vec![0.0; n_obs];
    row[o] = 1.0;
    row
}

/// The canonical delusion probe: start from a configuration whose fixed zone
/// is fully wrong (so the initial observation carries no information about
/// the random zone), then plan the expert-maximal flip sequence — every
/// fixed-zone lever ascending, then every random-zone lever ascending.
pub fn padlock_search_probe(config: &PadlockConfig) -> ProbePoint {
    assert!(config.n_fixed >= 1, "the probe needs a non-empty fixed zone");
    let fixed_code = config
        .fixed_code
        .expect("probe requires an explicit fixed code") as usize;
    let c0 = !fixed_code & ((1 << config.n_fixed) - 1);
    ProbePoint { init_obs: c0, actions: (0..config.n_levers()).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_is_valid() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        assert!(env.validate().is_empty());
        assert_eq!(env.pomdp.base.n_states(), 129);
        assert_eq!(env.pomdp.base.n_actions(), 6);
        assert_eq!(env.pomdp.n_observations(), 33);
    }

    #[test]
    fn expert_flips_lowest_differing_lever() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        // config 0b00_000 with target g=0b00, full target 0b00_101:
        // differing levers {0, 2}, so the expert flips lever 0.
        let s = 0usize * 4 + 0;
        assert_eq!(env.expert.probs[0][s][0], 1.0);
        // matched configuration: the expert stops.
        let s_matched = 0b00_101usize * 4 + 0;
        assert_eq!(env.expert.probs[0][s_matched][5], 1.0);
    }

    #[test]
    fn success_observation_exactly_at_match() {
        let cfg = PadlockConfig::new(3, 2, 0b101, 7);
        let env = padlock(&cfg, 0);
        let s_matched = 0b01_101usize * 4 + 0b01;
        assert_eq!(env.pomdp.emit[s_matched][32], 1.0);
        let s_open = 0b01_101usize * 4 + 0b10;
        assert_eq!(env.pomdp.emit[s_open][0b01_101], 1.0);
    }

    #[test]
    fn seed_draws_missing_fixed_code() {
        let cfg = PadlockConfig { n_fixed: 3, n_random: 1, fixed_code: None, horizon: 5 };
        let a = padlock(&cfg, 9);
        let b = padlock(&cfg, 9);
        assert_eq!(a.pomdp.base.states, b.pomdp.base.states);
        assert_eq!(a.expert.probs, b.expert.probs);
    }

    #[test]
    #[should_panic(expected = "horizon")]
    fn undersized_horizon_rejected() {
        PadlockConfig::new(3, 2, 0, 5);
    }
}
