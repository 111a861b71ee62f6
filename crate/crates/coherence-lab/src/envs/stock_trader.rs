//! The stock trader: a one-step market whose direction is hidden from the
//! observation channel but not from the demonstrating expert.

use crate::delusion::LatentEnvironment;
use crate::mdp::{FiniteMdp, FinitePomdp, TimedPolicy};

/// States (s_up, s_down, s_profit, s_loss), actions (buy, sell),
/// observations (o_before, o_profit, o_loss). Both market directions emit
/// `o_before`, so only the expert's action carries the direction.
pub fn stock_trader() -> LatentEnvironment {
    let states = ["s_up", "s_down", "s_profit", "s_loss"]
        .map(String::from)
        .to_vec();
    let actions = vec!["buy".to_string(), "sell".to_string()];
    let transition = vec![
        vec![vec![(2, 1.0)], vec![(3, 1.0)]],
        vec![vec![(3, 1.0)], vec![(2, 1.0)]],
        vec![vec![(2, 1.0)], vec![(2, 1.0)]],
        vec![vec![(3, 1.0)], vec![(3, 1.0)]],
    ];
    let terminal_reward = vec![
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    ];
    let base = FiniteMdp::new(states, actions, 1, 0, transition, terminal_reward)
        .expect("stock-trader construction is static");
    let pomdp = FinitePomdp {
        base,
        observations: ["o_before", "o_profit", "o_loss"].map(String::from).to_vec(),
        emit: vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
    };
    let expert = TimedPolicy::stationary(
        vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ],
        1,
    );
    LatentEnvironment {
        pomdp,
        latent_prior: vec![0.5, 0.5, 0.0, 0.0],
        expert,
        success_obs: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::expected_return;

    #[test]
    fn construction_is_valid() {
        let env = stock_trader();
        assert!(env.validate().is_empty());
    }

    #[test]
    fn expert_always_profits() {
        let env = stock_trader();
        // The expert earns 1 from either latent start.
        for start in [0usize, 1] {
            let mut mdp = env.pomdp.base.clone();
            mdp.start = start;
            assert!((expected_return(&mdp, &env.expert) - 1.0).abs() < 1e-15);
        }
    }
}
