//! The three-cards game: pick one of two cards three times. All-tick wins
//! outright, a tock-first start ends in a coin flip, and every other
//! tick-first line loses.

use crate::mdp::FiniteMdp;

/// State indices: 0 start, 1 "T", 2 "F", 3 "TT", 4 "TF", 5 "FT", 6 "FF".
/// Action 0 is tick, action 1 is tock. Terminal rewards over the eight
/// card lines are (1, 0, 0, 0, ½, ½, ½, ½).
pub fn three_cards() -> FiniteMdp {
    let states = ["start", "T", "F", "TT", "TF", "FT", "FF"]
        .map(String::from)
        .to_vec();
    let actions = vec!["tick".to_string(), "tock".to_string()];
    let goto = |s: usize| vec![(s, 1.0)];
    let transition = vec![
        vec![goto(1), goto(2)],
        vec![goto(3), goto(4)],
        vec![goto(5), goto(6)],
        vec![goto(3), goto(3)],
        vec![goto(4), goto(4)],
        vec![goto(5), goto(5)],
        vec![goto(6), goto(6)],
    ];
    let terminal_reward = vec![
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 0.0],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
    ];
    FiniteMdp::new(states, actions, 3, 0, transition, terminal_reward)
        .expect("three-cards construction is static")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_is_valid() {
        assert!(three_cards().validate().is_empty());
    }

    #[test]
    fn shape() {
        let mdp = three_cards();
        assert_eq!(mdp.n_states(), 7);
        assert_eq!(mdp.n_actions(), 2);
        assert_eq!(mdp.horizon, 3);
        assert_eq!(mdp.start, 0);
    }
}
