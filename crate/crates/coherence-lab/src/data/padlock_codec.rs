//! Fixed-length token encoding for padlock episodes: a goal token, the
//! initial lever bits, the flipped lever indices, one terminal token, and
//! padding.

use thiserror::Error;

use crate::delusion::simulate_expert;
use crate::envs::{padlock, PadlockConfig};

/// Token ids, parameterized by the lever count `n`:
/// 0/1 lever bits, `2 + i` for flipping lever `i`, then S, F, G_S, G_F, PAD.
pub const PADLOCK_BIT0: u8 = 0;
pub const PADLOCK_BIT1: u8 = 1;

pub fn tok_action(lever: usize) -> u8 {
    2 + lever as u8
}
pub fn tok_success(n: usize) -> u8 {
    2 + n as u8
}
pub fn tok_failure(n: usize) -> u8 {
    3 + n as u8
}
pub fn tok_goal_success(n: usize) -> u8 {
    4 + n as u8
}
pub fn tok_goal_failure(n: usize) -> u8 {
    5 + n as u8
}
pub fn tok_pad(n: usize) -> u8 {
    6 + n as u8
}

pub fn padlock_vocab(n: usize) -> Vec<String> {
    let mut v = vec!["0".to_string(), "1".to_string()];
    v.extend((0..n).map(|i| format!("a{i}")));
    v.extend(["S", "F", "G_S", "G_F", "PAD"].map(String::from));
    v
}

/// Every encoded episode has this length: goal + bits + horizon + terminal.
pub fn padlock_seq_len(config: &PadlockConfig) -> usize {
    1 + config.n_levers() + config.horizon + 1
}

/// One padlock episode over observables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadlockSeq {
    pub init_config: usize,
    pub actions: Vec<usize>,
    pub success: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum PadlockCodecError {
    #[error("sequence length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("token {token} unexpected at position {position}")]
    UnexpectedToken { position: usize, token: u8 },
    #[error("goal token disagrees with the terminal token")]
    GoalMismatch,
    #[error("more actions than the horizon allows")]
    TooManyActions,
}

pub fn encode_padlock(
    seq: &PadlockSeq,
    config: &PadlockConfig,
) -> Result<Vec<u8>, PadlockCodecError> {
    let n = config.n_levers();
    if seq.actions.len() > config.horizon {
        return Err(PadlockCodecError::TooManyActions);
    }
    let mut out = Vec::with_capacity(padlock_seq_len(config));
    out.push(if seq.success { tok_goal_success(n) } else { tok_goal_failure(n) });
    for lever in 0..n {
        out.push(((seq.init_config >> lever) & 1) as u8);
    }
    for &a in &seq.actions {
        if a >= n {
            return Err(PadlockCodecError::UnexpectedToken {
                position: out.len(),
                token: tok_action(a),
            });
        }
        out.push(tok_action(a));
    }
    out.push(if seq.success { tok_success(n) } else { tok_failure(n) });
    out.resize(padlock_seq_len(config), tok_pad(n));
    Ok(out)
}

pub fn decode_padlock(
    tokens: &[u8],
    config: &PadlockConfig,
) -> Result<PadlockSeq, PadlockCodecError> {
    let n = config.n_levers();
    let expected = padlock_seq_len(config);
    if tokens.len() != expected {
        return Err(PadlockCodecError::BadLength { got: tokens.len(), expected });
    }
    let success = if tokens[0] == tok_goal_success(n) {
        true
    } else if tokens[0] == tok_goal_failure(n) {
        false
    } else {
        return Err(PadlockCodecError::UnexpectedToken { position: 0, token: tokens[0] });
    };
    let mut init_config = 0usize;
    for lever in 0..n {
        match tokens[1 + lever] {
            PADLOCK_BIT0 => {}
            PADLOCK_BIT1 => init_config |= 1 << lever,
            t => {
                return Err(PadlockCodecError::UnexpectedToken { position: 1 + lever, token: t })
            }
        }
    }
    let mut actions = Vec::new();
    let mut pos = 1 + n;
    loop {
        let t = tokens[pos];
        if t == tok_success(n) || t == tok_failure(n) {
            if (t == tok_success(n)) != success {
                return Err(PadlockCodecError::GoalMismatch);
            }
            pos += 1;
            break;
        }
        if (tok_action(0)..tok_action(n)).contains(&t) {
            actions.push((t - 2) as usize);
            pos += 1;
            if actions.len() > config.horizon {
                return Err(PadlockCodecError::TooManyActions);
            }
        } else {
            return Err(PadlockCodecError::UnexpectedToken { position: pos, token: t });
        }
    }
    for (i, &t) in tokens[pos..].iter().enumerate() {
        if t != tok_pad(n) {
            return Err(PadlockCodecError::UnexpectedToken { position: pos + i, token: t });
        }
    }
    Ok(PadlockSeq { init_config, actions, success })
}

/// Samples expert demonstrations and encodes them. Every sequence ends in
/// the success token: the expert knows the combination.
pub fn sample_expert_dataset(config: &PadlockConfig, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let env = padlock(config, seed);
    let m = config.n_random;
    let rollouts = simulate_expert(&env, n, config.horizon, seed);
    rollouts
        .rollouts
        .iter()
        .map(|r| {
            let seq = PadlockSeq {
                init_config: r.states[0] >> m,
                actions: r.actions.clone(),
                success: r.reward,
            };
            encode_padlock(&seq, config).expect("expert episodes fit the layout")
        })
        .collect()
}
