//! Fixed-length token encoding for complete tic-tac-toe games.
//!
//! Vocabulary of exactly eight tokens. A sequence is 20 start-pad tokens,
//! then one block of (outcome token, 9 board tokens) per position from the
//! empty board through the final move, then end-pad tokens to length 120.
//! A 30-token window therefore ends exactly at the end of the first (empty)
//! position.

use thiserror::Error;

use crate::envs::{Outcome, TttGame, TttState, CELL_EMPTY, CELL_O, CELL_X};

pub const TOK_X: u8 = 0;
pub const TOK_O: u8 = 1;
pub const TOK_DOT: u8 = 2;
pub const TOK_XWIN: u8 = 3;
pub const TOK_OWIN: u8 = 4;
pub const TOK_DRAW: u8 = 5;
pub const TOK_BOS: u8 = 6;
pub const TOK_EOS: u8 = 7;

pub const TTT_SEQ_LEN: usize = 120;
pub(crate) const BOS_PAD: usize = 20;
pub(crate) const BLOCK: usize = 10;

pub fn ttt_vocab() -> Vec<String> {
    ["x", "o", ".", "#", "O", "D", "$", "E"].map(String::from).to_vec()
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("sequence length {0}, expected 120")]
    BadLength(usize),
    #[error("token {token} unexpected at position {position}")]
    UnexpectedToken { position: usize, token: u8 },
    #[error("board delta at block {0} is not a single legal move")]
    BadDelta(usize),
    #[error("outcome token changes or mismatches the final board")]
    BadOutcome,
    #[error("decoded game is incomplete")]
    Incomplete,
}

pub fn outcome_token(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::XWin => TOK_XWIN,
        Outcome::OWin => TOK_OWIN,
        Outcome::Draw => TOK_DRAW,
    }
}

fn cell_token(cell: u8) -> u8 {
    match cell {
        CELL_X => TOK_X,
        CELL_O => TOK_O,
        _ => TOK_DOT,
    }
}

/// Encodes a complete game; the outcome token repeats before every position.
pub fn encode_ttt(game: &TttGame) -> Vec<u8> {
    let mut out = Vec::with_capacity(TTT_SEQ_LEN);
    out.resize(BOS_PAD, TOK_BOS);
    let tok = outcome_token(game.outcome);
    for position in game.positions() {
        out.push(tok);
        out.extend(position.board.iter().map(|&c| cell_token(c)));
    }
    out.resize(TTT_SEQ_LEN, TOK_EOS);
    out
}

/// Exact inverse of [`encode_ttt`] on complete legal games.
pub fn decode_ttt(tokens: &[u8]) -> Result<TttGame, CodecError> {
    if tokens.len() != TTT_SEQ_LEN {
        return Err(CodecError::BadLength(tokens.len()));
    }
    for (i, &t) in tokens[..BOS_PAD].iter().enumerate() {
        if t != TOK_BOS {
            return Err(CodecError::UnexpectedToken { position: i, token: t });
        }
    }
    let mut moves = Vec::new();
    let mut outcome_tok = None;
    let mut prev = TttState::initial();
    let mut block = 0usize;
    let mut pos = BOS_PAD;
    while pos < TTT_SEQ_LEN && tokens[pos] != TOK_EOS {
        let tok = tokens[pos];
        if !(TOK_XWIN..=TOK_DRAW).contains(&tok) {
            return Err(CodecError::UnexpectedToken { position: pos, token: tok });
        }
        if *outcome_tok.get_or_insert(tok) != tok {
            return Err(CodecError::BadOutcome);
        }
        let body = &tokens[pos + 1..pos + BLOCK];
        let mut board = [CELL_EMPTY; 9];
        for (i, &t) in body.iter().enumerate() {
            board[i] = match t {
                TOK_X => CELL_X,
                TOK_O => CELL_O,
                TOK_DOT => CELL_EMPTY,
                _ => return Err(CodecError::UnexpectedToken { position: pos + 1 + i, token: t }),
            };
        }
        if block == 0 {
            if board != [CELL_EMPTY; 9] {
                return Err(CodecError::BadDelta(0));
            }
        } else {
            let diffs: Vec<usize> = (0..9).filter(|&i| prev.board[i] != board[i]).collect();
            if diffs.len() != 1 {
                return Err(CodecError::BadDelta(block));
            }
            let cell = diffs[0];
            if prev.board[cell] != CELL_EMPTY || board[cell] != prev.to_move {
                return Err(CodecError::BadDelta(block));
            }
            moves.push(cell as u8);
            prev = prev.play(cell);
        }
        block += 1;
        pos += BLOCK;
    }
    for (i, &t) in tokens[pos..].iter().enumerate() {
        if t != TOK_EOS {
            return Err(CodecError::UnexpectedToken { position: pos + i, token: t });
        }
    }
    if !prev.is_terminal() {
        return Err(CodecError::Incomplete);
    }
    let outcome = match prev.winner() {
        Some(CELL_X) => Outcome::XWin,
        Some(_) => Outcome::OWin,
        None => Outcome::Draw,
    };
    if Some(outcome_token(outcome)) != outcome_tok {
        return Err(CodecError::BadOutcome);
    }
    Ok(TttGame { moves, outcome })
}

/// Every complete game, encoded. The training corpus of the surrogate.
pub fn ttt_corpus() -> Vec<Vec<u8>> {
    crate::envs::enumerate_ttt_games()
        .iter()
        .map(encode_ttt)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::enumerate_ttt_games;

    #[test]
    fn known_fragment_layout() {
        let games = enumerate_ttt_games();
        let g = &games[0];
        let seq = encode_ttt(g);
        assert_eq!(seq.len(), TTT_SEQ_LEN);
        assert!(seq[..20].iter().all(|&t| t == TOK_BOS));
        // Block 0 is the empty board under the outcome token.
        assert_eq!(seq[20], outcome_token(g.outcome));
        assert!(seq[21..30].iter().all(|&t| t == TOK_DOT));
        // Block 1 repeats the outcome token, then one placed x.
        assert_eq!(seq[30], outcome_token(g.outcome));
        assert_eq!(
            seq[31..40].iter().filter(|&&t| t == TOK_X).count(),
            1
        );
    }

    #[test]
    fn draw_games_use_the_draw_token_throughout() {
        let game = enumerate_ttt_games()
            .into_iter()
            .find(|g| g.outcome == Outcome::Draw)
            .unwrap();
        let seq = encode_ttt(&game);
        let outcome_slots: Vec<u8> = (0..10).map(|b| seq[20 + 10 * b]).collect();
        assert!(outcome_slots.iter().all(|&t| t == TOK_DRAW));
    }

    #[test]
    fn roundtrip_sampled_games() {
        let games = enumerate_ttt_games();
        for g in games.iter().step_by(997) {
            let back = decode_ttt(&encode_ttt(g)).unwrap();
            assert_eq!(&back, g);
        }
    }

    #[test]
    fn corrupt_sequences_are_rejected() {
        let g = &enumerate_ttt_games()[0];
        let seq = encode_ttt(g);

        let mut short = seq.clone();
        short.pop();
        assert!(matches!(decode_ttt(&short), Err(CodecError::BadLength(119))));

        let mut two_moves = seq.clone();
        // Make block 1 differ from block 0 in two cells.
        two_moves[31] = TOK_X;
        two_moves[32] = TOK_X;
        assert!(matches!(decode_ttt(&two_moves), Err(CodecError::BadDelta(1))));

        let mut flipped = seq.clone();
        flipped[30] = if seq[30] == TOK_XWIN { TOK_OWIN } else { TOK_XWIN };
        assert_eq!(decode_ttt(&flipped), Err(CodecError::BadOutcome));
    }
}
