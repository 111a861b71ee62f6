//! Tic-tac-toe against a uniformly random opponent, flattened into a
//! finite-horizon MDP: states are boards where it is the player's turn, the
//! opponent's reply is marginalized into the transition kernel, and three
//! absorbing states carry the win/draw/loss outcome.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mdp::{FiniteMdp, TimedPolicy};

/// The eight winning lines.
pub const TTT_LINES: [[usize; 3]; 8] = [
    [0, 1, 2],
    [3, 4, 5],
    [6, 7, 8],
    [0, 3, 6],
    [1, 4, 7],
    [2, 5, 8],
    [0, 4, 8],
    [2, 4, 6],
];

pub const CELL_EMPTY: u8 = 0;
pub const CELL_X: u8 = 1;
pub const CELL_O: u8 = 2;

/// A board plus whose turn it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TttState {
    pub board: [u8; 9],
    pub to_move: u8,
}

impl TttState {
    pub fn initial() -> Self {
        TttState { board: [CELL_EMPTY; 9], to_move: CELL_X }
    }

    pub fn winner(&self) -> Option<u8> {
        TTT_LINES.iter().find_map(|line| {
            let v = self.board[line[0]];
            (v != CELL_EMPTY && line.iter().all(|&i| self.board[i] == v)).then_some(v)
        })
    }

    pub fn is_full(&self) -> bool {
        self.board.iter().all(|&c| c != CELL_EMPTY)
    }

    pub fn is_terminal(&self) -> bool {
        self.winner().is_some() || self.is_full()
    }

    pub fn legal_moves(&self) -> impl Iterator<Item = usize> + '_ {
        self.board
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == CELL_EMPTY)
            .map(|(i, _)| i)
    }

    /// Plays `cell` for the side to move. Panics on occupied cells.
    pub fn play(&self, cell: usize) -> TttState {
        assert_eq!(self.board[cell], CELL_EMPTY, "cell {cell} occupied");
        let mut next = *self;
        next.board[cell] = self.to_move;
        next.to_move = if self.to_move == CELL_X { CELL_O } else { CELL_X };
        next
    }

    /// Checks the count and turn invariants.
    pub fn is_consistent(&self) -> bool {
        let xs = self.board.iter().filter(|&&c| c == CELL_X).count() as i32;
        let os = self.board.iter().filter(|&&c| c == CELL_O).count() as i32;
        let turn_ok = if self.to_move == CELL_X { xs == os } else { xs == os + 1 };
        (xs - os).abs() <= 1 && turn_ok
    }

    pub fn label(&self) -> String {
        self.board
            .iter()
            .map(|&c| match c {
                CELL_X => 'x',
                CELL_O => 'o',
                _ => '.',
            })
            .collect()
    }
}

/// Final result of a complete game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    XWin,
    OWin,
    Draw,
}

/// A complete game as the sequence of cells played, x moving first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TttGame {
    pub moves: Vec<u8>,
    pub outcome: Outcome,
}

impl TttGame {
    /// Replays the moves into the sequence of positions, starting from the
    /// empty board.
    pub fn positions(&self) -> Vec<TttState> {
        let mut out = vec![TttState::initial()];
        for &m in &self.moves {
            out.push(out.last().unwrap().play(m as usize));
        }
        out
    }
}

/// Exhaustive enumeration of every complete game (move-sequence distinct);
/// there are exactly 255168 of them.
pub fn enumerate_ttt_games() -> Vec<TttGame> {
    let mut games = Vec::with_capacity(255_168);
    let mut moves = Vec::with_capacity(9);
    fn walk(state: &TttState, moves: &mut Vec<u8>, games: &mut Vec<TttGame>) {
        if let Some(w) = state.winner() {
            games.push(TttGame {
                moves: moves.clone(),
                outcome: if w == CELL_X { Outcome::XWin } else { Outcome::OWin },
            });
            return;
        }
        if state.is_full() {
            games.push(TttGame { moves: moves.clone(), outcome: Outcome::Draw });
            return;
        }
        for cell in 0..9 {
            if state.board[cell] == CELL_EMPTY {
                moves.push(cell as u8);
                walk(&state.play(cell), moves, games);
                moves.pop();
            }
        }
    }
    walk(&TttState::initial(), &mut moves, &mut games);
    games
}

/// Which side the modeled player takes. The opponent always plays uniformly
/// at random over empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mover {
    PlayerFirst,
    PlayerSecond,
}

const OUT_WIN: usize = 0;
const OUT_DRAW: usize = 1;
const OUT_LOSS: usize = 2;

fn outcome_value(s: usize) -> f64 {
    match s {
        OUT_WIN => 1.0,
        OUT_DRAW => 0.5,
        _ => 0.0,
    }
}

/// Flattens the game into an MDP for the chosen side. Actions are the nine
/// cells; playing an occupied cell loses immediately. Horizon 5: when the
/// player moves second, the opponent's opening move is folded into a
/// pre-game state whose nine (equivalent) actions all draw it uniformly.
pub fn tictactoe(mover: Mover) -> FiniteMdp {
    let player = match mover {
        Mover::PlayerFirst => CELL_X,
        Mover::PlayerSecond => CELL_O,
    };
    let mut states = vec!["win".to_string(), "draw".to_string(), "loss".to_string()];
    let mut transition: Vec<Vec<Vec<(usize, f64)>>> =
        vec![vec![vec![(OUT_WIN, 1.0)]; 9], vec![vec![(OUT_DRAW, 1.0)]; 9], vec![
            vec![(OUT_LOSS, 1.0)];
            9
        ]];
    let mut index: HashMap<TttState, usize> = HashMap::new();
    let mut boards: Vec<TttState> = Vec::new();
    let mut queue: Vec<TttState> = Vec::new();

    let intern = |s: TttState,
                      states: &mut Vec<String>,
                      index: &mut HashMap<TttState, usize>,
                      boards: &mut Vec<TttState>,
                      queue: &mut Vec<TttState>| {
        *index.entry(s).or_insert_with(|| {
            let id = states.len();
            states.push(s.label());
            boards.push(s);
            queue.push(s);
            id
        })
    };

    let start;
    if mover == Mover::PlayerFirst {
        start = intern(
            TttState::initial(),
            &mut states,
            &mut index,
            &mut boards,
            &mut queue,
        );
    } else {
        // Pre-game state: the opponent's first x lands uniformly.
        start = states.len();
        states.push("pre".to_string());
        let empty = TttState::initial();
        let mut row = Vec::with_capacity(9);
        for cell in 0..9 {
            let s2 = empty.play(cell);
            let id = intern(s2, &mut states, &mut index, &mut boards, &mut queue);
            row.push((id, 1.0 / 9.0));
        }
        transition.push(vec![row; 9]);
    }

    // Transition rows are built after discovery completes so indices exist.
    let mut cursor = 0;
    while cursor < queue.len() {
        let s = queue[cursor];
        cursor += 1;
        for cell in 0..9 {
            if s.board[cell] != CELL_EMPTY {
                continue;
            }
            let mid = s.play(cell);
            if !mid.is_terminal() {
                for (reply, _) in mid.board.iter().enumerate().filter(|(_, &c)| c == CELL_EMPTY) {
                    let nxt = mid.play(reply);
                    if !nxt.is_terminal() {
                        intern(nxt, &mut states, &mut index, &mut boards, &mut queue);
                    }
                }
            }
        }
    }

    for &s in &boards {
        let mut rows = Vec::with_capacity(9);
        for cell in 0..9 {
            if s.board[cell] != CELL_EMPTY {
                rows.push(vec![(OUT_LOSS, 1.0)]);
                continue;
            }
            let mid = s.play(cell);
            if mid.winner() == Some(player) {
                rows.push(vec![(OUT_WIN, 1.0)]);
                continue;
            }
            if mid.is_full() {
                rows.push(vec![(OUT_DRAW, 1.0)]);
                continue;
            }
            let replies: Vec<usize> = mid.legal_moves().collect();
            let p = 1.0 / replies.len() as f64;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(replies.len());
            for reply in replies {
                let nxt = mid.play(reply);
                let id = if nxt.winner().is_some() {
                    OUT_LOSS
                } else if nxt.is_full() {
                    OUT_DRAW
                } else {
                    index[&nxt]
                };
                match row.iter_mut().find(|(i, _)| *i == id) {
                    Some(entry) => entry.1 += p,
                    None => row.push((id, p)),
                }
            }
            rows.push(row);
        }
        transition.push(rows);
    }

    let terminal_reward: Vec<Vec<f64>> = transition
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .map(|&(s2, p)| p * if s2 <= OUT_LOSS { outcome_value(s2) } else { 0.0 })
                        .sum()
                })
                .collect()
        })
        .collect();

    FiniteMdp::new(
        states,
        (0..9).map(|c| format!("cell{c}")).collect(),
        5,
        start,
        transition,
        terminal_reward,
    )
    .expect("tic-tac-toe construction is valid by build")
}

/// The uniform-over-legal-moves policy for a tic-tac-toe MDP, read off the
/// state labels. Absorbing and pre-game states get a uniform row.
pub fn ttt_uniform_legal(mdp: &FiniteMdp) -> TimedPolicy {
    let rows: Vec<Vec<f64>> = mdp
        .states
        .iter()
        .map(|label| {
            let empties: Vec<usize> = label
                .chars()
                .enumerate()
                .filter(|&(_, ch)| ch == '.')
                .map(|(i, _)| i)
                .collect();
            if label.len() == 9 && !empties.is_empty() {
                let mut row = vec![0.0; 9];
                for i in empties.iter() {
                    row[*i] = 1.0 / empties.len() as f64;
                }
                row
            } else {
                vec![1.0 / 9.0; 9]
            }
        })
        .collect();
    TimedPolicy::stationary(rows, mdp.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{expected_return, optimal_backward_induction};

    #[test]
    fn game_count_is_255168() {
        assert_eq!(enumerate_ttt_games().len(), 255_168);
    }

    #[test]
    fn fastest_wins_take_five_moves() {
        let games = enumerate_ttt_games();
        let min_len = games.iter().map(|g| g.moves.len()).min().unwrap();
        assert_eq!(min_len, 5);
        assert!(games
            .iter()
            .filter(|g| g.moves.len() == 5)
            .all(|g| g.outcome == Outcome::XWin));
    }

    #[test]
    fn every_enumerated_game_is_consistent() {
        for game in enumerate_ttt_games() {
            let positions = game.positions();
            for p in &positions {
                assert!(p.is_consistent(), "{p:?}");
            }
            let last = positions.last().unwrap();
            assert!(last.is_terminal());
            // No interior position may be terminal.
            for p in &positions[..positions.len() - 1] {
                assert!(!p.is_terminal());
            }
        }
    }

    #[test]
    fn construction_is_valid() {
        for mover in [Mover::PlayerFirst, Mover::PlayerSecond] {
            let mdp = tictactoe(mover);
            assert!(mdp.validate().is_empty(), "{mover:?}");
        }
    }

    #[test]
    fn uniform_legal_value_matches_known_random_play_odds() {
        // Both sides playing uniformly over legal moves, x first:
        // P(x wins) + P(draw)/2 is just under 0.65.
        let mdp = tictactoe(Mover::PlayerFirst);
        let pi = ttt_uniform_legal(&mdp);
        let j = expected_return(&mdp, &pi);
        assert!((j - 0.648).abs() < 5e-3, "J = {j}");
    }

    #[test]
    fn optimal_beats_uniform_from_both_seats() {
        for mover in [Mover::PlayerFirst, Mover::PlayerSecond] {
            let mdp = tictactoe(mover);
            let uniform = expected_return(&mdp, &ttt_uniform_legal(&mdp));
            let (_, opt) = optimal_backward_induction(&mdp);
            assert!(opt > uniform, "{mover:?}: {opt} vs {uniform}");
            assert!(opt <= 1.0 + 1e-12);
        }
    }
}
