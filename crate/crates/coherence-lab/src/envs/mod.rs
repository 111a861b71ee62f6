//! Constructors for the four benchmark environments with exact dynamics.

mod padlock;
mod stock_trader;
mod three_cards;
mod tictactoe;

pub use padlock::{padlock, padlock_search_probe, PadlockConfig};
pub use stock_trader::stock_trader;
pub use three_cards::three_cards;
pub use tictactoe::{
    enumerate_ttt_games, tictactoe, ttt_uniform_legal, Mover, Outcome, TttGame, TttState,
    CELL_EMPTY, CELL_O, CELL_X, TTT_LINES,
};
