//! Bit-exact trajectory token codecs, dataset sampling, and file I/O.

mod io;
mod padlock_codec;
pub(crate) mod ttt_codec;

pub use io::{read_jsonl, write_csv, write_jsonl, DataError, SCHEMA_VERSION};
pub use padlock_codec::{
    decode_padlock, encode_padlock, padlock_seq_len, padlock_vocab, sample_expert_dataset,
    tok_action, tok_failure, tok_goal_failure, tok_goal_success, tok_pad, tok_success,
    PadlockCodecError, PadlockSeq, PADLOCK_BIT0, PADLOCK_BIT1,
};
pub use ttt_codec::{
    decode_ttt, encode_ttt, outcome_token, ttt_corpus, ttt_vocab, CodecError, TOK_BOS, TOK_DOT,
    TOK_DRAW, TOK_EOS, TOK_O, TOK_OWIN, TOK_X, TOK_XWIN, TTT_SEQ_LEN,
};
