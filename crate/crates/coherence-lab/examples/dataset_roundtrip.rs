//! Token codecs are bit-exact: every tic-tac-toe game and every padlock
//! episode decodes back to exactly the trajectory that was encoded, and the
//! JSONL envelope round-trips the raw token sequences.
//!
//!     cargo run --release --example dataset_roundtrip

use coherence_lab::data::{
    decode_padlock, decode_ttt, encode_padlock, encode_ttt, read_jsonl, sample_expert_dataset,
    write_jsonl, PadlockSeq,
};
use coherence_lab::envs::{enumerate_ttt_games, PadlockConfig};

fn main() -> anyhow::Result<()> {
    let games = enumerate_ttt_games();
    for game in &games {
        let decoded = decode_ttt(&encode_ttt(game))?;
        assert_eq!(&decoded, game);
    }
    println!("{} tic-tac-toe games round-tripped", games.len());

    let config = PadlockConfig::new(3, 2, 0b101, 7);
    let dataset = sample_expert_dataset(&config, 5_000, 17);
    for tokens in &dataset {
        let seq: PadlockSeq = decode_padlock(tokens, &config)?;
        assert_eq!(&encode_padlock(&seq, &config)?, tokens);
    }
    println!("{} padlock expert episodes round-tripped", dataset.len());

    let mut buffer = Vec::new();
    write_jsonl(&mut buffer, dataset.clone())?;
    let back: Vec<Vec<u8>> = read_jsonl(&buffer[..])?;
    assert_eq!(back, dataset);
    println!("JSONL envelope round-tripped {} sequences", back.len());
    Ok(())
}
