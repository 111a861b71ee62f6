//! Count-based sequence models over the token codecs, plus the self-play
//! loops that probe them: slot-restricted sampling keeps generated sequences
//! inside the codec grammar, illegal completions are resampled and counted,
//! and fine-tuning refits on self-play sequences relabeled with the true
//! outcome.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::kl_divergence;
use crate::data::ttt_codec::BOS_PAD;
use crate::data::{
    encode_padlock, tok_action, tok_goal_failure, tok_goal_success, tok_success, PadlockSeq,
    TOK_BOS, TOK_DOT, TOK_DRAW, TOK_O, TOK_OWIN, TOK_X, TOK_XWIN,
};
use crate::envs::{
    Mover, Outcome, PadlockConfig, TttGame, TttState, CELL_EMPTY, CELL_O, CELL_X,
};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("model file: {0}")]
    Parse(String),
    #[error("the probe prefix has zero probability under the model")]
    DeadProbe,
}

/// Multiply-xor finisher for pre-packed context keys; contexts already fill
/// the key bits, so a full byte-stream hash would be wasted work.
#[derive(Default)]
pub struct PackedKeyHasher(u64);

impl Hasher for PackedKeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }

    fn write_u128(&mut self, key: u128) {
        let mut h = (key as u64) ^ ((key >> 64) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 32;
        h = h.wrapping_mul(0xd6e8_feb8_6659_fd93);
        h ^= h >> 32;
        self.0 = h;
    }
}

type CountMap = HashMap<u128, Vec<u32>, BuildHasherDefault<PackedKeyHasher>>;

/// A table of next-token counts keyed by the trailing context window, packed
/// into a `u128`. With `epsilon = 0` an unseen context falls back to the
/// uniform distribution.
#[derive(Debug, Clone)]
pub struct TokenModel {
    vocab: usize,
    context_len: usize,
    bits: u32,
    epsilon: f64,
    counts: CountMap,
}

fn ceil_log2(x: usize) -> u32 {
    assert!(x >= 2);
    usize::BITS - (x - 1).leading_zeros()
}

impl TokenModel {
    pub fn new(vocab: usize, context_len: usize, epsilon: f64) -> Self {
        assert!(vocab >= 2, "vocabulary too small");
        assert!(epsilon >= 0.0);
        // Token values are stored shifted by one so that absent leading slots
        // (contexts shorter than the window) cannot collide with real tokens.
        let bits = ceil_log2(vocab + 1);
        assert!(
            context_len as u32 * bits <= 128,
            "context of {context_len} tokens over {vocab} symbols does not fit the key"
        );
        TokenModel { vocab, context_len, bits, epsilon, counts: CountMap::default() }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_contexts(&self) -> usize {
        self.counts.len()
    }

    fn context_key(&self, prefix: &[u8]) -> u128 {
        let start = prefix.len().saturating_sub(self.context_len);
        let mut key = 0u128;
        for &t in &prefix[start..] {
            debug_assert!((t as usize) < self.vocab);
            key = (key << self.bits) | (t as u128 + 1);
        }
        key
    }

    /// Adds every (context, next token) pair of every sequence.
    pub fn fit(&mut self, corpus: &[Vec<u8>]) {
        for seq in corpus {
            for i in 0..seq.len() {
                let key = self.context_key(&seq[..i]);
                let row = self.counts.entry(key).or_insert_with(|| vec![0; self.vocab]);
                row[seq[i] as usize] += 1;
            }
        }
    }

    /// Smoothed next-token distribution after `prefix`.
    pub fn next_dist(&self, prefix: &[u8]) -> Vec<f64> {
        let key = self.context_key(prefix);
        match self.counts.get(&key) {
            Some(row) => {
                let total: f64 = row.iter().map(|&c| c as f64).sum();
                let denom = total + self.epsilon * self.vocab as f64;
                if denom == 0.0 {
                    vec![1.0 / self.vocab as f64; self.vocab]
                } else {
                    row.iter().map(|&c| (c as f64 + self.epsilon) / denom).collect()
                }
            }
            None => vec![1.0 / self.vocab as f64; self.vocab],
        }
    }

    pub fn token_prob(&self, prefix: &[u8], token: u8) -> f64 {
        self.next_dist(prefix)[token as usize]
    }

    /// Chain-rule probability of an entire prefix from the empty context.
    pub fn prefix_prob(&self, tokens: &[u8]) -> f64 {
        let mut p = 1.0;
        for i in 0..tokens.len() {
            p *= self.token_prob(&tokens[..i], tokens[i]);
        }
        p
    }

    /// Probability of `token` when sampling is restricted to `allowed`,
    /// renormalized; a zero-mass restriction degrades to uniform over
    /// `allowed`, exactly as [`TokenModel::sample_restricted`] does.
    pub fn restricted_prob(&self, prefix: &[u8], allowed: &[u8], token: u8) -> f64 {
        debug_assert!(allowed.contains(&token));
        let dist = self.next_dist(prefix);
        let total: f64 = allowed.iter().map(|&t| dist[t as usize]).sum();
        if total == 0.0 {
            1.0 / allowed.len() as f64
        } else {
            dist[token as usize] / total
        }
    }

    /// Samples the next token from the restriction of the model to `allowed`.
    pub fn sample_restricted<R: Rng>(&self, prefix: &[u8], allowed: &[u8], rng: &mut R) -> u8 {
        let dist = self.next_dist(prefix);
        let weights: Vec<f64> = allowed.iter().map(|&t| dist[t as usize]).collect();
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return allowed[rng.gen_range(0..allowed.len())];
        }
        let mut u = rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 && w > 0.0 {
                return allowed[i];
            }
        }
        allowed[weights.iter().rposition(|&w| w > 0.0).expect("total mass positive")]
    }

    pub fn to_json(&self) -> String {
        let mut entries: Vec<(String, Vec<u32>)> = self
            .counts
            .iter()
            .map(|(&k, row)| (k.to_string(), row.clone()))
            .collect();
        entries.sort();
        let file = ModelFile {
            vocab: self.vocab,
            context_len: self.context_len,
            epsilon: self.epsilon,
            counts: entries,
        };
        serde_json::to_string(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| SurrogateError::Parse(e.to_string()))?;
        let mut model = TokenModel::new(file.vocab, file.context_len, file.epsilon);
        for (key, row) in file.counts {
            let key: u128 = key.parse().map_err(|_| {
                SurrogateError::Parse(format!("bad context key {key:?}"))
            })?;
            if row.len() != file.vocab {
                return Err(SurrogateError::Parse("count row width mismatch".into()));
            }
            model.counts.insert(key, row);
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vocab: usize,
    context_len: usize,
    epsilon: f64,
    counts: Vec<(String, Vec<u32>)>,
}

/// How a fine-tuning corpus combines with the existing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinetuneMode {
    /// Refit from scratch on the new corpus only.
    Replace,
    /// Add the new corpus counts on top of the existing ones.
    Union,
}

pub fn finetune(model: &TokenModel, corpus: &[Vec<u8>], mode: FinetuneMode) -> TokenModel {
    let mut next = match mode {
        FinetuneMode::Replace => TokenModel::new(model.vocab, model.context_len, model.epsilon),
        FinetuneMode::Union => model.clone(),
    };
    next.fit(corpus);
    next
}

/// Tally of one batch of self-play games, counted from the mover's side.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PlayStats {
    pub games: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    /// Sampled blocks rejected because the board delta was not one legal move.
    pub illegal_resamples: usize,
    /// Blocks that exhausted the resample budget and fell back to a uniform
    /// legal move.
    pub illegal_fallbacks: usize,
}

impl PlayStats {
    /// Win rate with draws worth one half.
    pub fn score(&self) -> f64 {
        (self.wins as f64 + 0.5 * self.draws as f64) / self.games.max(1) as f64
    }
}

const MAX_RESAMPLES: usize = 8;
const OUTCOME_TOKENS: [u8; 3] = [TOK_XWIN, TOK_OWIN, TOK_DRAW];

fn mover_mark(mover: Mover) -> u8 {
    match mover {
        Mover::PlayerFirst => CELL_X,
        Mover::PlayerSecond => CELL_O,
    }
}

/// Outcome token meaning "the mover won".
pub fn mover_win_token(mover: Mover) -> u8 {
    match mover {
        Mover::PlayerFirst => TOK_XWIN,
        Mover::PlayerSecond => TOK_OWIN,
    }
}

fn cell_token(cell: u8) -> u8 {
    match cell {
        CELL_X => TOK_X,
        CELL_O => TOK_O,
        _ => TOK_DOT,
    }
}

fn mark_token(mark: u8) -> u8 {
    if mark == CELL_X {
        TOK_X
    } else {
        TOK_O
    }
}

fn push_board_tokens(prefix: &mut Vec<u8>, board: &TttState) {
    prefix.extend(board.board.iter().map(|&c| cell_token(c)));
}

/// Samples one board block for the mover. Each slot is restricted to the
/// tokens the grammar allows there; the block is accepted only when exactly
/// one empty cell turned into the mover's mark. On acceptance the tokens
/// stay appended and the chosen cell is returned; on rejection the prefix is
/// rolled back.
fn sample_move_block<R: Rng>(
    model: &TokenModel,
    prefix: &mut Vec<u8>,
    board: &TttState,
    mark: u8,
    rng: &mut R,
) -> Option<usize> {
    let base_len = prefix.len();
    let mark_tok = mark_token(mark);
    let mut changed: Option<usize> = None;
    let mut n_changed = 0usize;
    for (j, &cell) in board.board.iter().enumerate() {
        let tok = if cell == CELL_EMPTY {
            let t = model.sample_restricted(prefix, &[TOK_DOT, mark_tok], rng);
            if t == mark_tok {
                changed = Some(j);
                n_changed += 1;
            }
            t
        } else {
            cell_token(cell)
        };
        prefix.push(tok);
    }
    if n_changed == 1 {
        changed
    } else {
        prefix.truncate(base_len);
        None
    }
}

/// Plays `n_games` of tic-tac-toe with the model moving for `mover` against
/// a uniformly random opponent. `condition` forces the outcome token fed
/// into every block; `None` samples it once per game from the model. The
/// returned games carry the true final outcome, whatever was conditioned on.
pub fn play_tictactoe(
    model: &TokenModel,
    mover: Mover,
    condition: Option<u8>,
    n_games: usize,
    seed: u64,
) -> (PlayStats, Vec<TttGame>) {
    if let Some(tok) = condition {
        assert!(OUTCOME_TOKENS.contains(&tok), "condition must be an outcome token");
    }
    let mark = mover_mark(mover);
    let mut stats = PlayStats { games: n_games, ..PlayStats::default() };
    let mut games = Vec::with_capacity(n_games);
    for game_idx in 0..n_games {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(game_idx as u64 + 1);
        let mut prefix = vec![TOK_BOS; BOS_PAD];
        let outcome_tok = match condition {
            Some(t) => t,
            None => model.sample_restricted(&prefix, &OUTCOME_TOKENS, &mut rng),
        };
        // Block zero: the empty board.
        let mut board = TttState::initial();
        prefix.push(outcome_tok);
        push_board_tokens(&mut prefix, &board);
        let mut moves = Vec::new();
        while !board.is_terminal() {
            prefix.push(outcome_tok);
            let cell = if board.to_move == mark {
                let mut sampled = None;
                for _ in 0..MAX_RESAMPLES {
                    match sample_move_block(model, &mut prefix, &board, mark, &mut rng) {
                        Some(cell) => {
                            sampled = Some(cell);
                            break;
                        }
                        None => stats.illegal_resamples += 1,
                    }
                }
                match sampled {
                    Some(cell) => {
                        board = board.play(cell);
                        cell
                    }
                    None => {
                        stats.illegal_fallbacks += 1;
                        let legal: Vec<usize> = board.legal_moves().collect();
                        let cell = legal[rng.gen_range(0..legal.len())];
                        board = board.play(cell);
                        push_board_tokens(&mut prefix, &board);
                        cell
                    }
                }
            } else {
                let legal: Vec<usize> = board.legal_moves().collect();
                let cell = legal[rng.gen_range(0..legal.len())];
                board = board.play(cell);
                push_board_tokens(&mut prefix, &board);
                cell
            };
            moves.push(cell as u8);
        }
        let outcome = match board.winner() {
            Some(CELL_X) => Outcome::XWin,
            Some(_) => Outcome::OWin,
            None => Outcome::Draw,
        };
        match (outcome, mark) {
            (Outcome::Draw, _) => stats.draws += 1,
            (Outcome::XWin, CELL_X) | (Outcome::OWin, CELL_O) => stats.wins += 1,
            _ => stats.losses += 1,
        }
        games.push(TttGame { moves, outcome });
    }
    (stats, games)
}

/// Exact first-move distribution of the generation process for the first
/// player: outcome-token weights times the slot-restricted block
/// probabilities, conditioned on the block being a single legal move.
pub fn first_move_distribution(model: &TokenModel, condition: Option<u8>) -> [f64; 9] {
    let mut base = vec![TOK_BOS; BOS_PAD];
    let weights: Vec<f64> = match condition {
        Some(t) => OUTCOME_TOKENS.iter().map(|&o| if o == t { 1.0 } else { 0.0 }).collect(),
        None => {
            let raw: Vec<f64> = OUTCOME_TOKENS
                .iter()
                .map(|&o| model.restricted_prob(&base, &OUTCOME_TOKENS, o))
                .collect();
            raw
        }
    };
    let mut out = [0.0f64; 9];
    for (oi, &o) in OUTCOME_TOKENS.iter().enumerate() {
        if weights[oi] == 0.0 {
            continue;
        }
        base.push(o);
        base.extend([TOK_DOT; 9]);
        base.push(o);
        for cell in 0..9 {
            let mut ctx = base.clone();
            let mut p = weights[oi];
            for j in 0..9 {
                let tok = if j == cell { TOK_X } else { TOK_DOT };
                p *= model.restricted_prob(&ctx, &[TOK_DOT, TOK_X], tok);
                ctx.push(tok);
            }
            out[cell] += p;
        }
        base.truncate(BOS_PAD);
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for v in &mut out {
            *v /= total;
        }
    } else {
        out = [1.0 / 9.0; 9];
    }
    out
}

/// KL divergence between the conditioned and unconditioned first-move
/// distributions; the headline per-move incoherence readout for the token
/// model.
pub fn first_move_kl(model: &TokenModel, condition: u8) -> f64 {
    let cond = first_move_distribution(model, Some(condition));
    let uncond = first_move_distribution(model, None);
    kl_divergence(&cond, &uncond)
}

/// Tally of one batch of padlock self-play episodes.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PadlockPlayStats {
    pub episodes: usize,
    pub solved: usize,
    /// Sampled tokens rejected because they claimed success on a closed lock.
    pub illegal_resamples: usize,
    /// Steps that exhausted the resample budget and fell back to a uniform
    /// random flip.
    pub illegal_fallbacks: usize,
}

impl PadlockPlayStats {
    pub fn solve_rate(&self) -> f64 {
        self.solved as f64 / self.episodes.max(1) as f64
    }
}

/// Plays padlock episodes with the model conditioned on the success goal
/// token. The initial configuration and the hidden random-zone target are
/// drawn uniformly per episode; the true lock decides when the success token
/// is emitted, so a sampled success claim on a closed lock is illegal and is
/// resampled. Returns the episodes re-encoded with their true outcome
/// labels.
pub fn play_padlock(
    model: &TokenModel,
    config: &PadlockConfig,
    n_episodes: usize,
    seed: u64,
) -> (PadlockPlayStats, Vec<Vec<u8>>) {
    let n = config.n_levers();
    let m = config.n_random;
    let fixed_code = config.fixed_code.expect("self-play requires an explicit fixed code") as usize;
    let action_toks: Vec<u8> = (0..n).map(tok_action).collect();
    let mut allowed: Vec<u8> = action_toks.clone();
    allowed.push(tok_success(n));
    let mut stats = PadlockPlayStats { episodes: n_episodes, ..PadlockPlayStats::default() };
    let mut corpus = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64 + 1);
        let init_config = rng.gen_range(0..1usize << n);
        let goal = rng.gen_range(0..1usize << m);
        let target = fixed_code | (goal << config.n_fixed);
        let mut prefix = Vec::with_capacity(1 + n + config.horizon);
        prefix.push(tok_goal_success(n));
        for lever in 0..n {
            prefix.push(((init_config >> lever) & 1) as u8);
        }
        let mut c = init_config;
        let mut actions = Vec::new();
        let mut success = c == target;
        while !success && actions.len() < config.horizon {
            let mut lever = None;
            for _ in 0..MAX_RESAMPLES {
                let tok = model.sample_restricted(&prefix, &allowed, &mut rng);
                if tok == tok_success(n) {
                    stats.illegal_resamples += 1;
                } else {
                    lever = Some((tok - tok_action(0)) as usize);
                    break;
                }
            }
            let lever = lever.unwrap_or_else(|| {
                stats.illegal_fallbacks += 1;
                rng.gen_range(0..n)
            });
            prefix.push(tok_action(lever));
            actions.push(lever);
            c ^= 1 << lever;
            success = c == target;
        }
        if success {
            stats.solved += 1;
        }
        let seq = PadlockSeq { init_config, actions, success };
        corpus.push(encode_padlock(&seq, config).expect("self-play episodes fit the layout"));
    }
    (stats, corpus)
}

/// Model-implied probability that the success token directly follows the
/// probe's action prefix, marginalized over the goal token by the chain
/// rule.
pub fn padlock_probe_success_prob(
    model: &TokenModel,
    config: &PadlockConfig,
    init_config: usize,
    actions: &[usize],
) -> Result<f64, SurrogateError> {
    let n = config.n_levers();
    let mut numer = 0.0;
    let mut denom = 0.0;
    for goal_tok in [tok_goal_success(n), tok_goal_failure(n)] {
        let mut prefix = Vec::with_capacity(1 + n + actions.len());
        prefix.push(goal_tok);
        for lever in 0..n {
            prefix.push(((init_config >> lever) & 1) as u8);
        }
        for &a in actions {
            prefix.push(tok_action(a));
        }
        let p_prefix = model.prefix_prob(&prefix);
        numer += p_prefix * model.token_prob(&prefix, tok_success(n));
        denom += p_prefix;
    }
    if denom == 0.0 {
        return Err(SurrogateError::DeadProbe);
    }
    Ok(numer / denom)
}

/// Auto-suggestive delusion of the token model at the search probe: the KL
/// divergence between its success forecast and the analytic ideal, a
/// Bernoulli at one over the number of random-zone targets.
pub fn padlock_surrogate_delusion(
    model: &TokenModel,
    config: &PadlockConfig,
    init_config: usize,
    actions: &[usize],
) -> Result<f64, SurrogateError> {
    let p = padlock_probe_success_prob(model, config, init_config, actions)?;
    let ideal = 1.0 / (1usize << config.n_random) as f64;
    Ok(kl_divergence(&[p, 1.0 - p], &[ideal, 1.0 - ideal]))
}

/// Convenience corpus for dataset generation: expert demonstrations, a model
/// fit on them, then one batch of conditioned self-play with true labels.
pub fn sample_agent_dataset(
    config: &PadlockConfig,
    expert_n: usize,
    agent_n: usize,
    seed: u64,
) -> Vec<Vec<u8>> {
    let expert = crate::data::sample_expert_dataset(config, expert_n, seed);
    let mut model = TokenModel::new(padlock_model_vocab(config), padlock_context_len(config), 0.0);
    model.fit(&expert);
    play_padlock(&model, config, agent_n, seed ^ 0x5eed).1
}

pub fn padlock_model_vocab(config: &PadlockConfig) -> usize {
    crate::data::padlock_vocab(config.n_levers()).len()
}

/// Full-history context: everything before the final token of a sequence.
pub fn padlock_context_len(config: &PadlockConfig) -> usize {
    crate::data::padlock_seq_len(config) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decode_padlock, decode_ttt, sample_expert_dataset, ttt_corpus};

    #[test]
    fn counts_match_a_tiny_corpus() {
        let corpus = vec![vec![0u8, 1, 2], vec![0, 1, 1], vec![0, 2, 2]];
        let mut model = TokenModel::new(3, 2, 0.0);
        model.fit(&corpus);
        assert_eq!(model.token_prob(&[], 0), 1.0);
        assert!((model.token_prob(&[0], 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((model.token_prob(&[0, 1], 2) - 0.5).abs() < 1e-12);
        // Unseen context degrades to uniform.
        assert!((model.token_prob(&[2, 2], 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn short_contexts_do_not_collide_with_full_windows() {
        // Token 0 at the start of a sequence must not alias a longer context
        // whose early slots happen to pack to zero.
        let mut model = TokenModel::new(3, 2, 0.0);
        model.fit(&[vec![0, 1], vec![2, 0, 2]]);
        assert_eq!(model.token_prob(&[], 0), 0.5);
        assert_eq!(model.token_prob(&[2, 0], 2), 1.0);
        assert_eq!(model.token_prob(&[0], 1), 1.0);
    }

    #[test]
    fn restricted_sampling_respects_the_allowed_set() {
        let mut model = TokenModel::new(4, 1, 0.0);
        model.fit(&[vec![0, 3, 3, 3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = model.sample_restricted(&[0], &[1, 2], &mut rng);
            assert!(t == 1 || t == 2);
        }
        assert_eq!(model.sample_restricted(&[0], &[3], &mut rng), 3);
    }

    #[test]
    fn model_json_round_trip() {
        let mut model = TokenModel::new(5, 3, 0.25);
        model.fit(&[vec![0, 1, 2, 3, 4], vec![4, 3, 2, 1, 0]]);
        let back = TokenModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back.vocab, model.vocab);
        assert_eq!(back.context_len, model.context_len);
        assert_eq!(back.epsilon, model.epsilon);
        for prefix in [&[][..], &[0][..], &[0, 1][..], &[4, 3, 2][..]] {
            assert_eq!(back.next_dist(prefix), model.next_dist(prefix));
        }
    }

    #[test]
    fn expert_fit_padlock_delusion_is_exactly_ln4_and_finetuning_shrinks_it() {
        let config = PadlockConfig::new(3, 2, 0b101, 7);
        let expert = sample_expert_dataset(&config, 20_000, 11);
        let mut model =
            TokenModel::new(padlock_model_vocab(&config), padlock_context_len(&config), 0.0);
        model.fit(&expert);
        let probe = crate::envs::padlock_search_probe(&config);
        let d0 = padlock_surrogate_delusion(&model, &config, probe.init_obs, &probe.actions)
            .unwrap();
        assert!((d0 - 4.0f64.ln()).abs() < 1e-9, "round-0 delusion {d0}");

        let (stats0, corpus) = play_padlock(&model, &config, 20_000, 23);
        let tuned = finetune(&model, &corpus, FinetuneMode::Replace);
        let d1 = padlock_surrogate_delusion(&tuned, &config, probe.init_obs, &probe.actions)
            .unwrap();
        assert!(d1 * 5.0 < d0, "delusion {d0} -> {d1} shrank less than 5x");
        let (stats1, _) = play_padlock(&tuned, &config, 20_000, 23);
        assert!(
            stats1.solve_rate() >= stats0.solve_rate(),
            "solve rate fell: {} -> {}",
            stats0.solve_rate(),
            stats1.solve_rate()
        );
    }

    #[test]
    fn padlock_self_play_corpus_decodes_with_true_labels() {
        let config = PadlockConfig::new(3, 2, 0b101, 7);
        let expert = sample_expert_dataset(&config, 2_000, 3);
        let mut model =
            TokenModel::new(padlock_model_vocab(&config), padlock_context_len(&config), 0.0);
        model.fit(&expert);
        let (stats, corpus) = play_padlock(&model, &config, 500, 7);
        assert_eq!(corpus.len(), 500);
        let solved = corpus
            .iter()
            .filter(|seq| decode_padlock(seq, &config).unwrap().success)
            .count();
        assert_eq!(solved, stats.solved);
        assert!(stats.solve_rate() > 0.5, "solve rate {}", stats.solve_rate());
    }

    #[test]
    fn conditioned_tictactoe_beats_unconditioned() {
        let mut model = TokenModel::new(8, 30, 0.0);
        model.fit(&ttt_corpus());
        let win = mover_win_token(Mover::PlayerFirst);
        let (cond, games) = play_tictactoe(&model, Mover::PlayerFirst, Some(win), 400, 41);
        let (uncond, _) = play_tictactoe(&model, Mover::PlayerFirst, None, 400, 41);
        assert!(
            cond.score() > uncond.score(),
            "conditioned {} vs unconditioned {}",
            cond.score(),
            uncond.score()
        );
        // Generated games really are legal complete games.
        for game in games.iter().take(50) {
            let tokens = crate::data::encode_ttt(game);
            assert_eq!(&decode_ttt(&tokens).unwrap(), game);
        }
        assert!(first_move_kl(&model, win) > 0.0);
    }

    #[test]
    fn first_move_distribution_is_normalized_and_deterministic() {
        let mut model = TokenModel::new(8, 30, 0.0);
        model.fit(&ttt_corpus());
        let a = first_move_distribution(&model, None);
        let b = first_move_distribution(&model, None);
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn play_is_deterministic_in_the_seed() {
        let mut model = TokenModel::new(8, 30, 0.0);
        model.fit(&ttt_corpus());
        let (s1, g1) = play_tictactoe(&model, Mover::PlayerSecond, None, 60, 9);
        let (s2, g2) = play_tictactoe(&model, Mover::PlayerSecond, None, 60, 9);
        assert_eq!(g1, g2);
        assert_eq!(s1.score(), s2.score());
    }
}
