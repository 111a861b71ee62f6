//! The padlock, exactly and with a token-model surrogate. The exact
//! confounded predictor forecasts certain success at the search probe
//! (delusion ln 4); the exact refit is delusion-free; the surrogate starts
//! at ln 4 too and sheds most of it after one round of fine-tuning on its
//! own relabeled self-play.
//!
//!     cargo run --release --example padlock_refit

use coherence_lab::envs::PadlockConfig;
use coherence_lab::harness::run_padlock;

fn main() -> anyhow::Result<()> {
    let config = PadlockConfig::new(3, 2, 0b101, 7);
    let run = run_padlock(&config, 1, 20_000, 17)?;

    println!("exact predictor at the probe:");
    println!("  confounded delusion {:.10} (ln 4 = {:.10})", run.exact_confounded, 4f64.ln());
    println!("  refit delusion      {:.10}", run.exact_refit);

    println!("\nsurrogate (count model over episode tokens):");
    println!("  untrained baseline solve rate {:.3}", run.baseline_solve_rate);
    for r in &run.rounds {
        println!(
            "  round {}: delusion {:.6}, solve rate {:.3}, {} success hallucinations resampled",
            r.round, r.delusion, r.solve_rate, r.illegal_resamples
        );
    }
    let drop = run.rounds[0].delusion / run.rounds[1].delusion;
    println!("\ndelusion shrank by a factor of {drop:.1} in one round");
    Ok(())
}
