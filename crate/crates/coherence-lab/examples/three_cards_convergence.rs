//! Iterated goal-conditioning on the three-cards toy: watch the expected
//! return climb from 3/8 toward 1 while the incoherence and the KL distance
//! to the limit policy fall.
//!
//!     cargo run --example three_cards_convergence

use coherence_lab::conditioning::{iterate, limit_policy};
use coherence_lab::envs::three_cards;
use coherence_lab::mdp::TimedPolicy;

fn main() {
    let mdp = three_cards();
    let pi0 = TimedPolicy::uniform(&mdp);
    let trace = iterate(&mdp, &pi0, 12);
    println!("iter  return      incoherence  kl_to_limit");
    for i in 0..trace.len() {
        println!(
            "{i:>4}  {:<10.7}  {:<11.3e}  {:.3e}",
            trace.returns[i], trace.incoherences[i], trace.kl_to_limit[i]
        );
    }
    let limit = limit_policy(&mdp, &pi0).expect("uniform start has full support");
    println!(
        "\nlimit policy at the start state: tick {:.4}, tock {:.4}",
        limit.prob(0, mdp.start, 0),
        limit.prob(0, mdp.start, 1)
    );
}
