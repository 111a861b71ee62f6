//! Cross-checks the conditioning operator against independent oracles on a
//! batch of random well-separated MDPs: monotone improvement, agreement
//! with brute-force trajectory enumeration, convergence to the limit
//! policy, vanishing incoherence, and optimality of the limit.
//!
//!     cargo run --release --example random_mdp_properties

use coherence_lab::harness::{run_oracle_check, OutputFormat};

fn main() {
    let run = run_oracle_check(100, 17);
    print!("{}", run.report.render(OutputFormat::Csv));
    assert!(run.passed, "a property check failed");
    println!("\nall {} properties held on every instance", run.outcomes.len());
}
