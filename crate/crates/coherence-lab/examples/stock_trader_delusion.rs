//! The one-step stock trader: an expert who sees the market moves first;
//! a predictor trained on its episodes treats the agent's own planned buy
//! as evidence about the market and forecasts a sure profit, while the
//! de-confounded refit correctly forecasts a coin flip.
//!
//!     cargo run --example stock_trader_delusion

use coherence_lab::delusion::{
    fit_exact_predictor, forecast_delusion, refit_exact, success_step_forecast, ProbePoint,
};
use coherence_lab::envs::stock_trader;

fn main() -> anyhow::Result<()> {
    let env = stock_trader();
    let predictor = fit_exact_predictor(&env);
    // Probe: observe the pre-trade market, then plan to buy.
    let probe = ProbePoint { init_obs: 0, actions: vec![0] };

    let confounded = success_step_forecast(&predictor, &probe)?;
    println!("confounded forecast of the first success step: {confounded:?}");

    let refit = refit_exact(&predictor);
    let ideal = success_step_forecast(&refit, &probe)?;
    println!("refit forecast of the first success step:      {ideal:?}");

    println!(
        "\nforecast delusion: confounded {:.10} (ln 2 = {:.10}), refit {:.1}",
        forecast_delusion(&predictor, &probe)?,
        std::f64::consts::LN_2,
        forecast_delusion(&refit, &probe)?
    );
    Ok(())
}
