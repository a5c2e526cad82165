//! Gradually less noisy releases of one vector with both samplers. Each
//! release costs only the difference to the previous budget.
//!
//! Run with `cargo run --example noise_reduction`.

use expost::accounting::{log_spaced_schedule, RenyiOrder, Sensitivity};
use expost::noise_reduction::NoiseReductionSession;
use expost::seeded_rng;

fn main() -> expost::Result<()> {
    let fx = vec![120.0, 45.0, 7.0];
    let alpha = RenyiOrder::new(10.0)?;
    let delta = Sensitivity::new(1.0)?;
    let schedule = log_spaced_schedule(0.001, 1.0, 6)?;

    let mut rng = seeded_rng(3);
    let mut pw = NoiseReductionSession::new(fx.clone(), delta, alpha);
    let mut bm = NoiseReductionSession::new(fx.clone(), delta, alpha);
    println!("true value {fx:?}");
    for &eps in schedule.values() {
        let law = bm.marginal_variance(eps)?;
        let a = pw.pw_release(eps, &mut rng)?;
        let b = bm.brownian_release(eps, &mut rng)?;
        println!(
            "eps {:>7.4}  variance {:>10.3}  precision-weighted {:?}  brownian {:?}",
            eps.value(),
            law.finite().unwrap_or(f64::INFINITY),
            round(&a.payload),
            round(&b.payload)
        );
    }
    println!("spent {:.4} in total, the last budget", bm.current_eps().value());

    // Any release can be the start of another sequence: the next step is
    // drawn from its conditional law given everything seen so far.
    let next = schedule.last().value() * 2.0;
    let law = bm.conditional_law(expost::accounting::RdpBudget::new(next)?)?;
    println!("next step at eps {next}: mean {:?} variance {:.4}", round(&law.mean), law.variance);
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}
