//! A minimal accuracy-first release: a noisy mean is refined until a private
//! check says it is close enough to a held-out estimate.
//!
//! Run with `cargo run --example accuracy_first_loop`.

use expost::accounting::{log_spaced_schedule, RenyiOrder, Sensitivity};
use expost::composition::{
    run_accuracy_first, AccuracyStopper, BrownianBase, DisjointSplit, GaussianCheck, GaussianCheckConfig,
    ScheduleSelector, Subset,
};
use expost::noise_reduction::NoiseReductionSession;
use expost::accounting::RdpBudget;
use expost::derived_rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> expost::Result<()> {
    let mut rng = derived_rng(11, 0);
    let data: Vec<f64> = (0..2000).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
    let train: Vec<usize> = (0..1000).collect();
    let validation: Vec<usize> = (1000..2000).collect();
    let split = DisjointSplit::new(&data, &train, &validation)?;

    let alpha = RenyiOrder::new(20.0)?;
    let n = split.train().row_count() as f64;
    let schedule = log_spaced_schedule(1e-4, 1.0, 8)?;
    let session = NoiseReductionSession::new(vec![mean(split.train())], Sensitivity::new(1.0 / n)?, alpha);
    let mut base = BrownianBase::new(session, derived_rng(11, 1));

    // Score is closeness to the validation mean, clipped to [0, 1] so the
    // score has sensitivity 1 / n.
    let score = |v: &Vec<f64>, y: &Vec<f64>| Ok((1.0 - (y[0] - mean(v)).abs()).clamp(0.0, 1.0));
    let check = GaussianCheckConfig::new(alpha, Sensitivity::new(1.0 / n)?, schedule.len(), RdpBudget::new(0.01)?, 0.98)?;
    let mut stopper = AccuracyStopper::new(score, GaussianCheck::new(check));
    let mut selector = ScheduleSelector::new(&schedule);

    let result =
        run_accuracy_first(&split, &mut base, &mut selector, &mut stopper, schedule.len(), &mut derived_rng(11, 2))?;
    for ((eps, y), (clean, outcome)) in result.eps_chosen.iter().zip(&result.outputs).zip(stopper.log()) {
        println!(
            "eps {:>8.5}  release {:.4}  score {:.4}  noisy score {:.4}  {:?}",
            eps.value(),
            y[0],
            clean,
            outcome.noisy_value,
            outcome.decision
        );
    }
    println!(
        "{} after {} releases, total ex-post RDP {:.5} at alpha {}",
        if result.halted { "halted" } else { "exhausted" },
        result.t,
        result.eps_total.value(),
        alpha.value()
    );
    Ok(())
}
