//! Accuracy-first synthetic data release on the built-in census-like table,
//! with both accuracy checkers on the same seed.
//!
//! Run with `cargo run --release --example synthetic_data_experiment`.

use expost::pipeline::{
    generate_dataset, median, run_prepared, summarize, CheckerKind, ExperimentConfig, PreparedData, Threshold,
    DEFAULT_GENERATED_ROWS,
};

fn main() -> expost::Result<()> {
    let data = generate_dataset(DEFAULT_GENERATED_ROWS, 7)?;
    let base = ExperimentConfig { repeats: 10, seed: 7, threshold: Threshold::Auto, ..ExperimentConfig::default() };
    let prepared = PreparedData::new(&data, base.seed)?;
    println!(
        "rows: train {} validation {} test {}",
        prepared.split.train().rows(),
        prepared.split.validation().rows(),
        prepared.test.rows()
    );

    for checker in [CheckerKind::Gaussian, CheckerKind::Svt] {
        let cfg = ExperimentConfig { checker, ..base.clone() };
        let out = run_prepared(&cfg, &prepared)?;
        if let Some(d) = out.derivation {
            println!("threshold {:.4} (non-DP {:.4}, lowest eps {:.4})", d.threshold, d.non_dp, d.lowest_eps);
        }
        let levels = cfg.schedule.as_f64();
        let per_step: Vec<f64> = levels
            .iter()
            .map(|&e| {
                let accs: Vec<f64> = out.records.iter().filter(|r| r.eps_cum == e).map(|r| r.clean_val_acc).collect();
                accs.iter().sum::<f64>() / accs.len() as f64
            })
            .collect();
        println!("{checker}: mean validation accuracy by eps");
        for (e, a) in levels.iter().zip(&per_step) {
            println!("  {e:.4}  {a:.4}");
        }
        let summary = summarize(&out.records);
        let charged: Vec<f64> = summary.iter().map(|s| s.charged_eps).collect();
        for s in &summary {
            let accepted = s.accepted_eps.map(|e| format!("{e:.4}")).unwrap_or_else(|| "exhausted".into());
            println!(
                "  repeat {:2}: accepted {accepted:>9}  total {:.4}  val {:.4}  test {:.4}",
                s.repeat, s.eps_total, s.val_acc, s.test_acc
            );
        }
        println!("{checker}: median charged eps {:.4}", median(&charged));
    }
    Ok(())
}
