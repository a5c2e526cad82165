//! Exact checks of finite mechanisms: the ex-post RDP condition survives
//! post-processing, the probabilistic ex-post definition does not, and a
//! mechanism can satisfy ex-post RDP while having infinite Renyi divergence.
//!
//! Run with `cargo run --example verify_post_processing`.

use expost::accounting::{RdpBudget, RenyiOrder};
use expost::mechanisms::{pathological_mechanism, post_process, StochasticMap};
use expost::verification::{
    calibrated_randomized_response, expost_rdp_lhs_symmetric, ppi_counterexample_search, renyi_divergence_exact,
    symmetric_violation_mass,
};


fn main() -> expost::Result<()> {
    let alpha = RenyiOrder::new(2.0)?;

    let rr = calibrated_randomized_response(0.8, alpha)?;
    let merge = StochasticMap::deterministic(&[0, 0], 1)?;
    let noisy = StochasticMap::new(vec!["a".into(), "b".into()], vec![vec![0.7, 0.3], vec![0.4, 0.6]])?;
    println!("randomized response, alpha {}", alpha.value());
    for (name, m) in [("as released", rr.clone()), ("merged", post_process(&rr, &merge)?), ("noisy relabel", post_process(&rr, &noisy)?)] {
        println!("  {name:>14}: lhs {:.6}", expost_rdp_lhs_symmetric(&m, alpha).lhs);
    }

    let eps = RdpBudget::new(std::f64::consts::LN_2)?;
    let cx = ppi_counterexample_search(eps, 0.1, 0.01)?;
    println!("\nprobabilistic ex-post DP at eps ln 2, delta 0.1");
    print!("{}", cx.mechanism.to_text());
    println!("  violation mass {:.4} before merging outcomes 0 and 1, {:.4} after", cx.before, cx.after);
    let merged = post_process(&cx.mechanism, &cx.map)?;
    println!("  recomputed after: {:.4}", symmetric_violation_mass(&merged));

    let p = pathological_mechanism();
    println!("\nmechanism that sometimes reveals the dataset");
    for a in [2.0, 20.0] {
        let alpha = RenyiOrder::new(a)?;
        println!(
            "  alpha {a:>4}: ex-post lhs {:.6}  renyi divergence {}",
            expost_rdp_lhs_symmetric(&p, alpha).lhs,
            renyi_divergence_exact(&p, alpha)
        );
    }
    Ok(())
}
