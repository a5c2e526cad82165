//! Noise of the sparse-vector accuracy check against the plain Gaussian
//! check for a range of validation sizes and schedule lengths.
//!
//! Run with `cargo run --example svt_calibration`.

use expost::accounting::{RdpBudget, RenyiOrder, Sensitivity};
use expost::composition::{svt_calibrate, svt_sigmas, GaussianCheckConfig};


fn main() -> expost::Result<()> {
    let alpha = RenyiOrder::new(20.0)?;
    let eps = RdpBudget::new(0.01)?;

    println!("{:>7} {:>4} {:>12} {:>12} {:>9}", "n_val", "m", "gaussian sd", "svt sd", "svt t");
    for n in [1_000usize, 18_089, 100_000] {
        let delta = Sensitivity::new(1.0 / n as f64)?;
        let svt = svt_calibrate(alpha, delta, eps)?;
        for m in [2usize, 7, 20] {
            let g = GaussianCheckConfig::new(alpha, delta, m, eps, 0.0)?;
            println!(
                "{n:>7} {m:>4} {:>12.6} {:>12.6} {:>9.5}",
                g.variance().sqrt(),
                svt.total_variance().sqrt(),
                svt.t_split
            );
        }
    }

    // The optimum against a coarse sweep of the split.
    let delta = Sensitivity::new(1.0 / 18_089.0)?;
    println!();
    for t in [0.05, 0.1, 0.13, 0.2, 0.4] {
        let (s1, s2) = svt_sigmas(alpha, delta, eps, t);
        println!("t {t:.2}  sigma1 {s1:.6}  sigma2 {s2:.6}  total variance {:.4e}", s1 * s1 + s2 * s2);
    }
    let best = svt_calibrate(alpha, delta, eps)?;
    println!("optimum t {:.5} total variance {:.4e}", best.t_split, best.total_variance());
    Ok(())
}
