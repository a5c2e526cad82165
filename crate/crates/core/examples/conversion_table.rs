//! Ex-post RDP budgets and their approximate ex-post DP equivalents, plus
//! the Gaussian noise each budget needs for a unit-sensitivity query.
//!
//! Run with `cargo run --example conversion_table`.

use expost::accounting::{
    conversion_table_csv, gaussian_variance_for_rdp, log_spaced_schedule, rdp_to_adp, RenyiOrder, Sensitivity,
};

fn main() -> expost::Result<()> {
    let alpha = RenyiOrder::new(20.0)?;
    let schedule = log_spaced_schedule(0.01, 1.0, 7)?;
    print!("{}", conversion_table_csv(alpha, 1e-5, schedule.values())?);

    println!();
    println!("{:>8} {:>10} {:>10} {:>12}", "rdp eps", "adp 1e-5", "adp 1e-9", "sigma (d=1)");
    let unit = Sensitivity::new(1.0)?;
    for &eps in schedule.values() {
        let loose = rdp_to_adp(alpha, eps, 1e-5)?;
        let tight = rdp_to_adp(alpha, eps, 1e-9)?;
        let sd = gaussian_variance_for_rdp(alpha, unit, eps)?.finite().map_or(0.0, f64::sqrt);
        println!("{:>8.4} {:>10.4} {:>10.4} {:>12.4}", eps.value(), loose.epsilon, tight.epsilon, sd);
    }
    Ok(())
}
