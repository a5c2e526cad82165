use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use expost::accounting::{conversion_table_csv, RdpBudget, RenyiOrder, Sensitivity};
use expost::composition::{svt_calibrate, GaussianCheckConfig};
use expost::mechanisms::DiscretePairMechanism;
use expost::pipeline::{
    generate_dataset, load_and_discretize, parse_key_values, parse_schedule, records_to_csv, run_experiment,
    ExperimentConfig, Schema, DEFAULT_GENERATED_ROWS,
};
use expost::verification::{
    expost_rdp_lhs_exact, probabilistic_expost_violation_mass, renyi_divergence_exact, symmetric_violation_mass,
};
use expost::{Error, Result};

#[derive(Parser)]
#[command(name = "expost", version, about = "Ex-post Renyi DP accounting and accuracy-first release")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the ex-post RDP to approximate ex-post DP conversion table as CSV.
    Convert {
        #[arg(long)]
        alpha: Option<f64>,
        /// Target delta of the approximate guarantee.
        #[arg(long)]
        delta: Option<f64>,
        /// Comma-separated RDP budgets; overrides --schedule.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// `lo:hi:m` log-spaced budgets (default 0.01:1:7).
        #[arg(long)]
        schedule: Option<String>,
        /// key=value file with alpha, delta, schedule or eps; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a finite mechanism table: ex-post RDP left-hand side, Renyi
    /// divergence and probabilistic ex-post violation mass, for both
    /// orderings of the dataset pair. Exits with status 1 on a violation.
    ///
    /// The file has one outcome per line: `label p_X p_X' eps`.
    Verify {
        mechanism: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,20")]
        alpha: Vec<f64>,
        /// Level for the probabilistic check.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Noise scales of the two accuracy checkers for a validation set size.
    Calibrate {
        #[arg(long, default_value_t = 20.0)]
        alpha: f64,
        #[arg(long, default_value_t = 18089)]
        n_validation: usize,
        #[arg(long, default_value_t = 0.01)]
        eps_check: f64,
        /// Number of schedule budgets; the Gaussian check runs at most m - 1 times.
        #[arg(long, default_value_t = 7)]
        m: usize,
    },
    /// Run the accuracy-first synthetic data experiment and write per-step
    /// records as CSV.
    ///
    /// Without --data a generated census-like table is used. With --data the
    /// file is read with the Adult preprocessing (income label).
    ///
    /// The default threshold is 0.825. `--threshold auto` sets it to the
    /// midpoint between the noise-free validation accuracy of this pipeline
    /// and its mean validation accuracy at the lowest schedule budget, the
    /// latter averaged over ten releases on streams separate from the runs.
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Rows of the generated table when --data is absent.
        #[arg(long, default_value_t = DEFAULT_GENERATED_ROWS)]
        rows: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eps_query: Option<f64>,
        #[arg(long)]
        eps_check: Option<f64>,
        /// `lo:hi:m` or a comma-separated list.
        #[arg(long)]
        schedule: Option<String>,
        /// A number or `auto`.
        #[arg(long)]
        threshold: Option<String>,
        /// gaussian or svt.
        #[arg(long)]
        checker: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// key=value file with the same keys as the flags; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Parse(format!("{key} = {v:?}")))
}

fn convert(
    alpha: Option<f64>,
    delta: Option<f64>,
    eps: Option<Vec<f64>>,
    schedule: Option<String>,
    config: Option<PathBuf>,
) -> Result<String> {
    let (mut a, mut d, mut budgets) = (20.0, 1e-5, parse_schedule("0.01:1:7")?.as_f64());
    if let Some(path) = config {
        for (k, v) in parse_key_values(&read(&path)?)? {
            match k.as_str() {
                "alpha" => a = num(&k, &v)?,
                "delta" => d = num(&k, &v)?,
                "schedule" => budgets = parse_schedule(&v)?.as_f64(),
                "eps" => budgets = v.split(',').map(|x| num(&k, x.trim())).collect::<Result<_>>()?,
                _ => return Err(Error::InvalidArgument(format!("unknown config key {k:?}"))),
            }
        }
    }
    a = alpha.unwrap_or(a);
    d = delta.unwrap_or(d);
    if let Some(s) = schedule {
        budgets = parse_schedule(&s)?.as_f64();
    }
    if let Some(e) = eps {
        budgets = e;
    }
    let budgets = budgets.into_iter().map(RdpBudget::new).collect::<Result<Vec<_>>>()?;
    conversion_table_csv(RenyiOrder::new(a)?, d, &budgets)
}

fn verify(path: PathBuf, alphas: Vec<f64>, delta: f64) -> Result<bool> {
    let mech = DiscretePairMechanism::parse(&read(&path)?)?;
    let mut ok = true;
    println!("alpha,ordering,lhs,renyi_divergence,satisfied");
    for a in alphas {
        let alpha = RenyiOrder::new(a)?;
        for (name, m) in [("forward", mech.clone()), ("backward", mech.swapped())] {
            let v = expost_rdp_lhs_exact(&m, alpha);
            ok &= v.satisfied();
            println!("{a},{name},{},{},{}", v.lhs, renyi_divergence_exact(&m, alpha), v.satisfied());
        }
    }
    let mass = symmetric_violation_mass(&mech);
    println!(
        "violation mass: {} forward, {} backward; probabilistic ex-post private at delta {delta}: {}",
        probabilistic_expost_violation_mass(&mech),
        probabilistic_expost_violation_mass(&mech.swapped()),
        mass <= delta
    );
    Ok(ok && mass <= delta)
}

fn calibrate(alpha: f64, n_validation: usize, eps_check: f64, m: usize) -> Result<()> {
    let alpha = RenyiOrder::new(alpha)?;
    let delta = Sensitivity::new(1.0 / n_validation as f64)?;
    let eps = RdpBudget::new(eps_check)?;
    let g = GaussianCheckConfig::new(alpha, delta, m, eps, 0.0)?;
    println!("gaussian: checks {} variance {:e} sd {:e}", g.max_checks(), g.variance(), g.variance().sqrt());
    let s = svt_calibrate(alpha, delta, eps)?;
    println!(
        "svt: t {:.7} sigma1 {:e} sigma2 {:e} laplace_scale {:e} total_variance {:e} eps1 {:e} eps2 {:e}",
        s.t_split,
        s.sigma1,
        s.sigma2,
        s.laplace_scale(),
        s.total_variance(),
        s.eps_gaussian(),
        s.eps_laplace()
    );
    Ok(())
}

fn run(
    data: Option<PathBuf>,
    rows: usize,
    overrides: [(&str, Option<String>); 8],
    out: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = config {
        cfg.apply_config_text(&read(&path)?)?;
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    let dataset = match data {
        Some(path) => load_and_discretize(&path, &Schema::adult())?,
        None => generate_dataset(rows, cfg.seed)?,
    };
    log::info!("{} rows, {} columns", dataset.rows(), dataset.width());
    let output = run_experiment(&cfg, &dataset)?;
    match output.derivation {
        Some(d) => eprintln!(
            "threshold {} (non-DP accuracy {}, accuracy at eps {} {})",
            d.threshold,
            d.non_dp,
            cfg.schedule.first(),
            d.lowest_eps
        ),
        None => eprintln!("threshold {}", output.threshold),
    }
    let csv = records_to_csv(&output.records)?;
    match out {
        Some(path) => std::fs::write(&path, csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let result = match Cli::parse().command {
        Command::Convert { alpha, delta, eps, schedule, config } => {
            convert(alpha, delta, eps, schedule, config).map(|csv| print!("{csv}")).map(|_| true)
        }
        Command::Verify { mechanism, alpha, delta } => verify(mechanism, alpha, delta),
        Command::Calibrate { alpha, n_validation, eps_check, m } => calibrate(alpha, n_validation, eps_check, m).map(|_| true),
        Command::Run {
            data,
            rows,
            alpha,
            eps_query,
            eps_check,
            schedule,
            threshold,
            checker,
            repeats,
            seed,
            out,
            config,
        } => {
            let s = |x: Option<f64>| x.map(|v| v.to_string());
            let overrides = [
                ("alpha", s(alpha)),
                ("eps_query", s(eps_query)),
                ("eps_check", s(eps_check)),
                ("schedule", schedule),
                ("threshold", threshold),
                ("checker", checker),
                ("repeats", repeats.map(|r| r.to_string())),
                ("seed", seed.map(|r| r.to_string())),
            ];
            run(data, rows, overrides, out, config).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
