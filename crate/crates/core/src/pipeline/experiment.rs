use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::accounting::{log_spaced_schedule, total_with_stopping, EpsilonSchedule, RdpBudget, RenyiOrder, Sensitivity};
use crate::composition::{
    run_accuracy_first, svt_calibrate, AccuracyStopper, BrownianBase, DisjointSplit, GaussianCheck, GaussianCheckConfig,
    ScheduleSelector, Subset, SvtCheck, SvtCheckConfig, ThresholdCheck,
};
use crate::error::{Error, Result};
use crate::noise_reduction::NoiseReductionSession;
use crate::{derived_rng, Rng};

use super::dataset::{split, CategoricalDataset, SplitIndices};
use super::marginals::{evaluate_marginals, flatten, label_pair_queries, unflatten, MarginalQuery};
use super::synth::{NaiveBayes, NaiveBayesSampler};

pub const SYNTH_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckerKind {
    Gaussian,
    Svt,
}

impl FromStr for CheckerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(CheckerKind::Gaussian),
            "svt" => Ok(CheckerKind::Svt),
            other => Err(Error::Parse(format!("unknown checker {other:?}, expected gaussian or svt"))),
        }
    }
}

impl fmt::Display for CheckerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckerKind::Gaussian => "gaussian",
            CheckerKind::Svt => "svt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Midpoint of the noise-free accuracy and the accuracy at the lowest
    /// budget, see [`derive_threshold`].
    Auto,
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        let t: f64 = s.parse().map_err(|_| Error::Parse(format!("threshold {s:?}")))?;
        if !t.is_finite() {
            return Err(Error::Parse(format!("threshold {s:?}")));
        }
        Ok(Threshold::Fixed(t))
    }
}

/// `lo:hi:m` for `m` log-spaced budgets, or a comma-separated list.
pub fn parse_schedule(s: &str) -> Result<EpsilonSchedule> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("schedule value {x:?}")));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, m] => {
            let m: usize = m.trim().parse().map_err(|_| Error::Parse(format!("schedule length {m:?}")))?;
            log_spaced_schedule(num(lo)?, num(hi)?, m)
        }
        [list] => EpsilonSchedule::new(list.split(',').map(num).collect::<Result<_>>()?),
        _ => Err(Error::Parse(format!("schedule {s:?}, expected lo:hi:m"))),
    }
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key=value", n + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub alpha: RenyiOrder,
    pub eps_query: f64,
    pub eps_check: RdpBudget,
    pub schedule: EpsilonSchedule,
    pub threshold: Threshold,
    pub repeats: usize,
    pub checker: CheckerKind,
    pub seed: u64,
    /// Synthetic datasets averaged per accuracy evaluation.
    pub synth_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: RenyiOrder::new(20.0).expect("valid"),
            eps_query: 0.01,
            eps_check: RdpBudget::new(0.01).expect("valid"),
            schedule: log_spaced_schedule(0.01, 1.0, 7).expect("valid"),
            threshold: Threshold::Fixed(0.825),
            repeats: 50,
            checker: CheckerKind::Gaussian,
            seed: 0,
            synth_repeats: SYNTH_REPEATS,
        }
    }
}

impl ExperimentConfig {
    /// Applies the pairs of a [`parse_key_values`] file.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_key_values(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let float = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("{key} = {v:?}")));
        let int = |v: &str| v.parse::<u64>().map_err(|_| Error::Parse(format!("{key} = {v:?}")));
        match key.replace('-', "_").as_str() {
            "alpha" => self.alpha = RenyiOrder::new(float(value)?)?,
            "eps_query" => self.eps_query = RdpBudget::new(float(value)?)?.value(),
            "eps_check" => self.eps_check = RdpBudget::new(float(value)?)?,
            "schedule" => self.schedule = parse_schedule(value)?,
            "threshold" => self.threshold = value.parse()?,
            "repeats" => self.repeats = int(value)? as usize,
            "checker" => self.checker = value.parse()?,
            "seed" => self.seed = int(value)?,
            "synth_repeats" => self.synth_repeats = int(value)? as usize,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

/// Dataset split and the clean marginals of the training part, fixed for
/// all repeats.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub indices: SplitIndices,
    pub split: DisjointSplit<CategoricalDataset>,
    pub test: CategoricalDataset,
    pub queries: Vec<MarginalQuery>,
    pub clean: Vec<f64>,
    pub sensitivity: Sensitivity,
}

impl PreparedData {
    pub fn new(dataset: &CategoricalDataset, split_seed: u64) -> Result<Self> {
        let indices = split(dataset, split_seed)?;
        let dsplit = DisjointSplit::new(dataset, &indices.train, &indices.validation)?;
        let test = dataset.subset(&indices.test);
        for (part, name) in [(dsplit.train(), "train"), (dsplit.validation(), "validation"), (&test, "test")] {
            if part.rows() == 0 {
                return Err(Error::EmptyData(format!("{name} split is empty")));
            }
        }
        let queries = label_pair_queries(dataset)?;
        let (tables, sensitivity) = evaluate_marginals(dsplit.train(), &queries)?;
        Ok(PreparedData { indices, split: dsplit, test, queries, clean: flatten(&tables), sensitivity })
    }

    /// Sensitivity of a validation accuracy, `1 / n_validation`.
    pub fn delta_acc(&self) -> Result<Sensitivity> {
        Sensitivity::new(1.0 / self.split.validation().rows() as f64)
    }

    /// Mean validation and test accuracy of classifiers trained on
    /// `synth_repeats` synthetic datasets drawn from `release`.
    pub fn evaluate(&self, release: &[f64], synth_repeats: usize, rng: &mut Rng) -> Result<(f64, f64)> {
        evaluate_on(self.split.train(), self.split.validation(), &self.test, &self.queries, release, synth_repeats, rng)
    }
}

fn evaluate_on(
    train: &CategoricalDataset,
    validation: &CategoricalDataset,
    test: &CategoricalDataset,
    queries: &[MarginalQuery],
    release: &[f64],
    synth_repeats: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if synth_repeats == 0 {
        return Err(Error::InvalidArgument("synth_repeats must be positive".into()));
    }
    let tables = unflatten(queries, release)?;
    let sampler = NaiveBayesSampler::from_marginals(train, &tables)?;
    let (mut val, mut tst) = (0.0, 0.0);
    for _ in 0..synth_repeats {
        let model = NaiveBayes::fit(&sampler.sample(train.rows(), rng))?;
        val += model.accuracy(validation)?;
        tst += model.accuracy(test)?;
    }
    Ok((val / synth_repeats as f64, tst / synth_repeats as f64))
}

/// One row of the experiment output: one schedule step of one repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub repeat: usize,
    pub checker: String,
    pub step: usize,
    pub eps_step: f64,
    pub eps_cum: f64,
    /// Checker's noisy accuracy; `None` where the checker was not consulted.
    pub noisy_val_acc: Option<f64>,
    pub clean_val_acc: f64,
    /// Whether the checker has halted at or before this step.
    pub halted: bool,
    /// Budget of the accepted release; `None` when the schedule was exhausted.
    pub accepted_eps: Option<f64>,
    pub test_acc: f64,
    /// `eps_query + max(eps_cum, eps_check)`, the total cost of stopping here.
    pub eps_total: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "repeat",
    "checker",
    "step",
    "eps_step",
    "eps_cum",
    "noisy_val_acc",
    "clean_val_acc",
    "halted",
    "accepted_eps",
    "test_acc",
    "eps_total",
];

pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.repeat.to_string(),
            r.checker.clone(),
            r.step.to_string(),
            r.eps_step.to_string(),
            r.eps_cum.to_string(),
            r.noisy_val_acc.map(|x| x.to_string()).unwrap_or_default(),
            r.clean_val_acc.to_string(),
            r.halted.to_string(),
            r.accepted_eps.map(|x| x.to_string()).unwrap_or_else(|| "exhausted".into()),
            r.test_acc.to_string(),
            r.eps_total.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Per-repeat outcome extracted from the records.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub accepted_eps: Option<f64>,
    /// Budget charged for the noise reduction: the accepted level, or the
    /// last schedule level when exhausted.
    pub charged_eps: f64,
    pub eps_total: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

pub fn summarize(records: &[RunRecord]) -> Vec<RepeatSummary> {
    let mut out: Vec<RepeatSummary> = Vec::new();
    for r in records {
        if out.last().map(|s| s.repeat) != Some(r.repeat) {
            out.push(RepeatSummary {
                repeat: r.repeat,
                accepted_eps: r.accepted_eps,
                charged_eps: f64::NAN,
                eps_total: f64::NAN,
                val_acc: f64::NAN,
                test_acc: f64::NAN,
            });
        }
        let s = out.last_mut().expect("pushed above");
        let charged_here = match r.accepted_eps {
            Some(eps) => r.eps_cum == eps,
            None => true,
        };
        if charged_here {
            s.charged_eps = r.eps_cum;
            s.eps_total = r.eps_total;
            s.val_acc = r.clean_val_acc;
            s.test_acc = r.test_acc;
        }
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdDerivation {
    pub non_dp: f64,
    pub lowest_eps: f64,
    pub threshold: f64,
}

const THRESHOLD_DRAWS: usize = 10;
const THRESHOLD_STREAM: u64 = 1 << 40;

/// Midpoint of the validation accuracy without noise and the mean validation
/// accuracy at the lowest schedule budget over ten releases. Uses random
/// streams disjoint from the experiment's.
pub fn derive_threshold(cfg: &ExperimentConfig, prepared: &PreparedData) -> Result<ThresholdDerivation> {
    let mut rng = derived_rng(cfg.seed, THRESHOLD_STREAM);
    let (non_dp, _) = prepared.evaluate(&prepared.clean, cfg.synth_repeats, &mut rng)?;
    let mut total = 0.0;
    for k in 0..THRESHOLD_DRAWS {
        let mut noise_rng = derived_rng(cfg.seed, THRESHOLD_STREAM + 1 + k as u64);
        let mut session = NoiseReductionSession::new(prepared.clean.clone(), prepared.sensitivity, cfg.alpha);
        let release = session.brownian_release(cfg.schedule.first(), &mut noise_rng)?.payload;
        total += prepared.evaluate(&release, cfg.synth_repeats, &mut rng)?.0;
    }
    let lowest_eps = total / THRESHOLD_DRAWS as f64;
    Ok(ThresholdDerivation { non_dp, lowest_eps, threshold: (non_dp + lowest_eps) / 2.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub threshold: f64,
    pub derivation: Option<ThresholdDerivation>,
    pub records: Vec<RunRecord>,
}

pub fn resolve_threshold(cfg: &ExperimentConfig, prepared: &PreparedData) -> Result<(f64, Option<ThresholdDerivation>)> {
    match cfg.threshold {
        Threshold::Fixed(t) => Ok((t, None)),
        Threshold::Auto => {
            let d = derive_threshold(cfg, prepared)?;
            Ok((d.threshold, Some(d)))
        }
    }
}

/// Splits `dataset` with the experiment seed and runs every repeat with the
/// configured checker.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &CategoricalDataset) -> Result<ExperimentOutput> {
    let prepared = PreparedData::new(dataset, cfg.seed)?;
    run_prepared(cfg, &prepared)
}

pub fn run_prepared(cfg: &ExperimentConfig, prepared: &PreparedData) -> Result<ExperimentOutput> {
    let (threshold, derivation) = resolve_threshold(cfg, prepared)?;
    let delta_acc = prepared.delta_acc()?;
    let records = match cfg.checker {
        CheckerKind::Gaussian => {
            let gc = GaussianCheckConfig::new(cfg.alpha, delta_acc, cfg.schedule.len(), cfg.eps_check, threshold)?;
            run_with_checker(cfg, prepared, "gaussian", |_| Ok(Box::new(GaussianCheck::new(gc))))?
        }
        CheckerKind::Svt => {
            let sc: SvtCheckConfig = svt_calibrate(cfg.alpha, delta_acc, cfg.eps_check)?.with_threshold(threshold);
            run_with_checker(cfg, prepared, "svt", |rng| Ok(Box::new(SvtCheck::new(sc, rng)?)))?
        }
    };
    Ok(ExperimentOutput { threshold, derivation, records })
}

/// Runs every repeat with a checker built by `make_checker` from the
/// repeat's checker stream.
///
/// Each repeat releases the marginals with Brownian noise reduction along
/// the schedule until the checker halts. The releases after a halt are
/// still drawn and scored, without consulting the checker, so that every
/// repeat reports accuracy at every budget; they are not part of the
/// accepted output.
pub fn run_with_checker<F>(
    cfg: &ExperimentConfig,
    prepared: &PreparedData,
    checker_name: &str,
    make_checker: F,
) -> Result<Vec<RunRecord>>
where
    F: Fn(&mut Rng) -> Result<Box<dyn ThresholdCheck>> + Sync,
{
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let per_repeat = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(cfg, prepared, checker_name, &make_checker, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_repeat.into_iter().flatten().collect())
}

fn run_repeat<F>(
    cfg: &ExperimentConfig,
    prepared: &PreparedData,
    checker_name: &str,
    make_checker: &F,
    repeat: usize,
) -> Result<Vec<RunRecord>>
where
    F: Fn(&mut Rng) -> Result<Box<dyn ThresholdCheck>>,
{
    let stream = 3 * repeat as u64;
    let mut synth_rng = derived_rng(cfg.seed, stream + 1);
    let mut check_rng = derived_rng(cfg.seed, stream + 2);
    let session = NoiseReductionSession::new(prepared.clean.clone(), prepared.sensitivity, cfg.alpha);
    let mut base = BrownianBase::new(session, derived_rng(cfg.seed, stream));
    let mut selector = ScheduleSelector::new(&cfg.schedule);
    let k = cfg.schedule.len();

    let checker = make_checker(&mut check_rng)?;
    let mut evals: Vec<(f64, f64)> = Vec::with_capacity(k);
    let (result, log) = {
        let score = |validation: &CategoricalDataset, release: &Vec<f64>| -> Result<f64> {
            let e = evaluate_on(
                prepared.split.train(),
                validation,
                &prepared.test,
                &prepared.queries,
                release,
                cfg.synth_repeats,
                &mut synth_rng,
            )?;
            evals.push(e);
            Ok(e.0)
        };
        let mut stopper = AccuracyStopper::new(score, checker);
        let result = run_accuracy_first(&prepared.split, &mut base, &mut selector, &mut stopper, k, &mut check_rng)?;
        (result, stopper.into_parts().2)
    };
    for release in &result.outputs[evals.len()..] {
        evals.push(prepared.evaluate(release, cfg.synth_repeats, &mut synth_rng)?);
    }
    for &eps in &cfg.schedule.values()[result.t..] {
        let release = base.release_next(eps)?;
        evals.push(prepared.evaluate(&release, cfg.synth_repeats, &mut synth_rng)?);
    }

    let accepted_eps = result.halted.then(|| result.eps_chosen[result.t - 1].value());
    let levels = cfg.schedule.as_f64();
    Ok((0..k)
        .map(|i| {
            let eps_cum = levels[i];
            let charged = total_with_stopping(&[cfg.schedule.values()[i]], cfg.eps_check);
            RunRecord {
                repeat,
                checker: checker_name.to_string(),
                step: i + 1,
                eps_step: if i == 0 { eps_cum } else { eps_cum - levels[i - 1] },
                eps_cum,
                noisy_val_acc: log.get(i).map(|(_, o)| o.noisy_value),
                clean_val_acc: evals[i].0,
                halted: result.halted && i + 1 >= result.t,
                accepted_eps,
                test_acc: evals[i].1,
                eps_total: cfg.eps_query + charged.value(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::{AlwaysHalt, NeverHalt};
    use crate::pipeline::dataset::generate_dataset;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig { repeats: 3, synth_repeats: 2, seed: 4, ..ExperimentConfig::default() }
    }

    fn prepared() -> PreparedData {
        PreparedData::new(&generate_dataset(3000, 1).unwrap(), 4).unwrap()
    }

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.alpha.value(), 20.0);
        assert_eq!(c.eps_query, 0.01);
        assert_eq!(c.eps_check.value(), 0.01);
        assert_eq!(c.schedule.len(), 7);
        assert_eq!(c.threshold, Threshold::Fixed(0.825));
        assert_eq!(c.repeats, 50);
    }

    #[test]
    fn config_text_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_config_text("# comment\nalpha = 10\nschedule=0.1:1:3\nthreshold = auto\nchecker=svt\n\nseed=9 # trailing\n")
            .unwrap();
        assert_eq!(c.alpha.value(), 10.0);
        assert_eq!(c.schedule.len(), 3);
        assert_eq!(c.threshold, Threshold::Auto);
        assert_eq!(c.checker, CheckerKind::Svt);
        assert_eq!(c.seed, 9);
        assert!(c.apply_config_text("colour=blue").is_err());
        assert!(c.apply_config_text("alpha").is_err());
        assert!(c.apply_config_text("alpha=1").is_err());
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(parse_schedule("0.01:1:7").unwrap(), log_spaced_schedule(0.01, 1.0, 7).unwrap());
        assert_eq!(parse_schedule("0.1,0.5").unwrap().as_f64(), vec![0.1, 0.5]);
        assert!(parse_schedule("1:2").is_err());
    }

    #[test]
    fn never_halt_exhausts() {
        let p = prepared();
        let cfg = small_cfg();
        let recs = run_with_checker(&cfg, &p, "never", |_| Ok(Box::new(NeverHalt))).unwrap();
        assert_eq!(recs.len(), 3 * 7);
        for s in summarize(&recs) {
            assert_eq!(s.accepted_eps, None);
            assert_eq!(s.charged_eps, 1.0);
            assert_eq!(s.eps_total, 1.01);
        }
        assert!(recs.iter().all(|r| !r.halted));
        assert!(recs.iter().filter(|r| r.step == 7).all(|r| r.noisy_val_acc.is_none()));
        assert!(recs.iter().filter(|r| r.step < 7).all(|r| r.noisy_val_acc.is_some()));
    }

    #[test]
    fn always_halt_accepts_first() {
        let p = prepared();
        let cfg = small_cfg();
        let recs = run_with_checker(&cfg, &p, "always", |_| Ok(Box::new(AlwaysHalt))).unwrap();
        for s in summarize(&recs) {
            assert_eq!(s.accepted_eps, Some(0.01));
            assert_eq!(s.eps_total, 0.02);
        }
        assert!(recs.iter().all(|r| r.halted));
        assert!(recs.iter().filter(|r| r.step > 1).all(|r| r.noisy_val_acc.is_none()));
    }

    #[test]
    fn records_satisfy_total_identity() {
        let p = prepared();
        let mut cfg = small_cfg();
        cfg.threshold = Threshold::Auto;
        let out = run_prepared(&cfg, &p).unwrap();
        let sched = cfg.schedule.as_f64();
        for r in &out.records {
            assert_eq!(r.eps_total, cfg.eps_query + r.eps_cum);
            if let Some(a) = r.accepted_eps {
                assert!(sched.contains(&a));
            }
        }
        let d = out.derivation.unwrap();
        assert_eq!(out.threshold, (d.non_dp + d.lowest_eps) / 2.0);
    }

    #[test]
    fn reruns_are_identical() {
        let p = prepared();
        let cfg = ExperimentConfig { checker: CheckerKind::Svt, threshold: Threshold::Fixed(0.8), ..small_cfg() };
        let a = records_to_csv(&run_prepared(&cfg, &p).unwrap().records).unwrap();
        let b = records_to_csv(&run_prepared(&cfg, &p).unwrap().records).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("repeat,checker,step,eps_step,eps_cum,noisy_val_acc,clean_val_acc,halted,accepted_eps,test_acc,eps_total\n"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
