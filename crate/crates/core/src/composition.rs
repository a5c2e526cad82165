//! Adaptive composition with a data-dependent stopping rule.
//!
//! [`run_accuracy_first`] alternates between a base mechanism that sees only
//! the training split and a stopping rule that sees only the validation
//! split. The run reports `max(sum of step budgets, stopping budget)` as its
//! total ex-post bound.
//!
//! Two accuracy checks are provided as stopping rules: a composition of
//! plain Gaussian releases of the accuracy ([`GaussianCheck`]) and a sparse
//! vector check with Gaussian threshold noise and Laplace query noise
//! ([`SvtCheck`]).

use std::collections::HashSet;

use crate::accounting::{
    gaussian_variance_for_rdp, total_with_stopping, EpsilonSchedule, RdpBudget, RenyiOrder, Sensitivity, Variance,
};
use crate::error::{Error, Result};
use crate::mechanisms::{sample_gaussian, sample_laplace, Draw};
use crate::noise_reduction::NoiseReductionSession;
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Halt,
    Continue,
}

/// How the budgets chosen by a selector are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    /// Each step costs the budget it was given.
    PerStep,
    /// Budgets are cumulative levels of a noise-reduction sequence; a step
    /// costs the increase over the previous level.
    Cumulative,
}

/// Datasets that can be restricted to a subset of their rows.
pub trait Subset: Sized {
    fn row_count(&self) -> usize;
    fn subset(&self, rows: &[usize]) -> Self;
}

impl<T: Clone> Subset for Vec<T> {
    fn row_count(&self) -> usize {
        self.len()
    }

    fn subset(&self, rows: &[usize]) -> Self {
        rows.iter().map(|&i| self[i].clone()).collect()
    }
}

/// Training and validation parts of one dataset, guaranteed disjoint.
#[derive(Debug, Clone)]
pub struct DisjointSplit<D> {
    train: D,
    validation: D,
}

impl<D: Subset> DisjointSplit<D> {
    pub fn new(data: &D, train_rows: &[usize], validation_rows: &[usize]) -> Result<Self> {
        let n = data.row_count();
        let mut seen = HashSet::with_capacity(train_rows.len());
        for &r in train_rows {
            if r >= n {
                return Err(Error::InvalidArgument(format!("row {r} out of range for {n} rows")));
            }
            seen.insert(r);
        }
        for &r in validation_rows {
            if r >= n {
                return Err(Error::InvalidArgument(format!("row {r} out of range for {n} rows")));
            }
            if seen.contains(&r) {
                return Err(Error::OverlappingSplits(r));
            }
        }
        Ok(DisjointSplit { train: data.subset(train_rows), validation: data.subset(validation_rows) })
    }
}

impl<D> DisjointSplit<D> {
    pub fn train(&self) -> &D {
        &self.train
    }

    pub fn validation(&self) -> &D {
        &self.validation
    }
}

/// A mechanism parameterised by its privacy budget.
pub trait BaseMechanism<D> {
    type Output: Clone;

    fn budget_mode(&self) -> BudgetMode {
        BudgetMode::PerStep
    }

    fn release(&mut self, train: &D, eps: RdpBudget, history: &[Self::Output]) -> Result<Self::Output>;
}

/// Chooses the next budget from the released outputs and the budgets chosen
/// so far.
pub trait BudgetSelector<Y> {
    fn select(&mut self, outputs: &[Y], chosen: &[RdpBudget]) -> Result<RdpBudget>;
}

impl<Y, F> BudgetSelector<Y> for F
where
    F: FnMut(&[Y], &[RdpBudget]) -> RdpBudget,
{
    fn select(&mut self, outputs: &[Y], chosen: &[RdpBudget]) -> Result<RdpBudget> {
        Ok(self(outputs, chosen))
    }
}

/// Walks a fixed list of budgets, repeating the last one when exhausted.
#[derive(Debug, Clone)]
pub struct ScheduleSelector {
    values: Vec<RdpBudget>,
}

impl ScheduleSelector {
    pub fn new(schedule: &EpsilonSchedule) -> Self {
        ScheduleSelector { values: schedule.values().to_vec() }
    }
}

impl<Y> BudgetSelector<Y> for ScheduleSelector {
    fn select(&mut self, _outputs: &[Y], chosen: &[RdpBudget]) -> Result<RdpBudget> {
        let i = chosen.len().min(self.values.len() - 1);
        Ok(self.values[i])
    }
}

/// A private rule that decides whether to stop after each output.
pub trait StoppingRule<D, Y> {
    /// RDP budget of the whole rule across a run.
    fn epsilon(&self) -> RdpBudget;
    fn check(&mut self, validation: &D, output: &Y, rng: &mut Rng) -> Result<Decision>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionResult<Y> {
    pub t: usize,
    pub outputs: Vec<Y>,
    /// Budget charged for each step.
    pub eps_steps: Vec<RdpBudget>,
    /// Budget chosen by the selector at each step; equals `eps_steps` in
    /// per-step mode and holds the cumulative levels in cumulative mode.
    pub eps_chosen: Vec<RdpBudget>,
    pub eps_total: RdpBudget,
    /// Whether the stopping rule halted, as opposed to reaching the cap.
    pub halted: bool,
}

/// Runs adaptive composition with a data-dependent stopping rule.
///
/// The stopping rule is consulted after every output except the one at the
/// iteration cap, where the run ends regardless. A selector encodes early
/// stopping in per-step mode by returning zero, and in cumulative mode by
/// repeating the previous level.
pub fn run_accuracy_first<D, B, S, T>(
    split: &DisjointSplit<D>,
    base: &mut B,
    selector: &mut S,
    stopper: &mut T,
    max_iters: usize,
    rng: &mut Rng,
) -> Result<CompositionResult<B::Output>>
where
    B: BaseMechanism<D>,
    S: BudgetSelector<B::Output>,
    T: StoppingRule<D, B::Output>,
{
    if max_iters < 1 {
        return Err(Error::InvalidArgument("iteration cap must be at least 1".into()));
    }
    let mode = base.budget_mode();
    let mut outputs = Vec::new();
    let mut eps_steps = Vec::new();
    let mut eps_chosen: Vec<RdpBudget> = Vec::new();
    let mut halted = false;

    for i in 1..=max_iters {
        let eps = selector.select(&outputs, &eps_chosen)?;
        if eps.is_infinite() {
            return Err(Error::InvalidBudget(eps.value()));
        }
        let step = match mode {
            BudgetMode::PerStep => eps,
            BudgetMode::Cumulative => {
                let previous = eps_chosen.last().copied().unwrap_or(RdpBudget::ZERO);
                if eps < previous {
                    return Err(Error::DecreasingBudget { previous: previous.value(), requested: eps.value() });
                }
                RdpBudget::new(eps.value() - previous.value())?
            }
        };
        let y = base.release(split.train(), eps, &outputs)?;
        outputs.push(y);
        eps_steps.push(step);
        eps_chosen.push(eps);
        if i == max_iters {
            break;
        }
        let last = outputs.last().expect("just pushed");
        if stopper.check(split.validation(), last, rng)? == Decision::Halt {
            halted = true;
            break;
        }
    }

    let eps_total = match mode {
        BudgetMode::PerStep => total_with_stopping(&eps_steps, stopper.epsilon()),
        // The increments telescope to the last level.
        BudgetMode::Cumulative => {
            let last = eps_chosen.last().copied().unwrap_or(RdpBudget::ZERO);
            total_with_stopping(&[last], stopper.epsilon())
        }
    };
    Ok(CompositionResult { t: outputs.len(), outputs, eps_steps, eps_chosen, eps_total, halted })
}

/// Plain Gaussian mechanism on a vector query, one independent release per
/// step.
pub struct GaussianBase<F> {
    query: F,
    alpha: RenyiOrder,
    delta: Sensitivity,
    rng: Rng,
}

impl<F> GaussianBase<F> {
    pub fn new(query: F, alpha: RenyiOrder, delta: Sensitivity, rng: Rng) -> Self {
        GaussianBase { query, alpha, delta, rng }
    }
}

impl<D, F> BaseMechanism<D> for GaussianBase<F>
where
    F: Fn(&D) -> Vec<f64>,
{
    /// `None` for a zero-budget step, which releases nothing.
    type Output = Option<Vec<f64>>;

    fn release(&mut self, train: &D, eps: RdpBudget, _history: &[Self::Output]) -> Result<Self::Output> {
        let variance = gaussian_variance_for_rdp(self.alpha, self.delta, eps)?;
        Ok(match sample_gaussian(&(self.query)(train), variance, &mut self.rng)? {
            Draw::Value(v) => Some(v),
            Draw::ZeroWeight => None,
        })
    }
}

/// Brownian noise reduction of a fixed sensitive vector, driven by
/// cumulative budgets.
pub struct BrownianBase {
    session: NoiseReductionSession,
    rng: Rng,
}

impl BrownianBase {
    pub fn new(session: NoiseReductionSession, rng: Rng) -> Self {
        BrownianBase { session, rng }
    }

    pub fn session(&self) -> &NoiseReductionSession {
        &self.session
    }

    /// Continues the sequence outside a composition run.
    pub fn release_next(&mut self, eps: RdpBudget) -> Result<Vec<f64>> {
        Ok(self.session.brownian_release(eps, &mut self.rng)?.payload)
    }
}

impl<D> BaseMechanism<D> for BrownianBase {
    type Output = Vec<f64>;

    fn budget_mode(&self) -> BudgetMode {
        BudgetMode::Cumulative
    }

    fn release(&mut self, _train: &D, eps: RdpBudget, _history: &[Self::Output]) -> Result<Self::Output> {
        self.release_next(eps)
    }
}

/// Result of one accuracy check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub decision: Decision,
    /// Accuracy after the check's noise.
    pub noisy_value: f64,
}

/// A private comparison of an accuracy against a threshold.
pub trait ThresholdCheck {
    fn epsilon(&self) -> RdpBudget;
    fn check(&mut self, accuracy: f64, rng: &mut Rng) -> Result<CheckOutcome>;
}

/// Check that never halts and costs nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverHalt;

/// Check that always halts and costs nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysHalt;

impl ThresholdCheck for NeverHalt {
    fn epsilon(&self) -> RdpBudget {
        RdpBudget::ZERO
    }
    fn check(&mut self, accuracy: f64, _rng: &mut Rng) -> Result<CheckOutcome> {
        Ok(CheckOutcome { decision: Decision::Continue, noisy_value: accuracy })
    }
}

impl ThresholdCheck for AlwaysHalt {
    fn epsilon(&self) -> RdpBudget {
        RdpBudget::ZERO
    }
    fn check(&mut self, accuracy: f64, _rng: &mut Rng) -> Result<CheckOutcome> {
        Ok(CheckOutcome { decision: Decision::Halt, noisy_value: accuracy })
    }
}

impl<T: ThresholdCheck + ?Sized> ThresholdCheck for Box<T> {
    fn epsilon(&self) -> RdpBudget {
        (**self).epsilon()
    }
    fn check(&mut self, accuracy: f64, rng: &mut Rng) -> Result<CheckOutcome> {
        (**self).check(accuracy, rng)
    }
}

/// Parameters of the plain Gaussian accuracy check. The budget `eps_check`
/// is split evenly over at most `m - 1` checks, where `m` is the number of
/// budgets in the release schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCheckConfig {
    pub alpha: RenyiOrder,
    pub delta_acc: Sensitivity,
    pub m: usize,
    pub eps_check: RdpBudget,
    pub threshold: f64,
}

impl GaussianCheckConfig {
    pub fn new(
        alpha: RenyiOrder,
        delta_acc: Sensitivity,
        m: usize,
        eps_check: RdpBudget,
        threshold: f64,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("need m >= 2 schedule points, got {m}")));
        }
        if eps_check.value() <= 0.0 {
            return Err(Error::InvalidBudget(eps_check.value()));
        }
        if !threshold.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold {threshold}")));
        }
        Ok(GaussianCheckConfig { alpha, delta_acc, m, eps_check, threshold })
    }

    pub fn max_checks(&self) -> usize {
        self.m - 1
    }

    /// `alpha * delta_acc^2 * (m - 1) / (2 eps_check)`.
    pub fn variance(&self) -> f64 {
        let per_check = RdpBudget::new(self.eps_check.value() / self.max_checks() as f64)
            .expect("positive budget");
        match gaussian_variance_for_rdp(self.alpha, self.delta_acc, per_check).expect("validated inputs") {
            Variance::Finite(v) => v,
            Variance::Infinite => f64::INFINITY,
        }
    }
}

/// Plain Gaussian accuracy check: halts iff `accuracy + N(0, variance) >= threshold`.
#[derive(Debug, Clone)]
pub struct GaussianCheck {
    cfg: GaussianCheckConfig,
    used: usize,
}

impl GaussianCheck {
    pub fn new(cfg: GaussianCheckConfig) -> Self {
        GaussianCheck { cfg, used: 0 }
    }

    pub fn config(&self) -> &GaussianCheckConfig {
        &self.cfg
    }

    pub fn invocations(&self) -> usize {
        self.used
    }
}

impl ThresholdCheck for GaussianCheck {
    fn epsilon(&self) -> RdpBudget {
        self.cfg.eps_check
    }

    fn check(&mut self, accuracy: f64, rng: &mut Rng) -> Result<CheckOutcome> {
        if self.used >= self.cfg.max_checks() {
            return Err(Error::CheckBudgetExhausted(self.used));
        }
        self.used += 1;
        let noisy = match sample_gaussian(&[accuracy], Variance::Finite(self.cfg.variance()), rng)? {
            Draw::Value(v) => v[0],
            Draw::ZeroWeight => unreachable!("finite variance"),
        };
        let decision = if noisy >= self.cfg.threshold { Decision::Halt } else { Decision::Continue };
        Ok(CheckOutcome { decision, noisy_value: noisy })
    }
}

/// Parameters of the sparse vector check. `sigma1` is the standard deviation
/// of the Gaussian threshold noise and `sigma2` the standard deviation of the
/// Laplace noise added to each accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvtCheckConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Fraction of the total variance carried by the threshold noise.
    pub t_split: f64,
    pub alpha: RenyiOrder,
    pub delta_acc: Sensitivity,
    pub eps_check: RdpBudget,
    pub threshold: f64,
}

impl SvtCheckConfig {
    /// RDP cost of the threshold noise, `alpha delta^2 / (2 sigma1^2)`.
    pub fn eps_gaussian(&self) -> f64 {
        let d = self.delta_acc.value();
        self.alpha.value() * d * d / (2.0 * self.sigma1 * self.sigma1)
    }

    /// Pure DP cost of the query noise at sensitivity `2 delta`, `2 sqrt(2) delta / sigma2`.
    pub fn eps_laplace(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.delta_acc.value() / self.sigma2
    }

    pub fn total_variance(&self) -> f64 {
        self.sigma1 * self.sigma1 + self.sigma2 * self.sigma2
    }

    /// Laplace scale `b` with `2 b^2 = sigma2^2`.
    pub fn laplace_scale(&self) -> f64 {
        self.sigma2 / std::f64::consts::SQRT_2
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Noise-free comparison, the limit of an unbounded check budget.
    pub fn noiseless(threshold: f64) -> Self {
        SvtCheckConfig {
            sigma1: 0.0,
            sigma2: 0.0,
            t_split: 0.5,
            alpha: RenyiOrder::new(2.0).expect("valid"),
            delta_acc: Sensitivity::new(1.0).expect("valid"),
            eps_check: RdpBudget::INFINITE,
            threshold,
        }
    }
}

/// Threshold-noise standard deviation for variance split `t`: the positive
/// root of `eps s^2 - (2 sqrt(2) delta / t') s - alpha delta^2 / 2 = 0` with
/// `t' = sqrt((1 - t) / t)`. Returns `(sigma1, sigma2)`.
pub fn svt_sigmas(alpha: RenyiOrder, delta_acc: Sensitivity, eps_check: RdpBudget, t: f64) -> (f64, f64) {
    let d = delta_acc.value();
    let eps = eps_check.value();
    let t_prime = ((1.0 - t) / t).sqrt();
    let b = 2.0 * std::f64::consts::SQRT_2 * d / t_prime;
    let c = alpha.value() * d * d / 2.0;
    let sigma1 = (b + (b * b + 4.0 * eps * c).sqrt()) / (2.0 * eps);
    (sigma1, sigma1 * t_prime)
}

const SPLIT_TOLERANCE: f64 = 1e-6;

/// Chooses the variance split of the sparse vector check that minimises the
/// total noise variance subject to spending exactly `eps_check`.
///
/// A coarse scan brackets the minimum and golden-section search refines it
/// to [`SPLIT_TOLERANCE`] in `t`.
pub fn svt_calibrate(alpha: RenyiOrder, delta_acc: Sensitivity, eps_check: RdpBudget) -> Result<SvtCheckConfig> {
    let eps = eps_check.value();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidBudget(eps));
    }
    let objective = |t: f64| {
        let (s1, s2) = svt_sigmas(alpha, delta_acc, eps_check, t);
        s1 * s1 + s2 * s2
    };

    const SCAN: usize = 100;
    let grid: Vec<f64> = (1..SCAN).map(|i| i as f64 / SCAN as f64).collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| (i, objective(t)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NonConvergence("objective not finite on scan grid".into()))?;
    let mut lo = if best == 0 { grid[0] / 2.0 } else { grid[best - 1] };
    let mut hi = if best + 1 == grid.len() { (1.0 + grid[best]) / 2.0 } else { grid[best + 1] };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    let mut iterations = 0;
    while hi - lo > SPLIT_TOLERANCE {
        iterations += 1;
        if iterations > 200 || !(f1.is_finite() && f2.is_finite()) {
            return Err(Error::NonConvergence(format!("bracket [{lo}, {hi}] after {iterations} steps")));
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    let t = (lo + hi) / 2.0;
    if t <= SPLIT_TOLERANCE || t >= 1.0 - SPLIT_TOLERANCE {
        return Err(Error::NonConvergence(format!("optimum at boundary t = {t}")));
    }
    let (sigma1, sigma2) = svt_sigmas(alpha, delta_acc, eps_check, t);
    Ok(SvtCheckConfig { sigma1, sigma2, t_split: t, alpha, delta_acc, eps_check, threshold: 0.0 })
}

/// Sparse vector check: perturbs the threshold once per run, then halts at
/// the first accuracy whose Laplace-perturbed value reaches the perturbed
/// threshold. Any number of `Continue` answers may be given.
#[derive(Debug, Clone)]
pub struct SvtCheck {
    cfg: SvtCheckConfig,
    noisy_threshold: f64,
    halted: bool,
}

impl SvtCheck {
    pub fn new(cfg: SvtCheckConfig, rng: &mut Rng) -> Result<Self> {
        let noise = if cfg.sigma1 > 0.0 {
            match sample_gaussian(&[0.0], Variance::Finite(cfg.sigma1 * cfg.sigma1), rng)? {
                Draw::Value(v) => v[0],
                Draw::ZeroWeight => unreachable!("finite variance"),
            }
        } else {
            0.0
        };
        Ok(SvtCheck { cfg, noisy_threshold: cfg.threshold + noise, halted: false })
    }

    pub fn noisy_threshold(&self) -> f64 {
        self.noisy_threshold
    }

    pub fn config(&self) -> &SvtCheckConfig {
        &self.cfg
    }
}

impl ThresholdCheck for SvtCheck {
    fn epsilon(&self) -> RdpBudget {
        self.cfg.eps_check
    }

    fn check(&mut self, accuracy: f64, rng: &mut Rng) -> Result<CheckOutcome> {
        if self.halted {
            return Err(Error::UseAfterHalt);
        }
        let noisy = if self.cfg.sigma2 > 0.0 {
            sample_laplace(accuracy, self.cfg.laplace_scale(), rng)?
        } else {
            accuracy
        };
        let decision = if noisy >= self.noisy_threshold { Decision::Halt } else { Decision::Continue };
        self.halted = decision == Decision::Halt;
        Ok(CheckOutcome { decision, noisy_value: noisy })
    }
}

/// Stopping rule that scores each output on the validation split and feeds
/// the score to a [`ThresholdCheck`]. Every clean score and check outcome is
/// logged.
pub struct AccuracyStopper<F, C> {
    score: F,
    check: C,
    log: Vec<(f64, CheckOutcome)>,
}

impl<F, C> AccuracyStopper<F, C> {
    pub fn new(score: F, check: C) -> Self {
        AccuracyStopper { score, check, log: Vec::new() }
    }

    /// `(clean score, outcome)` per check, in order.
    pub fn log(&self) -> &[(f64, CheckOutcome)] {
        &self.log
    }

    pub fn into_parts(self) -> (F, C, Vec<(f64, CheckOutcome)>) {
        (self.score, self.check, self.log)
    }
}

impl<D, Y, F, C> StoppingRule<D, Y> for AccuracyStopper<F, C>
where
    F: FnMut(&D, &Y) -> Result<f64>,
    C: ThresholdCheck,
{
    fn epsilon(&self) -> RdpBudget {
        self.check.epsilon()
    }

    fn check(&mut self, validation: &D, output: &Y, rng: &mut Rng) -> Result<Decision> {
        let clean = (self.score)(validation, output)?;
        let outcome = self.check.check(clean, rng)?;
        self.log.push((clean, outcome));
        Ok(outcome.decision)
    }
}

/// Stopping rule with a fixed answer and no cost.
#[derive(Debug, Clone, Copy)]
pub struct FixedRule(pub Decision);

impl<D, Y> StoppingRule<D, Y> for FixedRule {
    fn epsilon(&self) -> RdpBudget {
        RdpBudget::ZERO
    }
    fn check(&mut self, _validation: &D, _output: &Y, _rng: &mut Rng) -> Result<Decision> {
        Ok(self.0)
    }
}
