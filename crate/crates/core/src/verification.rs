//! Executable checks of the ex-post privacy definitions.
//!
//! Exact evaluators work on [`DiscretePairMechanism`] tables and follow the
//! conventions `exp(-inf) = 0` and `0 * inf = 0` through explicit branches.
//! Continuous mechanisms are checked with a Monte Carlo estimator that
//! reports its standard error.

use crate::accounting::{RdpBudget, RenyiOrder, Variance};
use crate::error::{Error, Result};
use crate::mechanisms::{post_process, DiscretePairMechanism, Outcome, StochasticMap};
use crate::Rng;

/// Slack allowed when comparing a privacy loss against a reported bound, in
/// nats. Grid-built fixtures land exactly on the boundary.
pub const PLF_TOLERANCE: f64 = 1e-12;

/// Largest joint outcome space the exact checks will enumerate.
pub const MAX_JOINT_OUTCOMES: usize = 100_000;

/// Value of `E_{X'}[exp((1 - alpha) eps) (p_X / p_X')^alpha]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExPostRdpValue {
    pub lhs: f64,
    pub alpha: RenyiOrder,
}

impl ExPostRdpValue {
    pub fn satisfied(&self) -> bool {
        self.lhs <= 1.0
    }

    pub fn satisfied_within(&self, tolerance: f64) -> bool {
        self.lhs <= 1.0 + tolerance
    }
}

/// Privacy loss at one outcome of `X`'s support.
#[derive(Debug, Clone, PartialEq)]
pub struct PlfSample {
    pub label: String,
    /// `ln(p_X / p_X')`, `+inf` where `p_X' = 0`.
    pub plf: f64,
    pub reported_eps: RdpBudget,
}

/// Privacy loss function over the support of `X`.
pub fn privacy_loss(mech: &DiscretePairMechanism) -> Vec<PlfSample> {
    mech.outcomes()
        .iter()
        .filter(|o| o.p_x > 0.0)
        .map(|o| PlfSample {
            label: o.label.clone(),
            plf: if o.p_xp == 0.0 { f64::INFINITY } else { (o.p_x / o.p_xp).ln() },
            reported_eps: o.eps,
        })
        .collect()
}

fn lhs_term(o: &Outcome, alpha: RenyiOrder) -> f64 {
    if o.eps.is_infinite() || o.p_x == 0.0 {
        return 0.0;
    }
    if o.p_xp == 0.0 {
        return f64::INFINITY;
    }
    let a = alpha.value();
    if o.p_x == o.p_xp {
        return o.p_x * ((1.0 - a) * o.eps.value()).exp();
    }
    ((1.0 - a) * o.eps.value() + a * o.p_x.ln() + (1.0 - a) * o.p_xp.ln()).exp()
}

/// Exact ex-post RDP left-hand side for the ordering `(X, X')` of `mech`.
/// Infinite when `X` puts mass on an outcome `X'` cannot produce and the
/// reported bound there is finite.
pub fn expost_rdp_lhs_exact(mech: &DiscretePairMechanism, alpha: RenyiOrder) -> ExPostRdpValue {
    let lhs = mech.outcomes().iter().map(|o| lhs_term(o, alpha)).sum();
    ExPostRdpValue { lhs, alpha }
}

/// Larger of the two orderings' left-hand sides.
pub fn expost_rdp_lhs_symmetric(mech: &DiscretePairMechanism, alpha: RenyiOrder) -> ExPostRdpValue {
    let forward = expost_rdp_lhs_exact(mech, alpha);
    let backward = expost_rdp_lhs_exact(&mech.swapped(), alpha);
    if backward.lhs > forward.lhs {
        backward
    } else {
        forward
    }
}

/// Renyi divergence `D_alpha(M(X) || M(X'))` of the joint output, the
/// reported bound included.
pub fn renyi_divergence_exact(mech: &DiscretePairMechanism, alpha: RenyiOrder) -> f64 {
    let a = alpha.value();
    let mut sum = 0.0;
    for o in mech.outcomes() {
        if o.p_x == 0.0 {
            continue;
        }
        if o.p_xp == 0.0 {
            return f64::INFINITY;
        }
        sum += (a * o.p_x.ln() + (1.0 - a) * o.p_xp.ln()).exp();
    }
    sum.ln() / (a - 1.0)
}

/// `D_alpha(N(mu, v) || N(mu + shift, v)) = alpha shift^2 / (2 v)`.
pub fn renyi_divergence_gaussians(alpha: RenyiOrder, shift: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) || variance.is_infinite() {
        return Err(Error::InvalidVariance(variance));
    }
    if !shift.is_finite() {
        return Err(Error::InvalidArgument(format!("mean shift {shift}")));
    }
    Ok(alpha.value() * shift * shift / (2.0 * variance))
}

fn violation_mass_raw<'a>(rows: impl Iterator<Item = (f64, f64, RdpBudget)> + 'a) -> f64 {
    rows.filter(|&(p_x, p_xp, eps)| {
        if p_x <= 0.0 || eps.is_infinite() {
            return false;
        }
        p_xp <= 0.0 || (p_x / p_xp).ln() > eps.value() + PLF_TOLERANCE
    })
    .fold(0.0, |acc, (p_x, _, _)| acc + p_x)
}

/// `Pr_{X}[ln(p_X / p_X') > reported eps]` for the ordering `(X, X')`.
pub fn probabilistic_expost_violation_mass(mech: &DiscretePairMechanism) -> f64 {
    violation_mass_raw(mech.outcomes().iter().map(|o| (o.p_x, o.p_xp, o.eps)))
}

/// Larger violation mass over both orderings of the pair.
pub fn symmetric_violation_mass(mech: &DiscretePairMechanism) -> f64 {
    probabilistic_expost_violation_mass(mech).max(probabilistic_expost_violation_mass(&mech.swapped()))
}

pub fn is_probabilistically_expost_private(mech: &DiscretePairMechanism, delta: f64) -> bool {
    symmetric_violation_mass(mech) <= delta
}

/// Smallest `delta` for which the pair is `(eps, delta)`-probabilistically
/// DP in the ordering `(X, X')`, found by enumerating every candidate
/// exception set and every event.
pub fn probabilistic_dp_delta_bruteforce(mech: &DiscretePairMechanism, eps: f64) -> Result<f64> {
    let n = mech.len();
    if n > 16 {
        return Err(Error::OutcomeSpaceOverflow(1 << n));
    }
    let rows = mech.outcomes();
    let bound = eps.exp();
    let mut best = f64::INFINITY;
    for exception in 0u32..(1 << n) {
        let mass: f64 = (0..n).filter(|i| exception >> i & 1 == 1).map(|i| rows[i].p_x).sum();
        if mass >= best {
            continue;
        }
        let ok = (0u32..(1 << n)).filter(|s| s & exception == 0).all(|s| {
            let (px, pxp) = (0..n)
                .filter(|i| s >> i & 1 == 1)
                .fold((0.0, 0.0), |(a, b), i| (a + rows[i].p_x, b + rows[i].p_xp));
            px <= bound * pxp * (1.0 + PLF_TOLERANCE) + 1e-15
        });
        if ok {
            best = mass;
        }
    }
    Ok(best)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub const MIN_MC_SAMPLES: usize = 10_000;

/// Estimates the ex-post RDP left-hand side of a continuous mechanism.
///
/// `sample` draws an output `(y, eps)` under `X'`; `log_ratio` returns
/// `ln(p_X(y, eps) / p_X'(y, eps))`.
pub fn expost_rdp_lhs_monte_carlo<Y, S, L>(
    mut sample: S,
    log_ratio: L,
    alpha: RenyiOrder,
    n: usize,
    rng: &mut Rng,
) -> Result<McEstimate>
where
    S: FnMut(&mut Rng) -> (Y, RdpBudget),
    L: Fn(&Y, RdpBudget) -> f64,
{
    if n < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_MC_SAMPLES} samples, got {n}")));
    }
    let a = alpha.value();
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        let (y, eps) = sample(rng);
        let x = if eps.is_infinite() {
            0.0
        } else {
            ((1.0 - a) * eps.value() + a * log_ratio(&y, eps)).exp()
        };
        if !x.is_finite() {
            return Err(Error::NonFiniteSummand(i));
        }
        // Welford
        let k = (i + 1) as f64;
        let d = x - mean;
        mean += d / k;
        m2 += d * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate { estimate: mean, stderr: (var / n as f64).sqrt(), samples: n })
}

/// Log density ratio of `N(mean_x, variance)` against `N(mean_xp, variance)`
/// at `y`, per coordinate summed.
pub fn gaussian_log_ratio(y: &[f64], mean_x: &[f64], mean_xp: &[f64], variance: Variance) -> f64 {
    let v = match variance {
        Variance::Infinite => return 0.0,
        Variance::Finite(v) => v,
    };
    y.iter()
        .zip(mean_x.iter().zip(mean_xp))
        .map(|(y, (mx, mxp))| ((y - mxp).powi(2) - (y - mx).powi(2)) / (2.0 * v))
        .sum()
}

/// Checks that an ex-post RDP mechanism whose reported bounds never exceed
/// `eps_cap` has joint Renyi divergence at most `eps_cap`.
pub fn filter_theorem_check(mech: &DiscretePairMechanism, eps_cap: RdpBudget, alpha: RenyiOrder) -> Result<bool> {
    if let Some(o) = mech.outcomes().iter().find(|o| o.eps > eps_cap) {
        return Err(Error::Precondition(format!("outcome {} reports {} above cap {}", o.label, o.eps, eps_cap)));
    }
    let lhs = expost_rdp_lhs_exact(mech, alpha);
    if !lhs.satisfied_within(PLF_TOLERANCE) {
        return Err(Error::Precondition(format!("mechanism is not ex-post RDP: lhs {}", lhs.lhs)));
    }
    if eps_cap.is_infinite() {
        return Ok(true);
    }
    Ok(renyi_divergence_exact(mech, alpha) <= eps_cap.value() + PLF_TOLERANCE)
}

/// Builds the exact adaptive composition of finite mechanisms. Stage `i` is
/// chosen from the outcome indices of the earlier stages; the joint outcome
/// reports the sum of the stage bounds.
pub fn compose_adaptive<F>(stages: &[F]) -> Result<DiscretePairMechanism>
where
    F: Fn(&[usize]) -> Result<DiscretePairMechanism>,
{
    if stages.is_empty() {
        return Err(Error::InvalidArgument("no stages".into()));
    }
    // (outcome path, label, p_x, p_xp, eps)
    let mut frontier: Vec<(Vec<usize>, String, f64, f64, f64)> = vec![(Vec::new(), String::new(), 1.0, 1.0, 0.0)];
    for stage in stages {
        let mut next = Vec::new();
        for (path, label, p_x, p_xp, eps) in &frontier {
            let mech = stage(path)?;
            for (k, o) in mech.outcomes().iter().enumerate() {
                if next.len() >= MAX_JOINT_OUTCOMES {
                    return Err(Error::OutcomeSpaceOverflow(next.len() + 1));
                }
                let mut p = path.clone();
                p.push(k);
                let l = if label.is_empty() { o.label.clone() } else { format!("{label}/{}", o.label) };
                next.push((p, l, p_x * o.p_x, p_xp * o.p_xp, eps + o.eps.value()));
            }
        }
        frontier = next;
    }
    let outcomes = frontier
        .into_iter()
        .map(|(_, label, p_x, p_xp, eps)| Ok(Outcome { label, p_x, p_xp, eps: RdpBudget::new(eps)? }))
        .collect::<Result<Vec<_>>>()?;
    // Products of valid distributions can drift a few ulps from one.
    let total_x: f64 = outcomes.iter().map(|o| o.p_x).sum();
    let total_xp: f64 = outcomes.iter().map(|o| o.p_xp).sum();
    let outcomes = outcomes
        .into_iter()
        .map(|o| Outcome { p_x: o.p_x / total_x, p_xp: o.p_xp / total_xp, ..o })
        .collect();
    DiscretePairMechanism::new(outcomes)
}

/// Ex-post RDP left-hand side of the adaptive composition of `stages`.
pub fn composition_check<F>(stages: &[F], alpha: RenyiOrder) -> Result<ExPostRdpValue>
where
    F: Fn(&[usize]) -> Result<DiscretePairMechanism>,
{
    Ok(expost_rdp_lhs_exact(&compose_adaptive(stages)?, alpha))
}

/// A mechanism that is `delta`-probabilistically ex-post private but whose
/// post-processing is not.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub mechanism: DiscretePairMechanism,
    pub map: StochasticMap,
    /// Violation mass before post-processing, worst ordering.
    pub before: f64,
    /// Violation mass after post-processing, worst ordering.
    pub after: f64,
    /// Minimal probabilistic-DP delta before and after, from subset
    /// enumeration; equal to `before` and `after` for constant-bound
    /// mechanisms.
    pub dp_delta_before: f64,
    pub dp_delta_after: f64,
}

/// Searches four-outcome mechanisms with constant bound `eps` for a
/// violation of post-processing immunity at level `delta`.
///
/// Outcomes 0 and 1 take every grid value of step `resolution`; the
/// remaining mass is split evenly between outcomes 2 and 3. The
/// post-processing merges outcomes 0 and 1. The grid is walked in a fixed
/// order, so the first witness is reproducible.
pub fn ppi_counterexample_search(eps: RdpBudget, delta: f64, resolution: f64) -> Result<Counterexample> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid resolution {resolution}")));
    }
    if eps.is_infinite() {
        return Err(Error::InvalidBudget(eps.value()));
    }
    let k = (1.0 / resolution).round() as usize;
    let kf = k as f64;
    let mass = |px: &[f64], pxp: &[f64]| -> f64 {
        let fwd = violation_mass_raw(px.iter().zip(pxp).map(|(&a, &b)| (a, b, eps)));
        let bwd = violation_mass_raw(pxp.iter().zip(px).map(|(&a, &b)| (a, b, eps)));
        fwd.max(bwd)
    };
    for a in 0..=k {
        for b in 0..=k {
            for c in 0..=(k - a) {
                for d in 0..=(k - b) {
                    let rx = (k - a - c) as f64 / kf / 2.0;
                    let rxp = (k - b - d) as f64 / kf / 2.0;
                    let px = [a as f64 / kf, c as f64 / kf, rx, rx];
                    let pxp = [b as f64 / kf, d as f64 / kf, rxp, rxp];
                    let before = mass(&px, &pxp);
                    if before > delta {
                        continue;
                    }
                    let merged_x = [px[0] + px[1], rx, rx];
                    let merged_xp = [pxp[0] + pxp[1], rxp, rxp];
                    let after = mass(&merged_x, &merged_xp);
                    if after <= delta {
                        continue;
                    }
                    let mechanism = DiscretePairMechanism::from_vectors(&px, &pxp, &[eps; 4])?;
                    let map = StochasticMap::deterministic(&[0, 0, 1, 2], 3)?;
                    let processed = post_process(&mechanism, &map)?;
                    let dp = |m: &DiscretePairMechanism| -> Result<f64> {
                        Ok(probabilistic_dp_delta_bruteforce(m, eps.value())?
                            .max(probabilistic_dp_delta_bruteforce(&m.swapped(), eps.value())?))
                    };
                    return Ok(Counterexample {
                        dp_delta_before: dp(&mechanism)?,
                        dp_delta_after: dp(&processed)?,
                        before: symmetric_violation_mass(&mechanism),
                        after: symmetric_violation_mass(&processed),
                        mechanism,
                        map,
                    });
                }
            }
        }
    }
    Err(Error::SearchExhausted(format!("no witness for delta {delta} at resolution {resolution}")))
}

/// Randomized response calibrated so that its reported bound equals its
/// exact Renyi divergence at `alpha`; the ex-post left-hand side is then one.
pub fn calibrated_randomized_response(p_true: f64, alpha: RenyiOrder) -> Result<DiscretePairMechanism> {
    let probe = DiscretePairMechanism::randomized_response(p_true, RdpBudget::ZERO)?;
    let eps = renyi_divergence_exact(&probe, alpha);
    DiscretePairMechanism::randomized_response(p_true, RdpBudget::new(eps)?)
}

/// Random finite mechanisms and maps for property checks.
pub mod fixtures {
    use rand::Rng as _;

    use super::*;

    fn random_pair(n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        loop {
            let mut px = Vec::with_capacity(n);
            let mut pxp = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                let (a, b): (f64, f64) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
                // Occasional one-sided support.
                match u {
                    u if u < 0.1 => {
                        px.push(0.0);
                        pxp.push(b);
                    }
                    u if u < 0.2 => {
                        px.push(a);
                        pxp.push(0.0);
                    }
                    _ => {
                        px.push(a);
                        pxp.push(b);
                    }
                }
            }
            let (sx, sxp): (f64, f64) = (px.iter().sum(), pxp.iter().sum());
            if sx > 0.0 && sxp > 0.0 {
                return (px.iter().map(|v| v / sx).collect(), pxp.iter().map(|v| v / sxp).collect());
            }
        }
    }

    /// A mechanism on `n` outcomes whose ex-post RDP left-hand side at
    /// `alpha` is at most one. Bounds are drawn from a few shared levels and
    /// raised uniformly when needed.
    pub fn random_expost_rdp_mechanism(n: usize, alpha: RenyiOrder, rng: &mut Rng) -> DiscretePairMechanism {
        const LEVELS: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 2.0];
        let (px, pxp) = random_pair(n, rng);
        let mut eps: Vec<f64> = (0..n)
            .map(|i| if px[i] > 0.0 && pxp[i] == 0.0 { f64::INFINITY } else { LEVELS[rng.random_range(0..LEVELS.len())] })
            .collect();
        let budgets = |e: &[f64]| e.iter().map(|&v| RdpBudget::new(v).expect("non-negative")).collect::<Vec<_>>();
        let mech = DiscretePairMechanism::from_vectors(&px, &pxp, &budgets(&eps)).expect("valid");
        let lhs = expost_rdp_lhs_exact(&mech, alpha).lhs;
        if lhs <= 1.0 {
            return mech;
        }
        let shift = lhs.ln() / (alpha.value() - 1.0);
        for e in eps.iter_mut().filter(|e| e.is_finite()) {
            *e += shift;
        }
        DiscretePairMechanism::from_vectors(&px, &pxp, &budgets(&eps)).expect("valid")
    }

    /// A mechanism with zero probabilistic ex-post violation mass in both
    /// orderings. Bounds are rounded up to multiples of 0.25 so that several
    /// outcomes share a level.
    pub fn random_pure_expost_mechanism(n: usize, rng: &mut Rng) -> DiscretePairMechanism {
        let (px, pxp) = random_pair(n, rng);
        let eps: Vec<RdpBudget> = (0..n)
            .map(|i| {
                if px[i] == 0.0 || pxp[i] == 0.0 {
                    return RdpBudget::INFINITE;
                }
                let needed = (px[i] / pxp[i]).ln().abs();
                let slack = 0.25 * rng.random_range(0..3) as f64;
                RdpBudget::new((needed * 4.0).ceil() / 4.0 + slack).expect("finite")
            })
            .collect();
        DiscretePairMechanism::from_vectors(&px, &pxp, &eps).expect("valid")
    }

    /// A sparse random map from `sources` outcomes to between one and
    /// `sources + 1` targets.
    pub fn random_stochastic_map(sources: usize, rng: &mut Rng) -> StochasticMap {
        let targets = rng.random_range(1..=sources + 1);
        let kernel = (0..sources)
            .map(|_| {
                let mut row: Vec<f64> =
                    (0..targets).map(|_| if rng.random::<f64>() < 0.5 { rng.random::<f64>() } else { 0.0 }).collect();
                if row.iter().all(|&w| w == 0.0) {
                    row[rng.random_range(0..targets)] = 1.0;
                }
                let s: f64 = row.iter().sum();
                row.iter().map(|w| w / s).collect()
            })
            .collect();
        StochasticMap::new((0..targets).map(|t| format!("t{t}")).collect(), kernel).expect("stochastic rows")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::pathological_mechanism;

    fn a(x: f64) -> RenyiOrder {
        RenyiOrder::new(x).unwrap()
    }
    fn e(x: f64) -> RdpBudget {
        RdpBudget::new(x).unwrap()
    }

    #[test]
    fn randomized_response_lhs() {
        let rr = DiscretePairMechanism::randomized_response(0.75, e(3f64.ln())).unwrap();
        let v = expost_rdp_lhs_exact(&rr, a(2.0));
        let want = (0.25 * 9.0 + 0.75 / 9.0) / 3.0;
        assert!((v.lhs - want).abs() < 1e-12);
        assert!((v.lhs - 0.7778).abs() < 1e-4);
        assert!(v.satisfied());
    }

    #[test]
    fn pathological_lhs_and_mass() {
        let m = pathological_mechanism();
        for alpha in [1.5, 2.0, 20.0, 100.0] {
            assert_eq!(expost_rdp_lhs_exact(&m, a(alpha)).lhs, 0.5);
            assert_eq!(expost_rdp_lhs_exact(&m.swapped(), a(alpha)).lhs, 0.5);
        }
        assert_eq!(probabilistic_expost_violation_mass(&m), 0.0);
        assert_eq!(symmetric_violation_mass(&m), 0.0);
    }

    #[test]
    fn identical_distributions_at_zero_eps() {
        let m = DiscretePairMechanism::from_vectors(&[0.3, 0.7], &[0.3, 0.7], &[e(0.0), e(0.0)]).unwrap();
        assert!((expost_rdp_lhs_exact(&m, a(3.0)).lhs - 1.0).abs() < 1e-15);
        assert_eq!(renyi_divergence_exact(&m, a(3.0)).abs() < 1e-15, true);
        assert!(filter_theorem_check(&m, e(0.0), a(3.0)).unwrap());
    }

    #[test]
    fn absolute_continuity_failure() {
        let m = DiscretePairMechanism::from_vectors(&[0.5, 0.5], &[0.0, 1.0], &[e(1.0), e(1.0)]).unwrap();
        assert!(expost_rdp_lhs_exact(&m, a(2.0)).lhs.is_infinite());
        assert!(renyi_divergence_exact(&m, a(2.0)).is_infinite());
        assert_eq!(probabilistic_expost_violation_mass(&m), 0.5);
    }

    #[test]
    fn violation_mass_examples() {
        let rr = DiscretePairMechanism::randomized_response(0.75, e(3f64.ln())).unwrap();
        assert_eq!(symmetric_violation_mass(&rr), 0.0);
        let m = DiscretePairMechanism::from_vectors(&[0.2, 0.5, 0.3], &[0.4, 0.2, 0.4], &[e(0.0); 3]).unwrap();
        assert_eq!(probabilistic_expost_violation_mass(&m), 0.5);
        assert_eq!(probabilistic_expost_violation_mass(&m.swapped()), 0.4 + 0.4);
    }

    #[test]
    fn gaussian_divergence_examples() {
        assert!((renyi_divergence_gaussians(a(20.0), 1.0, 1000.0).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(renyi_divergence_gaussians(a(2.0), 0.0, 3.0).unwrap(), 0.0);
        assert!(renyi_divergence_gaussians(a(2.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_divergence_matches_quadrature() {
        // Simpson's rule on the divergence integral, independent of the closed form.
        for &(alpha, shift, var) in &[(2.0, 1.0, 1.0), (20.0, 1.0, 50.0), (5.0, 0.3, 0.2)] {
            let sd: f64 = (var as f64).sqrt();
            let (lo, hi) = (-40.0 * sd - 40.0 * shift, 40.0 * sd + 40.0 * shift);
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let log_dens = |x: f64, m: f64| -(x - m) * (x - m) / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
            let f = |x: f64| (alpha * log_dens(x, 0.0) + (1.0 - alpha) * log_dens(x, shift)).exp();
            let mut s = f(lo) + f(hi);
            for i in 1..n {
                s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            let numeric = integral.ln() / (alpha - 1.0);
            let closed = renyi_divergence_gaussians(a(alpha), shift, var).unwrap();
            assert!((numeric - closed).abs() < 1e-6, "{numeric} vs {closed}");
        }
    }

    #[test]
    fn bruteforce_delta_matches_violation_mass_for_constant_eps() {
        let m = DiscretePairMechanism::from_vectors(&[0.1, 0.35, 0.3, 0.25], &[0.0, 0.2, 0.4, 0.4], &[e(2f64.ln()); 4]).unwrap();
        let bf = probabilistic_dp_delta_bruteforce(&m, 2f64.ln()).unwrap();
        assert!((bf - probabilistic_expost_violation_mass(&m)).abs() < 1e-15);
    }

    #[test]
    fn counterexample_regression() {
        let w = ppi_counterexample_search(e(2f64.ln()), 0.1, 0.01).unwrap();
        let px: Vec<f64> = w.mechanism.outcomes().iter().map(|o| o.p_x).collect();
        let pxp: Vec<f64> = w.mechanism.outcomes().iter().map(|o| o.p_xp).collect();
        assert_eq!(px, vec![0.0, 0.05, 0.475, 0.475]);
        assert_eq!(pxp, vec![0.01, 0.1, 0.445, 0.445]);
        assert!((w.before - 0.01).abs() < 1e-12);
        assert!((w.after - 0.11).abs() < 1e-12);
        assert!(w.before <= 0.1 && w.after > 0.1);
        assert!((w.dp_delta_before - w.before).abs() < 1e-12);
        assert!((w.dp_delta_after - w.after).abs() < 1e-12);
    }

    #[test]
    fn counterexample_search_can_fail() {
        assert!(matches!(
            ppi_counterexample_search(e(2f64.ln()), 0.1, 0.5),
            Err(Error::SearchExhausted(_))
        ));
        assert!(ppi_counterexample_search(e(1.0), 0.0, 0.01).is_err());
    }

    #[test]
    fn identity_never_breaks_probabilistic_privacy() {
        let m = DiscretePairMechanism::from_vectors(&[0.1, 0.35, 0.3, 0.25], &[0.0, 0.2, 0.4, 0.4], &[e(2f64.ln()); 4]).unwrap();
        let pp = post_process(&m, &StochasticMap::identity(4)).unwrap();
        assert_eq!(symmetric_violation_mass(&pp), symmetric_violation_mass(&m));
    }

    #[test]
    fn filter_on_calibrated_rr() {
        let rr = calibrated_randomized_response(0.8, a(4.0)).unwrap();
        let cap = rr.outcomes()[0].eps;
        assert!(filter_theorem_check(&rr, cap, a(4.0)).unwrap());
        assert!(filter_theorem_check(&rr, RdpBudget::INFINITE, a(4.0)).unwrap());
        assert!(filter_theorem_check(&rr, e(cap.value() / 2.0), a(4.0)).is_err());
        let uncalibrated = DiscretePairMechanism::randomized_response(0.8, e(0.01)).unwrap();
        assert!(matches!(filter_theorem_check(&uncalibrated, e(1.0), a(4.0)), Err(Error::Precondition(_))));
    }

    fn fixed(m: DiscretePairMechanism) -> Box<dyn Fn(&[usize]) -> Result<DiscretePairMechanism>> {
        Box::new(move |_| Ok(m.clone()))
    }

    #[test]
    fn composition_examples() {
        let alpha = a(3.0);
        let rr1 = calibrated_randomized_response(0.7, alpha).unwrap();
        let rr2 = calibrated_randomized_response(0.9, alpha).unwrap();
        let stages = [fixed(rr1), fixed(rr2)];
        let v = composition_check(&stages, alpha).unwrap();
        assert!(v.satisfied_within(1e-12));
        assert!((v.lhs - 1.0).abs() < 1e-12);

        let slack = DiscretePairMechanism::randomized_response(0.7, e(1.0)).unwrap();
        let noop = DiscretePairMechanism::from_vectors(&[1.0], &[1.0], &[RdpBudget::ZERO]).unwrap();
        let alone = expost_rdp_lhs_exact(&slack, alpha).lhs;
        let stages = [fixed(slack), fixed(noop)];
        assert!((composition_check(&stages, alpha).unwrap().lhs - alone).abs() < 1e-15);
    }

    #[test]
    fn adaptive_branch_composition() {
        let alpha = a(2.0);
        let first = calibrated_randomized_response(0.75, alpha).unwrap();
        let strong = calibrated_randomized_response(0.95, alpha).unwrap();
        let weak = calibrated_randomized_response(0.55, alpha).unwrap();
        let stage1 = |_: &[usize]| -> Result<DiscretePairMechanism> { Ok(first.clone()) };
        let stage2 = |h: &[usize]| -> Result<DiscretePairMechanism> { Ok(if h[0] == 0 { strong.clone() } else { weak.clone() }) };
        let stages: [&dyn Fn(&[usize]) -> Result<DiscretePairMechanism>; 2] = [&stage1, &stage2];
        let joint = compose_adaptive(&stages).unwrap();
        assert_eq!(joint.len(), 4);
        let eps: Vec<_> = joint.outcomes().iter().map(|o| o.eps).collect();
        assert_ne!(eps[0], eps[2]);
        let v = expost_rdp_lhs_exact(&joint, alpha);
        assert!(v.satisfied_within(1e-12), "{}", v.lhs);
    }

    #[test]
    fn monte_carlo_requires_enough_samples() {
        let mut rng = crate::seeded_rng(0);
        let r = expost_rdp_lhs_monte_carlo(|_| ((), RdpBudget::ZERO), |_, _| 0.0, a(2.0), 100, &mut rng);
        assert!(r.is_err());
        let r = expost_rdp_lhs_monte_carlo(|_| ((), RdpBudget::ZERO), |_, _| 0.0, a(2.0), 10_000, &mut rng).unwrap();
        assert_eq!(r.estimate, 1.0);
        let r = expost_rdp_lhs_monte_carlo(|_| ((), RdpBudget::ZERO), |_, _| f64::INFINITY, a(2.0), 10_000, &mut rng);
        assert_eq!(r, Err(Error::NonFiniteSummand(0)));
    }

    #[test]
    fn monte_carlo_stderr_scaling() {
        let alpha = a(20.0);
        let var = 1000.0;
        let mut errs = Vec::new();
        for (k, n) in [10_000usize, 100_000, 1_000_000].into_iter().enumerate() {
            let mut rng = crate::seeded_rng(40 + k as u64);
            let est = expost_rdp_lhs_monte_carlo(
                |r| {
                    let y = match crate::mechanisms::sample_gaussian(&[1.0], Variance::Finite(var), r).unwrap() {
                        crate::mechanisms::Draw::Value(v) => v[0],
                        crate::mechanisms::Draw::ZeroWeight => unreachable!(),
                    };
                    (y, e(0.01))
                },
                |&y, _| gaussian_log_ratio(&[y], &[0.0], &[1.0], Variance::Finite(var)),
                alpha,
                n,
                &mut rng,
            )
            .unwrap();
            assert!((est.estimate - 1.0).abs() < 5.0 * est.stderr + 1e-12, "{est:?}");
            errs.push(est.stderr);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            let want = 10f64.sqrt();
            assert!(ratio > want / 1.5 && ratio < want * 1.5, "{ratio}");
        }
    }

    mod props {
        use super::super::fixtures::*;
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn expost_rdp_survives_post_processing(seed in any::<u64>(), n in 1usize..7, alpha in 1.1f64..40.0) {
                let alpha = RenyiOrder::new(alpha).unwrap();
                let mut rng = crate::seeded_rng(seed);
                let mech = random_expost_rdp_mechanism(n, alpha, &mut rng);
                let map = random_stochastic_map(n, &mut rng);
                let before = expost_rdp_lhs_exact(&mech, alpha).lhs;
                let after = expost_rdp_lhs_exact(&post_process(&mech, &map).unwrap(), alpha).lhs;
                prop_assert!(before <= 1.0 + 1e-12);
                prop_assert!(after <= 1.0 + 1e-12);
                prop_assert!(after <= before * (1.0 + 1e-12) + 1e-15, "{after} > {before}");
            }

            #[test]
            fn pure_expost_survives_post_processing(seed in any::<u64>(), n in 1usize..7) {
                let mut rng = crate::seeded_rng(seed);
                let mech = random_pure_expost_mechanism(n, &mut rng);
                prop_assert_eq!(symmetric_violation_mass(&mech), 0.0);
                let map = random_stochastic_map(n, &mut rng);
                prop_assert_eq!(symmetric_violation_mass(&post_process(&mech, &map).unwrap()), 0.0);
            }

            #[test]
            fn filter_bounds_divergence(seed in any::<u64>(), n in 1usize..7, alpha in 1.1f64..40.0) {
                let alpha = RenyiOrder::new(alpha).unwrap();
                let mut rng = crate::seeded_rng(seed);
                let mech = random_expost_rdp_mechanism(n, alpha, &mut rng);
                let cap = mech.outcomes().iter().map(|o| o.eps).fold(RdpBudget::ZERO, |m, e| if e > m { e } else { m });
                prop_assert!(filter_theorem_check(&mech, cap, alpha).unwrap());
            }

            #[test]
            fn composition_of_expost_rdp(seed in any::<u64>(), alpha in 1.1f64..20.0) {
                let alpha = RenyiOrder::new(alpha).unwrap();
                let mut rng = crate::seeded_rng(seed);
                let first = random_expost_rdp_mechanism(3, alpha, &mut rng);
                let branches: Vec<_> = (0..3).map(|_| random_expost_rdp_mechanism(3, alpha, &mut rng)).collect();
                let s1 = |_: &[usize]| -> Result<DiscretePairMechanism> { Ok(first.clone()) };
                let s2 = |h: &[usize]| -> Result<DiscretePairMechanism> { Ok(branches[h[0]].clone()) };
                let stages: [&dyn Fn(&[usize]) -> Result<DiscretePairMechanism>; 2] = [&s1, &s2];
                prop_assert!(composition_check(&stages, alpha).unwrap().satisfied_within(1e-12));
            }
        }
    }
}
