//! Privacy budget arithmetic.
//!
//! All budgets are in nats. Renyi orders are restricted to the open interval
//! `(1, inf)`; the ex-post definitions are not extended to the limiting
//! orders.

use std::fmt;

use crate::error::{Error, Result};

/// Renyi DP order, always finite and strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 1.0 {
            Ok(RenyiOrder(alpha))
        } else {
            Err(Error::InvalidOrder(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for RenyiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Renyi DP epsilon. Non-negative; `+inf` is a legal value and follows the
/// conventions `exp(-inf) = 0` and `0 * inf = 0` wherever it is consumed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct RdpBudget(f64);

impl RdpBudget {
    pub const ZERO: RdpBudget = RdpBudget(0.0);
    pub const INFINITE: RdpBudget = RdpBudget(f64::INFINITY);

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            Err(Error::InvalidBudget(epsilon))
        } else {
            Ok(RdpBudget(epsilon))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `exp((1 - alpha) * eps)`, returning exactly zero for an infinite budget.
    pub fn discount(self, alpha: RenyiOrder) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            ((1.0 - alpha.value()) * self.0).exp()
        }
    }
}

impl fmt::Display for RdpBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An `(epsilon, delta)` approximate DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl AdpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidBudget(epsilon));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(AdpBudget { epsilon, delta })
    }
}

/// l2 sensitivity of a query.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Sensitivity(f64);

impl Sensitivity {
    pub fn new(delta: f64) -> Result<Self> {
        if delta.is_finite() && delta > 0.0 {
            Ok(Sensitivity(delta))
        } else {
            Err(Error::InvalidSensitivity(delta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Noise variance. `Infinite` stands for a release that carries no
/// information and receives zero weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Infinite,
}

impl Variance {
    /// Inverse variance, zero for `Infinite`.
    pub fn precision(self) -> f64 {
        match self {
            Variance::Finite(v) => 1.0 / v,
            Variance::Infinite => 0.0,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Variance::Finite(v) => Some(v),
            Variance::Infinite => None,
        }
    }
}

/// Strictly increasing, finite, non-empty list of cumulative budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule(Vec<RdpBudget>);

impl EpsilonSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSchedule("empty".into()));
        }
        let mut out = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidSchedule(format!("non-finite value {v}")));
            }
            if i > 0 && v <= values[i - 1] {
                return Err(Error::InvalidSchedule(format!(
                    "not strictly increasing at position {i}"
                )));
            }
            out.push(RdpBudget::new(v)?);
        }
        Ok(EpsilonSchedule(out))
    }

    pub fn values(&self) -> &[RdpBudget] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> RdpBudget {
        self.0[0]
    }

    pub fn last(&self) -> RdpBudget {
        self.0[self.0.len() - 1]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|e| e.value()).collect()
    }
}

/// Variance of the Gaussian mechanism that is `(alpha, eps)`-RDP for a query
/// of l2 sensitivity `delta`: `alpha * delta^2 / (2 eps)`.
///
/// `eps = 0` yields [`Variance::Infinite`], `eps = inf` yields zero variance.
pub fn gaussian_variance_for_rdp(
    alpha: RenyiOrder,
    delta: Sensitivity,
    eps: RdpBudget,
) -> Result<Variance> {
    let e = eps.value();
    if e == 0.0 {
        return Ok(Variance::Infinite);
    }
    if e.is_infinite() {
        return Ok(Variance::Finite(0.0));
    }
    Ok(Variance::Finite(
        alpha.value() * delta.value() * delta.value() / (2.0 * e),
    ))
}

/// Inverse of [`gaussian_variance_for_rdp`].
pub fn rdp_epsilon_of_gaussian(
    alpha: RenyiOrder,
    delta: Sensitivity,
    variance: Variance,
) -> Result<RdpBudget> {
    match variance {
        Variance::Infinite => Ok(RdpBudget::ZERO),
        Variance::Finite(v) if v.is_nan() || v <= 0.0 => Err(Error::InvalidVariance(v)),
        Variance::Finite(v) if v.is_infinite() => Ok(RdpBudget::ZERO),
        Variance::Finite(v) => RdpBudget::new(alpha.value() * delta.value() * delta.value() / (2.0 * v)),
    }
}

/// Converts an RDP bound at order `alpha` to `(eps + ln(1/delta) / (alpha - 1), delta)`.
pub fn rdp_to_adp(alpha: RenyiOrder, eps: RdpBudget, target_delta: f64) -> Result<AdpBudget> {
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(Error::InvalidDelta(target_delta));
    }
    let epsilon = eps.value() + (1.0 / target_delta).ln() / (alpha.value() - 1.0);
    AdpBudget::new(epsilon, target_delta)
}

/// Total bound of a run with a data-dependent stopping rule:
/// `max(sum of step budgets, stopping-rule budget)`.
pub fn total_with_stopping(eps_list: &[RdpBudget], eps_stop: RdpBudget) -> RdpBudget {
    let sum: f64 = eps_list.iter().map(|e| e.value()).sum();
    RdpBudget(sum.max(eps_stop.value()))
}

/// `m` geometrically spaced budgets from `lo` to `hi` inclusive. The
/// endpoints are returned exactly.
pub fn log_spaced_schedule(lo: f64, hi: f64, m: usize) -> Result<EpsilonSchedule> {
    if !(lo > 0.0 && lo.is_finite()) {
        return Err(Error::InvalidSchedule(format!("lower end {lo} must be > 0")));
    }
    if !(hi > lo && hi.is_finite()) {
        return Err(Error::InvalidSchedule(format!(
            "upper end {hi} must exceed lower end {lo}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidSchedule(format!("need at least 2 points, got {m}")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let steps = (m - 1) as f64;
    let values = (0..m)
        .map(|i| match i {
            0 => lo,
            i if i == m - 1 => hi,
            i => (llo + (lhi - llo) * i as f64 / steps).exp(),
        })
        .collect();
    EpsilonSchedule::new(values)
}

/// Renders the RDP to ADP conversion table as two-column CSV with values
/// printed to six decimals.
pub fn conversion_table_csv(alpha: RenyiOrder, target_delta: f64, eps: &[RdpBudget]) -> Result<String> {
    let mut out = format!(
        "RDP Epsilon @ alpha = {},ADP Epsilon @ delta = {}\n",
        alpha, target_delta
    );
    for &e in eps {
        let adp = rdp_to_adp(alpha, e, target_delta)?;
        out.push_str(&format!("{:.6},{:.6}\n", e.value(), adp.epsilon));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(x: f64) -> RenyiOrder {
        RenyiOrder::new(x).unwrap()
    }
    fn s(x: f64) -> Sensitivity {
        Sensitivity::new(x).unwrap()
    }
    fn e(x: f64) -> RdpBudget {
        RdpBudget::new(x).unwrap()
    }

    #[test]
    fn order_rejects_limits() {
        assert!(RenyiOrder::new(1.0).is_err());
        assert!(RenyiOrder::new(0.5).is_err());
        assert!(RenyiOrder::new(f64::INFINITY).is_err());
        assert!(RenyiOrder::new(f64::NAN).is_err());
        assert!(RenyiOrder::new(1.0001).is_ok());
    }

    #[test]
    fn budget_and_sensitivity_domains() {
        assert!(RdpBudget::new(-0.1).is_err());
        assert!(RdpBudget::new(f64::NAN).is_err());
        assert!(RdpBudget::new(f64::INFINITY).is_ok());
        assert!(Sensitivity::new(0.0).is_err());
        assert!(Sensitivity::new(f64::INFINITY).is_err());
        assert!(AdpBudget::new(1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_variance_examples() {
        assert_eq!(gaussian_variance_for_rdp(a(20.0), s(1.0), e(0.01)).unwrap(), Variance::Finite(1000.0));
        assert_eq!(gaussian_variance_for_rdp(a(2.0), s(1.0), e(1.0)).unwrap(), Variance::Finite(1.0));
        assert_eq!(gaussian_variance_for_rdp(a(20.0), s(2.0), e(0.1)).unwrap(), Variance::Finite(400.0));
        assert_eq!(gaussian_variance_for_rdp(a(20.0), s(2.0), RdpBudget::ZERO).unwrap(), Variance::Infinite);
    }

    #[test]
    fn gaussian_variance_decreases_in_eps() {
        let v1 = gaussian_variance_for_rdp(a(5.0), s(1.0), e(0.1)).unwrap().finite().unwrap();
        let v2 = gaussian_variance_for_rdp(a(5.0), s(1.0), e(0.2)).unwrap().finite().unwrap();
        assert!(v2 < v1);
    }

    #[test]
    fn inverse_examples() {
        let r = rdp_epsilon_of_gaussian(a(20.0), s(1.0), Variance::Finite(1000.0)).unwrap();
        assert!((r.value() - 0.01).abs() < 1e-15);
        assert_eq!(rdp_epsilon_of_gaussian(a(2.0), s(1.0), Variance::Finite(1.0)).unwrap(), e(1.0));
        assert_eq!(rdp_epsilon_of_gaussian(a(20.0), s(1.0), Variance::Infinite).unwrap(), RdpBudget::ZERO);
        assert!(rdp_epsilon_of_gaussian(a(2.0), s(1.0), Variance::Finite(0.0)).is_err());
        assert!(rdp_epsilon_of_gaussian(a(2.0), s(1.0), Variance::Finite(-1.0)).is_err());
    }

    #[test]
    fn adp_conversion_examples() {
        let r = rdp_to_adp(a(20.0), e(0.01), 1e-5).unwrap();
        assert!((r.epsilon - 0.615943).abs() < 1e-6);
        let r = rdp_to_adp(a(20.0), e(0.464159), 1e-5).unwrap();
        assert!((r.epsilon - 1.070102).abs() < 1e-6);
        let r = rdp_to_adp(a(2.0), e(0.5), (-1.0f64).exp()).unwrap();
        assert!((r.epsilon - 1.5).abs() < 1e-12);
        assert!(rdp_to_adp(a(2.0), e(0.5), 0.0).is_err());
        assert!(rdp_to_adp(a(2.0), e(0.5), 1.0).is_err());
    }

    #[test]
    fn adp_conversion_monotone() {
        let lo = rdp_to_adp(a(20.0), e(0.1), 1e-5).unwrap().epsilon;
        let hi = rdp_to_adp(a(20.0), e(0.2), 1e-5).unwrap().epsilon;
        let loose = rdp_to_adp(a(20.0), e(0.1), 1e-3).unwrap().epsilon;
        assert!(hi > lo);
        assert!(loose < lo);
    }

    #[test]
    fn stopping_total_examples() {
        assert!((total_with_stopping(&[e(0.1), e(0.2)], e(0.01)).value() - 0.3).abs() < 1e-15);
        assert_eq!(total_with_stopping(&[e(0.005)], e(0.01)), e(0.01));
        assert_eq!(total_with_stopping(&[], e(0.01)), e(0.01));
    }

    #[test]
    fn schedule_examples() {
        let sch = log_spaced_schedule(0.01, 1.0, 7).unwrap();
        let want = [0.01, 0.021544, 0.046416, 0.1, 0.215443, 0.464159, 1.0];
        for (got, want) in sch.values().iter().zip(want) {
            assert!((got.value() - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert_eq!(sch.first().value(), 0.01);
        assert_eq!(sch.last().value(), 1.0);
        assert!(log_spaced_schedule(1.0, 1.0, 2).is_err());
        assert!(log_spaced_schedule(0.0, 1.0, 3).is_err());
        assert!(log_spaced_schedule(0.1, 1.0, 1).is_err());
        let sch = log_spaced_schedule(0.1, 10.0, 3).unwrap().as_f64();
        assert!((sch[1] - 1.0).abs() < 1e-12);
        assert_eq!(sch[2], 10.0);
    }

    #[test]
    fn schedule_rejects_non_increasing() {
        assert!(EpsilonSchedule::new(vec![0.1, 0.1]).is_err());
        assert!(EpsilonSchedule::new(vec![]).is_err());
        assert!(EpsilonSchedule::new(vec![0.1, f64::INFINITY]).is_err());
    }

    #[test]
    fn conversion_csv_layout() {
        let csv = conversion_table_csv(a(20.0), 1e-5, &[e(0.01), e(1.0)]).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0.010000,0.615943");
        assert_eq!(lines[2], "1.000000,1.605943");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn variance_round_trip(alpha in 1.001f64..100.0, delta in 1e-4f64..10.0, eps in 1e-4f64..10.0) {
                let v = gaussian_variance_for_rdp(a(alpha), s(delta), e(eps)).unwrap();
                let back = rdp_epsilon_of_gaussian(a(alpha), s(delta), v).unwrap().value();
                prop_assert!(((back - eps) / eps).abs() < 1e-12);
            }

            #[test]
            fn stopping_total_monotone(xs in proptest::collection::vec(0.0f64..1.0, 0..6), t in 0.0f64..2.0, bump in 0.0f64..1.0, idx in 0usize..6) {
                let list: Vec<_> = xs.iter().map(|&x| e(x)).collect();
                let base = total_with_stopping(&list, e(t)).value();
                prop_assert!(base >= t);
                prop_assert!(total_with_stopping(&list, e(t + bump)).value() >= base);
                if !list.is_empty() {
                    let mut more = list.clone();
                    let i = idx % more.len();
                    more[i] = e(more[i].value() + bump);
                    prop_assert!(total_with_stopping(&more, e(t)).value() >= base);
                }
            }
        }
    }
}
