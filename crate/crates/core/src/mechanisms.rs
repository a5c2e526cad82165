//! Noise primitives and the finite-outcome mechanism model.
//!
//! A [`DiscretePairMechanism`] tabulates, for one fixed pair of neighbouring
//! inputs `X` and `X'`, the probability of every outcome together with the
//! privacy bound the mechanism reports alongside it. All ex-post definitions
//! reduce to finite sums over such a table.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::accounting::{RdpBudget, Variance};
use crate::error::{Error, Result};
use crate::Rng;

/// Tolerance on probability sums and kernel rows.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A released value paired with the privacy bound reported for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExPostOutput<Y> {
    pub payload: Y,
    pub reported_eps: RdpBudget,
}

/// Result of a Gaussian draw. An infinite-variance draw carries no value and
/// must only ever be combined with weight zero.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Value(Vec<f64>),
    ZeroWeight,
}

impl Draw {
    pub fn value(&self) -> Option<&[f64]> {
        match self {
            Draw::Value(v) => Some(v),
            Draw::ZeroWeight => None,
        }
    }
}

/// Adds i.i.d. `N(0, variance)` noise to each coordinate of `mean`.
pub fn sample_gaussian(mean: &[f64], variance: Variance, rng: &mut Rng) -> Result<Draw> {
    match variance {
        Variance::Infinite => Ok(Draw::ZeroWeight),
        Variance::Finite(v) if v.is_nan() || v < 0.0 => Err(Error::InvalidVariance(v)),
        Variance::Finite(v) if v.is_infinite() => Ok(Draw::ZeroWeight),
        Variance::Finite(v) if v == 0.0 => Ok(Draw::Value(mean.to_vec())),
        Variance::Finite(v) => {
            let sd = v.sqrt();
            Ok(Draw::Value(
                mean.iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ))
        }
    }
}

/// Draws from `Laplace(mean, scale)` by inverting the CDF.
pub fn sample_laplace(mean: f64, scale: f64, rng: &mut Rng) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("Laplace scale {scale} must be > 0")));
    }
    // u in (-1/2, 1/2), excluding the endpoint that maps to infinity
    let mut u: f64 = rng.random::<f64>() - 0.5;
    while u == -0.5 {
        u = rng.random::<f64>() - 0.5;
    }
    Ok(mean - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// One row of a [`DiscretePairMechanism`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub label: String,
    /// Probability under `X`.
    pub p_x: f64,
    /// Probability under the neighbour `X'`.
    pub p_xp: f64,
    pub eps: RdpBudget,
}

/// Finite-outcome mechanism evaluated on a neighbouring pair `(X, X')`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePairMechanism {
    outcomes: Vec<Outcome>,
}

fn check_distribution(name: &str, ps: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in ps {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::NotADistribution(format!("{name}: entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::NotADistribution(format!("{name} sums to {total}")));
    }
    Ok(())
}

impl DiscretePairMechanism {
    pub fn new(outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::NotADistribution("no outcomes".into()));
        }
        check_distribution("p_X", outcomes.iter().map(|o| o.p_x))?;
        check_distribution("p_X'", outcomes.iter().map(|o| o.p_xp))?;
        Ok(DiscretePairMechanism { outcomes })
    }

    /// Builds a mechanism from parallel probability vectors, labelling
    /// outcomes by index.
    pub fn from_vectors(p_x: &[f64], p_xp: &[f64], eps: &[RdpBudget]) -> Result<Self> {
        if p_x.len() != p_xp.len() {
            return Err(Error::DimensionMismatch { expected: p_x.len(), actual: p_xp.len() });
        }
        if p_x.len() != eps.len() {
            return Err(Error::DimensionMismatch { expected: p_x.len(), actual: eps.len() });
        }
        Self::new(
            (0..p_x.len())
                .map(|i| Outcome { label: i.to_string(), p_x: p_x[i], p_xp: p_xp[i], eps: eps[i] })
                .collect(),
        )
    }

    /// Binary randomized response that reports the true bit with probability
    /// `p_true`. Under `X` the true bit is 1, under `X'` it is 0.
    pub fn randomized_response(p_true: f64, eps: RdpBudget) -> Result<Self> {
        let q = 1.0 - p_true;
        Self::new(vec![
            Outcome { label: "1".into(), p_x: p_true, p_xp: q, eps },
            Outcome { label: "0".into(), p_x: q, p_xp: p_true, eps },
        ])
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// The same mechanism with the roles of `X` and `X'` exchanged.
    pub fn swapped(&self) -> Self {
        DiscretePairMechanism {
            outcomes: self
                .outcomes
                .iter()
                .map(|o| Outcome { label: o.label.clone(), p_x: o.p_xp, p_xp: o.p_x, eps: o.eps })
                .collect(),
        }
    }

    /// Replaces every reported bound with `eps`.
    pub fn with_constant_eps(&self, eps: RdpBudget) -> Self {
        DiscretePairMechanism {
            outcomes: self.outcomes.iter().map(|o| Outcome { eps, ..o.clone() }).collect(),
        }
    }

    /// Distribution of the reported bound under `X` and `X'`, keyed by the
    /// bit pattern of the bound and listed in first-appearance order.
    pub fn eps_marginal(&self) -> Vec<(RdpBudget, f64, f64)> {
        let mut out: Vec<(RdpBudget, f64, f64)> = Vec::new();
        for o in &self.outcomes {
            match out.iter_mut().find(|(e, _, _)| e.value().to_bits() == o.eps.value().to_bits()) {
                Some(slot) => {
                    slot.1 += o.p_x;
                    slot.2 += o.p_xp;
                }
                None => out.push((o.eps, o.p_x, o.p_xp)),
            }
        }
        out
    }

    /// Parses the tabular text format: one outcome per line as
    /// `label p_X p_X' eps`, separated by whitespace or commas. `#` starts a
    /// comment; `inf` is accepted for the bound. A first line whose second
    /// field is not numeric is taken as a header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut outcomes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if outcomes.is_empty() && fields.len() == 4 && fields[1].parse::<f64>().is_err() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            outcomes.push(Outcome {
                label: fields[0].to_string(),
                p_x: num(fields[1])?,
                p_xp: num(fields[2])?,
                eps: RdpBudget::new(num(fields[3])?)?,
            });
        }
        Self::new(outcomes)
    }

    /// Inverse of [`DiscretePairMechanism::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# label p_X p_X' eps\n");
        for o in &self.outcomes {
            let eps = if o.eps.is_infinite() { "inf".to_string() } else { format!("{:e}", o.eps.value()) };
            let _ = writeln!(out, "{} {:e} {:e} {}", o.label, o.p_x, o.p_xp, eps);
        }
        out
    }
}

/// A randomised map from the outcomes of a mechanism to target labels,
/// given as a row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMap {
    targets: Vec<String>,
    kernel: Vec<Vec<f64>>,
}

impl StochasticMap {
    pub fn new(targets: Vec<String>, kernel: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != targets.len() {
                return Err(Error::DimensionMismatch { expected: targets.len(), actual: row.len() });
            }
            check_distribution(&format!("kernel row {i}"), row.iter().copied())?;
        }
        Ok(StochasticMap { targets, kernel })
    }

    pub fn identity(n: usize) -> Self {
        let kernel = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        StochasticMap { targets: (0..n).map(|i| i.to_string()).collect(), kernel }
    }

    /// Deterministic map sending source `i` to target `assignment[i]`.
    pub fn deterministic(assignment: &[usize], n_targets: usize) -> Result<Self> {
        let mut kernel = Vec::with_capacity(assignment.len());
        for &a in assignment {
            if a >= n_targets {
                return Err(Error::DimensionMismatch { expected: n_targets, actual: a + 1 });
            }
            let mut row = vec![0.0; n_targets];
            row[a] = 1.0;
            kernel.push(row);
        }
        Self::new((0..n_targets).map(|i| i.to_string()).collect(), kernel)
    }

    pub fn sources(&self) -> usize {
        self.kernel.len()
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }
}

/// Post-processing that passes the reported bound through unchanged.
///
/// Each outcome of the result is a pair (target label, source bound): the
/// mass a source outcome sends to a target stays in the stratum of the bound
/// it was reported with, so merging outcomes that reported different bounds
/// never mixes them.
pub fn post_process(mech: &DiscretePairMechanism, map: &StochasticMap) -> Result<DiscretePairMechanism> {
    if map.sources() != mech.len() {
        return Err(Error::DimensionMismatch { expected: mech.len(), actual: map.sources() });
    }
    // (target, eps bits) -> index into `cells`, in deterministic order
    let mut index: HashMap<(usize, u64), usize> = HashMap::new();
    let mut cells: Vec<(usize, RdpBudget, f64, f64)> = Vec::new();
    for (j, _) in map.targets.iter().enumerate() {
        for (i, o) in mech.outcomes.iter().enumerate() {
            let w = map.kernel[i][j];
            if w == 0.0 {
                continue;
            }
            let key = (j, o.eps.value().to_bits());
            let slot = *index.entry(key).or_insert_with(|| {
                cells.push((j, o.eps, 0.0, 0.0));
                cells.len() - 1
            });
            cells[slot].2 += o.p_x * w;
            cells[slot].3 += o.p_xp * w;
        }
    }
    let mut strata_per_target = vec![0usize; map.targets.len()];
    for c in &cells {
        strata_per_target[c.0] += 1;
    }
    let outcomes = cells
        .into_iter()
        .map(|(j, eps, p_x, p_xp)| {
            let label = if strata_per_target[j] == 1 {
                map.targets[j].clone()
            } else {
                format!("{}@{}", map.targets[j], eps)
            };
            Outcome { label, p_x, p_xp, eps }
        })
        .collect();
    DiscretePairMechanism::new(outcomes)
}

/// Releases the input with probability one half and nothing otherwise,
/// reporting an infinite bound whenever data is released and zero when not.
pub fn pathological_mechanism() -> DiscretePairMechanism {
    DiscretePairMechanism {
        outcomes: vec![
            Outcome { label: "reveal-X".into(), p_x: 0.5, p_xp: 0.0, eps: RdpBudget::INFINITE },
            Outcome { label: "reveal-X'".into(), p_x: 0.0, p_xp: 0.5, eps: RdpBudget::INFINITE },
            Outcome { label: "nothing".into(), p_x: 0.5, p_xp: 0.5, eps: RdpBudget::ZERO },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn e(x: f64) -> RdpBudget {
        RdpBudget::new(x).unwrap()
    }

    #[test]
    fn gaussian_degenerate_and_infinite() {
        let mut rng = seeded_rng(1);
        let mean = [1.5, -2.0];
        assert_eq!(sample_gaussian(&mean, Variance::Finite(0.0), &mut rng).unwrap(), Draw::Value(mean.to_vec()));
        assert_eq!(sample_gaussian(&mean, Variance::Infinite, &mut rng).unwrap(), Draw::ZeroWeight);
        assert!(sample_gaussian(&mean, Variance::Finite(-1.0), &mut rng).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = seeded_rng(7);
        let n = 1_000_000;
        let mean = vec![0.0; n];
        let xs = sample_gaussian(&mean, Variance::Finite(1.0), &mut rng).unwrap();
        let xs = xs.value().unwrap();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 4.0 / (n as f64).sqrt(), "mean {m}");
        assert!((v - 1.0).abs() < 0.01, "var {v}");
    }

    #[test]
    fn laplace_moments_and_median() {
        let mut rng = seeded_rng(11);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_laplace(0.0, 1.0, &mut rng).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v - 2.0).abs() < 0.04, "var {v}");
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(xs[n / 2].abs() < 0.01);
        assert!(sample_laplace(0.0, 0.0, &mut rng).is_err());
        assert!(sample_laplace(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn mechanism_validates_mass() {
        assert!(DiscretePairMechanism::from_vectors(&[0.5, 0.4], &[0.5, 0.5], &[e(0.0), e(0.0)]).is_err());
        assert!(DiscretePairMechanism::from_vectors(&[1.5, -0.5], &[0.5, 0.5], &[e(0.0), e(0.0)]).is_err());
        assert!(DiscretePairMechanism::from_vectors(&[0.5, 0.5], &[0.5, 0.5], &[e(0.0)]).is_err());
    }

    #[test]
    fn identity_post_processing_is_identity() {
        let m = DiscretePairMechanism::from_vectors(&[0.2, 0.3, 0.5], &[0.1, 0.6, 0.3], &[e(0.1), e(0.5), e(0.1)]).unwrap();
        let pp = post_process(&m, &StochasticMap::identity(3)).unwrap();
        assert_eq!(pp, m);
    }

    #[test]
    fn merging_everything_gives_point_masses() {
        let m = DiscretePairMechanism::from_vectors(&[0.2, 0.8], &[0.6, 0.4], &[e(0.3), e(0.3)]).unwrap();
        let pp = post_process(&m, &StochasticMap::deterministic(&[0, 0], 1).unwrap()).unwrap();
        assert_eq!(pp.len(), 1);
        assert!((pp.outcomes()[0].p_x - 1.0).abs() < 1e-15);
        assert!((pp.outcomes()[0].p_xp - 1.0).abs() < 1e-15);
        assert_eq!(pp.outcomes()[0].eps, e(0.3));
    }

    #[test]
    fn merging_two_outcomes_sums_their_mass() {
        let p_x = [0.1, 0.35, 0.3, 0.25];
        let p_xp = [0.0, 0.2, 0.4, 0.4];
        let eps = [e(2f64.ln()); 4];
        let m = DiscretePairMechanism::from_vectors(&p_x, &p_xp, &eps).unwrap();
        let pp = post_process(&m, &StochasticMap::deterministic(&[0, 0, 1, 2], 3).unwrap()).unwrap();
        assert_eq!(pp.len(), 3);
        assert_eq!(pp.outcomes()[0].p_x, p_x[0] + p_x[1]);
        assert_eq!(pp.outcomes()[0].p_xp, p_xp[0] + p_xp[1]);
        assert_eq!(pp.outcomes()[1].p_x, p_x[2]);
    }

    #[test]
    fn merging_distinct_eps_keeps_strata() {
        let m = DiscretePairMechanism::from_vectors(&[0.5, 0.5], &[0.5, 0.5], &[e(0.1), e(0.2)]).unwrap();
        let pp = post_process(&m, &StochasticMap::deterministic(&[0, 0], 1).unwrap()).unwrap();
        assert_eq!(pp.len(), 2);
        assert_eq!(pp.outcomes()[0].label, "0@0.1");
        assert_eq!(pp.outcomes()[1].eps, e(0.2));
    }

    #[test]
    fn post_process_rejects_mismatch() {
        let m = DiscretePairMechanism::from_vectors(&[0.5, 0.5], &[0.5, 0.5], &[e(0.1), e(0.2)]).unwrap();
        assert!(post_process(&m, &StochasticMap::identity(3)).is_err());
        assert!(StochasticMap::new(vec!["a".into()], vec![vec![0.5]]).is_err());
    }

    #[test]
    fn pathological_tables() {
        let m = pathological_mechanism();
        let probs: Vec<_> = m.outcomes().iter().map(|o| (o.p_x, o.p_xp)).collect();
        assert_eq!(probs, vec![(0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]);
        assert!(m.outcomes()[0].eps.is_infinite());
        assert_eq!(m.outcomes()[2].eps, RdpBudget::ZERO);
    }

    #[test]
    fn text_format_round_trip() {
        let m = pathological_mechanism();
        let back = DiscretePairMechanism::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let parsed = DiscretePairMechanism::parse("label,p_x,p_xp,eps\na,0.25,0.75,1.0\nb,0.75,0.25,inf # tail\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert!(parsed.outcomes()[1].eps.is_infinite());
        assert!(DiscretePairMechanism::parse("a 0.5 0.5\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn normalise(v: Vec<f64>) -> Vec<f64> {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        }

        fn mech_and_map() -> impl Strategy<Value = (DiscretePairMechanism, StochasticMap)> {
            (2usize..6, 1usize..5).prop_flat_map(|(n, k)| {
                (
                    proptest::collection::vec(0.01f64..1.0, n),
                    proptest::collection::vec(0.01f64..1.0, n),
                    proptest::collection::vec(0usize..3, n),
                    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, k), n),
                )
                    .prop_map(move |(px, pxp, eps_idx, rows)| {
                        let levels = [0.0, 0.3, 1.2];
                        let eps: Vec<_> = eps_idx.iter().map(|&i| RdpBudget::new(levels[i]).unwrap()).collect();
                        let mech = DiscretePairMechanism::from_vectors(&normalise(px), &normalise(pxp), &eps).unwrap();
                        let kernel = rows
                            .into_iter()
                            .map(|r| {
                                let s: f64 = r.iter().sum();
                                if s == 0.0 { vec![1.0 / k as f64; k] } else { r.into_iter().map(|x| x / s).collect() }
                            })
                            .collect();
                        let map = StochasticMap::new((0..k).map(|i| i.to_string()).collect(), kernel).unwrap();
                        (mech, map)
                    })
            })
        }

        proptest! {
            #[test]
            fn post_processing_preserves_mass_and_eps_marginal((mech, map) in mech_and_map()) {
                let pp = post_process(&mech, &map).unwrap();
                let total_x: f64 = pp.outcomes().iter().map(|o| o.p_x).sum();
                prop_assert!((total_x - 1.0).abs() < 1e-12);
                let before = mech.eps_marginal();
                let after = pp.eps_marginal();
                for (eps, px, pxp) in before {
                    let (_, ax, axp) = after.iter().find(|(e, _, _)| *e == eps).copied().unwrap();
                    prop_assert!((px - ax).abs() < 1e-12);
                    prop_assert!((pxp - axp).abs() < 1e-12);
                }
            }
        }
    }
}
