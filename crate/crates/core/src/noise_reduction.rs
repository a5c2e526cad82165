//! Gaussian noise reduction.
//!
//! A session releases a sensitive vector `f(X)` repeatedly at increasing
//! cumulative budgets `eps_1 <= eps_2 <= ...`. Each release `s_hat_i` has
//! marginal variance `T_i = alpha * delta^2 / (2 eps_i)` per coordinate and
//! the whole sequence costs only `eps_i`.
//!
//! Two samplers are provided and produce identically distributed sequences:
//!
//! - [`NoiseReductionSession::pw_release`] draws an independent Gaussian for
//!   every budget increment and reports the precision-weighted mean of all
//!   draws so far.
//! - [`NoiseReductionSession::brownian_release`] draws each release directly
//!   from its Gaussian conditional law given the previous one (a Brownian
//!   bridge step), never materialising a path.

use crate::accounting::{gaussian_variance_for_rdp, RdpBudget, RenyiOrder, Sensitivity, Variance};
use crate::error::{Error, Result};
use crate::mechanisms::{sample_gaussian, Draw, ExPostOutput};
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    PrecisionWeighted,
    Brownian,
}

impl Sampler {
    fn name(self) -> &'static str {
        match self {
            Sampler::PrecisionWeighted => "precision-weighted",
            Sampler::Brownian => "Brownian",
        }
    }
}

/// Conditional law of the next release given the session history.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub mean: Vec<f64>,
    /// Per-coordinate variance.
    pub variance: f64,
}

/// Running state of one noise-reduction sequence.
#[derive(Debug, Clone)]
pub struct NoiseReductionSession {
    fx: Vec<f64>,
    delta: Sensitivity,
    alpha: RenyiOrder,
    sampler: Option<Sampler>,
    eps_history: Vec<RdpBudget>,
    /// Raw per-increment draws; only filled by the precision-weighted sampler.
    tilde_history: Vec<Draw>,
    hat_history: Vec<Vec<f64>>,
    /// Per-increment variances for the precision-weighted sampler, `T_i` for
    /// the Brownian sampler.
    variance_history: Vec<Variance>,
}

impl NoiseReductionSession {
    pub fn new(fx: Vec<f64>, delta: Sensitivity, alpha: RenyiOrder) -> Self {
        NoiseReductionSession {
            fx,
            delta,
            alpha,
            sampler: None,
            eps_history: Vec::new(),
            tilde_history: Vec::new(),
            hat_history: Vec::new(),
            variance_history: Vec::new(),
        }
    }

    pub fn fx(&self) -> &[f64] {
        &self.fx
    }

    pub fn alpha(&self) -> RenyiOrder {
        self.alpha
    }

    pub fn sensitivity(&self) -> Sensitivity {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.fx.len()
    }

    pub fn eps_history(&self) -> &[RdpBudget] {
        &self.eps_history
    }

    pub fn hat_history(&self) -> &[Vec<f64>] {
        &self.hat_history
    }

    pub fn tilde_history(&self) -> &[Draw] {
        &self.tilde_history
    }

    pub fn variance_history(&self) -> &[Variance] {
        &self.variance_history
    }

    pub fn len(&self) -> usize {
        self.eps_history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_history.is_empty()
    }

    /// Latest cumulative budget, zero before the first release.
    pub fn current_eps(&self) -> RdpBudget {
        self.eps_history.last().copied().unwrap_or(RdpBudget::ZERO)
    }

    /// Fails if the session's order differs from `alpha`.
    pub fn ensure_order(&self, alpha: RenyiOrder) -> Result<()> {
        if alpha != self.alpha {
            return Err(Error::OrderChanged);
        }
        Ok(())
    }

    /// Marginal variance `T = alpha delta^2 / (2 eps)` of a release at
    /// cumulative budget `eps`.
    pub fn marginal_variance(&self, eps: RdpBudget) -> Result<Variance> {
        gaussian_variance_for_rdp(self.alpha, self.delta, eps)
    }

    fn admit(&mut self, eps: RdpBudget, sampler: Sampler) -> Result<()> {
        match self.sampler {
            Some(s) if s != sampler => return Err(Error::MethodMismatch(s.name())),
            _ => {}
        }
        if eps.is_infinite() {
            return Err(Error::InvalidBudget(eps.value()));
        }
        let previous = self.current_eps();
        if self.is_empty() {
            if eps.value() <= 0.0 {
                return Err(Error::InvalidBudget(eps.value()));
            }
        } else if eps < previous {
            return Err(Error::DecreasingBudget { previous: previous.value(), requested: eps.value() });
        }
        self.sampler = Some(sampler);
        Ok(())
    }

    /// Precision-weighted release at cumulative budget `eps`.
    pub fn pw_release(&mut self, eps: RdpBudget, rng: &mut Rng) -> Result<ExPostOutput<Vec<f64>>> {
        self.admit(eps, Sampler::PrecisionWeighted)?;
        let increment = RdpBudget::new(eps.value() - self.current_eps().value())?;
        let variance = gaussian_variance_for_rdp(self.alpha, self.delta, increment)?;
        let draw = sample_gaussian(&self.fx, variance, rng)?;
        self.tilde_history.push(draw);
        self.variance_history.push(variance);

        let mut weighted = vec![0.0; self.dim()];
        let mut precision = 0.0;
        for (draw, var) in self.tilde_history.iter().zip(&self.variance_history) {
            let w = var.precision();
            if let Some(values) = draw.value() {
                if w > 0.0 {
                    for (acc, v) in weighted.iter_mut().zip(values) {
                        *acc += w * v;
                    }
                }
            }
            precision += w;
        }
        let hat: Vec<f64> = if matches!(variance, Variance::Infinite) {
            // Zero-weight increment: the estimate is unchanged bit for bit.
            self.hat_history.last().cloned().expect("admit guarantees a prior release")
        } else {
            weighted.iter().map(|w| w / precision).collect()
        };
        self.eps_history.push(eps);
        self.hat_history.push(hat.clone());
        Ok(ExPostOutput { payload: hat, reported_eps: eps })
    }

    /// Brownian release at cumulative budget `eps`, sampled from the
    /// conditional law given the previous release.
    pub fn brownian_release(&mut self, eps: RdpBudget, rng: &mut Rng) -> Result<ExPostOutput<Vec<f64>>> {
        self.admit(eps, Sampler::Brownian)?;
        let t_i = self.marginal_variance(eps)?;
        let hat = if self.is_empty() {
            match sample_gaussian(&self.fx, t_i, rng)? {
                Draw::Value(v) => v,
                Draw::ZeroWeight => unreachable!("first budget is positive and finite"),
            }
        } else {
            let law = self.conditional_law(eps)?;
            match sample_gaussian(&law.mean, Variance::Finite(law.variance), rng)? {
                Draw::Value(v) => v,
                Draw::ZeroWeight => unreachable!("conditional variance is finite"),
            }
        };
        self.eps_history.push(eps);
        self.variance_history.push(t_i);
        self.hat_history.push(hat.clone());
        Ok(ExPostOutput { payload: hat, reported_eps: eps })
    }

    /// Exact law of the next release at cumulative budget `eps` given the
    /// history. Identical for both samplers:
    /// mean `f + (T_i / T_prev)(s_prev - f)`, variance `(T_prev - T_i) T_i / T_prev`.
    pub fn conditional_law(&self, eps: RdpBudget) -> Result<ConditionalLaw> {
        let previous = self.hat_history.last().ok_or(Error::EmptySession)?;
        let eps_prev = self.current_eps();
        if eps < eps_prev {
            return Err(Error::DecreasingBudget { previous: eps_prev.value(), requested: eps.value() });
        }
        if eps == eps_prev {
            return Ok(ConditionalLaw { mean: previous.clone(), variance: 0.0 });
        }
        let t_prev = self.marginal_variance(eps_prev)?.finite().expect("previous budget is positive");
        let t_i = self.marginal_variance(eps)?.finite().unwrap_or(0.0);
        let ratio = t_i / t_prev;
        let mean = self
            .fx
            .iter()
            .zip(previous)
            .map(|(f, s)| f + ratio * (s - f))
            .collect();
        Ok(ConditionalLaw { mean, variance: (t_prev - t_i) * t_i / t_prev })
    }
}
