//! Annealed densities interpolating between prior (t = 0) and posterior (t = 1).
//!
//! Likelihood factors are raised to the power `t`. A likelihood factor equal to
//! zero contributes `-Γ·t` for `t < 1` and `-∞` at `t = 1`, which keeps every
//! intermediate measure normalizable while still separating zero-likelihood states.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{FactorId, FactorKind, Model, Role, State};

/// Widening constant applied per zero likelihood factor.
pub const WIDENING: f64 = 1e100;
const CLAMP: f64 = -1e300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnealError {
    #[error("annealing parameter {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("annealing parameters out of order: {0} >= {1}")]
    Order(f64, f64),
}

/// Likelihood value split into its finite part and the number of zero factors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LikelihoodParts {
    pub finite: f64,
    pub n_zero: u32,
}

impl LikelihoodParts {
    pub fn add(&mut self, log_l: f64) {
        if log_l == f64::NEG_INFINITY {
            self.n_zero += 1;
        } else {
            self.finite += log_l;
        }
    }

    /// Σ_i A_t(i).
    pub fn annealed(&self, t: f64) -> f64 {
        if self.n_zero == 0 {
            return if t == 0.0 { 0.0 } else { t * self.finite };
        }
        if t >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let widen = (-WIDENING * t * self.n_zero as f64).max(CLAMP);
        if t == 0.0 {
            0.0
        } else {
            widen + t * self.finite
        }
    }

    /// Plain log-likelihood, `-∞` if any factor is zero.
    pub fn total(&self) -> f64 {
        if self.n_zero > 0 {
            f64::NEG_INFINITY
        } else {
            self.finite
        }
    }

    /// Σ_i [A_t(i) − A_{t_prev}(i)].
    pub fn increment(&self, t_prev: f64, t: f64) -> f64 {
        if t == t_prev {
            return 0.0;
        }
        if self.n_zero == 0 {
            return (t - t_prev) * self.finite;
        }
        self.annealed(t) - self.annealed(t_prev)
    }
}

/// π_t for one model, with the likelihood/prior split frozen at construction.
#[derive(Clone)]
pub struct AnnealedDensity {
    model: Arc<Model>,
    likelihood: Vec<FactorId>,
    prior: Vec<FactorId>,
    is_likelihood: Vec<bool>,
}

impl std::fmt::Debug for AnnealedDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnealedDensity")
            .field("likelihood", &self.likelihood.len())
            .field("prior", &self.prior.len())
            .finish()
    }
}

impl AnnealedDensity {
    pub fn new(model: Arc<Model>) -> Self {
        let mut likelihood = Vec::new();
        let mut prior = Vec::new();
        let mut is_likelihood = vec![false; model.factors().len()];
        for f in model.factors() {
            if f.kind != FactorKind::Numeric {
                continue;
            }
            match model.role(f.id) {
                Role::Likelihood => {
                    is_likelihood[f.id.index()] = true;
                    likelihood.push(f.id);
                }
                Role::Prior => prior.push(f.id),
                Role::Constraint => {}
            }
        }
        AnnealedDensity { model, likelihood, prior, is_likelihood }
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn likelihood_factors(&self) -> &[FactorId] {
        &self.likelihood
    }

    pub fn prior_factors(&self) -> &[FactorId] {
        &self.prior
    }

    pub fn is_likelihood(&self, f: FactorId) -> bool {
        self.is_likelihood[f.index()]
    }

    pub fn log_prior(&self, state: &State) -> f64 {
        self.model.log_density_of(&self.prior, state)
    }

    pub fn likelihood_parts(&self, state: &State) -> LikelihoodParts {
        let mut parts = LikelihoodParts::default();
        for f in &self.likelihood {
            parts.add(self.model.factor(*f).evaluate(state));
        }
        parts
    }

    pub fn log_likelihood(&self, state: &State) -> f64 {
        self.likelihood_parts(state).total()
    }

    pub fn log_density(&self, state: &State, t: f64) -> Result<f64, AnnealError> {
        check_t(t)?;
        Ok(self.log_density_unchecked(state, t))
    }

    pub(crate) fn log_density_unchecked(&self, state: &State, t: f64) -> f64 {
        let prior = self.log_prior(state);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        prior + self.likelihood_parts(state).annealed(t)
    }

    /// Annealed sum restricted to `factors`; equals the full density up to a
    /// term that does not depend on variables outside their scopes.
    pub fn log_density_local(&self, factors: &[FactorId], state: &State, t: f64) -> f64 {
        let mut prior = 0.0;
        let mut parts = LikelihoodParts::default();
        for &f in factors {
            let v = self.model.factor(f).evaluate(state);
            if self.is_likelihood[f.index()] {
                parts.add(v);
            } else {
                if v == f64::NEG_INFINITY {
                    return v;
                }
                prior += v;
            }
        }
        prior + parts.annealed(t)
    }

    pub fn incremental_log_weight(&self, state: &State, t_prev: f64, t: f64) -> Result<f64, AnnealError> {
        check_t(t_prev)?;
        check_t(t)?;
        if t_prev > t {
            return Err(AnnealError::Order(t_prev, t));
        }
        Ok(self.likelihood_parts(state).increment(t_prev, t))
    }
}

fn check_t(t: f64) -> Result<(), AnnealError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(AnnealError::OutOfRange(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widening_examples() {
        let p = LikelihoodParts { finite: 0.0, n_zero: 1 };
        assert_eq!(p.annealed(0.5), -5e99);
        assert_eq!(p.annealed(0.0), 0.0);
        assert_eq!(p.annealed(1.0), f64::NEG_INFINITY);
        assert_eq!(p.increment(0.0, 0.3), -3e99);
        let q = LikelihoodParts { finite: -2.0, n_zero: 0 };
        assert!((q.increment(0.4, 0.5) + 0.2).abs() < 1e-15);
        assert_eq!(q.increment(0.4, 0.4), 0.0);
        let r = LikelihoodParts { finite: -3.0, n_zero: 0 };
        assert_eq!(r.annealed(0.25), -0.75);
    }

    #[test]
    fn clamp_keeps_order() {
        let many = LikelihoodParts { finite: 0.0, n_zero: u32::MAX };
        let v = many.annealed(0.9);
        assert!(v.is_finite());
        assert!(v < LikelihoodParts { finite: 0.0, n_zero: 1 }.annealed(0.9));
    }
}
