//! Built-in distributions: log densities split into factor terms, and generators.
//!
//! Parameters are passed as [`Arg`]s (integers as reals). Invalid parameters
//! give `-∞` densities and a hard error when sampling.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::Distribution as _;
use thiserror::Error;

use crate::math::{ln_gamma, log_beta, log_binomial, log_factorial, log_sum_exp, softplus, xlogy};
use crate::model::State;
use crate::rng::{RandomSource, RngAdapter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("unknown distribution `{0}`")]
    Unknown(String),
    #[error("distribution `{0}` is not implemented")]
    NotImplemented(String),
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("invalid parameters for `{0}`")]
    InvalidParameters(String),
    #[error("`{0}` has no single random variable")]
    MultiOutput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Bernoulli,
    Binomial,
    BetaBinomial,
    Categorical,
    DiscreteUniform,
    Geometric,
    NegativeBinomial,
    Poisson,
    Beta,
    ChiSquared,
    ContinuousUniform,
    Exponential,
    Gamma,
    HalfStudentT,
    Laplace,
    Logistic,
    Normal,
    StudentT,
    Weibull,
    Dirichlet,
    SimplexUniform,
    SymmetricDirichlet,
    LogPotential,
    UniformPermutation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Real,
    Int,
    Simplex,
    Permutation,
    /// No realization (pure potentials).
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Int,
    Vector,
}

/// Which inputs a factor term reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermSpec {
    pub uses_realization: bool,
    pub uses_params: bool,
}

const FULL: &[TermSpec] = &[TermSpec { uses_realization: true, uses_params: true }];
const PARAMS_ONLY: &[TermSpec] = &[TermSpec { uses_realization: false, uses_params: true }];
const NORMAL_TERMS: &[TermSpec] = &[
    TermSpec { uses_realization: false, uses_params: false },
    TermSpec { uses_realization: false, uses_params: true },
    TermSpec { uses_realization: true, uses_params: true },
];
const UNIFORM_TERMS: &[TermSpec] = &[
    TermSpec { uses_realization: false, uses_params: true },
    TermSpec { uses_realization: true, uses_params: true },
];
const PERM_TERMS: &[TermSpec] = &[TermSpec { uses_realization: true, uses_params: false }];

#[derive(Debug)]
pub struct DistributionSpec {
    pub name: &'static str,
    pub params: &'static [(&'static str, ParamKind)],
    pub support: Support,
    pub terms: &'static [TermSpec],
}

macro_rules! spec {
    ($name:literal, [$(($p:literal, $k:ident)),*], $support:ident, $terms:expr) => {
        DistributionSpec {
            name: $name,
            params: &[$(($p, ParamKind::$k)),*],
            support: Support::$support,
            terms: $terms,
        }
    };
}

static SPECS: [DistributionSpec; 24] = [
    spec!("Bernoulli", [("probability", Real)], Int, FULL),
    spec!("Binomial", [("numberOfTrials", Int), ("probabilityOfSuccess", Real)], Int, FULL),
    spec!("BetaBinomial", [("numberOfTrials", Int), ("alpha", Real), ("beta", Real)], Int, FULL),
    spec!("Categorical", [("probabilities", Vector)], Int, FULL),
    spec!("DiscreteUniform", [("minInclusive", Int), ("maxExclusive", Int)], Int, FULL),
    spec!("Geometric", [("probability", Real)], Int, FULL),
    spec!("NegativeBinomial", [("r", Real), ("p", Real)], Int, FULL),
    spec!("Poisson", [("mean", Real)], Int, FULL),
    spec!("Beta", [("alpha", Real), ("beta", Real)], Real, FULL),
    spec!("ChiSquared", [("nu", Int)], Real, FULL),
    spec!("ContinuousUniform", [("min", Real), ("max", Real)], Real, UNIFORM_TERMS),
    spec!("Exponential", [("rate", Real)], Real, FULL),
    spec!("Gamma", [("shape", Real), ("rate", Real)], Real, FULL),
    spec!("HalfStudentT", [("nu", Real), ("sigma", Real)], Real, FULL),
    spec!("Laplace", [("location", Real), ("scale", Real)], Real, FULL),
    spec!("Logistic", [("location", Real), ("scale", Real)], Real, FULL),
    spec!("Normal", [("mean", Real), ("variance", Real)], Real, NORMAL_TERMS),
    spec!("StudentT", [("nu", Real), ("mu", Real), ("sigma", Real)], Real, FULL),
    spec!("Weibull", [("scale", Real), ("shape", Real)], Real, FULL),
    spec!("Dirichlet", [("concentrations", Vector)], Simplex, FULL),
    spec!("SimplexUniform", [("dim", Int)], Simplex, FULL),
    spec!("SymmetricDirichlet", [("dim", Int), ("concentration", Real)], Simplex, FULL),
    spec!("LogPotential", [("logPotential", Real)], Other, PARAMS_ONLY),
    spec!("UniformPermutation", [], Permutation, PERM_TERMS),
];

const FAMILIES: [Family; 24] = [
    Family::Bernoulli,
    Family::Binomial,
    Family::BetaBinomial,
    Family::Categorical,
    Family::DiscreteUniform,
    Family::Geometric,
    Family::NegativeBinomial,
    Family::Poisson,
    Family::Beta,
    Family::ChiSquared,
    Family::ContinuousUniform,
    Family::Exponential,
    Family::Gamma,
    Family::HalfStudentT,
    Family::Laplace,
    Family::Logistic,
    Family::Normal,
    Family::StudentT,
    Family::Weibull,
    Family::Dirichlet,
    Family::SimplexUniform,
    Family::SymmetricDirichlet,
    Family::LogPotential,
    Family::UniformPermutation,
];

/// Catalog names that exist but are not provided.
const NOT_IMPLEMENTED: &[&str] = &[
    "F",
    "Gompertz",
    "Gumbel",
    "LogLogistic",
    "HyperGeometric",
    "YuleSimon",
    "MultivariateNormal",
    "NormalField",
    "PlatedMatrix",
];

/// Parameter value.
#[derive(Clone, Debug, PartialEq)]
pub enum Arg {
    Real(f64),
    Vector(Vec<f64>),
}

impl From<f64> for Arg {
    fn from(x: f64) -> Self {
        Arg::Real(x)
    }
}

impl From<Vec<f64>> for Arg {
    fn from(x: Vec<f64>) -> Self {
        Arg::Vector(x)
    }
}

/// Point at which a density is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Realization<'a> {
    Real(f64),
    Int(i64),
    Simplex(&'a [f64]),
    Permutation(&'a [usize]),
    None,
}

/// A generated value.
#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    Real(f64),
    Int(i64),
    Simplex(Vec<f64>),
    Permutation(Vec<usize>),
}

impl Draw {
    pub fn as_realization(&self) -> Realization<'_> {
        match self {
            Draw::Real(x) => Realization::Real(*x),
            Draw::Int(x) => Realization::Int(*x),
            Draw::Simplex(p) => Realization::Simplex(p),
            Draw::Permutation(p) => Realization::Permutation(p),
        }
    }
}

/// Every implemented catalog entry.
pub fn catalog() -> &'static [DistributionSpec] {
    &SPECS
}

pub fn lookup(name: &str) -> Result<Family, DistError> {
    if let Some(i) = SPECS.iter().position(|s| s.name == name) {
        return Ok(FAMILIES[i]);
    }
    if NOT_IMPLEMENTED.contains(&name) {
        return Err(DistError::NotImplemented(name.to_string()));
    }
    Err(DistError::Unknown(name.to_string()))
}

/// Log density of a named catalog entry.
pub fn log_density(name: &str, params: &[Arg], value: Realization) -> Result<f64, DistError> {
    let f = lookup(name)?;
    f.check_arity(params.len())?;
    Ok(f.log_density(params, value))
}

/// Draw from a named catalog entry.
pub fn sample(name: &str, params: &[Arg], rng: &mut dyn RandomSource) -> Result<Draw, DistError> {
    let f = lookup(name)?;
    f.check_arity(params.len())?;
    f.sample(params, rng)
}

fn real(args: &[Arg], i: usize) -> Option<f64> {
    match args.get(i) {
        Some(Arg::Real(x)) if !x.is_nan() => Some(*x),
        _ => None,
    }
}

fn int(args: &[Arg], i: usize) -> Option<i64> {
    real(args, i).filter(|x| x.fract() == 0.0 && x.abs() < 9e15).map(|x| x as i64)
}

fn vector(args: &[Arg], i: usize) -> Option<&[f64]> {
    match args.get(i) {
        Some(Arg::Vector(v)) => Some(v),
        _ => None,
    }
}

const NEG_INF: f64 = f64::NEG_INFINITY;

fn is_simplex(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6
}

fn student_t_core(nu: f64, z: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
}

fn gamma_log(shape: f64, rate: f64, x: f64) -> f64 {
    if !(shape > 0.0 && rate > 0.0) || x < 0.0 {
        return NEG_INF;
    }
    if x == 0.0 && shape < 1.0 {
        return f64::INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + xlogy(shape - 1.0, x) - rate * x
}

fn dirichlet_log(alpha: &[f64], x: &[f64]) -> f64 {
    if alpha.len() != x.len() || alpha.iter().any(|a| !(*a > 0.0)) || !is_simplex(x) {
        return NEG_INF;
    }
    let total: f64 = alpha.iter().sum();
    let mut s = ln_gamma(total);
    for (a, p) in alpha.iter().zip(x) {
        s += xlogy(a - 1.0, *p) - ln_gamma(*a);
    }
    s
}

impl Family {
    pub fn spec(self) -> &'static DistributionSpec {
        &SPECS[FAMILIES.iter().position(|f| *f == self).unwrap()]
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }

    pub fn check_arity(self, got: usize) -> Result<(), DistError> {
        let expected = self.spec().params.len();
        if got != expected {
            return Err(DistError::Arity { name: self.name().to_string(), expected, got });
        }
        Ok(())
    }

    /// Sum of all factor terms.
    pub fn log_density(self, args: &[Arg], x: Realization) -> f64 {
        let n = self.spec().terms.len();
        let mut s = 0.0;
        for t in 0..n {
            let v = self.log_term(t, args, x);
            if v == NEG_INF || v.is_nan() {
                return NEG_INF;
            }
            s += v;
        }
        s
    }

    /// One term of the factor decomposition.
    pub fn log_term(self, term: usize, args: &[Arg], x: Realization) -> f64 {
        let v = self.term_impl(term, args, x);
        if v.is_nan() {
            NEG_INF
        } else {
            v
        }
    }

    fn term_impl(self, term: usize, args: &[Arg], x: Realization) -> f64 {
        use Family::*;
        let xi = match x {
            Realization::Int(k) => Some(k),
            _ => None,
        };
        let xr = match x {
            Realization::Real(v) => Some(v),
            Realization::Int(k) => Some(k as f64),
            _ => None,
        };
        match self {
            Normal => {
                let (Some(mean), Some(var)) = (real(args, 0), real(args, 1)) else { return NEG_INF };
                match term {
                    0 => -(2.0 * PI).ln() / 2.0,
                    1 => {
                        if var <= 0.0 {
                            NEG_INF
                        } else {
                            -0.5 * var.ln()
                        }
                    }
                    _ => {
                        let Some(x) = xr else { return NEG_INF };
                        if var <= 0.0 {
                            NEG_INF
                        } else {
                            -0.5 * (mean - x).powi(2) / var
                        }
                    }
                }
            }
            ContinuousUniform => {
                let (Some(min), Some(max)) = (real(args, 0), real(args, 1)) else { return NEG_INF };
                if term == 0 {
                    if max - min <= 0.0 {
                        NEG_INF
                    } else {
                        -(max - min).ln()
                    }
                } else {
                    match xr {
                        Some(x) if min <= x && x <= max => 0.0,
                        _ => NEG_INF,
                    }
                }
            }
            LogPotential => real(args, 0).unwrap_or(NEG_INF),
            UniformPermutation => match x {
                Realization::Permutation(p) => {
                    let mut seen = vec![false; p.len()];
                    if p.iter().any(|&i| i >= p.len() || std::mem::replace(&mut seen[i], true)) {
                        NEG_INF
                    } else {
                        -log_factorial(p.len() as u64)
                    }
                }
                _ => NEG_INF,
            },
            Bernoulli => {
                let (Some(p), Some(k)) = (real(args, 0), xi) else { return NEG_INF };
                if !(0.0..=1.0).contains(&p) {
                    return NEG_INF;
                }
                match k {
                    1 => p.ln(),
                    0 => (1.0 - p).ln(),
                    _ => NEG_INF,
                }
            }
            Binomial => {
                let (Some(n), Some(p), Some(k)) = (int(args, 0), real(args, 1), xi) else { return NEG_INF };
                if n < 0 || !(0.0..=1.0).contains(&p) || k < 0 || k > n {
                    return NEG_INF;
                }
                log_binomial(n, k) + xlogy(k as f64, p) + xlogy((n - k) as f64, 1.0 - p)
            }
            BetaBinomial => {
                let (Some(n), Some(a), Some(b), Some(k)) = (int(args, 0), real(args, 1), real(args, 2), xi) else {
                    return NEG_INF;
                };
                if n < 0 || !(a > 0.0 && b > 0.0) || k < 0 || k > n {
                    return NEG_INF;
                }
                log_binomial(n, k) + log_beta(k as f64 + a, (n - k) as f64 + b) - log_beta(a, b)
            }
            Categorical => {
                let (Some(p), Some(k)) = (vector(args, 0), xi) else { return NEG_INF };
                if !is_simplex(p) || k < 0 || k as usize >= p.len() {
                    return NEG_INF;
                }
                p[k as usize].ln()
            }
            DiscreteUniform => {
                let (Some(lo), Some(hi), Some(k)) = (int(args, 0), int(args, 1), xi) else { return NEG_INF };
                if hi <= lo || k < lo || k >= hi {
                    return NEG_INF;
                }
                -((hi - lo) as f64).ln()
            }
            Geometric => {
                let (Some(p), Some(k)) = (real(args, 0), xi) else { return NEG_INF };
                if !(p > 0.0 && p <= 1.0) || k < 0 {
                    return NEG_INF;
                }
                xlogy(k as f64, 1.0 - p) + p.ln()
            }
            NegativeBinomial => {
                let (Some(r), Some(p), Some(k)) = (real(args, 0), real(args, 1), xi) else { return NEG_INF };
                if !(r > 0.0) || !(0.0..1.0).contains(&p) || k < 0 {
                    return NEG_INF;
                }
                let k = k as f64;
                ln_gamma(k + r) - ln_gamma(k + 1.0) - ln_gamma(r) + xlogy(k, p) + r * (1.0 - p).ln()
            }
            Poisson => {
                let (Some(l), Some(k)) = (real(args, 0), xi) else { return NEG_INF };
                if l < 0.0 || k < 0 {
                    return NEG_INF;
                }
                xlogy(k as f64, l) - l - log_factorial(k as u64)
            }
            Beta => {
                let (Some(a), Some(b), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
                    return NEG_INF;
                }
                xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - log_beta(a, b)
            }
            ChiSquared => {
                let (Some(nu), Some(x)) = (int(args, 0), xr) else { return NEG_INF };
                if nu <= 0 {
                    return NEG_INF;
                }
                gamma_log(nu as f64 / 2.0, 0.5, x)
            }
            Exponential => {
                let (Some(rate), Some(x)) = (real(args, 0), xr) else { return NEG_INF };
                gamma_log(1.0, rate, x)
            }
            Gamma => {
                let (Some(shape), Some(rate), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                gamma_log(shape, rate, x)
            }
            HalfStudentT => {
                let (Some(nu), Some(sigma), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                if !(nu > 0.0 && sigma > 0.0) || x < 0.0 {
                    return NEG_INF;
                }
                2f64.ln() + student_t_core(nu, x / sigma) - sigma.ln()
            }
            StudentT => {
                let (Some(nu), Some(mu), Some(sigma), Some(x)) = (real(args, 0), real(args, 1), real(args, 2), xr)
                else {
                    return NEG_INF;
                };
                if !(nu > 0.0 && sigma > 0.0) {
                    return NEG_INF;
                }
                student_t_core(nu, (x - mu) / sigma) - sigma.ln()
            }
            Laplace => {
                let (Some(m), Some(b), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                if !(b > 0.0) {
                    return NEG_INF;
                }
                -(2.0 * b).ln() - (x - m).abs() / b
            }
            Logistic => {
                let (Some(m), Some(s), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                if !(s > 0.0) {
                    return NEG_INF;
                }
                let z = (x - m) / s;
                -z - s.ln() - 2.0 * softplus(-z)
            }
            Weibull => {
                let (Some(scale), Some(shape), Some(x)) = (real(args, 0), real(args, 1), xr) else { return NEG_INF };
                if !(scale > 0.0 && shape > 0.0) || x < 0.0 {
                    return NEG_INF;
                }
                let r = x / scale;
                shape.ln() - scale.ln() + xlogy(shape - 1.0, r) - r.powf(shape)
            }
            Dirichlet => {
                let (Some(a), Realization::Simplex(p)) = (vector(args, 0), x) else { return NEG_INF };
                dirichlet_log(a, p)
            }
            SimplexUniform => {
                let (Some(d), Realization::Simplex(p)) = (int(args, 0), x) else { return NEG_INF };
                if d < 1 || d as usize != p.len() {
                    return NEG_INF;
                }
                dirichlet_log(&vec![1.0; p.len()], p)
            }
            SymmetricDirichlet => {
                let (Some(d), Some(c), Realization::Simplex(p)) = (int(args, 0), real(args, 1), x) else {
                    return NEG_INF;
                };
                if d < 1 || d as usize != p.len() {
                    return NEG_INF;
                }
                dirichlet_log(&vec![c / d as f64; p.len()], p)
            }
        }
    }

    pub fn sample(self, args: &[Arg], rng: &mut dyn RandomSource) -> Result<Draw, DistError> {
        use Family::*;
        let bad = || DistError::InvalidParameters(self.name().to_string());
        let r = |i| real(args, i).ok_or_else(bad);
        let n = |i| int(args, i).ok_or_else(bad);
        Ok(match self {
            Bernoulli => {
                let p = r(0)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Draw::Int(rng.bernoulli(p) as i64)
            }
            Binomial => {
                let (trials, p) = (n(0)?, r(1)?);
                if trials < 0 || !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Draw::Int(binomial(trials, p, rng))
            }
            BetaBinomial => {
                let (trials, a, b) = (n(0)?, r(1)?, r(2)?);
                if trials < 0 || !(a > 0.0 && b > 0.0) {
                    return Err(bad());
                }
                let p = rand_distr::Beta::new(a, b).map_err(|_| bad())?.sample(&mut RngAdapter(rng));
                Draw::Int(binomial(trials, p, rng))
            }
            Categorical => {
                let p = vector(args, 0).ok_or_else(bad)?;
                if !is_simplex(p) {
                    return Err(bad());
                }
                Draw::Int(rng.categorical(p) as i64)
            }
            DiscreteUniform => {
                let (lo, hi) = (n(0)?, n(1)?);
                if hi <= lo {
                    return Err(bad());
                }
                Draw::Int(lo + rng.int_below((hi - lo) as usize) as i64)
            }
            Geometric => {
                let p = r(0)?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(bad());
                }
                let g = rand_distr::Geometric::new(p).map_err(|_| bad())?;
                Draw::Int(g.sample(&mut RngAdapter(rng)) as i64)
            }
            NegativeBinomial => {
                let (rr, p) = (r(0)?, r(1)?);
                if !(rr > 0.0) || !(0.0..1.0).contains(&p) {
                    return Err(bad());
                }
                if p == 0.0 {
                    return Ok(Draw::Int(0));
                }
                let lambda = gamma_draw(rr, p / (1.0 - p), rng)?;
                Draw::Int(poisson(lambda, rng)?)
            }
            Poisson => {
                let l = r(0)?;
                if !(l >= 0.0) {
                    return Err(bad());
                }
                Draw::Int(poisson(l, rng)?)
            }
            Beta => {
                let (a, b) = (r(0)?, r(1)?);
                Draw::Real(rand_distr::Beta::new(a, b).map_err(|_| bad())?.sample(&mut RngAdapter(rng)))
            }
            ChiSquared => {
                let nu = n(0)?;
                if nu <= 0 {
                    return Err(bad());
                }
                Draw::Real(gamma_draw(nu as f64 / 2.0, 2.0, rng)?)
            }
            ContinuousUniform => {
                let (lo, hi) = (r(0)?, r(1)?);
                if !(hi > lo) {
                    return Err(bad());
                }
                Draw::Real(lo + (hi - lo) * rng.uniform01())
            }
            Exponential => {
                let rate = r(0)?;
                if !(rate > 0.0) {
                    return Err(bad());
                }
                Draw::Real(gamma_draw(1.0, 1.0 / rate, rng)?)
            }
            Gamma => {
                let (shape, rate) = (r(0)?, r(1)?);
                if !(shape > 0.0 && rate > 0.0) {
                    return Err(bad());
                }
                Draw::Real(gamma_draw(shape, 1.0 / rate, rng)?)
            }
            HalfStudentT => {
                let (nu, sigma) = (r(0)?, r(1)?);
                let t = rand_distr::StudentT::new(nu).map_err(|_| bad())?;
                if !(sigma > 0.0) {
                    return Err(bad());
                }
                Draw::Real(sigma * t.sample(&mut RngAdapter(rng)).abs())
            }
            StudentT => {
                let (nu, mu, sigma) = (r(0)?, r(1)?, r(2)?);
                let t = rand_distr::StudentT::new(nu).map_err(|_| bad())?;
                if !(sigma > 0.0) {
                    return Err(bad());
                }
                Draw::Real(mu + sigma * t.sample(&mut RngAdapter(rng)))
            }
            Laplace => {
                let (m, b) = (r(0)?, r(1)?);
                if !(b > 0.0) {
                    return Err(bad());
                }
                let u = rng.uniform01() - 0.5;
                Draw::Real(m - b * u.signum() * (1.0 - 2.0 * u.abs()).ln())
            }
            Logistic => {
                let (m, s) = (r(0)?, r(1)?);
                if !(s > 0.0) {
                    return Err(bad());
                }
                let u = 1.0 - rng.uniform01();
                Draw::Real(m + s * (u / (1.0 - u)).ln())
            }
            Normal => {
                let (m, v) = (r(0)?, r(1)?);
                if !(v >= 0.0) {
                    return Err(bad());
                }
                let z: f64 = rand_distr::StandardNormal.sample(&mut RngAdapter(rng));
                Draw::Real(m + v.sqrt() * z)
            }
            Weibull => {
                let (scale, shape) = (r(0)?, r(1)?);
                let w = rand_distr::Weibull::new(scale, shape).map_err(|_| bad())?;
                Draw::Real(w.sample(&mut RngAdapter(rng)))
            }
            Dirichlet => {
                let a = vector(args, 0).ok_or_else(bad)?;
                Draw::Simplex(dirichlet_draw(a, rng).ok_or_else(bad)?)
            }
            SimplexUniform => {
                let d = n(0)?;
                if d < 1 {
                    return Err(bad());
                }
                Draw::Simplex(dirichlet_draw(&vec![1.0; d as usize], rng).ok_or_else(bad)?)
            }
            SymmetricDirichlet => {
                let (d, c) = (n(0)?, r(1)?);
                if d < 1 {
                    return Err(bad());
                }
                Draw::Simplex(dirichlet_draw(&vec![c / d as f64; d as usize], rng).ok_or_else(bad)?)
            }
            LogPotential => return Err(DistError::MultiOutput(self.name().to_string())),
            UniformPermutation => return Err(bad()),
        })
    }
}

/// Uniform random permutation of `0..n`, generated from the identity.
pub fn uniform_permutation(n: usize, rng: &mut dyn RandomSource) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.int_below(i + 1);
        p.swap(i, j);
    }
    p
}

fn binomial(trials: i64, p: f64, rng: &mut dyn RandomSource) -> i64 {
    if trials <= 64 {
        (0..trials).filter(|_| rng.bernoulli(p)).count() as i64
    } else {
        rand_distr::Binomial::new(trials as u64, p)
            .expect("validated parameters")
            .sample(&mut RngAdapter(rng)) as i64
    }
}

fn poisson(lambda: f64, rng: &mut dyn RandomSource) -> Result<i64, DistError> {
    if lambda == 0.0 {
        return Ok(0);
    }
    let d = rand_distr::Poisson::new(lambda).map_err(|_| DistError::InvalidParameters("Poisson".into()))?;
    let x: f64 = d.sample(&mut RngAdapter(rng));
    Ok(x as i64)
}

fn gamma_draw(shape: f64, scale: f64, rng: &mut dyn RandomSource) -> Result<f64, DistError> {
    let g = rand_distr::Gamma::new(shape, scale).map_err(|_| DistError::InvalidParameters("Gamma".into()))?;
    Ok(g.sample(&mut RngAdapter(rng)))
}

/// Normalized gammas, computed in log space so tiny concentrations do not underflow.
fn dirichlet_draw(alpha: &[f64], rng: &mut dyn RandomSource) -> Option<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0)) {
        return None;
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a < 1.0 {
                let g = gamma_draw(a + 1.0, 1.0, rng).ok()?;
                let u = 1.0 - rng.uniform01();
                Some(g.ln() + u.ln() / a)
            } else {
                gamma_draw(a, 1.0, rng).ok().map(f64::ln)
            }
        })
        .collect::<Option<_>>()?;
    let z = log_sum_exp(&logs);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - z).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Some(p)
}

/// Parameters evaluated against a state at every use.
pub type LazyArgs = Arc<dyn Fn(&State) -> Vec<Arg> + Send + Sync>;

/// A one-variable distribution usable as a parameter of other models.
#[derive(Clone)]
pub struct DistributionHandle {
    family: Family,
    params: LazyArgs,
}

impl std::fmt::Debug for DistributionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DistributionHandle({})", self.family.name())
    }
}

pub fn as_distribution_object(
    name: &str,
    params: impl Fn(&State) -> Vec<Arg> + Send + Sync + 'static,
) -> Result<DistributionHandle, DistError> {
    let family = lookup(name)?;
    if family.spec().support == Support::Other {
        return Err(DistError::MultiOutput(name.to_string()));
    }
    Ok(DistributionHandle { family, params: Arc::new(params) })
}

impl DistributionHandle {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn log_density(&self, state: &State, x: Realization) -> f64 {
        let args = (self.params)(state);
        if self.family.check_arity(args.len()).is_err() {
            return NEG_INF;
        }
        self.family.log_density(&args, x)
    }

    pub fn sample(&self, state: &State, rng: &mut dyn RandomSource) -> Result<Draw, DistError> {
        let args = (self.params)(state);
        self.family.check_arity(args.len())?;
        self.family.sample(&args, rng)
    }
}

/// Finite mixture of integer-valued distributions.
#[derive(Clone)]
pub struct IntMixture {
    proportions: Arc<dyn Fn(&State) -> Vec<f64> + Send + Sync>,
    components: Vec<DistributionHandle>,
}

impl IntMixture {
    pub fn new(
        proportions: impl Fn(&State) -> Vec<f64> + Send + Sync + 'static,
        components: Vec<DistributionHandle>,
    ) -> Self {
        IntMixture { proportions: Arc::new(proportions), components }
    }

    pub fn log_density(&self, state: &State, k: i64) -> f64 {
        let props = (self.proportions)(state);
        if props.len() != self.components.len() || props.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return NEG_INF;
        }
        let terms: Vec<f64> = props
            .iter()
            .zip(&self.components)
            .map(|(p, c)| p.ln() + c.log_density(state, Realization::Int(k)))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn sample(&self, state: &State, rng: &mut dyn RandomSource) -> Result<i64, DistError> {
        let props = (self.proportions)(state);
        if props.len() != self.components.len() || props.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DistError::InvalidParameters("IntMixture".into()));
        }
        let c = rng.categorical(&props);
        match self.components[c].sample(state, rng)? {
            Draw::Int(k) => Ok(k),
            _ => Err(DistError::InvalidParameters("IntMixture".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::MersenneSource;

    #[test]
    fn spec_examples() {
        let n01 = log_density("Normal", &[0.0.into(), 1.0.into()], Realization::Real(0.0)).unwrap();
        assert!((n01 + 0.918_938_533_204_672_7).abs() < 1e-14);
        let u = log_density("ContinuousUniform", &[2.0.into(), 1.0.into()], Realization::Real(1.5)).unwrap();
        assert_eq!(u, NEG_INF);
        let e = log_density("Exponential", &[1.0.into()], Realization::Real(1.0)).unwrap();
        assert!((e + 1.0).abs() < 1e-15);
        let p = log_density("Poisson", &[2.0.into()], Realization::Int(3)).unwrap();
        assert!((p - (3.0 * 2f64.ln() - 2.0 - 6f64.ln())).abs() < 1e-13);
        let d = log_density("Dirichlet", &[vec![1.0, 1.0].into()], Realization::Simplex(&[0.3, 0.7])).unwrap();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn arity_and_names() {
        assert!(matches!(log_density("Normal", &[0.0.into()], Realization::Real(0.0)), Err(DistError::Arity { .. })));
        assert!(matches!(lookup("Gumbel"), Err(DistError::NotImplemented(_))));
        assert!(matches!(lookup("Nope"), Err(DistError::Unknown(_))));
    }

    #[test]
    fn degenerate_samples() {
        let mut rng = MersenneSource::new(1);
        for _ in 0..20 {
            assert_eq!(sample("Bernoulli", &[1.0.into()], &mut rng).unwrap(), Draw::Int(1));
            assert_eq!(sample("DiscreteUniform", &[0.0.into(), 1.0.into()], &mut rng).unwrap(), Draw::Int(0));
        }
        assert!(sample("Normal", &[0.0.into(), (-1.0).into()], &mut rng).is_err());
    }

    #[test]
    fn normal_sample_mean() {
        let mut rng = MersenneSource::new(1);
        let n = 100_000;
        let mut s = 0.0;
        for _ in 0..n {
            if let Draw::Real(x) = sample("Normal", &[5.0.into(), 4.0.into()], &mut rng).unwrap() {
                s += x;
            }
        }
        assert!((s / n as f64 - 5.0).abs() < 0.03);
    }

    #[test]
    fn handles_and_mixtures() {
        let h = as_distribution_object("Poisson", |_| vec![Arg::Real(3.0)]).unwrap();
        let state = crate::model::ModelBuilder::new().build().initial_state();
        let v = h.log_density(&state, Realization::Int(2));
        assert!((v - (2.0 * 3f64.ln() - 3.0 - 2f64.ln())).abs() < 1e-13);
        let mix = IntMixture::new(|_| vec![0.3, 0.7], vec![h.clone(), h.clone()]);
        for k in 0..10 {
            assert!((mix.log_density(&state, k) - h.log_density(&state, Realization::Int(k))).abs() < 1e-12);
        }
        let bad = IntMixture::new(|_| vec![1.2, -0.2], vec![h.clone(), h]);
        assert_eq!(bad.log_density(&state, 1), NEG_INF);
        assert!(matches!(as_distribution_object("LogPotential", |_| vec![]), Err(DistError::MultiOutput(_))));
    }

    #[test]
    fn exponential_is_gamma_one() {
        for &rate in &[0.3, 1.0, 4.5] {
            for &x in &[0.0, 0.1, 2.0, 17.0] {
                let e = log_density("Exponential", &[rate.into()], Realization::Real(x)).unwrap();
                let g = log_density("Gamma", &[1.0.into(), rate.into()], Realization::Real(x)).unwrap();
                assert!((e - g).abs() < 1e-12);
            }
        }
    }
}
