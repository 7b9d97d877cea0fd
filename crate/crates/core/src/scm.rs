//! Sequential change of measure: adaptive annealed SMC, and AIS as its
//! resampling-free variant.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::anneal::{AnnealedDensity, LikelihoodParts};
use crate::math::log_sum_exp;
use crate::model::{Model, ModelError, State, Violation};
use crate::rng::{LazyUniform, MersenneSource, RandomSource};
use crate::samplers::{match_samplers, sweep, KernelInstance, SamplerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error("model is not in generative normal form: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    NotGenerative(Vec<Violation>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("all particle weights are zero")]
    Degenerate,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResamplingScheme {
    Stratified,
    Multinomial,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TemperatureSchedule {
    /// Next t keeps the relative conditional ESS at `threshold`.
    Adaptive { threshold: f64 },
    /// Explicit grid from 0 to 1.
    Fixed(Vec<f64>),
}

impl TemperatureSchedule {
    /// `n` equally spaced temperatures including both ends.
    pub fn uniform(n: usize) -> Self {
        let n = n.max(2);
        TemperatureSchedule::Fixed((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
    }
}

#[derive(Clone, Debug)]
pub struct ScmConfig {
    pub n_particles: usize,
    /// Resample when the relative ESS falls below this; values >= 1 resample every step.
    pub ess_threshold: f64,
    pub schedule: TemperatureSchedule,
    pub n_final_rejuvenations: usize,
    pub scheme: ResamplingScheme,
    pub resampling: bool,
    /// Kernel passes per annealing step.
    pub n_passes: f64,
    pub seed: u64,
    /// Temperatures that the schedule must visit; one particle is recorded at each.
    pub record_at: Vec<f64>,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            n_particles: 1000,
            ess_threshold: 0.5,
            schedule: TemperatureSchedule::Adaptive { threshold: 0.9999 },
            n_final_rejuvenations: 5,
            scheme: ResamplingScheme::Stratified,
            resampling: true,
            n_passes: 1.0,
            seed: crate::rng::DEFAULT_SEED,
            record_at: Vec::new(),
        }
    }
}

impl ScmConfig {
    pub fn ais() -> Self {
        ScmConfig { resampling: false, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ScmResult {
    pub particles: Vec<State>,
    /// Zero after a final resample; the AIS weights otherwise.
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    pub temperatures: Vec<f64>,
    /// Relative ESS after reweighting, one per temperature step.
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
    /// Particles picked at the `record_at` temperatures, in that order.
    pub recorded: Vec<State>,
}

/// Where random draws come from.
pub enum Randomness<'a> {
    /// Independent per-particle streams derived from a seed; particle work runs in parallel.
    Seeded(u64),
    /// One shared source, consumed serially in particle order.
    Shared(&'a mut dyn RandomSource),
}

enum Streams<'a> {
    Seeded { particles: Vec<MersenneSource>, master: MersenneSource },
    Shared(&'a mut dyn RandomSource),
}

impl<'a> Streams<'a> {
    fn new(r: Randomness<'a>, n: usize) -> Self {
        match r {
            Randomness::Seeded(seed) => Streams::Seeded {
                particles: (0..n).map(|i| MersenneSource::derived(seed, &[i as u64])).collect(),
                master: MersenneSource::derived(seed, &[u64::MAX]),
            },
            Randomness::Shared(r) => Streams::Shared(r),
        }
    }

    fn master(&mut self) -> &mut dyn RandomSource {
        match self {
            Streams::Seeded { master, .. } => master,
            Streams::Shared(r) => *r,
        }
    }

    fn each<F>(&mut self, states: &mut [State], f: F) -> Result<(), ScmError>
    where
        F: Fn(usize, &mut State, &mut dyn RandomSource) -> Result<(), ScmError> + Sync,
    {
        match self {
            Streams::Seeded { particles, .. } => states
                .par_iter_mut()
                .zip(particles.par_iter_mut())
                .enumerate()
                .try_for_each(|(i, (s, r))| f(i, s, r)),
            Streams::Shared(r) => {
                for (i, s) in states.iter_mut().enumerate() {
                    f(i, s, *r)?;
                }
                Ok(())
            }
        }
    }
}

/// (Σw)² / (N Σw²).
pub fn relative_ess(log_weights: &[f64]) -> Result<f64, ScmError> {
    let a = log_sum_exp(log_weights);
    if a == f64::NEG_INFINITY || log_weights.is_empty() {
        return Err(ScmError::Degenerate);
    }
    let sq: Vec<f64> = log_weights.iter().map(|w| 2.0 * (w - a)).collect();
    Ok((-log_sum_exp(&sq)).exp() / log_weights.len() as f64)
}

fn relative_cess(log_w_norm: &[f64], parts: &[LikelihoodParts], t: f64, t_new: f64) -> f64 {
    let inc: Vec<f64> = parts.iter().map(|p| p.increment(t, t_new)).collect();
    let a: Vec<f64> = log_w_norm.iter().zip(&inc).map(|(w, v)| w + v).collect();
    let b: Vec<f64> = log_w_norm.iter().zip(&inc).map(|(w, v)| w + 2.0 * v).collect();
    let (a, b) = (log_sum_exp(&a), log_sum_exp(&b));
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    (2.0 * a - b).exp()
}

/// Smallest t' in (t, 1] where the relative conditional ESS drops to `threshold`, or 1.
pub fn next_temperature(log_weights: &[f64], parts: &[LikelihoodParts], t: f64, threshold: f64) -> f64 {
    let z = log_sum_exp(log_weights);
    let w: Vec<f64> = log_weights.iter().map(|x| x - z).collect();
    let below = |u: f64| relative_cess(&w, parts, t, u) < threshold;
    const GRID: usize = 64;
    let mut lo = t;
    let mut hi = None;
    for k in 1..=GRID {
        let u = if k == GRID { 1.0 } else { t + (1.0 - t) * k as f64 / GRID as f64 };
        if below(u) {
            hi = Some(u);
            break;
        }
        lo = u;
    }
    let Some(mut hi) = hi else { return 1.0 };
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Sorted ancestor indices, with one comparison-only uniform per stratum.
pub fn stratified_indices(log_weights: &[f64], n: usize, rng: &mut dyn RandomSource) -> Vec<usize> {
    let z = log_sum_exp(log_weights);
    let mut cum: Vec<f64> = log_weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += (w - z).exp();
            Some(*acc)
        })
        .collect();
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        // (i + U)/n < cum[j]  <=>  U < n cum[j] - i
        let mut u = LazyUniform::new();
        while j + 1 < cum.len() && !u.less_than(n as f64 * cum[j] - i as f64, rng) {
            j += 1;
        }
        out.push(j);
    }
    out
}

pub fn multinomial_indices(log_weights: &[f64], n: usize, rng: &mut dyn RandomSource) -> Vec<usize> {
    let z = log_sum_exp(log_weights);
    let w: Vec<f64> = log_weights.iter().map(|x| (x - z).exp()).collect();
    (0..n).map(|_| rng.categorical(&w)).collect()
}

struct Population {
    states: Vec<State>,
    log_w: Vec<f64>,
    parts: Vec<LikelihoodParts>,
}

impl Population {
    fn resample(&mut self, scheme: ResamplingScheme, rng: &mut dyn RandomSource) {
        let n = self.states.len();
        let idx = match scheme {
            ResamplingScheme::Stratified => stratified_indices(&self.log_w, n, rng),
            ResamplingScheme::Multinomial => multinomial_indices(&self.log_w, n, rng),
        };
        self.states = idx.iter().map(|&i| self.states[i].clone()).collect();
        self.parts = idx.iter().map(|&i| self.parts[i]).collect();
        self.log_w = vec![0.0; n];
    }

    fn log_mean_weight(&self) -> Result<f64, ScmError> {
        let s = log_sum_exp(&self.log_w);
        if s == f64::NEG_INFINITY {
            return Err(ScmError::Degenerate);
        }
        Ok(s - (self.log_w.len() as f64).ln())
    }
}

pub fn run_scm(model: &Arc<Model>, config: &ScmConfig, randomness: Randomness) -> Result<ScmResult, ScmError> {
    model.check_generative_normal_form().map_err(ScmError::NotGenerative)?;
    let density = AnnealedDensity::new(model.clone());
    let kernels = match_samplers(model)?.kernels;
    run_with(&density, &kernels, config, randomness)
}

pub fn run_ais(model: &Arc<Model>, config: &ScmConfig, randomness: Randomness) -> Result<ScmResult, ScmError> {
    let config = ScmConfig { resampling: false, ..config.clone() };
    run_scm(model, &config, randomness)
}

/// SCM with an explicit kernel set.
pub fn run_with(
    density: &AnnealedDensity,
    kernels: &[KernelInstance],
    config: &ScmConfig,
    randomness: Randomness,
) -> Result<ScmResult, ScmError> {
    let n = config.n_particles;
    if n == 0 {
        return Err(ScmError::Config("at least one particle is required".into()));
    }
    if let TemperatureSchedule::Fixed(g) = &config.schedule {
        let ok = g.len() >= 2
            && g[0] == 0.0
            && *g.last().unwrap() == 1.0
            && g.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(ScmError::Config("fixed schedule must increase strictly from 0 to 1".into()));
        }
    }
    let mut stops: Vec<f64> = config.record_at.iter().copied().filter(|t| (0.0..=1.0).contains(t)).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let model = density.model().clone();
    let mut streams = Streams::new(randomness, n);
    let mut pop = Population {
        states: vec![model.initial_state(); n],
        log_w: vec![0.0; n],
        parts: vec![LikelihoodParts::default(); n],
    };
    streams.each(&mut pop.states, |_, s, r| Ok(model.forward_simulate(s, r)?))?;
    pop.parts = pop.states.par_iter().map(|s| density.likelihood_parts(s)).collect();

    let mut result = ScmResult {
        particles: Vec::new(),
        log_weights: Vec::new(),
        log_z: 0.0,
        temperatures: vec![0.0],
        ess: Vec::new(),
        resampled: Vec::new(),
        recorded: Vec::new(),
    };
    let mut next_stop = 0;
    let record = |pop: &Population, result: &mut ScmResult, rng: &mut dyn RandomSource| {
        let z = log_sum_exp(&pop.log_w);
        let w: Vec<f64> = pop.log_w.iter().map(|x| (x - z).exp()).collect();
        result.recorded.push(pop.states[rng.categorical(&w)].clone());
    };
    while next_stop < stops.len() && stops[next_stop] == 0.0 {
        record(&pop, &mut result, streams.master());
        next_stop += 1;
    }

    let mut t = 0.0;
    let mut fixed_idx = 1;
    while t < 1.0 {
        let mut t_new = match &config.schedule {
            TemperatureSchedule::Fixed(g) => {
                let v = g[fixed_idx];
                fixed_idx += 1;
                v
            }
            TemperatureSchedule::Adaptive { threshold } => next_temperature(&pop.log_w, &pop.parts, t, *threshold),
        };
        let stop_here = next_stop < stops.len() && stops[next_stop] <= t_new;
        if stop_here {
            t_new = stops[next_stop];
        }
        if let TemperatureSchedule::Fixed(g) = &config.schedule {
            if t_new < g[fixed_idx - 1] {
                fixed_idx -= 1;
            }
        }
        for (w, p) in pop.log_w.iter_mut().zip(&pop.parts) {
            *w += p.increment(t, t_new);
        }
        t = t_new;
        result.temperatures.push(t);
        let ess = relative_ess(&pop.log_w)?;
        result.ess.push(ess);
        let resample_now = config.resampling && t < 1.0 && (config.ess_threshold >= 1.0 || ess < config.ess_threshold);
        result.resampled.push(resample_now);
        if resample_now {
            result.log_z += pop.log_mean_weight()?;
            pop.resample(config.scheme, streams.master());
        }
        if t < 1.0 && config.n_passes > 0.0 {
            streams.each(&mut pop.states, |_, s, r| Ok(sweep(kernels, density, t, s, r, config.n_passes)?))?;
            pop.parts = pop.states.par_iter().map(|s| density.likelihood_parts(s)).collect();
        }
        if stop_here && t < 1.0 {
            record(&pop, &mut result, streams.master());
            next_stop += 1;
        }
    }

    if config.resampling {
        result.log_z += pop.log_mean_weight()?;
        pop.resample(config.scheme, streams.master());
        if let Some(last) = result.resampled.last_mut() {
            *last = true;
        }
        for _ in 0..config.n_final_rejuvenations {
            streams.each(&mut pop.states, |_, s, r| Ok(sweep(kernels, density, 1.0, s, r, 1.0)?))?;
        }
    } else {
        result.log_z = pop.log_mean_weight()?;
    }
    if next_stop < stops.len() {
        record(&pop, &mut result, streams.master());
    }
    result.particles = pop.states;
    result.log_weights = pop.log_w;
    Ok(result)
}
