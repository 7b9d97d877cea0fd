//! Non-reversible parallel tempering: deterministic even-odd swaps, adaptive
//! schedules from the estimated communication barrier, and evidence estimators.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::anneal::{AnnealedDensity, LikelihoodParts};
use crate::math::log_sum_exp;
use crate::model::{Model, State, Violation};
use crate::rng::{MersenneSource, RandomSource};
use crate::samplers::{match_samplers, sweep, KernelInstance, SamplerError};
use crate::scm::{run_with, Randomness, ScmConfig, ScmError, TemperatureSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtError {
    #[error("parallel tempering needs at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("chains {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("no samples to estimate from")]
    EmptyChains,
    #[error("model is not in generative normal form: {0:?}")]
    NotGenerative(Vec<Violation>),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("{0}")]
    Model(String),
}

/// Evenly spaced grid 0, 1/(n-1), ..., 1.
pub fn uniform_schedule(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 }).collect(),
    }
}

pub fn check_schedule(grid: &[f64]) -> Result<(), PtError> {
    if grid.len() < 2 {
        return Err(PtError::BadSchedule("fewer than 2 points".into()));
    }
    if grid[0] != 0.0 || grid[grid.len() - 1] != 1.0 {
        return Err(PtError::BadSchedule("endpoints must be 0 and 1".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PtError::BadSchedule("not strictly increasing".into()));
    }
    Ok(())
}

/// log γ_{t_i}(x_j) + log γ_{t_j}(x_i) − log γ_{t_i}(x_i) − log γ_{t_j}(x_j); the prior cancels.
pub fn swap_log_ratio(t_i: f64, t_j: f64, parts_i: &LikelihoodParts, parts_j: &LikelihoodParts) -> f64 {
    if t_i == t_j {
        return 0.0;
    }
    if parts_i.n_zero == 0 && parts_j.n_zero == 0 {
        return (t_i - t_j) * (parts_j.finite - parts_i.finite);
    }
    let proposed = parts_j.annealed(t_i) + parts_i.annealed(t_j);
    let current = parts_i.annealed(t_i) + parts_j.annealed(t_j);
    if proposed == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let r = proposed - current;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RejectionEstimator {
    /// Accumulate 1 − min(1, e^r).
    #[default]
    RaoBlackwellized,
    /// Accumulate the rejection indicator.
    Indicator,
}

/// Chain-indexed states plus the index processes of the replicas travelling through them.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub schedule: Vec<f64>,
    pub states: Vec<State>,
    pub parts: Vec<LikelihoodParts>,
    chain_to_replica: Vec<usize>,
    replica_to_chain: Vec<usize>,
    visited_bottom: Vec<bool>,
    pub rejection_sums: Vec<f64>,
    pub swap_attempts: Vec<u64>,
    pub restarts: u64,
    pub estimator: RejectionEstimator,
}

impl Ensemble {
    pub fn new(schedule: Vec<f64>, states: Vec<State>, parts: Vec<LikelihoodParts>) -> Self {
        let n = schedule.len();
        assert_eq!(states.len(), n);
        assert_eq!(parts.len(), n);
        let mut visited_bottom = vec![false; n];
        visited_bottom[0] = true;
        Ensemble {
            schedule,
            states,
            parts,
            chain_to_replica: (0..n).collect(),
            replica_to_chain: (0..n).collect(),
            visited_bottom,
            rejection_sums: vec![0.0; n.saturating_sub(1)],
            swap_attempts: vec![0; n.saturating_sub(1)],
            restarts: 0,
            estimator: RejectionEstimator::default(),
        }
    }

    pub fn n_chains(&self) -> usize {
        self.schedule.len()
    }

    pub fn replica_to_chain(&self) -> &[usize] {
        &self.replica_to_chain
    }

    pub fn chain_to_replica(&self) -> &[usize] {
        &self.chain_to_replica
    }

    pub fn swap_log_ratio(&self, i: usize, j: usize) -> Result<f64, PtError> {
        if i.abs_diff(j) != 1 || i.max(j) >= self.n_chains() {
            return Err(PtError::NotAdjacent(i, j));
        }
        Ok(swap_log_ratio(self.schedule[i], self.schedule[j], &self.parts[i], &self.parts[j]))
    }

    /// Even scans propose (0,1), (2,3), ...; odd scans (1,2), (3,4), ...
    pub fn deo_swap_phase(&mut self, scan: u64, rng: &mut dyn RandomSource) {
        let n = self.n_chains();
        let mut i = (scan % 2) as usize;
        while i + 1 < n {
            let r = swap_log_ratio(self.schedule[i], self.schedule[i + 1], &self.parts[i], &self.parts[i + 1]);
            let accept_prob = if r >= 0.0 { 1.0 } else { r.exp() };
            let accepted = rng.bernoulli(accept_prob);
            self.rejection_sums[i] += match self.estimator {
                RejectionEstimator::RaoBlackwellized => 1.0 - accept_prob,
                RejectionEstimator::Indicator => f64::from(u8::from(!accepted)),
            };
            self.swap_attempts[i] += 1;
            if accepted {
                self.states.swap(i, i + 1);
                self.parts.swap(i, i + 1);
                self.chain_to_replica.swap(i, i + 1);
                self.replica_to_chain[self.chain_to_replica[i]] = i;
                self.replica_to_chain[self.chain_to_replica[i + 1]] = i + 1;
            }
            i += 2;
        }
        for (replica, &chain) in self.replica_to_chain.iter().enumerate() {
            if chain == 0 {
                self.visited_bottom[replica] = true;
            } else if chain == n - 1 && self.visited_bottom[replica] {
                self.visited_bottom[replica] = false;
                self.restarts += 1;
            }
        }
    }

    /// Per adjacent pair, accumulated rejection divided by attempts (0 if never attempted).
    pub fn rejection_rates(&self) -> Vec<f64> {
        self.rejection_sums
            .iter()
            .zip(&self.swap_attempts)
            .map(|(s, &a)| if a == 0 { 0.0 } else { s / a as f64 })
            .collect()
    }

    pub fn reset_statistics(&mut self) {
        self.rejection_sums.iter_mut().for_each(|x| *x = 0.0);
        self.swap_attempts.iter_mut().for_each(|x| *x = 0);
        self.restarts = 0;
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            m[k] = if delta[k - 1] * delta[k] > 0.0 { (delta[k - 1] + delta[k]) / 2.0 } else { 0.0 };
        }
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / delta[k];
            let b = m[k + 1] / delta[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                m[k] = tau * a * delta[k];
                m[k + 1] = tau * b * delta[k];
            }
        }
        MonotoneSpline { x, y, m }
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.x.partition_point(|&xk| xk <= t);
        k.clamp(1, self.x.len() - 1) - 1
    }

    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(self.x[0], self.x[self.x.len() - 1]);
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
            + (s3 - 2.0 * s2 + s) * h * self.m[k]
            + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
            + (s3 - s2) * h * self.m[k + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let t = t.clamp(self.x[0], self.x[self.x.len() - 1]);
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * self.y[k]
            + (3.0 * s2 - 4.0 * s + 1.0) * h * self.m[k]
            + (-6.0 * s2 + 6.0 * s) * self.y[k + 1]
            + (3.0 * s2 - 2.0 * s) * h * self.m[k + 1])
            / h
    }
}

/// Λ̂ as a function of the annealing parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunicationBarrier {
    pub knots_t: Vec<f64>,
    pub knots_lambda: Vec<f64>,
    spline: MonotoneSpline,
}

impl CommunicationBarrier {
    pub fn from_rates(schedule: &[f64], rates: &[f64]) -> Self {
        assert_eq!(rates.len() + 1, schedule.len());
        let mut knots_lambda = Vec::with_capacity(schedule.len());
        let mut acc = 0.0;
        knots_lambda.push(0.0);
        for r in rates {
            acc += r.clamp(0.0, 1.0);
            knots_lambda.push(acc);
        }
        let spline = MonotoneSpline::new(schedule.to_vec(), knots_lambda.clone());
        CommunicationBarrier { knots_t: schedule.to_vec(), knots_lambda, spline }
    }

    /// Λ̂(1).
    pub fn global(&self) -> f64 {
        *self.knots_lambda.last().unwrap_or(&0.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.spline.value(t)
    }

    /// Local barrier λ̂(t), the interpolant's derivative.
    pub fn local(&self, t: f64) -> f64 {
        self.spline.derivative(t).max(0.0)
    }

    /// λ̂ on `n` evenly spaced points of [0, 1].
    pub fn local_grid(&self, n: usize) -> Vec<(f64, f64)> {
        uniform_schedule(n).into_iter().map(|t| (t, self.local(t))).collect()
    }

    /// t such that Λ̂(t) = target, by bisection.
    pub fn inverse(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Equalizes the estimated barrier across chains; uniform grid when there is no barrier.
pub fn update_schedule(rates: &[f64], old: &[f64]) -> (Vec<f64>, CommunicationBarrier) {
    let barrier = CommunicationBarrier::from_rates(old, rates);
    let n = old.len();
    let total = barrier.global();
    if total < 1e-6 {
        return (uniform_schedule(n), barrier);
    }
    let mut grid: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 0.0,
            i if i + 1 == n => 1.0,
            i => barrier.inverse(total * i as f64 / (n - 1) as f64),
        })
        .collect();
    // Guard against ties from numerically flat stretches.
    for i in 1..n {
        if grid[i] <= grid[i - 1] {
            grid[i] = f64::min(grid[i - 1] + f64::EPSILON, 1.0);
        }
    }
    if check_schedule(&grid).is_err() {
        return (uniform_schedule(n), barrier);
    }
    (grid, barrier)
}

/// Σ_i log mean_m exp(γ-increment from t_i to t_{i+1}) over samples of chain i.
pub fn stepping_stone_log_z(samples: &[Vec<LikelihoodParts>], schedule: &[f64]) -> Result<f64, PtError> {
    if samples.len() != schedule.len() || samples[..samples.len().saturating_sub(1)].iter().any(Vec::is_empty) {
        return Err(PtError::EmptyChains);
    }
    let mut total = 0.0;
    for i in 0..schedule.len() - 1 {
        let inc: Vec<f64> = samples[i].iter().map(|p| p.increment(schedule[i], schedule[i + 1])).collect();
        total += log_sum_exp(&inc) - (inc.len() as f64).ln();
    }
    Ok(total)
}

/// Trapezoidal ∫ E_t[ℓ] dt; `None` when any sample hit a zero-likelihood factor.
pub fn thermodynamic_log_z(samples: &[Vec<LikelihoodParts>], schedule: &[f64]) -> Option<f64> {
    if samples.len() != schedule.len() || samples.iter().any(Vec::is_empty) {
        return None;
    }
    if samples.iter().flatten().any(|p| p.n_zero > 0 || !p.finite.is_finite()) {
        return None;
    }
    let means: Vec<f64> = samples.iter().map(|c| c.iter().map(|p| p.finite).sum::<f64>() / c.len() as f64).collect();
    Some(
        schedule
            .windows(2)
            .zip(means.windows(2))
            .map(|(t, m)| (t[1] - t[0]) * (m[0] + m[1]) / 2.0)
            .sum(),
    )
}

#[derive(Clone, Debug)]
pub struct PtConfig {
    pub n_chains: usize,
    pub n_scans: u64,
    pub n_passes_per_scan: f64,
    pub thinning: u64,
    pub use_prior_samples: bool,
    /// 0 disables schedule adaptation; any positive value enables it.
    pub adapt_fraction: f64,
    pub scm_init_particles: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub n_threads: Option<usize>,
    pub estimator: RejectionEstimator,
    pub initial_schedule: Option<Vec<f64>>,
}

impl Default for PtConfig {
    fn default() -> Self {
        PtConfig {
            n_chains: 8,
            n_scans: 1000,
            n_passes_per_scan: 3.0,
            thinning: 1,
            use_prior_samples: true,
            adapt_fraction: 0.5,
            scm_init_particles: 100,
            seed: 1,
            n_threads: None,
            estimator: RejectionEstimator::default(),
            initial_schedule: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundSummary {
    pub round: usize,
    pub n_scans: u64,
    /// Grid used during this round.
    pub schedule: Vec<f64>,
    pub rejection_rates: Vec<f64>,
    pub restarts: u64,
    pub global_barrier: f64,
    pub log_z_stepping_stone: f64,
    pub log_z_thermodynamic: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PtResult {
    /// Target-chain states from the final round, thinned.
    pub samples: Vec<State>,
    pub rounds: Vec<RoundSummary>,
    /// Barrier estimated from the final round.
    pub barrier: CommunicationBarrier,
    pub log_z_stepping_stone: f64,
    pub log_z_thermodynamic: Option<f64>,
    /// Likelihood parts of every chain at every final-round scan.
    pub final_round_parts: Vec<Vec<LikelihoodParts>>,
}

/// Scan counts per round: 1, 2, 4, ...; a remainder shorter than the round before it
/// is folded into that round, so the last round is always the longest.
pub fn round_lengths(n_scans: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let mut remaining = n_scans;
    let mut len = 1u64;
    while remaining > 0 {
        let l = len.min(remaining);
        match out.last_mut() {
            Some(prev) if l < *prev => *prev += l,
            _ => out.push(l),
        }
        remaining -= l;
        len = len.saturating_mul(2);
    }
    out
}

const SWAP_STREAM: u64 = 0x5357;
const CHAIN_STREAM: u64 = 0x4348;
const INIT_STREAM: u64 = 0x494e;

fn with_threads<T: Send>(n: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match n {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

pub fn run_nrpt(model: &Arc<Model>, config: &PtConfig) -> Result<PtResult, PtError> {
    model.check_generative_normal_form().map_err(PtError::NotGenerative)?;
    let density = AnnealedDensity::new(model.clone());
    let kernels = match_samplers(model)?.kernels;
    run_nrpt_with(&density, &kernels, config)
}

pub fn run_nrpt_with(density: &AnnealedDensity, kernels: &[KernelInstance], config: &PtConfig) -> Result<PtResult, PtError> {
    if config.n_chains < 2 {
        return Err(PtError::TooFewChains(config.n_chains));
    }
    let schedule = match &config.initial_schedule {
        Some(s) => {
            if s.len() != config.n_chains {
                return Err(PtError::BadSchedule(format!("{} points for {} chains", s.len(), config.n_chains)));
            }
            s.clone()
        }
        None => uniform_schedule(config.n_chains),
    };
    check_schedule(&schedule)?;
    with_threads(config.n_threads, || run_rounds(density, kernels, config, schedule))
}

fn run_rounds(
    density: &AnnealedDensity,
    kernels: &[KernelInstance],
    config: &PtConfig,
    mut schedule: Vec<f64>,
) -> Result<PtResult, PtError> {
    let model = density.model();
    let init = ScmConfig {
        n_particles: config.scm_init_particles.max(1),
        schedule: TemperatureSchedule::Fixed(schedule.clone()),
        record_at: schedule.clone(),
        seed: config.seed,
        ..ScmConfig::default()
    };
    let seed = crate::rng::derive_seed(config.seed, &[INIT_STREAM]);
    let scm = run_with(density, kernels, &init, Randomness::Seeded(seed))?;
    let states = scm.recorded;
    let parts: Vec<LikelihoodParts> = states.iter().map(|s| density.likelihood_parts(s)).collect();
    let mut ensemble = Ensemble::new(schedule.clone(), states, parts);
    ensemble.estimator = config.estimator;

    let lengths = round_lengths(config.n_scans);
    let n_rounds = lengths.len();
    let n = config.n_chains;
    let mut rounds = Vec::with_capacity(n_rounds);
    let mut samples = Vec::new();
    let mut round_parts: Vec<Vec<LikelihoodParts>> = vec![Vec::new(); n];
    let mut scan_index = 0u64;

    for (round, &len) in lengths.iter().enumerate() {
        let last = round + 1 == n_rounds;
        let mut streams: Vec<MersenneSource> =
            (0..n).map(|c| MersenneSource::derived(config.seed, &[CHAIN_STREAM, round as u64, c as u64])).collect();
        let mut swap_rng = MersenneSource::derived(config.seed, &[SWAP_STREAM, round as u64]);
        round_parts.iter_mut().for_each(Vec::clear);

        for scan in 0..len {
            let sched = &ensemble.schedule;
            let results: Vec<Result<LikelihoodParts, PtError>> = ensemble
                .states
                .par_iter_mut()
                .zip(streams.par_iter_mut())
                .enumerate()
                .map(|(c, (state, rng))| {
                    if c == 0 && config.use_prior_samples {
                        model.forward_simulate(state, rng).map_err(|e| PtError::Model(e.to_string()))?;
                    } else {
                        sweep(kernels, density, sched[c], state, rng, config.n_passes_per_scan)?;
                    }
                    Ok(density.likelihood_parts(state))
                })
                .collect();
            for (c, r) in results.into_iter().enumerate() {
                ensemble.parts[c] = r?;
            }
            ensemble.deo_swap_phase(scan_index, &mut swap_rng);
            scan_index += 1;
            for (c, p) in ensemble.parts.iter().enumerate() {
                round_parts[c].push(*p);
            }
            if last && (scan + 1) % config.thinning.max(1) == 0 {
                samples.push(ensemble.states[n - 1].clone());
            }
        }

        let rates = ensemble.rejection_rates();
        let barrier = CommunicationBarrier::from_rates(&ensemble.schedule, &rates);
        let log_z_ss = stepping_stone_log_z(&round_parts, &ensemble.schedule)?;
        let log_z_ti = thermodynamic_log_z(&round_parts, &ensemble.schedule);
        rounds.push(RoundSummary {
            round,
            n_scans: len,
            schedule: ensemble.schedule.clone(),
            rejection_rates: rates.clone(),
            restarts: ensemble.restarts,
            global_barrier: barrier.global(),
            log_z_stepping_stone: log_z_ss,
            log_z_thermodynamic: log_z_ti,
        });
        if !last && config.adapt_fraction > 0.0 {
            schedule = update_schedule(&rates, &ensemble.schedule).0;
            ensemble.schedule = schedule.clone();
        }
        ensemble.reset_statistics();
    }

    let final_round = rounds.last().cloned().ok_or(PtError::EmptyChains)?;
    let barrier = CommunicationBarrier::from_rates(&final_round.schedule, &final_round.rejection_rates);
    Ok(PtResult {
        samples,
        rounds,
        barrier,
        log_z_stepping_stone: final_round.log_z_stepping_stone,
        log_z_thermodynamic: final_round.log_z_thermodynamic,
        final_round_parts: round_parts,
    })
}

#[derive(Clone, Debug)]
pub struct McmcConfig {
    pub n_scans: u64,
    pub n_passes_per_scan: f64,
    pub thinning: u64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { n_scans: 1000, n_passes_per_scan: 3.0, thinning: 1, seed: 1 }
    }
}

/// Single-chain sampling at t = 1; needs no generative structure when the
/// declared initial values have positive density.
pub fn run_mcmc(model: &Arc<Model>, config: &McmcConfig) -> Result<Vec<State>, PtError> {
    let density = AnnealedDensity::new(model.clone());
    let kernels = match_samplers(model)?.kernels;
    let mut rng = MersenneSource::new(config.seed);
    let mut state = model.initial_state();
    if density.log_density_unchecked(&state, 1.0) == f64::NEG_INFINITY && model.check_generative_normal_form().is_ok() {
        for _ in 0..1000 {
            model.forward_simulate(&mut state, &mut rng).map_err(|e| PtError::Model(e.to_string()))?;
            if density.log_density_unchecked(&state, 1.0) > f64::NEG_INFINITY {
                break;
            }
        }
    }
    let mut out = Vec::new();
    for scan in 0..config.n_scans {
        sweep(&kernels, &density, 1.0, &mut state, &mut rng, config.n_passes_per_scan)?;
        if (scan + 1) % config.thinning.max(1) == 0 {
            out.push(state.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(finite: f64) -> LikelihoodParts {
        LikelihoodParts { finite, n_zero: 0 }
    }

    #[test]
    fn swap_ratio_examples() {
        // The better state sits at the hotter chain, so the swap is favoured.
        assert!((swap_log_ratio(0.2, 0.8, &flat(-1.0), &flat(-5.0)) - 2.4).abs() < 1e-12);
        assert_eq!(swap_log_ratio(0.3, 0.3, &flat(-1.0), &flat(-5.0)), 0.0);
        assert_eq!(swap_log_ratio(0.2, 0.8, &flat(-3.0), &flat(-3.0)), 0.0);
    }

    #[test]
    fn rounds_double() {
        assert_eq!(round_lengths(1), vec![1]);
        assert_eq!(round_lengths(7), vec![1, 2, 4]);
        assert_eq!(round_lengths(10), vec![1, 2, 7]);
        assert_eq!(round_lengths(64), vec![1, 2, 4, 8, 16, 33]);
        assert_eq!(round_lengths(1 << 14).last(), Some(&8193));
        for n in 1..300 {
            let r = round_lengths(n);
            assert_eq!(r.iter().sum::<u64>(), n);
            assert!(r.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(round_lengths(30000).len(), 15);
    }

    #[test]
    fn schedule_updates() {
        let (g, _) = update_schedule(&[0.5, 0.5], &[0.0, 0.5, 1.0]);
        assert!((g[1] - 0.5).abs() < 1e-12);
        let (g, _) = update_schedule(&[0.0, 0.0, 0.0], &[0.0, 0.1, 0.2, 1.0]);
        assert_eq!(g, uniform_schedule(4));
        let (g, _) = update_schedule(&[0.9, 0.1], &[0.0, 0.5, 1.0]);
        assert!(g[1] < 0.5);
    }

    #[test]
    fn spline_is_linear_on_linear_knots() {
        let s = MonotoneSpline::new(vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 2.0]);
        for t in [0.0, 0.1, 0.5, 0.99] {
            assert!((s.value(t) - 2.0 * t).abs() < 1e-12);
            assert!((s.derivative(t) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evidence_constant_likelihood() {
        let c = -1.7;
        let samples = vec![vec![flat(c); 5]; 4];
        let grid = uniform_schedule(4);
        assert!((stepping_stone_log_z(&samples, &grid).unwrap() - c).abs() < 1e-12);
        assert!((thermodynamic_log_z(&samples, &grid).unwrap() - c).abs() < 1e-12);
        let samples = vec![vec![flat(0.0)], vec![]];
        assert_eq!(stepping_stone_log_z(&samples, &[0.0, 1.0]).unwrap(), 0.0);
        let zero = vec![vec![LikelihoodParts { finite: 0.0, n_zero: 1 }], vec![flat(0.0)]];
        assert_eq!(thermodynamic_log_z(&zero, &[0.0, 1.0]), None);
    }
}
