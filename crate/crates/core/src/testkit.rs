//! Correctness tooling: exhaustive enumeration of random traces, exact
//! transition-matrix checks for discrete models, and the exact invariance test.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::anneal::AnnealedDensity;
use crate::dists::{Arg, Family, Support};
use crate::model::{Model, ModelBuilder, ModelError, State, Status, Value, VarId, VarKind};
use crate::models::add_law;
use crate::rng::{MersenneSource, RandomSource};
use crate::samplers::{slice_real, Kernel, KernelInstance, SamplerError, Target};

pub const DEFAULT_TRACE_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestkitError {
    #[error("a continuous random primitive was used during exhaustive enumeration")]
    ContinuousPrimitive,
    #[error("more than {0} traces")]
    TraceCap(u64),
    #[error("more than {0} states")]
    StateCap(usize),
    #[error("model has non-discrete latent variable `{0}`")]
    NotDiscrete(String),
    #[error("program failed: {0}")]
    Program(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Clone, Debug)]
struct Choice {
    probs: Vec<f64>,
    values: Vec<usize>,
    taken: usize,
}

/// Random source that walks every combination of discrete choices depth-first.
#[derive(Debug, Default)]
pub struct ExhaustiveRandom {
    trace: Vec<Choice>,
    pos: usize,
    probability: f64,
    violated: bool,
    /// Widest single branch point allowed before giving up.
    max_branching: u64,
    too_wide: bool,
    scratch: u64,
}

impl ExhaustiveRandom {
    pub fn new() -> Self {
        ExhaustiveRandom { probability: 1.0, max_branching: u64::MAX, ..Default::default() }
    }

    /// Probability of the trace just run.
    pub fn last_probability(&self) -> f64 {
        self.probability
    }

    fn choose(&mut self, probs: Vec<f64>, values: Vec<usize>) -> usize {
        if self.pos == self.trace.len() {
            self.trace.push(Choice { probs, values, taken: 0 });
        }
        let c = &self.trace[self.pos];
        self.pos += 1;
        self.probability *= c.probs[c.taken];
        c.values[c.taken]
    }

    /// Advances to the next unexplored trace; false when the tree is exhausted.
    fn advance(&mut self) -> bool {
        self.trace.truncate(self.pos);
        while let Some(last) = self.trace.last_mut() {
            if last.taken + 1 < last.probs.len() {
                last.taken += 1;
                break;
            }
            self.trace.pop();
        }
        self.pos = 0;
        self.probability = 1.0;
        !self.trace.is_empty()
    }
}

impl RandomSource for ExhaustiveRandom {
    /// Flags the run as invalid; the values only keep rejection loops terminating.
    fn next_u64(&mut self) -> u64 {
        self.violated = true;
        self.scratch = self.scratch.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.scratch;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 || p.is_nan() {
            return false;
        }
        self.choose(vec![p, 1.0 - p], vec![1, 0]) == 1
    }

    fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        let (values, probs): (Vec<usize>, Vec<f64>) = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, w / total))
            .unzip();
        if values.len() <= 1 {
            return values.first().copied().unwrap_or(0);
        }
        self.choose(probs, values)
    }

    fn int_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "int_below(0)");
        if n == 1 {
            return 0;
        }
        if n as u64 > self.max_branching {
            self.too_wide = true;
            return 0;
        }
        self.choose(vec![1.0 / n as f64; n], (0..n).collect())
    }
}

/// Runs `program` once per trace, returning each output with its probability.
pub fn enumerate_traces<T>(
    cap: u64,
    mut program: impl FnMut(&mut ExhaustiveRandom) -> T,
) -> Result<Vec<(T, f64)>, TestkitError> {
    let mut rng = ExhaustiveRandom { max_branching: cap, ..ExhaustiveRandom::new() };
    let mut out = Vec::new();
    loop {
        let v = program(&mut rng);
        if rng.violated {
            return Err(TestkitError::ContinuousPrimitive);
        }
        out.push((v, rng.probability));
        if rng.too_wide || out.len() as u64 > cap {
            return Err(TestkitError::TraceCap(cap));
        }
        if !rng.advance() {
            return Ok(out);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedZ {
    pub expected: f64,
    pub n_traces: u64,
}

/// Σ_traces P(trace)·exp(log Ẑ(trace)).
pub fn expected_z_estimate(
    cap: u64,
    mut estimator: impl FnMut(&mut dyn RandomSource) -> Result<f64, String>,
) -> Result<ExpectedZ, TestkitError> {
    let mut failure = None;
    let traces = enumerate_traces(cap, |r| match estimator(r) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    })?;
    if let Some(e) = failure {
        return Err(TestkitError::Program(e));
    }
    let expected = traces.iter().map(|(l, p)| l.exp() * p).sum();
    Ok(ExpectedZ { expected, n_traces: traces.len() as u64 })
}

#[derive(Clone, Debug)]
pub struct DiscreteMcReport {
    pub states: Vec<State>,
    /// Row-stochastic transition matrix over `states`.
    pub transition: Vec<Vec<f64>>,
    /// Target probabilities from exact enumeration of the joint.
    pub pi: Vec<f64>,
    pub max_row_sum_error: f64,
    /// ‖πP − π‖∞.
    pub invariance_error: f64,
    pub irreducible: bool,
}

impl DiscreteMcReport {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn is_invariant(&self, tol: f64) -> bool {
        self.invariance_error <= tol && self.max_row_sum_error <= 1e-12
    }
}

/// Builds the exact transition matrix of one sweep of `kernels` at `t`, over
/// all states reachable from the prior support.
pub fn discrete_mc_test(
    model: &Arc<Model>,
    kernels: &[KernelInstance],
    t: f64,
    state_cap: usize,
) -> Result<DiscreteMcReport, TestkitError> {
    for v in model.latent_leaves() {
        let kind = model.variable(v).kind;
        if !kind.is_discrete() {
            return Err(TestkitError::NotDiscrete(model.variable(v).name.clone()));
        }
    }
    let density = AnnealedDensity::new(model.clone());
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut queue = VecDeque::new();
    let mut admit = |s: State, states: &mut Vec<State>, queue: &mut VecDeque<usize>| -> Result<usize, TestkitError> {
        let key = s.key();
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        if states.len() >= state_cap {
            return Err(TestkitError::StateCap(state_cap));
        }
        index.insert(key, states.len());
        states.push(s);
        queue.push_back(states.len() - 1);
        Ok(states.len() - 1)
    };

    let init = model.initial_state();
    let prior = enumerate_traces(DEFAULT_TRACE_CAP, |r| {
        let mut s = init.clone();
        model.forward_simulate(&mut s, r).map(|_| s)
    })?;
    for (s, _) in prior {
        let s = s?;
        if density.log_density_unchecked(&s, t) > f64::NEG_INFINITY {
            admit(s, &mut states, &mut queue)?;
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let from = states[i].clone();
        let outcomes = enumerate_traces(DEFAULT_TRACE_CAP, |r| {
            let mut s = from.clone();
            for k in kernels {
                k.execute(&density, t, &mut s, r)?;
            }
            Ok::<State, SamplerError>(s)
        })?;
        let mut row = Vec::new();
        for (s, p) in outcomes {
            let j = admit(s?, &mut states, &mut queue)?;
            row.push((j, p));
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }

    let n = states.len();
    let mut transition = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            transition[i][j] += p;
        }
    }
    let log_pi: Vec<f64> = states.iter().map(|s| density.log_density_unchecked(s, t)).collect();
    let z = crate::math::log_sum_exp(&log_pi);
    let pi: Vec<f64> = log_pi.iter().map(|l| (l - z).exp()).collect();
    let max_row_sum_error = transition
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut invariance_error: f64 = 0.0;
    for j in 0..n {
        let v: f64 = (0..n).map(|i| pi[i] * transition[i][j]).sum();
        invariance_error = invariance_error.max((v - pi[j]).abs());
    }
    let support: Vec<usize> = (0..n).filter(|i| pi[*i] > 0.0).collect();
    let irreducible = strongly_connected(&transition, &support);
    Ok(DiscreteMcReport { states, transition, pi, max_row_sum_error, invariance_error, irreducible })
}

fn strongly_connected(p: &[Vec<f64>], nodes: &[usize]) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; p.len()];
        let mut stack = vec![nodes[0]];
        seen[nodes[0]] = true;
        while let Some(i) = stack.pop() {
            for &j in nodes {
                let w = if forward { p[i][j] } else { p[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        nodes.iter().all(|&j| seen[j])
    };
    reach(true) && reach(false)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let ne = (n1 * n2 / (n1 + n2)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * 2.0 * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

#[derive(Clone, Debug)]
pub struct EitConfig {
    pub m_forward: usize,
    pub m_chained: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for EitConfig {
    fn default() -> Self {
        EitConfig { m_forward: 10_000, m_chained: 10_000, k: 10, alpha: 0.005, seed: 1 }
    }
}

pub type TestFunction = (String, Arc<dyn Fn(&State) -> f64 + Send + Sync>);

#[derive(Clone, Debug)]
pub struct EitOutcome {
    pub kernel: String,
    pub function: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug)]
pub struct EitReport {
    pub outcomes: Vec<EitOutcome>,
    /// Per-test level after the Bonferroni correction.
    pub level: f64,
}

impl EitReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.p_value >= self.level)
    }

    pub fn min_p(&self) -> f64 {
        self.outcomes.iter().map(|o| o.p_value).fold(1.0, f64::min)
    }
}

impl fmt::Display for EitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel,function,statistic,pValue,verdict")?;
        for o in &self.outcomes {
            let verdict = if o.p_value >= self.level { "pass" } else { "fail" };
            writeln!(f, "{},{},{},{},{}", o.kernel, o.function, o.statistic, o.p_value, verdict)?;
        }
        Ok(())
    }
}

/// Compares forward simulations against chains of (kernel at t = 1, regenerate
/// data) started from forward simulations; each kernel is tested alone.
pub fn exact_invariance_test(
    model: &Arc<Model>,
    kernels: &[KernelInstance],
    functions: &[TestFunction],
    config: &EitConfig,
) -> Result<EitReport, TestkitError> {
    model.check_generative_normal_form().map_err(ModelError::NotGenerative)?;
    let density = AnnealedDensity::new(model.clone());
    let init = model.initial_state();
    let forward: Vec<State> = (0..config.m_forward)
        .into_par_iter()
        .map(|m| {
            let mut r = MersenneSource::derived(config.seed, &[0, m as u64]);
            let mut s = init.clone();
            model.simulate_joint(&mut s, &mut r).map(|_| s)
        })
        .collect::<Result<_, _>>()?;
    let mut outcomes = Vec::new();
    for (ki, kernel) in kernels.iter().enumerate() {
        let chained: Vec<State> = (0..config.m_chained)
            .into_par_iter()
            .map(|m| {
                let mut r = MersenneSource::derived(config.seed, &[1 + ki as u64, m as u64]);
                let mut s = init.clone();
                model.simulate_joint(&mut s, &mut r)?;
                for _ in 0..config.k {
                    kernel.execute(&density, 1.0, &mut s, &mut r)?;
                    model.simulate_observations(&mut s, &mut r)?;
                }
                Ok(s)
            })
            .collect::<Result<_, TestkitError>>()?;
        for (name, f) in functions {
            let a: Vec<f64> = forward.iter().map(|s| f(s)).collect();
            let b: Vec<f64> = chained.iter().map(|s| f(s)).collect();
            let (statistic, p_value) = ks_two_sample(&a, &b);
            outcomes.push(EitOutcome {
                kernel: format!("{}({})", kernel.kernel.name(), model.variable(kernel.target).name),
                function: name.clone(),
                statistic,
                p_value,
            });
        }
    }
    let level = config.alpha / outcomes.len().max(1) as f64;
    Ok(EitReport { outcomes, level })
}

/// Random-walk Metropolis that accepts with min(1, 2·ratio): not invariant.
pub struct InflatedMetropolis;

impl Kernel for InflatedMetropolis {
    fn name(&self) -> &'static str {
        "InflatedMetropolis"
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let before = target.log_density(state);
        let x0 = state.real(v);
        let z = 2.0 * rng.uniform01() - 1.0;
        state.set_real(v, x0 + z);
        let after = target.log_density(state);
        let accept = (2.0 * (after - before).exp()).min(1.0);
        if !rng.bernoulli(accept) {
            state.set_real(v, x0);
        }
        Ok(())
    }
}

/// Metropolis on an integer with inflated acceptance min(1, 2·ratio).
pub struct InflatedIntMetropolis;

impl Kernel for InflatedIntMetropolis {
    fn name(&self) -> &'static str {
        "InflatedIntMetropolis"
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let before = target.log_density(state);
        let x0 = state.int(v);
        let step = if rng.bernoulli(0.5) { 1 } else { -1 };
        state.set_int(v, x0 + step);
        let after = target.log_density(state);
        let accept = (2.0 * (after - before).exp()).min(1.0);
        if !rng.bernoulli(accept) {
            state.set_int(v, x0);
        }
        Ok(())
    }
}

/// Correct slice update followed by a +0.1 shift.
pub struct ShiftedSlice;

impl Kernel for ShiftedSlice {
    fn name(&self) -> &'static str {
        "ShiftedSlice"
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let x0 = state.real(v);
        let out = slice_real(
            x0,
            1.0,
            |x| {
                state.set_real(v, x);
                target.log_density(state)
            },
            rng,
        )
        .ok_or_else(|| SamplerError::ZeroDensity(target.name.to_string()))?;
        state.set_real(v, out + 0.1);
        Ok(())
    }
}

/// Adds 0.1 to one coordinate and renormalizes, ignoring the target.
pub struct RenormalizingSimplex;

impl Kernel for RenormalizingSimplex {
    fn name(&self) -> &'static str {
        "RenormalizingSimplex"
    }

    fn handles_constrained(&self) -> bool {
        true
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let p = state.simplex_mut(v);
        let i = rng.int_below(p.len());
        p[i] += 0.1;
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        Ok(())
    }
}

/// Leaves the state unchanged.
pub struct IdentityKernel;

impl Kernel for IdentityKernel {
    fn name(&self) -> &'static str {
        "Identity"
    }

    fn handles_constrained(&self) -> bool {
        true
    }

    fn execute(&self, _: &Target, _: &mut State, _: &mut dyn RandomSource) -> Result<(), SamplerError> {
        Ok(())
    }
}

/// Binds `kernel` to the named variable.
pub fn instance(model: &Model, var: &str, kernel: impl Kernel + 'static) -> KernelInstance {
    let id = model.lookup(var).unwrap_or_else(|| panic!("unknown variable `{var}`"));
    KernelInstance::new(model, id, Arc::new(kernel))
}

/// A model plus the statistics an invariance test compares.
pub struct EitCase {
    pub name: String,
    pub model: Arc<Model>,
    pub functions: Vec<TestFunction>,
}

fn scalar_functions(x: VarId) -> Vec<TestFunction> {
    vec![
        ("x".to_string(), Arc::new(move |s: &State| s.real(x))),
        ("x^2".to_string(), Arc::new(move |s: &State| s.real(x).powi(2))),
    ]
}

/// Latent `x` drawn from `family`; one observation y | x ~ Normal(x, 1), or
/// y | x ~ Categorical(x) for simplices.
fn catalog_case(family: Family, args: Vec<Arg>) -> Result<EitCase, ModelError> {
    let mut b = ModelBuilder::new();
    let kind = match family.spec().support {
        Support::Int => VarKind::Int,
        Support::Simplex => VarKind::Simplex(3),
        Support::Permutation => VarKind::Permutation(3),
        _ => VarKind::Real,
    };
    let x = b.add_variable("x", kind, Status::Latent, None)?;
    let (y_kind, y0) = match kind {
        VarKind::Simplex(_) => (VarKind::Int, Value::Int(0)),
        _ => (VarKind::Real, Value::Real(0.0)),
    };
    let y = b.add_variable("y", y_kind, Status::Observed, Some(y0))?;
    add_law(&mut b, family, x, &[], move |_| args.clone())?;
    let functions: Vec<TestFunction> = match kind {
        VarKind::Simplex(_) => {
            b.add_constrained(x)?;
            add_law(&mut b, Family::Categorical, y, &[x], move |s| vec![s.simplex(x).to_vec().into()])?;
            vec![
                ("p0".to_string(), Arc::new(move |s: &State| s.simplex(x)[0])),
                ("p1".to_string(), Arc::new(move |s: &State| s.simplex(x)[1])),
            ]
        }
        VarKind::Permutation(_) => {
            add_law(&mut b, Family::Normal, y, &[x], move |s| vec![(s.permutation(x)[0] as f64).into(), 1.0.into()])?;
            vec![
                ("perm0".to_string(), Arc::new(move |s: &State| s.permutation(x)[0] as f64)),
                ("perm1".to_string(), Arc::new(move |s: &State| s.permutation(x)[1] as f64)),
            ]
        }
        _ => {
            add_law(&mut b, Family::Normal, y, &[x], move |s| vec![s.real(x).into(), 1.0.into()])?;
            scalar_functions(x)
        }
    };
    Ok(EitCase { name: family.name().to_string(), model: Arc::new(b.build()), functions })
}

/// One case per catalog law over a variable (LogPotential has no realization).
pub fn catalog_eit_cases() -> Result<Vec<EitCase>, ModelError> {
    use Family::*;
    let v = |xs: &[f64]| -> Arg { xs.to_vec().into() };
    let r = |x: f64| -> Arg { x.into() };
    let cases: Vec<(Family, Vec<Arg>)> = vec![
        (Bernoulli, vec![r(0.3)]),
        (Binomial, vec![r(5.0), r(0.4)]),
        (BetaBinomial, vec![r(6.0), r(2.0), r(3.0)]),
        (Categorical, vec![v(&[0.2, 0.5, 0.3])]),
        (DiscreteUniform, vec![r(0.0), r(5.0)]),
        (Geometric, vec![r(0.4)]),
        (NegativeBinomial, vec![r(3.0), r(0.4)]),
        (Poisson, vec![r(3.0)]),
        (Beta, vec![r(2.0), r(3.0)]),
        (ChiSquared, vec![r(3.0)]),
        (ContinuousUniform, vec![r(-1.0), r(2.0)]),
        (Exponential, vec![r(1.5)]),
        (Gamma, vec![r(2.0), r(1.5)]),
        (HalfStudentT, vec![r(3.0), r(1.0)]),
        (Laplace, vec![r(0.5), r(1.0)]),
        (Logistic, vec![r(0.0), r(1.0)]),
        (Normal, vec![r(0.0), r(2.0)]),
        (StudentT, vec![r(4.0), r(0.0), r(1.0)]),
        (Weibull, vec![r(1.5), r(2.0)]),
        (Dirichlet, vec![v(&[1.0, 2.0, 0.5])]),
        (SimplexUniform, vec![r(3.0)]),
        (SymmetricDirichlet, vec![r(3.0), r(0.7)]),
        (UniformPermutation, vec![]),
    ];
    cases.into_iter().map(|(f, a)| catalog_case(f, a)).collect()
}

/// The three deliberately broken kernels, each bound to a case it should fail on.
pub fn bug_eit_cases() -> Result<Vec<(EitCase, KernelInstance)>, ModelError> {
    let normal = || catalog_case(Family::Normal, vec![0.0.into(), 2.0.into()]);
    let inflated = normal()?;
    let k1 = instance(&inflated.model, "x", InflatedMetropolis);
    let shifted = normal()?;
    let k2 = instance(&shifted.model, "x", ShiftedSlice);
    let simplex = catalog_case(Family::Dirichlet, vec![vec![1.0, 2.0, 0.5].into()])?;
    let k3 = instance(&simplex.model, "x", RenormalizingSimplex);
    Ok(vec![(inflated, k1), (shifted, k2), (simplex, k3)])
}
