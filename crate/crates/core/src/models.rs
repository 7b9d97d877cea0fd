//! Ready-made models built with the library API.

use std::sync::Arc;

use crate::dists::{as_distribution_object, uniform_permutation, Arg, Draw, Family, IntMixture, Realization};
use crate::math::logistic;
use crate::model::{FactorId, Model, ModelBuilder, ModelError, State, Status, Value, VarId, VarKind};
use crate::rng::RandomSource;

fn realization(state: &State, kind: VarKind, v: VarId) -> Realization<'_> {
    match kind {
        VarKind::Real => Realization::Real(state.real(v)),
        VarKind::Int => Realization::Int(state.int(v)),
        VarKind::Simplex(_) => Realization::Simplex(state.simplex(v)),
        VarKind::Permutation(_) => Realization::Permutation(state.permutation(v)),
        _ => Realization::None,
    }
}

/// Writes a draw into a variable of matching kind.
pub fn write_draw(state: &mut State, v: VarId, draw: Draw) -> Result<(), String> {
    match draw {
        Draw::Real(x) => state.set_real(v, x),
        Draw::Int(k) => state.set_int(v, k),
        Draw::Simplex(p) => *state.simplex_mut(v) = p,
        Draw::Permutation(p) => *state.permutation_mut(v) = p,
    }
    Ok(())
}

/// `target | conditioning ~ family(args(state))` as one factor with a generator.
pub fn add_law(
    b: &mut ModelBuilder,
    family: Family,
    target: VarId,
    conditioning: &[VarId],
    args: impl Fn(&State) -> Vec<Arg> + Send + Sync + 'static,
) -> Result<FactorId, ModelError> {
    let kind = b.variable(target).kind;
    let label = format!("{} ~ {}", b.variable(target).name, family.name());
    let args = Arc::new(args);
    let a = args.clone();
    let mut scope = vec![target];
    scope.extend_from_slice(conditioning);
    let spec = crate::model::FactorSpec::new(label, scope, move |s| family.log_density(&a(s), realization(s, kind, target)))
        .outputs([target])
        .generator(move |s, r| {
            let draw = if family == Family::UniformPermutation {
                Draw::Permutation(uniform_permutation(s.permutation(target).len(), r))
            } else {
                family.sample(&args(s), r).map_err(|e| e.to_string())?
            };
            write_draw(s, target, draw)
        });
    b.add_factor(spec)
}

/// Potential without a random variable, e.g. an MRF clique term.
pub fn add_potential(
    b: &mut ModelBuilder,
    label: &str,
    scope: &[VarId],
    f: impl Fn(&State) -> f64 + Send + Sync + 'static,
) -> Result<FactorId, ModelError> {
    b.add_factor(crate::model::FactorSpec::new(label, scope.to_vec(), f))
}

fn entries(b: &ModelBuilder, list: VarId) -> Vec<VarId> {
    b.variable(list).elements.clone()
}

/// z ~ Exponential(rate); y | z ~ ContinuousUniform(0, z).
pub fn doomsday(rate: f64, y: Option<f64>) -> Result<Model, ModelError> {
    let mut b = ModelBuilder::new();
    let status = if y.is_some() { Status::Observed } else { Status::Latent };
    let z = b.add_variable("z", VarKind::Real, Status::Latent, None)?;
    let yv = b.add_variable("y", VarKind::Real, status, y.map(Value::Real))?;
    add_law(&mut b, Family::Exponential, z, &[], move |_| vec![rate.into()])?;
    add_law(&mut b, Family::ContinuousUniform, yv, &[z], move |s| vec![0.0.into(), s.real(z).into()])?;
    Ok(b.build())
}

/// x ~ Normal(0, 1); y | x ~ Normal(x, 1), y observed.
pub fn conjugate_normal(y: f64) -> Result<Model, ModelError> {
    let mut b = ModelBuilder::new();
    let x = b.add_variable("x", VarKind::Real, Status::Latent, None)?;
    let yv = b.add_variable("y", VarKind::Real, Status::Observed, Some(Value::Real(y)))?;
    add_law(&mut b, Family::Normal, x, &[], |_| vec![0.0.into(), 1.0.into()])?;
    add_law(&mut b, Family::Normal, yv, &[x], move |s| vec![s.real(x).into(), 1.0.into()])?;
    Ok(b.build())
}

/// Log evidence of [`conjugate_normal`]: log N(y; 0, 2).
pub fn conjugate_normal_log_z(y: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - y * y / 4.0
}

/// Discrete hidden Markov model with categorical emissions.
#[derive(Clone, Debug)]
pub struct Hmm {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub observations: Vec<i64>,
}

impl Hmm {
    /// Three hidden states, three symbols, three time steps.
    pub fn small() -> Self {
        Hmm {
            initial: vec![0.5, 0.3, 0.2],
            transition: vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.25, 0.25, 0.5]],
            emission: vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.6, 0.3], vec![0.2, 0.2, 0.6]],
            observations: vec![0, 2, 1],
        }
    }

    pub fn model(&self) -> Result<Model, ModelError> {
        let n = self.observations.len();
        let mut b = ModelBuilder::new();
        let x = b.add_variable("x", VarKind::IntList(n), Status::Latent, None)?;
        let y = b.add_variable("y", VarKind::IntList(n), Status::Observed, Some(Value::IntList(self.observations.clone())))?;
        let (xs, ys) = (entries(&b, x), entries(&b, y));
        let init = self.initial.clone();
        add_law(&mut b, Family::Categorical, xs[0], &[], move |_| vec![init.clone().into()])?;
        for k in 1..n {
            let a = self.transition.clone();
            let prev = xs[k - 1];
            add_law(&mut b, Family::Categorical, xs[k], &[prev], move |s| vec![row(&a, s.int(prev)).into()])?;
        }
        for k in 0..n {
            let e = self.emission.clone();
            let hidden = xs[k];
            add_law(&mut b, Family::Categorical, ys[k], &[hidden], move |s| vec![row(&e, s.int(hidden)).into()])?;
        }
        Ok(b.build())
    }
}

/// Row `i` of a matrix, or an invalid parameter (empty vector) when out of range.
fn row(m: &[Vec<f64>], i: i64) -> Vec<f64> {
    usize::try_from(i).ok().and_then(|i| m.get(i)).cloned().unwrap_or_default()
}

/// Uniform permutation with y_i | permutation ~ Normal(permutation[i], 0.3).
pub fn composite_model(y: &[f64]) -> Result<Model, ModelError> {
    let n = y.len();
    let mut b = ModelBuilder::new();
    let yl = b.add_variable("y", VarKind::RealList(n), Status::Observed, Some(Value::RealList(y.to_vec())))?;
    let p = b.add_variable("permutation", VarKind::Permutation(n), Status::Latent, None)?;
    add_law(&mut b, Family::UniformPermutation, p, &[], |_| vec![])?;
    for (i, yi) in entries(&b, yl).into_iter().enumerate() {
        add_law(&mut b, Family::Normal, yi, &[p], move |s| {
            vec![(s.permutation(p)[i] as f64).into(), 0.3.into()]
        })?;
    }
    Ok(b.build())
}

/// Edges of the n×n square lattice (free boundary), vertices in row-major order.
pub fn square_ising_edges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let v = r * n + c;
            if c + 1 < n {
                out.push((v, v + 1));
            }
            if r + 1 < n {
                out.push((v, v + n));
            }
        }
    }
    out
}

/// Ising model written as Bernoulli pseudo-priors times pairwise potentials.
pub fn ising(n: usize, beta: f64, moment: f64) -> Result<Model, ModelError> {
    let mut b = ModelBuilder::new();
    let vl = b.add_variable("vertices", VarKind::IntList(n * n), Status::Latent, None)?;
    let vs = entries(&b, vl);
    for (i, j) in square_ising_edges(n) {
        let (a, c) = (vs[i], vs[j]);
        add_potential(&mut b, &format!("edge({i},{j})"), &[a, c], move |s| {
            let (x, y) = (s.int(a), s.int(c));
            if !(0..=1).contains(&x) || !(0..=1).contains(&y) {
                return f64::NEG_INFINITY;
            }
            beta * (2 * x - 1) as f64 * (2 * y - 1) as f64
        })?;
    }
    let p = logistic(-2.0 * moment);
    for &v in &vs {
        add_law(&mut b, Family::Bernoulli, v, &[], move |_| vec![p.into()])?;
    }
    Ok(b.build())
}

/// Critical inverse temperature of the square-lattice Ising model.
pub fn ising_critical_beta() -> f64 {
    (1.0 + 2f64.sqrt()).ln() / 2.0
}

/// Markov chain of length `len`; the chain is latent unless `observed` is given.
pub fn markov_chain(
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    len: usize,
    observed: Option<Vec<i64>>,
) -> Result<Model, ModelError> {
    let mut b = ModelBuilder::new();
    let status = if observed.is_some() { Status::Observed } else { Status::Latent };
    let chain = b.add_variable("chain", VarKind::IntList(len), status, observed.map(Value::IntList))?;
    let cs = entries(&b, chain);
    if let Some(&first) = cs.first() {
        add_law(&mut b, Family::Categorical, first, &[], move |_| vec![initial.clone().into()])?;
    }
    for k in 1..len {
        let prev = cs[k - 1];
        let t = transition.clone();
        add_law(&mut b, Family::Categorical, cs[k], &[prev], move |s| vec![row(&t, s.int(prev)).into()])?;
    }
    Ok(b.build())
}

/// Two-component (or `k`-component) Gaussian mixture with latent labels.
pub fn gmm(y: &[f64], k: usize) -> Result<Model, ModelError> {
    let n = y.len();
    let mut b = ModelBuilder::new();
    let yl = b.add_variable("y", VarKind::RealList(n), Status::Observed, Some(Value::RealList(y.to_vec())))?;
    let zl = b.add_variable("z", VarKind::IntList(n), Status::Latent, None)?;
    let pi = b.add_variable("pi", VarKind::Simplex(k), Status::Latent, None)?;
    let mul = b.add_variable("mu", VarKind::RealList(k), Status::Latent, None)?;
    let sdl = b.add_variable("sd", VarKind::RealList(k), Status::Latent, Some(Value::RealList(vec![1.0; k])))?;
    b.add_constrained(pi)?;
    let (ys, zs, mus, sds) = (entries(&b, yl), entries(&b, zl), entries(&b, mul), entries(&b, sdl));
    add_law(&mut b, Family::Dirichlet, pi, &[], move |_| vec![vec![1.0; k].into()])?;
    for j in 0..k {
        add_law(&mut b, Family::Normal, mus[j], &[], |_| vec![0.0.into(), 100.0.into()])?;
        add_law(&mut b, Family::ContinuousUniform, sds[j], &[], |_| vec![0.0.into(), 10.0.into()])?;
    }
    let norm = -0.5 * (2.0 * std::f64::consts::PI).ln();
    for i in 0..n {
        let (zi, yi) = (zs[i], ys[i]);
        // Categorical(pi) law read in place; the generic law would copy pi on every call.
        let spec = crate::model::FactorSpec::new(format!("z[{i}] ~ Categorical"), vec![zi, pi], move |s| {
            let p = s.simplex(pi);
            match usize::try_from(s.int(zi)).ok().and_then(|c| p.get(c)) {
                Some(w) => w.ln(),
                None => f64::NEG_INFINITY,
            }
        })
        .outputs([zi])
        .generator(move |s, r| {
            let c = r.categorical(s.simplex(pi));
            s.set_int(zi, c as i64);
            Ok(())
        });
        b.add_factor(spec)?;
        let (mus, sds) = (mus.clone(), sds.clone());
        let (m2, s2) = (mus.clone(), sds.clone());
        let mut scope = vec![yi, zi];
        scope.extend(&mus);
        scope.extend(&sds);
        let spec = crate::model::FactorSpec::new(format!("y[{i}] ~ Normal"), scope, move |s| {
            let Some(c) = usize::try_from(s.int(zi)).ok().filter(|c| *c < mus.len()) else {
                return f64::NEG_INFINITY;
            };
            let sd = s.real(sds[c]);
            if sd <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let d = (s.real(yi) - s.real(mus[c])) / sd;
            norm - sd.ln() - 0.5 * d * d
        })
        .outputs([yi])
        .generator(move |s, r| {
            let c = usize::try_from(s.int(zi)).ok().filter(|c| *c < m2.len()).ok_or("label out of range")?;
            let sd = s.real(s2[c]);
            let d = Family::Normal
                .sample(&[s.real(m2[c]).into(), (sd * sd).into()], r)
                .map_err(|e| e.to_string())?;
            write_draw(s, yi, d)
        });
        b.add_factor(spec)?;
    }
    Ok(b.build())
}

/// Observations from a two-component mixture, for bundled examples and tests.
pub fn gmm_synthetic(n: usize, seed: u64) -> Vec<f64> {
    let mut r = crate::rng::MersenneSource::new(seed);
    (0..n)
        .map(|_| {
            let (m, sd) = if r.bernoulli(0.5) { (-1.0, 1.0) } else { (2.0, 1.0) };
            match Family::Normal.sample(&[m.into(), (sd * sd).into()], &mut r) {
                Ok(Draw::Real(x)) => x,
                _ => unreachable!("valid normal parameters"),
            }
        })
        .collect()
}

/// x | λ1, λ2, π ~ IntMixture(π, [Poisson(λ1), Poisson(λ2)]) with Exponential(1)
/// rates and a uniform simplex on π.
pub fn poisson_mixture(x: Option<i64>) -> Result<Model, ModelError> {
    let mut b = ModelBuilder::new();
    let status = if x.is_some() { Status::Observed } else { Status::Latent };
    let xv = b.add_variable("x", VarKind::Int, status, x.map(Value::Int))?;
    let l1 = b.add_variable("lambda1", VarKind::Real, Status::Latent, Some(Value::Real(1.0)))?;
    let l2 = b.add_variable("lambda2", VarKind::Real, Status::Latent, Some(Value::Real(1.0)))?;
    let pi = b.add_variable("pi", VarKind::Simplex(2), Status::Latent, None)?;
    b.add_constrained(pi)?;
    add_law(&mut b, Family::Exponential, l1, &[], |_| vec![1.0.into()])?;
    add_law(&mut b, Family::Exponential, l2, &[], |_| vec![1.0.into()])?;
    add_law(&mut b, Family::Dirichlet, pi, &[], |_| vec![vec![1.0, 1.0].into()])?;
    let c1 = as_distribution_object("Poisson", move |s| vec![s.real(l1).into()]).expect("Poisson is in the catalog");
    let c2 = as_distribution_object("Poisson", move |s| vec![s.real(l2).into()]).expect("Poisson is in the catalog");
    let mix = Arc::new(IntMixture::new(move |s| s.simplex(pi).to_vec(), vec![c1, c2]));
    let m2 = mix.clone();
    let spec = crate::model::FactorSpec::new("x ~ IntMixture", [xv, l1, l2, pi], move |s| mix.log_density(s, s.int(xv)))
        .outputs([xv])
        .generator(move |s, r: &mut dyn RandomSource| {
            let k = m2.sample(s, r).map_err(|e| e.to_string())?;
            s.set_int(xv, k);
            Ok(())
        });
    b.add_factor(spec)?;
    Ok(b.build())
}
