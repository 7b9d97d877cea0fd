//! Local exploration kernels and their matching to latent variables.

use std::sync::Arc;

use thiserror::Error;

use crate::anneal::AnnealedDensity;
use crate::model::{FactorId, FactorKind, Model, VarId, VarKind};
use crate::rng::{LazyUniform, RandomSource};
use crate::model::State;

const MAX_DOUBLINGS: u32 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("variable `{0}` has zero density at the current point")]
    ZeroDensity(String),
    #[error("simplex `{0}` has dimension below 2")]
    SimplexTooSmall(String),
    #[error("no admissible kernel for latent variable `{0}`")]
    NoKernel(String),
}

/// Read-only view handed to a kernel: the annealed density at `t`, restricted
/// to the factors connected to the target.
pub struct Target<'a> {
    pub var: VarId,
    pub name: &'a str,
    pub factors: &'a [FactorId],
    pub density: &'a AnnealedDensity,
    pub t: f64,
}

impl Target<'_> {
    pub fn log_density(&self, state: &State) -> f64 {
        self.density.log_density_local(self.factors, state, self.t)
    }
}

pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;

    fn handles_constrained(&self) -> bool {
        false
    }

    /// One π_t-invariant update of `target.var`, in place.
    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError>;
}

#[derive(Clone)]
pub struct KernelInstance {
    pub target: VarId,
    pub connected: Vec<FactorId>,
    pub kernel: Arc<dyn Kernel>,
}

impl std::fmt::Debug for KernelInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({:?})", self.kernel.name(), self.target)
    }
}

impl KernelInstance {
    pub fn new(model: &Model, target: VarId, kernel: Arc<dyn Kernel>) -> Self {
        let connected = numeric_neighbors(model, target);
        KernelInstance { target, connected, kernel }
    }

    pub fn handles_constrained(&self) -> bool {
        self.kernel.handles_constrained()
    }

    pub fn execute(
        &self,
        density: &AnnealedDensity,
        t: f64,
        state: &mut State,
        rng: &mut dyn RandomSource,
    ) -> Result<(), SamplerError> {
        let target = Target {
            var: self.target,
            name: &density.model().variable(self.target).name,
            factors: &self.connected,
            density,
            t,
        };
        self.kernel.execute(&target, state, rng)
    }
}

fn numeric_neighbors(model: &Model, var: VarId) -> Vec<FactorId> {
    model
        .neighbors(var)
        .unwrap_or_default()
        .into_iter()
        .filter(|f| model.factor(*f).kind == FactorKind::Numeric)
        .collect()
}

/// Neal's doubling-then-shrinking slice update of a real coordinate.
///
/// `f` is the log density along the line; `w` the initial width.
pub fn slice_real(x0: f64, w: f64, mut f: impl FnMut(f64) -> f64, rng: &mut dyn RandomSource) -> Option<f64> {
    let f0 = f(x0);
    if f0 == f64::NEG_INFINITY || f0.is_nan() {
        return None;
    }
    let log_y = f0 + (1.0 - rng.uniform01()).ln();
    let mut cache: Vec<(f64, f64)> = Vec::with_capacity(40);
    let eval = |x: f64, cache: &mut Vec<(f64, f64)>, f: &mut dyn FnMut(f64) -> f64| {
        if let Some(&(_, v)) = cache.iter().find(|(p, _)| *p == x) {
            return v;
        }
        let v = f(x);
        cache.push((x, v));
        v
    };

    let mut l = x0 - w * rng.uniform01();
    let mut r = l + w;
    let mut fl = eval(l, &mut cache, &mut f);
    let mut fr = eval(r, &mut cache, &mut f);
    let mut k = MAX_DOUBLINGS;
    while k > 0 && (log_y < fl || log_y < fr) {
        if rng.bernoulli(0.5) {
            l -= r - l;
            fl = eval(l, &mut cache, &mut f);
        } else {
            r += r - l;
            fr = eval(r, &mut cache, &mut f);
        }
        k -= 1;
    }
    let (l0, r0) = (l, r);

    loop {
        let x1 = l + rng.uniform01() * (r - l);
        let f1 = eval(x1, &mut cache, &mut f);
        if log_y < f1 {
            // Would doubling from x1 have produced the same interval?
            let (mut lh, mut rh) = (l0, r0);
            let mut differ = false;
            let mut ok = true;
            while rh - lh > 1.1 * w {
                let m = (lh + rh) / 2.0;
                if (x0 < m) != (x1 < m) {
                    differ = true;
                }
                if x1 < m {
                    rh = m;
                } else {
                    lh = m;
                }
                if differ
                    && log_y >= eval(lh, &mut cache, &mut f)
                    && log_y >= eval(rh, &mut cache, &mut f)
                {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Some(x1);
            }
        }
        if x1 == x0 {
            return Some(x0);
        }
        if x1 < x0 {
            l = x1;
        } else {
            r = x1;
        }
    }
}

/// Integer-lattice analogue of [`slice_real`], driven only by discrete random choices.
pub fn slice_int(
    x0: i64,
    max_doublings: u32,
    mut f: impl FnMut(i64) -> f64,
    rng: &mut dyn RandomSource,
) -> Option<i64> {
    let f0 = f(x0);
    if f0 == f64::NEG_INFINITY || f0.is_nan() {
        return None;
    }
    let mut u = LazyUniform::new();
    let mut memo: Vec<(i64, bool)> = Vec::new();
    let mut in_slice = |z: i64, rng: &mut dyn RandomSource| -> bool {
        if z == x0 {
            return true;
        }
        if let Some(&(_, b)) = memo.iter().find(|(p, _)| *p == z) {
            return b;
        }
        let b = u.less_than((f(z) - f0).exp(), rng);
        memo.push((z, b));
        b
    };

    let (mut l, mut r) = (x0, x0);
    let mut k = max_doublings;
    while k > 0 && (in_slice(l - 1, rng) || in_slice(r + 1, rng)) {
        let size = r - l + 1;
        if rng.bernoulli(0.5) {
            l -= size;
        } else {
            r += size;
        }
        k -= 1;
    }
    let (l0, r0) = (l, r);

    loop {
        let x1 = l + rng.int_below((r - l + 1) as usize) as i64;
        if x1 == x0 {
            return Some(x0);
        }
        if in_slice(x1, rng) {
            let (mut lh, mut rh) = (l0, r0);
            let mut differ = false;
            let mut ok = true;
            while rh > lh {
                let m = lh + (rh - lh + 1) / 2;
                if (x0 < m) != (x1 < m) {
                    differ = true;
                }
                if x1 < m {
                    rh = m - 1;
                } else {
                    lh = m;
                }
                if differ && !in_slice(lh - 1, rng) && !in_slice(rh + 1, rng) {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Some(x1);
            }
        }
        if x1 < x0 {
            l = x1 + 1;
        } else {
            r = x1 - 1;
        }
    }
}

pub struct RealSliceSampler;

impl Kernel for RealSliceSampler {
    fn name(&self) -> &'static str {
        "RealSliceSampler"
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
        );
        state.set_real(v, out.unwrap_or(x0));
        out.map(|_| ()).ok_or_else(|| SamplerError::ZeroDensity(target.name.to_string()))
    }
}

/// Doubling is capped at `max_doublings`; any cap gives an exact kernel, small caps keep
/// exhaustive enumeration tractable.
#[derive(Clone, Copy, Debug)]
pub struct IntSliceSampler {
    pub max_doublings: u32,
}

impl Default for IntSliceSampler {
    fn default() -> Self {
        IntSliceSampler { max_doublings: MAX_DOUBLINGS }
    }
}

impl Kernel for IntSliceSampler {
    fn name(&self) -> &'static str {
        "IntSliceSampler"
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let x0 = state.int(v);
        let out = slice_int(
            x0,
            self.max_doublings,
            |z| {
                state.set_int(v, z);
                target.log_density(state)
            },
            rng,
        );
        state.set_int(v, out.unwrap_or(x0));
        out.map(|_| ()).ok_or_else(|| SamplerError::ZeroDensity(target.name.to_string()))
    }
}

/// Pairwise mass reallocation on a probability vector, slice-sampled.
fn simplex_pair_move(
    p: impl Fn(&State) -> Vec<f64>,
    write: impl Fn(&mut State, usize, f64, usize, f64),
    target: &Target,
    state: &mut State,
    rng: &mut dyn RandomSource,
) -> Result<(), SamplerError> {
    let current = p(state);
    let d = current.len();
    if d < 2 {
        return Err(SamplerError::SimplexTooSmall(target.name.to_string()));
    }
    let i = rng.int_below(d);
    let mut j = rng.int_below(d - 1);
    if j >= i {
        j += 1;
    }
    let s = current[i] + current[j];
    if s <= 0.0 {
        return Ok(());
    }
    let m = slice_real(
        current[i],
        s,
        |m| {
            if !(0.0..=s).contains(&m) {
                return f64::NEG_INFINITY;
            }
            write(state, i, m, j, s - m);
            target.log_density(state)
        },
        rng,
    );
    match m {
        Some(m) => {
            write(state, i, m, j, s - m);
            Ok(())
        }
        None => {
            write(state, i, current[i], j, current[j]);
            Err(SamplerError::ZeroDensity(target.name.to_string()))
        }
    }
}

pub struct SimplexSampler;

impl Kernel for SimplexSampler {
    fn name(&self) -> &'static str {
        "SimplexSampler"
    }

    fn handles_constrained(&self) -> bool {
        true
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        simplex_pair_move(
            |s| s.simplex(v).to_vec(),
            |s, i, a, j, b| {
                let p = s.simplex_mut(v);
                p[i] = a;
                p[j] = b;
            },
            target,
            state,
            rng,
        )
    }
}

/// Simplex move on one uniformly chosen row.
pub struct TransitionMatrixSampler;

impl Kernel for TransitionMatrixSampler {
    fn name(&self) -> &'static str {
        "TransitionMatrixSampler"
    }

    fn handles_constrained(&self) -> bool {
        true
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let row = rng.int_below(state.matrix(v).len());
        simplex_pair_move(
            |s| s.matrix(v)[row].clone(),
            |s, i, a, j, b| {
                let m = s.matrix_mut(v);
                m[row][i] = a;
                m[row][j] = b;
            },
            target,
            state,
            rng,
        )
    }
}

/// Metropolis swap of two uniformly chosen positions.
pub struct PermutationSampler;

impl Kernel for PermutationSampler {
    fn name(&self) -> &'static str {
        "PermutationSampler"
    }

    fn handles_constrained(&self) -> bool {
        true
    }

    fn execute(&self, target: &Target, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), SamplerError> {
        let v = target.var;
        let n = state.permutation(v).len();
        let i = rng.int_below(n);
        let j = rng.int_below(n);
        let before = target.log_density(state);
        state.permutation_mut(v).swap(i, j);
        let after = target.log_density(state);
        let ratio = (after - before).exp().min(1.0);
        if !rng.bernoulli(ratio) {
            state.permutation_mut(v).swap(i, j);
        }
        Ok(())
    }
}

fn prototype_name(kind: VarKind) -> &'static str {
    match kind {
        VarKind::Real => "RealScalar",
        VarKind::Int => "IntScalar",
        VarKind::Simplex(_) => "DenseSimplex",
        VarKind::TransitionMatrix(_) => "DenseTransitionMatrix",
        VarKind::Permutation(_) => "Permutation",
        VarKind::RealList(_) => "RealList",
        VarKind::IntList(_) => "IntList",
    }
}

fn default_kernels(kind: VarKind) -> Vec<Arc<dyn Kernel>> {
    match kind {
        VarKind::Real => vec![Arc::new(RealSliceSampler)],
        VarKind::Int => vec![Arc::new(IntSliceSampler::default())],
        VarKind::Simplex(_) => vec![Arc::new(SimplexSampler)],
        VarKind::TransitionMatrix(_) => vec![Arc::new(TransitionMatrixSampler)],
        VarKind::Permutation(_) => vec![Arc::new(PermutationSampler)],
        VarKind::RealList(_) | VarKind::IntList(_) => Vec::new(),
    }
}

/// Kernels bound to every latent variable, in declaration order.
#[derive(Clone, Debug)]
pub struct Matching {
    pub kernels: Vec<KernelInstance>,
    pub summary: String,
}

pub fn match_samplers(model: &Model) -> Result<Matching, SamplerError> {
    let mut kernels = Vec::new();
    let mut prototypes: Vec<(&'static str, Vec<&'static str>)> = Vec::new();
    for v in model.latent_leaves() {
        let decl = model.variable(v);
        let connected = numeric_neighbors(model, v);
        if connected.is_empty() {
            continue;
        }
        let admissible: Vec<Arc<dyn Kernel>> = default_kernels(decl.kind)
            .into_iter()
            .filter(|k| !decl.constrained || k.handles_constrained())
            .collect();
        if admissible.is_empty() {
            return Err(SamplerError::NoKernel(decl.name.clone()));
        }
        let proto = prototype_name(decl.kind);
        let names: Vec<&'static str> = admissible.iter().map(|k| k.name()).collect();
        if !prototypes.iter().any(|(p, _)| *p == proto) {
            prototypes.push((proto, names));
        }
        for kernel in admissible {
            kernels.push(KernelInstance { target: v, connected: connected.clone(), kernel });
        }
    }
    let mut summary = format!("{} samplers constructed with following prototypes:", kernels.len());
    for (p, names) in &prototypes {
        summary.push_str(&format!("\n  {p} sampled via: [{}]", names.join(", ")));
    }
    Ok(Matching { kernels, summary })
}

/// Copies `kernels`, rebinding integer slice samplers with a different doubling cap.
pub fn with_int_doublings(kernels: &[KernelInstance], max_doublings: u32) -> Vec<KernelInstance> {
    kernels
        .iter()
        .map(|k| {
            let kernel: Arc<dyn Kernel> = if k.kernel.name() == "IntSliceSampler" {
                Arc::new(IntSliceSampler { max_doublings })
            } else {
                k.kernel.clone()
            };
            KernelInstance { target: k.target, connected: k.connected.clone(), kernel }
        })
        .collect()
}

/// Applies every kernel in order, `passes` times; a fractional last pass applies
/// each kernel independently with probability equal to the fraction.
pub fn sweep(
    kernels: &[KernelInstance],
    density: &AnnealedDensity,
    t: f64,
    state: &mut State,
    rng: &mut dyn RandomSource,
    passes: f64,
) -> Result<(), SamplerError> {
    let whole = passes.floor() as u64;
    let frac = passes - whole as f64;
    for _ in 0..whole {
        for k in kernels {
            k.execute(density, t, state, rng)?;
        }
    }
    if frac > 0.0 {
        for k in kernels {
            if rng.bernoulli(frac) {
                k.execute(density, t, state, rng)?;
            }
        }
    }
    Ok(())
}
