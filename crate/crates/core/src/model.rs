//! Factor-graph models with explicit scopes.
//!
//! A [`Model`] is an immutable list of variables and factors. Each factor
//! declares the variables it may read (its scope) and the variables it
//! generates or is a law for (its out-going set). Lists are declared as a
//! container whose entries are individual scalar variables, so observedness
//! and sparsity work per entry.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::math::extended_sum;
use crate::rng::RandomSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorId(pub(crate) usize);

impl FactorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Real,
    Int,
    Simplex(usize),
    TransitionMatrix(usize),
    Permutation(usize),
    RealList(usize),
    IntList(usize),
}

impl VarKind {
    pub fn is_list(self) -> bool {
        matches!(self, VarKind::RealList(_) | VarKind::IntList(_))
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, VarKind::Int | VarKind::IntList(_) | VarKind::Permutation(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Latent,
    Observed,
}

/// Initial values supplied when declaring a variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Simplex(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Permutation(Vec<usize>),
    RealList(Vec<f64>),
    IntList(Vec<i64>),
}

#[derive(Clone, Debug)]
pub struct VariableDecl {
    pub id: VarId,
    pub name: String,
    pub kind: VarKind,
    pub status: Status,
    pub constrained: bool,
    /// Container and position, for list entries.
    pub parent: Option<(VarId, usize)>,
    /// Entry variables, for lists.
    pub elements: Vec<VarId>,
}

#[derive(Clone, Debug, PartialEq)]
enum Slot {
    Real(f64),
    Int(i64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Perm(Vec<usize>),
    Container,
}

/// Borrowed view of one variable's storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueRef<'a> {
    Real(f64),
    Int(i64),
    Simplex(&'a [f64]),
    Matrix(&'a [Vec<f64>]),
    Permutation(&'a [usize]),
    Container,
}

/// Assignment of values to every variable of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    slots: Vec<Slot>,
}

impl State {
    pub fn real(&self, v: VarId) -> f64 {
        match &self.slots[v.0] {
            Slot::Real(x) => *x,
            Slot::Int(x) => *x as f64,
            s => panic!("variable {} is not a scalar: {s:?}", v.0),
        }
    }

    pub fn int(&self, v: VarId) -> i64 {
        match &self.slots[v.0] {
            Slot::Int(x) => *x,
            s => panic!("variable {} is not an integer: {s:?}", v.0),
        }
    }

    pub fn simplex(&self, v: VarId) -> &[f64] {
        match &self.slots[v.0] {
            Slot::Vector(x) => x,
            s => panic!("variable {} is not a simplex: {s:?}", v.0),
        }
    }

    pub fn matrix(&self, v: VarId) -> &[Vec<f64>] {
        match &self.slots[v.0] {
            Slot::Matrix(x) => x,
            s => panic!("variable {} is not a matrix: {s:?}", v.0),
        }
    }

    pub fn permutation(&self, v: VarId) -> &[usize] {
        match &self.slots[v.0] {
            Slot::Perm(x) => x,
            s => panic!("variable {} is not a permutation: {s:?}", v.0),
        }
    }

    pub fn get(&self, v: VarId) -> ValueRef<'_> {
        match &self.slots[v.0] {
            Slot::Real(x) => ValueRef::Real(*x),
            Slot::Int(x) => ValueRef::Int(*x),
            Slot::Vector(x) => ValueRef::Simplex(x),
            Slot::Matrix(x) => ValueRef::Matrix(x),
            Slot::Perm(x) => ValueRef::Permutation(x),
            Slot::Container => ValueRef::Container,
        }
    }

    pub fn set_real(&mut self, v: VarId, x: f64) {
        match &mut self.slots[v.0] {
            Slot::Real(s) => *s = x,
            s => panic!("variable {} is not real: {s:?}", v.0),
        }
    }

    pub fn set_int(&mut self, v: VarId, x: i64) {
        match &mut self.slots[v.0] {
            Slot::Int(s) => *s = x,
            s => panic!("variable {} is not an integer: {s:?}", v.0),
        }
    }

    pub fn simplex_mut(&mut self, v: VarId) -> &mut Vec<f64> {
        match &mut self.slots[v.0] {
            Slot::Vector(x) => x,
            s => panic!("variable {} is not a simplex: {s:?}", v.0),
        }
    }

    pub fn matrix_mut(&mut self, v: VarId) -> &mut Vec<Vec<f64>> {
        match &mut self.slots[v.0] {
            Slot::Matrix(x) => x,
            s => panic!("variable {} is not a matrix: {s:?}", v.0),
        }
    }

    pub fn permutation_mut(&mut self, v: VarId) -> &mut Vec<usize> {
        match &mut self.slots[v.0] {
            Slot::Perm(x) => x,
            s => panic!("variable {} is not a permutation: {s:?}", v.0),
        }
    }

    /// Bit-exact identity key over all storage; equal keys iff equal states.
    pub fn key(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.slots.len() * 2);
        for s in &self.slots {
            match s {
                Slot::Real(x) => out.extend([0, x.to_bits()]),
                Slot::Int(x) => out.extend([1, *x as u64]),
                Slot::Vector(v) => {
                    out.extend([2, v.len() as u64]);
                    out.extend(v.iter().map(|x| x.to_bits()));
                }
                Slot::Matrix(m) => {
                    out.extend([3, m.len() as u64]);
                    for row in m {
                        out.extend(row.iter().map(|x| x.to_bits()));
                    }
                }
                Slot::Perm(p) => {
                    out.extend([4, p.len() as u64]);
                    out.extend(p.iter().map(|x| *x as u64));
                }
                Slot::Container => out.push(5),
            }
        }
        out
    }

    fn poison(&mut self, v: VarId) {
        match &mut self.slots[v.0] {
            Slot::Real(x) => *x = f64::NAN,
            Slot::Int(x) => *x = i64::MIN,
            Slot::Vector(x) => x.iter_mut().for_each(|e| *e = f64::NAN),
            Slot::Matrix(m) => m.iter_mut().flatten().for_each(|e| *e = f64::NAN),
            Slot::Perm(p) => p.iter_mut().for_each(|e| *e = usize::MAX),
            Slot::Container => {}
        }
    }
}

pub type LogDensityFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
pub type GeneratorFn =
    Arc<dyn Fn(&mut State, &mut dyn RandomSource) -> Result<(), String> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorKind {
    Numeric,
    Constrained,
}

#[derive(Clone)]
pub struct Factor {
    pub id: FactorId,
    pub label: String,
    pub scope: Vec<VarId>,
    /// Variables this factor is a law for; used for likelihood/prior classification.
    pub outgoing: Vec<VarId>,
    pub kind: FactorKind,
    pub log_density: Option<LogDensityFn>,
    pub generator: Option<GeneratorFn>,
    pub output_vars: Vec<VarId>,
}

impl Factor {
    pub fn evaluate(&self, state: &State) -> f64 {
        match &self.log_density {
            Some(f) => {
                let v = f(state);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            }
            None => 0.0,
        }
    }
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factor")
            .field("id", &self.id)
            .field("label", &self.label)
            .field("scope", &self.scope)
            .field("outgoing", &self.outgoing)
            .field("kind", &self.kind)
            .field("generator", &self.generator.is_some())
            .finish()
    }
}

/// Description of a numeric factor passed to [`ModelBuilder::add_factor`].
pub struct FactorSpec {
    label: String,
    scope: Vec<VarId>,
    outgoing: Option<Vec<VarId>>,
    log_density: LogDensityFn,
    generator: Option<GeneratorFn>,
    outputs: Vec<VarId>,
}

impl FactorSpec {
    pub fn new(
        label: impl Into<String>,
        scope: impl IntoIterator<Item = VarId>,
        log_density: impl Fn(&State) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FactorSpec {
            label: label.into(),
            scope: scope.into_iter().collect(),
            outgoing: None,
            log_density: Arc::new(log_density),
            generator: None,
            outputs: Vec::new(),
        }
    }

    /// Out-going set; defaults to the generator outputs.
    pub fn outgoing(mut self, vars: impl IntoIterator<Item = VarId>) -> Self {
        self.outgoing = Some(vars.into_iter().collect());
        self
    }

    pub fn outputs(mut self, vars: impl IntoIterator<Item = VarId>) -> Self {
        self.outputs = vars.into_iter().collect();
        self
    }

    pub fn generator(
        mut self,
        g: impl Fn(&mut State, &mut dyn RandomSource) -> Result<(), String> + Send + Sync + 'static,
    ) -> Self {
        self.generator = Some(Arc::new(g));
        self
    }

    pub fn generator_arc(mut self, g: GeneratorFn) -> Self {
        self.generator = Some(g);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("value does not match kind of `{name}`: {reason}")]
    KindMismatch { name: String, reason: String },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("factor `{0}` declares output variables but no generator")]
    OutputsWithoutGenerator(String),
    #[error("factor `{factor}`: output `{var}` is not in its scope")]
    OutputNotInScope { factor: String, var: String },
    #[error("variable `{0}` is generated by more than one factor")]
    MultipleGenerators(String),
    #[error("generators form a cycle, model is not forward-simulable: {0:?}")]
    Cycle(Vec<String>),
    #[error("generator of `{factor}` failed: {message}")]
    Generator { factor: String, message: String },
    #[error("model is not in generative normal form: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    NotGenerative(Vec<Violation>),
}

/// A factor that is a law for latent variables none of which has a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub factor: FactorId,
    pub label: String,
    pub variables: Vec<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "factor `{}` has latent outputs without a generator: {}",
            self.label,
            self.variables.join(", ")
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Likelihood,
    Prior,
    /// Marker factors carry no density.
    Constraint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub roles: Vec<Role>,
}

impl Classification {
    pub fn likelihood(&self) -> Vec<FactorId> {
        self.with(Role::Likelihood)
    }

    pub fn prior(&self) -> Vec<FactorId> {
        self.with(Role::Prior)
    }

    fn with(&self, r: Role) -> Vec<FactorId> {
        (0..self.roles.len())
            .filter(|i| self.roles[*i] == r)
            .map(FactorId)
            .collect()
    }
}

#[derive(Default)]
pub struct ModelBuilder {
    vars: Vec<VariableDecl>,
    slots: Vec<Slot>,
    names: HashMap<String, VarId>,
    factors: Vec<Factor>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable. Lists create one entry variable per position, named `name[i]`.
    pub fn add_variable(
        &mut self,
        name: &str,
        kind: VarKind,
        status: Status,
        init: Option<Value>,
    ) -> Result<VarId, ModelError> {
        if self.names.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let mismatch = |reason: &str| ModelError::KindMismatch {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let slot = match (kind, init.clone()) {
            (VarKind::Real, None) => Slot::Real(0.0),
            (VarKind::Real, Some(Value::Real(x))) => Slot::Real(x),
            (VarKind::Int, None) => Slot::Int(0),
            (VarKind::Int, Some(Value::Int(x))) => Slot::Int(x),
            (VarKind::Simplex(d), v) => {
                if d < 1 {
                    return Err(mismatch("simplex dimension must be at least 1"));
                }
                let p = match v {
                    None => vec![1.0 / d as f64; d],
                    Some(Value::Simplex(p)) => p,
                    _ => return Err(mismatch("expected a simplex value")),
                };
                check_simplex(&p, d).map_err(|r| mismatch(&r))?;
                Slot::Vector(p)
            }
            (VarKind::TransitionMatrix(d), v) => {
                if d < 1 {
                    return Err(mismatch("matrix dimension must be at least 1"));
                }
                let m = match v {
                    None => vec![vec![1.0 / d as f64; d]; d],
                    Some(Value::Matrix(m)) => m,
                    _ => return Err(mismatch("expected a matrix value")),
                };
                if m.len() != d {
                    return Err(mismatch("wrong number of rows"));
                }
                for row in &m {
                    check_simplex(row, d).map_err(|r| mismatch(&r))?;
                }
                Slot::Matrix(m)
            }
            (VarKind::Permutation(n), v) => {
                if n < 1 {
                    return Err(mismatch("permutation size must be at least 1"));
                }
                let p = match v {
                    None => (0..n).collect(),
                    Some(Value::Permutation(p)) => p,
                    _ => return Err(mismatch("expected a permutation")),
                };
                let mut seen = vec![false; n];
                if p.len() != n || p.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                    return Err(mismatch("not a bijection"));
                }
                Slot::Perm(p)
            }
            (VarKind::RealList(n), v) => {
                let vals = match v {
                    None => vec![0.0; n],
                    Some(Value::RealList(x)) if x.len() == n => x,
                    _ => return Err(mismatch("expected a real list of matching length")),
                };
                return Ok(self.add_list(name, kind, status, vals.into_iter().map(Slot::Real).collect()));
            }
            (VarKind::IntList(n), v) => {
                let vals = match v {
                    None => vec![0; n],
                    Some(Value::IntList(x)) if x.len() == n => x,
                    _ => return Err(mismatch("expected an integer list of matching length")),
                };
                return Ok(self.add_list(name, kind, status, vals.into_iter().map(Slot::Int).collect()));
            }
            _ => return Err(mismatch("value kind differs from declared kind")),
        };
        Ok(self.push(name.to_string(), kind, status, None, slot))
    }

    fn push(&mut self, name: String, kind: VarKind, status: Status, parent: Option<(VarId, usize)>, slot: Slot) -> VarId {
        let id = VarId(self.vars.len());
        self.names.insert(name.clone(), id);
        self.vars.push(VariableDecl {
            id,
            name,
            kind,
            status,
            constrained: false,
            parent,
            elements: Vec::new(),
        });
        self.slots.push(slot);
        id
    }

    fn add_list(&mut self, name: &str, kind: VarKind, status: Status, entries: Vec<Slot>) -> VarId {
        let list = self.push(name.to_string(), kind, status, None, Slot::Container);
        let entry_kind = if matches!(kind, VarKind::RealList(_)) { VarKind::Real } else { VarKind::Int };
        let mut elements = Vec::with_capacity(entries.len());
        for (i, s) in entries.into_iter().enumerate() {
            elements.push(self.push(format!("{name}[{i}]"), entry_kind, status, Some((list, i)), s));
        }
        self.vars[list.0].elements = elements;
        list
    }

    /// Entry `i` of a list variable.
    pub fn element(&self, list: VarId, i: usize) -> VarId {
        self.vars[list.0].elements[i]
    }

    pub fn variable(&self, id: VarId) -> &VariableDecl {
        &self.vars[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    /// Changes observedness of a variable (all entries, for lists).
    pub fn set_status(&mut self, id: VarId, status: Status) -> Result<(), ModelError> {
        self.check(id)?;
        self.vars[id.0].status = status;
        for e in self.vars[id.0].elements.clone() {
            self.vars[e.0].status = status;
        }
        Ok(())
    }

    pub fn set_constrained(&mut self, id: VarId) -> Result<(), ModelError> {
        self.check(id)?;
        self.vars[id.0].constrained = true;
        for e in self.vars[id.0].elements.clone() {
            self.vars[e.0].constrained = true;
        }
        Ok(())
    }

    fn check(&self, id: VarId) -> Result<(), ModelError> {
        if id.0 < self.vars.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownVariable(format!("#{}", id.0)))
        }
    }

    fn expand(&self, ids: &[VarId]) -> Result<Vec<VarId>, ModelError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for &id in ids {
            self.check(id)?;
            let decl = &self.vars[id.0];
            if decl.kind.is_list() {
                for &e in &decl.elements {
                    if seen.insert(e) {
                        out.push(e);
                    }
                }
            } else if seen.insert(id) {
                out.push(id);
            }
        }
        Ok(out)
    }

    pub fn add_factor(&mut self, spec: FactorSpec) -> Result<FactorId, ModelError> {
        let scope = self.expand(&spec.scope)?;
        let outputs = self.expand(&spec.outputs)?;
        if !outputs.is_empty() && spec.generator.is_none() {
            return Err(ModelError::OutputsWithoutGenerator(spec.label));
        }
        for o in &outputs {
            if !scope.contains(o) {
                return Err(ModelError::OutputNotInScope {
                    factor: spec.label,
                    var: self.vars[o.0].name.clone(),
                });
            }
        }
        let outgoing = match &spec.outgoing {
            Some(v) => self.expand(v)?,
            None => outputs.clone(),
        };
        let id = FactorId(self.factors.len());
        self.factors.push(Factor {
            id,
            label: spec.label,
            scope,
            outgoing,
            kind: FactorKind::Numeric,
            log_density: Some(spec.log_density),
            generator: spec.generator,
            output_vars: outputs,
        });
        Ok(id)
    }

    /// Marks `var` as having a non-default reference measure.
    pub fn add_constrained(&mut self, var: VarId) -> Result<FactorId, ModelError> {
        let scope = self.expand(&[var])?;
        let id = FactorId(self.factors.len());
        self.factors.push(Factor {
            id,
            label: format!("{} is Constrained", self.vars[var.0].name),
            scope,
            outgoing: Vec::new(),
            kind: FactorKind::Constrained,
            log_density: None,
            generator: None,
            output_vars: Vec::new(),
        });
        Ok(id)
    }

    pub fn build(self) -> Model {
        let ModelBuilder { mut vars, slots, names, factors } = self;
        for f in &factors {
            if f.kind == FactorKind::Constrained {
                for v in &f.scope {
                    vars[v.0].constrained = true;
                }
            }
        }
        let mut adjacency = vec![Vec::new(); vars.len()];
        for f in &factors {
            for v in &f.scope {
                adjacency[v.0].push(f.id);
            }
        }
        let mut model = Model {
            vars,
            factors,
            names,
            roles: Vec::new(),
            adjacency,
            initial: State { slots },
            generate_order: Err(ModelError::Cycle(Vec::new())),
        };
        model.roles = classify_factors(&model).roles;
        model.generate_order = model.compute_generate_order();
        model
    }
}

fn check_simplex(p: &[f64], d: usize) -> Result<(), String> {
    if p.len() != d {
        return Err(format!("expected {d} entries, got {}", p.len()));
    }
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err("negative entry".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(format!("not a simplex: entries sum to {s}"));
    }
    Ok(())
}

/// Immutable factor graph.
pub struct Model {
    vars: Vec<VariableDecl>,
    factors: Vec<Factor>,
    names: HashMap<String, VarId>,
    roles: Vec<Role>,
    adjacency: Vec<Vec<FactorId>>,
    initial: State,
    generate_order: Result<Vec<FactorId>, ModelError>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("variables", &self.vars.len())
            .field("factors", &self.factors.len())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SimulateMode {
    Latent,
    Observed,
    All,
}

impl Model {
    pub fn variables(&self) -> &[VariableDecl] {
        &self.vars
    }

    pub fn variable(&self, id: VarId) -> &VariableDecl {
        &self.vars[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, id: FactorId) -> &Factor {
        &self.factors[id.0]
    }

    pub fn role(&self, id: FactorId) -> Role {
        self.roles[id.0]
    }

    pub fn classification(&self) -> Classification {
        Classification { roles: self.roles.clone() }
    }

    pub fn is_observed(&self, id: VarId) -> bool {
        self.vars[id.0].status == Status::Observed
    }

    pub fn is_constrained(&self, id: VarId) -> bool {
        self.vars[id.0].constrained
    }

    /// Entry `i` of a list variable.
    pub fn element(&self, list: VarId, i: usize) -> VarId {
        self.vars[list.0].elements[i]
    }

    /// Variables that are not list entries, in declaration order.
    pub fn top_level(&self) -> impl Iterator<Item = &VariableDecl> {
        self.vars.iter().filter(|v| v.parent.is_none())
    }

    /// Latent storage-bearing variables (scalars, list entries, simplices, ...) in declaration order.
    pub fn latent_leaves(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .filter(|v| !v.kind.is_list() && v.status == Status::Latent)
            .map(|v| v.id)
            .collect()
    }

    pub fn initial_state(&self) -> State {
        self.initial.clone()
    }

    /// Factors whose scope contains `var` (any entry, for lists).
    pub fn neighbors(&self, var: VarId) -> Result<Vec<FactorId>, ModelError> {
        if var.0 >= self.vars.len() {
            return Err(ModelError::UnknownVariable(format!("#{}", var.0)));
        }
        let decl = &self.vars[var.0];
        if decl.kind.is_list() {
            let mut out: Vec<FactorId> = decl
                .elements
                .iter()
                .flat_map(|e| self.adjacency[e.0].iter().copied())
                .collect();
            out.sort();
            out.dedup();
            Ok(out)
        } else {
            Ok(self.adjacency[var.0].clone())
        }
    }

    pub fn neighbors_by_name(&self, name: &str) -> Result<Vec<FactorId>, ModelError> {
        let id = self.lookup(name).ok_or_else(|| ModelError::UnknownVariable(name.to_string()))?;
        self.neighbors(id)
    }

    /// Sum of every numeric factor.
    pub fn log_joint(&self, state: &State) -> f64 {
        extended_sum(
            self.factors
                .iter()
                .filter(|f| f.kind == FactorKind::Numeric)
                .map(|f| f.evaluate(state)),
        )
    }

    /// Sum over a subset of factors.
    pub fn log_density_of(&self, factors: &[FactorId], state: &State) -> f64 {
        extended_sum(factors.iter().map(|f| self.factors[f.0].evaluate(state)))
    }

    pub fn check_generative_normal_form(&self) -> Result<(), Vec<Violation>> {
        let generated: HashSet<VarId> = self
            .factors
            .iter()
            .filter(|f| f.generator.is_some())
            .flat_map(|f| f.output_vars.iter().copied())
            .collect();
        let violations: Vec<Violation> = self
            .factors
            .iter()
            .filter(|f| f.kind == FactorKind::Numeric)
            .filter_map(|f| {
                let missing: Vec<String> = f
                    .outgoing
                    .iter()
                    .filter(|v| !self.is_observed(**v) && !generated.contains(v))
                    .map(|v| self.vars[v.0].name.clone())
                    .collect();
                (!missing.is_empty()).then(|| Violation {
                    factor: f.id,
                    label: f.label.clone(),
                    variables: missing,
                })
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn topological_generate_order(&self) -> Result<Vec<FactorId>, ModelError> {
        self.generate_order.clone()
    }

    fn compute_generate_order(&self) -> Result<Vec<FactorId>, ModelError> {
        let gens: Vec<&Factor> = self.factors.iter().filter(|f| f.generator.is_some()).collect();
        let mut producer: HashMap<VarId, usize> = HashMap::new();
        for (k, g) in gens.iter().enumerate() {
            for o in &g.output_vars {
                if producer.insert(*o, k).is_some() {
                    return Err(ModelError::MultipleGenerators(self.vars[o.0].name.clone()));
                }
            }
        }
        let mut indegree = vec![0usize; gens.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); gens.len()];
        for (k, g) in gens.iter().enumerate() {
            let mut parents: Vec<usize> = g
                .scope
                .iter()
                .filter(|v| !g.output_vars.contains(v))
                .filter_map(|v| producer.get(v).copied())
                .collect();
            parents.sort();
            parents.dedup();
            for p in parents {
                if p == k {
                    continue;
                }
                children[p].push(k);
                indegree[k] += 1;
            }
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..gens.len()).filter(|k| indegree[*k] == 0).collect();
        let mut order = Vec::with_capacity(gens.len());
        while let Some(k) = ready.pop_first() {
            order.push(gens[k].id);
            for &c in &children[k] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < gens.len() {
            let stuck = (0..gens.len())
                .filter(|k| indegree[*k] > 0)
                .map(|k| gens[k].label.clone())
                .collect();
            return Err(ModelError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Replaces latent variables with a prior draw. Observed variables are untouched.
    pub fn forward_simulate(&self, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), ModelError> {
        self.simulate(state, rng, SimulateMode::Latent, false)
    }

    /// Like [`forward_simulate`](Self::forward_simulate) but poisons outputs first,
    /// so generators reading their own outputs produce visibly invalid values.
    pub fn forward_simulate_checked(&self, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), ModelError> {
        self.simulate(state, rng, SimulateMode::Latent, true)
    }

    /// Regenerates observed variables given the current latent values.
    pub fn simulate_observations(&self, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), ModelError> {
        self.simulate(state, rng, SimulateMode::Observed, false)
    }

    /// Draws latent and observed variables jointly.
    pub fn simulate_joint(&self, state: &mut State, rng: &mut dyn RandomSource) -> Result<(), ModelError> {
        self.simulate(state, rng, SimulateMode::All, false)
    }

    fn simulate(
        &self,
        state: &mut State,
        rng: &mut dyn RandomSource,
        mode: SimulateMode,
        poison: bool,
    ) -> Result<(), ModelError> {
        let order = self.generate_order.as_ref().map_err(|e| e.clone())?;
        for fid in order {
            let f = &self.factors[fid.0];
            let (keep, run): (Vec<VarId>, bool) = match mode {
                SimulateMode::All => (Vec::new(), true),
                SimulateMode::Latent => {
                    let keep: Vec<VarId> = f.output_vars.iter().copied().filter(|v| self.is_observed(*v)).collect();
                    let run = keep.len() < f.output_vars.len();
                    (keep, run)
                }
                SimulateMode::Observed => {
                    let keep: Vec<VarId> = f.output_vars.iter().copied().filter(|v| !self.is_observed(*v)).collect();
                    let run = keep.len() < f.output_vars.len();
                    (keep, run)
                }
            };
            if !run {
                continue;
            }
            let saved: Vec<(VarId, Slot)> = keep.iter().map(|v| (*v, state.slots[v.0].clone())).collect();
            if poison {
                for v in &f.output_vars {
                    state.poison(*v);
                }
            }
            let g = f.generator.as_ref().expect("ordered factor has a generator");
            g(state, rng).map_err(|message| ModelError::Generator {
                factor: f.label.clone(),
                message,
            })?;
            for (v, s) in saved {
                state.slots[v.0] = s;
            }
        }
        Ok(())
    }
}

/// Likelihood iff every out-going variable is observed (vacuously for factors with none).
pub fn classify_factors(model: &Model) -> Classification {
    let roles = model
        .factors
        .iter()
        .map(|f| match f.kind {
            FactorKind::Constrained => Role::Constraint,
            FactorKind::Numeric => {
                if f.outgoing.iter().all(|v| model.is_observed(*v)) {
                    Role::Likelihood
                } else {
                    Role::Prior
                }
            }
        })
        .collect();
    Classification { roles }
}
