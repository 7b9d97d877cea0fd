use std::collections::HashMap;
use std::sync::Arc;

use super::ast::*;
use super::{DslError, Pos};
use crate::dists::{self, Arg, Family, ParamKind, Realization, Support};
use crate::math::logistic;
use crate::model::{FactorSpec, Model, ModelBuilder, State, Status, Value, VarId, VarKind};
use crate::models::add_law;

/// Value supplied for a declared variable, from the command line or a data file.
#[derive(Clone, Debug, PartialEq)]
pub enum Binding {
    /// Latent.
    Na,
    Scalar(f64),
    /// Entries; `None` marks a latent entry.
    List(Vec<Option<f64>>),
}

impl Binding {
    /// `NA`, a number, or a comma separated list of numbers and `NA`s.
    pub fn parse(text: &str) -> Result<Binding, String> {
        let t = text.trim();
        if t == "NA" {
            return Ok(Binding::Na);
        }
        let entry = |s: &str| -> Result<Option<f64>, String> {
            let s = s.trim();
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("cannot parse `{s}` as a number"))
            }
        };
        if t.contains(',') {
            let inner = t.trim_start_matches('[').trim_end_matches(']');
            return inner.split(',').map(entry).collect::<Result<_, _>>().map(Binding::List);
        }
        match entry(t)? {
            Some(x) => Ok(Binding::Scalar(x)),
            None => Ok(Binding::Na),
        }
    }

    fn entries(&self) -> Vec<Option<f64>> {
        match self {
            Binding::Na => Vec::new(),
            Binding::Scalar(x) => vec![Some(*x)],
            Binding::List(v) => v.clone(),
        }
    }
}

pub type Bindings = HashMap<String, Binding>;

/// Value of an identifier for [`eval_expr`].
#[derive(Clone, Debug, PartialEq)]
pub enum EnvValue {
    Num(f64),
    Vector(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Pow,
    Exp,
    Log,
    Sqrt,
    Logistic,
    Min,
    Max,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "pow" => (Func::Pow, 2),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "logistic" => (Func::Logistic, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

/// Expression with identifiers resolved to constants or model variables.
#[derive(Clone, Debug)]
enum CExpr {
    Num(f64),
    Vec(Arc<[f64]>),
    Var(VarId),
    List(Arc<[VarId]>),
    Simplex(VarId, usize),
    Perm(VarId, usize),
    Get(Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(Func, Vec<CExpr>),
}

#[derive(Debug)]
enum EvalError {
    DivisionByZero,
    Index(f64, usize),
}

impl CExpr {
    fn len(&self) -> Option<usize> {
        match self {
            CExpr::Vec(v) => Some(v.len()),
            CExpr::List(v) => Some(v.len()),
            CExpr::Simplex(_, n) | CExpr::Perm(_, n) => Some(*n),
            _ => None,
        }
    }

    fn is_vector(&self) -> bool {
        self.len().is_some()
    }

    fn reads_state(&self) -> bool {
        match self {
            CExpr::Num(_) | CExpr::Vec(_) => false,
            CExpr::Var(_) | CExpr::List(_) | CExpr::Simplex(..) | CExpr::Perm(..) => true,
            CExpr::Get(a, b) | CExpr::Bin(_, a, b) => a.reads_state() || b.reads_state(),
            CExpr::Neg(a) => a.reads_state(),
            CExpr::Call(_, args) => args.iter().any(CExpr::reads_state),
        }
    }

    /// Scalar value. In lax mode invalid operations give NaN, which factors read as −∞.
    fn num(&self, s: Option<&State>, strict: bool) -> Result<f64, EvalError> {
        let state = || s.expect("expression reads model variables");
        Ok(match self {
            CExpr::Num(x) => *x,
            CExpr::Var(v) => state().real(*v),
            CExpr::Get(base, idx) => {
                let i = idx.num(s, strict)?;
                let n = base.len().unwrap_or(0);
                if !(i >= 0.0 && i.fract() == 0.0 && (i as usize) < n) {
                    if strict {
                        return Err(EvalError::Index(i, n));
                    }
                    return Ok(f64::NAN);
                }
                let i = i as usize;
                match &**base {
                    CExpr::Vec(v) => v[i],
                    CExpr::List(ids) => state().real(ids[i]),
                    CExpr::Simplex(v, _) => state().simplex(*v)[i],
                    CExpr::Perm(v, _) => state().permutation(*v)[i] as f64,
                    _ => unreachable!("checked at compile time"),
                }
            }
            CExpr::Neg(a) => -a.num(s, strict)?,
            CExpr::Bin(op, a, b) => {
                let (x, y) = (a.num(s, strict)?, b.num(s, strict)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div if y == 0.0 => {
                        if strict {
                            return Err(EvalError::DivisionByZero);
                        }
                        f64::NAN
                    }
                    BinOp::Div => x / y,
                }
            }
            CExpr::Call(f, args) => {
                let a = args[0].num(s, strict)?;
                let b = || args[1].num(s, strict);
                match f {
                    Func::Pow => a.powf(b()?),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Logistic => logistic(a),
                    Func::Min => a.min(b()?),
                    Func::Max => a.max(b()?),
                }
            }
            CExpr::Vec(_) | CExpr::List(_) | CExpr::Simplex(..) | CExpr::Perm(..) => {
                unreachable!("checked at compile time")
            }
        })
    }

    fn vector(&self, s: Option<&State>) -> Vec<f64> {
        match self {
            CExpr::Vec(v) => v.to_vec(),
            CExpr::List(ids) => {
                let s = s.expect("expression reads model variables");
                ids.iter().map(|v| s.real(*v)).collect()
            }
            CExpr::Simplex(v, _) => s.expect("expression reads model variables").simplex(*v).to_vec(),
            CExpr::Perm(v, _) => {
                s.expect("expression reads model variables").permutation(*v).iter().map(|&k| k as f64).collect()
            }
            _ => unreachable!("checked at compile time"),
        }
    }

    fn arg(&self, s: &State) -> Arg {
        if self.is_vector() {
            Arg::Vector(self.vector(Some(s)))
        } else {
            Arg::Real(self.num(Some(s), false).unwrap_or(f64::NAN))
        }
    }
}

fn compile(e: &Expr, resolve: &dyn Fn(&str, Pos) -> Result<CExpr, DslError>) -> Result<CExpr, DslError> {
    let scalar = |c: CExpr, what: &str| {
        if c.is_vector() {
            Err(DslError::new(format!("{what} expects a number, found a vector"), None))
        } else {
            Ok(c)
        }
    };
    Ok(match e {
        Expr::Int(k) => CExpr::Num(*k as f64),
        Expr::Real(x) => CExpr::Num(*x),
        Expr::Ident(n, p) => resolve(n, *p)?,
        Expr::Size(inner) => {
            let c = compile(inner, resolve)?;
            let n = c.len().ok_or_else(|| DslError::new(format!("`.size` of non-list `{inner}`"), None))?;
            CExpr::Num(n as f64)
        }
        Expr::Get(base, idx) => {
            let b = compile(base, resolve)?;
            if !b.is_vector() {
                return Err(DslError::new(format!("`.get` on non-list `{base}`"), None));
            }
            let i = scalar(compile(idx, resolve)?, "an index")?;
            CExpr::Get(Box::new(b), Box::new(i))
        }
        Expr::Neg(a) => CExpr::Neg(Box::new(scalar(compile(a, resolve)?, "negation")?)),
        Expr::Binary(op, a, b) => CExpr::Bin(
            *op,
            Box::new(scalar(compile(a, resolve)?, "arithmetic")?),
            Box::new(scalar(compile(b, resolve)?, "arithmetic")?),
        ),
        Expr::Call(name, args, pos) => {
            let (f, arity) =
                Func::parse(name).ok_or_else(|| DslError::at(*pos, format!("unknown function `{name}`")))?;
            if args.len() != arity {
                return Err(DslError::at(*pos, format!("`{name}` expects {arity} argument(s), got {}", args.len())));
            }
            let args = args
                .iter()
                .map(|a| compile(a, resolve).and_then(|c| scalar(c, name)))
                .collect::<Result<Vec<_>, _>>()?;
            CExpr::Call(f, args)
        }
        Expr::New(ty, _) => return Err(DslError::new(format!("`new {ty}(...)` is only allowed as a default value"), None)),
    })
}

/// Evaluates an expression eagerly against constant bindings.
pub fn eval_expr(expr: &Expr, env: &HashMap<String, EnvValue>) -> Result<f64, DslError> {
    let resolve = |n: &str, p: Pos| match env.get(n) {
        Some(EnvValue::Num(x)) => Ok(CExpr::Num(*x)),
        Some(EnvValue::Vector(v)) => Ok(CExpr::Vec(v.clone().into())),
        None => Err(DslError::at(p, format!("unbound identifier `{n}`"))),
    };
    let c = compile(expr, &resolve)?;
    if c.is_vector() {
        return Err(DslError::new(format!("`{expr}` is a vector, expected a number"), None));
    }
    strict_num(&c, expr)
}

fn strict_num(c: &CExpr, expr: &Expr) -> Result<f64, DslError> {
    c.num(None, true).map_err(|e| match e {
        EvalError::DivisionByZero => DslError::new(format!("division by zero in `{expr}`"), None),
        EvalError::Index(i, n) => DslError::new(format!("index {i} out of range for size {n} in `{expr}`"), None),
    })
}

/// What a name refers to during lowering.
#[derive(Clone, Debug)]
enum Entity {
    Const(f64),
    ConstVec(Arc<[f64]>),
    Var(VarId),
    List(VarId, Arc<[VarId]>),
    Simplex(VarId, usize),
    Perm(VarId, usize),
}

impl Entity {
    fn leaf(&self) -> CExpr {
        match self {
            Entity::Const(x) => CExpr::Num(*x),
            Entity::ConstVec(v) => CExpr::Vec(v.clone()),
            Entity::Var(v) => CExpr::Var(*v),
            Entity::List(_, ids) => CExpr::List(ids.clone()),
            Entity::Simplex(v, n) => CExpr::Simplex(*v, *n),
            Entity::Perm(v, n) => CExpr::Perm(*v, *n),
        }
    }

    fn vars(&self) -> Option<VarId> {
        match self {
            Entity::Const(_) | Entity::ConstVec(_) => None,
            Entity::Var(v) | Entity::List(v, _) | Entity::Simplex(v, _) | Entity::Perm(v, _) => Some(*v),
        }
    }
}

/// Default initialiser of the form `ctor(args)` or `new Type(args)`.
fn ctor(d: &Decl) -> Option<(&str, &[Expr])> {
    match &d.init {
        Some(Expr::Call(f, args, _)) => Some((f.as_str(), args.as_slice())),
        Some(Expr::New(ty, args)) => Some((ty.as_str(), args.as_slice())),
        _ => None,
    }
}

type ArgsFn = Arc<dyn Fn(&State) -> Vec<Arg> + Send + Sync>;

struct PendingLaw {
    target: Option<VarId>,
    scope: Vec<VarId>,
    family: Family,
    args: ArgsFn,
    pos: Pos,
}

impl PendingLaw {
    /// Factor order independent of the order laws were written in.
    fn key(&self) -> (usize, Vec<usize>, &'static str) {
        let t = self.target.map_or(usize::MAX, VarId::index);
        (t, self.scope.iter().map(|v| v.index()).collect(), self.family.name())
    }

    fn add_to(self, b: &mut ModelBuilder) -> Result<(), DslError> {
        let pos = self.pos;
        let err = |e: crate::model::ModelError| DslError::at(pos, e.to_string());
        let args = self.args;
        let family = self.family;
        match self.target {
            Some(t) => add_law(b, family, t, &self.scope, move |s| args(s)).map(drop).map_err(err),
            None => {
                let f = move |s: &State| family.log_density(&args(s), Realization::None);
                b.add_factor(FactorSpec::new(family.name(), self.scope, f)).map(drop).map_err(err)
            }
        }
    }
}

struct Lowerer {
    b: ModelBuilder,
    globals: HashMap<String, Entity>,
    pending: Vec<PendingLaw>,
}

fn at(pos: Pos) -> impl Fn(DslError) -> DslError {
    move |mut e| {
        if e.pos.is_none() {
            e.pos = Some(pos);
        }
        e
    }
}

impl Lowerer {
    /// Evaluates `e` now; only constants, loop variables and sizes may appear.
    fn constant(&self, e: &Expr, locals: &HashMap<String, Entity>, pos: Pos) -> Result<CExpr, DslError> {
        let resolve = |n: &str, p: Pos| {
            locals
                .get(n)
                .or_else(|| self.globals.get(n))
                .map(Entity::leaf)
                .ok_or_else(|| DslError::at(p, format!("unknown identifier `{n}`")))
        };
        let c = compile(e, &resolve).map_err(at(pos))?;
        if c.reads_state() {
            return Err(DslError::at(pos, format!("`{e}` depends on a random variable and cannot be evaluated here")));
        }
        if c.is_vector() {
            return Ok(c);
        }
        strict_num(&c, e).map(CExpr::Num).map_err(at(pos))
    }

    fn constant_num(&self, e: &Expr, locals: &HashMap<String, Entity>, pos: Pos) -> Result<f64, DslError> {
        match self.constant(e, locals, pos)? {
            CExpr::Num(x) => Ok(x),
            _ => Err(DslError::at(pos, format!("`{e}` is a vector, expected a number"))),
        }
    }

    fn constant_index(&self, e: &Expr, locals: &HashMap<String, Entity>, pos: Pos) -> Result<i64, DslError> {
        let x = self.constant_num(e, locals, pos)?;
        if x.fract() != 0.0 {
            return Err(DslError::at(pos, format!("`{e}` = {x} is not an integer")));
        }
        Ok(x as i64)
    }

    fn declare(&mut self, d: &Decl, binding: Option<&Binding>) -> Result<(), DslError> {
        let scalar_type = matches!(d.ty, TypeName::RealVar | TypeName::IntVar | TypeName::Integer | TypeName::Double);
        // A one-entry list, e.g. from a one-line data file, binds a scalar.
        let single;
        let binding = match binding {
            Some(Binding::List(v)) if scalar_type && v.len() == 1 => {
                single = v[0].map_or(Binding::Na, Binding::Scalar);
                Some(&single)
            }
            b => b,
        };
        let none = HashMap::new();
        let pos = d.pos;
        let name = d.name.as_str();
        let unbound = || DslError::at(pos, format!("`{name}` is unbound: give it a value or a default"));
        let integral = |x: f64| {
            if x.fract() == 0.0 {
                Ok(x as i64)
            } else {
                Err(DslError::at(pos, format!("`{name}` must be an integer, got {x}")))
            }
        };
        let model_err = |e: crate::model::ModelError| DslError::at(pos, e.to_string());

        if !d.random {
            let entity = match d.ty {
                TypeName::RealVar | TypeName::IntVar | TypeName::Integer | TypeName::Double => {
                    let x = match binding {
                        Some(Binding::Scalar(x)) => *x,
                        Some(Binding::Na) => return Err(DslError::at(pos, format!("param `{name}` cannot be NA"))),
                        Some(Binding::List(_)) => return Err(DslError::at(pos, format!("param `{name}` is a scalar"))),
                        None => match &d.init {
                            Some(e) => self.constant_num(e, &none, pos)?,
                            None => return Err(unbound()),
                        },
                    };
                    if matches!(d.ty, TypeName::IntVar | TypeName::Integer) {
                        integral(x)?;
                    }
                    Entity::Const(x)
                }
                TypeName::Matrix | TypeName::Simplex | TypeName::RealList | TypeName::IntList => {
                    let v: Vec<f64> = match binding {
                        Some(b @ (Binding::List(_) | Binding::Scalar(_))) => b
                            .entries()
                            .into_iter()
                            .map(|x| x.ok_or_else(|| DslError::at(pos, format!("param `{name}` cannot contain NA"))))
                            .collect::<Result<_, _>>()?,
                        Some(Binding::Na) => return Err(DslError::at(pos, format!("param `{name}` cannot be NA"))),
                        None => match ctor(d) {
                            Some(("fixedVector" | "fixedRealList" | "fixedIntList" | "fixedSimplex", args)) => {
                                args.iter().map(|a| self.constant_num(a, &none, pos)).collect::<Result<_, _>>()?
                            }
                            _ => match &d.init {
                                Some(e) => match self.constant(e, &none, pos)? {
                                    CExpr::Vec(v) => v.to_vec(),
                                    _ => return Err(DslError::at(pos, format!("`{name}` needs a vector value"))),
                                },
                                None => return Err(unbound()),
                            },
                        },
                    };
                    Entity::ConstVec(v.into())
                }
                TypeName::Permutation => {
                    return Err(DslError::at(pos, "param Permutation is not supported; declare it random"))
                }
            };
            self.globals.insert(d.name.clone(), entity);
            return Ok(());
        }

        let entity = match d.ty {
            TypeName::RealVar | TypeName::IntVar | TypeName::Integer | TypeName::Double => {
                let is_int = matches!(d.ty, TypeName::IntVar | TypeName::Integer);
                let observed = match binding {
                    Some(Binding::Scalar(x)) => Some(*x),
                    Some(Binding::Na) => None,
                    Some(Binding::List(_)) => return Err(DslError::at(pos, format!("`{name}` is a scalar"))),
                    None => match &d.init {
                        Some(e) => Some(self.constant_num(e, &none, pos)?),
                        None => return Err(unbound()),
                    },
                };
                let (kind, value) = if is_int {
                    (VarKind::Int, observed.map(integral).transpose()?.map(Value::Int))
                } else {
                    (VarKind::Real, observed.map(Value::Real))
                };
                let status = if value.is_some() { Status::Observed } else { Status::Latent };
                let v = self.b.add_variable(name, kind, status, value).map_err(model_err)?;
                Entity::Var(v)
            }
            TypeName::RealList | TypeName::IntList => {
                let is_int = d.ty == TypeName::IntList;
                let entries: Vec<Option<f64>> = match (binding, ctor(d)) {
                    (Some(b @ (Binding::List(_) | Binding::Scalar(_))), _) => b.entries(),
                    (_, Some(("latentRealList" | "latentIntList", [n]))) => {
                        let n = self.constant_index(n, &none, pos)?;
                        if n < 0 {
                            return Err(DslError::at(pos, format!("negative list size {n}")));
                        }
                        vec![None; n as usize]
                    }
                    (None, Some(("fixedVector" | "fixedRealList" | "fixedIntList", args))) => {
                        args.iter().map(|a| self.constant_num(a, &none, pos).map(Some)).collect::<Result<_, _>>()?
                    }
                    _ => return Err(unbound()),
                };
                let n = entries.len();
                let (kind, value) = if is_int {
                    let v = entries.iter().map(|x| x.map(integral).transpose().map(|k| k.unwrap_or(0))).collect::<Result<_, _>>()?;
                    (VarKind::IntList(n), Value::IntList(v))
                } else {
                    (VarKind::RealList(n), Value::RealList(entries.iter().map(|x| x.unwrap_or(0.0)).collect()))
                };
                let v = self.b.add_variable(name, kind, Status::Observed, Some(value)).map_err(model_err)?;
                let ids: Vec<VarId> = self.b.variable(v).elements.clone();
                for (id, x) in ids.iter().zip(&entries) {
                    if x.is_none() {
                        self.b.set_status(*id, Status::Latent).map_err(model_err)?;
                    }
                }
                if n > 0 && entries.iter().all(Option::is_none) {
                    self.b.set_status(v, Status::Latent).map_err(model_err)?;
                }
                Entity::List(v, ids.into())
            }
            TypeName::Simplex => {
                let (k, value) = match (binding, ctor(d)) {
                    (Some(b @ (Binding::List(_) | Binding::Scalar(_))), _) => {
                        let p: Vec<f64> = b
                            .entries()
                            .into_iter()
                            .map(|x| x.ok_or_else(|| DslError::at(pos, "a simplex is observed or latent as a whole")))
                            .collect::<Result<_, _>>()?;
                        (p.len(), Some(p))
                    }
                    (_, Some(("latentSimplex", [k]))) => (self.constant_index(k, &none, pos)?.max(0) as usize, None),
                    (None, Some(("fixedVector" | "fixedSimplex", args))) => {
                        let p: Vec<f64> = args.iter().map(|a| self.constant_num(a, &none, pos)).collect::<Result<_, _>>()?;
                        (p.len(), Some(p))
                    }
                    _ => return Err(unbound()),
                };
                let status = if value.is_some() { Status::Observed } else { Status::Latent };
                let v = self.b.add_variable(name, VarKind::Simplex(k), status, value.map(Value::Simplex)).map_err(model_err)?;
                Entity::Simplex(v, k)
            }
            TypeName::Permutation => {
                let (n, value) = match (binding, ctor(d)) {
                    (Some(b @ (Binding::List(_) | Binding::Scalar(_))), _) => {
                        let p: Vec<usize> = b
                            .entries()
                            .into_iter()
                            .map(|x| match x {
                                Some(x) if x >= 0.0 && x.fract() == 0.0 => Ok(x as usize),
                                _ => Err(DslError::at(pos, "a permutation needs non-negative integer entries")),
                            })
                            .collect::<Result<_, _>>()?;
                        (p.len(), Some(p))
                    }
                    (_, Some(("Permutation", [n]))) => (self.constant_index(n, &none, pos)?.max(0) as usize, None),
                    _ => return Err(unbound()),
                };
                let status = if value.is_some() { Status::Observed } else { Status::Latent };
                let v = self
                    .b
                    .add_variable(name, VarKind::Permutation(n), status, value.map(Value::Permutation))
                    .map_err(model_err)?;
                Entity::Perm(v, n)
            }
            TypeName::Matrix => return Err(DslError::at(pos, "random Matrix is not supported; use a param")),
        };
        self.globals.insert(d.name.clone(), entity);
        Ok(())
    }

    fn laws(&mut self, laws: &[Law], locals: &mut HashMap<String, Entity>) -> Result<(), DslError> {
        for law in laws {
            match law {
                Law::Loop(lp) => {
                    let from = self.constant_index(&lp.from, locals, lp.pos)?;
                    let to = self.constant_index(&lp.to, locals, lp.pos)?;
                    let saved = locals.get(&lp.var).cloned();
                    for i in from..to {
                        locals.insert(lp.var.clone(), Entity::Const(i as f64));
                        self.laws(&lp.body, locals)?;
                    }
                    match saved {
                        Some(e) => locals.insert(lp.var.clone(), e),
                        None => locals.remove(&lp.var),
                    };
                }
                Law::Constrained(name, pos) => {
                    let v = self
                        .globals
                        .get(name)
                        .and_then(Entity::vars)
                        .ok_or_else(|| DslError::at(*pos, format!("`{name}` is not a random variable")))?;
                    self.b.add_constrained(v).map_err(|e| DslError::at(*pos, e.to_string()))?;
                }
                Law::Composite(c) => self.composite(c, locals)?,
            }
        }
        Ok(())
    }

    fn place(&self, p: &Place, locals: &HashMap<String, Entity>) -> Result<VarId, DslError> {
        let entity = locals
            .get(&p.name)
            .or_else(|| self.globals.get(&p.name))
            .ok_or_else(|| DslError::at(p.pos, format!("unknown identifier `{}`", p.name)))?;
        match (&p.index, entity) {
            (None, e) => e.vars().ok_or_else(|| DslError::at(p.pos, format!("`{}` is not a random variable", p.name))),
            (Some(i), Entity::List(_, ids)) => {
                let k = self.constant_index(i, locals, p.pos)?;
                usize::try_from(k)
                    .ok()
                    .and_then(|k| ids.get(k).copied())
                    .ok_or_else(|| DslError::at(p.pos, format!("index {k} out of range for `{}` of size {}", p.name, ids.len())))
            }
            (Some(_), _) => Err(DslError::at(p.pos, format!("`{}` is not a list of random variables", p.name))),
        }
    }

    fn composite(&mut self, c: &CompositeLaw, locals: &HashMap<String, Entity>) -> Result<(), DslError> {
        let pos = c.pos;
        let family = dists::lookup(&c.distribution).map_err(|e| DslError::at(pos, e.to_string()))?;
        let arg_exprs: &[Expr] = c.args.as_deref().unwrap_or(&[]);
        family.check_arity(arg_exprs.len()).map_err(|e| DslError::at(pos, e.to_string()))?;
        if c.targets.len() > 1 {
            return Err(DslError::at(
                pos,
                format!("laws with {} targets are not supported: catalog distributions have a single random variable", c.targets.len()),
            ));
        }
        let spec = family.spec();
        let target = match c.targets.first() {
            Some(p) => Some(self.place(p, locals)?),
            None => None,
        };
        match (target, spec.support) {
            (None, s) if s != Support::Other => {
                return Err(DslError::at(pos, format!("`{}` needs a target variable", c.distribution)))
            }
            (Some(_), Support::Other) => {
                return Err(DslError::at(pos, format!("`{}` takes no target variable", c.distribution)))
            }
            _ => {}
        }
        if let Some(t) = target {
            let kind = self.b.variable(t).kind;
            let ok = matches!(
                (spec.support, kind),
                (Support::Real, VarKind::Real)
                    | (Support::Int, VarKind::Int)
                    | (Support::Simplex, VarKind::Simplex(_))
                    | (Support::Permutation, VarKind::Permutation(_))
            );
            if !ok {
                return Err(DslError::at(
                    pos,
                    format!("`{}` cannot be the target of `{}`", self.b.variable(t).name, c.distribution),
                ));
            }
        }

        // Scope of the argument expressions: exactly the conditioners.
        let mut scope: HashMap<String, Entity> = HashMap::new();
        let mut scope_vars = Vec::new();
        for k in &c.conditioners {
            let entity = match k {
                Conditioner::Name(n, p) => locals
                    .get(n)
                    .or_else(|| self.globals.get(n))
                    .cloned()
                    .ok_or_else(|| DslError::at(*p, format!("unknown identifier `{n}`")))?,
                Conditioner::Binding { ty, value, pos, .. } => self.local_binding(*ty, value, locals, &scope, *pos)?,
            };
            if let Some(v) = entity.vars() {
                scope_vars.push(v);
            }
            scope.insert(k.name().to_string(), entity);
        }
        let resolve = |n: &str, p: Pos| {
            scope.get(n).map(Entity::leaf).ok_or_else(|| {
                DslError::at(p, format!("`{n}` is used in an argument but is not listed among the conditioners"))
            })
        };
        let mut args = Vec::with_capacity(arg_exprs.len());
        for (e, (pname, pkind)) in arg_exprs.iter().zip(spec.params) {
            let ce = compile(e, &resolve).map_err(at(pos))?;
            if ce.is_vector() != (*pkind == ParamKind::Vector) {
                let want = if *pkind == ParamKind::Vector { "a vector" } else { "a number" };
                return Err(DslError::at(pos, format!("argument `{pname}` of `{}` must be {want}", c.distribution)));
            }
            args.push(ce);
        }
        let args: Arc<[CExpr]> = args.into();
        if let Some(t) = target {
            scope_vars.retain(|v| *v != t);
            if self.pending.iter().any(|p| p.target == Some(t)) {
                return Err(DslError::at(pos, format!("`{}` already has a law", self.b.variable(t).name)));
            }
        }
        self.pending.push(PendingLaw {
            target,
            scope: scope_vars,
            family,
            args: Arc::new(move |s: &State| args.iter().map(|a| a.arg(s)).collect()),
            pos,
        });
        Ok(())
    }

    /// `Type name = value`: a variable place, or a constant, fixed at lowering.
    fn local_binding(
        &self,
        ty: TypeName,
        value: &Expr,
        locals: &HashMap<String, Entity>,
        scope: &HashMap<String, Entity>,
        pos: Pos,
    ) -> Result<Entity, DslError> {
        let lookup = |n: &str| scope.get(n).or_else(|| locals.get(n)).or_else(|| self.globals.get(n));
        let entity = match value {
            Expr::Ident(n, p) => lookup(n).cloned().ok_or_else(|| DslError::at(*p, format!("unknown identifier `{n}`")))?,
            Expr::Get(base, idx) if matches!(&**base, Expr::Ident(n, _) if matches!(lookup(n), Some(Entity::List(..)))) => {
                let Expr::Ident(n, p) = &**base else { unreachable!() };
                self.place(&Place { name: n.clone(), index: Some((**idx).clone()), pos: *p }, locals)
                    .map(Entity::Var)?
            }
            e => match self.constant(e, locals, pos)? {
                CExpr::Num(x) => Entity::Const(x),
                CExpr::Vec(v) => Entity::ConstVec(v),
                _ => unreachable!(),
            },
        };
        if let Entity::Var(v) = entity {
            let kind = self.b.variable(v).kind;
            let ok = match ty {
                TypeName::IntVar | TypeName::Integer => kind == VarKind::Int,
                TypeName::RealVar | TypeName::Double => matches!(kind, VarKind::Real | VarKind::Int),
                _ => false,
            };
            if !ok {
                return Err(DslError::at(pos, format!("`{value}` does not have type {ty}")));
            }
        }
        Ok(entity)
    }
}

/// Builds a model: unrolls loops and turns each composite law into one factor
/// whose arguments are re-evaluated from the conditioners at every density query.
pub fn lower(ast: &ModelAst, bindings: &Bindings) -> Result<Model, DslError> {
    for name in bindings.keys() {
        if ast.decl(name).is_none() {
            return Err(DslError::new(format!("model `{}` has no variable `{name}`", ast.name), None));
        }
    }
    let mut l = Lowerer { b: ModelBuilder::new(), globals: HashMap::new(), pending: Vec::new() };
    for d in &ast.decls {
        l.declare(d, bindings.get(&d.name))?;
    }
    l.laws(&ast.laws, &mut HashMap::new())?;
    let mut pending = std::mem::take(&mut l.pending);
    pending.sort_by(|a, b| a.key().cmp(&b.key()));
    for p in pending {
        p.add_to(&mut l.b)?;
    }
    Ok(l.b.build())
}
