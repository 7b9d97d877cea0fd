use std::fmt::{self, Write};

use super::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeName {
    RealVar,
    IntVar,
    Simplex,
    RealList,
    IntList,
    Integer,
    Double,
    Matrix,
    Permutation,
}

impl TypeName {
    pub fn from_parts(base: &str, arg: Option<&str>) -> Option<TypeName> {
        Some(match (base, arg) {
            ("RealVar", None) => TypeName::RealVar,
            ("IntVar", None) => TypeName::IntVar,
            ("Simplex", None) => TypeName::Simplex,
            ("List", Some("RealVar")) => TypeName::RealList,
            ("List", Some("IntVar")) => TypeName::IntList,
            ("Integer" | "int", None) => TypeName::Integer,
            ("Double" | "double", None) => TypeName::Double,
            ("Matrix", None) => TypeName::Matrix,
            ("Permutation", None) => TypeName::Permutation,
            _ => return None,
        })
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeName::RealVar => "RealVar",
            TypeName::IntVar => "IntVar",
            TypeName::Simplex => "Simplex",
            TypeName::RealList => "List<RealVar>",
            TypeName::IntList => "List<IntVar>",
            TypeName::Integer => "Integer",
            TypeName::Double => "Double",
            TypeName::Matrix => "Matrix",
            TypeName::Permutation => "Permutation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Ident(String, Pos),
    Get(Box<Expr>, Box<Expr>),
    Size(Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>, Pos),
    /// `new Type(args)`.
    New(String, Vec<Expr>),
}

impl Expr {
    /// Every identifier read by the expression, in order of appearance.
    pub fn identifiers(&self) -> Vec<(&str, Pos)> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<(&'a str, Pos)>) {
        match self {
            Expr::Int(_) | Expr::Real(_) => {}
            Expr::Ident(n, p) => out.push((n, *p)),
            Expr::Get(a, b) | Expr::Binary(_, a, b) => {
                a.collect_identifiers(out);
                b.collect_identifiers(out);
            }
            Expr::Size(a) | Expr::Neg(a) => a.collect_identifiers(out),
            Expr::Call(_, args, _) | Expr::New(_, args) => args.iter().for_each(|a| a.collect_identifiers(out)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Int(k) => write!(f, "{k}"),
            Expr::Real(x) => write!(f, "{x:?}"),
            Expr::Ident(n, _) => f.write_str(n),
            Expr::Get(a, i) => {
                wrap(f, a, 4)?;
                write!(f, ".get({i})")
            }
            Expr::Size(a) => {
                wrap(f, a, 4)?;
                f.write_str(".size")
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 3)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                wrap(f, a, p)?;
                write!(f, " {} ", op.symbol())?;
                // Left associative: an equal-precedence right operand needs parentheses.
                wrap(f, b, p + 1)
            }
            Expr::Call(name, args, _) => {
                write!(f, "{name}(")?;
                write_args(f, args)?;
                f.write_str(")")
            }
            Expr::New(ty, args) => {
                write!(f, "new {ty}(")?;
                write_args(f, args)?;
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decl {
    pub random: bool,
    pub ty: TypeName,
    pub name: String,
    pub init: Option<Expr>,
    pub pos: Pos,
}

/// A law target: a variable or one entry of a list.
#[derive(Clone, Debug, PartialEq)]
pub struct Place {
    pub name: String,
    pub index: Option<Expr>,
    pub pos: Pos,
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            Some(i) => write!(f, "{}.get({i})", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Conditioner {
    Name(String, Pos),
    Binding { ty: TypeName, name: String, value: Expr, pos: Pos },
}

impl Conditioner {
    pub fn name(&self) -> &str {
        match self {
            Conditioner::Name(n, _) => n,
            Conditioner::Binding { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeLaw {
    pub targets: Vec<Place>,
    pub conditioners: Vec<Conditioner>,
    pub distribution: String,
    /// `None` when written without parentheses, e.g. `UniformPermutation`.
    pub args: Option<Vec<Expr>>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loop {
    pub var: String,
    pub from: Expr,
    pub to: Expr,
    pub body: Vec<Law>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Law {
    Composite(CompositeLaw),
    Loop(Loop),
    Constrained(String, Pos),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelAst {
    pub package: Option<String>,
    pub imports: Vec<String>,
    pub name: String,
    pub decls: Vec<Decl>,
    pub laws: Vec<Law>,
}

impl ModelAst {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn composite_law_count(&self) -> usize {
        fn count(laws: &[Law]) -> usize {
            laws.iter()
                .map(|l| match l {
                    Law::Composite(_) => 1,
                    Law::Loop(lp) => count(&lp.body),
                    Law::Constrained(..) => 0,
                })
                .sum()
        }
        count(&self.laws)
    }
}

fn write_law(out: &mut String, law: &Law, depth: usize) -> fmt::Result {
    let pad = "  ".repeat(depth);
    match law {
        Law::Composite(c) => {
            out.push_str(&pad);
            let targets: Vec<String> = c.targets.iter().map(ToString::to_string).collect();
            out.push_str(&targets.join(", "));
            if !c.conditioners.is_empty() {
                if !targets.is_empty() {
                    out.push(' ');
                }
                out.push_str("| ");
                let conds: Vec<String> = c
                    .conditioners
                    .iter()
                    .map(|k| match k {
                        Conditioner::Name(n, _) => n.clone(),
                        Conditioner::Binding { ty, name, value, .. } => format!("{ty} {name} = {value}"),
                    })
                    .collect();
                out.push_str(&conds.join(", "));
            }
            write!(out, " ~ {}", c.distribution)?;
            if let Some(args) = &c.args {
                let a: Vec<String> = args.iter().map(ToString::to_string).collect();
                write!(out, "({})", a.join(", "))?;
            }
            out.push('\n');
        }
        Law::Loop(lp) => {
            writeln!(out, "{pad}for (Integer {} : {} ..< {}) {{", lp.var, lp.from, lp.to)?;
            for l in &lp.body {
                write_law(out, l, depth + 1)?;
            }
            writeln!(out, "{pad}}}")?;
        }
        Law::Constrained(v, _) => writeln!(out, "{pad}{v} is Constrained")?,
    }
    Ok(())
}

/// Canonical source text; parsing it yields an equal AST.
impl fmt::Display for ModelAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        if let Some(p) = &self.package {
            writeln!(out, "package {p}")?;
        }
        for i in &self.imports {
            writeln!(out, "import {i}")?;
        }
        if self.package.is_some() || !self.imports.is_empty() {
            out.push('\n');
        }
        writeln!(out, "model {} {{", self.name)?;
        for d in &self.decls {
            write!(out, "  {} {} {}", if d.random { "random" } else { "param" }, d.ty, d.name)?;
            if let Some(init) = &d.init {
                write!(out, " ?: {init}")?;
            }
            out.push('\n');
        }
        out.push_str("  laws {\n");
        for l in &self.laws {
            write_law(&mut out, l, 2)?;
        }
        out.push_str("  }\n}\n");
        f.write_str(&out)
    }
}
