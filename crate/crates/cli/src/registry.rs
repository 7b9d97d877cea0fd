//! Named models: bundled DSL sources, library models, and `.bl` files on disk.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use tempo_core::dsl::{self, Binding, Bindings, ModelAst, TypeName};
use tempo_core::model::Model;
use tempo_core::models;

use crate::data;

const BUNDLED: [(&str, &str, &str); 4] = [
    ("Doomsday", "Doomsday.bl", include_str!("../../core/models/Doomsday.bl")),
    ("MixtureModel", "MixtureModel.bl", include_str!("../../core/models/MixtureModel.bl")),
    ("BinaryChain", "BinaryChain.bl", include_str!("../../core/models/BinaryChain.bl")),
    ("Regression", "Regression.bl", include_str!("../../core/models/Regression.bl")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Library {
    Gmm,
    Ising,
    Composite,
    Hmm,
    Conjugate,
}

const LIBRARY: [(&str, Library); 5] = [
    ("GMM", Library::Gmm),
    ("Ising", Library::Ising),
    ("CompositeModel", Library::Composite),
    ("HMM", Library::Hmm),
    ("ConjugateNormal", Library::Conjugate),
];

/// Names accepted by `--model`; a package prefix such as `jss.` is ignored.
pub fn model_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|b| b.0).chain(LIBRARY.iter().map(|l| l.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptionKind {
    /// Number, list, `NA`, or `file <path>`.
    Value,
    /// Column name in the `data` CSV.
    Column,
    Path,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOption {
    pub name: String,
    pub kind: OptionKind,
    pub required: bool,
    pub default: Option<String>,
    pub help: String,
}

impl ModelOption {
    fn value(name: &str, default: &str, help: &str) -> Self {
        ModelOption {
            name: name.into(),
            kind: OptionKind::Value,
            required: false,
            default: Some(default.into()),
            help: help.into(),
        }
    }

    fn column(var: &str) -> Self {
        ModelOption {
            name: format!("{var}.name"),
            kind: OptionKind::Column,
            required: false,
            default: Some(var.into()),
            help: format!("column of --model.data holding {var}"),
        }
    }

    fn data() -> Self {
        ModelOption {
            name: "data".into(),
            kind: OptionKind::Path,
            required: false,
            default: None,
            help: "CSV whose columns bind list variables of the same name, row by row".into(),
        }
    }
}

/// Values collected from `--model.*` flags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelArgs {
    pub values: BTreeMap<String, Binding>,
    /// Variable name to CSV column name.
    pub columns: HashMap<String, String>,
    pub data: Option<PathBuf>,
}

#[derive(Clone, Debug)]
enum Source {
    Dsl { file: String, ast: ModelAst },
    Library(Library),
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    source: Source,
}

#[derive(Debug)]
pub struct Built {
    pub model: Model,
    pub notices: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("unknown model `{name}`{}", crate::args::did_you_mean(.suggestion))]
    Unknown { name: String, suggestion: Option<String> },
    #[error("{0}")]
    Source(String),
}

impl ModelSpec {
    pub fn resolve(name: &str) -> Result<ModelSpec, RegistryError> {
        if name.ends_with(".bl") {
            let path = Path::new(name);
            let text = std::fs::read_to_string(path)
                .map_err(|e| RegistryError::Source(format!("cannot read {name}: {e}")))?;
            return Self::from_source(name, &text);
        }
        let short = name.rsplit('.').next().unwrap_or(name);
        if let Some((_, file, src)) = BUNDLED.iter().find(|b| b.0 == short) {
            return Self::from_source(file, src).map(|mut s| {
                s.name = name.to_string();
                s
            });
        }
        if let Some((_, lib)) = LIBRARY.iter().find(|l| l.0 == short) {
            return Ok(ModelSpec { name: name.to_string(), source: Source::Library(*lib) });
        }
        Err(RegistryError::Unknown {
            name: name.to_string(),
            suggestion: crate::args::suggest(short, model_names()),
        })
    }

    fn from_source(file: &str, text: &str) -> Result<ModelSpec, RegistryError> {
        let ast = dsl::parse_model(text).map_err(|e| RegistryError::Source(e.in_file(file).to_string()))?;
        let name = match &ast.package {
            Some(p) => format!("{p}.{}", ast.name),
            None => ast.name.clone(),
        };
        Ok(ModelSpec { name, source: Source::Dsl { file: file.to_string(), ast } })
    }

    pub fn options(&self) -> Vec<ModelOption> {
        match &self.source {
            Source::Dsl { ast, .. } => {
                let mut out = Vec::new();
                for d in &ast.decls {
                    out.push(ModelOption {
                        name: d.name.clone(),
                        kind: OptionKind::Value,
                        required: d.init.is_none(),
                        default: d.init.as_ref().map(ToString::to_string),
                        help: format!("{} {}", if d.random { "random" } else { "param" }, d.ty),
                    });
                }
                let lists: Vec<&str> = ast
                    .decls
                    .iter()
                    .filter(|d| matches!(d.ty, TypeName::RealList | TypeName::IntList))
                    .map(|d| d.name.as_str())
                    .collect();
                if !lists.is_empty() {
                    out.push(ModelOption::data());
                    out.extend(lists.into_iter().map(ModelOption::column));
                }
                out
            }
            Source::Library(lib) => match lib {
                Library::Gmm => vec![
                    ModelOption::value("y", "300 synthetic observations, seed 1", "observations"),
                    ModelOption::value("K", "2", "number of components"),
                    ModelOption::data(),
                    ModelOption::column("y"),
                ],
                Library::Ising => vec![
                    ModelOption::value("size", "3", "side length of the square lattice"),
                    ModelOption::value("beta", "log(1 + sqrt(2)) / 2", "inverse temperature"),
                    ModelOption::value("field", "0", "external field"),
                ],
                Library::Composite => vec![ModelOption::value("y", "0.1, 1.9, 1.2", "observations")],
                Library::Hmm => vec![],
                Library::Conjugate => vec![ModelOption::value("y", "0", "observation")],
            },
        }
    }

    pub fn build(&self, args: &ModelArgs) -> Result<Built, String> {
        match &self.source {
            Source::Dsl { file, ast } => {
                let mut bindings: Bindings = args.values.clone().into_iter().collect();
                let mut notices = Vec::new();
                if let Some(path) = &args.data {
                    let wanted: Vec<String> = ast
                        .decls
                        .iter()
                        .filter(|d| matches!(d.ty, TypeName::RealList | TypeName::IntList))
                        .filter(|d| !bindings.contains_key(&d.name))
                        .map(|d| d.name.clone())
                        .collect();
                    let (found, missing) = data::read_columns(path, &wanted, &args.columns).map_err(|e| e.to_string())?;
                    bindings.extend(found);
                    notices.extend(missing);
                }
                let model = dsl::lower(ast, &bindings).map_err(|e| e.in_file(file).to_string())?;
                Ok(Built { model, notices })
            }
            Source::Library(lib) => {
                let mut notices = Vec::new();
                let model = match lib {
                    Library::Gmm => {
                        let y = match (args.values.get("y"), &args.data) {
                            (Some(b), _) => observed_list("y", b)?,
                            (None, Some(path)) => {
                                let (mut found, missing) =
                                    data::read_columns(path, &["y".into()], &args.columns).map_err(|e| e.to_string())?;
                                notices.extend(missing);
                                let b = found.remove("y").ok_or("no `y` column in the data file")?;
                                observed_list("y", &b)?
                            }
                            (None, None) => models::gmm_synthetic(300, 1),
                        };
                        let k = count("K", scalar(args, "K", 2.0)?)?;
                        models::gmm(&y, k)
                    }
                    Library::Ising => {
                        let n = count("size", scalar(args, "size", 3.0)?)?;
                        let beta = scalar(args, "beta", models::ising_critical_beta())?;
                        models::ising(n, beta, scalar(args, "field", 0.0)?)
                    }
                    Library::Composite => {
                        let y = match args.values.get("y") {
                            Some(b) => observed_list("y", b)?,
                            None => vec![0.1, 1.9, 1.2],
                        };
                        models::composite_model(&y)
                    }
                    Library::Hmm => models::Hmm::small().model(),
                    Library::Conjugate => models::conjugate_normal(scalar(args, "y", 0.0)?),
                }
                .map_err(|e| e.to_string())?;
                Ok(Built { model, notices })
            }
        }
    }
}

fn scalar(args: &ModelArgs, name: &str, default: f64) -> Result<f64, String> {
    match args.values.get(name) {
        None => Ok(default),
        Some(Binding::Scalar(x)) => Ok(*x),
        Some(Binding::List(v)) if v.len() == 1 && v[0].is_some() => Ok(v[0].unwrap_or_default()),
        Some(_) => Err(format!("--model.{name} must be a single number for this model")),
    }
}

fn count(name: &str, x: f64) -> Result<usize, String> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(format!("--model.{name} must be a positive integer, got {x}"))
    }
}

fn observed_list(name: &str, b: &Binding) -> Result<Vec<f64>, String> {
    let entries = match b {
        Binding::Scalar(x) => vec![Some(*x)],
        Binding::List(v) => v.clone(),
        Binding::Na => vec![None],
    };
    entries
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| format!("--model.{name} must be fully observed for this model"))
}
