//! Command-line parsing: `--model`, `--model.*`, `--engine`, `--engine.*` and experiment options.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use tempo_core::dsl::Binding;
use tempo_core::pt::{McmcConfig, PtConfig, RejectionEstimator};
use tempo_core::scm::{ResamplingScheme, ScmConfig, TemperatureSchedule};
use thiserror::Error;

use crate::data;
use crate::registry::{ModelArgs, ModelSpec, OptionKind, RegistryError};

pub const ENGINES: [&str; 6] = ["PT", "SCM", "AIS", "MCMC", "Forward", "Exact"];

#[derive(Debug, Error, PartialEq)]
pub enum ArgError {
    #[error("unknown option --{flag}{}", did_you_mean(.suggestion))]
    UnknownFlag { flag: String, suggestion: Option<String> },
    #[error("unknown engine `{name}`{}; available engines: {}", did_you_mean(.suggestion), ENGINES.join(", "))]
    UnknownEngine { name: String, suggestion: Option<String> },
    #[error("missing required option --{0}")]
    Missing(String),
    #[error("cannot parse `{value}` for --{flag}: expected {expected}")]
    BadValue { flag: String, value: String, expected: String },
    #[error("option --{0} is given more than once")]
    Repeated(String),
    #[error("unexpected argument `{0}`; options start with --")]
    Stray(String),
    #[error(transparent)]
    Model(#[from] RegistryError),
}

pub(crate) fn did_you_mean(s: &Option<String>) -> String {
    s.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default()
}

/// Closest candidate by Jaro-Winkler similarity, if reasonably close.
pub fn suggest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<String> {
    candidates
        .into_iter()
        .map(|c| (strsim::jaro_winkler(word, c), c))
        .filter(|(s, _)| *s >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Int,
    Real,
    Bool,
    Choice(&'static [&'static str]),
    Text,
}

impl Kind {
    fn expected(self) -> String {
        match self {
            Kind::Int => "a non-negative integer".into(),
            Kind::Real => "a number".into(),
            Kind::Bool => "true or false".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
            Kind::Text => "a value".into(),
        }
    }

    fn accepts(self, v: &str) -> bool {
        match self {
            Kind::Int => v.parse::<u64>().is_ok(),
            Kind::Real => v.parse::<f64>().is_ok(),
            Kind::Bool => matches!(v, "true" | "false"),
            Kind::Choice(c) => c.contains(&v),
            Kind::Text => true,
        }
    }
}

struct Opt {
    name: &'static str,
    kind: Kind,
    default: &'static str,
    help: &'static str,
}

const fn opt(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Opt {
    Opt { name, kind, default, help }
}

const THREADS: Kind = Kind::Choice(&["Max", "Single", "Fixed"]);
const SCHEDULES: Kind = Kind::Choice(&["AdaptiveTemperatureSchedule", "FixedTemperatureSchedule"]);

const PT_OPTS: &[Opt] = &[
    opt("nChains", Kind::Int, "8", "number of tempered chains"),
    opt("nScans", Kind::Int, "1000", "total scans over all adaptation rounds"),
    opt("nPassesPerScan", Kind::Real, "3", "kernel passes between swap phases"),
    opt("thinning", Kind::Int, "1", "keep one target sample every this many scans"),
    opt("usePriorSamples", Kind::Bool, "true", "exact prior draws at the reference chain"),
    opt("adaptFraction", Kind::Real, "0.5", "0 disables schedule adaptation"),
    opt("scmInit.nParticles", Kind::Int, "100", "particles of the SCM run that initializes the chains"),
    opt("swapStatistic", Kind::Choice(&["RaoBlackwellized", "Indicator"]), "RaoBlackwellized", "rejection statistic used for adaptation"),
    opt("random", Kind::Int, "1", "seed"),
    opt("nThreads", THREADS, "Max", "worker threads"),
    opt("nThreads.number", Kind::Int, "1", "worker count when nThreads is Fixed"),
];

const SCM_OPTS: &[Opt] = &[
    opt("nParticles", Kind::Int, "1000", "number of particles"),
    opt("resamplingESSThreshold", Kind::Real, "0.5", "resample when the relative ESS falls below this"),
    opt("resamplingScheme", Kind::Choice(&["STRATIFIED", "MULTINOMIAL"]), "STRATIFIED", "resampling scheme"),
    opt("temperatureSchedule", SCHEDULES, "AdaptiveTemperatureSchedule", "annealing schedule"),
    opt("temperatureSchedule.threshold", Kind::Real, "0.9999", "relative conditional ESS kept by the adaptive schedule"),
    opt("temperatureSchedule.nTemperatures", Kind::Int, "100", "grid size of the fixed schedule"),
    opt("nFinalRejuvenations", Kind::Int, "5", "kernel passes on the final population"),
    opt("nPassesPerScan", Kind::Real, "1", "kernel passes per annealing step"),
    opt("random", Kind::Int, "1", "seed"),
    opt("nThreads", THREADS, "Max", "worker threads"),
    opt("nThreads.number", Kind::Int, "1", "worker count when nThreads is Fixed"),
];

const AIS_OPTS: &[Opt] = &[
    opt("nParticles", Kind::Int, "1000", "number of particles"),
    opt("temperatureSchedule", SCHEDULES, "FixedTemperatureSchedule", "annealing schedule"),
    opt("temperatureSchedule.threshold", Kind::Real, "0.9999", "relative conditional ESS kept by the adaptive schedule"),
    opt("temperatureSchedule.nTemperatures", Kind::Int, "100", "grid size of the fixed schedule"),
    opt("nPassesPerScan", Kind::Real, "1", "kernel passes per annealing step"),
    opt("random", Kind::Int, "1", "seed"),
    opt("nThreads", THREADS, "Max", "worker threads"),
    opt("nThreads.number", Kind::Int, "1", "worker count when nThreads is Fixed"),
];

const MCMC_OPTS: &[Opt] = &[
    opt("nScans", Kind::Int, "1000", "number of scans"),
    opt("nPassesPerScan", Kind::Real, "3", "kernel passes per scan"),
    opt("thinning", Kind::Int, "1", "keep one sample every this many scans"),
    opt("random", Kind::Int, "1", "seed"),
];

const FORWARD_OPTS: &[Opt] = &[
    opt("nSamples", Kind::Int, "1", "number of independent draws from the model"),
    opt("random", Kind::Int, "1", "seed"),
];

const EXACT_OPTS: &[Opt] = &[opt("maxTraces", Kind::Int, "10000000", "give up beyond this many execution traces")];

const EXPERIMENT_OPTS: &[Opt] = &[
    opt("managedExecutionFolder", Kind::Bool, "true", "create a fresh results/all/<timestamp>.exec folder"),
    opt("resultsFolder", Kind::Text, "results", "where execution folders are created"),
    opt("tabularWriter", Kind::Choice(&["CSV"]), "CSV", "output format"),
    opt("tabularWriter.compressed", Kind::Bool, "false", "gzip the CSV files"),
    opt("recordExecutionInfo", Kind::Bool, "true", "accepted for compatibility"),
    opt("recordGitInfo", Kind::Bool, "false", "accepted for compatibility; not recorded"),
    opt("saveStandardStreams", Kind::Bool, "true", "accepted for compatibility"),
];

fn engine_opts(engine: &str) -> &'static [Opt] {
    match engine {
        "PT" => PT_OPTS,
        "SCM" => SCM_OPTS,
        "AIS" => AIS_OPTS,
        "MCMC" => MCMC_OPTS,
        "Forward" => FORWARD_OPTS,
        _ => EXACT_OPTS,
    }
}

#[derive(Clone, Debug)]
pub enum EngineConfig {
    Pt(PtConfig),
    Scm { config: ScmConfig, threads: Option<usize> },
    Ais { config: ScmConfig, threads: Option<usize> },
    Mcmc(McmcConfig),
    Forward { n_samples: u64, seed: u64 },
    Exact { max_traces: u64 },
}

impl EngineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EngineConfig::Pt(_) => "PT",
            EngineConfig::Scm { .. } => "SCM",
            EngineConfig::Ais { .. } => "AIS",
            EngineConfig::Mcmc(_) => "MCMC",
            EngineConfig::Forward { .. } => "Forward",
            EngineConfig::Exact { .. } => "Exact",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub managed: bool,
    pub results_folder: PathBuf,
    pub compressed: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { managed: true, results_folder: PathBuf::from("results"), compressed: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PostProcessor {
    Default,
    None,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub model_args: ModelArgs,
    pub engine: EngineConfig,
    pub experiment: ExperimentConfig,
    pub exclude: Vec<String>,
    /// `None` picks the engine's default.
    pub post_processor: Option<PostProcessor>,
    /// Every option with its effective value, for arguments.tsv.
    pub arguments: Vec<(String, String)>,
}

#[derive(Debug)]
pub enum Command {
    Help(String),
    Run(Box<RunConfig>),
}

/// Typed view of validated option strings.
struct Values<'a>(&'a HashMap<String, String>);

impl Values<'_> {
    fn str(&self, k: &str) -> &str {
        &self.0[k]
    }
    fn u64(&self, k: &str) -> u64 {
        self.0[k].parse().expect("validated integer")
    }
    fn usize(&self, k: &str) -> usize {
        self.u64(k) as usize
    }
    fn f64(&self, k: &str) -> f64 {
        self.0[k].parse().expect("validated number")
    }
    fn bool(&self, k: &str) -> bool {
        self.0[k] == "true"
    }
    fn threads(&self) -> Option<usize> {
        match self.str("nThreads") {
            "Single" => Some(1),
            "Fixed" => Some(self.usize("nThreads.number").max(1)),
            _ => None,
        }
    }
    fn schedule(&self) -> TemperatureSchedule {
        if self.str("temperatureSchedule") == "FixedTemperatureSchedule" {
            TemperatureSchedule::uniform(self.usize("temperatureSchedule.nTemperatures"))
        } else {
            TemperatureSchedule::Adaptive { threshold: self.f64("temperatureSchedule.threshold") }
        }
    }
}

fn build_engine(engine: &str, v: &Values) -> EngineConfig {
    match engine {
        "PT" => EngineConfig::Pt(PtConfig {
            n_chains: v.usize("nChains"),
            n_scans: v.u64("nScans"),
            n_passes_per_scan: v.f64("nPassesPerScan"),
            thinning: v.u64("thinning"),
            use_prior_samples: v.bool("usePriorSamples"),
            adapt_fraction: v.f64("adaptFraction"),
            scm_init_particles: v.usize("scmInit.nParticles"),
            seed: v.u64("random"),
            n_threads: v.threads(),
            estimator: if v.str("swapStatistic") == "Indicator" {
                RejectionEstimator::Indicator
            } else {
                RejectionEstimator::RaoBlackwellized
            },
            initial_schedule: None,
        }),
        "SCM" => EngineConfig::Scm {
            config: ScmConfig {
                n_particles: v.usize("nParticles"),
                ess_threshold: v.f64("resamplingESSThreshold"),
                schedule: v.schedule(),
                n_final_rejuvenations: v.usize("nFinalRejuvenations"),
                scheme: if v.str("resamplingScheme") == "MULTINOMIAL" {
                    ResamplingScheme::Multinomial
                } else {
                    ResamplingScheme::Stratified
                },
                n_passes: v.f64("nPassesPerScan"),
                seed: v.u64("random"),
                ..ScmConfig::default()
            },
            threads: v.threads(),
        },
        "AIS" => EngineConfig::Ais {
            config: ScmConfig {
                n_particles: v.usize("nParticles"),
                schedule: v.schedule(),
                n_final_rejuvenations: 0,
                n_passes: v.f64("nPassesPerScan"),
                seed: v.u64("random"),
                ..ScmConfig::ais()
            },
            threads: v.threads(),
        },
        "MCMC" => EngineConfig::Mcmc(McmcConfig {
            n_scans: v.u64("nScans"),
            n_passes_per_scan: v.f64("nPassesPerScan"),
            thinning: v.u64("thinning"),
            seed: v.u64("random"),
        }),
        "Forward" => EngineConfig::Forward { n_samples: v.u64("nSamples"), seed: v.u64("random") },
        _ => EngineConfig::Exact { max_traces: v.u64("maxTraces") },
    }
}

fn single<'a>(flag: &str, vals: &'a [String], kind: Kind) -> Result<&'a str, ArgError> {
    match vals {
        [] if kind == Kind::Bool => Ok("true"),
        [v] if kind.accepts(v) => Ok(v),
        _ => Err(ArgError::BadValue { flag: flag.into(), value: vals.join(" "), expected: kind.expected() }),
    }
}

fn model_value(flag: &str, vals: &[String]) -> Result<Binding, ArgError> {
    let bad = |value: String| ArgError::BadValue {
        flag: flag.into(),
        value,
        expected: "a number, NA, a comma-separated list, or `file <path>`".into(),
    };
    match vals {
        [] => Err(bad(String::new())),
        [f, path] if f == "file" => data::read_values(path.as_ref()).map_err(|e| bad(format!("file {path} ({e})"))),
        _ => {
            let text = vals.join(",");
            Binding::parse(&text).map_err(|_| bad(vals.join(" ")))
        }
    }
}

/// Parses arguments (without the program name).
pub fn parse_args<I, S>(argv: I) -> Result<Command, ArgError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for a in argv {
        let a = a.as_ref();
        match a.strip_prefix("--") {
            Some(flag) if !flag.is_empty() => {
                if groups.iter().any(|(f, _)| f == flag) {
                    return Err(ArgError::Repeated(flag.into()));
                }
                groups.push((flag.to_string(), Vec::new()));
            }
            _ => match groups.last_mut() {
                Some((_, vals)) => vals.push(a.to_string()),
                None => return Err(ArgError::Stray(a.into())),
            },
        }
    }
    let given: HashMap<&str, &[String]> = groups.iter().map(|(f, v)| (f.as_str(), v.as_slice())).collect();
    let help = given.contains_key("help");

    let engine = match given.get("engine") {
        None => "PT",
        Some(v) => {
            let name = single("engine", v, Kind::Text)?;
            ENGINES.iter().find(|e| **e == name).copied().ok_or_else(|| ArgError::UnknownEngine {
                name: name.into(),
                suggestion: suggest(name, ENGINES),
            })?
        }
    };
    let model = match given.get("model") {
        Some(v) => Some(ModelSpec::resolve(single("model", v, Kind::Text)?)?),
        None if help => None,
        None => return Err(ArgError::Missing("model".into())),
    };
    if help {
        return Ok(Command::Help(help_text(model.as_ref(), engine)));
    }
    let model = model.expect("checked above");
    let model_opts = model.options();
    let eopts = engine_opts(engine);

    let mut model_args = ModelArgs::default();
    let mut engine_vals: HashMap<String, String> = eopts.iter().map(|o| (o.name.into(), o.default.into())).collect();
    let mut exp_vals: HashMap<String, String> =
        EXPERIMENT_OPTS.iter().map(|o| (o.name.into(), o.default.into())).collect();
    let mut exclude = Vec::new();
    let mut post_processor = None;
    let mut arguments: Vec<(String, String)> = Vec::new();

    for (flag, vals) in &groups {
        if flag == "model" || flag == "engine" {
            arguments.push((flag.clone(), vals.join(" ")));
            continue;
        }
        if let Some(key) = flag.strip_prefix("model.") {
            let Some(o) = model_opts.iter().find(|o| o.name == key) else {
                return Err(unknown(flag, all_flags(&model_opts, eopts)));
            };
            match o.kind {
                OptionKind::Value => {
                    model_args.values.insert(key.into(), model_value(flag, vals)?);
                }
                OptionKind::Column => {
                    let col = single(flag, vals, Kind::Text)?;
                    model_args.columns.insert(key.trim_end_matches(".name").into(), col.into());
                }
                OptionKind::Path => model_args.data = Some(PathBuf::from(single(flag, vals, Kind::Text)?)),
            }
        } else if let Some(key) = flag.strip_prefix("engine.") {
            let Some(o) = eopts.iter().find(|o| o.name == key) else {
                return Err(unknown(flag, all_flags(&model_opts, eopts)));
            };
            engine_vals.insert(key.into(), single(flag, vals, o.kind)?.into());
            continue;
        } else if let Some(key) = flag.strip_prefix("experimentConfigs.") {
            let Some(o) = EXPERIMENT_OPTS.iter().find(|o| o.name == key) else {
                return Err(unknown(flag, all_flags(&model_opts, eopts)));
            };
            exp_vals.insert(key.into(), single(flag, vals, o.kind)?.into());
        } else if flag == "excludeFromOutput" {
            if vals.is_empty() {
                return Err(ArgError::BadValue { flag: flag.clone(), value: String::new(), expected: "variable names".into() });
            }
            exclude.extend(vals.iter().cloned());
        } else if flag == "postProcessor" {
            let k = Kind::Choice(&["DefaultPostProcessor", "NoPostProcessor"]);
            post_processor = Some(match single(flag, vals, k)? {
                "DefaultPostProcessor" => PostProcessor::Default,
                _ => PostProcessor::None,
            });
        } else {
            return Err(unknown(flag, all_flags(&model_opts, eopts)));
        }
        arguments.push((flag.clone(), vals.join(" ")));
    }

    if model_args.data.is_none() {
        if let Some(o) = model_opts.iter().find(|o| o.required && !model_args.values.contains_key(&o.name)) {
            return Err(ArgError::Missing(format!("model.{}", o.name)));
        }
    }
    for o in eopts {
        arguments.push((format!("engine.{}", o.name), engine_vals[o.name].clone()));
    }
    let v = Values(&exp_vals);
    let experiment = ExperimentConfig {
        managed: v.bool("managedExecutionFolder"),
        results_folder: PathBuf::from(v.str("resultsFolder")),
        compressed: v.bool("tabularWriter.compressed"),
    };
    Ok(Command::Run(Box::new(RunConfig {
        model,
        model_args,
        engine: build_engine(engine, &Values(&engine_vals)),
        experiment,
        exclude,
        post_processor,
        arguments,
    })))
}

fn all_flags(model: &[crate::registry::ModelOption], engine: &[Opt]) -> Vec<String> {
    let mut out: Vec<String> = ["help", "model", "engine", "excludeFromOutput", "postProcessor"].map(String::from).to_vec();
    out.extend(model.iter().map(|o| format!("model.{}", o.name)));
    out.extend(engine.iter().map(|o| format!("engine.{}", o.name)));
    out.extend(EXPERIMENT_OPTS.iter().map(|o| format!("experimentConfigs.{}", o.name)));
    out
}

fn unknown(flag: &str, candidates: Vec<String>) -> ArgError {
    ArgError::UnknownFlag {
        flag: flag.into(),
        suggestion: suggest(flag, candidates.iter().map(String::as_str)).map(|s| format!("--{s}")),
    }
}

/// Options relevant to the given model and engine.
pub fn help_text(model: Option<&ModelSpec>, engine: &str) -> String {
    let mut s = String::new();
    let line = |s: &mut String, flag: &str, value: &str, help: &str| {
        let _ = writeln!(s, "  --{flag:<42} {value:<28} {help}");
    };
    let _ = writeln!(s, "usage: tempo --model <name|file.bl> [--model.<var> <value>] [--engine <engine>] [options]\n");
    let _ = writeln!(s, "General");
    line(&mut s, "model", "<name>", &format!("one of {} or a .bl file", crate::registry::model_names().join(", ")));
    line(&mut s, "engine", "PT", &format!("one of {}", ENGINES.join(", ")));
    line(&mut s, "excludeFromOutput", "<var> ...", "variables not written to samples/");
    line(&mut s, "postProcessor", "DefaultPostProcessor", "NoPostProcessor skips summaries");
    line(&mut s, "help", "", "this message; combine with --model and --engine for their options");
    let _ = writeln!(s, "\nModel {}", model.map(|m| m.name.as_str()).unwrap_or("(give --model to list its variables)"));
    if let Some(m) = model {
        for o in m.options() {
            let value = match (&o.default, o.required) {
                (_, true) => "<required>".to_string(),
                (Some(d), _) => d.clone(),
                (None, _) => String::new(),
            };
            line(&mut s, &format!("model.{}", o.name), &value, &o.help);
        }
    }
    let _ = writeln!(s, "\nEngine {engine}");
    for o in engine_opts(engine) {
        line(&mut s, &format!("engine.{}", o.name), o.default, o.help);
    }
    let _ = writeln!(s, "\nExperiment");
    for o in EXPERIMENT_OPTS {
        line(&mut s, &format!("experimentConfigs.{}", o.name), o.default, o.help);
    }
    s
}

/// Engine option defaults, for inspection and tests.
pub fn engine_defaults(engine: &str) -> BTreeMap<&'static str, &'static str> {
    engine_opts(engine).iter().map(|o| (o.name, o.default)).collect()
}
