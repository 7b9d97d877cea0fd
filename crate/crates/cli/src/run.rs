//! Runs one experiment: build the model, dispatch to an engine, write samples,
//! monitoring and summaries into a fresh execution folder.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use tempo_core::math::log_sum_exp;
use tempo_core::model::{Model, State, Status, VarId};
use tempo_core::pt::{run_mcmc, run_nrpt, PtError, PtResult};
use tempo_core::rng::MersenneSource;
use tempo_core::scm::{run_ais, run_scm, stratified_indices, Randomness, ScmResult};
use tempo_core::testkit::enumerate_traces;
use thiserror::Error;

use crate::args::{suggest, EngineConfig, PostProcessor, RunConfig};
use crate::experiment::ExperimentFolder;
use crate::registry::Built;
use crate::summary::{ess_batch, Summary};
use crate::tidy::{key_columns, tidy_values, write_tidy, TidyFile};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Engine(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub folder: PathBuf,
    pub execution_millis: u128,
    pub log_normalization: Vec<(String, f64)>,
    pub n_samples: usize,
}

/// Engine output: equally weighted states, or enumerated states with log probabilities.
struct Draws {
    states: Vec<State>,
    log_probability: Option<Vec<f64>>,
    log_normalization: Vec<(String, f64)>,
}

pub fn run_experiment(cfg: &RunConfig, out: &mut dyn Write) -> Result<RunOutcome, RunError> {
    execute(cfg, out, |cfg| cfg.model.build(&cfg.model_args).map_err(RunError::Model))
}

/// Like [`run_experiment`] with a model built elsewhere; `cfg.model` only names it.
pub fn run_experiment_with_model(cfg: &RunConfig, model: Model, out: &mut dyn Write) -> Result<RunOutcome, RunError> {
    execute(cfg, out, move |_| Ok(Built { model, notices: Vec::new() }))
}

fn execute(
    cfg: &RunConfig,
    out: &mut dyn Write,
    build: impl FnOnce(&RunConfig) -> Result<Built, RunError>,
) -> Result<RunOutcome, RunError> {
    let start = Instant::now();

    let phase = Instant::now();
    writeln!(out, "Preprocess {{")?;
    let post = match (&cfg.engine, cfg.post_processor) {
        (EngineConfig::Exact { .. }, Some(PostProcessor::Default)) => {
            return Err(RunError::Config(
                "DefaultPostProcessor should not be used to analyze the output of the Exact engine; \
                 use --postProcessor NoPostProcessor"
                    .into(),
            ))
        }
        (EngineConfig::Exact { .. }, None) => PostProcessor::None,
        (_, p) => p.unwrap_or(PostProcessor::Default),
    };
    let Built { model, notices } = build(cfg)?;
    writeln!(out, "  model : {}", cfg.model.name)?;
    for n in notices {
        writeln!(out, "  {n}")?;
    }
    for name in &cfg.exclude {
        if model.lookup(name).is_none() {
            let names: Vec<&str> = model.top_level().map(|d| d.name.as_str()).collect();
            let hint = suggest(name, names).map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
            return Err(RunError::Config(format!("--excludeFromOutput: model has no variable `{name}`{hint}")));
        }
    }
    if !matches!(cfg.engine, EngineConfig::Mcmc(_)) {
        if let Err(violations) = model.check_generative_normal_form() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(RunError::Model(format!(
                "engine {} needs a model in generative normal form: {}. Use --engine MCMC instead",
                cfg.engine.name(),
                list.join("; ")
            )));
        }
    }
    let folder = ExperimentFolder::create(&cfg.experiment)?;
    folder.write_arguments(&cfg.arguments)?;
    writeln!(out, "}} [ timeMillis: {} ]", phase.elapsed().as_millis())?;

    let phase = Instant::now();
    writeln!(out, "Inference {{")?;
    writeln!(out, "  engine : {}", cfg.engine.name())?;
    let model = Arc::new(model);
    let compressed = cfg.experiment.compressed;
    let draws = infer(&model, &cfg.engine, &folder.monitoring(), compressed, out)?;
    folder.write_log_normalization(&draws.log_normalization)?;
    for (name, v) in &draws.log_normalization {
        writeln!(out, "  logNormalizationEstimate({name}) : {v}")?;
    }
    let vars = output_variables(&model, &cfg.engine, &cfg.exclude);
    write_samples(&model, &vars, &draws, &folder.samples(), compressed)?;
    writeln!(out, "}} [ timeMillis: {} ]", phase.elapsed().as_millis())?;

    if post == PostProcessor::Default {
        let phase = Instant::now();
        writeln!(out, "Postprocess {{")?;
        if draws.states.len() < 2 {
            writeln!(out, "  fewer than 2 samples; summaries skipped")?;
        } else {
            let ess_dir = folder.subdir("ess")?;
            for &v in &vars {
                summarize(&model, v, &draws.states, &folder.summaries(), &ess_dir, compressed)?;
            }
        }
        writeln!(out, "}} [ timeMillis: {} ]", phase.elapsed().as_millis())?;
    }

    let execution_millis = start.elapsed().as_millis();
    let shown = std::fs::canonicalize(&folder.root).unwrap_or_else(|_| folder.root.clone());
    writeln!(out, "executionMilliseconds : {execution_millis}")?;
    writeln!(out, "outputFolder : {}", shown.display())?;
    Ok(RunOutcome {
        folder: folder.root,
        execution_millis,
        log_normalization: draws.log_normalization,
        n_samples: draws.states.len(),
    })
}

fn engine_err(e: impl ToString) -> RunError {
    RunError::Engine(e.to_string())
}

fn with_threads<T: Send>(n: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match n {
        Some(k) => Ok(rayon::ThreadPoolBuilder::new().num_threads(k).build().map_err(engine_err)?.install(f)),
        None => Ok(f()),
    }
}

fn infer(
    model: &Arc<Model>,
    engine: &EngineConfig,
    monitoring: &Path,
    compressed: bool,
    out: &mut dyn Write,
) -> Result<Draws, RunError> {
    match engine {
        EngineConfig::Pt(c) => {
            let res = run_nrpt(model, c).map_err(|e| match e {
                PtError::NotGenerative(v) => {
                    RunError::Model(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
                }
                other => engine_err(other),
            })?;
            for r in &res.rounds {
                writeln!(
                    out,
                    "  round {} : scans {}, globalBarrier {:.4}, restarts {}, logZ {:.4}",
                    r.round, r.n_scans, r.global_barrier, r.restarts, r.log_z_stepping_stone
                )?;
            }
            write_pt_monitoring(&res, monitoring, compressed)?;
            let mut estimates = vec![("steppingStone".to_string(), res.log_z_stepping_stone)];
            if let Some(ti) = res.log_z_thermodynamic {
                estimates.push(("thermodynamicIntegration".into(), ti));
            }
            Ok(Draws { states: res.samples, log_probability: None, log_normalization: estimates })
        }
        EngineConfig::Scm { config, threads } | EngineConfig::Ais { config, threads } => {
            let ais = matches!(engine, EngineConfig::Ais { .. });
            let res = with_threads(*threads, || {
                let r = Randomness::Seeded(config.seed);
                if ais {
                    run_ais(model, config, r)
                } else {
                    run_scm(model, config, r)
                }
            })?
            .map_err(engine_err)?;
            writeln!(out, "  temperatures : {}", res.temperatures.len())?;
            write_scm_monitoring(&res, monitoring, compressed)?;
            let states = equally_weighted(&res, config.seed);
            let name = if ais { "ais" } else { "scm" };
            Ok(Draws { states, log_probability: None, log_normalization: vec![(name.into(), res.log_z)] })
        }
        EngineConfig::Mcmc(c) => {
            let states = run_mcmc(model, c).map_err(engine_err)?;
            Ok(Draws { states, log_probability: None, log_normalization: Vec::new() })
        }
        EngineConfig::Forward { n_samples, seed } => {
            let mut rng = MersenneSource::new(*seed);
            let mut states = Vec::with_capacity(*n_samples as usize);
            for _ in 0..*n_samples {
                let mut s = model.initial_state();
                model.simulate_joint(&mut s, &mut rng).map_err(engine_err)?;
                states.push(s);
            }
            Ok(Draws { states, log_probability: None, log_normalization: Vec::new() })
        }
        EngineConfig::Exact { max_traces } => {
            let traces = enumerate_traces(*max_traces, |r| {
                let mut s = model.initial_state();
                model.forward_simulate(&mut s, r).map(|_| s)
            })
            .map_err(|e| engine_err(format!("exact enumeration failed: {e}")))?;
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut states = Vec::new();
            for (s, _) in traces {
                let s = s.map_err(engine_err)?;
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry(s.key()) {
                    e.insert(states.len());
                    states.push(s);
                }
            }
            let joint: Vec<f64> = states.iter().map(|s| model.log_joint(s)).collect();
            let keep: Vec<usize> = (0..states.len()).filter(|&i| joint[i] > f64::NEG_INFINITY).collect();
            let log_z = log_sum_exp(&keep.iter().map(|&i| joint[i]).collect::<Vec<_>>());
            if !log_z.is_finite() {
                return Err(engine_err("every enumerated state has zero probability"));
            }
            writeln!(out, "  states : {}", keep.len())?;
            let log_probability = keep.iter().map(|&i| joint[i] - log_z).collect();
            let states = keep.into_iter().map(|i| states[i].clone()).collect();
            Ok(Draws {
                states,
                log_probability: Some(log_probability),
                log_normalization: vec![("exact".into(), log_z)],
            })
        }
    }
}

/// Resamples a weighted population to equal weights.
fn equally_weighted(res: &ScmResult, seed: u64) -> Vec<State> {
    let w = &res.log_weights;
    if w.iter().all(|x| *x == w[0]) {
        return res.particles.clone();
    }
    let mut rng = MersenneSource::derived(seed, &[0x4f55_5450]);
    stratified_indices(w, w.len(), &mut rng).into_iter().map(|i| res.particles[i].clone()).collect()
}

fn table(dir: &Path, stem: &str, header: &[&str], rows: Vec<Vec<String>>, compressed: bool) -> io::Result<()> {
    let mut f = TidyFile::create(dir, stem, header, compressed)?;
    for r in rows {
        f.row(r)?;
    }
    f.finish().map(|_| ())
}

fn write_pt_monitoring(res: &PtResult, dir: &Path, compressed: bool) -> io::Result<()> {
    let mut lambda = Vec::new();
    let mut swaps = Vec::new();
    let mut restarts = Vec::new();
    let mut global = Vec::new();
    let mut log_z = Vec::new();
    for r in &res.rounds {
        let round = r.round.to_string();
        for (c, t) in r.schedule.iter().enumerate() {
            lambda.push(vec![round.clone(), c.to_string(), t.to_string()]);
        }
        for (c, x) in r.rejection_rates.iter().enumerate() {
            swaps.push(vec![round.clone(), c.to_string(), x.to_string()]);
        }
        restarts.push(vec![round.clone(), r.restarts.to_string()]);
        global.push(vec![round.clone(), r.global_barrier.to_string()]);
        log_z.push(vec![round.clone(), "steppingStone".into(), r.log_z_stepping_stone.to_string()]);
        if let Some(ti) = r.log_z_thermodynamic {
            log_z.push(vec![round.clone(), "thermodynamicIntegration".into(), ti.to_string()]);
        }
    }
    table(dir, "annealingParameters", &["round", "chain", "value"], lambda, compressed)?;
    table(dir, "swapStatistics", &["round", "chain", "rejectionRate"], swaps, compressed)?;
    table(dir, "actualTemperedRestarts", &["round", "count"], restarts, compressed)?;
    table(dir, "globalLambda", &["round", "value"], global, compressed)?;
    table(dir, "logNormalizationConstantProgress", &["round", "estimator", "value"], log_z, compressed)
}

fn write_scm_monitoring(res: &ScmResult, dir: &Path, compressed: bool) -> io::Result<()> {
    let series = |xs: Vec<String>| xs.into_iter().enumerate().map(|(i, x)| vec![i.to_string(), x]).collect();
    table(
        dir,
        "annealingParameters",
        &["iteration", "value"],
        series(res.temperatures.iter().map(ToString::to_string).collect()),
        compressed,
    )?;
    table(dir, "ess", &["iteration", "value"], series(res.ess.iter().map(ToString::to_string).collect()), compressed)?;
    table(
        dir,
        "resampling",
        &["iteration", "value"],
        series(res.resampled.iter().map(ToString::to_string).collect()),
        compressed,
    )
}

/// Top-level variables worth writing: anything latent, plus generated observations under Forward.
fn output_variables(model: &Model, engine: &EngineConfig, exclude: &[String]) -> Vec<VarId> {
    let generated: std::collections::HashSet<VarId> = if matches!(engine, EngineConfig::Forward { .. }) {
        model.factors().iter().filter(|f| f.generator.is_some()).flat_map(|f| f.output_vars.iter().copied()).collect()
    } else {
        Default::default()
    };
    let interesting = |v: VarId| model.variable(v).status == Status::Latent || generated.contains(&v);
    model
        .top_level()
        .filter(|d| !exclude.contains(&d.name))
        .filter(|d| interesting(d.id) || d.elements.iter().any(|e| interesting(*e)))
        .map(|d| d.id)
        .collect()
}

fn write_samples(model: &Model, vars: &[VarId], draws: &Draws, dir: &Path, compressed: bool) -> Result<(), RunError> {
    for &v in vars {
        let decl = model.variable(v);
        let mut header = key_columns(decl.kind);
        header.push("sample");
        header.push("value");
        if draws.log_probability.is_some() {
            header.push("logProbability");
        }
        let mut f = TidyFile::create(dir, &decl.name, &header, compressed)?;
        for (i, s) in draws.states.iter().enumerate() {
            match &draws.log_probability {
                None => write_tidy(model, v, s, i as u64, f.writer())?,
                Some(lp) => {
                    for (keys, value) in tidy_values(model, v, s) {
                        let mut row: Vec<String> = keys.iter().map(ToString::to_string).collect();
                        row.extend([i.to_string(), value.to_string(), lp[i].to_string()]);
                        f.row(row)?;
                    }
                }
            }
        }
        f.finish()?;
    }
    let mut f = TidyFile::create(dir, "logDensity", &["sample", "value"], compressed)?;
    for (i, s) in draws.states.iter().enumerate() {
        f.row([i.to_string(), model.log_joint(s).to_string()])?;
    }
    f.finish()?;
    Ok(())
}

fn summarize(
    model: &Model,
    v: VarId,
    states: &[State],
    summaries: &Path,
    ess_dir: &Path,
    compressed: bool,
) -> Result<(), RunError> {
    let decl = model.variable(v);
    let mut series: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    for s in states {
        for (keys, value) in tidy_values(model, v, s) {
            series.entry(keys).or_default().push(value.as_f64());
        }
    }
    let keys = key_columns(decl.kind);
    let mut header = keys.clone();
    header.extend(Summary::HEADER);
    let mut f = TidyFile::create(summaries, &decl.name, &header, compressed)?;
    let mut ess_header = keys;
    ess_header.push("value");
    let mut e = TidyFile::create(ess_dir, &decl.name, &ess_header, compressed)?;
    for (k, xs) in &series {
        let key_cells = k.iter().map(ToString::to_string);
        if let Ok(s) = Summary::of(xs) {
            f.row(key_cells.clone().chain(s.values().iter().map(ToString::to_string)))?;
        }
        if let Ok(ess) = ess_batch(xs) {
            e.row(key_cells.chain(std::iter::once(ess.to_string())))?;
        }
    }
    f.finish()?;
    e.finish()?;
    Ok(())
}
