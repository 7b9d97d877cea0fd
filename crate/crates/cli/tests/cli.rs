use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use tempo_cli::args::{EngineConfig, PostProcessor};
use tempo_cli::data::{read_plate_data, read_values, PlateSpec, PlatedSpec};
use tempo_cli::{parse_args, run_experiment, run_experiment_with_model, Command, RunConfig};
use tempo_core::dsl::Binding;
use tempo_core::model::{FactorSpec, ModelBuilder, Status, Value, VarKind};

fn config(args: &[&str]) -> RunConfig {
    match parse_args(args).unwrap() {
        Command::Run(c) => *c,
        Command::Help(_) => panic!("unexpected help"),
    }
}

fn err(args: &[&str]) -> String {
    parse_args(args).unwrap_err().to_string()
}

/// Parses `args` with output redirected to a fresh unmanaged folder under `dir`.
fn config_in(dir: &Path, args: &[&str]) -> RunConfig {
    let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    all.extend([
        "--experimentConfigs.resultsFolder".into(),
        dir.join("out").display().to_string(),
        "--experimentConfigs.managedExecutionFolder".into(),
        "false".into(),
    ]);
    match parse_args(&all).unwrap() {
        Command::Run(c) => *c,
        Command::Help(_) => panic!("unexpected help"),
    }
}

fn run(cfg: &RunConfig) -> (PathBuf, String) {
    let mut log = Vec::new();
    let outcome = run_experiment(cfg, &mut log).unwrap();
    (outcome.folder, String::from_utf8(log).unwrap())
}

fn files(dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in walk(dir) {
        out.insert(e.strip_prefix(dir).unwrap().display().to_string());
    }
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

/// Every CSV under `dir` read with a strict reader; returns (path, header, rows).
fn strict_csvs(dir: &Path) -> Vec<(PathBuf, Vec<String>, Vec<Vec<String>>)> {
    let mut out = Vec::new();
    for p in walk(dir) {
        let name = p.display().to_string();
        let text = if name.ends_with(".csv.gz") {
            let mut s = String::new();
            flate2::read::GzDecoder::new(fs::File::open(&p).unwrap()).read_to_string(&mut s).unwrap();
            s
        } else if name.ends_with(".csv") {
            fs::read_to_string(&p).unwrap()
        } else {
            continue;
        };
        let mut r = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
        out.push((p, header, rows));
    }
    out
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect())
}

const DOOMSDAY: [&str; 8] = ["--model", "jss.Doomsday", "--model.rate", "1.0", "--model.y", "1.2", "--model.z", "NA"];

#[test]
fn documented_invocations_parse() {
    let c = config(&DOOMSDAY);
    assert_eq!(c.model_args.values["rate"], Binding::Scalar(1.0));
    assert_eq!(c.model_args.values["y"], Binding::Scalar(1.2));
    assert_eq!(c.model_args.values["z"], Binding::Na);
    assert!(matches!(c.engine, EngineConfig::Pt(_)));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "PT", "--engine.nChains", "36", "--engine.nScans", "30000"]);
    let EngineConfig::Pt(pt) = config(&args).engine else { panic!("not PT") };
    assert_eq!((pt.n_chains, pt.n_scans), (36, 30000));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "SCM", "--engine.resamplingESSThreshold", "0.4"]);
    let EngineConfig::Scm { config: scm, .. } = config(&args).engine else { panic!("not SCM") };
    assert_eq!(scm.ess_threshold, 0.4);
}

#[test]
fn engine_options_map_to_configs() {
    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine.nThreads", "Fixed", "--engine.nThreads.number", "4", "--engine.random", "7"]);
    let EngineConfig::Pt(pt) = config(&args).engine else { panic!() };
    assert_eq!((pt.n_threads, pt.seed), (Some(4), 7));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "SCM", "--engine.temperatureSchedule", "FixedTemperatureSchedule"]);
    args.extend(["--engine.temperatureSchedule.nTemperatures", "5", "--engine.resamplingScheme", "MULTINOMIAL"]);
    let EngineConfig::Scm { config: scm, threads } = config(&args).engine else { panic!() };
    assert_eq!(threads, None);
    assert_eq!(scm.schedule, tempo_core::scm::TemperatureSchedule::uniform(5));
    assert_eq!(scm.scheme, tempo_core::scm::ResamplingScheme::Multinomial);

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "MCMC", "--engine.nThreads", "Single"]);
    assert!(err(&args).contains("unknown option --engine.nThreads"));
}

#[test]
fn parse_errors_are_explained() {
    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine.nChain", "3"]);
    assert_eq!(err(&args), "unknown option --engine.nChain (did you mean `--engine.nChains`?)");

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--model.rat", "3"]);
    assert!(err(&args).contains("did you mean `--model.rate`"));

    assert_eq!(err(&["--model", "Doomsday", "--model.y", "1"]), "missing required option --model.rate");
    assert_eq!(err(&["--engine", "PT"]), "missing required option --model");
    assert!(err(&["--model", "Doomsday", "--model.rate", "fast"]).starts_with("cannot parse `fast` for --model.rate"));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine.nChains", "many"]);
    assert!(err(&args).contains("expected a non-negative integer"));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "Gibbs"]);
    assert!(err(&args).starts_with("unknown engine `Gibbs`"));

    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine.nThreads", "Dynamic"]);
    assert!(err(&args).contains("expected one of Max, Single, Fixed"));

    assert!(err(&["--model", "Doomsdy"]).contains("did you mean `Doomsday`"));
    assert!(err(&["stray"]).contains("unexpected argument"));
    assert!(err(&["--model", "Doomsday", "--model", "GMM"]).contains("more than once"));
}

#[test]
fn help_is_contextual() {
    let Command::Help(pt) = parse_args(["--help", "--model", "Doomsday"]).unwrap() else { panic!() };
    assert!(pt.contains("--model.rate") && pt.contains("--engine.nChains"));
    assert!(!pt.contains("--engine.nParticles "));
    let Command::Help(scm) = parse_args(["--engine", "SCM", "--help"]).unwrap() else { panic!() };
    assert!(scm.contains("--engine.resamplingESSThreshold") && !scm.contains("--engine.nChains"));
    assert!(!scm.contains("--model.rate"));
}

#[test]
fn values_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.txt");
    fs::write(&path, "1.5\nNA\n\n-2\n").unwrap();
    assert_eq!(read_values(&path).unwrap(), Binding::List(vec![Some(1.5), None, Some(-2.0)]));
    let c = config(&["--model", "GMM", "--model.y", "file", path.to_str().unwrap()]);
    assert_eq!(c.model_args.values["y"], Binding::List(vec![Some(1.5), None, Some(-2.0)]));
    fs::write(&path, "1.5\noops\n").unwrap();
    let e = err(&["--model", "GMM", "--model.y", "file", path.to_str().unwrap()]);
    assert!(e.contains("y.txt:2"), "{e}");
    let c = config(&["--model", "GMM", "--model.y", "1", "2", "3"]);
    assert_eq!(c.model_args.values["y"], Binding::List(vec![Some(1.0), Some(2.0), Some(3.0)]));
}

#[test]
fn phase_log_and_folder_layout() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let mut args: Vec<String> = DOOMSDAY.iter().map(|s| s.to_string()).collect();
    args.extend(["--engine.nScans", "200", "--experimentConfigs.resultsFolder", results.to_str().unwrap()].map(String::from));
    let Command::Run(cfg) = parse_args(&args).unwrap() else { panic!() };
    let (first, log) = run(&cfg);
    let (second, _) = run(&cfg);
    assert_ne!(first, second);

    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "Preprocess {");
    for phase in ["Inference {", "Postprocess {"] {
        assert!(lines.contains(&phase), "{log}");
    }
    assert!(lines.iter().filter(|l| l.starts_with("} [ timeMillis: ")).count() == 3);
    let n = lines.len();
    assert!(lines[n - 2].starts_with("executionMilliseconds : "));
    assert!(lines[n - 2]["executionMilliseconds : ".len()..].parse::<u128>().is_ok());
    let shown = lines[n - 1].strip_prefix("outputFolder : ").unwrap();
    assert_eq!(fs::canonicalize(shown).unwrap(), fs::canonicalize(&first).unwrap());

    let name = first.file_name().unwrap().to_str().unwrap();
    let stem = name.strip_suffix(".exec").unwrap();
    let (stamp, token) = stem.split_at(stem.len() - 9);
    assert!(chrono::NaiveDateTime::parse_from_str(stamp, "%Y-%m-%d-%H-%M-%S").is_ok(), "{stamp}");
    assert!(token.starts_with('-') && token[1..].chars().all(|c| c.is_ascii_alphanumeric()));
    assert_eq!(first.parent().unwrap(), results.join("all"));
    let latest = fs::read_link(results.join("latest")).unwrap();
    assert_eq!(results.join(latest), second);

    let got = files(&first);
    for f in [
        "arguments.tsv",
        "logNormalizationEstimate.csv",
        "samples/z.csv",
        "samples/logDensity.csv",
        "summaries/z.csv",
        "monitoring/annealingParameters.csv",
        "monitoring/swapStatistics.csv",
        "monitoring/actualTemperedRestarts.csv",
        "monitoring/globalLambda.csv",
        "monitoring/logNormalizationConstantProgress.csv",
    ] {
        assert!(got.contains(f), "missing {f} in {got:?}");
    }
    assert!(!got.contains("samples/y.csv") && !got.contains("samples/rate.csv"));
    let args = fs::read_to_string(first.join("arguments.tsv")).unwrap();
    assert!(args.contains("model.z\tNA\n") && args.contains("engine.nScans\t200\n"));

    let (header, rows) = csv_rows(&first.join("samples/z.csv"));
    assert_eq!(header, ["sample", "value"]);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 1.2));
    let (header, rows) = csv_rows(&first.join("summaries/z.csv"));
    assert_eq!(header, ["mean", "sd", "min", "median", "max", "HDI.lower", "HDI.upper"]);
    assert_eq!(rows.len(), 1);
    let (header, _) = csv_rows(&first.join("logNormalizationEstimate.csv"));
    assert_eq!(header, ["estimator", "value"]);
}

#[test]
fn forward_single_draw() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine", "Forward", "--engine.nSamples", "1"]);
    let (folder, log) = run(&config_in(dir.path(), &args));
    assert!(log.contains("fewer than 2 samples"));
    for var in ["z", "y"] {
        let (header, rows) = csv_rows(&folder.join(format!("samples/{var}.csv")));
        assert_eq!(header, ["sample", "value"]);
        assert_eq!(rows.len(), 1);
    }
    let (_, z) = csv_rows(&folder.join("samples/z.csv"));
    let (_, y) = csv_rows(&folder.join("samples/y.csv"));
    assert!(y[0][1].parse::<f64>().unwrap() <= z[0][1].parse::<f64>().unwrap());
}

#[test]
fn exact_enumerates_two_bernoullis() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("Coins.bl");
    fs::write(
        &src,
        "model Coins {\n  random IntVar a\n  random IntVar b\n  laws {\n    a ~ Bernoulli(0.3)\n    b | a ~ Bernoulli(0.2 + 0.5 * a)\n  }\n}\n",
    )
    .unwrap();
    let args = ["--model", src.to_str().unwrap(), "--model.a", "NA", "--model.b", "NA", "--engine", "Exact"];
    let cfg = config_in(dir.path(), &args);
    assert_eq!(cfg.post_processor, None);
    let (folder, log) = run(&cfg);
    assert!(!log.contains("Postprocess"));
    let (header, rows) = csv_rows(&folder.join("samples/a.csv"));
    assert_eq!(header, ["sample", "value", "logProbability"]);
    assert_eq!(rows.len(), 4);
    let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let (_, b) = csv_rows(&folder.join("samples/b.csv"));
    let expect = |a: &str, bv: &str| {
        let pa: f64 = if a == "1" { 0.3 } else { 0.7 };
        let pb1 = 0.2 + 0.5 * a.parse::<f64>().unwrap();
        pa * if bv == "1" { pb1 } else { 1.0 - pb1 }
    };
    let keys: BTreeSet<(String, String)> = rows.iter().zip(&b).map(|(x, y)| (x[1].clone(), y[1].clone())).collect();
    assert_eq!(keys.len(), 4);
    for (x, y) in rows.iter().zip(&b) {
        assert!((x[2].parse::<f64>().unwrap().exp() - expect(&x[1], &y[1])).abs() < 1e-12);
    }

    let mut refused = args.to_vec();
    refused.extend(["--postProcessor", "DefaultPostProcessor"]);
    let e = run_experiment(&config_in(dir.path(), &refused), &mut Vec::new()).unwrap_err();
    assert!(e.to_string().contains("should not be used"), "{e}");

    let cont = run_experiment(&config_in(dir.path(), &["--model", "Doomsday", "--model.rate", "1", "--model.y", "1.2", "--model.z", "NA", "--engine", "Exact"]), &mut Vec::new())
        .unwrap_err();
    assert!(cont.to_string().contains("continuous"), "{cont}");
}

#[test]
fn non_generative_models_point_to_mcmc() {
    let build = || {
        let mut b = ModelBuilder::new();
        let x = b.add_variable("x", VarKind::Real, Status::Latent, Some(Value::Real(0.5))).unwrap();
        b.add_factor(FactorSpec::new("halfNormalOnX", vec![x], move |s| {
            let v = s.real(x);
            if v < 0.0 {
                f64::NEG_INFINITY
            } else {
                -0.5 * v * v
            }
        })
        .outgoing([x]))
        .unwrap();
        b.build()
    };
    let dir = tempfile::tempdir().unwrap();
    for engine in ["PT", "SCM", "Forward"] {
        let cfg = config_in(dir.path(), &["--model", "HMM", "--engine", engine]);
        let e = run_experiment_with_model(&cfg, build(), &mut Vec::new()).unwrap_err().to_string();
        assert!(e.contains("halfNormalOnX") && e.contains("x") && e.contains("--engine MCMC"), "{e}");
    }
    let cfg = config_in(dir.path(), &["--model", "HMM", "--engine", "MCMC", "--engine.nScans", "2000"]);
    let out = run_experiment_with_model(&cfg, build(), &mut Vec::new()).unwrap();
    let (_, rows) = csv_rows(&out.folder.join("samples/x.csv"));
    let xs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    // Half-normal mean sqrt(2 / pi) = 0.798.
    assert!(xs.iter().all(|x| *x >= 0.0) && (mean - 0.798).abs() < 0.15, "{mean}");
}

fn mixture_args(dir: &Path) -> Vec<String> {
    let data = dir.join("obs.csv");
    let mut text = String::from("id,value,ignored\n");
    for (i, y) in tempo_core::models::gmm_synthetic(20, 3).iter().enumerate() {
        text.push_str(&format!("{i},{y},x\n"));
    }
    fs::write(&data, text).unwrap();
    ["--model", "jss.gmm.MixtureModel", "--model.data", data.to_str().unwrap(), "--model.y.name", "value"]
        .into_iter()
        .chain(["--engine.nScans", "64", "--engine.nChains", "4"])
        .map(String::from)
        .collect()
}

#[test]
fn exclude_removes_exactly_the_named_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = mixture_args(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (full, log) = run(&config_in(&a, &base.iter().map(String::as_str).collect::<Vec<_>>()));
    assert!(log.contains("model : jss.gmm.MixtureModel"));
    let mut excl = base.clone();
    excl.extend(["--excludeFromOutput", "z", "sd"].map(String::from));
    let (partial, _) = run(&config_in(&b, &excl.iter().map(String::as_str).collect::<Vec<_>>()));
    let removed: BTreeSet<String> = files(&full).difference(&files(&partial)).cloned().collect();
    let expect: BTreeSet<String> =
        ["samples/z.csv", "samples/sd.csv", "summaries/z.csv", "summaries/sd.csv", "ess/z.csv", "ess/sd.csv"]
            .map(String::from)
            .into();
    assert_eq!(removed, expect);
    assert!(files(&partial).is_subset(&files(&full)));
    let (header, rows) = csv_rows(&full.join("samples/pi.csv"));
    assert_eq!(header, ["index", "sample", "value"]);
    assert_eq!(rows.len(), 2 * 33);
    let (header, rows) = csv_rows(&full.join("summaries/mu.csv"));
    assert_eq!(header[0], "index");
    assert_eq!(rows.len(), 2);

    let mut bad = base.clone();
    bad.extend(["--excludeFromOutput", "zz"].map(String::from));
    let e = run_experiment(&config_in(dir.path(), &bad.iter().map(String::as_str).collect::<Vec<_>>()), &mut Vec::new())
        .unwrap_err();
    assert!(e.to_string().contains("`zz`"));
}

#[test]
fn compressed_output_and_strict_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = mixture_args(dir.path());
    args.extend(["--experimentConfigs.tabularWriter.compressed", "true"].map(String::from));
    let (folder, _) = run(&config_in(dir.path(), &args.iter().map(String::as_str).collect::<Vec<_>>()));
    let got = files(&folder);
    assert!(got.contains("samples/mu.csv.gz") && !got.contains("samples/mu.csv"));
    let tables = strict_csvs(&folder);
    assert!(tables.len() > 10);
    let (_, header, rows) = tables.iter().find(|(p, ..)| p.ends_with("samples/mu.csv.gz")).unwrap();
    assert_eq!(header, &["index", "sample", "value"]);
    assert_eq!(rows.len(), 2 * 33);
}

#[test]
fn every_engine_writes_strict_csv() {
    let dir = tempfile::tempdir().unwrap();
    for (i, engine) in ["PT", "SCM", "AIS", "MCMC", "Forward"].into_iter().enumerate() {
        let mut args = vec!["--model", "CompositeModel", "--engine", engine];
        match engine {
            "PT" | "MCMC" => args.extend(["--engine.nScans", "50"]),
            "SCM" => args.extend(["--engine.nParticles", "50"]),
            "AIS" => args.extend(["--engine.nParticles", "20", "--engine.temperatureSchedule.nTemperatures", "5"]),
            _ => args.extend(["--engine.nSamples", "10"]),
        }
        let (folder, _) = run(&config_in(&dir.path().join(i.to_string()), &args));
        for (p, header, rows) in strict_csvs(&folder) {
            let no_evidence = matches!(engine, "MCMC" | "Forward") && p.ends_with("logNormalizationEstimate.csv");
            assert!(!header.is_empty() && (no_evidence || !rows.is_empty()), "{} is empty", p.display());
        }
        let (header, rows) = csv_rows(&folder.join("samples/permutation.csv"));
        assert_eq!(header, ["index", "permutation_index", "sample", "value"]);
        assert_eq!(rows.len() % 3, 0);
        let (header, rows) = csv_rows(&folder.join("summaries/permutation.csv"));
        assert_eq!(header[..3], ["index", "permutation_index", "mean"]);
        assert_eq!(rows.len(), 3);
    }
}

#[test]
fn dsl_data_columns_and_notices() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pois.csv");
    fs::write(&data, "x,count\n0.1,1\n0.5,NA\n0.9,\n1.3,5\n").unwrap();
    let args = [
        "--model", "Regression", "--model.a", "NA", "--model.b", "NA", "--model.data", data.to_str().unwrap(),
        "--model.y.name", "count", "--engine.nScans", "32",
    ];
    let (folder, log) = run(&config_in(dir.path(), &args));
    let (_, rows) = csv_rows(&folder.join("samples/y.csv"));
    // Entries 1 and 2 are latent, the others observed and fixed.
    let idx: BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(idx, ["0", "1", "2", "3"].into());
    for r in rows.iter().filter(|r| r[0] == "0") {
        assert_eq!(r[2], "1");
    }
    assert!(!log.contains("not found"));
    let missing = ["--model", "Regression", "--model.a", "NA", "--model.b", "NA", "--model.data", data.to_str().unwrap()];
    let e = run_experiment(&config_in(dir.path(), &missing), &mut Vec::new()).unwrap_err().to_string();
    assert!(e.contains("`y`"), "{e}");
}

#[test]
fn post_processor_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = DOOMSDAY.to_vec();
    args.extend(["--engine.nScans", "50", "--postProcessor", "NoPostProcessor"]);
    let cfg = config_in(dir.path(), &args);
    assert_eq!(cfg.post_processor, Some(PostProcessor::None));
    let (folder, log) = run(&cfg);
    assert!(!log.contains("Postprocess"));
    assert!(fs::read_dir(folder.join("summaries")).unwrap().next().is_none());
}

fn rockets(dir: &Path) -> PathBuf {
    let p = dir.join("rockets.csv");
    fs::write(
        &p,
        "Country,Rocket,nLaunches,nFails,Comment\n\
         USA,Atlas,10,1,ok\n\
         USA,Delta,5,0,\n\
         Russia,Soyuz,40,2,\"many, many\"\n",
    )
    .unwrap();
    p
}

#[test]
fn plate_reader_rockets() {
    let dir = tempfile::tempdir().unwrap();
    let path = rockets(dir.path());
    let plates = [
        PlateSpec { name: "countries".into(), max_size: None },
        PlateSpec { name: "rockets".into(), max_size: None },
    ];
    let plated = |name: &str| PlatedSpec { name: name.into(), plates: vec!["countries".into(), "rockets".into()] };
    let overrides = [("countries", "Country"), ("rockets", "Rocket")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let table =
        read_plate_data(&path, &plates, &[plated("nFails"), plated("nLaunches"), plated("prob")], &overrides).unwrap();
    assert_eq!(table.plates["countries"], ["USA", "Russia"]);
    assert_eq!(table.plates["rockets"], ["Atlas", "Delta", "Soyuz"]);
    assert_eq!(table.lookup("nFails", &["USA", "Atlas"]), Some("1"));
    assert_eq!(table.lookup("nFails", &["Russia", "Soyuz"]), Some("2"));
    assert_eq!(table.lookup("nFails", &["Russia", "Atlas"]), None);
    assert!(table.is_observed("nFails") && !table.is_observed("prob"));
    assert_eq!(table.notices.len(), 1);
    assert!(table.notices[0].starts_with("prob not found") && table.notices[0].ends_with("assumed to be latent"));
    assert_eq!(
        table.binding(&plated("nFails")).unwrap(),
        Binding::List(vec![Some(1.0), Some(0.0), None, None, None, Some(2.0)])
    );
    assert_eq!(table.binding(&plated("prob")).unwrap(), Binding::List(vec![None; 6]));
}

#[test]
fn plate_reader_sizes_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = rockets(dir.path());
    let none = Default::default();
    let sized = [PlateSpec { name: "p".into(), max_size: Some(3) }];
    let t = read_plate_data(&path, &sized, &[], &none).unwrap();
    assert_eq!(t.plates["p"], ["0", "1", "2"]);

    let bare = [PlateSpec { name: "p".into(), max_size: None }];
    let e = read_plate_data(&path, &bare, &[], &none).unwrap_err().to_string();
    assert!(e.contains("neither a data column nor a maxSize"), "{e}");

    let e = read_plate_data(&dir.path().join("nope.csv"), &sized, &[], &none).unwrap_err().to_string();
    assert!(e.contains("nope.csv"), "{e}");

    let stray = PlatedSpec { name: "nFails".into(), plates: vec!["q".into()] };
    assert!(read_plate_data(&path, &sized, &[stray], &none).is_err());
}
