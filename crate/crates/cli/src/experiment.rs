//! Execution folders: `results/all/<timestamp>-<token>.exec` plus a `results/latest` link.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::distributions::Alphanumeric;
use rand::Rng;

use crate::args::ExperimentConfig;

pub const SAMPLES: &str = "samples";
pub const MONITORING: &str = "monitoring";
pub const SUMMARIES: &str = "summaries";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentFolder {
    pub root: PathBuf,
}

impl ExperimentFolder {
    pub fn create(cfg: &ExperimentConfig) -> io::Result<ExperimentFolder> {
        let root = if cfg.managed {
            let all = cfg.results_folder.join("all");
            fs::create_dir_all(&all)?;
            let stamp = chrono::Local::now().format("%Y-%m-%d-%H-%M-%S");
            loop {
                let token: String = rand::thread_rng().sample_iter(&Alphanumeric).take(8).map(char::from).collect();
                let dir = all.join(format!("{stamp}-{token}.exec"));
                match fs::create_dir(&dir) {
                    Ok(()) => break dir,
                    Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                    Err(e) => return Err(e),
                }
            }
        } else {
            fs::create_dir_all(&cfg.results_folder)?;
            cfg.results_folder.clone()
        };
        for sub in [SAMPLES, MONITORING, SUMMARIES] {
            fs::create_dir_all(root.join(sub))?;
        }
        if cfg.managed {
            link_latest(&cfg.results_folder, &root)?;
        }
        Ok(ExperimentFolder { root })
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join(SAMPLES)
    }

    pub fn monitoring(&self) -> PathBuf {
        self.root.join(MONITORING)
    }

    pub fn summaries(&self) -> PathBuf {
        self.root.join(SUMMARIES)
    }

    /// Creates (if needed) and returns a subdirectory of the folder.
    pub fn subdir(&self, name: &str) -> io::Result<PathBuf> {
        let p = self.root.join(name);
        fs::create_dir_all(&p)?;
        Ok(p)
    }

    pub fn write_arguments(&self, args: &[(String, String)]) -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(self.root.join("arguments.tsv"))?);
        for (k, v) in args {
            writeln!(f, "{k}\t{v}")?;
        }
        f.flush()
    }

    pub fn write_log_normalization(&self, estimates: &[(String, f64)]) -> io::Result<()> {
        let mut w = csv::Writer::from_path(self.root.join("logNormalizationEstimate.csv"))?;
        w.write_record(["estimator", "value"])?;
        for (name, v) in estimates {
            w.write_record([name.clone(), v.to_string()])?;
        }
        w.flush()
    }
}

#[cfg(unix)]
fn link_latest(results: &Path, target: &Path) -> io::Result<()> {
    let link = results.join("latest");
    // Concurrent runs may race on the link; the last writer wins.
    match fs::remove_file(&link) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
        _ => {}
    }
    let rel = target.strip_prefix(results).unwrap_or(target);
    match std::os::unix::fs::symlink(rel, link) {
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(()),
        r => r,
    }
}

#[cfg(not(unix))]
fn link_latest(_: &Path, _: &Path) -> io::Result<()> {
    Ok(())
}
