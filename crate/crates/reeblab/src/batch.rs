//! Concurrent execution of independent experiments.
//!
//! Each config runs sequentially on one worker and writes into its own
//! directory, so workers share nothing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use crate::config::load_config;
use crate::error::{LabError, Result};
use crate::experiments::{from_error, run_experiment, Outcome, EXIT_FAIL, EXIT_OK, EXIT_USAGE};

/// Config files matching `pattern`, sorted.
pub fn expand(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| LabError::Config(format!("bad glob {pattern:?}: {e}")))?;
    let mut files: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    files.sort();
    Ok(files)
}

/// One output directory per config: `<root>/<stem>`, where `root` is `out`
/// or the config's own `output_dir`. Repeated stems get a numeric suffix.
fn assign_dirs(files: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    files
        .iter()
        .map(|f| {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment").to_string();
            let mut name = stem.clone();
            let mut i = 1;
            while !seen.insert(name.clone()) {
                i += 1;
                name = format!("{stem}-{i}");
            }
            name
        })
        .collect()
}

fn run_one(config: &Path, name: &str, out: Option<&Path>) -> (PathBuf, Outcome) {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return (PathBuf::new(), from_error(&e)),
    };
    let dir = out.unwrap_or(&cfg.output_dir).join(name);
    log::info!("{} -> {}", config.display(), dir.display());
    let outcome = run_experiment(&cfg, &dir);
    (dir, outcome)
}

/// Runs every config matching `pattern` on `jobs` workers (0 = all cores).
pub fn run_batch(pattern: &str, jobs: usize, out: Option<&Path>) -> Outcome {
    let files = match expand(pattern) {
        Ok(f) => f,
        Err(e) => return from_error(&e),
    };
    if files.is_empty() {
        return Outcome {
            exit_code: EXIT_USAGE,
            report: json!({ "error": format!("no config files match {pattern:?}") }),
        };
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            return Outcome {
                exit_code: EXIT_USAGE,
                report: json!({ "error": e.to_string() }),
            }
        }
    };
    let names = assign_dirs(&files);
    let results: Vec<(PathBuf, Outcome)> = pool.install(|| {
        files
            .par_iter()
            .zip(names.par_iter())
            .map(|(f, n)| run_one(f, n, out))
            .collect()
    });

    let failed = results.iter().filter(|(_, o)| !o.passed()).count();
    let experiments: Vec<_> = files
        .iter()
        .zip(&results)
        .map(|(f, (dir, o))| {
            json!({
                "config": f.display().to_string(),
                "output_dir": dir.display().to_string(),
                "exit_code": o.exit_code,
                "report": o.report,
            })
        })
        .collect();
    Outcome {
        exit_code: if failed == 0 { EXIT_OK } else { EXIT_FAIL },
        report: json!({
            "experiments": experiments,
            "passed": files.len() - failed,
            "failed": failed,
        }),
    }
}
