use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use mcdstat::model::Point;
use mcdstat::{Error, Problem};

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Invalid(String),
    /// Anything else: exit code 1.
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time_ms: u128,
}

/// Collects input hashes while a command runs.
pub struct Run {
    start: Instant,
    inputs: Vec<InputHash>,
    pub seed: Option<u64>,
}

impl Run {
    pub fn new() -> Self {
        Run {
            start: Instant::now(),
            inputs: Vec::new(),
            seed: None,
        }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<String> {
        let bytes = fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn json(&mut self, path: &Path) -> CliResult<Value> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn problem(&mut self, path: &Path) -> CliResult<Problem> {
        let v = self.json(path)?;
        Problem::from_json(&v).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn point(&mut self, path: &Path) -> CliResult<Point<f64>> {
        let v = self.json(path)?;
        Point::from_json(&v).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn note_dir(&mut self, dir: &Path) -> CliResult<()> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            self.read(&f)?;
        }
        Ok(())
    }

    pub fn manifest(self) -> RunManifest {
        RunManifest {
            command: std::env::args().skip(1).collect(),
            inputs: self.inputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: self.start.elapsed().as_millis(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    manifest: RunManifest,
    report: &'a R,
}

/// Writes `{manifest, report}` as pretty JSON to `out` or stdout.
pub fn emit<R: Serialize>(run: Run, report: &R, out: Option<&Path>) -> CliResult<()> {
    let env = Envelope {
        manifest: run.manifest(),
        report,
    };
    let text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Failed(e.to_string()))?;
    write_text(&text, out)
}

pub fn write_text(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| CliError::Failed(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Comma-separated list of numbers given on the command line.
#[derive(Clone, Debug)]
pub struct List(pub Vec<f64>);

pub fn parse_list(s: &str) -> Result<List, String> {
    if s.trim().is_empty() {
        return Ok(List(Vec::new()));
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(List)
}
