//! Run directories: versioned checkpoints swapped in atomically, the
//! newline-delimited iteration log, and resume.
//!
//! Layout of a run directory:
//!
//! ```text
//! checkpoint/{bank,tree,concepts,rng,config}.json
//! iterations.ndjson
//! workspace/
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::orchestrator::{
    build_components, Discovery, DiscoveryConfig, DiscoveryState, IterationReport, OrchestratorError, RunSummary,
};
use crate::rng::RunRng;

pub const STATE_VERSION: u32 = 1;

const CHECKPOINT: &str = "checkpoint";
const STAGING: &str = "checkpoint.tmp";
const PREVIOUS: &str = "checkpoint.old";
const LOG: &str = "iterations.ndjson";
const WORKSPACE: &str = "workspace";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: corrupt state: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("{}: state version {found}, this build reads version {STATE_VERSION}", path.display())]
    Version { path: PathBuf, found: u64 },
    #[error("no checkpoint in {}", .0.display())]
    Missing(PathBuf),
    #[error("{} already holds a run", .0.display())]
    Exists(PathBuf),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct Document<'a, T> {
    version: u32,
    data: &'a T,
}

#[derive(Serialize, Deserialize)]
struct Position {
    iteration: u32,
    rng_state: RunRng,
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn sync_dir(path: &Path) -> Result<(), PersistError> {
    File::open(path).and_then(|d| d.sync_all()).map_err(io_err(path))
}

fn write_document<T: Serialize>(dir: &Path, name: &str, data: &T) -> Result<(), PersistError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&Document {
        version: STATE_VERSION,
        data,
    })
    .map_err(|e| PersistError::Corrupt {
        path: path.clone(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_synced(&path, text.as_bytes())
}

fn read_document<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T, PersistError> {
    let path = dir.join(name);
    let corrupt = |message: String| PersistError::Corrupt {
        path: path.clone(),
        message,
    };
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let version = doc
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("missing version field".into()))?;
    if version != STATE_VERSION as u64 {
        return Err(PersistError::Version {
            path: path.clone(),
            found: version,
        });
    }
    let data = doc
        .get_mut("data")
        .map(serde_json::Value::take)
        .ok_or_else(|| corrupt("missing data field".into()))?;
    serde_path_to_error::deserialize(data).map_err(|e| corrupt(e.to_string()))
}

/// Writes a complete checkpoint into the staging directory without making
/// it current.
pub fn stage_state(state: &DiscoveryState, run_dir: &Path) -> Result<PathBuf, PersistError> {
    let staging = run_dir.join(STAGING);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io_err(&staging))?;
    write_document(&staging, "config.json", &state.config)?;
    write_document(&staging, "tree.json", &state.tree)?;
    write_document(&staging, "bank.json", &state.bank)?;
    write_document(&staging, "concepts.json", &state.concept_index)?;
    write_document(
        &staging,
        "rng.json",
        &Position {
            iteration: state.iteration,
            rng_state: state.rng_state.clone(),
        },
    )?;
    sync_dir(&staging)?;
    Ok(staging)
}

/// Replaces the current checkpoint. A crash at any point leaves either the
/// previous or the new checkpoint loadable.
pub fn save_state(state: &DiscoveryState, run_dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let staging = stage_state(state, run_dir)?;
    let current = run_dir.join(CHECKPOINT);
    let previous = run_dir.join(PREVIOUS);
    if current.exists() {
        if previous.exists() {
            fs::remove_dir_all(&previous).map_err(io_err(&previous))?;
        }
        fs::rename(&current, &previous).map_err(io_err(&current))?;
    }
    fs::rename(&staging, &current).map_err(io_err(&staging))?;
    sync_dir(run_dir)?;
    if previous.exists() {
        fs::remove_dir_all(&previous).map_err(io_err(&previous))?;
    }
    Ok(())
}

/// Directory holding the checkpoint a loader should read.
pub fn checkpoint_dir(run_dir: &Path) -> Result<PathBuf, PersistError> {
    [CHECKPOINT, PREVIOUS]
        .iter()
        .map(|name| run_dir.join(name))
        .find(|p| p.is_dir())
        .ok_or_else(|| PersistError::Missing(run_dir.to_path_buf()))
}

pub fn load_state(run_dir: &Path) -> Result<DiscoveryState, PersistError> {
    let dir = checkpoint_dir(run_dir)?;
    let config: DiscoveryConfig = read_document(&dir, "config.json")?;
    let position: Position = read_document(&dir, "rng.json")?;
    Ok(DiscoveryState {
        config,
        tree: read_document(&dir, "tree.json")?,
        bank: read_document(&dir, "bank.json")?,
        concept_index: read_document(&dir, "concepts.json")?,
        iteration: position.iteration,
        rng_state: position.rng_state,
    })
}

pub fn log_path(run_dir: &Path) -> PathBuf {
    run_dir.join(LOG)
}

pub fn workspace_dir(run_dir: &Path) -> PathBuf {
    run_dir.join(WORKSPACE)
}

pub fn append_log(run_dir: &Path, report: &IterationReport) -> Result<(), PersistError> {
    let path = log_path(run_dir);
    let mut line = serde_json::to_string(report).map_err(|e| PersistError::Corrupt {
        path: path.clone(),
        message: e.to_string(),
    })?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    f.write_all(line.as_bytes()).map_err(io_err(&path))?;
    f.sync_all().map_err(io_err(&path))
}

/// Every complete record of the iteration log. A torn final line (a crash
/// mid-write) is ignored.
pub fn read_log(run_dir: &Path) -> Result<Vec<IterationReport>, PersistError> {
    let path = log_path(run_dir);
    let f = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let lines: Vec<String> = BufReader::new(f).lines().collect::<Result<_, _>>().map_err(io_err(&path))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(PersistError::Corrupt {
                    path,
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(out)
}

/// Drops log records past `iteration`, i.e. steps that ran but never
/// reached a checkpoint.
pub fn truncate_log(run_dir: &Path, iteration: u32) -> Result<(), PersistError> {
    let path = log_path(run_dir);
    if !path.exists() {
        return Ok(());
    }
    let mut text = String::new();
    for r in read_log(run_dir)?.iter().filter(|r| r.iteration <= iteration) {
        text.push_str(&serde_json::to_string(r).expect("report serializes"));
        text.push('\n');
    }
    let tmp = run_dir.join(format!("{LOG}.tmp"));
    write_synced(&tmp, text.as_bytes())?;
    fs::rename(&tmp, &path).map_err(io_err(&tmp))
}

/// Creates a run directory: root initialization, its log record and the
/// first checkpoint.
pub fn init_run_dir(run_dir: &Path, config: DiscoveryConfig) -> Result<Discovery, PersistError> {
    if checkpoint_dir(run_dir).is_ok() {
        return Err(PersistError::Exists(run_dir.to_path_buf()));
    }
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let components = build_components(&config)?;
    let (discovery, report) = Discovery::init_run(config, components, workspace_dir(run_dir))?;
    let log = log_path(run_dir);
    if log.exists() {
        fs::remove_file(&log).map_err(io_err(&log))?;
    }
    append_log(run_dir, &report)?;
    save_state(&discovery.state, run_dir)?;
    Ok(discovery)
}

/// Reopens a run at its last checkpoint, optionally adjusting the config
/// first (budget, strategy, executor).
pub fn open_run_dir(run_dir: &Path, adjust: impl FnOnce(&mut DiscoveryConfig)) -> Result<Discovery, PersistError> {
    let mut state = load_state(run_dir)?;
    adjust(&mut state.config);
    truncate_log(run_dir, state.iteration)?;
    let components = build_components(&state.config)?;
    Ok(Discovery::new(state, components, workspace_dir(run_dir)))
}

/// Steps to the budget, logging then checkpointing after every step.
pub fn run_persisted(discovery: &mut Discovery, run_dir: &Path) -> Result<RunSummary, PersistError> {
    save_state(&discovery.state, run_dir)?;
    discovery.run_with(|state, report| {
        append_log(run_dir, report)?;
        save_state(state, run_dir)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DiscoveryConfig {
        DiscoveryConfig {
            seed: 3,
            n_roots: 2,
            iterations: 3,
            ..DiscoveryConfig::default()
        }
    }

    fn snapshot(dir: &Path) -> Vec<(String, String)> {
        let mut files: Vec<_> = fs::read_dir(dir.join(CHECKPOINT))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(p).unwrap()))
            .collect()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = init_run_dir(dir.path(), small()).unwrap();
        run_persisted(&mut d, dir.path()).unwrap();
        let loaded = load_state(dir.path()).unwrap();
        assert_eq!(loaded, d.state);
        assert_eq!(read_log(dir.path()).unwrap().len(), 4);
    }

    #[test]
    fn staged_but_unswapped_checkpoint_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let d = init_run_dir(dir.path(), small()).unwrap();
        let before = snapshot(dir.path());
        let mut later = d.state.clone();
        later.iteration = 2;
        stage_state(&later, dir.path()).unwrap();
        assert_eq!(load_state(dir.path()).unwrap().iteration, 0);
        assert_eq!(snapshot(dir.path()), before);
        // a crash between the two renames leaves only the previous copy
        fs::rename(dir.path().join(CHECKPOINT), dir.path().join(PREVIOUS)).unwrap();
        assert_eq!(load_state(dir.path()).unwrap(), d.state);
        save_state(&later, dir.path()).unwrap();
        assert_eq!(load_state(dir.path()).unwrap().iteration, 2);
        assert!(!dir.path().join(PREVIOUS).exists());
        assert!(!dir.path().join(STAGING).exists());
    }

    #[test]
    fn unwritable_location_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let state = DiscoveryState::new(small());
        assert!(matches!(save_state(&state, &file.join("run")), Err(PersistError::Io { .. })));
    }

    #[test]
    fn truncated_tree_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        init_run_dir(dir.path(), small()).unwrap();
        let tree = dir.path().join(CHECKPOINT).join("tree.json");
        let text = fs::read_to_string(&tree).unwrap();
        fs::write(&tree, &text[..text.len() / 2]).unwrap();
        let err = load_state(dir.path()).unwrap_err();
        assert!(matches!(err, PersistError::Corrupt { .. }));
        assert!(err.to_string().contains("tree.json"), "{err}");
    }

    #[test]
    fn future_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        init_run_dir(dir.path(), small()).unwrap();
        let bank = dir.path().join(CHECKPOINT).join("bank.json");
        let text = fs::read_to_string(&bank).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        fs::write(&bank, text).unwrap();
        assert!(matches!(load_state(dir.path()), Err(PersistError::Version { found: 2, .. })));
    }

    #[test]
    fn missing_checkpoint_and_double_init() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_state(dir.path()), Err(PersistError::Missing(_))));
        init_run_dir(dir.path(), small()).unwrap();
        assert!(matches!(init_run_dir(dir.path(), small()), Err(PersistError::Exists(_))));
    }

    #[test]
    fn torn_log_line_is_dropped_and_future_records_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = init_run_dir(dir.path(), small()).unwrap();
        run_persisted(&mut d, dir.path()).unwrap();
        let mut f = OpenOptions::new().append(true).open(log_path(dir.path())).unwrap();
        f.write_all(b"{\"iteration\": 9, \"str").unwrap();
        assert_eq!(read_log(dir.path()).unwrap().len(), 4);
        truncate_log(dir.path(), 1).unwrap();
        let iters: Vec<u32> = read_log(dir.path()).unwrap().iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 1]);
    }

    #[test]
    fn interrupted_step_resumes_to_the_same_state() {
        let full = tempfile::tempdir().unwrap();
        let mut d = init_run_dir(full.path(), small()).unwrap();
        run_persisted(&mut d, full.path()).unwrap();

        let cut = tempfile::tempdir().unwrap();
        let mut d = init_run_dir(cut.path(), small()).unwrap();
        // the second step is logged but the process dies before its checkpoint
        let result = d.run_with(|state, report| {
            append_log(cut.path(), report)?;
            if state.iteration == 2 {
                return Err(PersistError::Missing(PathBuf::from("killed")));
            }
            save_state(state, cut.path())
        });
        assert!(result.is_err());
        let mut resumed = open_run_dir(cut.path(), |_| {}).unwrap();
        assert_eq!(resumed.state.iteration, 1);
        run_persisted(&mut resumed, cut.path()).unwrap();
        assert_eq!(snapshot(cut.path()), snapshot(full.path()));
        assert_eq!(
            fs::read_to_string(log_path(cut.path())).unwrap(),
            fs::read_to_string(log_path(full.path())).unwrap()
        );
    }
}
