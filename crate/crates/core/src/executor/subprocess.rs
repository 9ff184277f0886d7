//! Worker supervision over the file protocol: `model.py` and `config.py`
//! in, `metrics.ndjson` and `result.json` out.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use super::{sanity_diagnostic, sanity_verdict, EpochMetrics, ExecutionRequest, Executor, LineageInfo, SanityVerdict, WorkerResult};
use crate::memory::{ExperimentOutcome, RunStatus};
use crate::rng::RunRng;

pub const MODEL_FILE: &str = "model.py";
pub const CONFIG_FILE: &str = "config.py";
pub const METRICS_FILE: &str = "metrics.ndjson";
pub const RESULT_FILE: &str = "result.json";
pub const STDOUT_FILE: &str = "stdout.log";
pub const STDERR_FILE: &str = "stderr.log";

const POLL: Duration = Duration::from_millis(50);
const TAIL_BYTES: u64 = 4000;

#[derive(Debug, Clone)]
pub struct SubprocessDriver {
    /// Program and arguments, run with the workdir as current directory.
    pub command: Vec<String>,
}

impl SubprocessDriver {
    pub fn new(command: Vec<String>) -> Self {
        assert!(!command.is_empty(), "worker command must not be empty");
        Self { command }
    }

    pub fn run(&self, request: &ExecutionRequest) -> ExperimentOutcome {
        let started = Instant::now();
        match self.supervise(request, started) {
            Ok(outcome) => outcome,
            Err(e) => ExperimentOutcome::failed(format!("crash: could not run worker: {e}"), started.elapsed().as_secs_f64()),
        }
    }

    fn supervise(&self, request: &ExecutionRequest, started: Instant) -> std::io::Result<ExperimentOutcome> {
        let dir = &request.workdir;
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MODEL_FILE), &request.artifact.model_source)?;
        fs::write(dir.join(CONFIG_FILE), &request.artifact.config_source)?;
        for stale in [METRICS_FILE, RESULT_FILE] {
            match fs::remove_file(dir.join(stale)) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .current_dir(dir)
            .stdin(Stdio::null())
            .stdout(File::create(dir.join(STDOUT_FILE))?)
            .stderr(File::create(dir.join(STDERR_FILE))?)
            .process_group(0)
            .spawn()?;

        let mut tail = MetricsTail::new(dir.join(METRICS_FILE));
        let budget = Duration::from_secs_f64(request.timeout_s);
        loop {
            let exited = child.try_wait()?;
            if let Err(diag) = tail.poll() {
                kill_group(&mut child);
                return Ok(failed_with_curve(diag, &tail.metrics, started));
            }
            if sanity_verdict(&tail.metrics, request.sanity_floor, request.sanity_epochs) == SanityVerdict::Abort {
                kill_group(&mut child);
                let diag = sanity_diagnostic(&tail.metrics, request.sanity_floor, request.sanity_epochs);
                return Ok(failed_with_curve(diag, &tail.metrics, started));
            }
            if let Some(status) = exited {
                return Ok(finish(dir, status.code(), &tail.metrics, started));
            }
            if started.elapsed() >= budget {
                kill_group(&mut child);
                let _ = tail.poll();
                let wall = started.elapsed().as_secs_f64().max(request.timeout_s);
                return Ok(ExperimentOutcome::timeout(curve_of(&tail.metrics), wall));
            }
            std::thread::sleep(POLL);
        }
    }
}

impl Executor for SubprocessDriver {
    fn execute(&mut self, request: &ExecutionRequest, _lineage: &LineageInfo, _rng: &mut RunRng) -> ExperimentOutcome {
        self.run(request)
    }
}

fn kill_group(child: &mut Child) {
    // the worker leads its own process group, so this reaches grandchildren too
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.wait();
}

fn curve_of(metrics: &[EpochMetrics]) -> Vec<(u32, f64)> {
    metrics.iter().map(|m| (m.epoch, m.val_acc)).collect()
}

fn failed_with_curve(diag: String, metrics: &[EpochMetrics], started: Instant) -> ExperimentOutcome {
    let mut out = ExperimentOutcome::failed(diag, started.elapsed().as_secs_f64());
    out.accuracy_curve = curve_of(metrics);
    out
}

fn read_tail(path: &Path) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let _ = f.seek(SeekFrom::Start(len.saturating_sub(TAIL_BYTES)));
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).trim().to_string()
}

fn finish(dir: &Path, code: Option<i32>, metrics: &[EpochMetrics], started: Instant) -> ExperimentOutcome {
    let wall = started.elapsed().as_secs_f64();
    let result_path = dir.join(RESULT_FILE);
    let raw = match fs::read_to_string(&result_path) {
        Ok(raw) => raw,
        Err(_) => {
            let code = code.map_or("signal".to_string(), |c| c.to_string());
            let mut out = failed_with_curve(format!("crash: worker exited ({code}) without {RESULT_FILE}"), metrics, started);
            let stderr = read_tail(&dir.join(STDERR_FILE));
            if !stderr.is_empty() {
                out.diagnostics.push(format!("stderr: {stderr}"));
            }
            return out;
        }
    };
    if code != Some(0) {
        return failed_with_curve(format!("protocol: {RESULT_FILE} written but exit code {code:?}"), metrics, started);
    }
    let result: WorkerResult = match serde_json::from_str(&raw) {
        Ok(r) => r,
        Err(e) => return failed_with_curve(format!("protocol: {RESULT_FILE}: {e}"), metrics, started),
    };
    match result.status.as_str() {
        "success" => {
            if !(result.best_accuracy > 0.0 && result.best_accuracy <= 1.0) || metrics.is_empty() {
                return failed_with_curve(
                    format!("protocol: success needs best_accuracy in (0, 1] and at least one metrics line, got {}", result.best_accuracy),
                    metrics,
                    started,
                );
            }
            let mut out = ExperimentOutcome::success(curve_of(metrics), wall);
            out.status = RunStatus::Success;
            out.best_accuracy = result.best_accuracy;
            out.param_count = result.param_count;
            out.diagnostics = result.diagnostics;
            out
        }
        "failed" => {
            let mut out = failed_with_curve("crash: worker reported failure".into(), metrics, started);
            out.diagnostics.extend(result.diagnostics);
            out.param_count = result.param_count;
            out
        }
        other => failed_with_curve(format!("protocol: unknown status {other:?}"), metrics, started),
    }
}

/// Incremental reader of `metrics.ndjson`; only complete lines are parsed.
struct MetricsTail {
    path: std::path::PathBuf,
    offset: u64,
    pending: String,
    line_no: usize,
    metrics: Vec<EpochMetrics>,
}

impl MetricsTail {
    fn new(path: std::path::PathBuf) -> Self {
        Self {
            path,
            offset: 0,
            pending: String::new(),
            line_no: 0,
            metrics: Vec::new(),
        }
    }

    fn poll(&mut self) -> Result<(), String> {
        let Ok(mut f) = File::open(&self.path) else {
            return Ok(());
        };
        if f.seek(SeekFrom::Start(self.offset)).is_err() {
            return Ok(());
        }
        let mut buf = Vec::new();
        let n = f.read_to_end(&mut buf).unwrap_or(0);
        self.offset += n as u64;
        self.pending.push_str(&String::from_utf8_lossy(&buf));
        while let Some(nl) = self.pending.find('\n') {
            let line: String = self.pending.drain(..=nl).collect();
            self.line_no += 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let m: EpochMetrics = serde_json::from_str(line)
                .map_err(|e| format!("protocol: {METRICS_FILE} line {}: {e}", self.line_no))?;
            self.metrics.push(m);
        }
        Ok(())
    }
}
