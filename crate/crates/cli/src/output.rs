use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use detloop::Error;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CROSSING: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, message: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: msg.into() }
    }

    /// Library error, prefixed with the config field it came from.
    pub fn at(field: &str, e: Error) -> Self {
        let code = match e {
            Error::NoCrossing(_) => EXIT_NO_CROSSING,
            Error::Numerical(_) | Error::Signaling(_) | Error::Lp(_) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        };
        let message = if field.is_empty() { e.to_string() } else { format!("{field}: {e}") };
        Failure { code, message }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::at("", e)
    }
}

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::runtime(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// Axis description written next to every plot-data CSV.
#[derive(Serialize)]
pub struct PlotManifest {
    pub title: String,
    pub data: String,
    pub x: Axis,
    pub y: Axis,
    /// Values of the `label` column, one per plotted series.
    pub series: Vec<String>,
    /// Reference lines, e.g. the classical bound or a quoted threshold.
    pub markers: Vec<Marker>,
}

#[derive(Serialize)]
pub struct Axis {
    pub column: String,
    pub label: String,
    pub range: (f64, f64),
}

#[derive(Serialize)]
pub struct Marker {
    pub axis: String,
    pub value: f64,
    pub label: String,
}

/// Sends log records to a file. Results never carry timestamps, so two
/// runs differ only in this file.
pub fn init_file_logger(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init()
        .map_err(|e| Failure::runtime(e.to_string()))
}

pub fn init_stderr_logger() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, rec| writeln!(buf, "{}: {}", rec.level(), rec.args()))
        .try_init();
}

pub fn stem_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}
