use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{Cli, Command};

/// Error reported as `{"code": ..., "message": ...}` on stderr, exit code 1.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        CliError { code: code.to_string(), message: message.into() }
    }

    pub fn param(message: impl Into<String>) -> Self {
        CliError::new("invalid_param", message)
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<sufficient::Error> for CliError {
    fn from(e: sufficient::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("json", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// The command line as parsed, echoed into every artifact. Thread count and
/// the timestamp switch are left out because they do not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub args: Value,
}

pub struct Context {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub created: Option<u64>,
    pub run_config: RunConfig,
}

impl Context {
    pub fn new(cli: &Cli) -> Self {
        let (name, args) = match &cli.command {
            Command::Synth(a) => ("synth", serde_json::to_value(a)),
            Command::Train(a) => ("train", serde_json::to_value(a)),
            Command::Explain(a) => ("explain", serde_json::to_value(a)),
            Command::Rule(a) => ("rule", serde_json::to_value(a)),
            Command::GlobalSr(a) => ("global-sr", serde_json::to_value(a)),
            Command::Eval(a) => ("eval", serde_json::to_value(a)),
            Command::OracleCheck(a) => ("oracle-check", serde_json::to_value(a)),
        };
        let created =
            (!cli.global.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Context {
            seed: cli.global.seed,
            out: cli.global.out.clone(),
            created,
            run_config: RunConfig { subcommand: name.to_string(), seed: cli.global.seed, args: args.unwrap_or(Value::Null) },
        }
    }

    /// Wrap `body` with provenance: library version, run config and, unless
    /// disabled, the creation time.
    pub fn envelope(&self, kind: &str, body: impl Serialize) -> CliResult<Value> {
        let mut doc = json!({
            "kind": kind,
            "library_version": sufficient::VERSION,
            "run_config": self.run_config,
        });
        if let Some(t) = self.created {
            doc["created_unix"] = json!(t);
        }
        doc[kind] = serde_json::to_value(body)?;
        Ok(doc)
    }

    /// Write the command's report to `--out` or stdout.
    pub fn emit(&self, body: impl Serialize) -> CliResult<()> {
        let doc = self.envelope("report", body)?;
        match &self.out {
            Some(path) => write_json(path, &doc),
            None => {
                let mut stdout = std::io::stdout().lock();
                serde_json::to_writer_pretty(&mut stdout, &doc)?;
                writeln!(stdout).map_err(|e| io_error(Path::new("<stdout>"), e))
            }
        }
    }

    /// Print human-readable lines instead of a JSON report.
    pub fn emit_text(&self, lines: &[String]) -> CliResult<()> {
        let text = lines.iter().map(|l| format!("{l}\n")).collect::<String>();
        match &self.out {
            Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

pub fn write_json(path: &Path, doc: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}
