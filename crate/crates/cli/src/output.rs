use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};

/// Failure reported as a machine-readable record on stderr.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub operation: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(module: &'static str, operation: &'static str, message: impl Display) -> Self {
        Self {
            module,
            operation,
            message: message.to_string(),
        }
    }

    pub fn record(&self) -> Value {
        json!({
            "error": {
                "module": self.module,
                "operation": self.operation,
                "message": self.message,
            }
        })
    }
}

pub trait Context<T> {
    fn ctx(self, module: &'static str, operation: &'static str) -> Result<T, CliError>;
}

impl<T, E: Display> Context<T> for Result<T, E> {
    fn ctx(self, module: &'static str, operation: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(module, operation, e))
    }
}

/// Where an artifact goes: an explicit file, `<dir>/<name>`, or stdout.
#[derive(Debug, Clone)]
pub struct Sink {
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Run metadata written ahead of every artifact.
pub struct Meta {
    command: String,
    seed: Option<u64>,
    params: Value,
    extra: Vec<(String, Value)>,
    started: Instant,
}

impl Meta {
    pub fn new(command: impl Into<String>, seed: Option<u64>, params: Value) -> Self {
        Self {
            command: command.into(),
            seed,
            params,
            extra: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.push((key.to_string(), value.into()));
    }

    fn fields(&self) -> Vec<(String, Value)> {
        let mut f = vec![
            ("tool".to_string(), json!(format!("expou {}", expou::VERSION))),
            ("command".to_string(), json!(self.command)),
            ("seed".to_string(), json!(self.seed)),
            ("params".to_string(), self.params.clone()),
        ];
        f.extend(self.extra.iter().cloned());
        f.push((
            "wall_time_s".to_string(),
            json!(self.started.elapsed().as_secs_f64()),
        ));
        f
    }
}

impl Sink {
    fn write(&self, default_name: &str, body: &[u8]) -> Result<(), CliError> {
        let path = match (&self.out, &self.out_dir) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(d)) => {
                fs::create_dir_all(d).ctx("cli", "create output directory")?;
                Some(d.join(default_name))
            }
            (None, None) => None,
        };
        match path {
            Some(p) => fs::write(&p, body).ctx("cli", "write artifact"),
            None => std::io::stdout().write_all(body).ctx("cli", "write artifact"),
        }
    }

    /// CSV with `# key: value` metadata lines, then the data section.
    pub fn csv(&self, name: &str, meta: &Meta, data: &str) -> Result<(), CliError> {
        let mut out = String::new();
        for (k, v) in meta.fields() {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(data);
        self.write(&format!("{name}.csv"), out.as_bytes())
    }

    /// `{"metadata": …, "result": …}`.
    pub fn json(&self, name: &str, meta: &Meta, result: Value) -> Result<(), CliError> {
        let metadata: serde_json::Map<String, Value> = meta.fields().into_iter().collect();
        let doc = json!({ "metadata": metadata, "result": result });
        let mut s = serde_json::to_string_pretty(&doc).ctx("cli", "serialise result")?;
        s.push('\n');
        self.write(&format!("{name}.json"), s.as_bytes())
    }
}
