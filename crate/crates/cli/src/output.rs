//! Artifact writing. Every file lands via a temporary file in the target
//! directory followed by a rename, so readers never see partial output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub struct OutDir {
    dir: PathBuf,
    config: Value,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path, config: Value) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            config,
            written: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let io = |e: std::io::Error| CliError::io(format!("writing {}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        self.written.push(target);
        Ok(())
    }

    /// `value` as a JSON object with the resolved config under `"config"`.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::io(e.to_string()))?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config".into(), self.config.clone());
            }
            other => {
                v = serde_json::json!({ "config": self.config, "data": other });
            }
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV with a leading `# config: {...}` comment line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("# config: {}\n{body}", self.config);
        self.write_bytes(name, text.as_bytes())
    }
}
