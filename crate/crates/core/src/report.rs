//! Run reports: a CSV of records, each stamped with the seed and version,
//! and a text rendering that echoes the config.

use std::fmt;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::table::Table;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const CONFIG_BEGIN: &str = "## config";
const CONFIG_END: &str = "## results";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub version: &'static str,
    pub rng_seed: u64,
    pub config: Config,
    pub records: Vec<Record>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, config: &Config) -> Self {
        RunReport {
            command: command.to_string(),
            version: VERSION,
            rng_seed: config.seed,
            config: config.clone(),
            records: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: &str, key: &str, value: impl fmt::Display) {
        // the CSV dialect has no quoting
        let value = value.to_string().replace([',', '\n'], ";");
        self.records.push(Record { kind: kind.into(), key: key.into(), value });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn get(&self, kind: &str, key: &str) -> Option<&str> {
        self.records.iter().find(|r| r.kind == kind && r.key == key).map(|r| r.value.as_str())
    }

    pub fn table(&self) -> Table {
        let header = ["command", "kind", "key", "value", "rng_seed", "version"].map(String::from).to_vec();
        let rows = self
            .records
            .iter()
            .map(|r| {
                vec![
                    self.command.clone(),
                    r.kind.clone(),
                    r.key.clone(),
                    r.value.clone(),
                    self.rng_seed.to_string(),
                    self.version.to_string(),
                ]
            })
            .collect();
        Table { header, rows }
    }

    /// The config echoed in a rendered report.
    pub fn config_echo(text: &str) -> Result<Config> {
        let start = text.find(CONFIG_BEGIN).ok_or_else(|| Error::config(0, "report has no config echo"))?;
        let body = &text[start + CONFIG_BEGIN.len()..];
        let end = body.find(CONFIG_END).unwrap_or(body.len());
        body[..end].parse()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "brw-lab {} {}", self.version, self.command)?;
        writeln!(f, "rng_seed = {}", self.rng_seed)?;
        writeln!(f, "\n{CONFIG_BEGIN}\n{}", self.config)?;
        writeln!(f, "{CONFIG_END}")?;
        let mut kind = "";
        for r in &self.records {
            if r.kind != kind {
                writeln!(f, "\n[{}]", r.kind)?;
                kind = &r.kind;
            }
            writeln!(f, "{} = {}", r.key, r.value)?;
        }
        if !self.notes.is_empty() {
            writeln!(f)?;
            for n in &self.notes {
                writeln!(f, "note: {n}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelSpec;

    #[test]
    fn echo_round_trips_and_rows_carry_seed() {
        let mut cfg = Config::with_model(ModelSpec::Bbm { drift: -1.5 });
        cfg.seed = 42;
        let mut r = RunReport::new("classify", &cfg);
        r.push("roots", "lambda_1", 1.0);
        r.push("roots", "list", "1, 2");
        r.note("a note");
        let text = r.to_string();
        assert_eq!(RunReport::config_echo(&text).unwrap(), cfg);
        let t = r.table();
        assert!(t.rows.iter().all(|row| row[4] == "42" && row[5] == VERSION));
        assert_eq!(r.get("roots", "list"), Some("1; 2"));
    }
}
