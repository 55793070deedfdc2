use crate::error::CliError;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub swimmer: String,
    pub swimmer_sha256: String,
    pub config: Value,
}

impl Meta {
    pub fn new(swimmer: &magswim::Swimmer, config: Value) -> Meta {
        Meta { tool: "magswim".into(), version: VERSION.into(), swimmer: swimmer.name.clone(), swimmer_sha256: swimmer.hash(), config }
    }
}

pub struct Sink {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, meta: Meta) -> Result<Sink, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Sink { dir: dir.to_path_buf(), meta, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// CSV with `#` comment lines carrying the provenance.
    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# {} {}", self.meta.tool, self.meta.version)?;
        writeln!(buf, "# swimmer {} sha256 {}", self.meta.swimmer, self.meta.swimmer_sha256)?;
        writeln!(buf, "# config {}", serde_json::to_string(&self.meta.config)?)?;
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        let p = self.path(name);
        fs::write(p, buf)?;
        Ok(())
    }

    /// JSON document `{ "meta": ..., <fields of body> }`.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        let mut doc = json!({ "meta": self.meta });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, serde_json::to_value(body)?) {
            d.extend(b);
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        let p = self.path(name);
        fs::write(p, text)?;
        Ok(())
    }

    /// Plot script, with the provenance as leading comments.
    pub fn script(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!(
            "# {} {} plot script for swimmer {} (sha256 {})\n# Run from the output directory: python3 {name}\n{body}",
            self.meta.tool, self.meta.version, self.meta.swimmer, self.meta.swimmer_sha256
        );
        let p = self.path(name);
        fs::write(p, text)?;
        Ok(())
    }

    pub fn finish(self) {
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}
