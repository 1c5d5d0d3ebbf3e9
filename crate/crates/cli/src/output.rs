//! CSV emission with a self-describing metadata block.

use std::fs;
use std::path::{Path, PathBuf};

use outbreak_core::experiments::Table;
use sha2::{Digest, Sha256};

use crate::app::CliError;
use crate::config::RunConfig;
use crate::svg::chart_for;

/// What produced a table: enough to run it again.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub config_json: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(command: impl Into<String>, cfg: &RunConfig) -> Self {
        let config_json = serde_json::to_string(cfg).expect("config is serializable");
        Self {
            command: command.into(),
            config_hash: config_hash(&config_json),
            config_json,
        }
    }

    /// Puts the provenance lines ahead of the table's own metadata.
    pub fn stamp(&self, table: &mut Table) {
        let mut meta = vec![
            ("tool".to_string(), env!("CARGO_PKG_NAME").to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), self.command.clone()),
            ("config_sha256".to_string(), self.config_hash.clone()),
            ("config".to_string(), self.config_json.clone()),
        ];
        meta.append(&mut table.meta);
        table.meta = meta;
    }
}

pub fn config_hash(json: &str) -> String {
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Writes `<dir>/<table.name>.csv` and, with `plot`, a chart beside it.
pub fn write_table(dir: &Path, table: &Table, plot: bool) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{}.csv", table.name));
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;
    table
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;
    let mut written = vec![csv_path];
    if plot {
        if let Some(svg) = chart_for(table) {
            let svg_path = dir.join(format!("{}.svg", table.name));
            fs::write(&svg_path, svg)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", svg_path.display())))?;
            written.push(svg_path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            config_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn provenance_comes_first() {
        let cfg = RunConfig::default();
        let mut t = Table::new("x", ["a"]);
        t.meta("own", "1");
        Provenance::new("simulate", &cfg).stamp(&mut t);
        let keys: Vec<&str> = t.meta.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(
            keys,
            ["tool", "version", "command", "config_sha256", "config", "own"]
        );
        let cfg_back: RunConfig = serde_json::from_str(&t.meta[4].1).unwrap();
        assert_eq!(cfg_back, cfg);
    }

    #[test]
    fn writes_csv_and_svg() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("scan", ["t_I", "S_inf"]);
        t.push(vec![1.0.into(), 0.5.into()]);
        t.push(vec![2.0.into(), 0.6.into()]);
        let paths = write_table(dir.path(), &t, true).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("t_I,S_inf\n"));
    }
}
