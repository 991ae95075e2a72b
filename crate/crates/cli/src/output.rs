use std::fs;
use std::path::{Path, PathBuf};

use pnr_core::table::Table;

use crate::error::CliResult;
use crate::svg::Plot;

/// Values stamped into every table header.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

pub struct Output {
    dir: PathBuf,
    pub provenance: Provenance,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn table(&mut self, name: &str, t: Table) -> CliResult<()> {
        let t = t
            .with_meta("config_sha256", &self.provenance.config_sha256)
            .with_meta("seed", self.provenance.seed)
            .with_meta("pnr_core", pnr_core::VERSION)
            .with_meta("pnr", env!("CARGO_PKG_VERSION"));
        self.text(name, &t.to_string_lossless())
    }

    pub fn plot(&mut self, name: &str, p: &Plot) -> CliResult<()> {
        self.text(name, &p.render())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
