//! CSV emission. Every file starts with comment lines carrying the config
//! hash, the seed and the scenario, then a header row naming the columns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::CliError;

pub struct CsvFile {
    pub path: PathBuf,
    writer: BufWriter<File>,
}

impl CsvFile {
    pub fn create(cfg: &Config, dir: &Path, name: &str, columns: &str) -> Result<Self, CliError> {
        Self::create_with_notes(cfg, dir, name, &[], columns)
    }

    pub fn create_with_notes(
        cfg: &Config,
        dir: &Path,
        name: &str,
        notes: &[&str],
        columns: &str,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        let io = write!(writer, "{}", cfg.header_comment())
            .and_then(|_| {
                for note in notes {
                    writeln!(writer, "{note}")?;
                }
                Ok(())
            })
            .and_then(|_| writeln!(writer, "{columns}"));
        io.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { path, writer })
    }

    pub fn row(&mut self, line: std::fmt::Arguments) -> Result<(), CliError> {
        self.writer
            .write_fmt(line)
            .and_then(|_| self.writer.write_all(b"\n"))
            .map_err(|e| CliError::Config(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Config(format!("{}: {e}", self.path.display())))
    }
}
