use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits: lossless for `f64`.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// The first line of every artifact: version, command with its own
/// arguments, and the resolved configuration (which includes the seed).
pub fn metadata(command: &str, config: &str) -> String {
    format!("# bteb {VERSION} | {command} | {config}")
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn open(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.root.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        Ok((path, BufWriter::new(file)))
    }

    pub fn write_csv(
        &self,
        name: &str,
        meta: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<PathBuf, CliError> {
        let (path, mut file) = self.open(name)?;
        let io = |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
        writeln!(file, "{meta}").map_err(io)?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, meta: &str, body: &str) -> Result<PathBuf, CliError> {
        let (path, mut file) = self.open(name)?;
        let io = |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
        writeln!(file, "{meta}").map_err(io)?;
        file.write_all(body.as_bytes()).map_err(io)?;
        file.flush().map_err(io)?;
        Ok(path)
    }
}
