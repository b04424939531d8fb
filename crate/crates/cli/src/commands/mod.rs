pub mod dump;
pub mod eval;
pub mod generate;
pub mod ingest;
pub mod sweep;
pub mod train;

use std::path::Path;

use sequelrec_core::{Error, Result};

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    let out: std::result::Result<Vec<usize>, _> =
        raw.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let out = out.map_err(|_| Error::Config(format!("cannot parse {what} list '{raw}'")))?;
    if out.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    Ok(out)
}

pub fn parse_u64_list(raw: &str, what: &str) -> Result<Vec<u64>> {
    let out: std::result::Result<Vec<u64>, _> =
        raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let out = out.map_err(|_| Error::Config(format!("cannot parse {what} list '{raw}'")))?;
    if out.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    Ok(out)
}
