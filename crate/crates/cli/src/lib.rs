//! Command implementations behind the `crossbody` binary.
//!
//! Every command reads and validates all of its inputs before producing
//! anything, builds its output files in memory, and only then writes them
//! under `<out_dir>/<run_id>/<command>/`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub mod commands;
pub mod config;

pub type Result<T, E = anyhow::Error> = std::result::Result<T, E>;

/// A problem with user-supplied input: a missing file, a schema violation,
/// an invalid option. Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// Attaches the offending file to a library error.
pub fn in_file<T>(path: &Path, r: crossbody::Result<T>) -> Result<T> {
    r.map_err(|e| input_error(format!("{}: {e}", path.display())))
}

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    let input = err
        .chain()
        .any(|c| c.is::<InputError>() || c.is::<crossbody::Error>());
    if input {
        EXIT_INPUT
    } else {
        EXIT_INTERNAL
    }
}

pub fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Files produced by a command, keyed by name, plus warnings for stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.insert(name.into(), content);
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    pub fn write_to(&self, dir: &Path) -> anyhow::Result<()> {
        use anyhow::Context;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// Lists files in `dir` whose names end with `suffix`, sorted by name.
pub fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(suffix) {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(input_error(format!("{}: no *{suffix} files", dir.display())));
    }
    Ok(out)
}
