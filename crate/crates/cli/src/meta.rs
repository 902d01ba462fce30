//! Path checks done before any work, and the run-metadata sidecar.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub fn require_input(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input {} does not exist or is not a file", path.display())))
    }
}

/// The header plus the raw payload it names.
pub fn volume_files(header: &Path) -> CliResult<Vec<PathBuf>> {
    require_input(header)?;
    let text = std::fs::read_to_string(header).map_err(|e| CliError::Data(format!("{}: {e}", header.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", header.display())))?;
    let mut out = vec![header.to_path_buf()];
    if let Some(name) = value.get("data_file").and_then(|v| v.as_str()) {
        let data = header.parent().unwrap_or(Path::new(".")).join(name);
        require_input(&data)?;
        out.push(data);
    }
    Ok(out)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Creates the parent directory and refuses to overwrite an input.
pub fn prepare_output(path: &Path, inputs: &[PathBuf]) -> CliResult<()> {
    if let Some(input) = inputs.iter().find(|i| same_file(i, path)) {
        return Err(CliError::Usage(format!("output {} would overwrite input {}", path.display(), input.display())));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}

pub fn sidecar_path(primary: &Path) -> PathBuf {
    primary.with_extension("meta.json")
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Sidecar<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'a str,
    args: &'a [String],
    seed: u64,
    parameters: &'a P,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

pub struct Run<'a> {
    pub subcommand: &'a str,
    pub args: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Run<'_> {
    /// Writes `<primary>.meta.json`; the primary output is `outputs[0]`.
    pub fn write<P: Serialize>(&self, parameters: &P) -> CliResult<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                let digest = Sha256::digest(&bytes);
                Ok(InputRecord {
                    path: p.display().to_string(),
                    sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let sidecar = Sidecar {
            tool: "airway",
            version: env!("CARGO_PKG_VERSION"),
            core_version: airway_core::VERSION,
            subcommand: self.subcommand,
            args: &self.args,
            seed: self.seed,
            parameters,
            inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = sidecar_path(&self.outputs[0]);
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        write_text(&path, &(text + "\n"))
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
