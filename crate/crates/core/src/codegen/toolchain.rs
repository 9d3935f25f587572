// External compiler driver.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{io_err, CodegenError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolchainConfig {
    pub command: String,
    pub flags: Vec<String>,
    /// Extra flags passed when `strip` is on.
    pub strip_flags: Vec<String>,
    pub strip: bool,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        Self {
            command: "rustc".into(),
            flags: ["--edition", "2021", "-C", "opt-level=3"].map(String::from).to_vec(),
            strip_flags: ["-C", "strip=symbols", "-C", "debuginfo=0"].map(String::from).to_vec(),
            strip: false,
        }
    }
}

impl ToolchainConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&text).map_err(|e| CodegenError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn stripped(mut self, strip: bool) -> Self {
        self.strip = strip;
        self
    }
}

/// Compiles `src_dir/main.rs` into `executable`.
pub fn compile(src_dir: &Path, executable: &Path, toolchain: &ToolchainConfig) -> Result<()> {
    let parent = executable.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let parent = parent.canonicalize().map_err(io_err(parent))?;
    let out = parent.join(executable.file_name().unwrap_or("app".as_ref()));
    let mut cmd = Command::new(&toolchain.command);
    cmd.current_dir(src_dir).args(&toolchain.flags);
    if toolchain.strip {
        cmd.args(&toolchain.strip_flags);
    }
    cmd.arg("main.rs").arg("-o").arg(&out);
    let output = match cmd.output() {
        Ok(o) => o,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return Err(CodegenError::ToolchainNotFound(toolchain.command.clone()));
        }
        Err(e) => return Err(io_err(Path::new(&toolchain.command))(e)),
    };
    if !output.status.success() {
        return Err(CodegenError::CompileFailed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    Ok(())
}
