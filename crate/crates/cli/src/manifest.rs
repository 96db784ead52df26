//! Run manifests: the fully resolved configuration, tool version, input
//! digests and seed list, written before any computation so every run can be
//! replayed exactly.

use std::fmt::Write as _;
use std::path::Path;

use deepnt_core::Result;
use sha2::{Digest, Sha256};

use crate::config::Settings;

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_manifest(
    out: &Path,
    command: &str,
    settings: &Settings,
    inputs: &[&Path],
    out_dir: &Path,
) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "deepnt-manifest v1");
    let _ = writeln!(s, "tool-version {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "command {command}");
    let _ = writeln!(s, "output-dir {}", out_dir.display());
    let _ = writeln!(
        s,
        "seeds {}",
        settings.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    );
    for input in inputs {
        if input.exists() {
            let _ = writeln!(s, "input {} sha256 {}", input.display(), sha256_hex(input)?);
        }
    }
    let _ = writeln!(s, "[config]");
    s.push_str(&settings.resolved());
    std::fs::write(out, s)?;
    Ok(())
}
