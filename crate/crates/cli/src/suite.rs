//! Suite runner: executes every experiment in a spec file, continues past
//! failures, and writes a manifest of artifacts with their checksums.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::experiments::{run_experiment, Ctx};
use crate::spec::{load_suite, ExperimentSpec};
use crate::AppError;

#[derive(Serialize)]
struct ManifestArtifact {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    kind: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    artifacts: Vec<ManifestArtifact>,
}

fn checksum(path: &Path) -> Result<String, AppError> {
    let bytes = std::fs::read(path).map_err(|e| AppError::Runtime(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn relative<'a>(path: &'a Path, base: &Path) -> &'a Path {
    path.strip_prefix(base).unwrap_or(path)
}

pub fn run_suite(
    spec_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    against_best_fixed_point: bool,
) -> Result<(), AppError> {
    let suite = load_suite(spec_path)?;
    let out_root = out_override.unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_root).map_err(|e| AppError::Runtime(e.to_string()))?;

    let mut entries = Vec::new();
    for (idx, exp) in suite.experiments.iter().enumerate() {
        let label = exp.label(idx);
        let entry = run_one(exp, &label, idx, seed_override, &out_root, against_best_fixed_point)?;
        println!("[{}] {}: {}", idx, label, entry.status);
        entries.push(entry);
    }
    let manifest = serde_json::json!({ "experiments": entries });
    let path = out_root.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap() + "\n")
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_one(
    exp: &ExperimentSpec,
    label: &str,
    idx: usize,
    seed_override: Option<u64>,
    out_root: &Path,
    against_best_fixed_point: bool,
) -> Result<ManifestEntry, AppError> {
    let ctx = Ctx {
        seed: seed_override.unwrap_or(exp.seed),
        out: exp
            .out_dir
            .clone()
            .map(|d| out_root.join(d))
            .unwrap_or_else(|| out_root.to_path_buf()),
        against_best_fixed_point,
    };
    match run_experiment(exp, label, &ctx) {
        Ok(paths) => {
            let mut artifacts = Vec::new();
            for p in paths {
                artifacts.push(ManifestArtifact {
                    path: relative(&p, out_root).display().to_string(),
                    sha256: checksum(&p)?,
                });
            }
            Ok(ManifestEntry {
                name: label.to_string(),
                kind: exp.kind.as_str(),
                status: "ok",
                error: None,
                artifacts,
            })
        }
        // A failed experiment is recorded and the suite moves on.
        Err(e) => Ok(ManifestEntry {
            name: exp.label(idx),
            kind: exp.kind.as_str(),
            status: "error",
            error: Some(e.to_string()),
            artifacts: Vec::new(),
        }),
    }
}
