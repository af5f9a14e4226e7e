//! Artifact files, their schemas, and the manifest that ties a diagnostics
//! run to the exact solve that produced its inputs (config digest + per-file
//! digests). All JSON is written pretty-printed with a trailing newline so
//! identical runs produce byte-identical files.

use crate::Failure;
use fatou_core::fb::{ConvergenceReport, GrowthConstants, SurjectivityCertificate};
use fatou_core::normal_form::{AttractionProfile, NormalizationData};
use fatou_core::seq::{AutomorphismSequence, SequenceStep, TailPolicy};
use fatou_core::solver::{ConjugacyData, DegreeSelection};
use fatou_core::{Error, JetMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const MANIFEST: &str = "manifest.json";
pub const SEQUENCE: &str = "sequence.json";
pub const CONJUGACY: &str = "conjugacy.json";
pub const NORMALIZATION: &str = "normalization.json";
pub const BOUNDEDNESS: &str = "boundedness.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const CONVERGENCE: &str = "convergence.csv";
pub const SURJECTIVITY: &str = "surjectivity.json";
pub const SLICE: &str = "slice.ppm";

/// The working sequence (post-normalization when enabled), step jets at the
/// solver's working degree.
#[derive(Serialize, Deserialize)]
pub struct SequenceArtifact {
    pub schema: String,
    pub dim: usize,
    pub horizon: usize,
    pub tail: TailPolicy,
    pub kind: String,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub normalized: bool,
    pub steps: Vec<JetMap>,
}

impl SequenceArtifact {
    pub const SCHEMA: &'static str = "sequence/v1";

    pub fn to_sequence(&self) -> Result<AutomorphismSequence, Error> {
        AutomorphismSequence::new(
            self.steps.iter().cloned().map(SequenceStep::from_jet).collect(),
            self.tail,
        )
    }
}

/// Everything the solve measured and produced.
#[derive(Serialize, Deserialize)]
pub struct ConjugacyArtifact {
    pub schema: String,
    pub selection: DegreeSelection,
    pub profile: AttractionProfile,
    pub growth: GrowthConstants,
    pub data: ConjugacyData,
}

impl ConjugacyArtifact {
    pub const SCHEMA: &'static str = "conjugacy/v1";
}

/// Normalization record (written for reference; never re-read).
#[derive(Serialize)]
pub struct NormalizationArtifact {
    pub schema: String,
    pub applied: bool,
    pub data: Option<NormalizationData>,
}

impl NormalizationArtifact {
    pub const SCHEMA: &'static str = "normalization/v1";
}

/// Written last by `solve`; verified by `diagnose` and `check --artifacts`.
#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub config_sha256: String,
    /// Artifact file name → SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub const SCHEMA: &'static str = "manifest/v1";
}

/// Certificates bundle written by `diagnose`.
#[derive(Serialize)]
pub struct SurjectivityArtifact {
    pub schema: String,
    pub params: fatou_core::fb::ConvergenceParams,
    pub certificates: Vec<SurjectivityCertificate>,
}

impl SurjectivityArtifact {
    pub const SCHEMA: &'static str = "surjectivity/v1";
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn render_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::io("serializing artifact", e))?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Serialize to pretty JSON and write into `dir/name`.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    write_bytes(dir, name, &render_json(value)?)
}

pub fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Failure::io(format!("writing {}", path.display()), e))
}

/// Read `dir/name` as JSON; a missing/unreadable file is an io failure, an
/// unparsable one is a corrupted artifact.
pub fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, Failure> {
    read_json_path(&dir.join(name))
}

pub fn read_json_path<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let bytes =
        fs::read(path).map_err(|e| Failure::io(format!("reading {}", path.display()), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Integrity {
        code: "corrupted-artifact",
        message: format!("{} does not parse: {e}", path.display()),
    })
}

/// Hash the named files and write the manifest tying them to the config.
pub fn write_manifest(dir: &Path, config_bytes: &[u8], names: &[&str]) -> Result<(), Failure> {
    let mut files = BTreeMap::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path)
            .map_err(|e| Failure::io(format!("hashing {}", path.display()), e))?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    write_json(
        dir,
        MANIFEST,
        &Manifest {
            schema: Manifest::SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_bytes),
            files,
        },
    )
}

/// Load the manifest and verify every recorded file hash. With
/// `config_bytes` given, also reject artifacts from a different config.
pub fn verify_manifest(dir: &Path, config_bytes: Option<&[u8]>) -> Result<Manifest, Failure> {
    let manifest: Manifest = read_json(dir, MANIFEST)?;
    if manifest.schema != Manifest::SCHEMA {
        return Err(Failure::Integrity {
            code: "corrupted-artifact",
            message: format!("unsupported manifest schema '{}'", manifest.schema),
        });
    }
    if let Some(bytes) = config_bytes {
        let have = sha256_hex(bytes);
        if have != manifest.config_sha256 {
            return Err(Failure::Integrity {
                code: "stale-artifact",
                message: format!(
                    "artifacts in {} were produced from a different config \
                     (recorded {}, given {have})",
                    dir.display(),
                    manifest.config_sha256
                ),
            });
        }
    }
    for (name, recorded) in &manifest.files {
        let path = dir.join(name);
        let bytes = fs::read(&path)
            .map_err(|e| Failure::io(format!("reading {}", path.display()), e))?;
        let actual = sha256_hex(&bytes);
        if actual != *recorded {
            return Err(Failure::Integrity {
                code: "corrupted-artifact",
                message: format!(
                    "{} does not match its manifest digest (recorded {recorded}, actual {actual})",
                    path.display()
                ),
            });
        }
    }
    Ok(manifest)
}

/// `n,x_coeff_norm` for `n = 0..=N`.
pub fn boundedness_csv(x_norms: &[f64]) -> Vec<u8> {
    let mut out = String::from("n,x_coeff_norm\n");
    for (n, v) in x_norms.iter().enumerate() {
        out.push_str(&format!("{n},{v}\n"));
    }
    out.into_bytes()
}

/// `n,residual` for `n = 1..=N`.
pub fn residuals_csv(residuals: &[f64]) -> Vec<u8> {
    let mut out = String::from("n,residual\n");
    for (i, v) in residuals.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", i + 1));
    }
    out.into_bytes()
}

/// The convergence table with its summary lines as leading `#` comments, so
/// the fitted ratio and pass flags travel with the rows.
pub fn convergence_csv(report: &ConvergenceReport) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&format!(
        "# fitted_ratio,{}\n",
        report
            .fitted_ratio
            .map(|q| q.to_string())
            .unwrap_or_else(|| "none".into())
    ));
    out.push_str(&format!("# alpha_rate,{}\n", report.alpha_rate));
    out.push_str(&format!("# ratio_ok,{}\n", report.ratio_ok));
    out.push_str(&format!("# converged_floor,{}\n", report.converged_floor));
    out.push_str(&format!("# floor,{}\n", report.floor));
    out.push_str(&format!("# min_index,{}\n", report.min_index));
    out.push_str(&format!(
        "# tail_anomaly,{}{}\n",
        report.tail_anomaly,
        report
            .tail_ratio
            .map(|q| format!(" (tail ratio {q})"))
            .unwrap_or_default()
    ));
    out.push_str(&format!("# burn_in,{}\n", report.burn_in));
    out.push_str(&format!(
        "# injectivity_ok,{} (min separation ratio {})\n",
        report.injectivity_ok, report.min_separation_ratio
    ));
    out.push_str(&format!(
        "# jacobian_ok,{} (error {})\n",
        report.jacobian_ok, report.jacobian_error
    ));
    out.push_str("n,sup_delta,ratio\n");
    for row in &report.rows {
        let ratio = row.ratio.map(|r| r.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{ratio}\n", row.n, row.sup_delta));
    }
    out.into_bytes()
}
