//! Experiment configuration: one JSON file describing the input family, the
//! solver knobs, and the diagnostics. Unknown fields are rejected so typos
//! fail loudly; every default is listed in the README reference table.

use crate::artifacts::{self, SequenceArtifact};
use crate::Failure;
use fatou_core::exec::ExecMode;
use fatou_core::seq::{
    autonomous, perturb, random_uniformly_attracting, AutomorphismSequence, PerturbParams,
    RandomFamilyParams, StepMap, TailPolicy,
};
use fatou_core::triangular::TriangularPolyMap;
use fatou_core::Error;
use num_complex::Complex64;
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    /// Execution mode of the data-parallel stages.
    #[serde(default)]
    pub mode: ExecMode,
}

/// Which family to construct.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// Constant sequence: every step is the reference map.
    Autonomous {
        reference: ReferenceSpec,
        horizon: usize,
    },
    /// Near-identity random perturbations of the reference map, each step
    /// within sampled sup-sphere distance `epsilon`.
    Perturbed {
        reference: ReferenceSpec,
        horizon: usize,
        epsilon: f64,
        #[serde(default = "default_noise_degree")]
        noise_degree: u32,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_verify_samples")]
        verify_samples: usize,
    },
    /// Random correctly-ordered, uniformly attracting triangular steps with
    /// contraction ratios inside `moduli = (a, b)`.
    RandomTriangular {
        dim: usize,
        degree: u32,
        moduli: (f64, f64),
        horizon: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_gen_xi_order")]
        xi_order: f64,
        #[serde(default = "default_verify_samples")]
        verify_samples: usize,
    },
    /// Load a previously written sequence artifact.
    File { path: PathBuf },
}

fn default_noise_degree() -> u32 {
    2
}
fn default_verify_samples() -> usize {
    10_000
}
fn default_gen_xi_order() -> f64 {
    0.9
}

/// The reference automorphism for autonomous/perturbed families.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    /// A named built-in.
    Preset { preset: PresetName },
    /// Diagonal contraction `z_j ↦ λ_j z_j` with real moduli.
    Diagonal { diagonal: Vec<f64> },
    /// Arbitrary invertible lower-triangular map (own JSON schema).
    Triangular { triangular: TriangularPolyMap },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// `(x/2, y/5 + x²)`: attracting with a non-removable quadratic resonance.
    QuadraticShear,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Expansion margin: solved multipliers must exceed this in modulus.
    pub xi_exp: f64,
    /// Ill-conditioning margin: multipliers in (1, xi_exp) are flagged when
    /// the ordering slack is thinner than this.
    pub xi_order: f64,
    /// Largest tolerated strictly-upper linear entry of a normalized step.
    pub upper_tol: f64,
    /// Minimum modulus ratio across a spectral split (normalization).
    pub gap_spec: f64,
    /// Target strictly-upper residue of normalized linear parts.
    pub flag_tol: f64,
    /// Ordering budget used by normalization and the attraction profile.
    pub ordering_budget: f64,
    /// Run the normalization pipeline before solving.
    pub normalize: bool,
    /// Truncation degrees: `"auto"` or `{ "p": …, "q": … }`.
    pub degrees: DegreeSpec,
    /// Extend the conjugating jets to degree `q + 1` after the solve.
    pub extend: bool,
    /// Exit-gate on the worst per-step conjugacy residual.
    pub residual_tol: f64,
    /// Sphere/ball samples for the measured constants (profile, growth).
    pub samples: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            xi_exp: 1.05,
            xi_order: 0.95,
            upper_tol: 1e-6,
            gap_spec: 1.5,
            flag_tol: 1e-10,
            ordering_budget: 0.9,
            normalize: true,
            degrees: DegreeSpec::Auto(AutoTag::Auto),
            extend: true,
            residual_tol: 1e-8,
            samples: 400,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DegreeSpec {
    Auto(AutoTag),
    Manual { p: usize, q: usize },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    /// Radius of the deterministic sample ball the convergence grid fills.
    pub grid_radius: f64,
    /// Number of grid points.
    pub grid_points: usize,
    /// Step range `(n_lo, n_hi)` of the convergence table; default `(0, N)`.
    pub n_range: Option<(usize, usize)>,
    /// Samples for the measured residual constant and burn-in depth.
    pub samples: usize,
    /// Target radii for the surjectivity probe.
    pub surjectivity_radii: Vec<f64>,
    /// Ball samples per surjectivity certificate.
    pub surjectivity_samples: usize,
    pub slice: SliceSpec,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            grid_radius: 0.25,
            grid_points: 64,
            n_range: None,
            samples: 400,
            surjectivity_radii: vec![1.0],
            surjectivity_samples: 1000,
            slice: SliceSpec::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceSpec {
    pub axis_i: usize,
    pub axis_j: usize,
    /// Real center coordinates (length k); origin when omitted.
    pub center: Option<Vec<f64>>,
    /// Half-width of the rendered square.
    pub extent: f64,
    /// Pixels per side.
    pub px: usize,
    /// Iteration budget per pixel.
    pub max_iter: usize,
    /// Escape radius.
    pub rho_out: f64,
}

impl Default for SliceSpec {
    fn default() -> Self {
        SliceSpec {
            axis_i: 0,
            axis_j: 1,
            center: None,
            extent: 1.0,
            px: 128,
            max_iter: 200,
            rho_out: 1e6,
        }
    }
}

/// Read and parse a config file, returning the raw bytes for hashing.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::io(format!("reading config {}", path.display()), e))?;
    let config: ExperimentConfig =
        serde_json::from_slice(&bytes).map_err(|e| Failure::ConfigParse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok((config, bytes))
}

/// Provenance recorded in the sequence artifact.
pub struct SequenceMeta {
    pub kind: &'static str,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}

fn reference_step(spec: &ReferenceSpec) -> Result<StepMap, Error> {
    match spec {
        ReferenceSpec::Preset {
            preset: PresetName::QuadraticShear,
        } => Ok(fatou_core::seq::quadratic_shear_example()),
        ReferenceSpec::Diagonal { diagonal } => {
            if diagonal.is_empty() {
                return Err(Error::InvalidConfig {
                    context: "diagonal reference needs at least one modulus".into(),
                });
            }
            Ok(StepMap::from_shear(TriangularPolyMap::diagonal(
                diagonal.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
            )))
        }
        ReferenceSpec::Triangular { triangular } => Ok(StepMap::from_shear(triangular.clone())),
    }
}

/// Construct the input family described by the config.
pub fn build_sequence(
    spec: &SequenceSpec,
    mode: ExecMode,
) -> Result<(AutomorphismSequence, SequenceMeta), Failure> {
    match spec {
        SequenceSpec::Autonomous { reference, horizon } => {
            let seq = autonomous(reference_step(reference)?, *horizon)?;
            Ok((
                seq,
                SequenceMeta {
                    kind: "autonomous",
                    epsilon: None,
                    seed: None,
                },
            ))
        }
        SequenceSpec::Perturbed {
            reference,
            horizon,
            epsilon,
            noise_degree,
            seed,
            verify_samples,
        } => {
            let base = reference_step(reference)?;
            let seq = perturb(
                &base,
                &PerturbParams {
                    n_steps: *horizon,
                    epsilon: *epsilon,
                    noise_degree: *noise_degree,
                    seed: *seed,
                    verify_samples: *verify_samples,
                    mode,
                },
            )?;
            Ok((
                seq,
                SequenceMeta {
                    kind: "perturbed",
                    epsilon: Some(*epsilon),
                    seed: Some(*seed),
                },
            ))
        }
        SequenceSpec::RandomTriangular {
            dim,
            degree,
            moduli,
            horizon,
            seed,
            xi_order,
            verify_samples,
        } => {
            let seq = random_uniformly_attracting(&RandomFamilyParams {
                dim: *dim,
                degree: *degree,
                moduli: *moduli,
                n_steps: *horizon,
                seed: *seed,
                xi_order: *xi_order,
                tail: TailPolicy::Freeze,
                verify_samples: *verify_samples,
                verify_radii: vec![1.0, 0.5, 0.1],
                mode,
            })?;
            Ok((
                seq,
                SequenceMeta {
                    kind: "random_triangular",
                    epsilon: None,
                    seed: Some(*seed),
                },
            ))
        }
        SequenceSpec::File { path } => {
            let artifact: SequenceArtifact = artifacts::read_json_path(path)?;
            let seq = artifact.to_sequence()?;
            Ok((
                seq,
                SequenceMeta {
                    kind: "file",
                    epsilon: artifact.epsilon,
                    seed: artifact.seed,
                },
            ))
        }
    }
}
