//! Subcommand bodies: the solve pipeline, the diagnostics pass, the invariant
//! suites, and the slice renderer.

use crate::artifacts::{
    self, ConjugacyArtifact, Manifest, NormalizationArtifact, SequenceArtifact,
    SurjectivityArtifact,
};
use crate::config::{self, DegreeSpec};
use crate::Failure;
use fatou_core::exec::ExecMode;
use fatou_core::fb::{
    convergence_params, convergence_report, growth_constants, render_basin_slice,
    surjectivity_probe,
};
use fatou_core::normal_form::{
    attraction_profile, normalize_sequence, NormalizeParams, ProfileParams,
};
use fatou_core::sample::{self, PlaneGrid};
use fatou_core::seq::AutomorphismSequence;
use fatou_core::solver::{
    build_conjugacy, extend_to_degree, select_degrees, DegreeSelection, SolveParams,
};
use fatou_core::{Error, JetMap, TriangularPolyMap};
use num_complex::Complex64;
use std::fs;
use std::path::Path;

/// Full pipeline: generate → (normalize) → profile → select degrees → solve
/// → (extend) → write artifacts; exit 0 only with every gate satisfied.
pub fn solve(config_path: &Path, out_dir: &Path) -> Result<(), Failure> {
    let (config, config_bytes) = config::load_config(config_path)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::io(format!("creating {}", out_dir.display()), e))?;
    let mode = config.mode;
    let s = &config.solver;

    let (raw_seq, meta) = config::build_sequence(&config.sequence, mode)?;
    let horizon = raw_seq.len();

    let (working, norm_data) = if s.normalize {
        let (seq, data) = normalize_sequence(
            &raw_seq,
            &NormalizeParams {
                gap_spec: s.gap_spec,
                xi_order: s.ordering_budget,
                flag_tol: s.flag_tol,
                scaling: None,
                mode,
            },
        )?;
        (seq, Some(data))
    } else {
        (raw_seq, None)
    };

    let profile = attraction_profile(
        &working,
        &ProfileParams {
            samples: s.samples,
            xi_order: s.ordering_budget,
            mode,
            ..ProfileParams::default()
        },
    )?;

    let natural_jets: Vec<JetMap> = (1..=horizon)
        .map(|n| working.step(n).jet.clone())
        .collect();
    let natural_degree = natural_jets
        .iter()
        .flat_map(|j| j.components().iter().map(|c| c.used_degree()))
        .max()
        .unwrap_or(1)
        .max(1);

    // Degree selection needs the carrier-chain backward rate γ before any
    // carriers exist; the steps' own triangular parts are the proxy (the
    // solved carriers share their linear parts and resonant shears). Steps
    // with non-triangular nonlinear terms fall back to their linear part:
    // the carriers of such families differ from it only by resonant shears
    // of the same small magnitude as those terms.
    let proxies: Vec<TriangularPolyMap> = natural_jets
        .iter()
        .map(|j| {
            TriangularPolyMap::from_jet(j, s.upper_tol)
                .or_else(|_| TriangularPolyMap::from_jet(&j.to_degree(1), s.upper_tol))
        })
        .collect::<Result<_, Error>>()?;
    let proxy_growth = growth_constants(&proxies, s.samples, mode)?;

    let (min_modulus, max_modulus) = natural_jets
        .iter()
        .flat_map(|j| {
            let lin = j.linear_part();
            (0..j.dim()).map(move |i| lin[(i, i)].norm()).collect::<Vec<_>>()
        })
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));

    let selection = match &s.degrees {
        DegreeSpec::Auto(_) => select_degrees(
            min_modulus,
            max_modulus,
            s.xi_exp,
            proxy_growth.gamma,
            profile.b,
        )?,
        DegreeSpec::Manual { p, q } => DegreeSelection {
            p: *p,
            q: *q,
            alpha_rate: proxy_growth.gamma * profile.b.powi(*q as i32),
        },
    };

    let target_degree = if s.extend {
        (selection.q as u32 + 1).max(selection.p as u32)
    } else {
        selection.p as u32
    };
    let d_work = target_degree.max(natural_degree);
    let steps: Vec<JetMap> = natural_jets.iter().map(|j| j.to_degree(d_work)).collect();

    let solve_params = SolveParams {
        xi_exp: s.xi_exp,
        xi_order: s.xi_order,
        upper_tol: s.upper_tol,
        mode,
    };
    let mut data = build_conjugacy(&steps, selection.p as u32, &solve_params)?;
    if s.extend && target_degree > selection.p as u32 {
        data = extend_to_degree(&data, &steps, target_degree, &solve_params)?;
    }
    let growth = growth_constants(&data.gs, s.samples, mode)?;

    artifacts::write_json(
        out_dir,
        artifacts::SEQUENCE,
        &SequenceArtifact {
            schema: SequenceArtifact::SCHEMA.into(),
            dim: data.dim,
            horizon,
            tail: working.tail(),
            kind: meta.kind.into(),
            epsilon: meta.epsilon,
            seed: meta.seed,
            normalized: s.normalize,
            steps,
        },
    )?;
    artifacts::write_json(
        out_dir,
        artifacts::CONJUGACY,
        &ConjugacyArtifact {
            schema: ConjugacyArtifact::SCHEMA.into(),
            selection: selection.clone(),
            profile: profile.clone(),
            growth,
            data: data.clone(),
        },
    )?;
    artifacts::write_json(
        out_dir,
        artifacts::NORMALIZATION,
        &NormalizationArtifact {
            schema: NormalizationArtifact::SCHEMA.into(),
            applied: s.normalize,
            data: norm_data,
        },
    )?;
    artifacts::write_bytes(
        out_dir,
        artifacts::BOUNDEDNESS,
        &artifacts::boundedness_csv(&data.x_norms),
    )?;
    artifacts::write_bytes(
        out_dir,
        artifacts::RESIDUALS,
        &artifacts::residuals_csv(&data.residuals),
    )?;
    artifacts::write_manifest(
        out_dir,
        &config_bytes,
        &[
            artifacts::SEQUENCE,
            artifacts::CONJUGACY,
            artifacts::NORMALIZATION,
            artifacts::BOUNDEDNESS,
            artifacts::RESIDUALS,
        ],
    )?;

    println!(
        "solved {} family: k={} N={} p={} q={} alpha_rate={:.4}",
        meta.kind, data.dim, horizon, selection.p, selection.q, selection.alpha_rate
    );
    println!(
        "degrees: carriers {} / conjugating jets {} (working degree {d_work})",
        data.degree_g, data.degree_x
    );
    println!(
        "residual max {:.3e} (gate {:.1e}), x-norm max {:.6}, flagged terms {}",
        data.max_residual(),
        s.residual_tol,
        data.max_x_norm(),
        data.ill_conditioned.len()
    );
    println!(
        "profile: rho={:.4} a={:.4} b={:.4} ordering_ok={}",
        profile.rho, profile.a, profile.b, profile.ordering_ok
    );
    println!("artifacts written to {}", out_dir.display());

    let residual = data.max_residual();
    if residual > s.residual_tol {
        return Err(Error::ResidualTooLarge {
            residual,
            tol: s.residual_tol,
        }
        .into());
    }
    Ok(())
}

/// Diagnostics over existing artifacts: convergence table, surjectivity
/// certificates, basin slice. Rejects stale or corrupted artifacts.
pub fn diagnose(config_path: &Path, artifacts_dir: &Path) -> Result<(), Failure> {
    let (config, config_bytes) = config::load_config(config_path)?;
    verify_schema_set(artifacts_dir, Some(&config_bytes))?;
    let mode = config.mode;
    let d = &config.diagnostics;

    let seq_art: SequenceArtifact = artifacts::read_json(artifacts_dir, artifacts::SEQUENCE)?;
    let conj: ConjugacyArtifact = artifacts::read_json(artifacts_dir, artifacts::CONJUGACY)?;
    let working = seq_art.to_sequence()?;
    let steps = &seq_art.steps;
    let k = conj.data.dim;

    let params = convergence_params(
        &conj.data,
        steps,
        &conj.selection,
        &conj.growth,
        &conj.profile,
        d.samples,
        mode,
    )?;

    let grid: Vec<Vec<Complex64>> = (0..d.grid_points)
        .map(|i| sample::ball_point(k, d.grid_radius, i as u64))
        .collect();
    let n_range = d.n_range.unwrap_or((0, conj.data.horizon));
    let report = convergence_report(&conj.data, steps, &grid, n_range, &params, mode)?;
    artifacts::write_bytes(
        artifacts_dir,
        artifacts::CONVERGENCE,
        &artifacts::convergence_csv(&report),
    )?;

    let mut certificates = Vec::with_capacity(d.surjectivity_radii.len());
    for &radius in &d.surjectivity_radii {
        certificates.push(surjectivity_probe(
            &conj.data,
            steps,
            &params,
            radius,
            d.surjectivity_samples,
            mode,
        )?);
    }
    artifacts::write_json(
        artifacts_dir,
        artifacts::SURJECTIVITY,
        &SurjectivityArtifact {
            schema: SurjectivityArtifact::SCHEMA.into(),
            params: params.clone(),
            certificates: certificates.clone(),
        },
    )?;

    let slice = &d.slice;
    let grid = plane_grid(
        k,
        slice.axis_i,
        slice.axis_j,
        slice.center.as_deref(),
        slice.extent,
        slice.px,
    )?;
    let (ppm, stats) = render_basin_slice(
        &working,
        &grid,
        slice.max_iter,
        conj.profile.rho,
        slice.rho_out,
        mode,
    )?;
    artifacts::write_bytes(artifacts_dir, artifacts::SLICE, &ppm)?;

    println!(
        "convergence: fitted_ratio={} alpha_rate={:.4} ratio_ok={} floor={} burn_in={}",
        report
            .fitted_ratio
            .map(|q| format!("{q:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report.alpha_rate,
        report.ratio_ok,
        report.converged_floor,
        report.burn_in
    );
    println!(
        "injectivity_ok={} (min separation {:.4}), jacobian_ok={} (error {:.3e})",
        report.injectivity_ok,
        report.min_separation_ratio,
        report.jacobian_ok,
        report.jacobian_error
    );
    for cert in &certificates {
        println!(
            "surjectivity R={}: m={} sphere_sup={:.4e} displacement_max={:.4} pass={}",
            cert.target_radius, cert.m, cert.sphere_sup, cert.displacement_max, cert.pass
        );
    }
    println!(
        "slice: {} attracted / {} escaped / {} undecided (max entry step {})",
        stats.attracted, stats.escaped, stats.undecided, stats.max_entry_step
    );
    println!("diagnostics written to {}", artifacts_dir.display());

    report.check()?;
    Ok(())
}

/// Invariant suites, plus optional artifact-integrity verification.
pub fn check(suite: Option<&str>, artifacts_dir: Option<&Path>) -> Result<(), Failure> {
    let report = fatou_core::checks::run_checks(suite, ExecMode::Parallel)?;
    let mut integrity_ok = true;
    let integrity = artifacts_dir
        .map(|dir| match verify_schema_set(dir, None) {
            Ok(manifest) => serde_json::json!({
                "suite": "integrity",
                "passed": true,
                "files": manifest.files.keys().collect::<Vec<_>>(),
            }),
            Err(failure) => {
                integrity_ok = false;
                serde_json::json!({
                    "suite": "integrity",
                    "passed": false,
                    "detail": failure.message(),
                })
            }
        })
        .unwrap_or(serde_json::Value::Null);

    let payload = serde_json::json!({
        "passed": report.passed && integrity_ok,
        "suites": report.suites,
        "integrity": integrity,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&payload).map_err(|e| Failure::io("rendering report", e))?
    );

    if !integrity_ok {
        return Err(Failure::Integrity {
            code: "corrupted-artifact",
            message: "artifact integrity verification failed (see report)".into(),
        });
    }
    if !report.passed {
        return Err(Failure::ChecksFailed {
            failed: report
                .suites
                .iter()
                .filter(|s| !s.passed)
                .map(|s| s.suite.clone())
                .collect(),
        });
    }
    Ok(())
}

/// Render a slice with an explicit window, reusing the absorbing radius from
/// the conjugacy artifact when present.
pub fn render(
    artifacts_dir: &Path,
    window: &str,
    px: usize,
    axes: &str,
    max_iter: usize,
) -> Result<(), Failure> {
    let seq_art: SequenceArtifact = artifacts::read_json(artifacts_dir, artifacts::SEQUENCE)?;
    let working: AutomorphismSequence = seq_art.to_sequence()?;
    let k = working.dim();

    let w: Vec<f64> = parse_floats(window)?;
    if w.len() != 4 {
        return Err(Error::InvalidConfig {
            context: format!("--window needs x0,x1,y0,y1 (got '{window}')"),
        }
        .into());
    }
    let ax: Vec<f64> = parse_floats(axes)?;
    if ax.len() != 2 || ax.iter().any(|a| a.fract() != 0.0) {
        return Err(Error::InvalidConfig {
            context: format!("--axes needs two integer indices (got '{axes}')"),
        }
        .into());
    }
    let (axis_i, axis_j) = (ax[0] as usize, ax[1] as usize);
    let extent = ((w[1] - w[0]).abs().max((w[3] - w[2]).abs())) / 2.0;
    let mut center = vec![0.0; k];
    if axis_i < k {
        center[axis_i] = (w[0] + w[1]) / 2.0;
    }
    if axis_j < k {
        center[axis_j] = (w[2] + w[3]) / 2.0;
    }
    let grid = plane_grid(k, axis_i, axis_j, Some(&center), extent, px)?;

    let rho_in = if artifacts_dir.join(artifacts::CONJUGACY).exists() {
        let conj: ConjugacyArtifact = artifacts::read_json(artifacts_dir, artifacts::CONJUGACY)?;
        conj.profile.rho
    } else {
        0.25
    };
    let (ppm, stats) =
        render_basin_slice(&working, &grid, max_iter, rho_in, 1e6, ExecMode::Parallel)?;
    let name = "render.ppm";
    artifacts::write_bytes(artifacts_dir, name, &ppm)?;
    println!(
        "rendered {}x{px} window [{}, {}]x[{}, {}] to {}: {} attracted / {} escaped / {} undecided",
        px,
        w[0],
        w[1],
        w[2],
        w[3],
        artifacts_dir.join(name).display(),
        stats.attracted,
        stats.escaped,
        stats.undecided
    );
    Ok(())
}

/// Manifest + schema verification shared by diagnose and check.
fn verify_schema_set(dir: &Path, config_bytes: Option<&[u8]>) -> Result<Manifest, Failure> {
    let manifest = artifacts::verify_manifest(dir, config_bytes)?;
    let seq: SequenceArtifact = artifacts::read_json(dir, artifacts::SEQUENCE)?;
    if seq.schema != SequenceArtifact::SCHEMA {
        return Err(Failure::Integrity {
            code: "corrupted-artifact",
            message: format!("unsupported sequence schema '{}'", seq.schema),
        });
    }
    let conj: ConjugacyArtifact = artifacts::read_json(dir, artifacts::CONJUGACY)?;
    if conj.schema != ConjugacyArtifact::SCHEMA {
        return Err(Failure::Integrity {
            code: "corrupted-artifact",
            message: format!("unsupported conjugacy schema '{}'", conj.schema),
        });
    }
    Ok(manifest)
}

fn plane_grid(
    k: usize,
    axis_i: usize,
    axis_j: usize,
    center: Option<&[f64]>,
    extent: f64,
    px: usize,
) -> Result<PlaneGrid, Failure> {
    if axis_i >= k || axis_j >= k || axis_i == axis_j {
        return Err(Error::InvalidConfig {
            context: format!("slice axes ({axis_i}, {axis_j}) must be distinct and < {k}"),
        }
        .into());
    }
    if px == 0 || extent <= 0.0 {
        return Err(Error::InvalidConfig {
            context: format!("slice needs positive resolution and extent (px={px}, extent={extent})"),
        }
        .into());
    }
    let center_vec = match center {
        Some(c) if c.len() == k => c.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        Some(c) => {
            return Err(Error::InvalidConfig {
                context: format!("slice center has {} coordinates, expected {k}", c.len()),
            }
            .into())
        }
        None => vec![Complex64::new(0.0, 0.0); k],
    };
    Ok(PlaneGrid {
        center: center_vec,
        axis_i,
        axis_j,
        extent,
        side: px,
    })
}

fn parse_floats(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|part| {
            part.trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig {
                    context: format!("'{part}' is not a number in '{text}'"),
                }
                .into()
            })
        })
        .collect()
}
