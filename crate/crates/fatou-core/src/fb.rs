//! Assembly and evaluation of the conjugated limit maps
//! `Ψₙ = G(n)⁻¹ ∘ Xₙ ∘ F(n)` on the attracting basin, with the convergence,
//! injectivity, basin-membership and surjectivity diagnostics that mirror the
//! construction's estimates at desk scale.
//!
//! Composed carrier inverses `G(n)⁻¹` are always applied as chains of exact
//! single-step triangular inverses: the expanded inverse polynomial's degree
//! would grow multiplicatively with `n`, while the chain stays
//! degree-bounded and numerically stable.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::jet::JetMap;
use crate::normal_form::AttractionProfile;
use crate::sample::{self, PlaneGrid};
use crate::seq::AutomorphismSequence;
use crate::solver::{ConjugacyData, DegreeSelection};
use crate::triangular::TriangularPolyMap;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Forward-orbit coordinates past this norm are treated as escaped to ∞.
const OVERFLOW_GUARD: f64 = 1e120;
/// Sup-grid deltas at or below this level are round-off, not signal.
pub const DELTA_FLOOR: f64 = 1e-13;
/// Relative round-off floor: deltas below this fraction of the evaluated
/// map's scale are noise from the carrier-chain solves, whose cancellation
/// amplifies unit round-off by a few orders of magnitude at deep steps.
pub const REL_DELTA_FLOOR: f64 = 1e-10;
/// Central-difference step for Jacobians at the origin.
pub const FD_STEP: f64 = 1e-6;
/// Tolerance on `‖Ψₙ′(0) − I‖`, accounting for the truncation-residual floor
/// under the finite-difference step.
pub const JACOBIAN_TOL: f64 = 1e-4;
/// Images of distinct grid points must stay separated by at least this
/// fraction of the input separation.
pub const INJECTIVITY_RATIO: f64 = 0.1;
/// Delta growth past the post-minimum jitter band that counts as measured
/// divergence rather than round-off, when the minimum never hit the floor.
const TAIL_GROWTH_GUARD: f64 = 10.0;

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

/// Forward images `z, f₁(z), f₂f₁(z), …` through step `n`, with an overflow
/// guard: an orbit that leaves the guard ball is reported as not in the
/// basin rather than silently producing infinities.
pub fn forward_orbit(steps: &[JetMap], z: &[Complex64], n: usize) -> Result<Vec<Vec<Complex64>>> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(z.to_vec());
    for i in 0..n {
        let w = steps[i].eval(orbit.last().expect("nonempty"));
        let norm = sample::norm(&w);
        if !norm.is_finite() || norm > OVERFLOW_GUARD {
            return Err(Error::NotInBasin { step: i + 1, norm });
        }
        orbit.push(w);
    }
    Ok(orbit)
}

/// `G_{lo+1}⁻¹ ∘ … ∘ G_hi⁻¹` applied pointwise (0-based carrier slice
/// `gs[lo..hi]`), i.e. the inverse of the composition `G_hi ∘ … ∘ G_{lo+1}`.
fn chain_inverse(gs: &[TriangularPolyMap], lo: usize, hi: usize, w: &[Complex64]) -> Vec<Complex64> {
    let mut x = w.to_vec();
    for g in gs[lo..hi].iter().rev() {
        x = g.solve_inverse(&x);
    }
    x
}

/// Evaluate `Ψₙ(z) = G(n)⁻¹(Xₙ(F(n)(z)))` for one point of the basin,
/// in the coordinates the conjugacy was solved in.
pub fn fatou_bieberbach_eval(
    data: &ConjugacyData,
    steps: &[JetMap],
    z: &[Complex64],
    n: usize,
) -> Result<Vec<Complex64>> {
    if n > data.horizon || steps.len() != data.horizon {
        return Err(Error::InvalidConfig {
            context: format!(
                "step {n} outside the solved horizon {} (sequence length {})",
                data.horizon,
                steps.len()
            ),
        });
    }
    let orbit = forward_orbit(steps, z, n)?;
    let x = data.xs[n].eval(&orbit[n]);
    Ok(chain_inverse(&data.gs, 0, n, &x))
}

/// `Ψ_{n+1}(z) − Ψₙ(z)` with the shared forward prefix `F(n)(z)` computed
/// once — the telescoping grouping behind the convergence estimate.
pub fn psi_delta(
    data: &ConjugacyData,
    steps: &[JetMap],
    z: &[Complex64],
    n: usize,
) -> Result<Vec<Complex64>> {
    if n + 1 > data.horizon {
        return Err(Error::InvalidConfig {
            context: format!("delta at step {n} needs horizon ≥ {}", n + 1),
        });
    }
    let orbit = forward_orbit(steps, z, n + 1)?;
    let next = chain_inverse(&data.gs, 0, n + 1, &data.xs[n + 1].eval(&orbit[n + 1]));
    let curr = chain_inverse(&data.gs, 0, n, &data.xs[n].eval(&orbit[n]));
    Ok(sample::sub(&next, &curr))
}

/// Central-difference Jacobian of `z ↦ Ψₙ(z)` at the origin.
pub fn psi_jacobian_at_zero(
    data: &ConjugacyData,
    steps: &[JetMap],
    n: usize,
    step_size: f64,
) -> Result<DMatrix<Complex64>> {
    let k = data.dim;
    let mut jac = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        let mut plus = vec![Complex64::new(0.0, 0.0); k];
        plus[i] = Complex64::new(step_size, 0.0);
        let mut minus = vec![Complex64::new(0.0, 0.0); k];
        minus[i] = Complex64::new(-step_size, 0.0);
        let fp = fatou_bieberbach_eval(data, steps, &plus, n)?;
        let fm = fatou_bieberbach_eval(data, steps, &minus, n)?;
        for r in 0..k {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * step_size);
        }
    }
    Ok(jac)
}

// ---------------------------------------------------------------------------
// Growth constants of the carrier chain
// ---------------------------------------------------------------------------

/// Measured growth data of the carrier chain `G(n) = Gₙ∘…∘G₁`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthConstants {
    /// Per-`n` geometric rate: `sup over unit-sphere samples of ‖G(n)(z)‖`
    /// obeys `≤ βⁿ` on the sampled set after the 5% inflation baked in here.
    pub beta: f64,
    /// Per-step Lipschitz bound of the `Gₙ⁻¹` on the unit ball (max sampled
    /// inverse-Jacobian norm), so the chain satisfies `γⁿ` on the sampled set.
    pub gamma: f64,
    pub samples: usize,
    /// Measured `sup ‖G(n)(z)‖` over the unit-sphere samples, `n = 1..=N`.
    pub composed_sup: Vec<f64>,
}

/// Sample the forward growth rate `β` of the composed carriers and the
/// backward Lipschitz rate `γ` of their single-step inverses.
pub fn growth_constants(
    gs: &[TriangularPolyMap],
    samples: usize,
    mode: ExecMode,
) -> Result<GrowthConstants> {
    if gs.is_empty() || samples == 0 {
        return Err(Error::InvalidConfig {
            context: "growth sampling needs at least one carrier and one sample".into(),
        });
    }
    let k = gs[0].dim();
    let n_steps = gs.len();

    // Forward chain sups per depth.
    let per_sample: Vec<Vec<f64>> = map_indexed(mode, samples, |i| {
        let mut w = sample::sphere_point(k, 1.0, i as u64);
        let mut norms = Vec::with_capacity(n_steps);
        for g in gs {
            w = g.eval(&w);
            norms.push(sample::norm(&w));
        }
        norms
    });
    let mut composed_sup = vec![0.0f64; n_steps];
    for norms in &per_sample {
        for (s, &v) in composed_sup.iter_mut().zip(norms) {
            *s = s.max(v);
        }
    }
    let beta = composed_sup
        .iter()
        .enumerate()
        .map(|(i, &s)| s.powf(1.0 / (i as f64 + 1.0)))
        .fold(0.0f64, f64::max)
        * 1.05;

    // Backward per-step Lipschitz constants: ‖(Gₙ⁻¹)′(w)‖ = ‖Gₙ′(Gₙ⁻¹w)⁻¹‖
    // sampled over the unit ball (sphere indices double as shell samples).
    let lips = map_indexed(mode, n_steps * samples, |idx| {
        let g = &gs[idx / samples];
        let i = (idx % samples) as u64;
        let w = if i % 2 == 0 {
            sample::sphere_point(k, 1.0, i)
        } else {
            sample::ball_point(k, 1.0, i)
        };
        let z = g.solve_inverse(&w);
        let jac = g.jacobian_at(&z);
        let sigma_min = jac
            .svd(false, false)
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        1.0 / sigma_min
    });
    let gamma = lips.into_iter().fold(1.0f64, f64::max);

    Ok(GrowthConstants {
        beta,
        gamma,
        samples,
        composed_sup,
    })
}

// ---------------------------------------------------------------------------
// Convergence parameters
// ---------------------------------------------------------------------------

/// Everything the convergence and surjectivity estimates need, measured from
/// the constructed data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceParams {
    /// Working radius: every `Xₙ` is a small perturbation of the identity on
    /// `B(r)` (coefficient-bound Lipschitz ≤ 1/2), `r` is inside the
    /// certified absorbing radius, and `r^q·Σ C·α^n < 1/2`.
    pub r: f64,
    /// Certified absorbing radius the contraction bound was measured on.
    pub rho: f64,
    /// Upper contraction bound of the sequence near the origin.
    pub b: f64,
    /// Backward Lipschitz rate of the carrier chain.
    pub gamma: f64,
    /// Forward growth rate of the carrier chain.
    pub beta: f64,
    /// Extension degree: the conjugacy holds through degree `q + 1`.
    pub q: usize,
    /// Telescoping contraction ratio `γ·b^q`.
    pub alpha_rate: f64,
    /// Measured per-step residual constant: `sup ‖Gₙ⁻¹XₙFₙ(z) − X_{n−1}(z)‖`
    /// over unit-sphere samples and all steps.
    pub residual_const: f64,
    /// Steps until the sampled unit ball is carried into `B(r)`.
    pub burn_in: usize,
}

/// Smallest `m` with `‖F(m)(z)‖ ≤ r` for every sample point (the spec of a
/// compact set entering the working ball).
pub fn burn_in_steps(steps: &[JetMap], points: &[Vec<Complex64>], r: f64) -> Result<usize> {
    let mut current: Vec<Vec<Complex64>> = points.to_vec();
    for m in 0..=steps.len() {
        let worst = current.iter().map(|z| sample::norm(z)).fold(0.0, f64::max);
        if worst <= r {
            return Ok(m);
        }
        if m == steps.len() {
            break;
        }
        for z in &mut current {
            *z = steps[m].eval(z);
            let norm = sample::norm(z);
            if !norm.is_finite() || norm > OVERFLOW_GUARD {
                return Err(Error::NotInBasin { step: m + 1, norm });
            }
        }
    }
    Err(Error::HorizonTooShort {
        horizon: steps.len(),
        context: format!("sampled compact set never contracted into B({r:.3e})"),
    })
}

/// Largest radius from the geometric grid `{0.8^i}` where every `Xₙ`'s
/// nonlinear part has coefficient-bound Lipschitz constant at most 1/2 —
/// the contraction-perturbation criterion for invertibility on `B(r)`.
pub fn invertibility_radius(xs: &[JetMap]) -> Result<f64> {
    // Per degree m ≥ 2: the worst (over steps and components) coefficient sum.
    let mut worst_by_degree: Vec<(u32, f64)> = Vec::new();
    let mut d_max = 0u32;
    for x in xs {
        d_max = d_max.max(x.degree());
    }
    for m in 2..=d_max {
        let mut worst = 0.0f64;
        for x in xs {
            if m > x.degree() {
                continue;
            }
            for j in 0..x.dim() {
                let sum: f64 = x.component(j).stratum(m).iter().map(|c| c.norm()).sum();
                worst = worst.max(sum);
            }
        }
        worst_by_degree.push((m, worst));
    }
    let bound = |r: f64| -> f64 {
        worst_by_degree
            .iter()
            .map(|&(m, s)| s * r.powi(m as i32 - 1))
            .sum()
    };
    let mut r = 1.0f64;
    for _ in 0..200 {
        if bound(r) <= 0.5 {
            return Ok(r);
        }
        r *= 0.8;
    }
    Err(Error::InfeasibleParameters {
        context: "no radius down to 0.8^200 makes the conjugating jets near-isometric".into(),
    })
}

/// Measure the constants of the convergence/surjectivity estimates from the
/// extended conjugacy data.
pub fn convergence_params(
    data: &ConjugacyData,
    steps: &[JetMap],
    sel: &DegreeSelection,
    growth: &GrowthConstants,
    attraction: &AttractionProfile,
    samples: usize,
    mode: ExecMode,
) -> Result<ConvergenceParams> {
    if (data.degree_x as usize) < sel.q + 1 {
        return Err(Error::InvalidDegree {
            degree: data.degree_x,
            context: format!("convergence estimates need the extension to degree q+1 = {}", sel.q + 1),
        });
    }
    if !(sel.alpha_rate < 1.0) {
        return Err(Error::InfeasibleParameters {
            context: format!("contraction ratio α = {} must be < 1", sel.alpha_rate),
        });
    }
    let n_steps = data.horizon;
    let k = data.dim;

    // Per-step conjugation residual on unit-sphere samples.
    let residuals = map_indexed(mode, n_steps * samples, |idx| {
        let i = idx / samples;
        let z = sample::sphere_point(k, 1.0, (idx % samples) as u64);
        let w = steps[i].eval(&z);
        let through = data.gs[i].solve_inverse(&data.xs[i + 1].eval(&w));
        sample::dist(&through, &data.xs[i].eval(&z))
    });
    let residual_const = residuals.into_iter().fold(0.0f64, f64::max);

    // Working radius: invertibility bound, inside the absorbing ball, then
    // shrunk geometrically until the surjectivity smallness condition holds.
    let alpha = sel.alpha_rate;
    let tail_sum = |r: f64| r.powi(sel.q as i32) * residual_const * alpha / (1.0 - alpha);
    let mut r = invertibility_radius(&data.xs)?.min(attraction.rho);
    let mut shrunk = 0;
    while tail_sum(r) >= 0.5 {
        r *= 0.8;
        shrunk += 1;
        if shrunk > 200 {
            return Err(Error::InfeasibleParameters {
                context: format!(
                    "surjectivity smallness r^q·ΣCαⁿ < 1/2 unreachable (C = {residual_const:.3e}, α = {alpha})"
                ),
            });
        }
    }

    let points: Vec<Vec<Complex64>> = (0..samples)
        .map(|i| sample::ball_point(k, 1.0, i as u64))
        .collect();
    let burn_in = burn_in_steps(steps, &points, r)?;

    Ok(ConvergenceParams {
        r,
        rho: attraction.rho,
        b: attraction.b,
        gamma: growth.gamma,
        beta: growth.beta,
        q: sel.q,
        alpha_rate: sel.alpha_rate,
        residual_const,
        burn_in,
    })
}

// ---------------------------------------------------------------------------
// Convergence report
// ---------------------------------------------------------------------------

/// One row of the convergence table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `sup over the grid of ‖Ψ_{n+1} − Ψₙ‖`.
    pub sup_delta: f64,
    /// Consecutive ratio (absent on the first row or after a floor value).
    pub ratio: Option<f64>,
}

/// Sup-grid convergence of the `Ψₙ`, with the injectivity and derivative
/// checks that accompany the limit argument.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares geometric ratio over the post-burn-in window, truncated
    /// at the delta minimum and ignoring floor-level deltas; absent when
    /// everything already sits at the floor. True deltas are bounded by a
    /// decaying envelope, so values past the minimum are dominated by
    /// round-off amplified through the carrier chain and never enter the fit.
    pub fitted_ratio: Option<f64>,
    pub alpha_rate: f64,
    /// Effective round-off floor used for this grid (absolute floor or the
    /// relative floor against the evaluated map's scale, whichever is larger).
    pub floor: f64,
    /// The post-burn-in deltas decay to round-off level at their minimum:
    /// converged outright. Growth past that point is amplified round-off.
    pub converged_floor: bool,
    /// Fitted ratio < 1 and within 1.2× the predicted rate (or floor), with
    /// no tail anomaly.
    pub ratio_ok: bool,
    /// Step (row label) at which the deltas attain their minimum.
    pub min_index: usize,
    /// The deltas grew well past a minimum that never reached the floor:
    /// measured divergence that cannot be blamed on round-off.
    pub tail_anomaly: bool,
    /// Fitted geometric growth of the anomalous tail (only with the flag).
    pub tail_ratio: Option<f64>,
    pub burn_in: usize,
    /// Min over grid pairs of image distance at the deepest step.
    pub min_image_distance: f64,
    /// Min over grid pairs of (image distance / input distance).
    pub min_separation_ratio: f64,
    pub injectivity_ok: bool,
    /// `‖Ψₙ′(0) − I‖_max` at the deepest step, by central differences.
    pub jacobian_error: f64,
    pub jacobian_ok: bool,
}

impl ConvergenceReport {
    /// The hard verdict: geometric convergence must be observed (or already
    /// resolved to round-off).
    pub fn check(&self) -> Result<()> {
        if self.tail_anomaly {
            return Err(Error::NoConvergence {
                ratio: self.tail_ratio.unwrap_or(f64::NAN),
                window_start: self.min_index,
            });
        }
        if self.converged_floor {
            return Ok(());
        }
        match self.fitted_ratio {
            Some(ratio) if ratio < 1.0 => Ok(()),
            Some(ratio) => Err(Error::NoConvergence {
                ratio,
                window_start: self.burn_in,
            }),
            None => Err(Error::NoConvergence {
                ratio: f64::NAN,
                window_start: self.burn_in,
            }),
        }
    }
}

/// Least-squares geometric ratio of `values[window_start..]`, ignoring
/// entries at or below `floor`; `None` with fewer than two usable points.
pub fn fit_geometric_ratio(values: &[f64], window_start: usize, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(window_start)
        .filter(|&(_, &v)| v > floor)
        .map(|(i, &v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some(((n * sxy - sx * sy) / denom).exp())
}

/// Evaluate `Ψₙ` over a grid for `n = n_lo..=n_hi` and report sup deltas,
/// the fitted geometric ratio against `α_rate`, grid injectivity, and the
/// identity-derivative check at the origin.
pub fn convergence_report(
    data: &ConjugacyData,
    steps: &[JetMap],
    grid: &[Vec<Complex64>],
    n_range: (usize, usize),
    params: &ConvergenceParams,
    mode: ExecMode,
) -> Result<ConvergenceReport> {
    let (n_lo, n_hi) = n_range;
    if grid.is_empty() || n_hi <= n_lo || n_hi > data.horizon {
        return Err(Error::InvalidConfig {
            context: format!(
                "report needs a nonempty grid and 0 ≤ {n_lo} < {n_hi} ≤ horizon {}",
                data.horizon
            ),
        });
    }
    let burn_in = burn_in_steps(steps, grid, params.r)?;

    // Ψₙ(z) for every grid point and every n in range; one forward orbit per
    // point, one carrier chain per (point, n).
    let psis: Vec<Result<Vec<Vec<Complex64>>>> = map_indexed(mode, grid.len(), |p| {
        let orbit = forward_orbit(steps, &grid[p], n_hi)?;
        Ok((n_lo..=n_hi)
            .map(|n| chain_inverse(&data.gs, 0, n, &data.xs[n].eval(&orbit[n])))
            .collect())
    });
    let mut per_point = Vec::with_capacity(grid.len());
    for p in psis {
        per_point.push(p?);
    }

    let deltas: Vec<f64> = (0..(n_hi - n_lo))
        .map(|i| {
            per_point
                .iter()
                .map(|vals| sample::dist(&vals[i + 1], &vals[i]))
                .fold(0.0, f64::max)
        })
        .collect();
    let psi_scale = per_point
        .iter()
        .flatten()
        .map(|v| sample::norm(v))
        .fold(0.0, f64::max);
    let floor = DELTA_FLOOR.max(REL_DELTA_FLOOR * psi_scale);

    let window_start = burn_in.saturating_sub(n_lo);
    if window_start >= deltas.len() {
        return Err(Error::HorizonTooShort {
            horizon: n_hi,
            context: format!("burn-in {burn_in} leaves no convergence window above step {n_lo}"),
        });
    }
    let min_idx = window_start
        + deltas[window_start..]
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |(bi, bv), (i, &v)| {
                if v < bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0;
    let min_delta = deltas[min_idx];
    let converged_floor = min_delta <= floor;
    let fitted_ratio = fit_geometric_ratio(&deltas[..=min_idx], window_start, floor);
    let tail_anomaly = !converged_floor
        && deltas[min_idx..]
            .iter()
            .any(|&d| d > TAIL_GROWTH_GUARD * min_delta.max(floor));
    let tail_ratio = if tail_anomaly {
        fit_geometric_ratio(&deltas, min_idx, floor)
    } else {
        None
    };
    let ratio_ok = !tail_anomaly
        && (converged_floor
            || fitted_ratio.is_some_and(|q| q < 1.0 && q <= 1.2 * params.alpha_rate));

    let rows: Vec<ConvergenceRow> = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| ConvergenceRow {
            n: n_lo + i,
            sup_delta: d,
            ratio: (i > 0 && i <= min_idx && deltas[i - 1] > floor).then(|| d / deltas[i - 1]),
        })
        .collect();

    // Injectivity surrogate on the deepest step's images.
    let last: Vec<&Vec<Complex64>> = per_point.iter().map(|v| v.last().expect("n_hi ≥ n_lo")).collect();
    let mut min_image_distance = f64::INFINITY;
    let mut min_separation_ratio = f64::INFINITY;
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            let input = sample::dist(&grid[i], &grid[j]);
            if input < 1e-300 {
                continue;
            }
            let image = sample::dist(last[i], last[j]);
            min_image_distance = min_image_distance.min(image);
            min_separation_ratio = min_separation_ratio.min(image / input);
        }
    }
    let injectivity_ok = min_image_distance > 0.0 && min_separation_ratio >= INJECTIVITY_RATIO;

    let jac = psi_jacobian_at_zero(data, steps, n_hi, FD_STEP)?;
    let k = data.dim;
    let mut jacobian_error = 0.0f64;
    for r in 0..k {
        for c in 0..k {
            let expect = if r == c { 1.0 } else { 0.0 };
            jacobian_error = jacobian_error.max((jac[(r, c)] - Complex64::new(expect, 0.0)).norm());
        }
    }
    let jacobian_ok = jacobian_error <= JACOBIAN_TOL;

    Ok(ConvergenceReport {
        rows,
        fitted_ratio,
        alpha_rate: params.alpha_rate,
        floor,
        converged_floor,
        ratio_ok,
        min_index: n_lo + min_idx,
        tail_anomaly,
        tail_ratio,
        burn_in,
        min_image_distance,
        min_separation_ratio,
        injectivity_ok,
        jacobian_error,
        jacobian_ok,
    })
}

// ---------------------------------------------------------------------------
// Basin membership
// ---------------------------------------------------------------------------

/// What happened to a forward orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasinOutcome {
    /// Entered the certified absorbing ball at `step` (and stays by
    /// containment).
    Attracted { step: usize },
    /// Left the escape radius at `step`. Not a certificate of divergence —
    /// only that the orbit exited the monitored window.
    Escaped { step: usize },
    Undecided { max_iter: usize },
}

/// Verdict for one starting point.
#[derive(Clone, Debug, Serialize)]
pub struct BasinVerdict {
    pub point: Vec<Complex64>,
    pub outcome: BasinOutcome,
    /// Entry step into the absorbing ball, when attracted.
    pub entry_step: Option<usize>,
}

/// Iterate a point forward and classify it against an absorbing radius
/// `rho_in` (certified separately) and an escape radius `rho_out`.
pub fn basin_membership(
    seq: &AutomorphismSequence,
    z: &[Complex64],
    max_iter: usize,
    rho_in: f64,
    rho_out: f64,
) -> Result<BasinVerdict> {
    if !(rho_in > 0.0 && rho_in < rho_out) {
        return Err(Error::InvalidConfig {
            context: format!("need 0 < rho_in ({rho_in}) < rho_out ({rho_out})"),
        });
    }
    let mut w = z.to_vec();
    for step in 0..=max_iter {
        let norm = sample::norm(&w);
        if norm <= rho_in {
            return Ok(BasinVerdict {
                point: z.to_vec(),
                outcome: BasinOutcome::Attracted { step },
                entry_step: Some(step),
            });
        }
        if norm > rho_out {
            return Ok(BasinVerdict {
                point: z.to_vec(),
                outcome: BasinOutcome::Escaped { step },
                entry_step: None,
            });
        }
        if step == max_iter {
            break;
        }
        w = seq.step(step + 1).eval(&w);
    }
    Ok(BasinVerdict {
        point: z.to_vec(),
        outcome: BasinOutcome::Undecided { max_iter },
        entry_step: None,
    })
}

// ---------------------------------------------------------------------------
// Surjectivity probe
// ---------------------------------------------------------------------------

/// Evidence that `B(R)` lands inside the image of the limit map: a depth `m`
/// carrying the sphere of radius `R` inside `B(r/2)` under `G(m)`, plus the
/// sampled half-ball displacement bound behind `Ψ(K_m) ⊃ B(r/2)`.
#[derive(Clone, Debug, Serialize)]
pub struct SurjectivityCertificate {
    pub target_radius: f64,
    pub r: f64,
    /// Smallest depth with the sphere bound satisfied.
    pub m: usize,
    /// Measured `sup over ∂B(R) samples of ‖G(m)(z)‖` (must be < r/2).
    pub sphere_sup: f64,
    /// Max over samples and depths of `‖G(m,n)⁻¹XₙF(m,n)(z) − z‖/‖z‖`
    /// (must be ≤ 1/2).
    pub displacement_max: f64,
    /// Depths tested for the displacement bound: `m+1..=horizon`.
    pub tested_from: usize,
    pub tested_to: usize,
    pub samples: usize,
    pub pass: bool,
}

/// Find the probe depth for a target radius and verify the displacement
/// bound on samples of `B(r)`.
pub fn surjectivity_probe(
    data: &ConjugacyData,
    steps: &[JetMap],
    params: &ConvergenceParams,
    target_radius: f64,
    samples: usize,
    mode: ExecMode,
) -> Result<SurjectivityCertificate> {
    if target_radius <= 0.0 || samples == 0 {
        return Err(Error::InvalidConfig {
            context: "surjectivity probe needs a positive radius and samples".into(),
        });
    }
    let k = data.dim;
    let n_steps = data.horizon;
    let half_r = params.r / 2.0;

    // Sphere sups of the forward carrier chain, per depth.
    let chains: Vec<Vec<f64>> = map_indexed(mode, samples, |i| {
        let mut w = sample::sphere_point(k, target_radius, i as u64);
        data.gs
            .iter()
            .map(|g| {
                w = g.eval(&w);
                sample::norm(&w)
            })
            .collect()
    });
    let mut sups = vec![0.0f64; n_steps];
    for c in &chains {
        for (s, &v) in sups.iter_mut().zip(c) {
            *s = s.max(v);
        }
    }
    let m = match sups.iter().position(|&s| s < half_r) {
        Some(i) => i + 1,
        None => {
            return Err(Error::HorizonTooShort {
                horizon: n_steps,
                context: format!(
                    "no depth carries the sphere of radius {target_radius} into B({half_r:.3e}); best sup {:.3e}",
                    sups.iter().copied().fold(f64::INFINITY, f64::min)
                ),
            })
        }
    };
    let sphere_sup = sups[m - 1];

    // Half-ball displacement on samples of B(r), all depths n in m+1..=N.
    let disps: Vec<Result<f64>> = map_indexed(mode, samples, |i| {
        let z = sample::ball_point(k, params.r, i as u64 + 1);
        let z_norm = sample::norm(&z);
        if z_norm < params.r * 1e-6 {
            return Ok(0.0);
        }
        // z plays the role of a point already carried to depth m; push it
        // through f_{m+1}, f_{m+2}, … and pull back through the same carriers.
        let mut worst = 0.0f64;
        let mut w = z.clone();
        for n in (m + 1)..=n_steps {
            w = steps[n - 1].eval(&w);
            let x = data.xs[n].eval(&w);
            let back = chain_inverse(&data.gs, m, n, &x);
            worst = worst.max(sample::dist(&back, &z) / z_norm);
        }
        Ok(worst)
    });
    let mut displacement_max = 0.0f64;
    for d in disps {
        displacement_max = displacement_max.max(d?);
    }

    Ok(SurjectivityCertificate {
        target_radius,
        r: params.r,
        m,
        sphere_sup,
        displacement_max,
        tested_from: m + 1,
        tested_to: n_steps,
        samples,
        pass: sphere_sup < half_r && displacement_max <= 0.5,
    })
}

// ---------------------------------------------------------------------------
// Basin slice rendering
// ---------------------------------------------------------------------------

/// Tallies of a rendered slice.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SliceStats {
    pub attracted: usize,
    pub escaped: usize,
    pub undecided: usize,
    pub max_entry_step: usize,
}

/// Render a plane slice of the basin as a binary PPM (P6): entry-step heat
/// map under "palette v1" — attracted points ramp dark blue → yellow with
/// entry step, escaped points are brick red, undecided points black.
pub fn render_basin_slice(
    seq: &AutomorphismSequence,
    grid: &PlaneGrid,
    max_iter: usize,
    rho_in: f64,
    rho_out: f64,
    mode: ExecMode,
) -> Result<(Vec<u8>, SliceStats)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig {
            context: "cannot render an empty grid".into(),
        });
    }
    let side = grid.side;
    let verdicts: Vec<Result<BasinVerdict>> = map_indexed(mode, side * side, |idx| {
        basin_membership(seq, &grid.point(idx / side, idx % side), max_iter, rho_in, rho_out)
    });
    let mut outcomes = Vec::with_capacity(side * side);
    for v in verdicts {
        outcomes.push(v?.outcome);
    }

    let mut stats = SliceStats {
        attracted: 0,
        escaped: 0,
        undecided: 0,
        max_entry_step: 0,
    };
    for o in &outcomes {
        match o {
            BasinOutcome::Attracted { step } => {
                stats.attracted += 1;
                stats.max_entry_step = stats.max_entry_step.max(*step);
            }
            BasinOutcome::Escaped { .. } => stats.escaped += 1,
            BasinOutcome::Undecided { .. } => stats.undecided += 1,
        }
    }

    const BLUE: [f64; 3] = [16.0, 36.0, 120.0];
    const YELLOW: [f64; 3] = [252.0, 233.0, 80.0];
    const BRICK: [u8; 3] = [140, 22, 22];
    let span = stats.max_entry_step.max(1) as f64;
    let mut bytes = format!("P6\n# palette v1\n{side} {side}\n255\n").into_bytes();
    for o in &outcomes {
        match o {
            BasinOutcome::Attracted { step } => {
                let t = *step as f64 / span;
                for c in 0..3 {
                    bytes.push((BLUE[c] + t * (YELLOW[c] - BLUE[c])).round() as u8);
                }
            }
            BasinOutcome::Escaped { .. } => bytes.extend_from_slice(&BRICK),
            BasinOutcome::Undecided { .. } => bytes.extend_from_slice(&[0, 0, 0]),
        }
    }
    Ok((bytes, stats))
}
