//! Degree-by-degree construction of the conjugating jets `{Xₙ}` and their
//! lower-triangular carriers `{Gₙ}` for a normalized attracting sequence
//! `{fₙ}`, satisfying `Xₙ = [Gₙ ∘ X_{n−1} ∘ fₙ⁻¹]_d` on a finite horizon.
//!
//! Every coefficient of `X` obeys a scalar affine recurrence
//!
//! ```text
//! c_{n,j,α} = λ_{n,j} λ_n^{−α} c_{n−1,j,α} + g_{n,j,α} λ_n^{−α} + C_{n,j,α}
//! ```
//!
//! whose constant `C` collects all earlier-fixed terms. Addresses split into
//! two kinds. *Resonant* addresses (`α` supported strictly before `j`, the
//! lower-triangular ones) may have contracting multipliers; there the `X`
//! coefficient is pinned to zero and the term is absorbed into `Gₙ`.
//! Everywhere else the multiplier is expanding — that is exactly the
//! correctly-ordered condition — and the unique bounded solution of the
//! recurrence is found by backward iteration from the horizon, where the
//! expanding multiplier makes the tail influence geometrically small.
//!
//! Induction order: degree ascending, component ascending, and powers in
//! ascending lexicographic order of the exponent tuple. Because the linear
//! parts involved are lower triangular, fixing an address never disturbs any
//! address already fixed; the per-stratum couplings are pure linear algebra
//! and are maintained incrementally instead of re-composing the maps for
//! every single term.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::jet::JetMap;
use crate::monomial::{self, MultiIndex};
use crate::normal_form::is_correctly_ordered;
use crate::poly::{PowerTable, ScalarPoly};
use crate::triangular::TriangularPolyMap;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// Bounded orbits of expanding affine maps
// ---------------------------------------------------------------------------

/// A finite sequence of expanding affine self-maps of `C`,
/// `z ↦ multipliers[n]·z + offsets[n]`.
#[derive(Clone, Debug)]
pub struct ExpandingAffineSequence {
    pub multipliers: Vec<Complex64>,
    pub offsets: Vec<Complex64>,
}

/// The bounded orbit of an expanding affine sequence, with bookkeeping.
#[derive(Clone, Debug)]
pub struct BoundedOrbit {
    /// `values[n]` for `n = 0..=N`; `values[n] = aₙ·values[n−1] + bₙ` holds to
    /// round-off by construction.
    pub values: Vec<Complex64>,
    /// Radius of a disk containing the whole orbit.
    pub radius: f64,
    /// How much `values[0]` can move if the horizon grows: `radius·∏|aₙ|⁻¹`.
    pub horizon_error: f64,
    /// Smallest multiplier modulus (conditioning of the solve).
    pub min_modulus: f64,
}

/// Compute the bounded orbit of an expanding affine sequence by backward
/// iteration from zero at the horizon. Forward iteration would amplify
/// round-off by `∏|aₙ|`; the backward pass contracts it instead, and the
/// returned values satisfy the forward recurrence to machine precision.
pub fn bounded_affine_orbit(seq: &ExpandingAffineSequence) -> Result<BoundedOrbit> {
    let n = seq.multipliers.len();
    if seq.offsets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: seq.offsets.len(),
            context: "one offset per multiplier".into(),
        });
    }
    if n == 0 {
        return Err(Error::Domain {
            context: "empty affine sequence has no orbit".into(),
        });
    }
    let mut min_modulus = f64::INFINITY;
    for (i, a) in seq.multipliers.iter().enumerate() {
        let m = a.norm();
        if m <= 1.0 {
            return Err(Error::NotExpanding {
                step: i + 1,
                modulus: m,
            });
        }
        min_modulus = min_modulus.min(m);
    }
    let sup_offset = seq.offsets.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let radius = sup_offset / (min_modulus - 1.0) + 1.0;

    let mut values = vec![ZERO; n + 1];
    for i in (1..=n).rev() {
        values[i - 1] = (values[i] - seq.offsets[i - 1]) / seq.multipliers[i - 1];
    }
    let shrink: f64 = seq.multipliers.iter().map(|a| a.norm().recip()).product();
    Ok(BoundedOrbit {
        values,
        radius,
        horizon_error: radius * shrink,
        min_modulus,
    })
}

// ---------------------------------------------------------------------------
// Term addresses and degree selection
// ---------------------------------------------------------------------------

/// One coefficient slot: component `index` (0-based), monomial `power`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermAddress {
    pub index: usize,
    pub power: MultiIndex,
}

impl TermAddress {
    /// True when the power involves only variables strictly before the
    /// component index — the resonant addresses a triangular carrier can
    /// absorb.
    pub fn is_lower_triangular(&self) -> bool {
        self.power.supported_below(self.index)
    }
}

/// Truncation degrees chosen from the measured contraction data.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DegreeSelection {
    /// Carrier degree: beyond `p`, every multiplier is expanding, so the
    /// carriers never need terms above `p`.
    pub p: usize,
    /// Extension degree: `γ·b^q < 1` makes the telescoping deltas summable.
    pub q: usize,
    /// The contraction ratio `γ·b^q` the convergence diagnostics test against.
    pub alpha_rate: f64,
}

/// Pick `p` (smallest with `ξ_exp·max^p < min`) and `q` (smallest with
/// `γ·b^q < 1`).
pub fn select_degrees(
    min_modulus: f64,
    max_modulus: f64,
    xi_exp: f64,
    gamma: f64,
    b: f64,
) -> Result<DegreeSelection> {
    if !(min_modulus > 0.0 && min_modulus <= max_modulus && max_modulus < 1.0) {
        return Err(Error::InfeasibleParameters {
            context: format!(
                "moduli range ({min_modulus}, {max_modulus}) must satisfy 0 < min ≤ max < 1"
            ),
        });
    }
    if xi_exp <= 1.0 {
        return Err(Error::InfeasibleParameters {
            context: format!("expansion margin ξ_exp = {xi_exp} must exceed 1"),
        });
    }
    if gamma < 1.0 || !(b > 0.0 && b < 1.0) {
        return Err(Error::InfeasibleParameters {
            context: format!("growth data (γ = {gamma}, b = {b}) must satisfy γ ≥ 1, 0 < b < 1"),
        });
    }
    let mut p = 1usize;
    while xi_exp * max_modulus.powi(p as i32) >= min_modulus {
        p += 1;
        if p > 512 {
            return Err(Error::InfeasibleParameters {
                context: "no feasible carrier degree p ≤ 512".into(),
            });
        }
    }
    let mut q = 1usize;
    while gamma * b.powi(q as i32) >= 1.0 {
        q += 1;
        if q > 512 {
            return Err(Error::InfeasibleParameters {
                context: "no feasible extension degree q ≤ 512".into(),
            });
        }
    }
    Ok(DegreeSelection {
        p,
        q,
        alpha_rate: gamma * b.powi(q as i32),
    })
}

// ---------------------------------------------------------------------------
// Conjugacy data
// ---------------------------------------------------------------------------

/// Solver tuning knobs.
#[derive(Clone, Copy, Debug)]
pub struct SolveParams {
    /// Expansion margin: multipliers in `(1, ξ_exp)` still solve but are
    /// flagged as ill-conditioned.
    pub xi_exp: f64,
    /// Ordering slack the input moduli must satisfy.
    pub xi_order: f64,
    /// Largest tolerated strictly-upper residue in the input linear parts.
    pub upper_tol: f64,
    pub mode: ExecMode,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            xi_exp: 1.05,
            xi_order: 0.95,
            upper_tol: 1e-6,
            mode: ExecMode::default(),
        }
    }
}

/// A term whose multiplier modulus fell inside `(1, ξ_exp)`: solved, but the
/// bounded orbit is poorly conditioned there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlaggedTerm {
    /// Step (1-based) attaining the worst modulus.
    pub step: usize,
    pub index: usize,
    pub power: Vec<u32>,
    pub modulus: f64,
}

/// The constructed conjugating sequences and their health report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjugacyData {
    pub dim: usize,
    pub horizon: usize,
    /// Carrier degree `p` (the `Gₙ` never grow past it).
    pub degree_g: u32,
    /// Current degree of the `Xₙ` (`p`, or `q+1` after extension).
    pub degree_x: u32,
    /// `X₀..X_N`: identity linear part plus solved bounded coefficients.
    pub xs: Vec<JetMap>,
    /// `G₁..G_N`: lower triangular, `Gₙ′(0) = fₙ′(0)`.
    pub gs: Vec<TriangularPolyMap>,
    /// `max |coefficient|` of each `Xₙ` (boundedness evidence).
    pub x_norms: Vec<f64>,
    /// Per-step conjugacy residual
    /// `‖[Gₙ∘X_{n−1}∘fₙ⁻¹]_d − Xₙ‖` at `d = degree_x`.
    pub residuals: Vec<f64>,
    pub ill_conditioned: Vec<FlaggedTerm>,
}

impl ConjugacyData {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_x_norm(&self) -> f64 {
        self.x_norms.iter().copied().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Shared per-pass context
// ---------------------------------------------------------------------------

struct PassContext {
    dim: usize,
    horizon: usize,
    /// `[fₙ⁻¹]` truncated at the working degree, one per step.
    f_invs: Vec<JetMap>,
    /// Carrier linear parts (lower triangular).
    lin: Vec<DMatrix<Complex64>>,
    /// Diagonals of the `fₙ⁻¹` linear parts.
    hat_diag: Vec<Vec<Complex64>>,
}

impl PassContext {
    fn new(steps: &[JetMap], gs: &[TriangularPolyMap], degree: u32, mode: ExecMode) -> Result<Self> {
        let dim = steps[0].dim();
        let f_invs_res: Vec<Result<JetMap>> =
            map_indexed(mode, steps.len(), |i| steps[i].to_degree(degree).inverse());
        let mut f_invs = Vec::with_capacity(steps.len());
        for r in f_invs_res {
            f_invs.push(r?);
        }
        let lin: Vec<DMatrix<Complex64>> = gs
            .iter()
            .map(|g| {
                DMatrix::from_fn(dim, dim, |r, c| {
                    if r == c {
                        g.diag()[r]
                    } else if c < r {
                        g.shear(r).linear_coeff(c)
                    } else {
                        ZERO
                    }
                })
            })
            .collect();
        let hat_diag: Vec<Vec<Complex64>> = f_invs
            .iter()
            .map(|f| (0..dim).map(|j| f.component(j).linear_coeff(j)).collect())
            .collect();
        Ok(PassContext {
            dim,
            horizon: steps.len(),
            f_invs,
            lin,
            hat_diag,
        })
    }

    fn multiplier(&self, step_idx: usize, j: usize, alpha: &MultiIndex) -> Complex64 {
        self.lin[step_idx][(j, j)] * self.hat_power(step_idx, alpha)
    }

    /// `λ_n^{−α}` as the actual product of inverse-linear diagonal entries.
    fn hat_power(&self, step_idx: usize, alpha: &MultiIndex) -> Complex64 {
        alpha
            .exps()
            .iter()
            .enumerate()
            .map(|(i, &e)| self.hat_diag[step_idx][i].powu(e))
            .product()
    }
}

// ---------------------------------------------------------------------------
// Reference single-term solve (assembles the composition from scratch)
// ---------------------------------------------------------------------------

/// Coefficient sequences for one address.
#[derive(Clone, Debug)]
pub struct TermSolution {
    pub address: TermAddress,
    /// `c_{n,j,α}` for `n = 0..=N` (all zero on absorbed addresses).
    pub x_coeffs: Vec<Complex64>,
    /// `g_{n,j,α}` for `n = 1..=N` (all zero on expanding addresses).
    pub g_coeffs: Vec<Complex64>,
    /// Smallest multiplier modulus met (`∞` on absorbed addresses).
    pub min_modulus: f64,
}

/// Solve one address against the frozen partial state, assembling each
/// constant `C_{n,j,α}` by composing the maps outright. This is the reference
/// path: [`build_conjugacy`] computes identical values via incremental
/// bookkeeping and is differenced against this in tests.
///
/// Preconditions: every earlier address (lower degree; same degree, lower
/// index; same degree and index, lexicographically smaller power) is already
/// written into `xs`/`gs`, and the slot at `addr` itself is still zero in
/// both.
pub fn solve_term(
    xs: &[JetMap],
    gs: &[TriangularPolyMap],
    steps: &[JetMap],
    addr: &TermAddress,
    absorb_lower: bool,
    params: &SolveParams,
) -> Result<TermSolution> {
    let m = addr.power.degree();
    let ctx = PassContext::new(steps, gs, m, params.mode)?;
    let n_steps = ctx.horizon;
    let offsets: Vec<Complex64> = map_indexed(params.mode, n_steps, |i| {
        let inner = xs[i].compose(&ctx.f_invs[i], m);
        let h = gs[i].to_jet(m).compose(&inner, m);
        h.coeff(addr.index, &addr.power)
    });
    if absorb_lower && addr.is_lower_triangular() {
        let g_coeffs: Vec<Complex64> = (0..n_steps)
            .map(|i| -offsets[i] / ctx.hat_power(i, &addr.power))
            .collect();
        return Ok(TermSolution {
            address: addr.clone(),
            x_coeffs: vec![ZERO; n_steps + 1],
            g_coeffs,
            min_modulus: f64::INFINITY,
        });
    }
    let multipliers: Vec<Complex64> = (0..n_steps)
        .map(|i| ctx.multiplier(i, addr.index, &addr.power))
        .collect();
    let orbit = bounded_affine_orbit(&ExpandingAffineSequence {
        multipliers,
        offsets,
    })?;
    Ok(TermSolution {
        address: addr.clone(),
        x_coeffs: orbit.values,
        g_coeffs: vec![ZERO; n_steps],
        min_modulus: orbit.min_modulus,
    })
}

// ---------------------------------------------------------------------------
// Stratum-at-a-time solve
// ---------------------------------------------------------------------------

/// Solve every address of degree `m`, writing coefficients into `xs`/`gs`.
///
/// `absorb_lower` selects the carrier branch for resonant addresses (true
/// while building up to `p`); past `p` everything must be expanding and a
/// contracting multiplier means `p` was chosen too small.
fn solve_stratum(
    xs: &mut [JetMap],
    gs: &mut [TriangularPolyMap],
    ctx: &PassContext,
    m: u32,
    absorb_lower: bool,
    degree_g: u32,
    params: &SolveParams,
    flagged: &mut Vec<FlaggedTerm>,
) -> Result<()> {
    let k = ctx.dim;
    let n_steps = ctx.horizon;
    let tbl = monomial::table(k, m);
    let strat: Vec<MultiIndex> = tbl.stratum(m).to_vec();
    let s = strat.len();
    let off = tbl.offset(m);

    // Per step: the degree-m coefficients of Gₙ∘X_{n−1}∘fₙ⁻¹ with the current
    // (all zero at degree m) state, and the monomial-transport matrix
    // K[β][α] = coefficient of z^α in (Λ̂ₙ z)^β, Λ̂ₙ the fₙ⁻¹ linear part.
    struct StepScratch {
        base: Vec<Complex64>, // k·s, component-major
        kmat: Vec<Complex64>, // s·s, source-major
    }
    let mut scratch: Vec<StepScratch> = {
        let xs_ref: &[JetMap] = xs;
        let gs_ref: &[TriangularPolyMap] = gs;
        map_indexed(params.mode, n_steps, |i| {
            let inner = xs_ref[i].compose(&ctx.f_invs[i], m);
            let h = gs_ref[i].to_jet(m).compose(&inner, m);
            let mut base = vec![ZERO; k * s];
            for j in 0..k {
                base[j * s..(j + 1) * s].copy_from_slice(h.component(j).stratum(m));
            }
            let rows: Vec<ScalarPoly> = (0..k)
                .map(|r| {
                    let coeffs: Vec<Complex64> =
                        (0..k).map(|c| ctx.f_invs[i].component(r).linear_coeff(c)).collect();
                    ScalarPoly::linear(&coeffs)
                })
                .collect();
            let powers = PowerTable::for_support(&tbl, m, m, &rows, &mut |r| {
                r >= off && r < off + s
            });
            let mut kmat = vec![ZERO; s * s];
            for r in 0..s {
                kmat[r * s..(r + 1) * s].copy_from_slice(powers.get(off + r).stratum(m));
            }
            StepScratch { base, kmat }
        })
    };

    for j in 0..k {
        for r in (0..s).rev() {
            let alpha = &strat[r];
            let lower = alpha.supported_below(j);
            if lower && absorb_lower {
                // Resonant address: pin the X coefficient to zero and absorb
                // the constant into the carrier.
                let mut g_vals = Vec::with_capacity(n_steps);
                for (i, sc) in scratch.iter().enumerate() {
                    let g = -sc.base[j * s + r] / ctx.hat_power(i, alpha);
                    g_vals.push(g);
                }
                for (i, &g) in g_vals.iter().enumerate() {
                    gs[i].set_shear_coeff(j, alpha, g)?;
                }
                for (i, sc) in scratch.iter_mut().enumerate() {
                    let g = g_vals[i];
                    if g == ZERO {
                        continue;
                    }
                    for r2 in 0..r {
                        let kv = sc.kmat[r * s + r2];
                        if kv != ZERO {
                            sc.base[j * s + r2] += g * kv;
                        }
                    }
                }
                continue;
            }

            // Expanding address: bounded backward orbit across the horizon.
            let mut multipliers = Vec::with_capacity(n_steps);
            let mut offsets = Vec::with_capacity(n_steps);
            let mut worst = (f64::INFINITY, 0usize);
            for (i, sc) in scratch.iter().enumerate() {
                let a = ctx.multiplier(i, j, alpha);
                let modulus = a.norm();
                if modulus < worst.0 {
                    worst = (modulus, i);
                }
                multipliers.push(a);
                offsets.push(sc.base[j * s + r]);
            }
            if worst.0 <= 1.0 {
                return Err(if absorb_lower {
                    Error::AttractionHypothesisViolated {
                        n: worst.1 + 1,
                        j,
                        alpha: alpha.exps().to_vec(),
                        modulus: worst.0,
                    }
                } else {
                    Error::PTooSmall {
                        p: degree_g,
                        n: worst.1 + 1,
                        j,
                        alpha: alpha.exps().to_vec(),
                        modulus: worst.0,
                    }
                });
            }
            if worst.0 < params.xi_exp {
                flagged.push(FlaggedTerm {
                    step: worst.1 + 1,
                    index: j,
                    power: alpha.exps().to_vec(),
                    modulus: worst.0,
                });
            }
            let orbit = bounded_affine_orbit(&ExpandingAffineSequence {
                multipliers,
                offsets,
            })?;
            for (i, x) in xs.iter_mut().enumerate() {
                x.set_coeff(j, alpha, orbit.values[i]);
            }
            for (i, sc) in scratch.iter_mut().enumerate() {
                let c_prev = orbit.values[i];
                if c_prev == ZERO {
                    continue;
                }
                for j2 in j..k {
                    let l = ctx.lin[i][(j2, j)];
                    if l == ZERO {
                        continue;
                    }
                    let hi = if j2 == j { r } else { r + 1 };
                    let lc = l * c_prev;
                    for r2 in 0..hi {
                        let kv = sc.kmat[r * s + r2];
                        if kv != ZERO {
                            sc.base[j2 * s + r2] += lc * kv;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn conjugacy_residuals(
    xs: &[JetMap],
    gs: &[TriangularPolyMap],
    ctx: &PassContext,
    degree: u32,
    mode: ExecMode,
) -> Vec<f64> {
    map_indexed(mode, ctx.horizon, |i| {
        let inner = xs[i].compose(&ctx.f_invs[i], degree);
        let mut h = gs[i].to_jet(degree).compose(&inner, degree);
        h.sub_assign(&xs[i + 1]);
        h.coeff_norm()
    })
}

fn validate_normalized_steps(steps: &[JetMap], params: &SolveParams) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::InvalidConfig {
            context: "conjugacy solve needs at least one step".into(),
        });
    }
    let dim = steps[0].dim();
    for (i, f) in steps.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
                context: format!("step {} of the normalized sequence", i + 1),
            });
        }
        let lin = f.linear_part();
        for r in 0..dim {
            for c in (r + 1)..dim {
                let modulus = lin[(r, c)].norm();
                if modulus > params.upper_tol {
                    return Err(Error::NotTriangular {
                        row: r,
                        col: c,
                        modulus,
                        tol: params.upper_tol,
                    });
                }
            }
        }
        let moduli: Vec<f64> = (0..dim).map(|d| lin[(d, d)].norm()).collect();
        let report = is_correctly_ordered(&moduli, params.xi_order);
        if !report.ok {
            let (l, j, ii) = report.witness;
            return Err(Error::NotCorrectlyOrdered {
                worst_ratio: report.worst_ratio,
                l,
                j,
                i: ii,
                xi_order: params.xi_order,
            });
        }
    }
    Ok(())
}

fn carriers_from_linear_parts(steps: &[JetMap], degree: u32) -> Result<Vec<TriangularPolyMap>> {
    steps
        .iter()
        .map(|f| {
            let lin = f.linear_part();
            let k = f.dim();
            let diag: Vec<Complex64> = (0..k).map(|j| lin[(j, j)]).collect();
            let mut shears = Vec::with_capacity(k);
            for j in 0..k {
                let mut h = ScalarPoly::zero(j, degree.max(1));
                for i in 0..j {
                    let c = lin[(j, i)];
                    if c != ZERO {
                        h.set_coeff(&MultiIndex::unit(j, i), c);
                    }
                }
                shears.push(h);
            }
            TriangularPolyMap::new(diag, shears)
        })
        .collect()
}

/// Build `X₀..X_N` (identity linear part) and `G₁..G_N` (lower triangular,
/// `Gₙ′(0) = fₙ′(0)`) with `Xₙ = [Gₙ∘X_{n−1}∘fₙ⁻¹]_p` for every step of a
/// normalized sequence.
pub fn build_conjugacy(steps: &[JetMap], p: u32, params: &SolveParams) -> Result<ConjugacyData> {
    if p == 0 {
        return Err(Error::InvalidDegree {
            degree: 0,
            context: "carrier degree must be at least 1".into(),
        });
    }
    validate_normalized_steps(steps, params)?;
    let dim = steps[0].dim();
    let n_steps = steps.len();

    let mut gs = carriers_from_linear_parts(steps, p)?;
    let mut xs = vec![JetMap::identity(dim, p); n_steps + 1];
    let ctx = PassContext::new(steps, &gs, p, params.mode)?;
    let mut flagged = Vec::new();
    for m in 2..=p {
        solve_stratum(&mut xs, &mut gs, &ctx, m, true, p, params, &mut flagged)?;
    }
    let residuals = conjugacy_residuals(&xs, &gs, &ctx, p, params.mode);
    let x_norms = xs.iter().map(JetMap::coeff_norm).collect();
    Ok(ConjugacyData {
        dim,
        horizon: n_steps,
        degree_g: p,
        degree_x: p,
        xs,
        gs,
        x_norms,
        residuals,
        ill_conditioned: flagged,
    })
}

/// Add degrees `p+1..=degree` to the `Xₙ` only. Past `p` every multiplier is
/// expanding (that is what `p` was chosen for), so no new carrier terms are
/// needed; a contracting multiplier is reported as `p` being too small.
pub fn extend_to_degree(
    data: &ConjugacyData,
    steps: &[JetMap],
    degree: u32,
    params: &SolveParams,
) -> Result<ConjugacyData> {
    if degree <= data.degree_x {
        return Err(Error::InvalidDegree {
            degree,
            context: format!("extension degree must exceed the built degree {}", data.degree_x),
        });
    }
    if steps.len() != data.horizon {
        return Err(Error::DimensionMismatch {
            expected: data.horizon,
            got: steps.len(),
            context: "extension must reuse the sequence the data was built from".into(),
        });
    }
    let mut xs: Vec<JetMap> = data.xs.iter().map(|x| x.to_degree(degree)).collect();
    let mut gs = data.gs.clone();
    let ctx = PassContext::new(steps, &gs, degree, params.mode)?;
    let mut flagged = data.ill_conditioned.clone();
    for m in (data.degree_x + 1)..=degree {
        solve_stratum(
            &mut xs,
            &mut gs,
            &ctx,
            m,
            false,
            data.degree_g,
            params,
            &mut flagged,
        )?;
    }
    let residuals = conjugacy_residuals(&xs, &gs, &ctx, degree, params.mode);
    let x_norms = xs.iter().map(JetMap::coeff_norm).collect();
    Ok(ConjugacyData {
        dim: data.dim,
        horizon: data.horizon,
        degree_g: data.degree_g,
        degree_x: degree,
        xs,
        gs,
        x_norms,
        residuals,
        ill_conditioned: flagged,
    })
}

// ---------------------------------------------------------------------------
// Closed-form cross-check for dimension 2, degree 2
// ---------------------------------------------------------------------------

/// Per-step quadratic data produced by the closed-form two-dimensional solve.
#[derive(Clone, Debug)]
pub struct OracleRun {
    /// `(α, β, γ, δ, ε, ζ)ₙ` for `n = 0..=N`: the six quadratic coefficients
    /// of `Xₙ = (x + αy² + βxy + γx², y + δy² + εxy + ζx²)`; `ζ ≡ 0` by the
    /// carrier choice.
    pub tuples: Vec<[Complex64; 6]>,
    /// The carrier's `x²` coefficient `dₙ` for `n = 1..=N`, chosen so the
    /// `ζ` recurrence stays at zero.
    pub d_consts: Vec<Complex64>,
}

/// Solve the `k = 2`, degree-2 conjugacy by the explicit scalar recurrences,
/// written out by hand from the composition — fully independent of
/// [`build_conjugacy`]'s generic assembly, as a differential oracle.
pub fn degree2_c2_oracle(steps: &[JetMap], params: &SolveParams) -> Result<OracleRun> {
    if steps.first().map(JetMap::dim) != Some(2) {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: steps.first().map(JetMap::dim).unwrap_or(0),
            context: "closed-form quadratic solve".into(),
        });
    }
    validate_normalized_steps(steps, params)?;
    let n_steps = steps.len();
    let mi = |e0: u32, e1: u32| MultiIndex::new(vec![e0, e1]);

    // Per step: λ, μ, a from fₙ, and λ̂, μ̂, b, p₁..p₃, q₁..q₃ from fₙ⁻¹
    // (hatted linear part (λ̂x, μ̂y + bx), first component quadratics
    // p₁y² + p₂xy + p₃x², second component quadratics q₁y² + q₂xy + q₃x²).
    struct StepCoeffs {
        l: Complex64,
        m_: Complex64,
        a: Complex64,
        lh: Complex64,
        mh: Complex64,
        b: Complex64,
        p: [Complex64; 3],
        q: [Complex64; 3],
    }
    let mut per_step = Vec::with_capacity(n_steps);
    for f in steps {
        let f2 = f.to_degree(2);
        let inv = f2.inverse()?;
        per_step.push(StepCoeffs {
            l: f2.coeff(0, &mi(1, 0)),
            m_: f2.coeff(1, &mi(0, 1)),
            a: f2.coeff(1, &mi(1, 0)),
            lh: inv.coeff(0, &mi(1, 0)),
            mh: inv.coeff(1, &mi(0, 1)),
            b: inv.coeff(1, &mi(1, 0)),
            p: [
                inv.coeff(0, &mi(0, 2)),
                inv.coeff(0, &mi(1, 1)),
                inv.coeff(0, &mi(2, 0)),
            ],
            q: [
                inv.coeff(1, &mi(0, 2)),
                inv.coeff(1, &mi(1, 1)),
                inv.coeff(1, &mi(2, 0)),
            ],
        });
    }

    let solve = |mults: Vec<Complex64>, offs: Vec<Complex64>| -> Result<Vec<Complex64>> {
        Ok(bounded_affine_orbit(&ExpandingAffineSequence {
            multipliers: mults,
            offsets: offs,
        })?
        .values)
    };

    // α: multiplier λμ̂², offset λp₁.
    let alpha = solve(
        per_step.iter().map(|s| s.l * s.mh * s.mh).collect(),
        per_step.iter().map(|s| s.l * s.p[0]).collect(),
    )?;
    // β: multiplier λλ̂μ̂, offset λp₂ + 2λbμ̂·α'.
    let beta = solve(
        per_step.iter().map(|s| s.l * s.lh * s.mh).collect(),
        per_step
            .iter()
            .enumerate()
            .map(|(i, s)| s.l * s.p[1] + 2.0 * s.l * s.b * s.mh * alpha[i])
            .collect(),
    )?;
    // γ: multiplier λλ̂², offset λp₃ + λb²·α' + λλ̂b·β'.
    let gamma = solve(
        per_step.iter().map(|s| s.l * s.lh * s.lh).collect(),
        per_step
            .iter()
            .enumerate()
            .map(|(i, s)| s.l * s.p[2] + s.l * s.b * s.b * alpha[i] + s.l * s.lh * s.b * beta[i])
            .collect(),
    )?;
    // δ: multiplier μμ̂², offset μq₁ + ap₁ + aμ̂²·α'.
    let delta = solve(
        per_step.iter().map(|s| s.m_ * s.mh * s.mh).collect(),
        per_step
            .iter()
            .enumerate()
            .map(|(i, s)| s.m_ * s.q[0] + s.a * s.p[0] + s.a * s.mh * s.mh * alpha[i])
            .collect(),
    )?;
    // ε: multiplier μλ̂μ̂, offset μq₂ + ap₂ + 2abμ̂·α' + aλ̂μ̂·β' + 2μbμ̂·δ'.
    let eps = solve(
        per_step.iter().map(|s| s.m_ * s.lh * s.mh).collect(),
        per_step
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.m_ * s.q[1]
                    + s.a * s.p[1]
                    + 2.0 * s.a * s.b * s.mh * alpha[i]
                    + s.a * s.lh * s.mh * beta[i]
                    + 2.0 * s.m_ * s.b * s.mh * delta[i]
            })
            .collect(),
    )?;
    // ζ ≡ 0 via dₙ = −l₆/λ̂²,
    // l₆ = μq₃ + ap₃ + ab²·α' + aλ̂b·β' + aλ̂²·γ' + μb²·δ' + μλ̂b·ε'.
    let d_consts: Vec<Complex64> = per_step
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let l6 = s.m_ * s.q[2]
                + s.a * s.p[2]
                + s.a * s.b * s.b * alpha[i]
                + s.a * s.lh * s.b * beta[i]
                + s.a * s.lh * s.lh * gamma[i]
                + s.m_ * s.b * s.b * delta[i]
                + s.m_ * s.lh * s.b * eps[i];
            -l6 / (s.lh * s.lh)
        })
        .collect();

    let tuples = (0..=n_steps)
        .map(|n| [alpha[n], beta[n], gamma[n], delta[n], eps[n], ZERO])
        .collect();
    Ok(OracleRun { tuples, d_consts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{
        autonomous, quadratic_shear_example, random_uniformly_attracting, RandomFamilyParams,
    };

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn mi(exps: &[u32]) -> MultiIndex {
        MultiIndex::new(exps.to_vec())
    }

    fn constant_affine(a: f64, b: f64, n: usize) -> ExpandingAffineSequence {
        ExpandingAffineSequence {
            multipliers: vec![c(a); n],
            offsets: vec![c(b); n],
        }
    }

    /// Jets of an autonomous sequence for a linear diagonal map.
    fn diagonal_steps(moduli: &[f64], degree: u32, n: usize) -> Vec<JetMap> {
        let k = moduli.len();
        let mut f = JetMap::zero(k, degree);
        for (j, &m) in moduli.iter().enumerate() {
            f.set_coeff(j, &MultiIndex::unit(k, j), c(m));
        }
        vec![f; n]
    }

    /// Jets of the autonomous quadratic-shear family (x/2, y/5 + x²).
    fn quad_shear_steps(degree: u32, n: usize) -> Vec<JetMap> {
        let seq = autonomous(quadratic_shear_example(), n).unwrap();
        (1..=n).map(|i| seq.step(i).jet.to_degree(degree)).collect()
    }

    #[test]
    fn bounded_orbit_of_doubling_map_sits_at_fixed_point() {
        // z ↦ 2z + 1 has fixed point −1; the backward pass lands on it to
        // 2^{−N}.
        let orbit = bounded_affine_orbit(&constant_affine(2.0, 1.0, 60)).unwrap();
        assert!((orbit.values[0] - c(-1.0)).norm() < 1e-14);
        assert_eq!(orbit.values[60], ZERO);
        assert!(orbit.min_modulus == 2.0);
        assert!(orbit.horizon_error < 2e-17 * orbit.radius.max(1.0));
        // The forward recurrence holds along the returned values.
        for n in 1..=60 {
            let forward = c(2.0) * orbit.values[n - 1] + c(1.0);
            assert!((orbit.values[n] - forward).norm() < 1e-13);
        }
    }

    #[test]
    fn bounded_orbit_with_zero_offsets_is_zero() {
        let orbit = bounded_affine_orbit(&constant_affine(2.0, 0.0, 30)).unwrap();
        assert!(orbit.values.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn bounded_orbit_is_stable_under_horizon_growth() {
        let make = |n: usize| ExpandingAffineSequence {
            multipliers: (0..n).map(|i| c(if i % 2 == 0 { 2.0 } else { 3.0 })).collect(),
            offsets: vec![c(1.0); n],
        };
        let short = bounded_affine_orbit(&make(40)).unwrap();
        let long = bounded_affine_orbit(&make(50)).unwrap();
        assert!((short.values[0] - long.values[0]).norm() <= 2f64.powi(-40));
        assert!(short.values.iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn bounded_orbit_rejects_contracting_multipliers() {
        let mut seq = constant_affine(2.0, 1.0, 10);
        seq.multipliers[7] = c(0.9);
        match bounded_affine_orbit(&seq) {
            Err(Error::NotExpanding { step, modulus }) => {
                assert_eq!(step, 8);
                assert!((modulus - 0.9).abs() < 1e-15);
            }
            other => panic!("expected NotExpanding, got {other:?}"),
        }
    }

    #[test]
    fn degree_selection_matches_hand_scans() {
        let sel = select_degrees(0.25, 0.5, 1.1, 4.0, 0.5).unwrap();
        assert_eq!((sel.p, sel.q), (3, 3));
        assert!((sel.alpha_rate - 0.5).abs() < 1e-15);
        // Equal moduli: ξ·m^p < m as soon as ξ·m^{p−1} < 1.
        let eq = select_degrees(0.5, 0.5, 1.05, 1.0, 0.5).unwrap();
        assert_eq!(eq.p, 2);
        assert!(select_degrees(0.5, 0.4, 1.05, 4.0, 0.5).is_err());
        assert!(select_degrees(0.2, 0.5, 0.9, 4.0, 0.5).is_err());
        assert!(select_degrees(0.2, 0.5, 1.05, 4.0, 1.0).is_err());
    }

    #[test]
    fn autonomous_diagonal_family_solves_to_identity() {
        let steps = diagonal_steps(&[0.5, 0.2], 3, 12);
        let data = build_conjugacy(&steps, 3, &SolveParams::default()).unwrap();
        let id = JetMap::identity(2, 3);
        for x in &data.xs {
            assert_eq!(x.coeff_distance(&id), 0.0);
        }
        for g in &data.gs {
            assert_eq!(g.degree(), 1);
            assert_eq!(g.diag(), &[c(0.5), c(0.2)]);
        }
        assert!(data.max_residual() == 0.0);
        assert!(data.ill_conditioned.is_empty());
    }

    #[test]
    fn quadratic_shear_resonance_is_absorbed_by_the_carrier() {
        // For (x/2, y/5 + x²) the x² address of the second component has
        // multiplier |μ/λ²| = 0.8 < 1: non-removable. The carrier soaks it up
        // and the conjugating jets collapse to the identity.
        let steps = quad_shear_steps(2, 40);
        let data = build_conjugacy(&steps, 2, &SolveParams::default()).unwrap();
        let id = JetMap::identity(2, 2);
        for x in &data.xs {
            assert!(x.coeff_distance(&id) < 1e-12);
        }
        for g in &data.gs {
            let d = g.shear(1).coeff(&mi(&[2]));
            assert!((d - c(1.0)).norm() < 1e-12, "carrier x² coefficient {d}");
        }
        assert!(data.max_residual() < 1e-12);
    }

    #[test]
    fn carriers_keep_the_input_linear_part() {
        let params = RandomFamilyParams {
            dim: 2,
            degree: 2,
            moduli: (0.3, 0.5),
            n_steps: 25,
            seed: 11,
            ..RandomFamilyParams::default()
        };
        let seq = random_uniformly_attracting(&params).unwrap();
        let steps: Vec<JetMap> = (1..=25).map(|n| seq.step(n).jet.to_degree(2)).collect();
        let data = build_conjugacy(&steps, 2, &SolveParams::default()).unwrap();
        for (f, g) in steps.iter().zip(&data.gs) {
            let lf = f.linear_part();
            let lg = g.to_jet(2).linear_part();
            assert!((lf - lg).norm() < 1e-12);
        }
        // Residual identity at the built degree.
        assert!(data.max_residual() < 1e-11, "residual {}", data.max_residual());
        // Identity linear parts on every X.
        for x in &data.xs {
            let mut lin = x.linear_part();
            for d in 0..2 {
                lin[(d, d)] -= c(1.0);
            }
            assert!(lin.norm() < 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_reference_term_solver() {
        // Replay the induction through `solve_term` (which re-composes the
        // maps for every address) and compare against the incremental build.
        let check = |steps: &[JetMap], p: u32| {
            let params = SolveParams::default();
            let data = build_conjugacy(steps, p, &params).unwrap();
            let k = steps[0].dim();
            let n = steps.len();
            let mut xs = vec![JetMap::identity(k, p); n + 1];
            let mut gs = carriers_from_linear_parts(steps, p).unwrap();
            for m in 2..=p {
                let tbl = monomial::table(k, m);
                let strat = tbl.stratum(m).to_vec();
                for j in 0..k {
                    for r in (0..strat.len()).rev() {
                        let addr = TermAddress {
                            index: j,
                            power: strat[r].clone(),
                        };
                        let sol = solve_term(&xs, &gs, steps, &addr, true, &params).unwrap();
                        for (i, x) in xs.iter_mut().enumerate() {
                            x.set_coeff(j, &addr.power, sol.x_coeffs[i]);
                        }
                        for (i, g) in gs.iter_mut().enumerate() {
                            if sol.g_coeffs[i] != ZERO {
                                g.set_shear_coeff(j, &addr.power, sol.g_coeffs[i]).unwrap();
                            }
                        }
                    }
                }
            }
            for (a, b) in data.xs.iter().zip(&xs) {
                assert!(a.coeff_distance(b) < 1e-11, "X mismatch {}", a.coeff_distance(b));
            }
            for (a, b) in data.gs.iter().zip(&gs) {
                let d = a.to_jet(p).coeff_distance(&b.to_jet(p));
                assert!(d < 1e-11, "carrier mismatch {d}");
            }
        };

        let params = RandomFamilyParams {
            dim: 3,
            degree: 2,
            moduli: (0.3, 0.55),
            n_steps: 14,
            seed: 5,
            ..RandomFamilyParams::default()
        };
        let seq = random_uniformly_attracting(&params).unwrap();
        let steps: Vec<JetMap> = (1..=14).map(|i| seq.step(i).jet.to_degree(3)).collect();
        check(&steps, 3);
        check(&quad_shear_steps(3, 10), 3);
    }

    #[test]
    fn closed_form_oracle_agrees_with_generic_build() {
        for seed in [3u64, 17, 40] {
            let params = RandomFamilyParams {
                dim: 2,
                degree: 2,
                moduli: (0.3, 0.5),
                n_steps: 60,
                seed,
                ..RandomFamilyParams::default()
            };
            let seq = random_uniformly_attracting(&params).unwrap();
            let steps: Vec<JetMap> = (1..=60).map(|n| seq.step(n).jet.to_degree(2)).collect();
            let solve_params = SolveParams::default();
            let data = build_conjugacy(&steps, 2, &solve_params).unwrap();
            let oracle = degree2_c2_oracle(&steps, &solve_params).unwrap();
            let addr = [
                (0usize, mi(&[0, 2])),
                (0, mi(&[1, 1])),
                (0, mi(&[2, 0])),
                (1, mi(&[0, 2])),
                (1, mi(&[1, 1])),
                (1, mi(&[2, 0])),
            ];
            for n in 0..=60usize {
                for (slot, (j, a)) in addr.iter().enumerate() {
                    let diff = (data.xs[n].coeff(*j, a) - oracle.tuples[n][slot]).norm();
                    assert!(diff < 1e-10, "seed {seed} n {n} slot {slot}: {diff}");
                }
            }
            for (i, g) in data.gs.iter().enumerate() {
                let d = g.shear(1).coeff(&mi(&[2]));
                assert!(
                    (d - oracle.d_consts[i]).norm() < 1e-10,
                    "carrier constant mismatch at step {i}"
                );
            }
        }
    }

    #[test]
    fn extension_adds_expanding_degrees_without_touching_carriers() {
        let steps = quad_shear_steps(5, 30);
        let params = SolveParams::default();
        let data = build_conjugacy(&steps, 3, &params).unwrap();
        let extended = extend_to_degree(&data, &steps, 5, &params).unwrap();
        assert_eq!(extended.degree_x, 5);
        assert_eq!(extended.degree_g, 3);
        for (before, after) in data.gs.iter().zip(&extended.gs) {
            assert_eq!(before, after);
        }
        assert!(extended.max_residual() < 1e-10, "residual {}", extended.max_residual());
        // The old coefficients are untouched.
        for (before, after) in data.xs.iter().zip(&extended.xs) {
            assert!(before.coeff_distance(&after.to_degree(3)) == 0.0);
        }
        // Degrees must strictly increase.
        assert!(matches!(
            extend_to_degree(&extended, &steps, 4, &params),
            Err(Error::InvalidDegree { .. })
        ));
    }

    #[test]
    fn extension_reports_undersized_carrier_degree() {
        // With moduli (0.9, 0.3), the third-degree address j=2, α=(3,0) has
        // multiplier 0.3/0.9³ ≈ 0.41: not expanding, so p = 2 is too small.
        let steps = diagonal_steps(&[0.9, 0.3], 3, 10);
        let params = SolveParams {
            xi_order: 0.95,
            ..SolveParams::default()
        };
        let data = build_conjugacy(&steps, 2, &params).unwrap();
        match extend_to_degree(&data, &steps, 3, &params) {
            Err(Error::PTooSmall { p, j, alpha, modulus, .. }) => {
                assert_eq!(p, 2);
                assert_eq!(j, 1);
                assert_eq!(alpha, vec![3, 0]);
                assert!((modulus - 0.3 / 0.9f64.powi(3)).abs() < 1e-12);
            }
            other => panic!("expected PTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn narrow_margins_are_flagged_as_ill_conditioned() {
        // λ = (0.96, 0.2): the (j=1, α=(2,0)) multiplier 1/0.96 ≈ 1.042 lies
        // inside (1, ξ_exp).
        let steps = diagonal_steps(&[0.96, 0.2], 2, 8);
        let params = SolveParams {
            xi_order: 0.97,
            ..SolveParams::default()
        };
        let data = build_conjugacy(&steps, 2, &params).unwrap();
        assert!(!data.ill_conditioned.is_empty());
        for f in &data.ill_conditioned {
            assert!(f.modulus > 1.0 && f.modulus < params.xi_exp);
        }
        assert!(data
            .ill_conditioned
            .iter()
            .any(|f| f.index == 0 && f.power == vec![2, 0]));
    }

    #[test]
    fn solver_rejects_disordered_or_non_triangular_input() {
        // Ascending moduli violate the ordering requirement…
        let steps = diagonal_steps(&[0.2, 0.8], 2, 4);
        assert!(matches!(
            build_conjugacy(&steps, 2, &SolveParams::default()),
            Err(Error::NotCorrectlyOrdered { .. })
        ));
        // …and an upper-triangular linear entry is refused outright.
        let mut f = JetMap::zero(2, 2);
        f.set_coeff(0, &mi(&[1, 0]), c(0.5));
        f.set_coeff(0, &mi(&[0, 1]), c(0.3));
        f.set_coeff(1, &mi(&[0, 1]), c(0.4));
        assert!(matches!(
            build_conjugacy(&vec![f; 3], 2, &SolveParams::default()),
            Err(Error::NotTriangular { .. })
        ));
    }

    #[test]
    fn conjugacy_data_round_trips_through_json() {
        let steps = quad_shear_steps(2, 6);
        let data = build_conjugacy(&steps, 2, &SolveParams::default()).unwrap();
        let text = serde_json::to_string(&data).unwrap();
        let back: ConjugacyData = serde_json::from_str(&text).unwrap();
        assert_eq!(back.horizon, data.horizon);
        for (a, b) in data.xs.iter().zip(&back.xs) {
            assert_eq!(a.coeff_distance(b), 0.0);
        }
        for (a, b) in data.gs.iter().zip(&back.gs) {
            assert_eq!(a, b);
        }
        assert_eq!(data.residuals, back.residuals);
    }
}
