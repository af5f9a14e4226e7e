//! Named cross-module invariant suites: randomized jet-algebra laws, the
//! closed-form quadratic oracle against the generic solver, and the
//! bounded-orbit / carrier-growth bounds. The command-line `check` subcommand
//! and the acceptance harness both call through these entry points, so a
//! shipped binary can re-certify itself on demand.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::fb;
use crate::jet::JetMap;
use crate::monomial::MultiIndex;
use crate::poly::ScalarPoly;
use crate::sample;
use crate::seq::{random_uniformly_attracting, RandomFamilyParams};
use crate::solver::{
    bounded_affine_orbit, build_conjugacy, degree2_c2_oracle, ExpandingAffineSequence,
    SolveParams,
};
use crate::triangular::TriangularPolyMap;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Suites `run_checks` knows about, in execution order.
pub const SUITES: &[&str] = &["jet_core", "oracle", "growth"];

/// One named invariant with its measured margin.
#[derive(Clone, Debug, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    /// Measured worst value and the tolerance it was held against.
    pub detail: String,
}

impl CheckItem {
    fn bounded(name: &str, worst: f64, tol: f64) -> Self {
        CheckItem {
            name: name.to_string(),
            passed: worst <= tol,
            detail: format!("worst {worst:.3e} against tolerance {tol:.1e}"),
        }
    }
}

/// All items of one suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub elapsed_ms: u128,
    pub items: Vec<CheckItem>,
}

impl SuiteReport {
    fn close(suite: &str, started: Instant, items: Vec<CheckItem>) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            passed: items.iter().all(|i| i.passed),
            elapsed_ms: started.elapsed().as_millis(),
            items,
        }
    }
}

/// Combined result of a `run_checks` call.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Run one suite by name.
pub fn run_suite(name: &str, mode: ExecMode) -> Result<SuiteReport> {
    match name {
        "jet_core" => Ok(jet_core_suite(200, mode)),
        "oracle" => oracle_suite(50, 200, mode),
        "growth" => growth_suite(mode),
        other => Err(Error::InvalidConfig {
            context: format!("unknown check suite '{other}'; available: {SUITES:?}"),
        }),
    }
}

/// Run every suite, or only the named one.
pub fn run_checks(filter: Option<&str>, mode: ExecMode) -> Result<CheckReport> {
    let names: Vec<&str> = match filter {
        Some(name) => vec![name],
        None => SUITES.to_vec(),
    };
    let mut suites = Vec::with_capacity(names.len());
    for name in names {
        suites.push(run_suite(name, mode)?);
    }
    Ok(CheckReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

/// Least-squares slope of `values` against the index — the trend statistic
/// behind "sup-norms stop growing" style checks.
pub fn trend_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Randomized instances
// ---------------------------------------------------------------------------

fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Origin-fixing jet with geometrically damped strata, so towers of
/// compositions keep coefficients of order one.
fn random_jet(rng: &mut ChaCha8Rng, k: usize, degree: u32) -> JetMap {
    let mut map = JetMap::zero(k, degree);
    for j in 0..k {
        for m in 1..=degree {
            let scale = 0.4f64.powi(m as i32);
            for c in map.component_mut(j).stratum_mut(m) {
                *c = random_complex(rng) * scale;
            }
        }
    }
    map
}

/// Random jet with a well-conditioned linear part, for inversion tests.
fn random_invertible_jet(rng: &mut ChaCha8Rng, k: usize, degree: u32) -> JetMap {
    let mut map = random_jet(rng, k, degree);
    for j in 0..k {
        for i in 0..k {
            let c = if i == j {
                Complex64::new(rng.gen_range(0.5..0.9), 0.0)
            } else {
                random_complex(rng) * 0.05
            };
            map.set_coeff(j, &MultiIndex::unit(k, i), c);
        }
    }
    map
}

/// Random invertible lower-triangular map with bounded shear mass.
fn random_triangular(rng: &mut ChaCha8Rng, k: usize, degree: u32) -> TriangularPolyMap {
    let diag: Vec<Complex64> = (0..k)
        .map(|_| {
            let r = rng.gen_range(0.3..0.9);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(r, theta)
        })
        .collect();
    let shears: Vec<ScalarPoly> = (0..k)
        .map(|j| {
            let mut h = ScalarPoly::zero(j, degree);
            if j > 0 {
                for m in 2..=degree {
                    let scale = 0.3f64.powi(m as i32);
                    for c in h.stratum_mut(m) {
                        *c = random_complex(rng) * scale;
                    }
                }
            }
            h
        })
        .collect();
    TriangularPolyMap::new(diag, shears).expect("construction is triangular by shape")
}

// ---------------------------------------------------------------------------
// jet_core: algebra laws on random instances
// ---------------------------------------------------------------------------

fn jet_core_suite(instances: usize, mode: ExecMode) -> SuiteReport {
    let started = Instant::now();
    // Per instance: (associativity, idempotence, inverse residual, triangular
    // round-trip) worst deviations.
    let worsts = map_indexed(mode, instances, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA15E_B00 + i as u64);
        let k = rng.gen_range(1..=4usize);
        let d = rng.gen_range(1..=6u32);

        let a = random_jet(&mut rng, k, d);
        let b = random_jet(&mut rng, k, d);
        let c = random_jet(&mut rng, k, d);
        let assoc = a
            .compose(&b, d)
            .compose(&c, d)
            .coeff_distance(&a.compose(&b.compose(&c, d), d));

        let e = rng.gen_range(1..=d);
        let once = a.to_degree(e);
        let idem = once.to_degree(e).coeff_distance(&once);

        let f = random_invertible_jet(&mut rng, k, d);
        let inv = f.inverse().expect("linear part is diagonally dominant");
        let inv_residual = f
            .compose(&inv, d)
            .coeff_distance(&JetMap::identity(k, d));

        let tri = random_triangular(&mut rng, k, d.max(2));
        let tri_round = (0..20u64)
            .map(|s| {
                let w = sample::ball_point(k, 1.0, s.wrapping_add(i as u64 * 37));
                sample::dist(&tri.eval(&tri.solve_inverse(&w)), &w)
            })
            .fold(0.0, f64::max);

        [assoc, idem, inv_residual, tri_round]
    });
    let mut worst = [0.0f64; 4];
    for w in &worsts {
        for (acc, &v) in worst.iter_mut().zip(w) {
            *acc = acc.max(v);
        }
    }
    SuiteReport::close(
        "jet_core",
        started,
        vec![
            CheckItem::bounded(
                &format!("composition associativity ({instances} instances, k ≤ 4, d ≤ 6)"),
                worst[0],
                1e-10,
            ),
            CheckItem::bounded("truncation idempotence", worst[1], 0.0),
            CheckItem::bounded("formal inverse residual", worst[2], 1e-10),
            CheckItem::bounded("exact triangular inverse round-trip", worst[3], 1e-12),
        ],
    )
}

// ---------------------------------------------------------------------------
// oracle: hand-written quadratic recurrences vs the generic solver
// ---------------------------------------------------------------------------

fn oracle_suite(seeds: usize, horizon: usize, mode: ExecMode) -> Result<SuiteReport> {
    let started = Instant::now();
    let runs: Vec<Result<(f64, f64)>> = map_indexed(mode, seeds, |s| {
        let params = RandomFamilyParams {
            dim: 2,
            degree: 2,
            moduli: (0.3, 0.5),
            n_steps: horizon,
            seed: 1000 + s as u64,
            ..RandomFamilyParams::default()
        };
        let seq = random_uniformly_attracting(&params)?;
        let steps: Vec<JetMap> = (1..=horizon).map(|n| seq.step(n).jet.to_degree(2)).collect();
        let solve_params = SolveParams::default();
        let data = build_conjugacy(&steps, 2, &solve_params)?;
        let oracle = degree2_c2_oracle(&steps, &solve_params)?;

        let mi = |e: [u32; 2]| MultiIndex::new(e.to_vec());
        let addr = [
            (0usize, mi([0, 2])),
            (0, mi([1, 1])),
            (0, mi([2, 0])),
            (1, mi([0, 2])),
            (1, mi([1, 1])),
            (1, mi([2, 0])),
        ];
        let mut coeff_diff = 0.0f64;
        for n in 0..=horizon {
            for (slot, (j, a)) in addr.iter().enumerate() {
                coeff_diff =
                    coeff_diff.max((data.xs[n].coeff(*j, a) - oracle.tuples[n][slot]).norm());
            }
        }
        let x2 = MultiIndex::new(vec![2]);
        let mut carrier_diff = 0.0f64;
        for (g, d) in data.gs.iter().zip(&oracle.d_consts) {
            carrier_diff = carrier_diff.max((g.shear(1).coeff(&x2) - d).norm());
        }
        Ok((coeff_diff, carrier_diff))
    });
    let mut coeff_worst = 0.0f64;
    let mut carrier_worst = 0.0f64;
    for r in runs {
        let (c, d) = r?;
        coeff_worst = coeff_worst.max(c);
        carrier_worst = carrier_worst.max(d);
    }
    Ok(SuiteReport::close(
        "oracle",
        started,
        vec![
            CheckItem::bounded(
                &format!("quadratic coefficients vs closed form ({seeds} seeds, horizon {horizon})"),
                coeff_worst,
                1e-10,
            ),
            CheckItem::bounded(
                "resonant carrier constants vs closed form",
                carrier_worst,
                1e-10,
            ),
        ],
    ))
}

// ---------------------------------------------------------------------------
// growth: bounded-orbit bounds and carrier growth rates
// ---------------------------------------------------------------------------

fn growth_suite(mode: ExecMode) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut items = Vec::new();

    // The orbit of z ↦ 2z + 1 staying bounded is the fixed point −1, hit
    // exactly by backward division.
    let doubling = bounded_affine_orbit(&ExpandingAffineSequence {
        multipliers: vec![Complex64::new(2.0, 0.0); 50],
        offsets: vec![ONE; 50],
    })?;
    items.push(CheckItem::bounded(
        "doubling-map bounded orbit sits at the fixed point",
        (doubling.values[0] + ONE).norm(),
        1e-14,
    ));

    // Doubling the horizon of a random expanding family moves the reported
    // head value by at most the certified tail bound ξ_exp^{−N}·R.
    let xi_exp = 1.5f64;
    let n_short = 24usize;
    let families = 30usize;
    let excesses = map_indexed(mode, families, |f| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0Bb17 + f as u64);
        let draw = |rng: &mut ChaCha8Rng, len: usize| ExpandingAffineSequence {
            multipliers: (0..len)
                .map(|_| {
                    Complex64::from_polar(
                        rng.gen_range(xi_exp..3.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect(),
            offsets: (0..len).map(|_| random_complex(rng)).collect(),
        };
        let long = draw(&mut rng, 2 * n_short);
        let short = ExpandingAffineSequence {
            multipliers: long.multipliers[..n_short].to_vec(),
            offsets: long.offsets[..n_short].to_vec(),
        };
        let orbit_short = bounded_affine_orbit(&short).expect("moduli exceed 1");
        let orbit_long = bounded_affine_orbit(&long).expect("moduli exceed 1");
        let r = orbit_long.radius.max(orbit_short.radius);
        // Excess over the bound at each overlapping index; ≤ 0 passes.
        (0..=n_short)
            .map(|i| {
                let diff = (orbit_short.values[i] - orbit_long.values[i]).norm();
                diff - xi_exp.powi(-((n_short - i) as i32)) * r
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    items.push(CheckItem::bounded(
        &format!("horizon-doubling stability on {families} random expanding families"),
        excesses.into_iter().fold(f64::NEG_INFINITY, f64::max),
        0.0,
    ));

    // Carrier-chain growth constants against the closed form for pure
    // diagonal contractions by 1/2: β = 0.5·1.05, γ = 2.
    let gs = vec![TriangularPolyMap::diagonal(vec![Complex64::new(0.5, 0.0); 2]); 8];
    let growth = fb::growth_constants(&gs, 64, mode)?;
    items.push(CheckItem::bounded(
        "carrier growth rate β against the diagonal closed form",
        (growth.beta - 0.525).abs(),
        1e-9,
    ));
    items.push(CheckItem::bounded(
        "carrier inverse Lipschitz γ against the diagonal closed form",
        (growth.gamma - 2.0).abs(),
        1e-9,
    ));

    Ok(SuiteReport::close("growth", started, items))
}
