//! Randomized algebra laws: composition, truncation, inversion, backward
//! orbits, and generator determinism across execution modes.

use fatou_core::exec::ExecMode;
use fatou_core::seq::{random_uniformly_attracting, RandomFamilyParams};
use fatou_core::solver::{bounded_affine_orbit, ExpandingAffineSequence};
use fatou_core::{JetMap, MultiIndex, TriangularPolyMap};
use num_complex::Complex64;
use proptest::collection::vec;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn exponents(k: usize, m: u32) -> Vec<MultiIndex> {
    fn rec(pos: usize, rem: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if pos + 1 == current.len() {
            current[pos] = rem;
            out.push(MultiIndex::new(current.clone()));
            return;
        }
        for e in (0..=rem).rev() {
            current[pos] = e;
            rec(pos + 1, rem - e, current, out);
        }
        current[pos] = 0;
    }
    let mut out = Vec::new();
    rec(0, m, &mut vec![0u32; k], &mut out);
    out
}

/// Dense origin-fixing jet from a flat coefficient pool: contracting diagonal
/// linear part plus nonlinear strata damped by `0.3^m` to keep composition
/// and inversion well-conditioned.
fn build_jet(dim: usize, degree: u32, pool: &[(f64, f64)]) -> JetMap {
    let mut jet = JetMap::zero(dim, degree);
    let mut next = 0usize;
    let mut draw = || {
        let (re, im) = pool[next % pool.len()];
        next += 1;
        c(re, im)
    };
    for j in 0..dim {
        for i in 0..dim {
            let base = if i == j { c(0.6, 0.0) } else { c(0.0, 0.0) };
            jet.set_coeff(j, &MultiIndex::unit(dim, i), base + draw() * 0.2);
        }
        for m in 2..=degree {
            let damp = 0.3f64.powi(m as i32);
            for alpha in exponents(dim, m) {
                jet.set_coeff(j, &alpha, draw() * damp);
            }
        }
    }
    jet
}

fn build_triangular(dim: usize, degree: u32, pool: &[(f64, f64)]) -> TriangularPolyMap {
    let mut jet = JetMap::zero(dim, degree);
    let mut next = 0usize;
    let mut draw = || {
        let (re, im) = pool[next % pool.len()];
        next += 1;
        c(re, im)
    };
    for j in 0..dim {
        jet.set_coeff(j, &MultiIndex::unit(dim, j), c(0.6, 0.0) + draw() * 0.25);
        for m in 2..=degree {
            let damp = 0.3f64.powi(m as i32);
            for alpha in exponents(dim, m) {
                // Lower-triangular shear: component j may only read earlier
                // variables.
                if alpha.exps()[j..].iter().all(|&e| e == 0) {
                    jet.set_coeff(j, &alpha, draw() * damp);
                }
            }
        }
    }
    TriangularPolyMap::from_jet(&jet, 1e-12).expect("triangular by construction")
}

fn pool() -> impl Strategy<Value = Vec<(f64, f64)>> {
    vec((-0.5f64..0.5, -0.5f64..0.5), 48)
}

fn shape() -> impl Strategy<Value = (usize, u32)> {
    (1usize..=3, 1u32..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn composition_is_associative_at_the_working_degree(
        (dim, degree) in shape(),
        pf in pool(),
        pg in pool(),
        ph in pool(),
    ) {
        let f = build_jet(dim, degree, &pf);
        let g = build_jet(dim, degree, &pg);
        let h = build_jet(dim, degree, &ph);
        let left = f.compose(&g, degree).compose(&h, degree);
        let right = f.compose(&g.compose(&h, degree), degree);
        prop_assert!(left.coeff_distance(&right) <= 1e-10);
    }

    #[test]
    fn truncating_inputs_does_not_change_lower_strata(
        (dim, degree) in shape(),
        cut in 1u32..=4,
        pf in pool(),
        pg in pool(),
    ) {
        prop_assume!(cut <= degree);
        let f = build_jet(dim, degree, &pf);
        let g = build_jet(dim, degree, &pg);
        let full = f.compose(&g, cut);
        let cropped = f.to_degree(cut).compose(&g.to_degree(cut), cut);
        prop_assert!(full.coeff_distance(&cropped) <= 1e-11);
    }

    #[test]
    fn truncation_is_monotone_and_idempotent(
        (dim, degree) in shape(),
        lower in 1u32..=4,
        pf in pool(),
    ) {
        prop_assume!(lower <= degree);
        let f = build_jet(dim, degree, &pf);
        let direct = f.to_degree(lower);
        let via_higher = f.to_degree(degree).to_degree(lower);
        prop_assert_eq!(direct.coeff_distance(&via_higher), 0.0);
        prop_assert_eq!(direct.coeff_distance(&direct.to_degree(lower)), 0.0);
    }

    #[test]
    fn formal_inverse_round_trips_to_identity(
        (dim, degree) in shape(),
        pf in pool(),
    ) {
        let f = build_jet(dim, degree, &pf);
        let inv = f.inverse().expect("diagonally dominant linear part");
        let id = JetMap::identity(dim, degree);
        prop_assert!(f.compose(&inv, degree).coeff_distance(&id) <= 1e-9);
        prop_assert!(inv.compose(&f, degree).coeff_distance(&id) <= 1e-9);
    }

    #[test]
    fn triangular_inverse_is_pointwise_exact(
        (dim, degree) in shape(),
        pf in pool(),
        ws in vec((-1.0f64..1.0, -1.0f64..1.0), 6),
    ) {
        let t = build_triangular(dim, degree, &pf);
        for chunk in ws.chunks(dim) {
            if chunk.len() < dim {
                continue;
            }
            let w: Vec<Complex64> = chunk.iter().map(|&(re, im)| c(re, im)).collect();
            let z = t.solve_inverse(&w);
            let back = t.eval(&z);
            let err: f64 = w
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let scale = 1.0 + w.iter().map(|x| x.norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12 * scale, "round trip error {err}");
        }
    }

    #[test]
    fn backward_orbit_satisfies_the_recurrence_with_zero_seed(
        raw in vec(((1.5f64..4.0, -3.1f64..3.1), (-2.0f64..2.0, -2.0f64..2.0)), 2..40),
    ) {
        let seq = ExpandingAffineSequence {
            multipliers: raw
                .iter()
                .map(|&((r, th), _)| c(r * th.cos(), r * th.sin()))
                .collect(),
            offsets: raw.iter().map(|&(_, (re, im))| c(re, im)).collect(),
        };
        let orbit = bounded_affine_orbit(&seq).unwrap();
        let n = seq.multipliers.len();
        prop_assert_eq!(orbit.values.len(), n + 1);
        prop_assert_eq!(orbit.values[n], c(0.0, 0.0));
        for i in 1..=n {
            let lhs = seq.multipliers[i - 1] * orbit.values[i - 1] + seq.offsets[i - 1];
            prop_assert!((lhs - orbit.values[i]).norm() <= 1e-12 * (1.0 + lhs.norm()));
            prop_assert!(orbit.values[i - 1].norm() <= orbit.radius);
        }
    }

    #[test]
    fn family_generation_is_deterministic_across_modes(
        seed in 0u64..1000,
        dim in 2usize..=3,
    ) {
        let make = |mode| {
            random_uniformly_attracting(&RandomFamilyParams {
                dim,
                n_steps: 6,
                seed,
                verify_samples: 50,
                mode,
                ..RandomFamilyParams::default()
            })
            .unwrap()
        };
        let a = make(ExecMode::Parallel);
        let b = make(ExecMode::Sequential);
        let c = make(ExecMode::Parallel);
        prop_assert_eq!(a.len(), b.len());
        for n in 1..=a.len() {
            prop_assert_eq!(a.step(n).jet.coeff_distance(&b.step(n).jet), 0.0);
            prop_assert_eq!(a.step(n).jet.coeff_distance(&c.step(n).jet), 0.0);
        }
    }
}
