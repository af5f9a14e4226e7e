//! Sequences of polynomial automorphisms of `C^k` and generators for the
//! families the toolkit is exercised on.
//!
//! A step is a chain of elementary automorphisms (invertible linear maps,
//! translations, triangular shears), so exact inverses and exact polynomial
//! expansions are always available. Sequence files store only the expanded
//! origin-fixing jets; translated steps arise programmatically (they exist to
//! exercise orbit recentering).

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::jet::{invert_matrix, JetMap};
use crate::monomial::MultiIndex;
use crate::normal_form::is_correctly_ordered;
use crate::poly::ScalarPoly;
use crate::sample;
use crate::triangular::TriangularPolyMap;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One invertible building block.
#[derive(Clone, Debug)]
pub enum Elementary {
    Linear {
        mat: DMatrix<Complex64>,
        inv: DMatrix<Complex64>,
    },
    Translation {
        offset: Vec<Complex64>,
    },
    Shear {
        map: TriangularPolyMap,
    },
}

impl Elementary {
    pub fn linear(mat: DMatrix<Complex64>) -> Result<Self> {
        let inv = invert_matrix(&mat)?;
        Ok(Elementary::Linear { mat, inv })
    }

    pub fn dim(&self) -> usize {
        match self {
            Elementary::Linear { mat, .. } => mat.nrows(),
            Elementary::Translation { offset } => offset.len(),
            Elementary::Shear { map } => map.dim(),
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        match self {
            Elementary::Linear { mat, .. } => matvec(mat, z),
            Elementary::Translation { offset } => {
                z.iter().zip(offset).map(|(a, b)| a + b).collect()
            }
            Elementary::Shear { map } => map.eval(z),
        }
    }

    pub fn eval_inverse(&self, w: &[Complex64]) -> Vec<Complex64> {
        match self {
            Elementary::Linear { inv, .. } => matvec(inv, w),
            Elementary::Translation { offset } => {
                w.iter().zip(offset).map(|(a, b)| a - b).collect()
            }
            Elementary::Shear { map } => map.solve_inverse(w),
        }
    }
}

fn matvec(mat: &DMatrix<Complex64>, z: &[Complex64]) -> Vec<Complex64> {
    (0..mat.nrows())
        .map(|j| (0..mat.ncols()).map(|i| mat[(j, i)] * z[i]).sum())
        .collect()
}

/// Polynomial automorphism given as a factor chain; `factors[0]` applies
/// first.
#[derive(Clone, Debug)]
pub struct StepMap {
    dim: usize,
    factors: Vec<Elementary>,
}

impl StepMap {
    pub fn new(dim: usize, factors: Vec<Elementary>) -> Result<Self> {
        for f in &factors {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                    context: "every factor must act on the same space".into(),
                });
            }
        }
        Ok(StepMap { dim, factors })
    }

    pub fn from_shear(map: TriangularPolyMap) -> Self {
        StepMap {
            dim: map.dim(),
            factors: vec![Elementary::Shear { map }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[Elementary] {
        &self.factors
    }

    /// Append a factor applied after the current chain.
    pub fn then(mut self, factor: Elementary) -> Result<Self> {
        if factor.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: factor.dim(),
                context: "appended factor must act on the same space".into(),
            });
        }
        self.factors.push(factor);
        Ok(self)
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut cur = z.to_vec();
        for f in &self.factors {
            cur = f.eval(&cur);
        }
        cur
    }

    pub fn eval_inverse(&self, w: &[Complex64]) -> Vec<Complex64> {
        let mut cur = w.to_vec();
        for f in self.factors.iter().rev() {
            cur = f.eval_inverse(&cur);
        }
        cur
    }

    /// Exact affine expansion: constants and the polynomial jet of the full
    /// chain.
    pub fn expand(&self) -> (Vec<Complex64>, JetMap) {
        let k = self.dim;
        let mut constant = vec![ZERO; k];
        let mut jet = JetMap::identity(k, 1);
        for f in &self.factors {
            match f {
                Elementary::Linear { mat, .. } => {
                    constant = matvec(mat, &constant);
                    jet = jet.matrix_left(mat);
                }
                Elementary::Translation { offset } => {
                    for (c, t) in constant.iter_mut().zip(offset) {
                        *c += t;
                    }
                }
                Elementary::Shear { map } => {
                    let jet_used: u32 = jet
                        .components()
                        .iter()
                        .map(ScalarPoly::used_degree)
                        .max()
                        .unwrap_or(1)
                        .max(1);
                    let mut new_constant = vec![ZERO; k];
                    let mut new_components = Vec::with_capacity(k);
                    let mut out_degree = jet.degree();
                    for j in 0..k {
                        // λ_j (c_j + jet_j) + h_j(c + jet), expanded exactly.
                        let lam = map.diag()[j];
                        let h = map.shear(j).embed(k);
                        let (h_const, h_poly) = h.shift(&constant);
                        new_constant[j] = lam * constant[j] + h_const;
                        let target = (h_poly.used_degree() * jet_used).max(jet.degree()).max(1);
                        out_degree = out_degree.max(target);
                        let mut comp = if h_poly.used_degree() == 0 {
                            ScalarPoly::zero(k, target)
                        } else {
                            h_poly.compose(jet.components(), target)
                        };
                        comp.add_scaled(lam, &jet.component(j).to_degree(target));
                        new_components.push(comp);
                    }
                    for c in &mut new_components {
                        if c.degree() < out_degree {
                            *c = c.to_degree(out_degree);
                        }
                    }
                    constant = new_constant;
                    jet = JetMap::from_components(new_components);
                }
            }
        }
        (constant, jet)
    }
}

/// One sequence entry: exact affine expansion, plus the factor chain when the
/// step was built programmatically.
#[derive(Clone, Debug)]
pub struct SequenceStep {
    pub constant: Vec<Complex64>,
    pub jet: JetMap,
    pub factors: Option<StepMap>,
}

impl SequenceStep {
    pub fn from_factors(map: StepMap) -> Self {
        let (constant, jet) = map.expand();
        SequenceStep {
            constant,
            jet,
            factors: Some(map),
        }
    }

    pub fn from_jet(jet: JetMap) -> Self {
        SequenceStep {
            constant: vec![ZERO; jet.dim()],
            jet,
            factors: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.jet.dim()
    }

    pub fn is_origin_fixing(&self) -> bool {
        self.constant.iter().all(|c| *c == ZERO)
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut w = self.jet.eval(z);
        for (a, c) in w.iter_mut().zip(&self.constant) {
            *a += c;
        }
        w
    }

    pub fn linear_part(&self) -> DMatrix<Complex64> {
        self.jet.linear_part()
    }
}

/// What `step(n)` returns past the stored range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Repeat the final step forever.
    #[default]
    Freeze,
    /// Cycle through the stored steps.
    Cycle,
}

/// A sequence `f_1, f_2, …` of polynomial automorphisms, finitely stored with
/// a tail policy for indices beyond the stored range.
#[derive(Clone, Debug)]
pub struct AutomorphismSequence {
    dim: usize,
    steps: Vec<SequenceStep>,
    tail: TailPolicy,
}

impl AutomorphismSequence {
    pub fn new(steps: Vec<SequenceStep>, tail: TailPolicy) -> Result<Self> {
        let dim = steps
            .first()
            .map(SequenceStep::dim)
            .ok_or_else(|| Error::InvalidConfig {
                context: "a sequence needs at least one step".into(),
            })?;
        for s in &steps {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                    context: "every step must act on the same space".into(),
                });
            }
        }
        Ok(AutomorphismSequence { dim, steps, tail })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of explicitly stored steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tail(&self) -> TailPolicy {
        self.tail
    }

    /// Step `f_n` for `n ≥ 1`; the tail policy covers `n > len()`.
    pub fn step(&self, n: usize) -> &SequenceStep {
        assert!(n >= 1, "steps are indexed from 1");
        let i = n - 1;
        if i < self.steps.len() {
            &self.steps[i]
        } else {
            match self.tail {
                TailPolicy::Freeze => self.steps.last().expect("nonempty"),
                TailPolicy::Cycle => &self.steps[i % self.steps.len()],
            }
        }
    }

    pub fn steps(&self) -> &[SequenceStep] {
        &self.steps
    }

    /// Forward orbit `x_n = f_n(x_{n-1})` for `n = 1..=horizon`, including
    /// the starting point at index 0.
    pub fn orbit(&self, start: &[Complex64], horizon: usize) -> Vec<Vec<Complex64>> {
        let mut orbit = Vec::with_capacity(horizon + 1);
        orbit.push(start.to_vec());
        for n in 1..=horizon {
            let next = self.step(n).eval(orbit.last().expect("nonempty"));
            orbit.push(next);
        }
        orbit
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    k: usize,
    tail: TailPolicy,
    steps: Vec<JetMap>,
}

impl Serialize for AutomorphismSequence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as SerError;
        if self.steps.iter().any(|s| !s.is_origin_fixing()) {
            return Err(S::Error::custom(
                "only origin-fixing sequences are storable; recenter first",
            ));
        }
        SequenceFile {
            k: self.dim,
            tail: self.tail,
            steps: self.steps.iter().map(|s| s.jet.clone()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AutomorphismSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let file = SequenceFile::deserialize(deserializer)?;
        let steps: Vec<SequenceStep> = file
            .steps
            .into_iter()
            .map(SequenceStep::from_jet)
            .collect();
        let seq = AutomorphismSequence::new(steps, file.tail).map_err(D::Error::custom)?;
        if seq.dim != file.k {
            return Err(D::Error::custom(format!(
                "header says k={}, steps act on C^{}",
                file.k, seq.dim
            )));
        }
        Ok(seq)
    }
}

/// The same automorphism at every step.
pub fn autonomous(step: StepMap, n_steps: usize) -> Result<AutomorphismSequence> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig {
            context: "n_steps must be positive".into(),
        });
    }
    let proto = SequenceStep::from_factors(step);
    Ok(AutomorphismSequence {
        dim: proto.dim(),
        steps: vec![proto; n_steps],
        tail: TailPolicy::Freeze,
    })
}

/// Controls for [`perturb`].
#[derive(Clone, Debug)]
pub struct PerturbParams {
    pub n_steps: usize,
    /// Sup-distance budget per step, measured on the unit sphere.
    pub epsilon: f64,
    /// Polynomial degree of the shear part of each perturbation.
    pub noise_degree: u32,
    pub seed: u64,
    pub verify_samples: usize,
    pub mode: ExecMode,
}

impl Default for PerturbParams {
    fn default() -> Self {
        PerturbParams {
            n_steps: 40,
            epsilon: 0.01,
            noise_degree: 2,
            seed: 1,
            verify_samples: 10_000,
            mode: ExecMode::Parallel,
        }
    }
}

/// Random near-identity perturbations of a fixed automorphism: each step is
/// `E_n ∘ base` with `E_n` a small linear map times a small triangular shear,
/// rescaled until the sampled sup-sphere distance to `base` is within
/// `epsilon`.
pub fn perturb(base: &StepMap, params: &PerturbParams) -> Result<AutomorphismSequence> {
    if params.n_steps == 0 {
        return Err(Error::InvalidConfig {
            context: "n_steps must be positive".into(),
        });
    }
    let k = base.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut steps = Vec::with_capacity(params.n_steps);
    for _ in 0..params.n_steps {
        // Draw the noise once, then scale it down deterministically until the
        // sampled perturbation fits the budget.
        let lin_noise = DMatrix::from_fn(k, k, |_, _| random_unit_complex(&mut rng));
        let shear_noise = random_shear_coeffs(&mut rng, k, params.noise_degree);
        let mut scale = params.epsilon / (2.0 * k as f64);
        let mut accepted = None;
        for _ in 0..=10 {
            let candidate = build_perturbed_step(base, &lin_noise, &shear_noise, scale)?;
            let sup = sup_sphere_distance(&candidate, base, params.verify_samples, params.mode);
            if sup <= params.epsilon {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        let step = accepted.ok_or_else(|| Error::PerturbationUnrealizable {
            epsilon: params.epsilon,
            context: "perturbation exceeded budget after 10 halvings".into(),
        })?;
        steps.push(SequenceStep::from_factors(step));
    }
    AutomorphismSequence::new(steps, TailPolicy::Freeze)
}

fn random_unit_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Raw shear coefficients per coordinate: degrees `1..=degree` in the
/// preceding variables.
fn random_shear_coeffs(rng: &mut ChaCha8Rng, k: usize, degree: u32) -> Vec<ScalarPoly> {
    (0..k)
        .map(|j| {
            let mut h = ScalarPoly::zero(j, if j == 0 { 0 } else { degree });
            for m in 1..=h.degree() {
                for c in h.stratum_mut(m) {
                    *c = random_unit_complex(rng);
                }
            }
            h
        })
        .collect()
}

fn build_perturbed_step(
    base: &StepMap,
    lin_noise: &DMatrix<Complex64>,
    shear_noise: &[ScalarPoly],
    scale: f64,
) -> Result<StepMap> {
    let k = base.dim();
    let s = Complex64::new(scale, 0.0);
    let mat = DMatrix::identity(k, k) + lin_noise.map(|c| s * c);
    let shears = shear_noise
        .iter()
        .map(|h| {
            let mut scaled = h.clone();
            scaled.scale(s);
            scaled
        })
        .collect();
    let tri = TriangularPolyMap::new(vec![Complex64::new(1.0, 0.0); k], shears)?;
    base.clone()
        .then(Elementary::Shear { map: tri })?
        .then(Elementary::linear(mat)?)
}

fn sup_sphere_distance(a: &StepMap, b: &StepMap, samples: usize, mode: ExecMode) -> f64 {
    let k = a.dim();
    let dists = map_indexed(mode, samples, |i| {
        let z = sample::sphere_point(k, 1.0, i as u64);
        sample::dist(&a.eval(&z), &b.eval(&z))
    });
    dists.into_iter().fold(0.0, f64::max)
}

/// Controls for [`random_uniformly_attracting`].
#[derive(Clone, Debug)]
pub struct RandomFamilyParams {
    pub dim: usize,
    pub degree: u32,
    /// Every sampled contraction ratio must land in `[moduli.0, moduli.1]`.
    pub moduli: (f64, f64),
    pub n_steps: usize,
    pub seed: u64,
    pub xi_order: f64,
    pub tail: TailPolicy,
    pub verify_samples: usize,
    /// Spheres on which the two-sided bound is enforced.
    pub verify_radii: Vec<f64>,
    pub mode: ExecMode,
}

impl Default for RandomFamilyParams {
    fn default() -> Self {
        RandomFamilyParams {
            dim: 2,
            degree: 2,
            moduli: (0.3, 0.5),
            n_steps: 40,
            seed: 1,
            xi_order: 0.9,
            tail: TailPolicy::Freeze,
            verify_samples: 400,
            verify_radii: vec![1.0, 0.5, 0.1],
            mode: ExecMode::Parallel,
        }
    }
}

/// Random lower-triangular steps with diagonal moduli drawn from the interior
/// of `[a, b]`, shears scaled until the sampled two-sided attraction bound
/// `a‖z‖ ≤ ‖f_n(z)‖ ≤ b‖z‖` holds on the verification spheres, and diagonal
/// ordering rejection-sampled through the pairwise-products criterion.
pub fn random_uniformly_attracting(
    params: &RandomFamilyParams,
) -> Result<AutomorphismSequence> {
    let (a, b) = params.moduli;
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::InvalidConfig {
            context: format!("moduli range ({a}, {b}) must satisfy 0 < a < b < 1"),
        });
    }
    if params.n_steps == 0 {
        return Err(Error::InvalidConfig {
            context: "n_steps must be positive".into(),
        });
    }
    let k = params.dim;
    let margin = 0.1 * (b - a);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut steps = Vec::with_capacity(params.n_steps);
    for _ in 0..params.n_steps {
        // Diagonal: descending moduli from the interior, random phases,
        // rejection-sampled through the ordering criterion.
        let mut moduli: Vec<f64>;
        let mut tries = 0;
        loop {
            moduli = (0..k)
                .map(|_| rng.gen_range(a + margin..b - margin))
                .collect();
            moduli.sort_by(|x, y| y.partial_cmp(x).expect("finite moduli"));
            if is_correctly_ordered(&moduli, params.xi_order).ok {
                break;
            }
            tries += 1;
            if tries > 1000 {
                return Err(Error::InfeasibleParameters {
                    context: format!(
                        "no diagonal in [{a}, {b}] passes the ordering criterion at ξ = {}",
                        params.xi_order
                    ),
                });
            }
        }
        let diag: Vec<Complex64> = moduli
            .iter()
            .map(|&m| {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                Complex64::new(m * theta.cos(), m * theta.sin())
            })
            .collect();
        let shear_noise = random_shear_coeffs(&mut rng, k, params.degree);
        let mut scale = 0.25 * (b - a);
        let mut accepted = None;
        for _ in 0..=12 {
            let shears: Vec<ScalarPoly> = shear_noise
                .iter()
                .map(|h| {
                    let mut s = h.clone();
                    s.scale(Complex64::new(scale, 0.0));
                    s
                })
                .collect();
            let tri = TriangularPolyMap::new(diag.clone(), shears)?;
            if attraction_within(&tri, a, b, params) {
                accepted = Some(tri);
                break;
            }
            scale *= 0.5;
        }
        let tri = accepted.ok_or_else(|| Error::NotUniformlyAttracting {
            context: format!(
                "shears could not be scaled into the sampled bound [{a}, {b}]"
            ),
        })?;
        steps.push(SequenceStep::from_factors(StepMap::from_shear(tri)));
    }
    AutomorphismSequence::new(steps, params.tail)
}

/// The quadratic reference step `(x/2, y/5 + x²)` as a factor chain: lower
/// triangular, uniformly attracting on the unit ball, and carrying a
/// non-removable quadratic resonance (the `x²` term of the second component
/// has `|μ/λ²| < 1`).
pub fn quadratic_shear_example() -> StepMap {
    let mut h1 = ScalarPoly::zero(1, 2);
    h1.set_coeff(
        &MultiIndex::new(vec![2]),
        Complex64::new(1.0, 0.0),
    );
    StepMap::from_shear(
        TriangularPolyMap::new(
            vec![Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.0)],
            vec![ScalarPoly::zero(0, 0), h1],
        )
        .expect("reference step is triangular by construction"),
    )
}

fn attraction_within(
    map: &TriangularPolyMap,
    a: f64,
    b: f64,
    params: &RandomFamilyParams,
) -> bool {
    let k = map.dim();
    for &r in &params.verify_radii {
        let ratios = map_indexed(params.mode, params.verify_samples, |i| {
            let z = sample::sphere_point(k, r, i as u64);
            sample::norm(&map.eval(&z)) / r
        });
        for q in ratios {
            if !(a <= q && q <= b) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monomial::MultiIndex;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn expansion_matches_pointwise_eval() {
        let offset = vec![c(0.3), c(-0.1)];
        let lin = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.5), ZERO, c(1.0)]);
        let step = quadratic_shear_example()
            .then(Elementary::Translation { offset })
            .unwrap()
            .then(Elementary::linear(lin).unwrap())
            .unwrap();
        let (constant, jet) = step.expand();
        for n in 0..20u64 {
            let z = sample::ball_point(2, 0.8, n);
            let direct = step.eval(&z);
            let mut expanded = jet.eval(&z);
            for (e, c0) in expanded.iter_mut().zip(&constant) {
                *e += c0;
            }
            for (d, e) in direct.iter().zip(&expanded) {
                assert!((d - e).norm() < 1e-13, "{d} vs {e}");
            }
        }
    }

    #[test]
    fn inverse_chain_round_trips() {
        let step = quadratic_shear_example()
            .then(Elementary::Translation {
                offset: vec![c(0.2), c(0.7)],
            })
            .unwrap();
        let z = [Complex64::new(0.1, 0.4), Complex64::new(-0.6, 0.2)];
        let w = step.eval(&z);
        let back = step.eval_inverse(&w);
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn tail_policies() {
        let seq = autonomous(quadratic_shear_example(), 3).unwrap();
        assert_eq!(seq.len(), 3);
        // Freeze: step 7 is the last stored step.
        assert_eq!(seq.step(7).jet, seq.step(3).jet);
        let cyc = AutomorphismSequence::new(seq.steps().to_vec(), TailPolicy::Cycle).unwrap();
        assert_eq!(cyc.step(4).jet, cyc.step(1).jet);
    }

    #[test]
    fn orbit_contracts_for_attracting_step() {
        let seq = autonomous(quadratic_shear_example(), 10).unwrap();
        let orbit = seq.orbit(&[c(0.5), c(0.5)], 10);
        assert_eq!(orbit.len(), 11);
        assert!(sample::norm(&orbit[10]) < 1e-2 * sample::norm(&orbit[0]));
    }

    #[test]
    fn perturb_respects_budget_and_seed() {
        let params = PerturbParams {
            n_steps: 6,
            epsilon: 0.01,
            verify_samples: 500,
            seed: 42,
            ..PerturbParams::default()
        };
        let base = quadratic_shear_example();
        let seq = perturb(&base, &params).unwrap();
        assert_eq!(seq.len(), 6);
        // Every step stays within the budget on freshly sampled points.
        for n in 1..=6 {
            let step = seq.step(n);
            for i in 0..200u64 {
                let z = sample::sphere_point(2, 1.0, 7919 + i);
                let d = sample::dist(&step.eval(&z), &base.eval(&z));
                assert!(d <= 0.011, "step {n}: distance {d}");
            }
        }
        // Deterministic in the seed.
        let again = perturb(&base, &params).unwrap();
        assert_eq!(seq.step(3).jet, again.step(3).jet);
        let other = perturb(
            &base,
            &PerturbParams {
                seed: 43,
                ..params.clone()
            },
        )
        .unwrap();
        assert_ne!(seq.step(3).jet, other.step(3).jet);
    }

    #[test]
    fn random_family_meets_two_sided_bound() {
        let params = RandomFamilyParams {
            dim: 3,
            degree: 2,
            moduli: (0.3, 0.6),
            n_steps: 8,
            seed: 7,
            verify_samples: 200,
            ..RandomFamilyParams::default()
        };
        let seq = random_uniformly_attracting(&params).unwrap();
        assert_eq!(seq.len(), 8);
        for n in 1..=8 {
            let step = seq.step(n);
            // Independent spot check on fresh samples: ratios within a hair
            // of the requested band.
            for i in 0..100u64 {
                let z = sample::sphere_point(3, 0.737, 1000 + i);
                let q = sample::norm(&step.eval(&z)) / 0.737;
                assert!(q >= 0.28 && q <= 0.62, "step {n}: ratio {q}");
            }
            // Steps are genuinely triangular.
            let lin = step.linear_part();
            assert_eq!(lin[(0, 1)], ZERO);
            assert_eq!(lin[(0, 2)], ZERO);
            assert_eq!(lin[(1, 2)], ZERO);
        }
    }

    #[test]
    fn rejects_bad_moduli_range() {
        let params = RandomFamilyParams {
            moduli: (0.5, 0.3),
            ..RandomFamilyParams::default()
        };
        assert!(matches!(
            random_uniformly_attracting(&params),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn sequence_file_round_trip() {
        let seq = random_uniformly_attracting(&RandomFamilyParams {
            n_steps: 4,
            seed: 11,
            verify_samples: 100,
            ..RandomFamilyParams::default()
        })
        .unwrap();
        let text = serde_json::to_string(&seq).unwrap();
        let back: AutomorphismSequence = serde_json::from_str(&text).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.dim(), 2);
        for n in 1..=4 {
            assert_eq!(back.step(n).jet, seq.step(n).jet);
        }
    }

    #[test]
    fn translated_sequences_refuse_to_serialize() {
        let step = quadratic_shear_example()
            .then(Elementary::Translation {
                offset: vec![c(0.1), c(0.0)],
            })
            .unwrap();
        let seq = autonomous(step, 2).unwrap();
        assert!(serde_json::to_string(&seq).is_err());
    }
}
