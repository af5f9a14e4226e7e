//! Truncated polynomial self-maps of `C^k` fixing the origin.
//!
//! A `JetMap` is a `k`-tuple of scalar polynomials of common truncation
//! degree. Composition and evaluation share one power/monomial table across
//! components, and inversion is the usual degree-by-degree correction against
//! the linear part.

use crate::error::{Error, Result};
use crate::monomial::{self, MultiIndex};
use crate::poly::{monomial_values, PowerTable, ScalarPoly};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Origin-fixing polynomial map `C^k → C^k` truncated at a common degree.
#[derive(Clone, Debug)]
pub struct JetMap {
    dim: usize,
    degree: u32,
    components: Vec<ScalarPoly>,
}

/// Componentwise coefficient equality; truncation padding is not
/// distinguishing (see [`ScalarPoly`]'s equality).
impl PartialEq for JetMap {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.components == other.components
    }
}

impl JetMap {
    pub fn zero(dim: usize, degree: u32) -> Self {
        JetMap {
            dim,
            degree,
            components: vec![ScalarPoly::zero(dim, degree); dim],
        }
    }

    pub fn identity(dim: usize, degree: u32) -> Self {
        let mut map = JetMap::zero(dim, degree);
        for j in 0..dim {
            map.components[j].set_coeff(&MultiIndex::unit(dim, j), ONE);
        }
        map
    }

    pub fn from_linear(mat: &DMatrix<Complex64>, degree: u32) -> Self {
        assert_eq!(mat.nrows(), mat.ncols());
        let dim = mat.nrows();
        let mut map = JetMap::zero(dim, degree);
        for j in 0..dim {
            for i in 0..dim {
                if mat[(j, i)] != ZERO {
                    map.components[j].set_coeff(&MultiIndex::unit(dim, i), mat[(j, i)]);
                }
            }
        }
        map
    }

    pub fn from_components(components: Vec<ScalarPoly>) -> Self {
        let dim = components.len();
        let degree = components.iter().map(ScalarPoly::degree).max().unwrap_or(0);
        let components = components
            .into_iter()
            .map(|p| {
                assert_eq!(p.nvars(), dim, "component variable count must equal dim");
                if p.degree() == degree {
                    p
                } else {
                    p.to_degree(degree)
                }
            })
            .collect();
        JetMap {
            dim,
            degree,
            components,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn component(&self, j: usize) -> &ScalarPoly {
        &self.components[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut ScalarPoly {
        &mut self.components[j]
    }

    pub fn components(&self) -> &[ScalarPoly] {
        &self.components
    }

    pub fn coeff(&self, j: usize, alpha: &MultiIndex) -> Complex64 {
        self.components[j].coeff(alpha)
    }

    pub fn set_coeff(&mut self, j: usize, alpha: &MultiIndex, c: Complex64) {
        self.components[j].set_coeff(alpha, c);
    }

    /// Truncate or zero-pad every component to `degree`.
    pub fn to_degree(&self, degree: u32) -> Self {
        JetMap {
            dim: self.dim,
            degree,
            components: self.components.iter().map(|p| p.to_degree(degree)).collect(),
        }
    }

    pub fn linear_part(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |j, i| self.components[j].linear_coeff(i))
    }

    /// Largest coefficient modulus across all components.
    pub fn coeff_norm(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarPoly::max_abs)
            .fold(0.0, f64::max)
    }

    pub fn add_assign(&mut self, other: &JetMap) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_assign(b);
        }
    }

    pub fn sub_assign(&mut self, other: &JetMap) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.sub_assign(b);
        }
    }

    /// Largest coefficient modulus of `self − other`.
    pub fn coeff_distance(&self, other: &JetMap) -> f64 {
        let mut diff = self.to_degree(self.degree.max(other.degree));
        diff.sub_assign(&other.to_degree(diff.degree));
        diff.coeff_norm()
    }

    /// `self ∘ inner`, truncated at `out_degree`. One power table of `inner`
    /// is shared by all components.
    pub fn compose(&self, inner: &JetMap, out_degree: u32) -> JetMap {
        debug_assert_eq!(self.dim, inner.dim, "composition dimension mismatch");
        let table = monomial::table(self.dim, self.degree.max(1));
        let powers = PowerTable::for_support(
            &table,
            self.degree,
            out_degree,
            inner.components(),
            &mut |rank| {
                let m = table.entry(rank).degree();
                self.components
                    .iter()
                    .any(|p| p.stratum(m)[rank - table.offset(m)] != ZERO)
            },
        );
        let total = table.len_through(self.degree);
        let mut out_components = Vec::with_capacity(self.dim);
        for p in &self.components {
            let mut acc = ScalarPoly::zero(inner.dim, out_degree);
            for rank in 0..total {
                let m = table.entry(rank).degree();
                let c = p.stratum(m)[rank - table.offset(m)];
                if c != ZERO {
                    acc.add_scaled(c, powers.get(rank));
                }
            }
            out_components.push(acc);
        }
        JetMap {
            dim: inner.dim,
            degree: out_degree,
            components: out_components,
        }
    }

    /// Apply a matrix on the left: `z ↦ M · self(z)`.
    pub fn matrix_left(&self, mat: &DMatrix<Complex64>) -> JetMap {
        debug_assert_eq!(mat.ncols(), self.dim);
        let mut out_components = Vec::with_capacity(mat.nrows());
        for j in 0..mat.nrows() {
            let mut acc = ScalarPoly::zero(self.dim, self.degree);
            for i in 0..self.dim {
                if mat[(j, i)] != ZERO {
                    acc.add_scaled(mat[(j, i)], &self.components[i]);
                }
            }
            out_components.push(acc);
        }
        JetMap {
            dim: self.dim,
            degree: self.degree,
            components: out_components,
        }
    }

    /// Truncated compositional inverse to the same degree. Fails when the
    /// linear part is singular.
    pub fn inverse(&self) -> Result<JetMap> {
        let lin = self.linear_part();
        let lin_inv = invert_matrix(&lin)?;
        let mut g = JetMap::from_linear(&lin_inv, self.degree);
        for m in 2..=self.degree {
            // f∘g = id + E with E supported in degree m; subtract L⁻¹E.
            let mut err = self.compose(&g, m);
            err.sub_assign(&JetMap::identity(self.dim, m));
            let corr = err.matrix_left(&lin_inv).to_degree(self.degree);
            g.sub_assign(&corr);
        }
        Ok(g)
    }

    /// Evaluate at `z`; one monomial-value table is shared by all components.
    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(z.len(), self.dim);
        if self.degree == 0 {
            return vec![ZERO; self.dim];
        }
        let table = monomial::table(self.dim, self.degree);
        let vals = monomial_values(&table, self.degree, z);
        self.components
            .iter()
            .map(|p| {
                let mut acc = ZERO;
                let mut idx = 0usize;
                for m in 1..=self.degree {
                    for &c in p.stratum(m) {
                        if c != ZERO {
                            acc += c * vals[idx];
                        }
                        idx += 1;
                    }
                }
                acc
            })
            .collect()
    }

    /// Re-expand around `z + a`: the constants `self(a)` and the polynomial
    /// part of `z ↦ self(z + a)`. The constants come from the same floating
    /// computation as the re-expansion, so recentering by them cancels the
    /// constant term bitwise.
    pub fn shift(&self, a: &[Complex64]) -> (Vec<Complex64>, JetMap) {
        let mut constants = Vec::with_capacity(self.dim);
        let mut components = Vec::with_capacity(self.dim);
        for p in &self.components {
            let (c, q) = p.shift(a);
            constants.push(c);
            components.push(q);
        }
        (
            constants,
            JetMap {
                dim: self.dim,
                degree: self.degree,
                components,
            },
        )
    }

    /// Jacobian matrix at `z`.
    pub fn jacobian_at(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |j, i| {
            self.components[j].linear_coeff(i) + self.components[j].derivative(i).eval(z)
        })
    }
}

/// Invert a small complex matrix, reporting its condition number on failure.
pub fn invert_matrix(mat: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = mat.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= f64::EPSILON * smax.max(1.0) {
        return Err(Error::SingularLinearPart {
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    mat.clone()
        .try_inverse()
        .ok_or(Error::SingularLinearPart { cond: smax / smin })
}

#[derive(Serialize, Deserialize)]
struct JetMapRepr {
    k: usize,
    d: u32,
    components: Vec<Vec<(Vec<u32>, f64, f64)>>,
}

impl Serialize for JetMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let table = monomial::table(self.dim, self.degree.max(1));
        let components = self
            .components
            .iter()
            .map(|p| {
                let mut entries = Vec::new();
                for m in 1..=self.degree {
                    for (r, &c) in p.stratum(m).iter().enumerate() {
                        entries.push((table.stratum(m)[r].exps().to_vec(), c.re, c.im));
                    }
                }
                entries
            })
            .collect();
        JetMapRepr {
            k: self.dim,
            d: self.degree,
            components,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JetMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = JetMapRepr::deserialize(deserializer)?;
        if repr.components.len() != repr.k {
            return Err(D::Error::custom(format!(
                "expected {} components, found {}",
                repr.k,
                repr.components.len()
            )));
        }
        let mut map = JetMap::zero(repr.k, repr.d);
        for (j, entries) in repr.components.iter().enumerate() {
            for (exps, re, im) in entries {
                if exps.len() != repr.k {
                    return Err(D::Error::custom(format!(
                        "exponent tuple {exps:?} does not have {} entries",
                        repr.k
                    )));
                }
                let alpha = MultiIndex::new(exps.clone());
                if alpha.degree() == 0 || alpha.degree() > repr.d {
                    return Err(D::Error::custom(format!(
                        "exponent tuple {exps:?} outside degrees 1..={}",
                        repr.d
                    )));
                }
                let c = Complex64::new(*re, *im);
                if c != ZERO {
                    map.set_coeff(j, &alpha, c);
                }
            }
        }
        Ok(map)
    }
}
