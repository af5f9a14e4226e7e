//! Exact lower-triangular polynomial automorphisms of `C^k`:
//! `f_j(z) = λ_j z_j + h_j(z_0, …, z_{j−1})`.
//!
//! These are automorphisms whenever every `λ_j ≠ 0`, with triangular inverse
//! computable exactly. Inversion is available both pointwise (by
//! back-substitution, cheap and numerically tight) and as an exact polynomial
//! map (degrees can grow like `d^k`, so components keep their own variable
//! counts).

use crate::error::{Error, Result};
use crate::jet::JetMap;
use crate::monomial;
use crate::poly::ScalarPoly;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Lower-triangular polynomial automorphism.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangularPolyMap {
    diag: Vec<Complex64>,
    /// `shears[j]` is a polynomial in the first `j` variables (no constant).
    shears: Vec<ScalarPoly>,
}

impl TriangularPolyMap {
    pub fn new(diag: Vec<Complex64>, shears: Vec<ScalarPoly>) -> Result<Self> {
        if diag.len() != shears.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                got: shears.len(),
                context: "one shear polynomial per coordinate".into(),
            });
        }
        for (j, lambda) in diag.iter().enumerate() {
            if lambda.norm() == 0.0 {
                return Err(Error::SingularDiagonal {
                    index: j,
                    modulus: 0.0,
                });
            }
        }
        for (j, h) in shears.iter().enumerate() {
            if h.nvars() != j {
                return Err(Error::DimensionMismatch {
                    expected: j,
                    got: h.nvars(),
                    context: format!("shear {j} must use only the preceding variables"),
                });
            }
        }
        Ok(TriangularPolyMap { diag, shears })
    }

    /// Diagonal linear map.
    pub fn diagonal(diag: Vec<Complex64>) -> Self {
        let shears = (0..diag.len())
            .map(|j| ScalarPoly::zero(j, 0))
            .collect();
        TriangularPolyMap { diag, shears }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn shear(&self, j: usize) -> &ScalarPoly {
        &self.shears[j]
    }

    /// Largest shear degree (the map's polynomial degree, at least 1).
    pub fn degree(&self) -> u32 {
        self.shears
            .iter()
            .map(used_degree)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(z.len(), self.dim());
        (0..self.dim())
            .map(|j| self.diag[j] * z[j] + self.shears[j].eval(&z[..j]))
            .collect()
    }

    /// Solve `self(z) = w` exactly by back-substitution.
    pub fn solve_inverse(&self, w: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(w.len(), self.dim());
        let mut z = vec![ZERO; self.dim()];
        for j in 0..self.dim() {
            z[j] = (w[j] - self.shears[j].eval(&z[..j])) / self.diag[j];
        }
        z
    }

    /// Exact polynomial inverse (again triangular). Component degrees can
    /// reach `d^j`, but each lives in only `j` variables.
    pub fn inverse(&self) -> TriangularPolyMap {
        let k = self.dim();
        let mut inv_diag = Vec::with_capacity(k);
        let mut inv_shears: Vec<ScalarPoly> = Vec::with_capacity(k);
        // Full inverse components g_j (including the diagonal term), each in
        // j+1 variables, for substitution into later shears.
        let mut g_full: Vec<ScalarPoly> = Vec::with_capacity(k);
        for j in 0..k {
            let lam_inv = Complex64::new(1.0, 0.0) / self.diag[j];
            inv_diag.push(lam_inv);
            let h = &self.shears[j];
            let shear_j = if used_degree(h) == 0 {
                ScalarPoly::zero(j, 0)
            } else {
                let args: Vec<ScalarPoly> = g_full[..j].iter().map(|g| g.embed(j)).collect();
                let gmax = args.iter().map(used_degree).max().unwrap_or(1).max(1);
                let out_degree = used_degree(h) * gmax;
                let mut composed = h.compose(&args, out_degree);
                composed.scale(-lam_inv);
                composed
            };
            let mut full = shear_j.embed(j + 1).to_degree(used_degree(&shear_j).max(1));
            full.set_coeff(&crate::monomial::MultiIndex::unit(j + 1, j), lam_inv);
            g_full.push(full);
            inv_shears.push(shear_j);
        }
        TriangularPolyMap {
            diag: inv_diag,
            shears: inv_shears,
        }
    }

    /// Exact composition `self ∘ other`.
    pub fn compose(&self, other: &TriangularPolyMap) -> TriangularPolyMap {
        debug_assert_eq!(self.dim(), other.dim());
        let k = self.dim();
        // Full components of `other`, each in j+1 variables.
        let mut other_full: Vec<ScalarPoly> = Vec::with_capacity(k);
        for j in 0..k {
            let h = &other.shears[j];
            let mut full = h.embed(j + 1).to_degree(used_degree(h).max(1));
            full.set_coeff(&crate::monomial::MultiIndex::unit(j + 1, j), other.diag[j]);
            other_full.push(full);
        }
        let mut diag = Vec::with_capacity(k);
        let mut shears = Vec::with_capacity(k);
        for j in 0..k {
            diag.push(self.diag[j] * other.diag[j]);
            // (f∘g)_j = λ^f_j (λ^g_j z_j + h^g_j) + h^f_j(g_0,…,g_{j−1});
            // the triangular shear keeps everything but λ^f_j λ^g_j z_j.
            let hf = &self.shears[j];
            let hg = &other.shears[j];
            let mut acc = if used_degree(hf) == 0 {
                ScalarPoly::zero(j, 0)
            } else {
                let args: Vec<ScalarPoly> = other_full[..j].iter().map(|g| g.embed(j)).collect();
                let gmax = args.iter().map(used_degree).max().unwrap_or(1).max(1);
                h_compose(hf, &args, used_degree(hf) * gmax)
            };
            if used_degree(hg) > 0 {
                let need = used_degree(hg).max(used_degree(&acc)).max(1);
                if acc.degree() < need {
                    acc = acc.to_degree(need);
                }
                acc.add_scaled(self.diag[j], hg);
            }
            shears.push(acc);
        }
        TriangularPolyMap { diag, shears }
    }

    /// Lower-triangular Jacobian at `z`.
    pub fn jacobian_at(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |j, i| {
            if i == j {
                self.diag[j]
            } else if i < j {
                let h = &self.shears[j];
                h.linear_coeff(i) + h.derivative(i).eval(&z[..j])
            } else {
                ZERO
            }
        })
    }

    /// Embed as a truncated jet in the full variable count.
    pub fn to_jet(&self, degree: u32) -> JetMap {
        let k = self.dim();
        let mut jet = JetMap::zero(k, degree);
        for j in 0..k {
            let embedded = self.shears[j].embed(k).to_degree(degree);
            jet.component_mut(j).add_assign(&embedded);
            jet.set_coeff(
                j,
                &monomial::MultiIndex::unit(k, j),
                jet.coeff(j, &monomial::MultiIndex::unit(k, j)) + self.diag[j],
            );
        }
        jet
    }

    /// Read a triangular map off a jet. Coefficients that violate
    /// triangularity are rejected above `tol` and dropped below it.
    pub fn from_jet(jet: &JetMap, tol: f64) -> Result<TriangularPolyMap> {
        let k = jet.dim();
        let table = monomial::table(k, jet.degree().max(1));
        let mut diag = Vec::with_capacity(k);
        let mut shears = Vec::with_capacity(k);
        for j in 0..k {
            let lambda = jet.component(j).linear_coeff(j);
            if lambda.norm() == 0.0 {
                return Err(Error::SingularDiagonal {
                    index: j,
                    modulus: 0.0,
                });
            }
            diag.push(lambda);
            let mut shear = ScalarPoly::zero(j, jet.degree());
            for m in 1..=jet.degree() {
                for (r, &c) in jet.component(j).stratum(m).iter().enumerate() {
                    if c == ZERO {
                        continue;
                    }
                    let alpha = &table.stratum(m)[r];
                    if m == 1 && alpha.exps()[j] == 1 {
                        continue; // diagonal entry, already captured
                    }
                    if !alpha.supported_below(j) {
                        if c.norm() > tol {
                            let col = alpha
                                .exps()
                                .iter()
                                .rposition(|&e| e > 0)
                                .unwrap_or(j);
                            return Err(Error::NotTriangular {
                                row: j,
                                col,
                                modulus: c.norm(),
                                tol,
                            });
                        }
                        continue;
                    }
                    shear.set_coeff(
                        &monomial::MultiIndex::new(alpha.exps()[..j].to_vec()),
                        c,
                    );
                }
            }
            let used = used_degree(&shear);
            shears.push(shear.to_degree(used));
        }
        TriangularPolyMap::new(diag, shears)
    }

    /// Set one coefficient of the additive part of component `j`. The address
    /// is given in ambient coordinates and must involve only variables before
    /// `j` (anything else would break triangularity).
    pub fn set_shear_coeff(
        &mut self,
        j: usize,
        alpha: &monomial::MultiIndex,
        c: Complex64,
    ) -> Result<()> {
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: alpha.dim(),
                context: "shear coefficient address".into(),
            });
        }
        if alpha.degree() == 0 {
            return Err(Error::InvalidDegree {
                degree: 0,
                context: "triangular maps carry no constant terms".into(),
            });
        }
        if !alpha.supported_below(j) {
            let col = alpha.exps().iter().rposition(|&e| e > 0).unwrap_or(j);
            return Err(Error::NotTriangular {
                row: j,
                col,
                modulus: c.norm(),
                tol: 0.0,
            });
        }
        let local = monomial::MultiIndex::new(alpha.exps()[..j].to_vec());
        if self.shears[j].degree() < local.degree() {
            self.shears[j] = self.shears[j].to_degree(local.degree());
        }
        self.shears[j].set_coeff(&local, c);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TriangularRepr {
    k: usize,
    diag: Vec<(f64, f64)>,
    /// `shears[j]` holds `(exponents, re, im)` terms over the first `j`
    /// variables, dense in ascending monomial rank per degree.
    shears: Vec<Vec<(Vec<u32>, f64, f64)>>,
}

impl Serialize for TriangularPolyMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let shears = self
            .shears
            .iter()
            .map(|h| {
                let mut entries = Vec::new();
                if h.nvars() == 0 {
                    return entries;
                }
                let table = monomial::table(h.nvars(), h.degree().max(1));
                for m in 1..=h.degree() {
                    for (r, &c) in h.stratum(m).iter().enumerate() {
                        entries.push((table.stratum(m)[r].exps().to_vec(), c.re, c.im));
                    }
                }
                entries
            })
            .collect();
        TriangularRepr {
            k: self.dim(),
            diag: self.diag.iter().map(|l| (l.re, l.im)).collect(),
            shears,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TriangularPolyMap {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = TriangularRepr::deserialize(deserializer)?;
        if repr.diag.len() != repr.k || repr.shears.len() != repr.k {
            return Err(D::Error::custom(format!(
                "expected {} diagonal entries and shears, found {} and {}",
                repr.k,
                repr.diag.len(),
                repr.shears.len()
            )));
        }
        let diag: Vec<Complex64> = repr
            .diag
            .iter()
            .map(|&(re, im)| Complex64::new(re, im))
            .collect();
        let mut shears = Vec::with_capacity(repr.k);
        for (j, entries) in repr.shears.iter().enumerate() {
            let degree = entries
                .iter()
                .map(|(exps, _, _)| exps.iter().sum::<u32>())
                .max()
                .unwrap_or(0);
            let mut h = ScalarPoly::zero(j, degree);
            for (exps, re, im) in entries {
                if exps.len() != j {
                    return Err(D::Error::custom(format!(
                        "shear {j} term {exps:?} does not have {j} exponents"
                    )));
                }
                let alpha = monomial::MultiIndex::new(exps.clone());
                if alpha.degree() == 0 {
                    return Err(D::Error::custom(format!(
                        "shear {j} carries a constant term"
                    )));
                }
                let c = Complex64::new(*re, *im);
                if c != ZERO {
                    h.set_coeff(&alpha, c);
                }
            }
            shears.push(h);
        }
        TriangularPolyMap::new(diag, shears).map_err(D::Error::custom)
    }
}

fn used_degree(p: &ScalarPoly) -> u32 {
    p.used_degree()
}

fn h_compose(h: &ScalarPoly, args: &[ScalarPoly], out_degree: u32) -> ScalarPoly {
    h.compose(args, out_degree.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monomial::MultiIndex;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn mi(exps: &[u32]) -> MultiIndex {
        MultiIndex::new(exps.to_vec())
    }

    /// (x/2, y/5 + x²).
    fn quad_shear() -> TriangularPolyMap {
        let mut h1 = ScalarPoly::zero(1, 2);
        h1.set_coeff(&mi(&[2]), c(1.0));
        TriangularPolyMap::new(vec![c(0.5), c(0.2)], vec![ScalarPoly::zero(0, 0), h1]).unwrap()
    }

    #[test]
    fn inverse_of_quadratic_shear() {
        let f = quad_shear();
        let g = f.inverse();
        // Complex reciprocals land within an ulp of the rational values.
        assert!((g.diag()[0] - c(2.0)).norm() < 1e-15);
        assert!((g.diag()[1] - c(5.0)).norm() < 1e-14);
        assert!((g.shear(1).coeff(&mi(&[2])) - c(-20.0)).norm() < 1e-13);
        let id = f.compose(&g);
        assert!((id.diag()[0] - c(1.0)).norm() < 1e-15);
        assert!((id.diag()[1] - c(1.0)).norm() < 1e-15);
        assert!(id.shear(1).max_abs() < 1e-13);
    }

    #[test]
    fn pointwise_and_polynomial_inverses_agree() {
        let mut h1 = ScalarPoly::zero(1, 3);
        h1.set_coeff(&mi(&[1]), c(0.3));
        h1.set_coeff(&mi(&[3]), Complex64::new(0.0, -0.8));
        let mut h2 = ScalarPoly::zero(2, 2);
        h2.set_coeff(&mi(&[1, 1]), c(0.7));
        h2.set_coeff(&mi(&[0, 2]), c(-0.4));
        let f = TriangularPolyMap::new(
            vec![c(0.5), Complex64::new(0.1, 0.2), c(-0.6)],
            vec![ScalarPoly::zero(0, 0), h1, h2],
        )
        .unwrap();
        let g = f.inverse();
        let w = [
            Complex64::new(0.4, -0.2),
            Complex64::new(-0.1, 0.3),
            Complex64::new(0.25, 0.15),
        ];
        let by_poly = g.eval(&w);
        let by_substitution = f.solve_inverse(&w);
        for (a, b) in by_poly.iter().zip(&by_substitution) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
        // And both are genuine preimages.
        let back = f.eval(&by_substitution);
        for (a, b) in back.iter().zip(&w) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn inverse_degree_grows_multiplicatively() {
        // Degree-2 shears in 3 variables: the last inverse component reaches
        // degree 4 = 2·2 but stays a polynomial in 2 variables.
        let mut h1 = ScalarPoly::zero(1, 2);
        h1.set_coeff(&mi(&[2]), c(1.0));
        let mut h2 = ScalarPoly::zero(2, 2);
        h2.set_coeff(&mi(&[0, 2]), c(1.0));
        let f = TriangularPolyMap::new(
            vec![c(1.0), c(1.0), c(1.0)],
            vec![ScalarPoly::zero(0, 0), h1, h2],
        )
        .unwrap();
        let g = f.inverse();
        assert_eq!(super::used_degree(g.shear(2)), 4);
        assert_eq!(g.shear(2).nvars(), 2);
        let id = f.compose(&g);
        assert!(id.shear(1).max_abs() < 1e-13);
        assert!(id.shear(2).max_abs() < 1e-13);
    }

    #[test]
    fn jet_round_trip() {
        let f = quad_shear();
        let jet = f.to_jet(2);
        let back = TriangularPolyMap::from_jet(&jet, 1e-12).unwrap();
        assert_eq!(back.diag(), f.diag());
        assert_eq!(back.shear(1).coeff(&mi(&[2])), c(1.0));
    }

    #[test]
    fn from_jet_rejects_upper_terms() {
        let mut jet = quad_shear().to_jet(2);
        jet.set_coeff(0, &mi(&[0, 1]), c(1e-3));
        match TriangularPolyMap::from_jet(&jet, 1e-10) {
            Err(Error::NotTriangular { row: 0, col: 1, .. }) => {}
            other => panic!("expected triangularity rejection, got {other:?}"),
        }
        // Below tolerance the term is dropped instead.
        let mut jet2 = quad_shear().to_jet(2);
        jet2.set_coeff(0, &mi(&[0, 1]), c(1e-13));
        assert!(TriangularPolyMap::from_jet(&jet2, 1e-10).is_ok());
    }

    #[test]
    fn jacobian_is_lower_triangular() {
        let f = quad_shear();
        let jac = f.jacobian_at(&[c(2.0), c(0.0)]);
        assert_eq!(jac[(0, 0)], c(0.5));
        assert_eq!(jac[(0, 1)], ZERO);
        assert_eq!(jac[(1, 0)], c(4.0));
        assert_eq!(jac[(1, 1)], c(0.2));
    }
}
