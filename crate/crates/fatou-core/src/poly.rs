//! Scalar truncated polynomials without constant term, stored densely per
//! degree stratum in monomial-rank order.
//!
//! This is the workhorse under both the truncated jet calculus (composition,
//! inversion) and the exact triangular-map algebra, so the multiplication
//! kernel avoids allocation: the rank of `α + β` is computed combinatorially
//! from the two exponent slices.

use crate::error::{Error, Result};
use crate::monomial::{self, MultiIndex};
use num_complex::Complex64;

/// Polynomial `Σ_{1 ≤ |α| ≤ degree} c_α z^α` in `nvars` complex variables.
#[derive(Clone, Debug)]
pub struct ScalarPoly {
    nvars: usize,
    degree: u32,
    /// `strata[m-1]` holds the degree-`m` coefficients by stratum rank.
    strata: Vec<Vec<Complex64>>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Equality of coefficients: trailing all-zero strata (truncation padding) do
/// not distinguish polynomials.
impl PartialEq for ScalarPoly {
    fn eq(&self, other: &Self) -> bool {
        if self.nvars != other.nvars {
            return false;
        }
        let shared = self.strata.len().min(other.strata.len());
        if self.strata[..shared] != other.strata[..shared] {
            return false;
        }
        let longer = if self.strata.len() > shared {
            &self.strata[shared..]
        } else {
            &other.strata[shared..]
        };
        longer.iter().flatten().all(|c| *c == ZERO)
    }
}

impl ScalarPoly {
    pub fn zero(nvars: usize, degree: u32) -> Self {
        let strata = (1..=degree)
            .map(|m| vec![ZERO; monomial::stratum_len(nvars, m)])
            .collect();
        ScalarPoly {
            nvars,
            degree,
            strata,
        }
    }

    /// Single monomial `c · z^α`.
    pub fn monomial(nvars: usize, alpha: &MultiIndex, c: Complex64) -> Self {
        let mut p = ScalarPoly::zero(nvars, alpha.degree());
        p.set_coeff(alpha, c);
        p
    }

    /// Linear polynomial `Σ coeffs_i z_i`.
    pub fn linear(coeffs: &[Complex64]) -> Self {
        let mut p = ScalarPoly::zero(coeffs.len(), 1);
        p.strata[0].copy_from_slice(coeffs);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Smallest degree with a nonzero coefficient; 0 for the zero polynomial.
    pub fn valuation(&self) -> u32 {
        for (i, s) in self.strata.iter().enumerate() {
            if s.iter().any(|c| *c != ZERO) {
                return i as u32 + 1;
            }
        }
        0
    }

    pub fn stratum(&self, m: u32) -> &[Complex64] {
        &self.strata[m as usize - 1]
    }

    pub fn stratum_mut(&mut self, m: u32) -> &mut [Complex64] {
        &mut self.strata[m as usize - 1]
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Complex64 {
        let m = alpha.degree();
        if m == 0 || m > self.degree {
            return ZERO;
        }
        self.strata[m as usize - 1][monomial::stratum_rank(alpha.exps(), m)]
    }

    pub fn set_coeff(&mut self, alpha: &MultiIndex, c: Complex64) {
        let m = alpha.degree();
        assert!(m >= 1 && m <= self.degree, "coefficient degree out of range");
        self.strata[m as usize - 1][monomial::stratum_rank(alpha.exps(), m)] = c;
    }

    /// Truncate or zero-pad to `degree`.
    pub fn to_degree(&self, degree: u32) -> Self {
        let mut out = ScalarPoly::zero(self.nvars, degree);
        for m in 1..=degree.min(self.degree) {
            out.strata[m as usize - 1].copy_from_slice(&self.strata[m as usize - 1]);
        }
        out
    }

    /// Reinterpret in `nvars ≥ self.nvars` variables (appended variables
    /// unused). Used when lifting triangular components into full jets.
    pub fn embed(&self, nvars: usize) -> Self {
        assert!(nvars >= self.nvars);
        if nvars == self.nvars {
            return self.clone();
        }
        let table = monomial::table(self.nvars, self.degree.max(1));
        let mut out = ScalarPoly::zero(nvars, self.degree);
        for m in 1..=self.degree {
            for (r, &c) in self.strata[m as usize - 1].iter().enumerate() {
                if c != ZERO {
                    let mut exps = table.stratum(m)[r].exps().to_vec();
                    exps.resize(nvars, 0);
                    out.strata[m as usize - 1][monomial::stratum_rank(&exps, m)] = c;
                }
            }
        }
        out
    }

    /// Restrict to the first `nvars` variables; coefficients involving the
    /// dropped variables must vanish.
    pub fn project(&self, nvars: usize) -> Result<Self> {
        assert!(nvars <= self.nvars);
        if nvars == self.nvars {
            return Ok(self.clone());
        }
        let table = monomial::table(self.nvars, self.degree.max(1));
        let mut out = ScalarPoly::zero(nvars, self.degree);
        for m in 1..=self.degree {
            for (r, &c) in self.strata[m as usize - 1].iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                let exps = table.stratum(m)[r].exps();
                if exps[nvars..].iter().any(|&e| e > 0) {
                    return Err(Error::Domain {
                        context: format!(
                            "coefficient at {exps:?} involves a variable outside the first {nvars}"
                        ),
                    });
                }
                out.strata[m as usize - 1][monomial::stratum_rank(&exps[..nvars], m)] = c;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &ScalarPoly) {
        debug_assert_eq!(self.nvars, other.nvars);
        assert!(self.degree >= other.used_degree());
        for m in 1..=other.degree.min(self.degree) {
            for (a, b) in self.strata[m as usize - 1]
                .iter_mut()
                .zip(&other.strata[m as usize - 1])
            {
                *a += b;
            }
        }
    }

    pub fn sub_assign(&mut self, other: &ScalarPoly) {
        debug_assert_eq!(self.nvars, other.nvars);
        for m in 1..=other.degree.min(self.degree) {
            for (a, b) in self.strata[m as usize - 1]
                .iter_mut()
                .zip(&other.strata[m as usize - 1])
            {
                *a -= b;
            }
        }
    }

    /// Accumulate `s · other` into `self` (up to `self.degree`).
    pub fn add_scaled(&mut self, s: Complex64, other: &ScalarPoly) {
        debug_assert_eq!(self.nvars, other.nvars);
        for m in 1..=other.degree.min(self.degree) {
            for (a, b) in self.strata[m as usize - 1]
                .iter_mut()
                .zip(&other.strata[m as usize - 1])
            {
                *a += s * b;
            }
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        for st in &mut self.strata {
            for c in st {
                *c *= s;
            }
        }
    }

    /// Largest degree carrying a nonzero coefficient; 0 when zero.
    pub fn used_degree(&self) -> u32 {
        for m in (1..=self.degree).rev() {
            if self.strata[m as usize - 1].iter().any(|c| *c != ZERO) {
                return m;
            }
        }
        0
    }

    /// Product truncated at `out_degree`.
    pub fn mul(&self, other: &ScalarPoly, out_degree: u32) -> ScalarPoly {
        debug_assert_eq!(self.nvars, other.nvars);
        let nvars = self.nvars;
        let mut out = ScalarPoly::zero(nvars, out_degree);
        if nvars == 0 {
            return out;
        }
        let d1_max = self.used_degree();
        let d2_max = other.used_degree();
        let table = monomial::table(nvars, out_degree.max(1));
        for d1 in 1..=d1_max.min(out_degree.saturating_sub(1)) {
            let s1 = &self.strata[d1 as usize - 1];
            let e1s = table.stratum(d1);
            for d2 in 1..=d2_max.min(out_degree - d1) {
                let s2 = &other.strata[d2 as usize - 1];
                let e2s = table.stratum(d2);
                let target = &mut out.strata[(d1 + d2) as usize - 1];
                let m = d1 + d2;
                for (r1, &c1) in s1.iter().enumerate() {
                    if c1 == ZERO {
                        continue;
                    }
                    let a = e1s[r1].exps();
                    for (r2, &c2) in s2.iter().enumerate() {
                        if c2 == ZERO {
                            continue;
                        }
                        let rank = rank_of_sum(a, e2s[r2].exps(), m);
                        target[rank] += c1 * c2;
                    }
                }
            }
        }
        out
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        let mut best = 0.0f64;
        for st in &self.strata {
            for c in st {
                best = best.max(c.norm());
            }
        }
        best
    }

    /// Evaluate at `z` (no constant term), summing in monomial-rank order.
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.nvars);
        if self.nvars == 0 || self.degree == 0 {
            return ZERO;
        }
        let table = monomial::table(self.nvars, self.degree);
        let monomials = monomial_values(&table, self.degree, z);
        let mut acc = ZERO;
        let mut idx = 0usize;
        for st in &self.strata {
            for &c in st {
                if c != ZERO {
                    acc += c * monomials[idx];
                }
                idx += 1;
            }
        }
        acc
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> ScalarPoly {
        let mut out = ScalarPoly::zero(self.nvars, self.degree.saturating_sub(1).max(1));
        if self.degree == 0 {
            return ScalarPoly::zero(self.nvars, 0);
        }
        let table = monomial::table(self.nvars, self.degree);
        for m in 2..=self.degree {
            for (r, &c) in self.strata[m as usize - 1].iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                let exps = table.stratum(m)[r].exps();
                if exps[i] == 0 {
                    continue;
                }
                let mut de = exps.to_vec();
                de[i] -= 1;
                let rank = monomial::stratum_rank(&de, m - 1);
                out.strata[m as usize - 2][rank] += Complex64::new(exps[i] as f64, 0.0) * c;
            }
        }
        // Degree-1 coefficients differentiate to constants, which this
        // representation drops; callers needing them read stratum 1 directly.
        out
    }

    /// Linear coefficient of variable `i`.
    pub fn linear_coeff(&self, i: usize) -> Complex64 {
        if self.degree == 0 {
            ZERO
        } else {
            self.strata[0][monomial::stratum_rank(
                MultiIndex::unit(self.nvars, i).exps(),
                1,
            )]
        }
    }

    /// Re-expand around `z + a`: returns the constant term `self(a)` and the
    /// polynomial part of `z ↦ self(z + a)`.
    pub fn shift(&self, a: &[Complex64]) -> (Complex64, ScalarPoly) {
        debug_assert_eq!(a.len(), self.nvars);
        let mut constant = ZERO;
        let mut out = ScalarPoly::zero(self.nvars, self.degree);
        if self.degree == 0 {
            return (constant, out);
        }
        let table = monomial::table(self.nvars, self.degree);
        let mut beta = vec![0u32; self.nvars];
        for m in 1..=self.degree {
            for (r, &c) in self.strata[m as usize - 1].iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                let alpha = table.stratum(m)[r].exps();
                expand_shift(alpha, a, c, 0, Complex64::new(1.0, 0.0), &mut beta, &mut |beta,
                                                                                        w| {
                    let bd: u32 = beta.iter().sum();
                    if bd == 0 {
                        constant += w;
                    } else {
                        let rank = monomial::stratum_rank(beta, bd);
                        out.strata[bd as usize - 1][rank] += w;
                    }
                });
            }
        }
        (constant, out)
    }

    /// Substitute `args[i]` for variable `i`, truncating at `out_degree`.
    /// Arguments must share a variable count and have no constant term.
    pub fn compose(&self, args: &[ScalarPoly], out_degree: u32) -> ScalarPoly {
        debug_assert_eq!(args.len(), self.nvars);
        let inner_nvars = args.first().map_or(0, ScalarPoly::nvars);
        let mut out = ScalarPoly::zero(inner_nvars, out_degree);
        if self.degree == 0 {
            return out;
        }
        let table = monomial::table(self.nvars, self.degree);
        let powers = PowerTable::for_support(
            &table,
            self.degree,
            out_degree,
            args,
            &mut |rank| {
                let m = table.entry(rank).degree();
                self.strata[m as usize - 1][rank - table.offset(m)] != ZERO
            },
        );
        let mut idx = 0usize;
        for m in 1..=self.degree {
            for &c in &self.strata[m as usize - 1] {
                if c != ZERO {
                    out.add_scaled(c, powers.get(idx));
                }
                idx += 1;
            }
        }
        out
    }
}

fn expand_shift(
    alpha: &[u32],
    a: &[Complex64],
    c: Complex64,
    pos: usize,
    weight: Complex64,
    beta: &mut Vec<u32>,
    emit: &mut impl FnMut(&[u32], Complex64),
) {
    if pos == alpha.len() {
        emit(beta, c * weight);
        return;
    }
    let e = alpha[pos];
    // (z + a)^e = Σ_b C(e, b) a^{e-b} z^b
    let mut binom = 1.0f64;
    let mut apow = vec![Complex64::new(1.0, 0.0); (e + 1) as usize];
    for p in 1..=e as usize {
        apow[p] = apow[p - 1] * a[pos];
    }
    for b in 0..=e {
        if b > 0 {
            binom = binom * ((e - b + 1) as f64) / (b as f64);
        }
        beta[pos] = b;
        let w = weight * Complex64::new(binom, 0.0) * apow[(e - b) as usize];
        expand_shift(alpha, a, c, pos + 1, w, beta, emit);
    }
    beta[pos] = 0;
}

/// Rank of `a + b` within its stratum, without materializing the sum.
fn rank_of_sum(a: &[u32], b: &[u32], m: u32) -> usize {
    let nvars = a.len();
    let mut rank = 0usize;
    let mut rem = m;
    for i in 0..nvars.saturating_sub(1) {
        let e = a[i] + b[i];
        if rem > e {
            let g = (rem - e - 1) as usize;
            let slots = nvars - 1 - i;
            rank += cumulative(g, slots);
        }
        rem -= e;
    }
    rank
}

/// `Σ_{t=0}^{g} (#compositions of t into `slots` parts) = C(g + slots, slots)`.
fn cumulative(g: usize, slots: usize) -> usize {
    // Small slots (≤ 3 in practice); compute the binomial directly.
    let mut num = 1usize;
    for i in 1..=slots {
        num = num * (g + i) / i;
    }
    num
}

/// Monomial values `z^α` for all ranks `1 ≤ |α| ≤ degree`, via predecessor
/// chains: `z^α = z^{pred(α)} · z_var`.
pub(crate) fn monomial_values(
    table: &monomial::IndexTable,
    degree: u32,
    z: &[Complex64],
) -> Vec<Complex64> {
    debug_assert_eq!(z.len(), table.nvars);
    let total = table.len_through(degree);
    let mut vals = vec![ZERO; total];
    for (idx, p) in table.preds().iter().enumerate().take(total) {
        vals[idx] = if p.pred == usize::MAX {
            z[p.var]
        } else {
            vals[p.pred] * z[p.var]
        };
    }
    vals
}

/// Truncated powers `args^α` of a substitution target, built lazily along
/// predecessor chains for the ranks a composition actually needs.
pub(crate) struct PowerTable {
    entries: Vec<Option<ScalarPoly>>,
}

impl PowerTable {
    /// Build powers for every rank (of the *outer* index table, degrees up to
    /// `outer_degree`) with `needed(rank)` true, truncating products at
    /// `out_degree`.
    pub fn for_support(
        table: &monomial::IndexTable,
        outer_degree: u32,
        out_degree: u32,
        args: &[ScalarPoly],
        needed: &mut dyn FnMut(usize) -> bool,
    ) -> PowerTable {
        let total = table.len_through(outer_degree);
        let mut mark = vec![false; total];
        for r in 0..total {
            if needed(r) {
                let mut cur = r;
                while cur != usize::MAX && !mark[cur] {
                    mark[cur] = true;
                    cur = table.preds()[cur].pred;
                }
            }
        }
        let mut entries: Vec<Option<ScalarPoly>> = vec![None; total];
        for r in 0..total {
            if !mark[r] {
                continue;
            }
            let p = table.preds()[r];
            let poly = if p.pred == usize::MAX {
                args[p.var].to_degree(out_degree)
            } else {
                entries[p.pred]
                    .as_ref()
                    .expect("predecessor built first")
                    .mul(&args[p.var], out_degree)
            };
            entries[r] = Some(poly);
        }
        PowerTable { entries }
    }

    pub fn get(&self, rank: usize) -> &ScalarPoly {
        self.entries[rank].as_ref().expect("power not built")
    }
}
