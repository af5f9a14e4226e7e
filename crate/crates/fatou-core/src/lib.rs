//! Numerical toolkit for non-autonomous attracting dynamics in `C^k`.
//!
//! Given a sequence of polynomial automorphisms `f_1, f_2, ...` that uniformly
//! attract a neighborhood of the origin towards it, this crate constructs the
//! classical conjugating data at desk scale and verifies every step that is
//! numerically testable:
//!
//! * [`jet`] / [`poly`] / [`triangular`] — truncated power-series (jet)
//!   calculus: composition, formal inversion, exact triangular inverses.
//! * [`normal_form`] — orbit recentering, invariant-flag tracking on
//!   Grassmannians, unitary lower-triangularization of the linear parts.
//! * [`solver`] — degree-by-degree construction of polynomial sequences
//!   `{X_n}` and triangular `{G_n}` with `X_n = [G_n ∘ X_{n-1} ∘ f_n^{-1}]_d`,
//!   solved through backward orbits of expanding affine recurrences.
//! * [`fb`] — evaluation of the limiting biholomorphisms
//!   `Ψ_n = G(n)^{-1} ∘ X_n ∘ f(n)`, convergence/injectivity diagnostics,
//!   basin membership and surjectivity probes.
//! * [`seq`] — generators for autonomous, perturbed and random uniformly
//!   attracting sequences, with constructively invertible steps.
//! * [`checks`] — named cross-module invariant suites reused by the CLI and
//!   the acceptance tests.
//!
//! Data-parallel inner loops (sphere sampling, grid diagnostics, per-step
//! solver assembly) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration otherwise; see [`exec`].

pub mod checks;
pub mod error;
pub mod exec;
pub mod fb;
pub mod jet;
pub mod monomial;
pub mod normal_form;
pub mod poly;
pub mod sample;
pub mod seq;
pub mod solver;
pub mod triangular;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use jet::JetMap;
pub use monomial::MultiIndex;
pub use triangular::TriangularPolyMap;
