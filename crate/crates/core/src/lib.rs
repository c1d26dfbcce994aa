//! Degenerate semigroups from sesquilinear forms on a closed subspace,
//! their convergence under form and domain perturbations, and the
//! experiments built on them.

pub mod counterexamples;
pub mod domains;
pub mod error;
pub mod fem;
pub mod form;
pub mod galerkin;
pub mod homogenization;
pub mod linalg;
pub mod probes;
pub mod quadrature;
pub mod metrics;
pub mod semigroup;
pub mod trace;

pub use error::{Error, Result};
pub use form::{assemble_form_operator, FormOperator, SubspaceBasis};
pub use linalg::{CMat, CVec, C64};
pub use probes::ProbeSet;
pub use semigroup::SemigroupEvaluator;

/// Map over a slice, in parallel when the `parallel` feature is on. Output
/// order always follows input order.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
