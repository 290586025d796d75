//! First-order convex optimization with accelerated primal–dual splitting.
//!
//! The crate solves `min_x f(x) + g(x) + h(Kx)` with proximal gradient
//! (PGD), its accelerated variant (APGD), FISTA, the proximal alternating
//! predictor–corrector method (PAPC), Condat–Vũ, and the accelerated
//! predictor–corrector method (APAPC, for `g = (mu_g/2)||x||^2`). Every
//! iteration can be certified against Lyapunov functions and single-step
//! progress inequalities through [`diagnostics`].
//!
//! Module map:
//! - [`linops`]: the operator `K` and its spectral constants
//! - [`functions`]: smooth terms, proximable terms, conjugates
//! - [`schedules`]: momentum sequences `a_t`
//! - [`solvers`]: iteration engines and the `run` driver
//! - [`diagnostics`]: gaps, Lyapunov values, step inequalities, rate fits
//! - [`problems`]: seeded instances with independently computed references
//! - [`harness`]: JSON configs, trace files, bench suites, acceptance checks

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod functions;
pub mod harness;
pub mod linops;
pub mod problems;
pub mod schedules;
pub mod solvers;

pub use diagnostics::{ReferencePair, TraceRecord};
pub use error::{Error, Result};
pub use functions::{ExtReal, ProxTerm, QuadScaling, SmoothTerm};
pub use linops::{LinearMap, SpectralBounds};
pub use problems::{ProblemInstance, RegimeTag};
pub use schedules::{MomentumSchedule, Regime};
pub use solvers::{Engine, SolveConfig, SolverState, Trace};

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Serde adapters so vectors and matrices appear as plain JSON arrays.
pub(crate) mod serde_util {
    pub mod vector {
        use crate::Vector;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter())
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
            Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }

    pub mod opt_vector {
        use crate::Vector;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Vector>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vector>, D::Error> {
            Ok(Option::<Vec<f64>>::deserialize(d)?.map(Vector::from_vec))
        }
    }

    pub mod matrix {
        use nalgebra::DMatrix;
        use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
            crate::matrix_to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(D::Error::custom("ragged matrix rows"));
            }
            Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
        }
    }
}
