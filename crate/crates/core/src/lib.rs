//! Mixing rates of Z^d-extensions, checked numerically.
//!
//! The crate has three worlds that share one vocabulary:
//!
//! * [`billiard`]: the Z²-periodic finite-horizon Lorentz gas with disc
//!   scatterers, simulated exactly (ray/circle intersection, specular
//!   reflection) and quotiented to the fundamental cell.
//! * [`oracle`]: finite Markov chains with lattice jump labels, where every
//!   transfer-type operator is a finite matrix and renewal identities hold to
//!   machine precision.
//! * [`extension`]: the skew-product layer common to both, with cocycle sums,
//!   first returns to the zero cell and the pathwise renewal identity.
//!
//! On top of those, [`stats`] holds the Monte Carlo machinery (replayable
//! random streams, ensemble driver, Gaussian LLT density, KS test),
//! [`observables`] builds cell-weighted cylinder observables with certified
//! norm sums, and [`mixing`] runs the correlation-integral experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::unnecessary_map_or)]

pub mod billiard;
pub mod error;
pub mod extension;
pub mod lattice;
pub mod mixing;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use billiard::{BilliardTable, CollisionRecord, ExtendedPhasePoint, PhasePoint, ScattererSpec};
pub use error::{Error, Result};
pub use extension::{ExtensionSystem, ReturnTime, Step, TrajectoryRecord};
pub use lattice::{Cell, Symbol};
pub use observables::{CellWeightProfile, CylinderFunction, Observable, ObservableSpec};
pub use oracle::MarkovExtension;
pub use rng::{RngSpec, StreamRng};
pub use stats::{CovarianceMatrix, EstimateWithCI};
