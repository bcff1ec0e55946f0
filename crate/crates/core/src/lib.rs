//! Worst-case service scheduling on a slotted constant-capacity server.

pub mod cumvec;
pub mod dualcurve;
pub mod error;
pub mod feasible;
pub mod minplus;
pub mod oracle;
pub mod sched;
pub mod sim;

pub use cumvec::{CumVec, Tau};
pub use error::{Error, Result};
pub use minplus::{CumulativeMatrix, SpectralMatrix};
pub use dualcurve::DualCurveService;
pub use feasible::{SetFunction, SystemSpectra};
pub use oracle::TabulatedService;
pub use sched::PolicySpec;
pub use sim::{RunLog, SlotReport, SystemState};
