//! Coupling-based stationarity diagnostics for constant-stepsize SGD.
//!
//! Two SGD iterates driven by identical samples contract toward each other
//! while the chain is transient; once `‖θ⁽¹⁾ − θ⁽²⁾‖²` has shrunk below a
//! fraction of its phase-initial value, the primary iterate is treated as
//! stationary and the stepsize is decayed. The crate bundles the
//! controllers (coupling, Pflug, distance-based, fixed schedules), a suite
//! of synthetic problems, theory oracles, and an experiment harness.

pub mod cli;
pub mod controllers;
pub mod engine;
pub mod harness;
pub mod numkit;
pub mod oracle;
pub mod problems;
