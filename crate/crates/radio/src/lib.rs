//! Wireless system model and resource allocation for split learning over
//! FDMA edge devices.
//!
//! [`wireless`] evaluates the per-device rate, energy and time costs;
//! [`allocator`] jointly picks transmit power, bandwidth and CPU frequency
//! to trade total energy against completion time.

pub mod allocator;
pub mod error;
pub mod wireless;

pub use allocator::{
    alternate_optimize, brute_force_allocate, evaluate_objective, newton_residual,
    solve_subproblem_a, solve_subproblem_b, AllocationOptions, AllocationProblem,
    AllocationSolution, CapMode, DinkelbachState, IterationRecord, KktReport, NewtonResidual,
    RadioSolution, SubproblemAResult,
};
pub use error::{RadioError, Result};
pub use wireless::{
    generate_topology, min_rate, per_round_costs, totals, uplink_rate, DeviceProfile,
    PerRoundCosts, SystemParams, Topology,
};
