//! Classical and refined mean-field approximations for synchronous
//! discrete-time population models.
//!
//! A [`PopulationModel`] describes `N` interchangeable objects, each moving
//! between `n` local states according to a kernel `K(m)` that depends on the
//! current occupancy `m`. The crate provides the deterministic mean-field
//! iteration, the `1/N` correction terms (transient and steady state), a
//! seeded Monte Carlo simulator and exact solvers for small populations.

pub mod analysis;
pub mod derivatives;
pub mod error;
pub mod models;
pub mod population;
pub mod refined;
pub mod simulator;
pub mod steady;

pub use derivatives::{contract, hessian_phi1, jacobian_phi1, Hessian, Jacobian, Tensor3};
pub use error::{Error, Result};
pub use population::{phi1, trajectory, OccupancyVector, PopulationModel, TransitionKernel};
pub use refined::{
    functional_correction, gamma, refine, refine_functional, refined_covariance, refined_mean, Functional, RefinementState,
};
pub use simulator::{exact_stationary, exact_transient, simulate, step, CountState, SimulationOptions, SimulationSummary};
pub use steady::{
    find_fixed_point, lyapunov_w, steady_functional, steady_refinement, v_infinity, FixedPointOptions, FixedPointReport,
    Stability, SteadyRefinement,
};
