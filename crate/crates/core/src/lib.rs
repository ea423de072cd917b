//! Construction and numerical verification of twisted-gradient contraction
//! certificates for degenerate diffusion operators.
//!
//! A diffusion generator `L = Σ a_ij ∂²/∂x_i∂x_j + Σ b_i ∂/∂x_i` that is not
//! elliptic can still push every pair of laws together exponentially fast in
//! Wasserstein distance, provided some constant positive-definite matrix `Σ`
//! makes the twisted gradient form `T(f) = ∇fᵀ Σ ∇f` satisfy the iterated
//! inequality `T₂(f) ≥ ρ T(f)`. This crate
//!
//! * evaluates `L`, `Γ`, `T`, `T₂` pointwise on analytic test functions
//!   ([`operator`], [`testfn`]),
//! * builds closed-form certificates for the kinetic Fokker-Planck operator
//!   from Hessian bounds on the potential ([`kfp`]),
//! * searches numerically for a certifying `Σ` given drift Jacobian samples
//!   ([`sigma`]),
//! * simulates the associated SDE with coupled trajectories and ensembles
//!   ([`dynamics`]), measures empirical Wasserstein distances ([`transport`]),
//! * and checks every claimed inequality against independent oracles
//!   ([`verify`], [`oracles`]).

pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod kfp;
pub mod linalg;
pub mod lyapunov;
pub mod operator;
pub mod oracles;
pub mod poly;
pub mod sampling;
pub mod sigma;
pub mod testfn;
pub mod transport;
pub mod verify;

pub use error::CoreError;

/// Points and states are dynamically sized column vectors.
pub type Point = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub type Result<T> = std::result::Result<T, CoreError>;
