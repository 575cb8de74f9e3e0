//! Continuous-time Nash-equilibrium seeking over communication graphs.
//!
//! Players follow gradient play on their own costs. Without full information
//! each keeps an estimate of every other player's action and reconciles it
//! with its neighbours through Laplacian consensus. The crate covers the
//! perfect-information field, the augmented field with estimate consensus,
//! its high-gain two-timescale variant, and projected versions for box
//! action sets, together with reference equilibrium solvers, convergence
//! diagnostics and an experiment runner.
//!
//! ```
//! use std::sync::Arc;
//! use nashflow::{dynamics::DynamicsSpec, game::QuadraticAggregativeGame, graph, integrate, solve};
//!
//! let game = QuadraticAggregativeGame::example1(4).unwrap();
//! let x_star = solve::solve_ne_linear(&game).unwrap().x_star;
//! let lap = graph::build_laplacian(&graph::make_complete(4).unwrap()).unwrap();
//! let spec = DynamicsSpec::augmented(Arc::new(game), lap).unwrap();
//! let cfg = integrate::IntegratorConfig::new(integrate::Scheme::Rk4, 0.01, 80.0);
//! let traj = integrate::integrate(&spec, &vec![10.0; 16], &cfg).unwrap();
//! let actions = spec.actions(traj.final_state()).unwrap();
//! assert!((actions[0] - x_star[0]).abs() < 1e-3);
//! ```

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod geometry;
pub mod graph;
pub mod integrate;
pub mod solve;

pub use error::{Error, Result};
